#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

#include "ssacl/common.hpp"
#include "ssacl/model.hpp"

namespace ssacl {

struct GroundingMap {
  torch::Tensor attention;  // [H, W] pixels, nonnegative, max-normalized
  std::string phrase;
  Rect target_box;
  double correlation = 0.0;  // cosine(g^I, g^phrase), clamped to [0, 1]
};

// Class-token -> patch attention of the final encoder block on the unmasked
// pass, averaged over heads, upsampled to pixels, scaled by the image-phrase
// correlation and normalized by its maximum.
GroundingMap ground_phrase(SSACLModel& model, const torch::Tensor& image,
                           const std::string& phrase);

struct GroundingMetrics {
  double cnr_mean = 0;
  double miou = 0;
  double in_box_ratio = 0;  // mean(attn inside box) / mean(attn outside)
};

// CNR = |mu_in - mu_out| / sqrt(var_in + var_out + eps) over attention values
// inside/outside the target box; mIoU binarizes each map at its mu + sigma.
// Throws DegenerateBox when a box is empty or covers the whole image.
GroundingMetrics grounding_metrics(const std::vector<GroundingMap>& maps);

}  // namespace ssacl
