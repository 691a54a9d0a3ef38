#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace ssacl {

// Input normalization statistics shared by training and evaluation.
inline constexpr double kPixelMean = 0.4978;
inline constexpr double kPixelStd = 0.2449;

struct PreprocessOptions {
  int target_size = 64;
  bool augment = false;  // horizontal flip + small affine translation
};

// [B?, C, H, W] in [0,1] -> resized to target_size and normalized with
// (x - mean) / std. Augmentation draws from `seed` and only runs when
// opts.augment is set.
torch::Tensor preprocess(const torch::Tensor& image, const PreprocessOptions& opts = {},
                         std::uint64_t seed = 0);

torch::Tensor denormalize(const torch::Tensor& image);

}  // namespace ssacl
