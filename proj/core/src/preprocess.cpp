#include "ssacl/preprocess.hpp"

#include <random>

#include "ssacl/common.hpp"

namespace ssacl {

torch::Tensor preprocess(const torch::Tensor& image, const PreprocessOptions& opts,
                         std::uint64_t seed) {
  auto x = image;
  const bool batched = x.dim() == 4;
  if (!batched) x = x.unsqueeze(0);  // [1, C, H, W]

  if (x.size(2) != opts.target_size || x.size(3) != opts.target_size) {
    x = torch::nn::functional::interpolate(
        x, torch::nn::functional::InterpolateFuncOptions()
               .size(std::vector<std::int64_t>{opts.target_size, opts.target_size})
               .mode(torch::kBilinear)
               .align_corners(false));
  }

  if (opts.augment) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution flip(0.5);
    std::uniform_int_distribution<int> shift(-2, 2);
    std::vector<torch::Tensor> rows;
    rows.reserve(static_cast<std::size_t>(x.size(0)));
    for (std::int64_t b = 0; b < x.size(0); ++b) {
      auto img = x[b];
      if (flip(rng)) img = img.flip(-1);
      img = torch::roll(img, {shift(rng), shift(rng)}, {-2, -1});
      rows.push_back(img);
    }
    x = torch::stack(rows);
  }

  x = (x - kPixelMean) / kPixelStd;
  return batched ? x : x.squeeze(0);
}

torch::Tensor denormalize(const torch::Tensor& image) {
  return image * kPixelStd + kPixelMean;
}

}  // namespace ssacl
