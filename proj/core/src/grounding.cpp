#include "ssacl/grounding.hpp"

#include <cmath>

#include "ssacl/errors.hpp"
#include "ssacl/preprocess.hpp"

namespace ssacl {

GroundingMap ground_phrase(SSACLModel& model, const torch::Tensor& image,
                           const std::string& phrase) {
  torch::NoGradGuard no_grad;
  model->eval();
  auto img = image.dim() == 3 ? image.unsqueeze(0) : image;
  PreprocessOptions opts;
  opts.target_size = static_cast<int>(model->cfg.image_size);
  auto pre = preprocess(img, opts);

  auto fused = model->encode_unmasked(pre, /*need_attn=*/true);
  const auto n_nodes = static_cast<std::int64_t>(model->graph->node_count());
  const auto grid = model->visual_encoder->cfg.grid();
  const auto P = grid * grid;

  // Last block, class-token row, image-token columns, mean over heads. With
  // ratio 0 the visible order is the raw patch order.
  auto last = fused.attn.back();  // [1, heads, S, S]
  auto row = last.select(2, n_nodes)                     // class-token queries
                 .slice(2, n_nodes + 1, n_nodes + 1 + P)  // image-token keys
                 .mean(1)                                 // heads
                 .squeeze(0);                             // [P]
  auto patch_map = row.view({1, 1, grid, grid});
  auto pixel_map = torch::nn::functional::interpolate(
                       patch_map, torch::nn::functional::InterpolateFuncOptions()
                                      .size(std::vector<std::int64_t>{model->cfg.image_size,
                                                                      model->cfg.image_size})
                                      .mode(torch::kBilinear)
                                      .align_corners(false))
                       .squeeze();

  auto g_img = model->image_global(pre).squeeze(0);
  auto g_phrase = model->text_global({phrase}).squeeze(0);
  const double corr = std::max(0.0, torch::dot(g_img, g_phrase).item<double>());

  auto weighted = pixel_map * corr;
  const double max_v = weighted.max().item<double>();
  if (max_v > 0) weighted = weighted / max_v;

  GroundingMap out;
  out.attention = weighted;
  out.phrase = phrase;
  out.correlation = corr;
  model->train();
  return out;
}

GroundingMetrics grounding_metrics(const std::vector<GroundingMap>& maps) {
  constexpr double eps = 1e-8;
  double cnr_sum = 0, iou_sum = 0, in_sum = 0, out_sum = 0;
  for (const auto& m : maps) {
    const auto H = m.attention.size(0);
    const auto W = m.attention.size(1);
    const auto& box = m.target_box;
    if (box.area() <= 0 || box.area() >= static_cast<long>(H) * W) {
      throw DegenerateBox("target box is empty or covers the full image");
    }

    auto mask = torch::zeros({H, W}, torch::kBool);
    mask.slice(0, box.y0, box.y1).slice(1, box.x0, box.x1) = true;
    auto inside = m.attention.masked_select(mask);
    auto outside = m.attention.masked_select(mask.logical_not());

    const double mu_in = inside.mean().item<double>();
    const double mu_out = outside.mean().item<double>();
    const double var_in = inside.numel() > 1 ? inside.var(false).item<double>() : 0.0;
    const double var_out = outside.numel() > 1 ? outside.var(false).item<double>() : 0.0;
    cnr_sum += std::abs(mu_in - mu_out) / std::sqrt(var_in + var_out + eps);
    in_sum += mu_in;
    out_sum += mu_out;

    const double mu = m.attention.mean().item<double>();
    const double sigma = m.attention.numel() > 1 ? m.attention.std(false).item<double>() : 0.0;
    if (sigma <= eps) {
      // Uniform map: threshold mu + sigma selects everything or nothing;
      // treated as a grounding miss.
      continue;
    }
    auto bin = m.attention.ge(mu + sigma);
    const double inter = (bin & mask).sum().item<double>();
    const double uni = (bin | mask).sum().item<double>();
    iou_sum += uni > 0 ? inter / uni : 0.0;
  }
  const auto n = static_cast<double>(maps.size());
  GroundingMetrics out;
  if (n > 0) {
    out.cnr_mean = cnr_sum / n;
    out.miou = iou_sum / n;
    out.in_box_ratio = out_sum / n > eps ? (in_sum / n) / (out_sum / n) : 0.0;
  }
  return out;
}

}  // namespace ssacl
