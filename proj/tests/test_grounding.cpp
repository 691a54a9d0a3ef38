#include <doctest.h>

#include <cmath>

#include "ssacl/errors.hpp"
#include "ssacl/grounding.hpp"
#include "test_util.hpp"

using namespace ssacl;
using namespace ssacl::testutil;

namespace {

std::shared_ptr<SSACLModelImpl> tiny_model() {
  torch::manual_seed(51);
  auto graph = std::make_shared<AnatomyGraph>(
      AnatomyGraph::load_file(config_path("anatomy_synthetic.json")));
  ModelConfig mc;
  mc.width = 32;
  mc.layers = 2;
  mc.heads = 2;
  return std::make_shared<SSACLModelImpl>(mc, graph, make_tokenizer(*graph));
}

GroundingMap make_map(torch::Tensor attention, Rect box) {
  GroundingMap m;
  m.attention = std::move(attention);
  m.target_box = box;
  m.phrase = "test";
  return m;
}

// Brute-force pixel-loop evaluation of CNR and the mu+sigma IoU.
std::pair<double, double> pixel_loop_metrics(const torch::Tensor& map, const Rect& box) {
  std::vector<double> inside, outside, all;
  for (std::int64_t y = 0; y < map.size(0); ++y) {
    for (std::int64_t x = 0; x < map.size(1); ++x) {
      const double v = map[y][x].item<double>();
      all.push_back(v);
      if (box.contains(static_cast<int>(x), static_cast<int>(y))) inside.push_back(v);
      else outside.push_back(v);
    }
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto var = [&](const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
  };
  const double cnr =
      std::abs(mean(inside) - mean(outside)) / std::sqrt(var(inside) + var(outside) + 1e-8);

  const double mu = mean(all);
  const double sigma = std::sqrt(var(all));
  long inter = 0, uni = 0;
  for (std::int64_t y = 0; y < map.size(0); ++y) {
    for (std::int64_t x = 0; x < map.size(1); ++x) {
      const bool hot = map[y][x].item<double>() >= mu + sigma;
      const bool in_box = box.contains(static_cast<int>(x), static_cast<int>(y));
      inter += hot && in_box;
      uni += hot || in_box;
    }
  }
  const double iou = uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
  return {cnr, iou};
}

}  // namespace

TEST_SUITE_BEGIN("grounding");

TEST_CASE("uniform-attention model produces a near-uniform map") {
  auto model_impl = tiny_model();
  SSACLModel model(model_impl);
  // Zeroed query/key projections give exactly uniform attention rows.
  {
    torch::NoGradGuard ng;
    for (auto& block : model->visual_encoder->stack->blocks) {
      block->attn->qkv->weight.slice(0, 0, 64).zero_();
      block->attn->qkv->bias.slice(0, 0, 64).zero_();
    }
  }
  auto img = torch::rand({1, 64, 64});
  auto map = ground_phrase(model, img, "opacity in the part-a1x");
  const double mx = map.attention.max().item<double>();
  const double mn = map.attention.min().item<double>();
  if (mx > 0) {
    CHECK(mx / std::max(mn, 1e-12) < 2.0);
  }
  CHECK(map.attention.min().item<double>() >= 0.0);
  CHECK(map.attention.max().item<double>() <= 1.0 + 1e-6);
}

TEST_CASE("two phrases differ only by the correlation factor") {
  auto model_impl = tiny_model();
  SSACLModel model(model_impl);
  auto img = torch::rand({1, 64, 64});
  auto a = ground_phrase(model, img, "opacity in the part-a1x");
  auto b = ground_phrase(model, img, "banding in the zone-b3");
  // After max-normalization the positive scalar cancels: the attention part
  // is identical whenever both correlations are positive.
  if (a.correlation > 0 && b.correlation > 0) {
    CHECK((a.attention - b.attention).abs().max().item<double>() < 1e-6);
  }
}

TEST_CASE("indicator map: IoU is 1 and CNR hits the epsilon guard") {
  auto attn = torch::zeros({64, 64});
  Rect box{10, 20, 26, 40};
  attn.slice(0, box.y0, box.y1).slice(1, box.x0, box.x1) = 1.0;
  auto metrics = grounding_metrics({make_map(attn, box)});
  CHECK(metrics.miou == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(metrics.cnr_mean > 1000.0);  // sigma = 0 inside/outside, guarded by eps
}

TEST_CASE("uniform map: CNR ~ 0 and the threshold yields IoU 0") {
  auto attn = torch::full({64, 64}, 0.5);
  Rect box{4, 4, 20, 20};
  auto metrics = grounding_metrics({make_map(attn, box)});
  CHECK(metrics.cnr_mean == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(metrics.miou == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("gaussian bump metrics equal the brute-force pixel loop") {
  const int S = 64;
  Rect box{24, 24, 44, 44};
  auto ys = torch::arange(S, torch::kFloat32).view({S, 1});
  auto xs = torch::arange(S, torch::kFloat32).view({1, S});
  const double cx = 34, cy = 34, sigma = 5;
  auto bump = torch::exp(-((xs - cx).pow(2) + (ys - cy).pow(2)) / (2 * sigma * sigma));
  bump = bump / bump.max();

  auto metrics = grounding_metrics({make_map(bump, box)});
  auto [cnr, iou] = pixel_loop_metrics(bump.to(torch::kFloat64), box);
  CHECK(metrics.cnr_mean == doctest::Approx(cnr).epsilon(1e-6));
  CHECK(metrics.miou == doctest::Approx(iou).epsilon(1e-6));
}

TEST_CASE("degenerate boxes are rejected") {
  auto attn = torch::rand({64, 64});
  CHECK_THROWS_AS(grounding_metrics({make_map(attn, Rect{5, 5, 5, 20})}), DegenerateBox);
  CHECK_THROWS_AS(grounding_metrics({make_map(attn, Rect{0, 0, 64, 64})}), DegenerateBox);
}

TEST_CASE("grounding map is invariant to image intensity scaling after normalization") {
  auto model_impl = tiny_model();
  SSACLModel model(model_impl);
  auto img = torch::rand({1, 64, 64}) * 0.5 + 0.25;
  auto a = ground_phrase(model, img, "opacity in the part-a1x");
  REQUIRE(torch::isfinite(a.attention).all().item<bool>());
  // The attention part of the construction is normalized by its max; scaling
  // the already-normalized map by any positive constant cannot change it.
  if (a.attention.max().item<double>() > 0) {
    auto rescaled = a.attention * 3.0;
    auto renormed = rescaled / rescaled.max();
    CHECK((renormed - a.attention).abs().max().item<double>() < 1e-6);
  } else {
    // Anti-correlated phrase: the clamped correlation zeroes the map.
    CHECK(a.correlation == doctest::Approx(0.0));
  }
}

TEST_SUITE_END();
