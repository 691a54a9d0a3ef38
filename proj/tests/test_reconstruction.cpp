#include <doctest.h>

#include "ssacl/errors.hpp"
#include "ssacl/losses/reconstruction.hpp"
#include "ssacl/model.hpp"
#include "test_util.hpp"

using namespace ssacl;
using namespace ssacl::testutil;

namespace {

VisualConfig micro_visual(std::int64_t n_nodes, torch::Dtype dtype = torch::kFloat32) {
  (void)dtype;
  VisualConfig cfg;
  cfg.image_size = 16;  // 4 patches
  cfg.patch_size = 8;
  cfg.width = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.n_nodes = n_nodes;
  return cfg;
}

// Naive double-loop MSE over all entries.
double naive_mse(const torch::Tensor& a, const torch::Tensor& b) {
  auto af = a.flatten().to(torch::kFloat64);
  auto bf = b.flatten().to(torch::kFloat64);
  double sum = 0;
  for (std::int64_t i = 0; i < af.numel(); ++i) {
    const double d = af[i].item<double>() - bf[i].item<double>();
    sum += d * d;
  }
  return sum / static_cast<double>(af.numel());
}

}  // namespace

TEST_SUITE_BEGIN("reconstruction");

TEST_CASE("loss_ir: exact cases and the naive oracle") {
  auto t = torch::rand({2, 5, 64}, torch::kFloat64);
  CHECK(loss_ir(t, t).item<double>() == 0.0);
  CHECK(loss_ir(t + 1.0, t).item<double>() == doctest::Approx(1.0).epsilon(1e-12));

  auto pred = torch::randn({3, 4, 16}, torch::kFloat64);
  auto target = torch::randn({3, 4, 16}, torch::kFloat64);
  CHECK(loss_ir(pred, target).item<double>() ==
        doctest::Approx(naive_mse(pred, target)).epsilon(1e-9));

  CHECK_THROWS_AS(loss_ir(torch::empty({2, 0, 16}), torch::empty({2, 0, 16})),
                  EmptyMaskError);
  CHECK_THROWS_AS(loss_ir(torch::rand({2, 3, 4}), torch::rand({2, 3, 5})), ShapeError);
}

TEST_CASE("reconstruct_parent: singleton and identical children collapse") {
  torch::manual_seed(11);
  auto cfg = micro_visual(3);
  VisualDecoder dec(cfg);
  dec->eval();

  auto child = torch::randn({2, 1, 8});
  auto single = reconstruct_parent(dec, child);
  CHECK(torch::equal(single, dec->decode(child).squeeze(1)));

  // k identical child tokens give the same patch as the singleton.
  auto repeated = child.repeat({1, 4, 1});
  auto multi = reconstruct_parent(dec, repeated);
  CHECK((multi - single).abs().max().item<double>() < 1e-5);
}

TEST_CASE("reconstruct_parent equals the decode-then-average oracle") {
  torch::manual_seed(12);
  auto cfg = micro_visual(3);
  VisualDecoder dec(cfg);
  dec->eval();
  auto kids = torch::randn({2, 4, 8});
  auto got = reconstruct_parent(dec, kids);
  auto expect = dec->decode(kids).mean(1);
  CHECK((got - expect).abs().max().item<double>() < 1e-6);
}

TEST_CASE("reconstruct_parent is invariant to child ordering") {
  torch::manual_seed(13);
  auto cfg = micro_visual(3);
  VisualDecoder dec(cfg);
  dec->eval();
  auto kids = torch::randn({1, 5, 8});
  auto perm = torch::tensor({4, 2, 0, 3, 1}, torch::kLong);
  auto a = reconstruct_parent(dec, kids);
  auto b = reconstruct_parent(dec, kids.index_select(1, perm));
  CHECK((a - b).abs().max().item<double>() < 1e-5);
}

TEST_CASE("parent_pseudolabel: zero head gives zero patch; no gradient escapes") {
  torch::manual_seed(14);
  auto cfg = micro_visual(3);
  VisualDecoder dec(cfg);
  {
    torch::NoGradGuard ng;
    dec->head->weight.zero_();
    dec->head->bias.zero_();
  }
  auto q = torch::zeros({2, 8});
  auto label = parent_pseudolabel(dec, q);
  CHECK(label.abs().max().item<double>() == 0.0);
  CHECK(!label.requires_grad());

  // Deterministic: two calls agree.
  torch::manual_seed(15);
  VisualDecoder dec2(cfg);
  auto q2 = torch::randn({2, 8});
  CHECK(torch::equal(parent_pseudolabel(dec2, q2), parent_pseudolabel(dec2, q2)));

  // Autograd sees no path from the pseudo-label to its inputs.
  auto src = torch::randn({2, 8}, torch::requires_grad());
  auto lbl = parent_pseudolabel(dec2, src);
  auto pred = torch::randn({2, lbl.size(1)}, torch::requires_grad());
  auto loss = (pred - lbl).pow(2).mean();
  auto grads = torch::autograd::grad({loss}, {src}, {}, true, false, /*allow_unused=*/true);
  CHECK(!grads[0].defined());
}

TEST_CASE("loss_ar: exact cases, oracle, coverage errors") {
  auto g = AnatomyGraph::from_json_text(
      R"({"root":"r","nodes":{"r":{"children":["a","b"]},"a":{"children":["c","d"]},"b":{},"c":{},"d":{}}})");

  ReconTargets t;
  auto patch = torch::rand({3, 64}, torch::kFloat64);
  t.parent_patches["r"] = patch;
  t.parent_pseudolabels["r"] = patch;
  t.parent_patches["a"] = patch + 2.0;
  t.parent_pseudolabels["a"] = patch;
  // Identical entries: per-parent MSEs are 0 and 4, mean 2.
  CHECK(loss_ar(g, t).item<double>() == doctest::Approx(2.0).epsilon(1e-12));

  ReconTargets missing;
  missing.parent_patches["r"] = patch;
  missing.parent_pseudolabels["r"] = patch;
  CHECK_THROWS_AS(loss_ar(g, missing), CoverageError);
  CHECK_THROWS_WITH_AS(loss_ar(g, missing), doctest::Contains("a"), CoverageError);

  // exclude-root switch drops the root term.
  ReconTargets only_a;
  only_a.parent_patches["a"] = patch + 2.0;
  only_a.parent_pseudolabels["a"] = patch;
  CHECK(loss_ar(g, only_a, /*include_root=*/false).item<double>() ==
        doctest::Approx(4.0).epsilon(1e-12));

  // Random tensors against an independent per-parent average.
  ReconTargets r;
  double acc = 0;
  for (const auto& id : g.internal_order()) {
    auto p = torch::randn({2, 16}, torch::kFloat64);
    auto l = torch::randn({2, 16}, torch::kFloat64);
    r.parent_patches[id] = p;
    r.parent_pseudolabels[id] = l;
    acc += naive_mse(p, l);
  }
  acc /= static_cast<double>(g.internal_order().size());
  CHECK(loss_ar(g, r).item<double>() == doctest::Approx(acc).epsilon(1e-9));
}

TEST_CASE("ratio -> 0: masked-pass child queries equal the unmasked pass") {
  torch::manual_seed(16);
  auto graph = std::make_shared<AnatomyGraph>(AnatomyGraph::from_json_text(
      R"({"root":"r","nodes":{"r":{"children":["a","b"]},"a":{},"b":{}}})"));
  ModelConfig mc;
  mc.width = 16;
  mc.layers = 1;
  mc.heads = 2;
  mc.image_size = 16;
  mc.patch_size = 8;
  auto model = std::make_shared<SSACLModelImpl>(mc, graph, make_tokenizer(*graph));
  model->eval();

  auto img = torch::rand({2, 1, 16, 16});
  auto pre = (img - 0.4978) / 0.2449;
  auto queries = model->restored_queries(2);
  auto b0 = mask_image(pre, 0.0, 1, model->visual_encoder->cfg);
  auto b1 = mask_image(pre, 0.0, 2, model->visual_encoder->cfg);
  auto f0 = model->visual_encoder->fuse(b0, queries, model->visual_encoder->topology_for(b0));
  auto f1 = model->visual_encoder->fuse(b1, queries, model->visual_encoder->topology_for(b1));
  CHECK((f0.prompt_tokens - f1.prompt_tokens).abs().max().item<double>() < 1e-6);
}

TEST_CASE("gradient check: L_ir + L_ar on a double-precision micro-model") {
  torch::manual_seed(17);
  auto cfg = micro_visual(3);
  VisualDecoder dec(cfg);
  dec->to(torch::kFloat64);

  auto queries = torch::randn({2, 3, 8}, torch::kFloat64).set_requires_grad(true);
  auto pred_in = torch::randn({2, 2, 64}, torch::kFloat64).set_requires_grad(true);
  auto target = torch::randn({2, 2, 64}, torch::kFloat64);

  auto g = AnatomyGraph::from_json_text(
      R"({"root":"r","nodes":{"r":{"children":["a","b"]},"a":{},"b":{}}})");

  auto loss_fn = [&]() {
    ReconTargets t;
    t.parent_patches["r"] =
        reconstruct_parent(dec, queries);  // children of r are all prompts here
    t.parent_pseudolabels["r"] = torch::zeros({2, 64}, torch::kFloat64);
    return loss_ir(pred_in, target) + loss_ar(g, t);
  };

  std::vector<torch::Tensor> params{queries, pred_in};
  for (auto& p : dec->parameters()) params.push_back(p);
  const double rel = directional_gradcheck(loss_fn, params, 6, 1e-6, 18);
  CHECK(rel < 1e-4);
}

TEST_CASE("losses are nonnegative") {
  for (int i = 0; i < 5; ++i) {
    auto a = torch::randn({2, 3, 8});
    auto b = torch::randn({2, 3, 8});
    CHECK(loss_ir(a, b).item<double>() >= 0.0);
  }
}

TEST_SUITE_END();
