#include <doctest.h>

#include <cmath>

#include "ssacl/errors.hpp"
#include "ssacl/losses/alignment.hpp"
#include "test_util.hpp"

using namespace ssacl;
using namespace ssacl::testutil;

namespace {

torch::Tensor scalar64(double v) { return torch::full({}, v, torch::kFloat64); }

// Quadruple-loop evaluation of the consistency loss, straight from the
// formula: -(1/(M N^2)) sum_{i,j,a} w_ij log softmax_b(S[i,j,a,b]/tau)|_{b=a}.
double naive_loss_ac(const torch::Tensor& S_L, const torch::Tensor& S_T, double lambda,
                     double tau) {
  const auto N = S_L.size(0), M = S_L.size(2);
  double total = 0;
  for (std::int64_t i = 0; i < N; ++i) {
    for (std::int64_t j = 0; j < N; ++j) {
      const double w = lambda * S_T[i][j].item<double>() + 1.0 - lambda;
      for (std::int64_t a = 0; a < M; ++a) {
        double denom = 0;
        for (std::int64_t b = 0; b < M; ++b) {
          denom += std::exp(S_L[i][j][a][b].item<double>() / tau);
        }
        const double term = std::log(std::exp(S_L[i][j][a][a].item<double>() / tau) / denom);
        total += w * term;
      }
    }
  }
  return -total / static_cast<double>(M * N * N);
}

double naive_loss_cl(const torch::Tensor& img, const torch::Tensor& txt, double tau) {
  const auto N = img.size(0);
  auto in = torch::nn::functional::normalize(
      img, torch::nn::functional::NormalizeFuncOptions().dim(-1));
  auto tn = torch::nn::functional::normalize(
      txt, torch::nn::functional::NormalizeFuncOptions().dim(-1));
  double total = 0;
  for (std::int64_t i = 0; i < N; ++i) {
    double denom = 0;
    for (std::int64_t j = 0; j < N; ++j) {
      denom += std::exp(torch::dot(in[i], tn[j]).item<double>() / tau);
    }
    total += std::log(std::exp(torch::dot(in[i], tn[i]).item<double>() / tau) / denom);
  }
  return -total / static_cast<double>(N);
}

}  // namespace

TEST_SUITE_BEGIN("alignment");

TEST_CASE("loss_cl: analytic two-pair case gives log 2") {
  auto img = torch::tensor({{1.0, 0.0}, {0.0, 1.0}}, torch::kFloat64);
  auto txt = img.clone();
  // Matched cosine 1, cross cosine 0... loss = -log(e^1/(e^1+e^0)) at tau=1.
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  CHECK(loss_cl(img, txt, scalar64(1.0)).item<double>() ==
        doctest::Approx(expected).epsilon(1e-9));

  // Orthogonal matched pairs with zero similarity everywhere: log 2 exactly.
  auto flat_img = torch::tensor({{1.0, 0.0}, {1.0, 0.0}}, torch::kFloat64);
  auto flat_txt = torch::tensor({{0.0, 1.0}, {0.0, 1.0}}, torch::kFloat64);
  CHECK(loss_cl(flat_img, flat_txt, scalar64(1.0)).item<double>() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("loss_cl: perfectly separable batch vanishes as tau shrinks") {
  auto img = torch::tensor({{1.0, 0.0}, {-1.0, 0.0}}, torch::kFloat64);
  auto txt = img.clone();  // matched sim 1, unmatched -1
  CHECK(loss_cl(img, txt, scalar64(0.05)).item<double>() < 1e-10);
}

TEST_CASE("loss_cl matches the naive per-row softmax oracle") {
  torch::manual_seed(20);
  auto img = torch::randn({4, 8}, torch::kFloat64);
  auto txt = torch::randn({4, 8}, torch::kFloat64);
  CHECK(loss_cl(img, txt, scalar64(0.3)).item<double>() ==
        doctest::Approx(naive_loss_cl(img, txt, 0.3)).epsilon(1e-9));
}

TEST_CASE("loss_cl rejects batches smaller than 2") {
  CHECK_THROWS_AS(loss_cl(torch::randn({1, 4}), torch::randn({1, 4}), scalar64(1.0)),
                  BatchTooSmall);
}

TEST_CASE("loss_cl symmetric flag averages both directions") {
  torch::manual_seed(21);
  auto img = torch::randn({3, 6}, torch::kFloat64);
  auto txt = torch::randn({3, 6}, torch::kFloat64);
  const double sym = loss_cl(img, txt, scalar64(0.5), true).item<double>();
  const double a = naive_loss_cl(img, txt, 0.5);
  // text->image direction = image->text with roles swapped on the transpose.
  auto in = torch::nn::functional::normalize(
      img, torch::nn::functional::NormalizeFuncOptions().dim(-1));
  auto tn = torch::nn::functional::normalize(
      txt, torch::nn::functional::NormalizeFuncOptions().dim(-1));
  double b = 0;
  for (std::int64_t i = 0; i < 3; ++i) {
    double denom = 0;
    for (std::int64_t j = 0; j < 3; ++j) {
      denom += std::exp(torch::dot(tn[i], in[j]).item<double>() / 0.5);
    }
    b += std::log(std::exp(torch::dot(tn[i], in[i]).item<double>() / 0.5) / denom);
  }
  b = -b / 3.0;
  CHECK(sym == doctest::Approx(0.5 * (a + b)).epsilon(1e-9));
}

TEST_CASE("build_similarity: duplicated samples, oracle, scale invariance") {
  torch::manual_seed(22);
  auto tokens = torch::randn({3, 4, 8}, torch::kFloat64);
  auto texts = torch::randn({3, 8}, torch::kFloat64);
  auto bundle = build_similarity(tokens, texts, 0.1, scalar64(1.0));

  CHECK(bundle.S_L.sizes() == torch::IntArrayRef({3, 3, 4, 4}));
  CHECK(bundle.S_T.sizes() == torch::IntArrayRef({3, 3}));
  CHECK(bundle.S_L.abs().max().item<double>() <= 1.0 + 1e-9);
  CHECK((bundle.S_T - bundle.S_T.t()).abs().max().item<double>() < 1e-9);
  // Self-similarity of normalized tokens.
  for (std::int64_t i = 0; i < 3; ++i) {
    for (std::int64_t a = 0; a < 4; ++a) {
      CHECK(bundle.S_L[i][i][a][a].item<double>() == doctest::Approx(1.0).epsilon(1e-5));
    }
  }

  // Quadruple-loop cosine oracle.
  for (std::int64_t i = 0; i < 3; ++i) {
    for (std::int64_t j = 0; j < 3; ++j) {
      for (std::int64_t a = 0; a < 4; ++a) {
        for (std::int64_t b = 0; b < 4; ++b) {
          auto u = tokens[i][a] / tokens[i][a].norm();
          auto v = tokens[j][b] / tokens[j][b].norm();
          CHECK(bundle.S_L[i][j][a][b].item<double>() ==
                doctest::Approx(torch::dot(u, v).item<double>()).epsilon(1e-9));
        }
      }
    }
  }

  // Duplicated sample: its cross block equals the self block.
  auto dup = torch::cat({tokens.slice(0, 0, 1), tokens.slice(0, 0, 1)}, 0);
  auto dup_texts = torch::cat({texts.slice(0, 0, 1), texts.slice(0, 0, 1)}, 0);
  auto dup_bundle = build_similarity(dup, dup_texts, 0.1, scalar64(1.0));
  CHECK((dup_bundle.S_L[0][1] - dup_bundle.S_L[0][0]).abs().max().item<double>() < 1e-9);

  // Scaling a token by c > 0 leaves its cosine rows unchanged.
  auto scaled = tokens.clone();
  scaled[1][2] *= 3.7;
  auto scaled_bundle = build_similarity(scaled, texts, 0.1, scalar64(1.0));
  CHECK((scaled_bundle.S_L - bundle.S_L).abs().max().item<double>() < 1e-9);
}

TEST_CASE("loss_ac: closed-form one-hot case") {
  // lambda=0, tau=1, leaf tokens identical one-hot bases across samples:
  // every term is -log(e / (e + M - 1)); M=4.
  const std::int64_t N = 3, M = 4;
  auto tokens = torch::eye(M, torch::kFloat64).unsqueeze(0).repeat({N, 1, 1});
  auto texts = torch::randn({N, 8}, torch::kFloat64);
  auto bundle = build_similarity(tokens, texts, 0.0, scalar64(1.0));
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 3.0));
  CHECK(loss_ac(bundle).item<double>() == doctest::Approx(expected).epsilon(1e-9));
  CHECK(expected == doctest::Approx(0.7437).epsilon(1e-4));
}

TEST_CASE("loss_ac: lambda=1 with identical reports reduces to the unweighted case") {
  torch::manual_seed(23);
  auto tokens = torch::randn({3, 4, 8}, torch::kFloat64);
  auto text = torch::randn({1, 8}, torch::kFloat64).repeat({3, 1});
  auto weighted = build_similarity(tokens, text, 1.0, scalar64(0.7));
  auto unweighted = build_similarity(tokens, text, 0.0, scalar64(0.7));
  CHECK(loss_ac(weighted).item<double>() ==
        doctest::Approx(loss_ac(unweighted).item<double>()).epsilon(1e-9));
}

TEST_CASE("loss_ac matches the naive quadruple-loop oracle") {
  torch::manual_seed(24);
  auto tokens = torch::randn({4, 5, 8}, torch::kFloat64);
  auto texts = torch::randn({4, 8}, torch::kFloat64);
  auto bundle = build_similarity(tokens, texts, 0.1, scalar64(0.4));
  CHECK(loss_ac(bundle).item<double>() ==
        doctest::Approx(naive_loss_ac(bundle.S_L, bundle.S_T, 0.1, 0.4)).epsilon(1e-9));
}

TEST_CASE("anti-collapse: identical within-sample tokens maximize the loss") {
  torch::manual_seed(25);
  const std::int64_t N = 3, M = 5;
  // All M leaf tokens identical within each sample: softmax over b is
  // uniform, every term is log M.
  auto one = torch::randn({N, 1, 8}, torch::kFloat64);
  auto collapsed = one.repeat({1, M, 1});
  auto texts = torch::randn({N, 8}, torch::kFloat64);
  auto bundle = build_similarity(collapsed, texts, 0.0, scalar64(1.0));
  CHECK(loss_ac(bundle).item<double>() ==
        doctest::Approx(std::log(static_cast<double>(M))).epsilon(1e-9));

  // Any diagonally dominant token structure scores strictly lower.
  auto distinct = torch::eye(M, torch::kFloat64).unsqueeze(0).repeat({N, 1, 1}) * 2.0 +
                  0.05 * torch::randn({N, M, M}, torch::kFloat64);
  auto distinct_bundle = build_similarity(distinct, texts, 0.0, scalar64(1.0));
  CHECK(loss_ac(distinct_bundle).item<double>() <
        loss_ac(bundle).item<double>());
}

TEST_CASE("weight positivity holds for lambda < 0.5 (0 only at the boundary)") {
  for (double lambda : {0.0, 0.1, 0.3, 0.49}) {
    for (double s = -1.0; s <= 1.0; s += 0.05) {
      CHECK(lambda * s + 1.0 - lambda > 0.0);
    }
  }
  // Boundary: lambda = 0.5 with a fully anti-correlated report pair.
  CHECK(0.5 * -1.0 + 1.0 - 0.5 == doctest::Approx(0.0));
}

TEST_CASE("batch permutation leaves both losses unchanged") {
  torch::manual_seed(26);
  auto tokens = torch::randn({4, 3, 8}, torch::kFloat64);
  auto texts = torch::randn({4, 8}, torch::kFloat64);
  auto img = torch::randn({4, 8}, torch::kFloat64);
  auto perm = torch::tensor({2, 0, 3, 1}, torch::kLong);

  auto a = loss_ac(build_similarity(tokens, texts, 0.1, scalar64(0.5)));
  auto b = loss_ac(build_similarity(tokens.index_select(0, perm),
                                    texts.index_select(0, perm), 0.1, scalar64(0.5)));
  CHECK(a.item<double>() == doctest::Approx(b.item<double>()).epsilon(1e-9));

  auto ca = loss_cl(img, texts, scalar64(0.5));
  auto cb = loss_cl(img.index_select(0, perm), texts.index_select(0, perm), scalar64(0.5));
  CHECK(ca.item<double>() == doctest::Approx(cb.item<double>()).epsilon(1e-9));
}

TEST_CASE("soft-target-matrix variant stays finite and ranks collapse higher") {
  torch::manual_seed(27);
  auto tokens = torch::randn({3, 4, 8}, torch::kFloat64);
  auto texts = torch::randn({3, 8}, torch::kFloat64);
  auto bundle = build_similarity(tokens, texts, 0.1, scalar64(0.5));
  auto soft = loss_ac(bundle, /*soft_target_matrix=*/true);
  CHECK(torch::isfinite(soft).item<bool>());
}

TEST_CASE("gradient check: d(L_cl + L_ac)/d tokens vs central differences") {
  torch::manual_seed(28);
  auto tokens = torch::randn({2, 3, 6}, torch::kFloat64).set_requires_grad(true);
  auto img = torch::randn({2, 6}, torch::kFloat64).set_requires_grad(true);
  auto log_tau = torch::full({}, std::log(0.5), torch::kFloat64).set_requires_grad(true);
  // Texts only produce the soft weights here, which are labels (detached);
  // they are held fixed so the check covers the differentiable paths.
  auto texts = torch::randn({2, 6}, torch::kFloat64);

  auto loss_fn = [&]() {
    auto tau = torch::exp(log_tau);
    auto bundle = build_similarity(tokens, texts, 0.1, tau);
    return loss_cl(img, texts, tau) + loss_ac(bundle);
  };
  const double rel = directional_gradcheck(loss_fn, {tokens, img, log_tau}, 6, 1e-6, 29);
  CHECK(rel < 1e-4);

  // The designed stop-gradient: the soft weights never push on the text side
  // through loss_ac.
  auto live_texts = torch::randn({2, 6}, torch::kFloat64).set_requires_grad(true);
  auto bundle = build_similarity(tokens, live_texts, 0.1, torch::exp(log_tau));
  auto ac_only = loss_ac(bundle);
  auto g = torch::autograd::grad({ac_only}, {live_texts}, {}, true, false, true);
  CHECK(!g[0].defined());
}

TEST_SUITE_END();
