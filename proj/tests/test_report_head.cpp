#include <doctest.h>

#include <cmath>

#include "ssacl/model.hpp"
#include "ssacl/nn/report_decoder.hpp"
#include "ssacl/probe.hpp"
#include "ssacl/world.hpp"
#include "test_util.hpp"

using namespace ssacl;
using namespace ssacl::testutil;

namespace {

ReportDecoderConfig small_decoder(std::int64_t vocab = 24) {
  ReportDecoderConfig cfg;
  cfg.vocab = vocab;
  cfg.width = 32;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.max_report_len = 20;
  cfg.pathology_slots = 3;
  return cfg;
}

GenerationPrefix random_prefix(ReportDecoder& dec, std::int64_t B, std::int64_t n_anatomy,
                               double present_fraction = 1.0) {
  auto queries = torch::randn({B, n_anatomy, dec->cfg.width});
  auto path_ids = torch::randint(4, dec->cfg.vocab, {B, dec->cfg.pathology_slots});
  auto presence = torch::rand({B, n_anatomy}).lt(present_fraction);
  return dec->build_prefix(queries, path_ids, presence);
}

}  // namespace

TEST_SUITE_BEGIN("report_head");

TEST_CASE("loss_lm with uniform logits equals log vocab size") {
  torch::manual_seed(31);
  auto cfg = small_decoder(17);
  ReportDecoder dec(cfg);
  {
    torch::NoGradGuard ng;
    dec->lm_head->weight.zero_();
    dec->lm_head->bias.zero_();
  }
  auto prefix = random_prefix(dec, 2, 4);
  auto report = torch::randint(4, 17, {2, 6});
  const double loss = dec->loss_lm(prefix, report).item<double>();
  CHECK(loss == doctest::Approx(std::log(17.0)).epsilon(1e-6));
}

TEST_CASE("loss_lm equals a naive per-position cross-entropy loop") {
  torch::manual_seed(32);
  auto cfg = small_decoder();
  ReportDecoder dec(cfg);
  dec->eval();

  const std::int64_t B = 2, L = 5;
  auto prefix = random_prefix(dec, B, 3);
  auto report = torch::randint(4, cfg.vocab, {B, L});

  auto bos = torch::full({B, 1}, Tokenizer::kBos, torch::kLong);
  auto logits = dec->forward_logits(prefix, torch::cat({bos, report}, 1));
  double naive = 0;
  std::int64_t count = 0;
  auto log_probs = torch::log_softmax(logits.to(torch::kFloat64), -1);
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t i = 0; i < L; ++i) {
      naive -= log_probs[b][i][report[b][i].item<std::int64_t>()].item<double>();
      ++count;
    }
    naive -= log_probs[b][L][Tokenizer::kEos].item<double>();
    ++count;
  }
  naive /= static_cast<double>(count);
  CHECK(dec->loss_lm(prefix, report).item<double>() == doctest::Approx(naive).epsilon(1e-5));
}

TEST_CASE("causality: changing token k only moves logits at later positions") {
  torch::manual_seed(33);
  auto cfg = small_decoder();
  ReportDecoder dec(cfg);
  dec->eval();

  auto prefix = random_prefix(dec, 1, 3);
  auto in = torch::randint(4, cfg.vocab, {1, 8});
  auto base = dec->forward_logits(prefix, in);

  auto changed = in.clone();
  changed[0][4] = (changed[0][4].item<std::int64_t>() + 1) % cfg.vocab;
  if (changed[0][4].item<std::int64_t>() < 4) changed[0][4] = 4;
  auto moved = dec->forward_logits(prefix, changed);

  for (std::int64_t i = 0; i < 8; ++i) {
    const double diff = (moved[0][i] - base[0][i]).abs().max().item<double>();
    if (i < 4) {
      CHECK(diff < 1e-6);  // strictly earlier positions unaffected
    }
    if (i == 4) {
      CHECK(diff > 1e-6);  // the changed embedding feeds its own position
    }
  }
}

TEST_CASE("presence masking is literal: absent prefix values cannot matter") {
  torch::manual_seed(34);
  auto cfg = small_decoder();
  ReportDecoder dec(cfg);
  dec->eval();

  const std::int64_t B = 1, H = 5;
  auto queries = torch::randn({B, H, cfg.width});
  auto path_ids = torch::randint(4, cfg.vocab, {B, cfg.pathology_slots});
  auto presence = torch::tensor({{true, false, true, false, true}});
  auto prefix = dec->build_prefix(queries, path_ids, presence);

  auto report = torch::randint(4, cfg.vocab, {B, 6});
  auto bos = torch::full({B, 1}, Tokenizer::kBos, torch::kLong);
  auto in = torch::cat({bos, report}, 1);
  auto base = dec->forward_logits(prefix, in);
  const double base_loss = dec->loss_lm(prefix, report).item<double>();

  // Arbitrary junk at the masked-out anatomy positions.
  auto junk_queries = queries.clone();
  junk_queries.select(1, 1) = torch::randn({B, cfg.width}) * 100;
  junk_queries.select(1, 3) = torch::randn({B, cfg.width}) * 100;
  auto junk_prefix = dec->build_prefix(junk_queries, path_ids, presence);
  auto moved = dec->forward_logits(junk_prefix, in);

  CHECK((moved - base).abs().max().item<double>() < 1e-6);
  CHECK(dec->loss_lm(junk_prefix, report).item<double>() ==
        doctest::Approx(base_loss).epsilon(1e-9));

  // Present positions do matter.
  auto live_queries = queries.clone();
  live_queries.select(1, 0) += torch::randn({B, cfg.width});
  auto live_prefix = dec->build_prefix(live_queries, path_ids, presence);
  CHECK((dec->forward_logits(live_prefix, in) - base).abs().max().item<double>() > 1e-6);
}

TEST_CASE("generate: greedy decoding is deterministic and honors max_len") {
  torch::manual_seed(35);
  auto cfg = small_decoder();
  ReportDecoder dec(cfg);
  dec->eval();
  auto prefix = random_prefix(dec, 3, 4);

  auto a = dec->generate(prefix, 1);
  for (const auto& row : a) CHECK(row.size() <= 1);

  auto b = dec->generate(prefix);
  auto c = dec->generate(prefix);
  REQUIRE(b.size() == c.size());
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(b[i] == c[i]);
  for (const auto& row : b) CHECK(row.size() <= static_cast<std::size_t>(cfg.max_report_len));
}

TEST_CASE("teacher forcing overfits a single memorized sample") {
  torch::manual_seed(36);
  auto cfg = small_decoder(12);
  cfg.layers = 2;
  ReportDecoder dec(cfg);

  auto queries = torch::randn({1, 3, cfg.width});
  auto path_ids = torch::tensor({{5, 0, 0}}, torch::kLong);
  auto presence = torch::ones({1, 3}, torch::kBool);
  auto report = torch::tensor({{7, 9, 4, 11}}, torch::kLong);

  torch::optim::AdamW opt(dec->parameters(), torch::optim::AdamWOptions(3e-3));
  double loss = 1e9;
  for (int step = 0; step < 400 && loss > 0.008; ++step) {
    auto prefix = dec->build_prefix(queries, path_ids, presence);
    auto l = dec->loss_lm(prefix, report);
    opt.zero_grad();
    l.backward();
    opt.step();
    loss = l.item<double>();
  }
  CHECK(loss < 0.01);

  dec->eval();
  auto prefix = dec->build_prefix(queries, path_ids, presence);
  auto decoded = dec->generate(prefix);
  CHECK(decoded[0] == std::vector<std::int64_t>{7, 9, 4, 11});
}

TEST_CASE("build_presence: one pathology activates its leaf and ancestors") {
  auto g = AnatomyGraph::load_file(config_path("anatomy_synthetic.json"));
  auto presence = build_presence(g, {"part-a1x"});
  CHECK(presence.sum().item<std::int64_t>() == 4);  // leaf + zone-a1 + region-a + root
  CHECK(presence[g.node_index("part-a1x")].item<bool>());
  CHECK(presence[g.node_index("zone-a1")].item<bool>());
  CHECK(presence[g.node_index("region-a")].item<bool>());
  CHECK(presence[g.node_index("full-field")].item<bool>());
  CHECK(!presence[g.node_index("zone-b2")].item<bool>());
}

TEST_CASE("train_probe freezes the encoder bitwise") {
  torch::manual_seed(37);
  auto spec = WorldSpec::load_file(config_path("world_default.json"));
  auto samples = generate_dataset(spec, 24, 2);
  std::vector<const Sample*> train, val;
  for (std::size_t i = 0; i < 16; ++i) train.push_back(&samples[i]);
  for (std::size_t i = 16; i < 24; ++i) val.push_back(&samples[i]);

  ModelConfig mc;
  mc.width = 32;
  mc.layers = 1;
  mc.heads = 2;
  auto model_impl = std::make_shared<SSACLModelImpl>(mc, spec.graph, make_tokenizer(*spec.graph));
  SSACLModel model(model_impl);

  std::vector<torch::Tensor> before;
  for (const auto& p : model->parameters()) before.push_back(p.clone());

  ProbeTrainConfig pc;
  pc.epochs = 30;
  auto result = train_probe(model, spec, train, val, pc);
  CHECK(result.probe.thresholds.size() == spec.graph->pathology_order().size());

  auto after = model->parameters();
  REQUIRE(after.size() == before.size());
  for (std::size_t i = 0; i < after.size(); ++i) {
    CHECK(torch::equal(after[i], before[i]));
  }
}

TEST_CASE("infer_anatomy falls back to every leaf when nothing is predicted") {
  torch::manual_seed(38);
  auto spec = WorldSpec::load_file(config_path("world_default.json"));
  ModelConfig mc;
  mc.width = 32;
  mc.layers = 1;
  mc.heads = 2;
  auto model_impl = std::make_shared<SSACLModelImpl>(mc, spec.graph, make_tokenizer(*spec.graph));
  SSACLModel model(model_impl);

  PathologyProbe probe;
  probe.pathology_order = spec.graph->pathology_order();
  probe.head = torch::nn::Linear(mc.width, static_cast<std::int64_t>(probe.pathology_order.size()));
  {
    torch::NoGradGuard ng;
    probe.head->weight.zero_();
    probe.head->bias.fill_(-50.0);  // sigmoid ~ 0 everywhere
  }
  probe.thresholds.assign(probe.pathology_order.size(), 0.5);

  auto img = torch::rand({1, 64, 64});
  auto inference = infer_anatomy(probe, model, img);
  CHECK(inference.pathologies.empty());
  CHECK(inference.active_leaves.size() == spec.graph->leaf_count());

  // A confident probe activates the mapped leaves and nothing else.
  {
    torch::NoGradGuard ng;
    probe.head->bias.fill_(-50.0);
    probe.head->bias[0] = 50.0;  // first pathology in sorted order: "banding"
  }
  auto one = infer_anatomy(probe, model, img);
  REQUIRE(one.pathologies == std::vector<std::string>{"banding"});
  CHECK(one.active_leaves == spec.graph->pathologies_to_leaves(one.pathologies));
}

TEST_SUITE_END();
