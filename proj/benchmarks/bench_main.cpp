#include <benchmark/benchmark.h>

#include <torch/torch.h>

#include "ssacl/anatomy_graph.hpp"
#include "ssacl/graph_queries.hpp"
#include "ssacl/losses/alignment.hpp"
#include "ssacl/model.hpp"
#include "ssacl/preprocess.hpp"
#include "ssacl/world.hpp"

namespace {

using namespace ssacl;

std::shared_ptr<const AnatomyGraph> graph() {
  static auto g = std::make_shared<AnatomyGraph>(AnatomyGraph::load_file(
      std::filesystem::path(SSACL_SOURCE_DIR) / "configs" / "anatomy_synthetic.json"));
  return g;
}

void BM_restore_queries(benchmark::State& state) {
  auto g = graph();
  auto leaves = torch::randn({static_cast<std::int64_t>(g->leaf_count()), 128});
  for (auto _ : state) {
    benchmark::DoNotOptimize(restore_query_tensor(*g, leaves));
  }
}
BENCHMARK(BM_restore_queries);

void BM_build_similarity(benchmark::State& state) {
  const auto N = state.range(0);
  auto tokens = torch::randn({N, 25, 128});
  auto texts = torch::randn({N, 128});
  auto tau = torch::full({}, 0.07);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_similarity(tokens, texts, 0.1, tau));
  }
}
BENCHMARK(BM_build_similarity)->Arg(8)->Arg(32);

void BM_loss_ac(benchmark::State& state) {
  const auto N = state.range(0);
  auto tokens = torch::randn({N, 25, 128});
  auto texts = torch::randn({N, 128});
  auto tau = torch::full({}, 0.07);
  auto bundle = build_similarity(tokens, texts, 0.1, tau);
  for (auto _ : state) {
    benchmark::DoNotOptimize(loss_ac(bundle));
  }
}
BENCHMARK(BM_loss_ac)->Arg(8)->Arg(32);

void BM_masked_fuse(benchmark::State& state) {
  torch::manual_seed(0);
  auto g = graph();
  ModelConfig mc;
  auto model = std::make_shared<SSACLModelImpl>(mc, g, make_tokenizer(*g));
  model->eval();
  torch::NoGradGuard ng;
  auto images = preprocess(torch::rand({state.range(0), 1, 64, 64}));
  auto queries = model->restored_queries(state.range(0));
  for (auto _ : state) {
    auto batch = mask_image(images, 0.75, 1, model->visual_encoder->cfg);
    benchmark::DoNotOptimize(model->visual_encoder->fuse(
        batch, queries, model->visual_encoder->topology_for(batch)));
  }
}
BENCHMARK(BM_masked_fuse)->Arg(8)->Arg(32);

void BM_generate_dataset(benchmark::State& state) {
  auto spec = WorldSpec::load_file(
      std::filesystem::path(SSACL_SOURCE_DIR) / "configs" / "world_default.json");
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate_dataset(spec, static_cast<int>(state.range(0)), 7));
  }
}
BENCHMARK(BM_generate_dataset)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
