#include "ssacl/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include "ssacl/errors.hpp"
#include "ssacl/preprocess.hpp"

namespace ssacl {

std::vector<GeneratedReport> generate_reports(SSACLModel& model, const PathologyProbe* probe,
                                              const Dataset& dataset, const std::string& split,
                                              const std::set<std::string>& suppressed) {
  torch::NoGradGuard no_grad;
  model->eval();
  const auto samples = dataset.split(split);
  const auto& graph = *model->graph;
  std::vector<GeneratedReport> out;
  out.reserve(samples.size());

  PreprocessOptions popts;
  popts.target_size = static_cast<int>(model->cfg.image_size);

  const std::size_t chunk = 64;
  for (std::size_t off = 0; off < samples.size(); off += chunk) {
    const auto take = std::min(chunk, samples.size() - off);
    std::vector<torch::Tensor> images;
    images.reserve(take);
    for (std::size_t i = 0; i < take; ++i) images.push_back(samples[off + i]->image);
    auto pre = preprocess(torch::stack(images), popts);
    auto fused = model->encode_unmasked(pre);
    auto features = fused.class_token;

    const auto B = static_cast<std::int64_t>(take);
    auto path_ids = torch::full({B, model->cfg.pathology_slots},
                                static_cast<std::int64_t>(Tokenizer::kPad), torch::kLong);
    auto presence = torch::zeros({B, static_cast<std::int64_t>(graph.node_count())},
                                 torch::kBool);

    std::vector<GeneratedReport> chunk_records(take);
    for (std::size_t i = 0; i < take; ++i) {
      const auto b = static_cast<std::int64_t>(i);
      std::vector<std::string> pathologies;
      if (probe) {
        pathologies = probe->predict(features[b]);
      } else {
        std::set<std::string> names;
        for (const auto& [p, leaf] : samples[off + i]->pathologies) names.insert(p);
        pathologies.assign(names.begin(), names.end());
      }
      std::erase_if(pathologies,
                    [&](const std::string& p) { return suppressed.count(p) > 0; });

      std::vector<std::string> leaves;
      if (pathologies.empty()) {
        leaves.assign(graph.leaf_order().begin(), graph.leaf_order().end());
      } else {
        leaves = graph.pathologies_to_leaves(pathologies);
      }
      presence[b] = build_presence(graph, leaves);
      std::int64_t slot = 0;
      for (const auto& p : pathologies) {
        if (slot >= model->cfg.pathology_slots) break;
        path_ids[b][slot++] = model->tokenizer.word_id(p);
      }
      chunk_records[i].sample_id = samples[off + i]->id;
      chunk_records[i].pathologies_used = pathologies;
      chunk_records[i].leaves_attended = leaves;
    }

    auto prefix = model->report_decoder->build_prefix(fused.prompt_tokens, path_ids, presence);
    auto token_rows = model->report_decoder->generate(prefix);
    for (std::size_t i = 0; i < take; ++i) {
      chunk_records[i].report = model->tokenizer.decode(token_rows[i]);
      out.push_back(std::move(chunk_records[i]));
    }
  }
  model->train();
  return out;
}

void write_reports_jsonl(const std::filesystem::path& path,
                         const std::vector<GeneratedReport>& reports) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream outf(path, std::ios::trunc);
  for (const auto& r : reports) {
    json row;
    row["sample_id"] = r.sample_id;
    row["report"] = r.report;
    row["pathologies_used"] = r.pathologies_used;
    row["leaves_attended"] = r.leaves_attended;
    outf << row.dump() << "\n";
  }
}

std::vector<GeneratedReport> read_reports_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open reports file: " + path.string());
  std::vector<GeneratedReport> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json row = json::parse(line);
    GeneratedReport r;
    r.sample_id = row.at("sample_id").get<std::string>();
    r.report = row.at("report").get<std::string>();
    r.pathologies_used = row.value("pathologies_used", std::vector<std::string>{});
    r.leaves_attended = row.value("leaves_attended", std::vector<std::string>{});
    out.push_back(std::move(r));
  }
  return out;
}

MetricReport evaluate_reports(const WorldSpec& spec, const std::vector<std::string>& pred,
                              const std::vector<std::string>& ref) {
  MetricReport m;
  m.bleu4 = bleu4(pred, ref);
  m.rouge_l = rouge_l(pred, ref);
  const auto ce = ce_scores(spec, pred, ref);
  m.ce_precision = ce.precision;
  m.ce_recall = ce.recall;
  m.ce_f1 = ce.f1;
  return m;
}

GroundingRun run_grounding(SSACLModel& model, const Dataset& dataset, const std::string& split,
                           int max_samples) {
  GroundingRun run;
  int used = 0;
  for (const auto* s : dataset.split(split)) {
    if (used >= max_samples) break;
    if (s->pathologies.empty()) continue;
    ++used;
    for (std::size_t i = 0; i < s->pathologies.size(); ++i) {
      const auto& [pathology, leaf] = s->pathologies[i];
      const auto phrase = pathology + " in the " + model->graph->node(leaf).name;
      auto map = ground_phrase(model, s->image, phrase);
      map.target_box = s->boxes[i].second;
      run.maps.push_back(std::move(map));
    }
  }
  run.metrics = grounding_metrics(run.maps);
  return run;
}

void write_grounding_map_pgm(const std::filesystem::path& path, const GroundingMap& map) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto m = map.attention.clone();
  const auto H = m.size(0), W = m.size(1);
  // Box overlay at full intensity.
  const auto& b = map.target_box;
  m.slice(0, b.y0, b.y1).slice(1, b.x0, std::min<std::int64_t>(b.x0 + 1, W)) = 1.0;
  m.slice(0, b.y0, b.y1).slice(1, std::max<std::int64_t>(b.x1 - 1, 0), b.x1) = 1.0;
  m.slice(0, b.y0, std::min<std::int64_t>(b.y0 + 1, H)).slice(1, b.x0, b.x1) = 1.0;
  m.slice(0, std::max<std::int64_t>(b.y1 - 1, 0), b.y1).slice(1, b.x0, b.x1) = 1.0;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << "P5\n" << W << " " << H << "\n255\n";
  auto bytes = (m.clamp(0, 1) * 255).to(torch::kUInt8).contiguous();
  out.write(reinterpret_cast<const char*>(bytes.data_ptr<std::uint8_t>()),
            static_cast<std::streamsize>(bytes.numel()));
}

double mention_rate(const WorldSpec& spec, const std::vector<GeneratedReport>& reports,
                    const std::string& pathology) {
  if (reports.empty()) return 0.0;
  int hits = 0;
  for (const auto& r : reports) {
    for (const auto& [p, leaf] : extract_entities(spec, r.report)) {
      if (p == pathology) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(reports.size());
}

}  // namespace ssacl
