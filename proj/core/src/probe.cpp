#include "ssacl/probe.hpp"

#include <algorithm>
#include <cstring>

#include "ssacl/errors.hpp"
#include "ssacl/preprocess.hpp"

namespace ssacl {

namespace {

torch::Tensor presence_labels(const WorldSpec& spec, const std::vector<const Sample*>& samples) {
  const auto& order = spec.graph->pathology_order();
  auto labels = torch::zeros({static_cast<std::int64_t>(samples.size()),
                              static_cast<std::int64_t>(order.size())});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (const auto& [pathology, leaf] : extract_entities(spec, samples[i]->report)) {
      auto it = std::find(order.begin(), order.end(), pathology);
      if (it != order.end()) {
        labels[static_cast<std::int64_t>(i)][it - order.begin()] = 1.0;
      }
    }
  }
  return labels;
}

torch::Tensor batch_features(SSACLModel& model, const std::vector<const Sample*>& samples) {
  torch::NoGradGuard no_grad;
  model->eval();
  std::vector<torch::Tensor> images;
  images.reserve(samples.size());
  for (const auto* s : samples) images.push_back(s->image);
  std::vector<torch::Tensor> feats;
  const std::int64_t chunk = 64;
  PreprocessOptions opts;
  opts.target_size = static_cast<int>(model->cfg.image_size);
  auto all = preprocess(torch::stack(images), opts);
  for (std::int64_t i = 0; i < all.size(0); i += chunk) {
    feats.push_back(model->class_features(all.slice(0, i, std::min(i + chunk, all.size(0)))));
  }
  model->train();
  return torch::cat(feats, 0);
}

double f1_at_threshold(const torch::Tensor& probs, const torch::Tensor& labels, double thr) {
  auto pred = probs.ge(thr).to(torch::kFloat32);
  const double tp = (pred * labels).sum().item<double>();
  const double fp = (pred * (1 - labels)).sum().item<double>();
  const double fn = ((1 - pred) * labels).sum().item<double>();
  if (tp == 0.0) return 0.0;
  const double p = tp / (tp + fp), r = tp / (tp + fn);
  return 2 * p * r / (p + r);
}

}  // namespace

std::vector<std::string> PathologyProbe::predict(const torch::Tensor& features_row) const {
  auto probs = torch::sigmoid(logits(features_row.unsqueeze(0))).squeeze(0);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < pathology_order.size(); ++i) {
    if (probs[static_cast<std::int64_t>(i)].item<double>() >= thresholds[i]) {
      out.push_back(pathology_order[i]);
    }
  }
  return out;
}

void PathologyProbe::save(const std::filesystem::path& path) const {
  torch::serialize::OutputArchive ar;
  torch::serialize::OutputArchive head_ar;
  head->save(head_ar);
  ar.write("head", head_ar);
  ar.write("thresholds", torch::tensor(thresholds, torch::kFloat64));
  json names = pathology_order;
  auto bytes = names.dump();
  auto t = torch::empty({static_cast<std::int64_t>(bytes.size())}, torch::kChar);
  std::memcpy(t.data_ptr<std::int8_t>(), bytes.data(), bytes.size());
  ar.write("pathologies", t);
  ar.save_to(path.string());
}

PathologyProbe PathologyProbe::load(const std::filesystem::path& path, std::int64_t width) {
  torch::serialize::InputArchive ar;
  ar.load_from(path.string());
  torch::Tensor names_t, thr;
  ar.read("pathologies", names_t);
  ar.read("thresholds", thr);
  std::string bytes(static_cast<std::size_t>(names_t.numel()), '\0');
  std::memcpy(bytes.data(), names_t.data_ptr<std::int8_t>(), bytes.size());

  PathologyProbe probe;
  probe.pathology_order = json::parse(bytes).get<std::vector<std::string>>();
  probe.head = torch::nn::Linear(width, static_cast<std::int64_t>(probe.pathology_order.size()));
  torch::serialize::InputArchive head_ar;
  ar.read("head", head_ar);
  probe.head->load(head_ar);
  for (std::int64_t i = 0; i < thr.numel(); ++i) {
    probe.thresholds.push_back(thr[i].item<double>());
  }
  return probe;
}

ProbeResult train_probe(SSACLModel& model, const WorldSpec& spec,
                        const std::vector<const Sample*>& train,
                        const std::vector<const Sample*>& val, const ProbeTrainConfig& cfg) {
  torch::manual_seed(cfg.seed);
  const auto& order = spec.graph->pathology_order();

  auto train_x = batch_features(model, train);
  auto train_y = presence_labels(spec, train);
  auto val_x = batch_features(model, val);
  auto val_y = presence_labels(spec, val);

  PathologyProbe probe;
  probe.pathology_order = order;
  probe.head = torch::nn::Linear(train_x.size(1), static_cast<std::int64_t>(order.size()));

  torch::optim::AdamW opt(probe.head->parameters(), torch::optim::AdamWOptions(cfg.lr));
  for (int e = 0; e < cfg.epochs; ++e) {
    opt.zero_grad();
    auto loss = torch::binary_cross_entropy_with_logits(probe.head(train_x), train_y);
    loss.backward();
    opt.step();
  }

  // Per-pathology thresholds maximizing validation F1.
  torch::NoGradGuard no_grad;
  auto val_probs = torch::sigmoid(probe.head(val_x));
  double macro = 0.0;
  int counted = 0;
  for (std::size_t p = 0; p < order.size(); ++p) {
    const auto col = static_cast<std::int64_t>(p);
    double best_thr = 0.5, best_f1 = -1.0;
    for (double thr = 0.05; thr <= 0.951; thr += 0.05) {
      const double f1 = f1_at_threshold(val_probs.slice(1, col, col + 1),
                                        val_y.slice(1, col, col + 1), thr);
      if (f1 > best_f1) {
        best_f1 = f1;
        best_thr = thr;
      }
    }
    probe.thresholds.push_back(best_thr);
    if (val_y.slice(1, col, col + 1).sum().item<double>() > 0) {
      macro += best_f1;
      ++counted;
    }
  }
  return {std::move(probe), counted > 0 ? macro / counted : 0.0};
}

AnatomyInference infer_anatomy(const PathologyProbe& probe, SSACLModel& model,
                               const torch::Tensor& image) {
  torch::NoGradGuard no_grad;
  model->eval();
  auto img = image.dim() == 3 ? image.unsqueeze(0) : image;
  PreprocessOptions opts;
  opts.target_size = static_cast<int>(model->cfg.image_size);
  auto features = model->class_features(preprocess(img, opts)).squeeze(0);
  model->train();

  AnatomyInference out;
  out.pathologies = probe.predict(features);
  if (out.pathologies.empty()) {
    out.active_leaves = {model->graph->leaf_order().begin(), model->graph->leaf_order().end()};
  } else {
    out.active_leaves = model->graph->pathologies_to_leaves(out.pathologies);
  }
  return out;
}

torch::Tensor build_presence(const AnatomyGraph& graph,
                             const std::vector<std::string>& active_leaves) {
  auto presence = torch::zeros({static_cast<std::int64_t>(graph.node_count())}, torch::kBool);
  for (const auto& leaf : active_leaves) {
    presence[graph.node_index(leaf)] = true;
    for (const auto& anc : graph.ancestors(leaf)) presence[graph.node_index(anc)] = true;
  }
  return presence;
}

}  // namespace ssacl
