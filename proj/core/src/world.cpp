#include "ssacl/world.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "ssacl/errors.hpp"
#include "ssacl/tokenizer.hpp"

namespace ssacl {

namespace {

PerturbKind kind_from_string(const std::string& s) {
  if (s == "bright_blob") return PerturbKind::BrightBlob;
  if (s == "dark_blob") return PerturbKind::DarkBlob;
  if (s == "stripes") return PerturbKind::Stripes;
  throw ValidationError("unknown renderer kind '" + s + "'");
}

std::string kind_to_string(PerturbKind k) {
  switch (k) {
    case PerturbKind::BrightBlob: return "bright_blob";
    case PerturbKind::DarkBlob: return "dark_blob";
    case PerturbKind::Stripes: return "stripes";
  }
  return "bright_blob";
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

int leaf_weight(const AnatomyGraph& g, const std::string& id) {
  const auto& n = g.node(id);
  if (n.is_leaf()) return 1;
  int w = 0;
  for (const auto& c : n.children) w += leaf_weight(g, c);
  return w;
}

void split_group(const AnatomyGraph& g, const std::vector<std::string>& group, Rect rect,
                 std::map<std::string, Rect>& layout);

void assign_rect(const AnatomyGraph& g, const std::string& id, Rect rect,
                 std::map<std::string, Rect>& layout) {
  layout[id] = rect;
  const auto& children = g.node(id).children;
  if (!children.empty()) split_group(g, children, rect, layout);
}

void split_group(const AnatomyGraph& g, const std::vector<std::string>& group, Rect rect,
                 std::map<std::string, Rect>& layout) {
  if (group.size() == 1) {
    assign_rect(g, group.front(), rect, layout);
    return;
  }
  std::vector<int> weights;
  weights.reserve(group.size());
  for (const auto& id : group) weights.push_back(leaf_weight(g, id));
  const int total = std::accumulate(weights.begin(), weights.end(), 0);

  // Contiguous prefix split closest to half the weight.
  int best_cut = 1, best_diff = total + 1, acc = 0;
  for (std::size_t i = 0; i + 1 < group.size(); ++i) {
    acc += weights[i];
    const int diff = std::abs(2 * acc - total);
    if (diff < best_diff) {
      best_diff = diff;
      best_cut = static_cast<int>(i) + 1;
    }
  }
  const int left_w = std::accumulate(weights.begin(), weights.begin() + best_cut, 0);

  const bool split_x = rect.width() >= rect.height();
  const int length = split_x ? rect.width() : rect.height();
  int left_len = static_cast<int>(std::lround(static_cast<double>(length) * left_w / total));
  left_len = std::clamp(left_len, 1, length - 1);

  Rect a = rect, b = rect;
  if (split_x) {
    a.x1 = rect.x0 + left_len;
    b.x0 = rect.x0 + left_len;
  } else {
    a.y1 = rect.y0 + left_len;
    b.y0 = rect.y0 + left_len;
  }
  split_group(g, {group.begin(), group.begin() + best_cut}, a, layout);
  split_group(g, {group.begin() + best_cut, group.end()}, b, layout);
}

}  // namespace

std::map<std::string, Rect> build_region_layout(const AnatomyGraph& graph, int width, int height) {
  if (width < static_cast<int>(graph.leaf_count()) || height < 2) {
    throw ValidationError("image too small to partition among leaves");
  }
  std::map<std::string, Rect> layout;
  assign_rect(graph, graph.root(), Rect{0, 0, width, height}, layout);
  return layout;
}

WorldSpec WorldSpec::from_json(const json& doc, const std::filesystem::path& base_dir) {
  WorldSpec spec;
  spec.image_size = doc.value("image_size", 64);
  spec.channels = doc.value("channels", 1);
  spec.noise_std = doc.value("noise_std", 0.02f);
  spec.max_pathologies = doc.value("max_pathologies", 3);
  spec.clear_statements = doc.value("clear_statements", 2);
  if (doc.contains("templates")) {
    spec.templates.positive = doc.at("templates").value("positive", spec.templates.positive);
    spec.templates.negative = doc.at("templates").value("negative", spec.templates.negative);
  }

  if (doc.contains("graph_inline")) {
    spec.graph = std::make_shared<AnatomyGraph>(
        AnatomyGraph::from_json_text(doc.at("graph_inline").dump()));
  } else if (doc.contains("graph_config")) {
    auto p = std::filesystem::path(doc.at("graph_config").get<std::string>());
    if (p.is_relative()) p = base_dir / p;
    spec.graph = std::make_shared<AnatomyGraph>(AnatomyGraph::load_file(p));
  } else {
    throw ValidationError("world config needs 'graph_config' or 'graph_inline'");
  }

  if (doc.contains("renderers")) {
    for (const auto& [name, body] : doc.at("renderers").items()) {
      PathologyRenderer r;
      r.kind = kind_from_string(body.value("kind", "bright_blob"));
      r.min_intensity = body.value("min_intensity", 0.3f);
      r.max_intensity = body.value("max_intensity", 0.5f);
      r.sigma_frac = body.value("sigma_frac", 0.3f);
      r.period = body.value("period", 4);
      r.angle_deg = body.value("angle_deg", 90.0f);
      spec.renderers[name] = r;
    }
  }
  for (const auto& [name, leaves] : spec.graph->pathology_map()) {
    if (!spec.renderers.count(name)) {
      throw ValidationError("pathology '" + name + "' has no renderer");
    }
  }

  if (doc.contains("region_layout")) {
    for (const auto& [id, r] : doc.at("region_layout").items()) {
      spec.region_layout[id] = r.get<Rect>();
    }
  } else {
    spec.region_layout = build_region_layout(*spec.graph, spec.image_size, spec.image_size);
  }
  return spec;
}

WorldSpec WorldSpec::load_file(const std::filesystem::path& path) {
  json doc = json::parse(read_text_file(path));
  return from_json(doc, path.parent_path());
}

WorldSpec WorldSpec::defaults(std::shared_ptr<const AnatomyGraph> graph) {
  WorldSpec spec;
  spec.graph = std::move(graph);
  spec.region_layout = build_region_layout(*spec.graph, spec.image_size, spec.image_size);
  const PerturbKind kinds[3] = {PerturbKind::BrightBlob, PerturbKind::DarkBlob,
                                PerturbKind::Stripes};
  int i = 0;
  for (const auto& name : spec.graph->pathology_order()) {
    PathologyRenderer r;
    r.kind = kinds[i++ % 3];
    spec.renderers[name] = r;
  }
  return spec;
}

json WorldSpec::to_json() const {
  json doc;
  doc["image_size"] = image_size;
  doc["channels"] = channels;
  doc["noise_std"] = noise_std;
  doc["max_pathologies"] = max_pathologies;
  doc["clear_statements"] = clear_statements;
  doc["templates"] = {{"positive", templates.positive}, {"negative", templates.negative}};
  json rends;
  for (const auto& [name, r] : renderers) {
    rends[name] = {{"kind", kind_to_string(r.kind)},
                   {"min_intensity", r.min_intensity},
                   {"max_intensity", r.max_intensity},
                   {"sigma_frac", r.sigma_frac},
                   {"period", r.period},
                   {"angle_deg", r.angle_deg}};
  }
  doc["renderers"] = rends;
  json layout;
  for (const auto& [id, r] : region_layout) layout[id] = r;
  doc["region_layout"] = layout;
  doc["graph_inline"] = json::parse(graph->config_text());
  return doc;
}

namespace {

float leaf_base_offset(const std::string& leaf) {
  // Fixed per-leaf intensity offset: the consistent "anatomy" signature that
  // repeats across samples.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : leaf) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return (static_cast<float>(h % 1000) / 1000.0f - 0.5f) * 0.12f;
}

void render_perturbation(torch::Tensor& img, const Rect& rect, const PathologyRenderer& r,
                         std::mt19937_64& rng) {
  auto acc = img.accessor<float, 2>();
  std::uniform_real_distribution<float> amp_dist(r.min_intensity, r.max_intensity);
  const float amp = amp_dist(rng);
  const float sign = r.kind == PerturbKind::DarkBlob ? -1.0f : 1.0f;

  if (r.kind == PerturbKind::Stripes) {
    const float theta = r.angle_deg * static_cast<float>(M_PI) / 180.0f;
    const float cx = std::cos(theta), sy = std::sin(theta);
    std::uniform_real_distribution<float> phase_dist(0.0f, static_cast<float>(r.period));
    const float phase = phase_dist(rng);
    for (int y = rect.y0; y < rect.y1; ++y) {
      for (int x = rect.x0; x < rect.x1; ++x) {
        const float t = (x * cx + y * sy + phase) / static_cast<float>(r.period);
        const float wave = std::sin(2.0f * static_cast<float>(M_PI) * t) >= 0.0f ? 0.5f : -0.5f;
        acc[y][x] += amp * wave;
      }
    }
    return;
  }

  std::uniform_real_distribution<float> jitter(-0.1f, 0.1f);
  const float cxp = rect.x0 + rect.width() * (0.5f + jitter(rng));
  const float cyp = rect.y0 + rect.height() * (0.5f + jitter(rng));
  const float sx = std::max(1.0f, r.sigma_frac * rect.width() * 0.5f);
  const float sz = std::max(1.0f, r.sigma_frac * rect.height() * 0.5f);
  for (int y = rect.y0; y < rect.y1; ++y) {
    for (int x = rect.x0; x < rect.x1; ++x) {
      const float dx = (x - cxp) / sx;
      const float dy = (y - cyp) / sz;
      acc[y][x] += sign * amp * std::exp(-0.5f * (dx * dx + dy * dy));
    }
  }
}

std::string fill_template(const std::string& tmpl, const std::string& anatomy,
                          const std::string& pathology) {
  std::string out = tmpl;
  auto replace = [&](const std::string& key, const std::string& value) {
    auto pos = out.find(key);
    if (pos != std::string::npos) out.replace(pos, key.size(), value);
  };
  replace("{anatomy}", anatomy);
  replace("{pathology}", pathology);
  return out;
}

std::string compose_report(const WorldSpec& spec,
                           const std::vector<std::pair<std::string, std::string>>& findings) {
  const auto& g = *spec.graph;
  auto sorted = findings;
  std::sort(sorted.begin(), sorted.end(), [&](const auto& a, const auto& b) {
    const int la = g.leaf_index(a.second), lb = g.leaf_index(b.second);
    return la != lb ? la < lb : a.first < b.first;
  });

  std::vector<std::string> sentences;
  std::set<std::string> positive_leaves;
  for (const auto& [pathology, leaf] : sorted) {
    sentences.push_back(fill_template(spec.templates.positive, g.node(leaf).name, pathology));
    positive_leaves.insert(leaf);
  }
  int clears = 0;
  for (const auto& leaf : g.leaf_order()) {
    if (clears >= spec.clear_statements) break;
    if (positive_leaves.count(leaf)) continue;
    sentences.push_back(fill_template(spec.templates.negative, g.node(leaf).name, ""));
    ++clears;
  }

  std::string report;
  std::size_t tokens = 0;
  for (const auto& s : sentences) {
    const auto words = Tokenizer::split_words(s);
    if (tokens + words.size() > 100) break;  // report length cap
    if (!report.empty()) report += ' ';
    report += s;
    tokens += words.size();
  }
  return report;
}

}  // namespace

std::vector<Sample> generate_dataset(const WorldSpec& spec, int n, std::uint64_t seed) {
  if (n < 1) throw ValidationError("dataset size must be >= 1");
  const auto& g = *spec.graph;
  const int W = spec.image_size, H = spec.image_size;

  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    Sample s;
    {
      std::ostringstream id;
      id << "s" << std::setw(6) << std::setfill('0') << i;
      s.id = id.str();
    }

    std::uniform_int_distribution<int> count_dist(0, spec.max_pathologies);
    const int k = count_dist(rng);
    std::set<std::pair<std::string, std::string>> chosen;
    const auto& order = g.pathology_order();
    for (int j = 0; j < k; ++j) {
      for (int attempt = 0; attempt < 100; ++attempt) {
        std::uniform_int_distribution<std::size_t> p_dist(0, order.size() - 1);
        const auto& pathology = order[p_dist(rng)];
        const auto& leaves = g.pathology_map().at(pathology);
        std::uniform_int_distribution<std::size_t> l_dist(0, leaves.size() - 1);
        const auto& leaf = leaves[l_dist(rng)];
        if (chosen.insert({pathology, leaf}).second) break;
      }
    }
    s.pathologies.assign(chosen.begin(), chosen.end());

    auto img = torch::empty({H, W}, torch::kFloat32);
    {
      auto acc = img.accessor<float, 2>();
      std::uniform_real_distribution<float> grad_dist(-0.05f, 0.05f);
      const float gx = grad_dist(rng), gy = grad_dist(rng);
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          acc[y][x] = 0.45f + gx * (static_cast<float>(x) / W - 0.5f) +
                      gy * (static_cast<float>(y) / H - 0.5f);
        }
      }
      for (const auto& leaf : g.leaf_order()) {
        const auto& r = spec.region_layout.at(leaf);
        const float off = leaf_base_offset(leaf);
        for (int y = r.y0; y < r.y1; ++y) {
          for (int x = r.x0; x < r.x1; ++x) acc[y][x] += off;
        }
      }
    }
    for (const auto& [pathology, leaf] : s.pathologies) {
      const auto& rect = spec.region_layout.at(leaf);
      render_perturbation(img, rect, spec.renderers.at(pathology), rng);
      s.boxes.emplace_back(leaf, rect);
    }
    {
      auto acc = img.accessor<float, 2>();
      std::normal_distribution<float> noise(0.0f, spec.noise_std);
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          acc[y][x] = std::clamp(acc[y][x] + noise(rng), 0.0f, 1.0f);
        }
      }
    }
    s.image = img.unsqueeze(0);  // [1, H, W]
    s.report = compose_report(spec, s.pathologies);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> extract_entities(const WorldSpec& spec,
                                                                  const std::string& report) {
  const auto& g = *spec.graph;
  std::map<std::string, std::string> name_to_leaf;
  for (const auto& leaf : g.leaf_order()) name_to_leaf[lower(g.node(leaf).name)] = leaf;
  std::set<std::string> pathology_vocab;
  for (const auto& p : g.pathology_order()) pathology_vocab.insert(lower(p));

  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::pair<std::string, std::string>> seen;

  std::istringstream ss(report);
  std::string sentence;
  while (std::getline(ss, sentence, '.')) {
    auto words = Tokenizer::split_words(sentence);
    if (words.size() < 3 || words.front() != "the") continue;
    auto shows = std::find(words.begin(), words.end(), "shows");
    if (shows == words.end() || shows == words.begin() + 1 || shows + 1 == words.end()) continue;

    std::string anatomy;
    for (auto it = words.begin() + 1; it != shows; ++it) {
      if (!anatomy.empty()) anatomy += ' ';
      anatomy += *it;
    }
    std::string pathology;
    for (auto it = shows + 1; it != words.end(); ++it) {
      if (!pathology.empty()) pathology += ' ';
      pathology += *it;
    }
    auto leaf_it = name_to_leaf.find(anatomy);
    if (leaf_it == name_to_leaf.end()) continue;
    if (!pathology_vocab.count(pathology)) continue;
    if (seen.insert({pathology, leaf_it->second}).second) {
      out.emplace_back(pathology, leaf_it->second);
    }
  }
  return out;
}

void save_dataset(const std::filesystem::path& dir, const WorldSpec& spec,
                  const std::vector<Sample>& samples, const DatasetSplits& splits,
                  std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["version"] = 1;
  manifest["n"] = samples.size();
  manifest["seed"] = seed;
  manifest["image_size"] = spec.image_size;
  manifest["splits"] = {{"train", splits.train}, {"val", splits.val}, {"test", splits.test}};
  write_text_file(dir / "manifest.json", manifest.dump(2));
  write_text_file(dir / "world.json", spec.to_json().dump(2));
  write_text_file(dir / "graph.json", spec.graph->config_text());

  for (const auto& s : samples) {
    write_tensor_binary(dir / "images" / (s.id + ".bin"), s.image);
    json meta;
    meta["id"] = s.id;
    meta["report"] = s.report;
    json paths = json::array();
    for (const auto& [p, leaf] : s.pathologies) paths.push_back({p, leaf});
    meta["pathologies"] = paths;
    json boxes = json::array();
    for (const auto& [leaf, r] : s.boxes) boxes.push_back({{"leaf", leaf}, {"rect", r}});
    meta["boxes"] = boxes;
    write_text_file(dir / "meta" / (s.id + ".json"), meta.dump());
  }
}

const Sample& Dataset::sample(const std::string& id) const {
  auto it = samples.find(id);
  if (it == samples.end()) throw ValidationError("unknown sample id '" + id + "'");
  return it->second;
}

std::vector<const Sample*> Dataset::split(const std::string& name) const {
  const std::vector<std::string>* ids = nullptr;
  if (name == "train") ids = &splits.train;
  else if (name == "val") ids = &splits.val;
  else if (name == "test") ids = &splits.test;
  else throw ValidationError("unknown split '" + name + "'");
  std::vector<const Sample*> out;
  out.reserve(ids->size());
  for (const auto& id : *ids) out.push_back(&sample(id));
  return out;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  json manifest = json::parse(read_text_file(dir / "manifest.json"));
  ds.splits.train = manifest.at("splits").at("train").get<std::vector<std::string>>();
  ds.splits.val = manifest.at("splits").at("val").get<std::vector<std::string>>();
  ds.splits.test = manifest.at("splits").at("test").get<std::vector<std::string>>();

  json world = json::parse(read_text_file(dir / "world.json"));
  ds.spec = WorldSpec::from_json(world, dir);

  std::vector<std::string> all;
  all.insert(all.end(), ds.splits.train.begin(), ds.splits.train.end());
  all.insert(all.end(), ds.splits.val.begin(), ds.splits.val.end());
  all.insert(all.end(), ds.splits.test.begin(), ds.splits.test.end());
  for (const auto& id : all) {
    Sample s;
    s.id = id;
    s.image = read_tensor_binary(dir / "images" / (id + ".bin"));
    json meta = json::parse(read_text_file(dir / "meta" / (id + ".json")));
    s.report = meta.at("report").get<std::string>();
    for (const auto& p : meta.at("pathologies")) {
      s.pathologies.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
    }
    for (const auto& b : meta.at("boxes")) {
      s.boxes.emplace_back(b.at("leaf").get<std::string>(), b.at("rect").get<Rect>());
    }
    ds.samples.emplace(id, std::move(s));
  }
  return ds;
}

}  // namespace ssacl
