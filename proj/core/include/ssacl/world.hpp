#pragma once

#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "ssacl/anatomy_graph.hpp"
#include "ssacl/common.hpp"

namespace ssacl {

enum class PerturbKind { BrightBlob, DarkBlob, Stripes };

struct PathologyRenderer {
  PerturbKind kind = PerturbKind::BrightBlob;
  float min_intensity = 0.3f;
  float max_intensity = 0.5f;
  float sigma_frac = 0.3f;   // blob sigma as a fraction of region extent
  int period = 4;            // stripes only
  float angle_deg = 90.0f;   // stripes only
};

struct ReportTemplates {
  std::string positive = "The {anatomy} shows {pathology}.";
  std::string negative = "The {anatomy} is clear.";
};

struct WorldSpec {
  int image_size = 64;
  int channels = 1;
  float noise_std = 0.02f;
  int max_pathologies = 3;
  int clear_statements = 2;
  std::map<std::string, Rect> region_layout;  // every node id -> rect
  std::map<std::string, PathologyRenderer> renderers;
  ReportTemplates templates;
  std::shared_ptr<const AnatomyGraph> graph;

  static WorldSpec from_json(const json& doc, const std::filesystem::path& base_dir);
  static WorldSpec load_file(const std::filesystem::path& path);
  // Default world over a graph: layout derived by balanced splitting.
  static WorldSpec defaults(std::shared_ptr<const AnatomyGraph> graph);

  json to_json() const;
};

// Recursively partitions [0,W)x[0,H) over the tree: each node's rectangle is
// split among its children (weighted by leaf counts, longest axis first), so
// a parent's region is exactly the union of its children's. Returns a rect
// for every node id.
std::map<std::string, Rect> build_region_layout(const AnatomyGraph& graph, int width, int height);

struct Sample {
  std::string id;
  torch::Tensor image;  // [1, H, W] float in [0,1]
  std::string report;
  std::vector<std::pair<std::string, std::string>> pathologies;  // (pathology, leaf)
  std::vector<std::pair<std::string, Rect>> boxes;               // (leaf, rect)
};

// Deterministic in (spec, n, seed). Each sample draws 0..max_pathologies
// findings uniformly, placed in uniformly chosen mapped leaves.
std::vector<Sample> generate_dataset(const WorldSpec& spec, int n, std::uint64_t seed);

// Rule-based template inverse: recovers (pathology, leaf id) pairs from
// template-conforming sentences; non-conforming sentences are skipped.
std::vector<std::pair<std::string, std::string>> extract_entities(const WorldSpec& spec,
                                                                  const std::string& report);

struct DatasetSplits {
  std::vector<std::string> train, val, test;
};

// On-disk layout: manifest.json + world.json + graph.json + images/<id>.bin
// + meta/<id>.json.
void save_dataset(const std::filesystem::path& dir, const WorldSpec& spec,
                  const std::vector<Sample>& samples, const DatasetSplits& splits,
                  std::uint64_t seed);

struct Dataset {
  WorldSpec spec;
  DatasetSplits splits;
  std::map<std::string, Sample> samples;

  const Sample& sample(const std::string& id) const;
  std::vector<const Sample*> split(const std::string& name) const;
};

Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace ssacl
