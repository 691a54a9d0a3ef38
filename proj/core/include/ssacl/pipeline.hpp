#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ssacl/grounding.hpp"
#include "ssacl/metrics.hpp"
#include "ssacl/model.hpp"
#include "ssacl/probe.hpp"
#include "ssacl/world.hpp"

namespace ssacl {

struct GeneratedReport {
  std::string sample_id;
  std::string report;
  std::vector<std::string> pathologies_used;
  std::vector<std::string> leaves_attended;
};

// Batched greedy generation over a split. Pathology entities come from the
// probe when given, otherwise from the ground-truth annotations (the
// train-time bypass). `suppressed` removes those pathologies' presence
// positions from every prefix (prompt-steering ablation).
std::vector<GeneratedReport> generate_reports(SSACLModel& model, const PathologyProbe* probe,
                                              const Dataset& dataset, const std::string& split,
                                              const std::set<std::string>& suppressed = {});

void write_reports_jsonl(const std::filesystem::path& path,
                         const std::vector<GeneratedReport>& reports);
std::vector<GeneratedReport> read_reports_jsonl(const std::filesystem::path& path);

MetricReport evaluate_reports(const WorldSpec& spec, const std::vector<std::string>& pred,
                              const std::vector<std::string>& ref);

struct GroundingRun {
  GroundingMetrics metrics;
  std::vector<GroundingMap> maps;
};

// Grounds the positive-finding phrase of every (pathology, leaf) box over the
// first `max_samples` split samples that carry findings.
GroundingRun run_grounding(SSACLModel& model, const Dataset& dataset, const std::string& split,
                           int max_samples);

// Grayscale dump of a grounding map with the target box outlined (PGM).
void write_grounding_map_pgm(const std::filesystem::path& path, const GroundingMap& map);

// Fraction of reports whose extracted entities mention `pathology`.
double mention_rate(const WorldSpec& spec, const std::vector<GeneratedReport>& reports,
                    const std::string& pathology);

}  // namespace ssacl
