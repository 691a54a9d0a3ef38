#pragma once

#include <string>
#include <vector>

#include "ssacl/world.hpp"

namespace ssacl {

// Corpus BLEU-4: geometric mean of modified 1..4-gram precisions times the
// brevity penalty. Zero match counts are floored at 1e-9 so disjoint corpora
// score ~0 without log(0); exact matches score exactly 1.
double bleu4(const std::vector<std::string>& candidates,
             const std::vector<std::string>& references);

// ROUGE-L: sentence-level LCS F-measure (beta = 1.2, recall-leaning),
// averaged over the corpus.
double rouge_l(const std::vector<std::string>& candidates,
               const std::vector<std::string>& references);

struct CeScores {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

// Entity-level clinical efficacy: per-pathology binary presence confusion
// over samples via extract_entities, macro-averaged. Pathologies absent from
// both sides everywhere are skipped.
CeScores ce_scores(const WorldSpec& spec, const std::vector<std::string>& pred_reports,
                   const std::vector<std::string>& ref_reports);

struct MetricReport {
  double bleu4 = 0;
  double rouge_l = 0;
  double ce_precision = 0;
  double ce_recall = 0;
  double ce_f1 = 0;
  double cnr_mean = 0;
  double miou = 0;

  json to_json() const;
};

}  // namespace ssacl
