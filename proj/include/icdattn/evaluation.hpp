#pragma once

#include <string>
#include <vector>

#include "icdattn/numerics.hpp"

namespace icdattn {

struct EvalReport {
  long long tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double micro_f1 = 0.0;
  double micro_auc = 0.0;
  double threshold = 0.5;
};

// Micro-pooled confusion counts over every (record, code) cell. A cell is
// positive when score >= threshold. Zero denominators fall back to 0.
EvalReport micro_f1(const Mat& scores, const Mat& labels, double threshold);

// Micro-pooled AUC over the flattened grid: rank statistic with ties counted
// half, computed by sort. Throws DataError("degenerate labels") when the grid
// has no positives or no negatives.
double micro_auc(const Mat& scores, const Mat& labels);

// micro_f1 + micro_auc in one report.
EvalReport evaluate(const Mat& scores, const Mat& labels, double threshold);

// Single global threshold from the grid {0.01, ..., 0.99}; the lowest value
// attaining the best micro-F1.
double tune_threshold(const Mat& scores, const Mat& labels);

// Per-code alternative: one threshold per column, each tuned on its column.
std::vector<double> tune_threshold_per_code(const Mat& scores, const Mat& labels);
EvalReport micro_f1_per_code_threshold(const Mat& scores, const Mat& labels,
                                       const std::vector<double>& thresholds);

std::string eval_report_json(const EvalReport& report);

// records x codes score matrix with a header row of code strings and one
// leading hadm_id column.
void write_scores_csv(const std::string& path, const std::vector<std::string>& record_ids,
                      const std::vector<std::string>& code_strings, const Mat& scores);
struct ScoresCsv {
  std::vector<std::string> record_ids;
  std::vector<std::string> code_strings;
  Mat values;
};
ScoresCsv read_scores_csv(const std::string& path);

}  // namespace icdattn
