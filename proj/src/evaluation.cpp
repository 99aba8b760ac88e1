#include "icdattn/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "icdattn/errors.hpp"

namespace icdattn {

static void check_shapes(const Mat& scores, const Mat& labels, const char* what) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols() || scores.rows() == 0 ||
      scores.cols() == 0) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }
}

EvalReport micro_f1(const Mat& scores, const Mat& labels, double threshold) {
  check_shapes(scores, labels, "micro_f1");
  EvalReport report;
  report.threshold = threshold;
  const size_t n = scores.size();
  for (size_t i = 0; i < n; ++i) {
    const bool pred = scores.data()[i] >= threshold;
    const bool gold = labels.data()[i] != 0.0;
    if (pred && gold) report.tp += 1;
    else if (pred) report.fp += 1;
    else if (gold) report.fn += 1;
    else report.tn += 1;
  }
  report.precision = (report.tp + report.fp) > 0
                         ? static_cast<double>(report.tp) / static_cast<double>(report.tp + report.fp)
                         : 0.0;
  report.recall = (report.tp + report.fn) > 0
                      ? static_cast<double>(report.tp) / static_cast<double>(report.tp + report.fn)
                      : 0.0;
  report.micro_f1 = (report.precision + report.recall) > 0.0
                        ? 2.0 * report.precision * report.recall /
                              (report.precision + report.recall)
                        : 0.0;
  return report;
}

double micro_auc(const Mat& scores, const Mat& labels) {
  check_shapes(scores, labels, "micro_auc");
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores.data()[a] < scores.data()[b]; });

  long long n_pos = 0, n_neg = 0;
  for (size_t i = 0; i < n; ++i) (labels.data()[i] != 0.0 ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0) throw DataError("degenerate labels");

  // Mann-Whitney rank sum with averaged ranks over tie groups.
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && scores.data()[order[j]] == scores.data()[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based ranks i+1..j
    for (size_t k = i; k < j; ++k) {
      if (labels.data()[order[k]] != 0.0) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

EvalReport evaluate(const Mat& scores, const Mat& labels, double threshold) {
  EvalReport report = micro_f1(scores, labels, threshold);
  report.micro_auc = micro_auc(scores, labels);
  return report;
}

double tune_threshold(const Mat& scores, const Mat& labels) {
  check_shapes(scores, labels, "tune_threshold");
  double best_threshold = 0.01;
  double best_f1 = -1.0;
  for (int i = 1; i <= 99; ++i) {
    const double threshold = static_cast<double>(i) / 100.0;
    const double f1 = micro_f1(scores, labels, threshold).micro_f1;
    if (f1 > best_f1) {  // strict: ties keep the lowest threshold
      best_f1 = f1;
      best_threshold = threshold;
    }
  }
  return best_threshold;
}

static double column_f1(const Mat& scores, const Mat& labels, int col, double threshold) {
  long long tp = 0, fp = 0, fn = 0;
  for (int r = 0; r < scores.rows(); ++r) {
    const bool pred = scores.at(r, col) >= threshold;
    const bool gold = labels.at(r, col) != 0.0;
    if (pred && gold) tp += 1;
    else if (pred) fp += 1;
    else if (gold) fn += 1;
  }
  const double p = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double r = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

std::vector<double> tune_threshold_per_code(const Mat& scores, const Mat& labels) {
  check_shapes(scores, labels, "tune_threshold_per_code");
  std::vector<double> thresholds(static_cast<size_t>(scores.cols()), 0.01);
  for (int c = 0; c < scores.cols(); ++c) {
    double best_f1 = -1.0;
    for (int i = 1; i <= 99; ++i) {
      const double threshold = static_cast<double>(i) / 100.0;
      const double f1 = column_f1(scores, labels, c, threshold);
      if (f1 > best_f1) {
        best_f1 = f1;
        thresholds[static_cast<size_t>(c)] = threshold;
      }
    }
  }
  return thresholds;
}

EvalReport micro_f1_per_code_threshold(const Mat& scores, const Mat& labels,
                                       const std::vector<double>& thresholds) {
  check_shapes(scores, labels, "micro_f1_per_code_threshold");
  if (static_cast<int>(thresholds.size()) != scores.cols()) {
    throw std::invalid_argument("micro_f1_per_code_threshold: threshold count mismatch");
  }
  // Binarize per column, then pool; reuse the pooled arithmetic via a copy
  // shifted so that a global 0.5 threshold reproduces the per-code cuts.
  Mat shifted(scores.rows(), scores.cols());
  for (int r = 0; r < scores.rows(); ++r) {
    for (int c = 0; c < scores.cols(); ++c) {
      shifted.at(r, c) = scores.at(r, c) >= thresholds[static_cast<size_t>(c)] ? 1.0 : 0.0;
    }
  }
  EvalReport report = micro_f1(shifted, labels, 0.5);
  report.threshold = 0.0;  // not a single global threshold
  return report;
}

std::string eval_report_json(const EvalReport& report) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "{\"tp\": %lld, \"fp\": %lld, \"fn\": %lld, \"tn\": %lld, "
                "\"precision\": %.9g, \"recall\": %.9g, \"micro_f1\": %.9g, "
                "\"micro_auc\": %.9g, \"threshold\": %.9g}",
                report.tp, report.fp, report.fn, report.tn, report.precision, report.recall,
                report.micro_f1, report.micro_auc, report.threshold);
  return std::string(buf);
}

void write_scores_csv(const std::string& path, const std::vector<std::string>& record_ids,
                      const std::vector<std::string>& code_strings, const Mat& scores) {
  if (static_cast<int>(record_ids.size()) != scores.rows() ||
      static_cast<int>(code_strings.size()) != scores.cols()) {
    throw std::invalid_argument("write_scores_csv: shape mismatch");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "hadm_id";
  for (const auto& code : code_strings) out << ',' << code;
  out << '\n';
  char buf[32];
  for (int r = 0; r < scores.rows(); ++r) {
    out << record_ids[static_cast<size_t>(r)];
    for (int c = 0; c < scores.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", scores.at(r, c));
      out << ',' << buf;
    }
    out << '\n';
  }
}

ScoresCsv read_scores_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  ScoresCsv result;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    std::istringstream fields(line);
    std::string field;
    bool first = true;
    while (std::getline(fields, field, ',')) {
      if (first) {
        first = false;  // hadm_id column
      } else {
        result.code_strings.push_back(field);
      }
    }
  }
  if (result.code_strings.empty()) throw DataError(path + ": no code columns");
  std::vector<double> values;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string field;
    if (!std::getline(fields, field, ',')) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": missing hadm_id");
    }
    result.record_ids.push_back(field);
    int count = 0;
    while (std::getline(fields, field, ',')) {
      try {
        values.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw DataError(path + ": line " + std::to_string(line_no) + ": bad number \"" + field +
                        "\"");
      }
      ++count;
    }
    if (count != static_cast<int>(result.code_strings.size())) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": expected " +
                      std::to_string(result.code_strings.size()) + " values, got " +
                      std::to_string(count));
    }
  }
  if (result.record_ids.empty()) throw DataError(path + ": no data rows");
  result.values = Mat(static_cast<int>(result.record_ids.size()),
                      static_cast<int>(result.code_strings.size()));
  std::copy(values.begin(), values.end(), result.values.data());
  return result;
}

}  // namespace icdattn
