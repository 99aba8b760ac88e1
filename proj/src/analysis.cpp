#include "icdattn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "icdattn/errors.hpp"
#include "icdattn/parallel.hpp"

namespace icdattn {

static double euclidean(const Vec& a, const Vec& b) {
  double sq = 0.0;
  for (int k = 0; k < a.dim(); ++k) {
    const double d = a[k] - b[k];
    sq += d * d;
  }
  return std::sqrt(sq);
}

std::vector<std::pair<std::string, double>> nearest_neighbors(
    const Model& model, const std::string& query, const std::vector<std::string>& candidates,
    bool word_level, int k) {
  if (candidates.empty()) throw UsageError("nearest_neighbors: empty candidate list");
  if (k < 1) throw UsageError("nearest_neighbors: k must be >= 1");

  auto encode = [&](const std::string& text) {
    if (word_level) return encode_word(model.desc_enc, model.char_vocab, text);
    SentenceCache cache;
    return encode_sentence(model.desc_enc, model.char_vocab, model.word_vocab, tokenize(text),
                           cache);
  };

  const Vec q = encode(query);
  std::vector<std::pair<std::string, double>> scored;
  scored.reserve(candidates.size());
  std::vector<Vec> vecs(candidates.size());
  parallel_for(static_cast<int>(candidates.size()), effective_threads(model.cfg.threads),
               [&](int i) { vecs[static_cast<size_t>(i)] = encode(candidates[static_cast<size_t>(i)]); });
  for (size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i] == query) continue;  // exact string matches are excluded
    scored.emplace_back(candidates[i], euclidean(q, vecs[i]));
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.second < b.second; });
  if (static_cast<int>(scored.size()) > k) scored.resize(static_cast<size_t>(k));
  return scored;
}

AttentionTable attention_table(const Model& model, const AdmissionRecord& record) {
  CodeEncodings codes;
  encode_code_titles(model, nullptr, effective_threads(model.cfg.threads), codes);
  RecordForward fwd;
  forward_record(model, record, codes, nullptr, -1, fwd);

  AttentionTable table;
  table.soft = model.cfg.head == Head::kSoft;
  for (const auto& def : model.codes) {
    table.row_titles.push_back(def.long_title);
    table.row_codes.push_back(def.code);
  }
  table.cells = table.soft ? fwd.weights : fwd.scores;
  table.row_max.assign(static_cast<size_t>(table.cells.rows()), 0);
  for (int i = 0; i < table.cells.rows(); ++i) {
    int best = 0;
    for (int j = 1; j < table.cells.cols(); ++j) {
      if (table.cells.at(i, j) > table.cells.at(i, best)) best = j;
    }
    table.row_max[static_cast<size_t>(i)] = best;
  }
  return table;
}

std::string render_attention_table(const AttentionTable& table, bool tsv) {
  std::ostringstream out;
  const int n = table.cells.rows();
  const int m = table.cells.cols();
  char buf[32];
  if (tsv) {
    out << "long_title";
    for (int j = 1; j <= m; ++j) out << '\t' << j;
    if (table.soft) out << "\tsum";
    out << '\n';
    for (int i = 0; i < n; ++i) {
      out << table.row_titles[static_cast<size_t>(i)];
      double sum = 0.0;
      for (int j = 0; j < m; ++j) {
        sum += table.cells.at(i, j);
        std::snprintf(buf, sizeof(buf), "%.2f", table.cells.at(i, j));
        out << '\t' << buf;
      }
      if (table.soft) {
        std::snprintf(buf, sizeof(buf), "%.2f", sum);
        out << '\t' << buf;
      }
      out << '\n';
    }
    return out.str();
  }

  if (!table.soft) out << "head: hard (raw match scores, not normalized)\n";
  size_t title_width = std::strlen("LONG TITLE OF ICD CODE");
  for (const auto& t : table.row_titles) title_width = std::max(title_width, t.size());
  out << std::left << std::setw(static_cast<int>(title_width)) << "LONG TITLE OF ICD CODE";
  for (int j = 1; j <= m; ++j) out << std::right << std::setw(8) << j;
  if (table.soft) out << std::setw(8) << "sum";
  out << '\n';
  for (int i = 0; i < n; ++i) {
    out << std::left << std::setw(static_cast<int>(title_width))
        << table.row_titles[static_cast<size_t>(i)];
    double sum = 0.0;
    for (int j = 0; j < m; ++j) {
      sum += table.cells.at(i, j);
      const bool is_max = table.row_max[static_cast<size_t>(i)] == j;
      std::snprintf(buf, sizeof(buf), is_max ? "*%.2f*" : "%.2f", table.cells.at(i, j));
      out << std::right << std::setw(8) << buf;
    }
    if (table.soft) {
      std::snprintf(buf, sizeof(buf), "%.2f", sum);
      out << std::right << std::setw(8) << buf;
    }
    out << '\n';
  }
  return out.str();
}

std::vector<AblationRow> run_ablation_suite(const TrainConfig& base, const DatasetSplit& split,
                                            const std::vector<CodeDefinition>& codes,
                                            const PretrainedVectors* pretrained,
                                            std::ostream* progress) {
  struct RowSpec {
    const char* label;
    Head head;
    EncoderVariant encoder;
  };
  const RowSpec specs[] = {
      {"Hard-selection Model", Head::kHard, EncoderVariant::kCharLstm},
      {"Soft-attention Model", Head::kSoft, EncoderVariant::kCharLstm},
      {"Replace character-level LSTM with random initialized and tunable word embedding",
       Head::kSoft, EncoderVariant::kWordEmbed},
      {"Replace character-level LSTM with pre-trained and tunable word embedding", Head::kSoft,
       EncoderVariant::kWordEmbedPretrained},
      {"Replace word-level LSTM encoder with average encoder", Head::kSoft,
       EncoderVariant::kAvgPool},
      {"Replace attention mechanism with naive linear classifier", Head::kLinear,
       EncoderVariant::kCharLstm},
  };

  std::vector<AblationRow> rows;
  for (const RowSpec& spec : specs) {
    if (spec.encoder == EncoderVariant::kWordEmbedPretrained && !pretrained) {
      throw UsageError("ablation suite needs a pretrained vector file for the pre-trained row");
    }
    TrainConfig cfg = base;  // identical split, seed, and epoch budget per row
    cfg.head = spec.head;
    cfg.encoder = spec.encoder;
    if (progress) *progress << "[ablate] " << spec.label << '\n';
    TrainResult result = train(cfg, split, codes,
                               spec.encoder == EncoderVariant::kWordEmbedPretrained ? pretrained
                                                                                    : nullptr,
                               progress);
    Mat scores = score_records(result.model, split.test, effective_threads(cfg.threads));
    Mat labels = label_matrix(result.model, split.test);
    EvalReport report = micro_f1(scores, labels, result.best_threshold);
    AblationRow row;
    row.label = spec.label;
    row.f1 = report.micro_f1;
    row.threshold = result.best_threshold;
    try {
      row.auc = micro_auc(scores, labels);
    } catch (const DataError&) {
      row.auc = std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string render_ablation_table(const std::vector<AblationRow>& rows, bool tsv) {
  std::ostringstream out;
  char buf[64];
  if (tsv) {
    out << "model_architecture\tf1\tauc_roc\tthreshold\n";
    for (const auto& row : rows) {
      std::snprintf(buf, sizeof(buf), "%.3f\t%.3f\t%.2f", row.f1, row.auc, row.threshold);
      out << row.label << '\t' << buf << '\n';
    }
    return out.str();
  }
  size_t width = std::strlen("Model Architecture");
  for (const auto& row : rows) width = std::max(width, row.label.size());
  out << std::left << std::setw(static_cast<int>(width)) << "Model Architecture"
      << std::right << std::setw(8) << "F1" << std::setw(10) << "AUC_ROC" << '\n';
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%.3f", row.f1);
    out << std::left << std::setw(static_cast<int>(width)) << row.label << std::right
        << std::setw(8) << buf;
    std::snprintf(buf, sizeof(buf), "%.3f", row.auc);
    out << std::setw(10) << buf << '\n';
  }
  return out.str();
}

}  // namespace icdattn
