#pragma once

#include <string>
#include <vector>

#include "icdattn/training.hpp"

namespace icdattn {

// k nearest candidates to the query by Euclidean distance in the encoder's
// hidden space. word_level encodes single tokens through the char-level LSTM;
// sentence level tokenizes and encodes through the description-side stack.
// Candidates equal to the query string are excluded.
std::vector<std::pair<std::string, double>> nearest_neighbors(
    const Model& model, const std::string& query, const std::vector<std::string>& candidates,
    bool word_level, int k);

struct AttentionTable {
  bool soft = true;                     // false: hard head, cells are raw scores
  std::vector<std::string> row_titles;  // code long titles
  std::vector<std::string> row_codes;
  Mat cells;                            // n x m
  std::vector<int> row_max;             // argmax column per row
};

// Attention allocation of one record: soft weights (rows sum to 1) or raw
// scores with a mode marker for the hard head.
AttentionTable attention_table(const Model& model, const AdmissionRecord& record);

// Aligned text (row max wrapped in *asterisks*, trailing row-sum column) or
// plain TSV.
std::string render_attention_table(const AttentionTable& table, bool tsv);

struct AblationRow {
  std::string label;
  double f1 = 0.0;
  double auc = 0.0;
  double threshold = 0.5;
};

// Trains and evaluates the six architecture rows (hard selection, full soft
// attention, random word embedding, pretrained word embedding, average
// encoder, no-attention linear classifier) under one seed, one split, and one
// epoch budget, reporting test-set micro-F1 and micro-AUC at the
// validation-tuned threshold.
std::vector<AblationRow> run_ablation_suite(const TrainConfig& base, const DatasetSplit& split,
                                            const std::vector<CodeDefinition>& codes,
                                            const PretrainedVectors* pretrained,
                                            std::ostream* progress);

std::string render_ablation_table(const std::vector<AblationRow>& rows, bool tsv);

}  // namespace icdattn
