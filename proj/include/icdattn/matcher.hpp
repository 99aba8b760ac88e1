#pragma once

#include <string>
#include <vector>

#include "icdattn/encoders.hpp"

namespace icdattn {

// ---- attention primitives ------------------------------------------------------

// Raw match scores: scores[i][j] = u_i . h_j (or the length-normalized value
// when cosine is set). n x m for n codes and m descriptions.
Mat attention_scores(const std::vector<Vec>& u, const std::vector<Vec>& h, bool cosine);

// Hard selection: sigmoid of the row maximum; the probability itself.
// First index wins ties; *argmax_out receives the winning column.
double hard_select(const double* score_row, int m, int* argmax_out);

// Soft attention: softmax the row, then the weighted average of description
// vectors. weights_out (size m) receives the normalized weights.
Vec soft_attend(const double* score_row, int m, const std::vector<Vec>& h, Vec* weights_out);

// Per-code linear projection of the attended vector, then sigmoid.
double project(const Mat& proj, const Vec& proj_bias, const Vec& attended, int code_index);

// ---- model -------------------------------------------------------------------------

struct Model {
  TrainConfig cfg;
  CharVocab char_vocab;
  WordVocab word_vocab;
  std::vector<CodeDefinition> codes;
  std::unordered_map<std::string, int> code_index;
  std::vector<std::vector<std::string>> code_tokens;  // cached tokenized titles
  EncoderStack desc_enc;
  EncoderStack code_enc;
  Mat proj;       // n x H, soft head
  Vec proj_bias;  // n, only when cfg.proj_bias
  Mat baseline;   // n x 2H, linear (no-attention) head

  int n_codes() const { return static_cast<int>(codes.size()); }
};

// Builds vocabularies from the training records + code table, allocates both
// encoder stacks and the head parameters, and initializes weights from the
// seeded rng. Pretrained vectors (optional) reseed the description- and
// code-side word embeddings.
Model make_model(const TrainConfig& cfg, const std::vector<AdmissionRecord>& train_records,
                 const std::vector<CodeDefinition>& codes, const PretrainedVectors* pretrained);

// Fixed, documented enumeration of every trainable tensor. Gradient and Adam
// bookkeeping rely on this order being identical for model and grads.
std::vector<TensorView> model_tensors(Model& model);

struct ModelGrads {
  StackGrads desc, code;
  Mat proj;
  Vec proj_bias;
  Mat baseline;
};

ModelGrads make_grads(const Model& model);
void zero_grads(ModelGrads& g);
void accumulate_grads(ModelGrads& dst, const ModelGrads& src);
std::vector<TensorView> grad_tensors(ModelGrads& g);

// ---- forward / backward ---------------------------------------------------------

// Inverted-dropout masks for one training step: one mask per code title and
// one per description of every record, all drawn up front so parallel workers
// never touch the rng.
struct DropoutMasks {
  double keep = 1.0;                                       // 1 - dropout_p
  std::vector<std::vector<std::uint8_t>> code_masks;       // n x H
  std::vector<std::vector<std::vector<std::uint8_t>>> record_masks;  // per record x desc x H
};

// Code-title encodings, computed once per parameter update and shared by
// every record in the batch. Invalidate (re-encode) after each optimizer step.
struct CodeEncodings {
  std::vector<SentenceCache> caches;
  std::vector<Vec> u_raw;  // pre-dropout
  std::vector<Vec> u;      // post-dropout (== u_raw in eval mode)
};

// record_index < 0 selects eval mode (no dropout) even when masks is non-null.
void encode_code_titles(const Model& model, const DropoutMasks* masks, int threads,
                        CodeEncodings& out);

struct RecordForward {
  std::vector<SentenceCache> caches;
  std::vector<Vec> h_raw;       // pre-dropout description vectors
  std::vector<Vec> h;           // post-dropout
  Mat scores;                   // n x m
  Mat weights;                  // n x m, soft head
  std::vector<int> argmax;      // n, hard head
  std::vector<Vec> attended;    // n, soft head
  Vec mean_h;                   // linear head
  Vec logits;                   // n
  Vec probs;                    // n
};

// Forward pass for one record against the shared code encodings. masks may be
// null (eval mode); record_index selects this record's masks.
void forward_record(const Model& model, const AdmissionRecord& record, const CodeEncodings& codes,
                    const DropoutMasks* masks, int record_index, RecordForward& out);

// Eval-mode convenience: encodes code titles on the fly. probs[i] in (0,1).
Vec predict(const Model& model, const AdmissionRecord& record);

// Eval-mode scores for a whole dataset; rows align with `records`, columns
// with model.codes. Parallel over records.
Mat score_records(const Model& model, const std::vector<AdmissionRecord>& records, int threads);

// Gradients of the (scaled) per-record loss. Description-side and head
// parameters accumulate into `grads`; the gradient w.r.t. each post-dropout
// code vector accumulates into du (n x H) for the shared code-side backward.
void backward_record(const Model& model, const AdmissionRecord& record, const CodeEncodings& codes,
                     const RecordForward& fwd, const std::vector<std::uint8_t>& labels,
                     double scale, const DropoutMasks* masks, int record_index, ModelGrads& grads,
                     Mat& du);

// Backward through the code-title encoders given the summed du. Parallel over
// codes in fixed-order chunks so the result is identical for any thread count.
void backward_codes(const Model& model, const CodeEncodings& codes, const Mat& du,
                    const DropoutMasks* masks, int threads, ModelGrads& grads);

}  // namespace icdattn
