#pragma once

#include <optional>
#include <string>
#include <vector>

#include "icdattn/evaluation.hpp"
#include "icdattn/matcher.hpp"

namespace icdattn {

// Mean binary cross entropy over codes, probabilities clipped to
// [1e-12, 1-1e-12] before the logs.
double bce_loss(const Vec& probs, const std::vector<std::uint8_t>& labels);

// Inverted dropout: train mode zeroes each coordinate with probability p and
// scales survivors by 1/(1-p); eval mode is the identity.
enum class DropoutMode { kTrain, kEval };
Vec apply_dropout(const Vec& h, double p, DropoutMode mode, Rng& rng);

// 0/1 label row for one record against the model's code list.
std::vector<std::uint8_t> label_vector(const Model& model, const AdmissionRecord& record);
Mat label_matrix(const Model& model, const std::vector<AdmissionRecord>& records);

// One optimizer step over a batch of records: shared code-title encodings,
// per-record forward/backward reduced in record order, Adam update. Returns
// the mean per-record loss. Bit-identical for any thread count.
double train_batch(Model& model, const std::vector<const AdmissionRecord*>& batch,
                   AdamState& adam, Rng& rng, int threads);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_f1 = 0.0;
  double val_auc = 0.0;
  double threshold = 0.5;
};

struct TrainResult {
  Model model;           // best validation micro-F1 checkpointed model
  AdamState adam;        // optimizer state at the best epoch
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_f1 = 0.0;
  double best_threshold = 0.5;
};

// Full training drive: epoch 0 logs the untrained baseline, then each epoch
// shuffles the train split, runs batches of cfg.batch_size, and evaluates
// validation micro-F1 at that epoch's tuned threshold. Keeps the best
// validation model. Deterministic given cfg.seed.
TrainResult train(const TrainConfig& cfg, const DatasetSplit& split,
                  const std::vector<CodeDefinition>& codes, const PretrainedVectors* pretrained,
                  std::ostream* progress);

std::string epoch_log_csv(const std::vector<EpochLog>& log);

// ---- checkpointing -----------------------------------------------------------

struct Checkpoint {
  Model model;
  std::optional<AdamState> adam;
  int epoch = 0;
  double best_val_f1 = 0.0;
  double threshold = 0.5;  // validation-tuned threshold of the kept model
};

// Versioned little-endian binary container with a trailing checksum.
// save(load(save(x))) is byte-identical and predictions are bit-exact across
// a round trip.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace icdattn
