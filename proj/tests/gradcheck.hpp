#pragma once

// Finite-difference gradient oracle used by the unit tests and the acceptance
// suite. Independent of the training loop: it only drives the public forward
// and backward entry points and compares against central differences.

#include <string>
#include <vector>

#include "icdattn/matcher.hpp"
#include "icdattn/training.hpp"

namespace gradtest {

using namespace icdattn;

inline double model_loss(Model& model, const std::vector<AdmissionRecord>& records,
                         const std::vector<std::vector<std::uint8_t>>& labels,
                         const DropoutMasks* masks) {
  CodeEncodings codes;
  encode_code_titles(model, masks, 1, codes);
  double total = 0.0;
  for (size_t r = 0; r < records.size(); ++r) {
    RecordForward fwd;
    forward_record(model, records[r], codes, masks, static_cast<int>(r), fwd);
    total += bce_loss(fwd.probs, labels[r]);
  }
  return total / static_cast<double>(records.size());
}

// Analytic gradients of model_loss, assembled the same way for any caller:
// per-record buffers reduced in record order, then the shared code-side pass.
inline ModelGrads analytic_grads(Model& model, const std::vector<AdmissionRecord>& records,
                                 const std::vector<std::vector<std::uint8_t>>& labels,
                                 const DropoutMasks* masks) {
  CodeEncodings codes;
  encode_code_titles(model, masks, 1, codes);
  ModelGrads grads = make_grads(model);
  Mat du(model.n_codes(), model.cfg.hidden_dim);
  const double scale = 1.0 / static_cast<double>(records.size());
  for (size_t r = 0; r < records.size(); ++r) {
    RecordForward fwd;
    forward_record(model, records[r], codes, masks, static_cast<int>(r), fwd);
    backward_record(model, records[r], codes, fwd, labels[r], scale, masks,
                    static_cast<int>(r), grads, du);
  }
  backward_codes(model, codes, du, masks, 1, grads);
  return grads;
}

struct GradCheckResult {
  double max_rel = 0.0;     // worst |analytic - fd| / max(|fd|, 1e-8)
  std::string worst;        // tensor and flat index of the worst entry
  size_t checked = 0;
};

inline GradCheckResult check_gradients(Model& model, const std::vector<AdmissionRecord>& records,
                                       const DropoutMasks* masks, double h = 1e-5) {
  std::vector<std::vector<std::uint8_t>> labels;
  labels.reserve(records.size());
  for (const auto& rec : records) labels.push_back(label_vector(model, rec));

  ModelGrads grads = analytic_grads(model, records, labels, masks);
  auto params = model_tensors(model);
  auto grad_views = grad_tensors(grads);

  GradCheckResult result;
  for (size_t t = 0; t < params.size(); ++t) {
    for (size_t i = 0; i < params[t].size; ++i) {
      double& theta = params[t].data[i];
      const double saved = theta;
      theta = saved + h;
      const double loss_hi = model_loss(model, records, labels, masks);
      theta = saved - h;
      const double loss_lo = model_loss(model, records, labels, masks);
      theta = saved;
      const double fd = (loss_hi - loss_lo) / (2.0 * h);
      const double analytic = grad_views[t].data[i];
      const double rel = std::abs(analytic - fd) / std::max(std::abs(fd), 1e-8);
      if (rel > result.max_rel) {
        result.max_rel = rel;
        result.worst = params[t].name + "[" + std::to_string(i) + "]";
      }
      result.checked += 1;
    }
  }
  return result;
}

// Deterministic masks for replayed-dropout gradient checks.
inline DropoutMasks make_masks(const Model& model, const std::vector<AdmissionRecord>& records,
                               std::uint64_t seed) {
  DropoutMasks masks;
  masks.keep = 1.0 - model.cfg.dropout;
  Rng rng(seed);
  const int d = model.cfg.hidden_dim;
  masks.code_masks.assign(static_cast<size_t>(model.n_codes()), {});
  for (auto& mask : masks.code_masks) {
    mask.resize(static_cast<size_t>(d));
    for (int k = 0; k < d; ++k) mask[static_cast<size_t>(k)] = rng.bernoulli(model.cfg.dropout) ? 0 : 1;
  }
  masks.record_masks.assign(records.size(), {});
  for (size_t r = 0; r < records.size(); ++r) {
    masks.record_masks[r].assign(records[r].descriptions.size(), {});
    for (auto& mask : masks.record_masks[r]) {
      mask.resize(static_cast<size_t>(d));
      for (int k = 0; k < d; ++k) {
        mask[static_cast<size_t>(k)] = rng.bernoulli(model.cfg.dropout) ? 0 : 1;
      }
    }
  }
  return masks;
}

// Small synthetic fixture shared by the gradient checks: builds a model plus
// records with 1, 2, and 3 descriptions over a 2-code table.
struct TinyFixture {
  std::vector<CodeDefinition> codes;
  std::vector<AdmissionRecord> records;
  TrainConfig cfg;

  explicit TinyFixture(Head head, EncoderVariant encoder, std::uint64_t seed = 7,
                       double dropout = 0.0) {
    codes = {{"4010", "Malignant essential hypertension"},
             {"5070", "Acute renal failure"}};
    records = {
        {"A", {"essential hypertension"}, {"4010"}},
        {"B", {"renal failure", "malignant hypertension"}, {"5070"}},
        {"C", {"acute failure", "hypertension", "renal insufficiency"}, {"4010", "5070"}},
    };
    cfg.hidden_dim = 8;
    cfg.char_embed_dim = 4;
    cfg.word_embed_dim = 6;
    cfg.dropout = dropout;
    cfg.head = head;
    cfg.encoder = encoder;
    cfg.seed = seed;
  }

  Model build(const PretrainedVectors* pv = nullptr) const {
    return make_model(cfg, records, codes, pv);
  }
};

}  // namespace gradtest
