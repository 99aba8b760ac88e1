#include "icdattn/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "icdattn/errors.hpp"
#include "icdattn/parallel.hpp"

namespace icdattn {

static constexpr double kProbClipLo = 1e-12;
static constexpr double kProbClipHi = 1.0 - 1e-12;

// ---- attention primitives ------------------------------------------------------

Mat attention_scores(const std::vector<Vec>& u, const std::vector<Vec>& h, bool cosine) {
  const int n = static_cast<int>(u.size());
  const int m = static_cast<int>(h.size());
  if (n == 0 || m == 0) throw std::invalid_argument("attention_scores: empty inputs");
  const int d = u[0].dim();
  for (const auto& v : h) {
    if (v.dim() != d) throw std::invalid_argument("attention_scores: dim mismatch");
  }
  Mat scores(n, m);
  for (int i = 0; i < n; ++i) {
    const double nu = cosine ? norm2(u[static_cast<size_t>(i)]) : 1.0;
    for (int j = 0; j < m; ++j) {
      double s = dot(u[static_cast<size_t>(i)], h[static_cast<size_t>(j)]);
      if (cosine) {
        const double nh = norm2(h[static_cast<size_t>(j)]);
        s = (nu > 0.0 && nh > 0.0) ? s / (nu * nh) : 0.0;
      }
      scores.at(i, j) = s;
    }
  }
  return scores;
}

double hard_select(const double* score_row, int m, int* argmax_out) {
  if (m < 1) throw std::invalid_argument("hard_select: empty score row");
  int best = 0;
  for (int j = 1; j < m; ++j) {
    if (score_row[j] > score_row[best]) best = j;  // first index wins ties
  }
  if (argmax_out) *argmax_out = best;
  return sigmoid(score_row[best]);
}

Vec soft_attend(const double* score_row, int m, const std::vector<Vec>& h, Vec* weights_out) {
  if (m < 1 || h.empty()) throw std::invalid_argument("soft_attend: empty inputs");
  Vec w(m);
  std::copy(score_row, score_row + m, w.data());
  softmax_inplace(w.data(), m);
  Vec attended(h[0].dim(), 0.0);
  for (int j = 0; j < m; ++j) axpy(w[j], h[static_cast<size_t>(j)], attended);
  if (weights_out) *weights_out = std::move(w);
  return attended;
}

double project(const Mat& proj, const Vec& proj_bias, const Vec& attended, int code_index) {
  if (code_index < 0 || code_index >= proj.rows()) {
    throw std::invalid_argument("project: code index out of range");
  }
  double s = dot(proj.row(code_index), attended.data(), attended.dim());
  if (!proj_bias.empty()) s += proj_bias[code_index];
  return sigmoid(s);
}

// ---- model assembly -----------------------------------------------------------------

Model make_model(const TrainConfig& cfg, const std::vector<AdmissionRecord>& train_records,
                 const std::vector<CodeDefinition>& codes, const PretrainedVectors* pretrained) {
  if (codes.empty()) throw DataError("make_model: empty code table");
  if (cfg.hidden_dim < 1 || cfg.char_embed_dim < 1 || cfg.word_embed_dim < 1) {
    throw UsageError("make_model: dimensions must be positive");
  }
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) {
    throw UsageError("make_model: dropout must be in [0,1)");
  }
  Model model;
  model.cfg = cfg;
  if (cfg.encoder == EncoderVariant::kWordEmbedPretrained) {
    if (!pretrained) throw UsageError("pretrained encoder variant requires a vector file");
    model.cfg.word_embed_dim = pretrained->dim;
  }
  model.char_vocab = build_char_vocab(train_records, codes);
  model.word_vocab = build_word_vocab(train_records, codes);
  model.codes = codes;
  model.code_tokens.reserve(codes.size());
  for (size_t i = 0; i < codes.size(); ++i) {
    auto toks = tokenize(codes[i].long_title);
    if (toks.empty()) throw DataError("code " + codes[i].code + " has an empty long title");
    model.code_tokens.push_back(std::move(toks));
    model.code_index[codes[i].code] = static_cast<int>(i);
  }

  const int n = model.n_codes();
  model.desc_enc = make_encoder_stack(cfg.encoder, model.char_vocab.size(),
                                      model.word_vocab.size(), cfg.char_embed_dim,
                                      model.cfg.word_embed_dim, cfg.hidden_dim);
  model.code_enc = make_encoder_stack(cfg.encoder, model.char_vocab.size(),
                                      model.word_vocab.size(), cfg.char_embed_dim,
                                      model.cfg.word_embed_dim, cfg.hidden_dim);

  Rng rng(cfg.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
  init_encoder_stack(model.desc_enc, cfg.hidden_dim, rng);
  init_encoder_stack(model.code_enc, cfg.hidden_dim, rng);
  if (cfg.head == Head::kHard || cfg.head == Head::kSoft) {
    model.proj = Mat(n, cfg.hidden_dim);
    for (size_t i = 0; i < model.proj.size(); ++i) {
      model.proj.data()[i] = rng.uniform(-bound, bound);
    }
    if (cfg.proj_bias) model.proj_bias = Vec(n, 0.0);
  }
  if (cfg.head == Head::kLinear) {
    model.baseline = Mat(n, 2 * cfg.hidden_dim);
    for (size_t i = 0; i < model.baseline.size(); ++i) {
      model.baseline.data()[i] = rng.uniform(-bound, bound);
    }
  }
  if (pretrained) {
    seed_word_embeddings(model.desc_enc, model.word_vocab, *pretrained);
    seed_word_embeddings(model.code_enc, model.word_vocab, *pretrained);
  }
  return model;
}

// Tensor enumeration order is part of the checkpoint format; keep it stable.
template <class StackT, class PushFn>
static void stack_tensors(const std::string& prefix, StackT& stack, PushFn&& push) {
  push(prefix + ".char_embed", stack.char_embed);
  push(prefix + ".char_lstm.wx", stack.char_lstm.wx);
  push(prefix + ".char_lstm.wh", stack.char_lstm.wh);
  push(prefix + ".char_lstm.bx", stack.char_lstm.bx);
  push(prefix + ".char_lstm.bh", stack.char_lstm.bh);
  push(prefix + ".word_embed", stack.word_embed);
  push(prefix + ".word_lstm.wx", stack.word_lstm.wx);
  push(prefix + ".word_lstm.wh", stack.word_lstm.wh);
  push(prefix + ".word_lstm.bx", stack.word_lstm.bx);
  push(prefix + ".word_lstm.bh", stack.word_lstm.bh);
}

template <class ModelT>
static std::vector<TensorView> tensors_impl(ModelT& m) {
  std::vector<TensorView> views;
  auto push_mat = [&](const std::string& name, Mat& t) {
    if (!t.empty()) views.push_back({name, t.data(), t.size()});
  };
  auto push_any = [&](const std::string& name, auto& t) {
    if (!t.empty()) {
      views.push_back({name, t.data(), static_cast<size_t>([&] {
                         if constexpr (std::is_same_v<std::decay_t<decltype(t)>, Vec>) {
                           return t.dim();
                         } else {
                           return static_cast<int>(t.size());
                         }
                       }())});
    }
  };
  stack_tensors("desc", m.desc, push_any);
  stack_tensors("code", m.code, push_any);
  push_mat("proj", m.proj);
  if (!m.proj_bias.empty()) {
    views.push_back({"proj_bias", m.proj_bias.data(), static_cast<size_t>(m.proj_bias.dim())});
  }
  push_mat("baseline", m.baseline);
  return views;
}

// Adapter so model and grads share the enumeration template.
namespace {
struct ModelTensorsAdapter {
  EncoderStack& desc;
  EncoderStack& code;
  Mat& proj;
  Vec& proj_bias;
  Mat& baseline;
};
}  // namespace

std::vector<TensorView> model_tensors(Model& model) {
  ModelTensorsAdapter a{model.desc_enc, model.code_enc, model.proj, model.proj_bias,
                        model.baseline};
  return tensors_impl(a);
}

ModelGrads make_grads(const Model& model) {
  ModelGrads g;
  g.desc = make_stack_grads(model.desc_enc);
  g.code = make_stack_grads(model.code_enc);
  g.proj = Mat(model.proj.rows(), model.proj.cols());
  g.proj_bias = Vec(model.proj_bias.dim());
  g.baseline = Mat(model.baseline.rows(), model.baseline.cols());
  return g;
}

std::vector<TensorView> grad_tensors(ModelGrads& g) { return tensors_impl(g); }

void zero_grads(ModelGrads& g) {
  for (auto& view : grad_tensors(g)) std::fill(view.data, view.data + view.size, 0.0);
}

void accumulate_grads(ModelGrads& dst, const ModelGrads& src) {
  auto dst_views = grad_tensors(dst);
  auto src_views = grad_tensors(const_cast<ModelGrads&>(src));
  if (dst_views.size() != src_views.size()) {
    throw std::logic_error("accumulate_grads: layout mismatch");
  }
  for (size_t k = 0; k < dst_views.size(); ++k) {
    if (dst_views[k].size != src_views[k].size) {
      throw std::logic_error("accumulate_grads: shape mismatch in " + dst_views[k].name);
    }
    double* d = dst_views[k].data;
    const double* s = src_views[k].data;
    for (size_t i = 0; i < dst_views[k].size; ++i) d[i] += s[i];
  }
}

// ---- forward -------------------------------------------------------------------------

static void apply_mask(const Vec& raw, const std::vector<std::uint8_t>& mask, double keep,
                       Vec& out) {
  out.assign(raw.dim(), 0.0);
  for (int k = 0; k < raw.dim(); ++k) {
    if (mask[static_cast<size_t>(k)]) out[k] = raw[k] / keep;
  }
}

void encode_code_titles(const Model& model, const DropoutMasks* masks, int threads,
                        CodeEncodings& out) {
  const int n = model.n_codes();
  out.caches.assign(static_cast<size_t>(n), SentenceCache{});
  out.u_raw.assign(static_cast<size_t>(n), Vec());
  out.u.assign(static_cast<size_t>(n), Vec());
  parallel_for(n, threads, [&](int i) {
    out.u_raw[static_cast<size_t>(i)] =
        encode_sentence(model.code_enc, model.char_vocab, model.word_vocab,
                        model.code_tokens[static_cast<size_t>(i)], out.caches[static_cast<size_t>(i)]);
    if (masks) {
      apply_mask(out.u_raw[static_cast<size_t>(i)], masks->code_masks[static_cast<size_t>(i)],
                 masks->keep, out.u[static_cast<size_t>(i)]);
    } else {
      out.u[static_cast<size_t>(i)] = out.u_raw[static_cast<size_t>(i)];
    }
  });
}

void forward_record(const Model& model, const AdmissionRecord& record, const CodeEncodings& codes,
                    const DropoutMasks* masks, int record_index, RecordForward& out) {
  const int m = static_cast<int>(record.descriptions.size());
  if (m < 1) throw DataError("record " + record.hadm_id + " has no descriptions");
  const int n = model.n_codes();

  out.caches.assign(static_cast<size_t>(m), SentenceCache{});
  out.h_raw.assign(static_cast<size_t>(m), Vec());
  out.h.assign(static_cast<size_t>(m), Vec());
  for (int j = 0; j < m; ++j) {
    out.h_raw[static_cast<size_t>(j)] =
        encode_sentence(model.desc_enc, model.char_vocab, model.word_vocab,
                        tokenize(record.descriptions[static_cast<size_t>(j)]),
                        out.caches[static_cast<size_t>(j)]);
    if (masks) {
      apply_mask(out.h_raw[static_cast<size_t>(j)],
                 masks->record_masks[static_cast<size_t>(record_index)][static_cast<size_t>(j)],
                 masks->keep, out.h[static_cast<size_t>(j)]);
    } else {
      out.h[static_cast<size_t>(j)] = out.h_raw[static_cast<size_t>(j)];
    }
  }

  out.scores = attention_scores(codes.u, out.h, model.cfg.score_cosine);
  out.logits.assign(n, 0.0);
  out.probs.assign(n, 0.0);
  switch (model.cfg.head) {
    case Head::kHard: {
      out.argmax.assign(static_cast<size_t>(n), 0);
      for (int i = 0; i < n; ++i) {
        out.probs[i] = hard_select(out.scores.row(i), m, &out.argmax[static_cast<size_t>(i)]);
        out.logits[i] = out.scores.at(i, out.argmax[static_cast<size_t>(i)]);
      }
      break;
    }
    case Head::kSoft: {
      out.weights = Mat(n, m);
      out.attended.assign(static_cast<size_t>(n), Vec());
      for (int i = 0; i < n; ++i) {
        Vec wrow;
        out.attended[static_cast<size_t>(i)] = soft_attend(out.scores.row(i), m, out.h, &wrow);
        std::copy(wrow.data(), wrow.data() + m, out.weights.row(i));
        double s = dot(model.proj.row(i), out.attended[static_cast<size_t>(i)].data(),
                       model.cfg.hidden_dim);
        if (!model.proj_bias.empty()) s += model.proj_bias[i];
        out.logits[i] = s;
        out.probs[i] = sigmoid(s);
      }
      break;
    }
    case Head::kLinear: {
      const int d = model.cfg.hidden_dim;
      out.mean_h.assign(d, 0.0);
      for (const auto& hj : out.h) axpy(1.0 / static_cast<double>(m), hj, out.mean_h);
      for (int i = 0; i < n; ++i) {
        const double* w = model.baseline.row(i);
        double s = dot(w, codes.u[static_cast<size_t>(i)].data(), d) +
                   dot(w + d, out.mean_h.data(), d);
        out.logits[i] = s;
        out.probs[i] = sigmoid(s);
      }
      break;
    }
  }
}

Vec predict(const Model& model, const AdmissionRecord& record) {
  CodeEncodings codes;
  encode_code_titles(model, nullptr, 1, codes);
  RecordForward fwd;
  forward_record(model, record, codes, nullptr, -1, fwd);
  return fwd.probs;
}

Mat score_records(const Model& model, const std::vector<AdmissionRecord>& records, int threads) {
  CodeEncodings codes;
  encode_code_titles(model, nullptr, threads, codes);
  Mat scores(static_cast<int>(records.size()), model.n_codes());
  parallel_for(static_cast<int>(records.size()), threads, [&](int r) {
    RecordForward fwd;
    forward_record(model, records[static_cast<size_t>(r)], codes, nullptr, -1, fwd);
    std::copy(fwd.probs.data(), fwd.probs.data() + fwd.probs.dim(), scores.row(r));
  });
  return scores;
}

// ---- backward -------------------------------------------------------------------------

// d(loss)/d(logit_i) for the clipped mean BCE; zero where the clip is active.
static double logit_grad(double p, std::uint8_t t, int n, double scale) {
  if (p < kProbClipLo || p > kProbClipHi) return 0.0;
  return scale * (p - static_cast<double>(t)) / static_cast<double>(n);
}

// Gradient of the (possibly cosine-normalized) score w.r.t. its two vectors.
static void score_backward(const Model& model, const RecordForward& fwd, const CodeEncodings& codes,
                           int i, int j, double da, Vec& du_row, std::vector<Vec>& dh) {
  const Vec& u = codes.u[static_cast<size_t>(i)];
  const Vec& h = fwd.h[static_cast<size_t>(j)];
  if (!model.cfg.score_cosine) {
    axpy(da, h, du_row);
    axpy(da, u, dh[static_cast<size_t>(j)]);
    return;
  }
  const double nu = norm2(u);
  const double nh = norm2(h);
  if (nu == 0.0 || nh == 0.0) return;  // forward defined the score as 0
  const double a = fwd.scores.at(i, j);
  const double inv = 1.0 / (nu * nh);
  axpy(da * inv, h, du_row);
  axpy(-da * a / (nu * nu), u, du_row);
  axpy(da * inv, u, dh[static_cast<size_t>(j)]);
  axpy(-da * a / (nh * nh), h, dh[static_cast<size_t>(j)]);
}

void backward_record(const Model& model, const AdmissionRecord& record, const CodeEncodings& codes,
                     const RecordForward& fwd, const std::vector<std::uint8_t>& labels,
                     double scale, const DropoutMasks* masks, int record_index, ModelGrads& grads,
                     Mat& du) {
  const int n = model.n_codes();
  const int m = static_cast<int>(fwd.h.size());
  const int d = model.cfg.hidden_dim;
  if (static_cast<int>(labels.size()) != n) {
    throw std::invalid_argument("backward_record: label dim mismatch");
  }
  if (fwd.probs.dim() != n) throw std::logic_error("backward_record: missing forward cache");

  std::vector<Vec> dh(static_cast<size_t>(m), Vec(d, 0.0));
  Vec du_row(d);

  switch (model.cfg.head) {
    case Head::kHard: {
      for (int i = 0; i < n; ++i) {
        const double g = logit_grad(fwd.probs[i], labels[static_cast<size_t>(i)], n, scale);
        if (g == 0.0) continue;
        du_row.assign(d, 0.0);
        score_backward(model, fwd, codes, i, fwd.argmax[static_cast<size_t>(i)], g, du_row, dh);
        for (int k = 0; k < d; ++k) du.at(i, k) += du_row[k];
      }
      break;
    }
    case Head::kSoft: {
      Vec d_attended(d);
      Vec dweights(m);
      for (int i = 0; i < n; ++i) {
        const double g = logit_grad(fwd.probs[i], labels[static_cast<size_t>(i)], n, scale);
        const Vec& attended = fwd.attended[static_cast<size_t>(i)];
        // projection head
        if (g != 0.0) {
          double* proj_grad = grads.proj.row(i);
          const double* att = attended.data();
          for (int k = 0; k < d; ++k) proj_grad[k] += g * att[k];
          if (!grads.proj_bias.empty()) grads.proj_bias[i] += g;
        }
        {
          const double* w = model.proj.row(i);
          for (int k = 0; k < d; ++k) d_attended[k] = g * w[k];
        }
        // through the weighted average: direct h path and softmax score path
        const double* weights = fwd.weights.row(i);
        double weighted_sum = 0.0;
        for (int j = 0; j < m; ++j) {
          dweights[j] = dot(d_attended.data(), fwd.h[static_cast<size_t>(j)].data(), d);
          weighted_sum += weights[j] * dweights[j];
        }
        du_row.assign(d, 0.0);
        for (int j = 0; j < m; ++j) {
          axpy(weights[j], d_attended, dh[static_cast<size_t>(j)]);
          const double da = weights[j] * (dweights[j] - weighted_sum);
          if (da != 0.0) score_backward(model, fwd, codes, i, j, da, du_row, dh);
        }
        for (int k = 0; k < d; ++k) du.at(i, k) += du_row[k];
      }
      break;
    }
    case Head::kLinear: {
      Vec dmean(d, 0.0);
      for (int i = 0; i < n; ++i) {
        const double g = logit_grad(fwd.probs[i], labels[static_cast<size_t>(i)], n, scale);
        if (g == 0.0) continue;
        double* w_grad = grads.baseline.row(i);
        const double* w = model.baseline.row(i);
        const double* u = codes.u[static_cast<size_t>(i)].data();
        const double* mean = fwd.mean_h.data();
        for (int k = 0; k < d; ++k) {
          w_grad[k] += g * u[k];
          w_grad[d + k] += g * mean[k];
          du.at(i, k) += g * w[k];
          dmean[k] += g * w[d + k];
        }
      }
      for (int j = 0; j < m; ++j) {
        axpy(1.0 / static_cast<double>(m), dmean, dh[static_cast<size_t>(j)]);
      }
      break;
    }
  }

  // through description-side dropout and the description encoders
  Vec d_raw(d);
  for (int j = 0; j < m; ++j) {
    const Vec& grad_post = dh[static_cast<size_t>(j)];
    if (masks) {
      const auto& mask =
          masks->record_masks[static_cast<size_t>(record_index)][static_cast<size_t>(j)];
      d_raw.assign(d, 0.0);
      for (int k = 0; k < d; ++k) {
        if (mask[static_cast<size_t>(k)]) d_raw[k] = grad_post[k] / masks->keep;
      }
      sentence_backward(model.desc_enc, fwd.caches[static_cast<size_t>(j)], d_raw, grads.desc);
    } else {
      sentence_backward(model.desc_enc, fwd.caches[static_cast<size_t>(j)], grad_post, grads.desc);
    }
  }
  (void)record;
}

void backward_codes(const Model& model, const CodeEncodings& codes, const Mat& du,
                    const DropoutMasks* masks, int threads, ModelGrads& grads) {
  const int n = model.n_codes();
  const int d = model.cfg.hidden_dim;
  if (du.rows() != n || du.cols() != d) throw std::logic_error("backward_codes: du shape");

  // Per-code buffers merged in ascending code order, so the accumulated bits
  // never depend on the thread count or chunk size.
  constexpr int kChunk = 16;
  std::vector<StackGrads> buffers;
  for (int base = 0; base < n; base += kChunk) {
    const int count = std::min(kChunk, n - base);
    buffers.assign(static_cast<size_t>(count), StackGrads{});
    parallel_for(count, threads, [&](int c) {
      const int i = base + c;
      buffers[static_cast<size_t>(c)] = make_stack_grads(model.code_enc);
      Vec d_u(d, 0.0);
      if (masks) {
        const auto& mask = masks->code_masks[static_cast<size_t>(i)];
        for (int k = 0; k < d; ++k) {
          if (mask[static_cast<size_t>(k)]) d_u[k] = du.at(i, k) / masks->keep;
        }
      } else {
        std::copy(du.row(i), du.row(i) + d, d_u.data());
      }
      sentence_backward(model.code_enc, codes.caches[static_cast<size_t>(i)], d_u,
                        buffers[static_cast<size_t>(c)]);
    });
    for (int c = 0; c < count; ++c) {
      const StackGrads& src = buffers[static_cast<size_t>(c)];
      auto add_mat = [](Mat& dst, const Mat& s) {
        for (size_t k = 0; k < dst.size(); ++k) dst.data()[k] += s.data()[k];
      };
      auto add_vec = [](Vec& dst, const Vec& s) {
        for (int k = 0; k < dst.dim(); ++k) dst[k] += s[k];
      };
      add_mat(grads.code.char_embed, src.char_embed);
      add_mat(grads.code.word_embed, src.word_embed);
      if (!src.char_lstm.wx.empty()) {
        add_mat(grads.code.char_lstm.wx, src.char_lstm.wx);
        add_mat(grads.code.char_lstm.wh, src.char_lstm.wh);
        add_vec(grads.code.char_lstm.bx, src.char_lstm.bx);
        add_vec(grads.code.char_lstm.bh, src.char_lstm.bh);
      }
      if (!src.word_lstm.wx.empty()) {
        add_mat(grads.code.word_lstm.wx, src.word_lstm.wx);
        add_mat(grads.code.word_lstm.wh, src.word_lstm.wh);
        add_vec(grads.code.word_lstm.bx, src.word_lstm.bx);
        add_vec(grads.code.word_lstm.bh, src.word_lstm.bh);
      }
    }
  }
}

}  // namespace icdattn
