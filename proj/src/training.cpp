#include "icdattn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "icdattn/errors.hpp"
#include "icdattn/parallel.hpp"

namespace icdattn {

static constexpr double kProbClipLo = 1e-12;
static constexpr double kProbClipHi = 1.0 - 1e-12;

double bce_loss(const Vec& probs, const std::vector<std::uint8_t>& labels) {
  const int n = probs.dim();
  if (static_cast<int>(labels.size()) != n || n == 0) {
    throw std::invalid_argument("bce_loss: dim mismatch");
  }
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double p = std::clamp(probs[i], kProbClipLo, kProbClipHi);
    if (labels[static_cast<size_t>(i)]) {
      loss -= std::log(p);
    } else {
      loss -= std::log(1.0 - p);
    }
  }
  return loss / static_cast<double>(n);
}

Vec apply_dropout(const Vec& h, double p, DropoutMode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw UsageError("apply_dropout: p must be in [0,1)");
  if (mode == DropoutMode::kEval || p == 0.0) return h;
  Vec out(h.dim(), 0.0);
  const double keep = 1.0 - p;
  for (int k = 0; k < h.dim(); ++k) {
    if (!rng.bernoulli(p)) out[k] = h[k] / keep;
  }
  return out;
}

std::vector<std::uint8_t> label_vector(const Model& model, const AdmissionRecord& record) {
  std::vector<std::uint8_t> labels(static_cast<size_t>(model.n_codes()), 0);
  for (const auto& code : record.codes) {
    auto it = model.code_index.find(code);
    if (it != model.code_index.end()) labels[static_cast<size_t>(it->second)] = 1;
  }
  return labels;
}

Mat label_matrix(const Model& model, const std::vector<AdmissionRecord>& records) {
  Mat labels(static_cast<int>(records.size()), model.n_codes());
  for (size_t r = 0; r < records.size(); ++r) {
    auto row = label_vector(model, records[r]);
    for (int i = 0; i < model.n_codes(); ++i) {
      labels.at(static_cast<int>(r), i) = static_cast<double>(row[static_cast<size_t>(i)]);
    }
  }
  return labels;
}

// Masks are drawn serially, in a fixed order, before any parallel work.
static DropoutMasks draw_masks(const Model& model,
                               const std::vector<const AdmissionRecord*>& batch, Rng& rng) {
  DropoutMasks masks;
  const double p = model.cfg.dropout;
  masks.keep = 1.0 - p;
  const int d = model.cfg.hidden_dim;
  masks.code_masks.assign(static_cast<size_t>(model.n_codes()), {});
  for (auto& mask : masks.code_masks) {
    mask.resize(static_cast<size_t>(d));
    for (int k = 0; k < d; ++k) mask[static_cast<size_t>(k)] = rng.bernoulli(p) ? 0 : 1;
  }
  masks.record_masks.assign(batch.size(), {});
  for (size_t r = 0; r < batch.size(); ++r) {
    masks.record_masks[r].assign(batch[r]->descriptions.size(), {});
    for (auto& mask : masks.record_masks[r]) {
      mask.resize(static_cast<size_t>(d));
      for (int k = 0; k < d; ++k) mask[static_cast<size_t>(k)] = rng.bernoulli(p) ? 0 : 1;
    }
  }
  return masks;
}

static void clip_gradients(ModelGrads& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (auto& view : grad_tensors(grads)) {
    for (size_t i = 0; i < view.size; ++i) sq += view.data[i] * view.data[i];
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (auto& view : grad_tensors(grads)) {
    for (size_t i = 0; i < view.size; ++i) view.data[i] *= scale;
  }
}

double train_batch(Model& model, const std::vector<const AdmissionRecord*>& batch,
                   AdamState& adam, Rng& rng, int threads) {
  if (batch.empty()) throw std::invalid_argument("train_batch: empty batch");
  const int B = static_cast<int>(batch.size());
  const int n = model.n_codes();
  const int d = model.cfg.hidden_dim;
  const bool use_dropout = model.cfg.dropout > 0.0;

  DropoutMasks masks;
  if (use_dropout) masks = draw_masks(model, batch, rng);
  const DropoutMasks* mask_ptr = use_dropout ? &masks : nullptr;

  CodeEncodings codes;
  encode_code_titles(model, mask_ptr, threads, codes);

  // Per-record gradient buffers, reduced in record order afterwards; the
  // result is the same for any thread count.
  std::vector<ModelGrads> buffers(static_cast<size_t>(B));
  std::vector<Mat> du(static_cast<size_t>(B));
  std::vector<double> losses(static_cast<size_t>(B), 0.0);
  const double scale = 1.0 / static_cast<double>(B);
  parallel_for(B, threads, [&](int r) {
    buffers[static_cast<size_t>(r)] = make_grads(model);
    du[static_cast<size_t>(r)] = Mat(n, d);
    RecordForward fwd;
    const AdmissionRecord& record = *batch[static_cast<size_t>(r)];
    forward_record(model, record, codes, mask_ptr, r, fwd);
    const auto labels = label_vector(model, record);
    losses[static_cast<size_t>(r)] = bce_loss(fwd.probs, labels);
    backward_record(model, record, codes, fwd, labels, scale, mask_ptr, r,
                    buffers[static_cast<size_t>(r)], du[static_cast<size_t>(r)]);
  });

  ModelGrads grads = make_grads(model);
  Mat du_total(n, d);
  for (int r = 0; r < B; ++r) {
    accumulate_grads(grads, buffers[static_cast<size_t>(r)]);
    for (size_t k = 0; k < du_total.size(); ++k) {
      du_total.data()[k] += du[static_cast<size_t>(r)].data()[k];
    }
  }
  backward_codes(model, codes, du_total, mask_ptr, threads, grads);
  clip_gradients(grads, model.cfg.max_grad_norm);

  auto params = model_tensors(model);
  auto grad_views = grad_tensors(grads);
  adam_step(params, grad_views, adam);

  double mean_loss = 0.0;
  for (double l : losses) mean_loss += l;
  return mean_loss / static_cast<double>(B);
}

// Mean eval-mode loss over a record set.
static double mean_eval_loss(const Model& model, const std::vector<AdmissionRecord>& records,
                             int threads) {
  CodeEncodings codes;
  encode_code_titles(model, nullptr, threads, codes);
  std::vector<double> losses(records.size(), 0.0);
  parallel_for(static_cast<int>(records.size()), threads, [&](int r) {
    RecordForward fwd;
    forward_record(model, records[static_cast<size_t>(r)], codes, nullptr, -1, fwd);
    losses[static_cast<size_t>(r)] =
        bce_loss(fwd.probs, label_vector(model, records[static_cast<size_t>(r)]));
  });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return records.empty() ? 0.0 : sum / static_cast<double>(records.size());
}

TrainResult train(const TrainConfig& cfg, const DatasetSplit& split,
                  const std::vector<CodeDefinition>& codes, const PretrainedVectors* pretrained,
                  std::ostream* progress) {
  if (split.train.empty()) throw DataError("train: empty training split");
  if (cfg.batch_size < 1) throw UsageError("train: batch size must be >= 1");
  if (cfg.epochs < 0) throw UsageError("train: negative epoch count");
  const int threads = effective_threads(cfg.threads);

  TrainResult result;
  result.model = make_model(cfg, split.train, codes, pretrained);
  result.adam = make_adam_state(model_tensors(result.model), cfg.lr);

  Model model = result.model;
  AdamState adam = result.adam;

  // Training stream is separate from the init stream but derived from the seed.
  Rng rng(cfg.seed + 0x9e3779b97f4a7c15ULL);

  const Mat val_labels = label_matrix(model, split.validation);
  const bool has_val = !split.validation.empty();

  auto validate = [&](EpochLog& row) {
    if (!has_val) return;
    Mat scores = score_records(model, split.validation, threads);
    row.threshold = tune_threshold(scores, val_labels);
    row.val_f1 = micro_f1(scores, val_labels, row.threshold).micro_f1;
    try {
      row.val_auc = micro_auc(scores, val_labels);
    } catch (const DataError&) {
      row.val_auc = std::numeric_limits<double>::quiet_NaN();
    }
  };

  EpochLog init_row;
  init_row.epoch = 0;
  init_row.train_loss = mean_eval_loss(model, split.train, threads);
  validate(init_row);
  result.log.push_back(init_row);
  result.best_epoch = 0;
  result.best_val_f1 = has_val ? init_row.val_f1 : 0.0;
  result.best_threshold = init_row.threshold;
  if (progress) {
    *progress << "epoch 0: loss " << init_row.train_loss << " val_f1 " << init_row.val_f1 << '\n';
  }

  std::vector<size_t> order(split.train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    size_t seen = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<const AdmissionRecord*> batch;
      batch.reserve(end - start);
      for (size_t k = start; k < end; ++k) batch.push_back(&split.train[order[k]]);
      const double batch_loss = train_batch(model, batch, adam, rng, threads);
      loss_sum += batch_loss * static_cast<double>(batch.size());
      seen += batch.size();
    }
    EpochLog row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(seen);
    row.threshold = result.best_threshold;
    validate(row);
    result.log.push_back(row);
    if (progress) {
      *progress << "epoch " << epoch << ": loss " << row.train_loss << " val_f1 " << row.val_f1
                << " val_auc " << row.val_auc << " thr " << row.threshold << '\n';
    }
    const bool improved = has_val ? row.val_f1 > result.best_val_f1 : true;
    if (improved) {
      result.model = model;
      result.adam = adam;
      result.best_epoch = epoch;
      result.best_val_f1 = row.val_f1;
      result.best_threshold = row.threshold;
    }
  }
  return result;
}

std::string epoch_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out << "epoch,train_loss,val_f1,val_auc,threshold\n";
  char buf[160];
  for (const auto& row : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g\n", row.epoch, row.train_loss,
                  row.val_f1, row.val_auc, row.threshold);
    out << buf;
  }
  return out.str();
}

// ---- checkpoint ----------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'I', 'C', 'D', 'A', 'T', 'N', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

struct ByteWriter {
  std::string buf;
  void raw(const void* p, size_t n) { buf.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
};

struct ByteReader {
  const std::string& buf;
  size_t pos = 0;
  explicit ByteReader(const std::string& b) : buf(b) {}
  void need(size_t n) const {
    if (pos + n > buf.size()) throw DataError("corrupt checkpoint: truncated");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

void write_config(ByteWriter& w, const TrainConfig& cfg) {
  w.f64(cfg.lr);
  w.u32(static_cast<std::uint32_t>(cfg.batch_size));
  w.u32(static_cast<std::uint32_t>(cfg.hidden_dim));
  w.u32(static_cast<std::uint32_t>(cfg.char_embed_dim));
  w.u32(static_cast<std::uint32_t>(cfg.word_embed_dim));
  w.f64(cfg.dropout);
  w.u32(static_cast<std::uint32_t>(cfg.epochs));
  w.u64(cfg.seed);
  w.u8(static_cast<std::uint8_t>(cfg.head));
  w.u8(static_cast<std::uint8_t>(cfg.encoder));
  w.f64(cfg.max_grad_norm);
  std::uint8_t flags = 0;
  if (cfg.score_cosine) flags |= 1;
  if (cfg.proj_bias) flags |= 2;
  w.u8(flags);
}

TrainConfig read_config(ByteReader& r) {
  TrainConfig cfg;
  cfg.lr = r.f64();
  cfg.batch_size = static_cast<int>(r.u32());
  cfg.hidden_dim = static_cast<int>(r.u32());
  cfg.char_embed_dim = static_cast<int>(r.u32());
  cfg.word_embed_dim = static_cast<int>(r.u32());
  cfg.dropout = r.f64();
  cfg.epochs = static_cast<int>(r.u32());
  cfg.seed = r.u64();
  cfg.head = static_cast<Head>(r.u8());
  cfg.encoder = static_cast<EncoderVariant>(r.u8());
  cfg.max_grad_norm = r.f64();
  std::uint8_t flags = r.u8();
  cfg.score_cosine = (flags & 1) != 0;
  cfg.proj_bias = (flags & 2) != 0;
  cfg.threads = 1;
  return cfg;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  ByteWriter w;
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  write_config(w, ckpt.model.cfg);

  const Model& model = ckpt.model;
  w.u32(static_cast<std::uint32_t>(model.char_vocab.size()));
  for (int i = 1; i < model.char_vocab.size(); ++i) w.u8(model.char_vocab.symbol(i));
  w.u32(static_cast<std::uint32_t>(model.word_vocab.size()));
  for (int i = 1; i < model.word_vocab.size(); ++i) w.str(model.word_vocab.symbol(i));
  w.u32(static_cast<std::uint32_t>(model.codes.size()));
  for (const auto& def : model.codes) {
    w.str(def.code);
    w.str(def.long_title);
  }

  auto views = model_tensors(const_cast<Model&>(model));
  w.u32(static_cast<std::uint32_t>(views.size()));
  for (const auto& view : views) {
    w.str(view.name);
    w.u64(view.size);
    w.raw(view.data, view.size * sizeof(double));
  }

  w.u8(ckpt.adam.has_value() ? 1 : 0);
  if (ckpt.adam) {
    const AdamState& adam = *ckpt.adam;
    if (adam.m.size() != views.size()) {
      throw std::logic_error("save_checkpoint: adam state misaligned with tensors");
    }
    w.u64(adam.step);
    w.f64(adam.lr);
    w.f64(adam.beta1);
    w.f64(adam.beta2);
    w.f64(adam.eps);
    for (size_t k = 0; k < views.size(); ++k) {
      w.raw(adam.m[k].data(), adam.m[k].size() * sizeof(double));
      w.raw(adam.v[k].data(), adam.v[k].size() * sizeof(double));
    }
  }

  w.u32(static_cast<std::uint32_t>(ckpt.epoch));
  w.f64(ckpt.best_val_f1);
  w.f64(ckpt.threshold);

  const std::uint64_t checksum = fnv1a(w.buf);
  w.u64(checksum);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
  if (!out) throw DataError("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string bytes = ss.str();
  if (bytes.size() < sizeof(kMagic) + 12) throw DataError("corrupt checkpoint: too small");

  const std::string payload = bytes.substr(0, bytes.size() - 8);
  ByteReader checksum_reader(bytes);
  checksum_reader.pos = bytes.size() - 8;
  if (checksum_reader.u64() != fnv1a(payload)) {
    throw DataError("corrupt checkpoint (checksum mismatch): " + path);
  }

  ByteReader r(payload);
  char magic[8];
  r.need(8);
  std::memcpy(magic, payload.data(), 8);
  r.pos = 8;
  if (std::memcmp(magic, kMagic, 8) != 0) throw DataError(path + " is not a checkpoint file");
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }

  Checkpoint ckpt;
  Model& model = ckpt.model;
  model.cfg = read_config(r);

  const std::uint32_t n_chars = r.u32();
  for (std::uint32_t i = 1; i < n_chars; ++i) model.char_vocab.add(r.u8());
  const std::uint32_t n_words = r.u32();
  for (std::uint32_t i = 1; i < n_words; ++i) model.word_vocab.add(r.str());
  const std::uint32_t n_codes = r.u32();
  for (std::uint32_t i = 0; i < n_codes; ++i) {
    CodeDefinition def;
    def.code = r.str();
    def.long_title = r.str();
    model.codes.push_back(std::move(def));
  }
  for (size_t i = 0; i < model.codes.size(); ++i) {
    model.code_index[model.codes[i].code] = static_cast<int>(i);
    model.code_tokens.push_back(tokenize(model.codes[i].long_title));
  }

  model.desc_enc = make_encoder_stack(model.cfg.encoder, model.char_vocab.size(),
                                      model.word_vocab.size(), model.cfg.char_embed_dim,
                                      model.cfg.word_embed_dim, model.cfg.hidden_dim);
  model.code_enc = make_encoder_stack(model.cfg.encoder, model.char_vocab.size(),
                                      model.word_vocab.size(), model.cfg.char_embed_dim,
                                      model.cfg.word_embed_dim, model.cfg.hidden_dim);
  const int n = static_cast<int>(model.codes.size());
  if (model.cfg.head == Head::kHard || model.cfg.head == Head::kSoft) {
    model.proj = Mat(n, model.cfg.hidden_dim);
    if (model.cfg.proj_bias) model.proj_bias = Vec(n, 0.0);
  }
  if (model.cfg.head == Head::kLinear) model.baseline = Mat(n, 2 * model.cfg.hidden_dim);

  auto views = model_tensors(model);
  const std::uint32_t n_tensors = r.u32();
  if (n_tensors != views.size()) throw DataError("corrupt checkpoint: tensor count mismatch");
  for (auto& view : views) {
    const std::string name = r.str();
    const std::uint64_t size = r.u64();
    if (name != view.name || size != view.size) {
      throw DataError("corrupt checkpoint: tensor " + name + " does not match layout");
    }
    r.need(size * sizeof(double));
    std::memcpy(view.data, payload.data() + r.pos, size * sizeof(double));
    r.pos += size * sizeof(double);
  }

  if (r.u8()) {
    AdamState adam;
    adam.step = r.u64();
    adam.lr = r.f64();
    adam.beta1 = r.f64();
    adam.beta2 = r.f64();
    adam.eps = r.f64();
    for (const auto& view : views) {
      adam.m.emplace_back(view.size);
      r.need(view.size * sizeof(double));
      std::memcpy(adam.m.back().data(), payload.data() + r.pos, view.size * sizeof(double));
      r.pos += view.size * sizeof(double);
      adam.v.emplace_back(view.size);
      r.need(view.size * sizeof(double));
      std::memcpy(adam.v.back().data(), payload.data() + r.pos, view.size * sizeof(double));
      r.pos += view.size * sizeof(double);
    }
    ckpt.adam = std::move(adam);
  }

  ckpt.epoch = static_cast<int>(r.u32());
  ckpt.best_val_f1 = r.f64();
  ckpt.threshold = r.f64();
  return ckpt;
}

}  // namespace icdattn
