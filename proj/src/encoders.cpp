#include "icdattn/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "icdattn/errors.hpp"

namespace icdattn {

std::string head_name(Head h) {
  switch (h) {
    case Head::kHard: return "hard";
    case Head::kSoft: return "soft";
    case Head::kLinear: return "linear";
  }
  return "soft";
}

Head parse_head(const std::string& name) {
  if (name == "hard") return Head::kHard;
  if (name == "soft") return Head::kSoft;
  if (name == "linear") return Head::kLinear;
  throw UsageError("unknown head: " + name);
}

std::string variant_name(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::kCharLstm: return "char-lstm";
    case EncoderVariant::kWordEmbed: return "word-embed";
    case EncoderVariant::kWordEmbedPretrained: return "word-embed-pretrained";
    case EncoderVariant::kAvgPool: return "avg";
  }
  return "char-lstm";
}

EncoderVariant parse_variant(const std::string& name) {
  if (name == "char-lstm") return EncoderVariant::kCharLstm;
  if (name == "word-embed") return EncoderVariant::kWordEmbed;
  if (name == "word-embed-pretrained") return EncoderVariant::kWordEmbedPretrained;
  if (name == "avg" || name == "avg-pool") return EncoderVariant::kAvgPool;
  throw UsageError("unknown encoder variant: " + name);
}

// ---- lstm cell -----------------------------------------------------------------

LstmParams make_lstm(int input_dim, int hidden_dim) {
  LstmParams p;
  p.wx = Mat(4 * hidden_dim, input_dim);
  p.wh = Mat(4 * hidden_dim, hidden_dim);
  p.bx = Vec(4 * hidden_dim);
  p.bh = Vec(4 * hidden_dim);
  return p;
}

// Gate pre-activations for one step: z = bx + bh + wx*x + wh*h_prev.
// h_prev may be null for the zero initial state.
static void gate_preact(const LstmParams& p, const Vec& x, const Vec* h_prev, Vec& z) {
  const int rows = p.bx.dim();
  z.assign(rows, 0.0);
  for (int r = 0; r < rows; ++r) z[r] = p.bx[r] + p.bh[r];
  matvec_add(p.wx, x, z);
  if (h_prev) matvec_add(p.wh, *h_prev, z);
}

static void step_from_preact(const Vec& z, const Vec* c_prev, LstmStepCache& cache) {
  const int h = z.dim() / 4;
  cache.gates.assign(4 * h, 0.0);
  cache.cell.assign(h, 0.0);
  cache.cell_tanh.assign(h, 0.0);
  cache.hidden.assign(h, 0.0);
  for (int k = 0; k < h; ++k) {
    const double gi = sigmoid(z[k]);
    const double gf = sigmoid(z[h + k]);
    const double gg = tanh_act(z[2 * h + k]);
    const double go = sigmoid(z[3 * h + k]);
    cache.gates[k] = gi;
    cache.gates[h + k] = gf;
    cache.gates[2 * h + k] = gg;
    cache.gates[3 * h + k] = go;
    double c = gi * gg;
    if (c_prev) c += gf * (*c_prev)[k];
    cache.cell[k] = c;
    cache.cell_tanh[k] = tanh_act(c);
    cache.hidden[k] = go * cache.cell_tanh[k];
  }
}

LstmState lstm_step(const LstmParams& p, const Vec& x, const LstmState& prev) {
  if (x.dim() != p.input()) throw std::invalid_argument("lstm_step: input dim mismatch");
  if (prev.h.dim() != p.hidden() || prev.c.dim() != p.hidden()) {
    throw std::invalid_argument("lstm_step: state dim mismatch");
  }
  Vec z;
  gate_preact(p, x, &prev.h, z);
  LstmStepCache cache;
  step_from_preact(z, &prev.c, cache);
  return LstmState{cache.hidden, cache.cell};
}

Vec lstm_run(const LstmParams& p, std::span<const Vec> inputs, LstmSeqCache& cache) {
  if (inputs.empty()) throw std::invalid_argument("empty sequence");
  cache.steps.resize(inputs.size());
  Vec z;
  for (size_t t = 0; t < inputs.size(); ++t) {
    if (inputs[t].dim() != p.input()) throw std::invalid_argument("lstm_run: input dim mismatch");
    const Vec* h_prev = t > 0 ? &cache.steps[t - 1].hidden : nullptr;
    const Vec* c_prev = t > 0 ? &cache.steps[t - 1].cell : nullptr;
    gate_preact(p, inputs[t], h_prev, z);
    step_from_preact(z, c_prev, cache.steps[t]);
  }
  return cache.steps.back().hidden;
}

void lstm_backward(const LstmParams& p, std::span<const Vec> inputs, const LstmSeqCache& cache,
                   const Vec& d_last_hidden, LstmParams& grads, std::vector<Vec>* d_inputs) {
  const int h = p.hidden();
  const size_t T = inputs.size();
  if (cache.steps.size() != T) throw std::invalid_argument("lstm_backward: stale cache");
  if (d_inputs) d_inputs->assign(T, Vec(p.input(), 0.0));

  Vec dh = d_last_hidden;
  Vec dc(h, 0.0);
  Vec dz(4 * h, 0.0);
  for (size_t t = T; t-- > 0;) {
    const LstmStepCache& step = cache.steps[t];
    const Vec* c_prev = t > 0 ? &cache.steps[t - 1].cell : nullptr;
    for (int k = 0; k < h; ++k) {
      const double gi = step.gates[k];
      const double gf = step.gates[h + k];
      const double gg = step.gates[2 * h + k];
      const double go = step.gates[3 * h + k];
      const double tc = step.cell_tanh[k];
      const double d_cell = dc[k] + dh[k] * go * tanh_grad_from_value(tc);
      const double d_i = d_cell * gg;
      const double d_f = c_prev ? d_cell * (*c_prev)[k] : 0.0;
      const double d_g = d_cell * gi;
      const double d_o = dh[k] * tc;
      dz[k] = d_i * sigmoid_grad_from_value(gi);
      dz[h + k] = d_f * sigmoid_grad_from_value(gf);
      dz[2 * h + k] = d_g * tanh_grad_from_value(gg);
      dz[3 * h + k] = d_o * sigmoid_grad_from_value(go);
      dc[k] = d_cell * gf;  // flows to c_{t-1}
    }
    outer_add(grads.wx, dz, inputs[t]);
    for (int r = 0; r < 4 * h; ++r) {
      grads.bx[r] += dz[r];
      grads.bh[r] += dz[r];
    }
    if (d_inputs) matvec_transpose_add(p.wx, dz, (*d_inputs)[t]);
    if (t > 0) {
      const Vec& h_prev = cache.steps[t - 1].hidden;
      outer_add(grads.wh, dz, h_prev);
      dh.assign(h, 0.0);
      matvec_transpose_add(p.wh, dz, dh);
    }
  }
}

// ---- encoder stack ----------------------------------------------------------------

int EncoderStack::output_dim() const {
  switch (variant) {
    case EncoderVariant::kCharLstm:
    case EncoderVariant::kWordEmbed:
    case EncoderVariant::kWordEmbedPretrained:
      return word_lstm.hidden();
    case EncoderVariant::kAvgPool:
      return char_lstm.hidden();
  }
  return 0;
}

EncoderStack make_encoder_stack(EncoderVariant variant, int char_vocab_size, int word_vocab_size,
                                int char_embed_dim, int word_embed_dim, int hidden_dim) {
  EncoderStack stack;
  stack.variant = variant;
  switch (variant) {
    case EncoderVariant::kCharLstm:
      stack.char_embed = Mat(char_vocab_size, char_embed_dim);
      stack.char_lstm = make_lstm(char_embed_dim, hidden_dim);
      stack.word_lstm = make_lstm(hidden_dim, hidden_dim);
      break;
    case EncoderVariant::kWordEmbed:
    case EncoderVariant::kWordEmbedPretrained:
      stack.word_embed = Mat(word_vocab_size, word_embed_dim);
      stack.word_lstm = make_lstm(word_embed_dim, hidden_dim);
      break;
    case EncoderVariant::kAvgPool:
      stack.char_embed = Mat(char_vocab_size, char_embed_dim);
      stack.char_lstm = make_lstm(char_embed_dim, hidden_dim);
      break;
  }
  return stack;
}

static void init_uniform(Mat& m, double bound, Rng& rng) {
  for (size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
}

void init_encoder_stack(EncoderStack& stack, int hidden_dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  // fixed draw order: embeddings, then char LSTM, then word LSTM
  if (!stack.char_embed.empty()) init_uniform(stack.char_embed, bound, rng);
  if (!stack.word_embed.empty()) init_uniform(stack.word_embed, bound, rng);
  if (!stack.char_lstm.wx.empty()) {
    init_uniform(stack.char_lstm.wx, bound, rng);
    init_uniform(stack.char_lstm.wh, bound, rng);
  }
  if (!stack.word_lstm.wx.empty()) {
    init_uniform(stack.word_lstm.wx, bound, rng);
    init_uniform(stack.word_lstm.wh, bound, rng);
  }
}

StackGrads make_stack_grads(const EncoderStack& stack) {
  StackGrads g;
  g.char_embed = Mat(stack.char_embed.rows(), stack.char_embed.cols());
  g.word_embed = Mat(stack.word_embed.rows(), stack.word_embed.cols());
  if (!stack.char_lstm.wx.empty()) {
    g.char_lstm = make_lstm(stack.char_lstm.input(), stack.char_lstm.hidden());
  }
  if (!stack.word_lstm.wx.empty()) {
    g.word_lstm = make_lstm(stack.word_lstm.input(), stack.word_lstm.hidden());
  }
  return g;
}

static bool uses_char_lstm(EncoderVariant v) {
  return v == EncoderVariant::kCharLstm || v == EncoderVariant::kAvgPool;
}

static std::vector<Vec> embed_rows(const Mat& table, const std::vector<int>& ids) {
  std::vector<Vec> out(ids.size(), Vec(table.cols()));
  for (size_t i = 0; i < ids.size(); ++i) {
    const double* row = table.row(ids[i]);
    std::copy(row, row + table.cols(), out[i].data());
  }
  return out;
}

static Vec encode_word_cached(const EncoderStack& stack, const CharVocab& vocab,
                              const std::string& word, std::vector<int>& ids,
                              LstmSeqCache& cache) {
  if (word.empty()) throw std::invalid_argument("encode_word: empty word");
  if (stack.char_embed.empty()) {
    throw UsageError("word-level encoding needs a character-level encoder variant");
  }
  ids.clear();
  ids.reserve(word.size());
  for (char c : word) ids.push_back(vocab.lookup(static_cast<unsigned char>(c)));
  std::vector<Vec> inputs = embed_rows(stack.char_embed, ids);
  return lstm_run(stack.char_lstm, inputs, cache);
}

Vec encode_word(const EncoderStack& stack, const CharVocab& vocab, const std::string& word) {
  std::vector<int> ids;
  LstmSeqCache cache;
  return encode_word_cached(stack, vocab, word, ids, cache);
}

Vec encode_sentence(const EncoderStack& stack, const CharVocab& char_vocab,
                    const WordVocab& word_vocab, const std::vector<std::string>& words,
                    SentenceCache& cache) {
  if (words.empty()) throw std::invalid_argument("empty sequence");
  const size_t T = words.size();
  cache.word_vecs.assign(T, Vec());
  if (uses_char_lstm(stack.variant)) {
    cache.char_ids.assign(T, {});
    cache.char_runs.assign(T, LstmSeqCache{});
    for (size_t t = 0; t < T; ++t) {
      cache.word_vecs[t] =
          encode_word_cached(stack, char_vocab, words[t], cache.char_ids[t], cache.char_runs[t]);
    }
  } else {
    cache.word_ids.assign(T, 0);
    for (size_t t = 0; t < T; ++t) cache.word_ids[t] = word_vocab.lookup(words[t]);
    cache.word_vecs = embed_rows(stack.word_embed, cache.word_ids);
  }

  if (stack.variant == EncoderVariant::kAvgPool) {
    const int d = cache.word_vecs[0].dim();
    cache.sentence.assign(d, 0.0);
    for (const Vec& wv : cache.word_vecs) axpy(1.0 / static_cast<double>(T), wv, cache.sentence);
  } else {
    cache.sentence = lstm_run(stack.word_lstm, cache.word_vecs, cache.word_run);
  }
  return cache.sentence;
}

Vec average_encode(const EncoderStack& stack, const CharVocab& char_vocab,
                   const WordVocab& word_vocab, const std::vector<std::string>& words) {
  if (words.empty()) throw std::invalid_argument("empty sequence");
  std::vector<Vec> vecs;
  vecs.reserve(words.size());
  if (uses_char_lstm(stack.variant)) {
    for (const auto& w : words) vecs.push_back(encode_word(stack, char_vocab, w));
  } else {
    std::vector<int> ids;
    for (const auto& w : words) ids.push_back(word_vocab.lookup(w));
    vecs = embed_rows(stack.word_embed, ids);
  }
  Vec out(vecs[0].dim(), 0.0);
  for (const Vec& v : vecs) axpy(1.0 / static_cast<double>(vecs.size()), v, out);
  return out;
}

void sentence_backward(const EncoderStack& stack, const SentenceCache& cache,
                       const Vec& d_sentence, StackGrads& grads) {
  const size_t T = cache.word_vecs.size();
  if (T == 0) throw std::logic_error("sentence_backward: missing forward cache");

  std::vector<Vec> d_word_vecs;
  if (stack.variant == EncoderVariant::kAvgPool) {
    d_word_vecs.assign(T, Vec(d_sentence.dim(), 0.0));
    for (size_t t = 0; t < T; ++t) {
      axpy(1.0 / static_cast<double>(T), d_sentence, d_word_vecs[t]);
    }
  } else {
    lstm_backward(stack.word_lstm, cache.word_vecs, cache.word_run, d_sentence, grads.word_lstm,
                  &d_word_vecs);
  }

  if (uses_char_lstm(stack.variant)) {
    std::vector<Vec> d_chars;
    for (size_t t = 0; t < T; ++t) {
      std::vector<Vec> inputs = embed_rows(stack.char_embed, cache.char_ids[t]);
      lstm_backward(stack.char_lstm, inputs, cache.char_runs[t], d_word_vecs[t], grads.char_lstm,
                    &d_chars);
      for (size_t c = 0; c < cache.char_ids[t].size(); ++c) {
        double* row = grads.char_embed.row(cache.char_ids[t][c]);
        const Vec& dx = d_chars[c];
        for (int k = 0; k < dx.dim(); ++k) row[k] += dx[k];
      }
    }
  } else {
    for (size_t t = 0; t < T; ++t) {
      double* row = grads.word_embed.row(cache.word_ids[t]);
      const Vec& dx = d_word_vecs[t];
      for (int k = 0; k < dx.dim(); ++k) row[k] += dx[k];
    }
  }
}

// ---- pretrained vectors ----------------------------------------------------------

static std::string lowercase(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

PretrainedVectors load_pretrained_vectors(const std::string& path, std::ostream* warn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  PretrainedVectors pv;
  std::string line;
  int line_no = 0;
  long long declared_count = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    if (line_no == 1) {
      long long count = 0, dim = 0;
      if (!(fields >> count >> dim) || count < 0 || dim <= 0) {
        throw DataError(path + ": line 1: expected \"<count> <dim>\" header");
      }
      std::string extra;
      if (fields >> extra) {
        throw DataError(path + ": line 1: expected \"<count> <dim>\" header");
      }
      declared_count = count;
      pv.dim = static_cast<int>(dim);
      continue;
    }
    std::string word;
    if (!(fields >> word)) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": missing word");
    }
    Vec v(pv.dim);
    for (int k = 0; k < pv.dim; ++k) {
      if (!(fields >> v[k])) {
        throw DataError(path + ": line " + std::to_string(line_no) +
                        ": expected " + std::to_string(pv.dim) + " values");
      }
    }
    double extra;
    if (fields >> extra) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": too many values");
    }
    std::string key = lowercase(word);
    if (pv.vectors.count(key) && warn) {
      *warn << "warning: " << path << ": line " << line_no << ": duplicate word \"" << key
            << "\", keeping the last occurrence\n";
    }
    pv.vectors[key] = std::move(v);
  }
  if (declared_count < 0) throw DataError(path + ": empty vectors file");
  if (declared_count != static_cast<long long>(pv.vectors.size()) && warn) {
    *warn << "warning: " << path << ": header declares " << declared_count << " words, found "
          << pv.vectors.size() << '\n';
  }
  return pv;
}

void seed_word_embeddings(EncoderStack& stack, const WordVocab& vocab,
                          const PretrainedVectors& pv) {
  if (stack.word_embed.empty()) return;
  if (pv.dim != stack.word_embed.cols()) {
    throw DataError("pretrained vector dim " + std::to_string(pv.dim) +
                    " does not match embedding dim " + std::to_string(stack.word_embed.cols()));
  }
  for (int i = 0; i < vocab.size(); ++i) {
    auto it = pv.vectors.find(lowercase(vocab.symbol(i)));
    if (it == pv.vectors.end()) continue;  // keeps its random initialization
    std::copy(it->second.data(), it->second.data() + pv.dim, stack.word_embed.row(i));
  }
}

}  // namespace icdattn
