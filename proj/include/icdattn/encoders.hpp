#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "icdattn/config.hpp"
#include "icdattn/corpus.hpp"
#include "icdattn/numerics.hpp"

namespace icdattn {

// LSTM cell parameters. The four gates (input, forget, cell, output) are
// stored as stacked row blocks of wx/wh/bx/bh, so each block corresponds to
// one of the eight per-gate weight matrices / bias vectors. bx and bh are
// the separate input-side and hidden-side biases.
struct LstmParams {
  Mat wx;  // 4H x input_dim
  Mat wh;  // 4H x H
  Vec bx;  // 4H
  Vec bh;  // 4H

  int hidden() const { return bx.dim() / 4; }
  int input() const { return wx.cols(); }
};

LstmParams make_lstm(int input_dim, int hidden_dim);

struct LstmState {
  Vec h, c;
};

// Everything the backward pass needs from one time step.
struct LstmStepCache {
  Vec gates;      // 4H, post-activation: [i | f | g | o]
  Vec cell;       // c_t
  Vec cell_tanh;  // tanh(c_t)
  Vec hidden;     // h_t
};

struct LstmSeqCache {
  std::vector<LstmStepCache> steps;
};

// One cell update from an explicit previous state.
LstmState lstm_step(const LstmParams& p, const Vec& x, const LstmState& prev);

// Runs the cell over the whole input sequence from a zero initial state,
// caching every step. Returns the last hidden state. Throws on an empty
// sequence.
Vec lstm_run(const LstmParams& p, std::span<const Vec> inputs, LstmSeqCache& cache);

// Backpropagates d(last hidden) through the cached run. Parameter gradients
// accumulate into `grads`; per-step input gradients accumulate into
// d_inputs when non-null (must already be sized and zeroed by the caller or
// freshly assigned here; we assign).
void lstm_backward(const LstmParams& p, std::span<const Vec> inputs, const LstmSeqCache& cache,
                   const Vec& d_last_hidden, LstmParams& grads, std::vector<Vec>* d_inputs);

// ---- two-level encoder stack -------------------------------------------------

// One side of the model (either descriptions or code titles). The two sides
// are separate instances and never share parameters.
struct EncoderStack {
  EncoderVariant variant = EncoderVariant::kCharLstm;
  Mat char_embed;       // |char vocab| x char_embed_dim (char variants)
  Mat word_embed;       // |word vocab| x word_embed_dim (embedding variants)
  LstmParams char_lstm; // char variants
  LstmParams word_lstm; // all variants except average pooling

  int output_dim() const;
};

EncoderStack make_encoder_stack(EncoderVariant variant, int char_vocab_size, int word_vocab_size,
                                int char_embed_dim, int word_embed_dim, int hidden_dim);

// Fills weights with uniform(-1/sqrt(hidden), +1/sqrt(hidden)) draws in a
// fixed tensor order; biases stay zero.
void init_encoder_stack(EncoderStack& stack, int hidden_dim, Rng& rng);

struct StackGrads {
  Mat char_embed;
  Mat word_embed;
  LstmParams char_lstm;
  LstmParams word_lstm;
};

StackGrads make_stack_grads(const EncoderStack& stack);

struct SentenceCache {
  std::vector<std::vector<int>> char_ids;  // per word (char variants)
  std::vector<int> word_ids;               // embedding variants
  std::vector<LstmSeqCache> char_runs;     // per word (char variants)
  std::vector<Vec> word_vecs;              // inputs to the sentence combiner
  LstmSeqCache word_run;                   // LSTM variants
  Vec sentence;                            // pre-dropout sentence vector
};

// Char-LSTM word vector (last hidden state over the character sequence).
// Unseen characters map to the UNK embedding row. Throws on an empty word.
Vec encode_word(const EncoderStack& stack, const CharVocab& vocab, const std::string& word);

// Sentence vector for a token list: word vectors per the stack variant, then
// word-level LSTM last hidden state (or their mean for the averaging
// variant). Throws on an empty token list.
Vec encode_sentence(const EncoderStack& stack, const CharVocab& char_vocab,
                    const WordVocab& word_vocab, const std::vector<std::string>& words,
                    SentenceCache& cache);

// Mean of the per-word vectors regardless of the stack variant.
Vec average_encode(const EncoderStack& stack, const CharVocab& char_vocab,
                   const WordVocab& word_vocab, const std::vector<std::string>& words);

// Backpropagates d(sentence vector) through the cached encode_sentence run.
void sentence_backward(const EncoderStack& stack, const SentenceCache& cache,
                       const Vec& d_sentence, StackGrads& grads);

// ---- pretrained vectors ---------------------------------------------------------

struct PretrainedVectors {
  int dim = 0;
  std::unordered_map<std::string, Vec> vectors;  // lowercased keys
};

// Classic text format: first line "<count> <dim>", then "word v1 ... vdim".
// Keys are lowercased; a duplicate word keeps the last occurrence and emits a
// warning. Malformed lines and dimension drift raise DataError with the line
// number.
PretrainedVectors load_pretrained_vectors(const std::string& path, std::ostream* warn);

// Overwrites embedding rows whose (lowercased) word appears in `pv`; other
// rows keep their random initialization. Throws when dims disagree.
void seed_word_embeddings(EncoderStack& stack, const WordVocab& vocab,
                          const PretrainedVectors& pv);

}  // namespace icdattn
