#pragma once

#include <cstdint>
#include <string>

namespace icdattn {

enum class Head { kHard, kSoft, kLinear };

enum class EncoderVariant {
  kCharLstm,            // char-level LSTM builds word vectors, word-level LSTM builds sentence vectors
  kWordEmbed,           // tunable word embedding replaces the char-level LSTM
  kWordEmbedPretrained, // word embedding seeded from a pretrained vector file, still tunable
  kAvgPool,             // char-level LSTM word vectors, averaged instead of word-level LSTM
};

struct TrainConfig {
  double lr = 0.001;
  int batch_size = 10;
  int hidden_dim = 200;
  int char_embed_dim = 50;
  int word_embed_dim = 200;  // embedding variants; forced to the file dim when pretrained
  double dropout = 0.5;
  int epochs = 30;
  std::uint64_t seed = 42;
  Head head = Head::kSoft;
  EncoderVariant encoder = EncoderVariant::kCharLstm;
  double max_grad_norm = 0.0;  // 0 disables clipping
  bool score_cosine = false;   // length-normalized match scores instead of the plain dot product
  bool proj_bias = false;      // per-code bias on the projection head
  int threads = 1;
};

std::string head_name(Head h);
Head parse_head(const std::string& name);
std::string variant_name(EncoderVariant v);
EncoderVariant parse_variant(const std::string& name);

}  // namespace icdattn
