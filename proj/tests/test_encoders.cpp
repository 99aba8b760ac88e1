#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "icdattn/encoders.hpp"
#include "icdattn/errors.hpp"

using namespace icdattn;

namespace {

LstmParams random_lstm(int input_dim, int hidden_dim, Rng& rng, double scale = 0.5) {
  LstmParams p = make_lstm(input_dim, hidden_dim);
  for (size_t i = 0; i < p.wx.size(); ++i) p.wx.data()[i] = rng.uniform(-scale, scale);
  for (size_t i = 0; i < p.wh.size(); ++i) p.wh.data()[i] = rng.uniform(-scale, scale);
  for (int i = 0; i < p.bx.dim(); ++i) p.bx[i] = rng.uniform(-scale, scale);
  for (int i = 0; i < p.bh.dim(); ++i) p.bh[i] = rng.uniform(-scale, scale);
  return p;
}

std::vector<Vec> random_inputs(int t, int dim, Rng& rng) {
  std::vector<Vec> inputs(static_cast<size_t>(t), Vec(dim));
  for (auto& x : inputs) {
    for (int i = 0; i < dim; ++i) x[i] = rng.uniform(-1.0, 1.0);
  }
  return inputs;
}

}  // namespace

TEST_CASE("lstm cell zero-parameter algebra") {
  const int h = 4, in = 3;
  LstmParams p = make_lstm(in, h);  // all zeros
  Vec x(in);
  x[0] = 0.7; x[1] = -0.3; x[2] = 2.0;

  SUBCASE("zero previous state: gates at 0.5, cell gate 0, so h = c = 0") {
    LstmState prev{Vec(h, 0.0), Vec(h, 0.0)};
    LstmState next = lstm_step(p, x, prev);
    for (int k = 0; k < h; ++k) {
      CHECK(next.c[k] == 0.0);
      CHECK(next.h[k] == 0.0);
    }
  }
  SUBCASE("previous cell of ones: c = 0.5, h = 0.5*tanh(0.5)") {
    LstmState prev{Vec(h, 0.0), Vec(h, 1.0)};
    LstmState next = lstm_step(p, x, prev);
    for (int k = 0; k < h; ++k) {
      CHECK(next.c[k] == doctest::Approx(0.5).epsilon(1e-15));
      CHECK(next.h[k] == doctest::Approx(0.23105857863000487).epsilon(1e-13));
    }
  }
}

TEST_CASE("lstm hidden state stays in (-1,1), gates in range") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    LstmParams p = random_lstm(5, 7, rng, 2.0);
    auto inputs = random_inputs(6, 5, rng);
    LstmSeqCache cache;
    Vec last = lstm_run(p, inputs, cache);
    for (int k = 0; k < 7; ++k) {
      CHECK(last[k] > -1.0);
      CHECK(last[k] < 1.0);
    }
    for (const auto& step : cache.steps) {
      for (int k = 0; k < 7; ++k) {
        CHECK(step.gates[k] > 0.0);          // input gate
        CHECK(step.gates[k] < 1.0);
        CHECK(step.gates[7 + k] > 0.0);      // forget gate
        CHECK(step.gates[7 + k] < 1.0);
        CHECK(step.gates[14 + k] > -1.0);    // cell gate
        CHECK(step.gates[14 + k] < 1.0);
        CHECK(step.gates[21 + k] > 0.0);     // output gate
        CHECK(step.gates[21 + k] < 1.0);
        CHECK(step.hidden[k] > -1.0);
        CHECK(step.hidden[k] < 1.0);
      }
    }
  }
}

TEST_CASE("lstm_run basics") {
  Rng rng(7);
  LstmParams p = random_lstm(3, 4, rng);
  SUBCASE("empty sequence errors") {
    LstmSeqCache cache;
    std::vector<Vec> empty;
    CHECK_THROWS_WITH_AS(lstm_run(p, empty, cache), "empty sequence", std::invalid_argument);
  }
  SUBCASE("T=1 equals one step from the zero state") {
    auto inputs = random_inputs(1, 3, rng);
    LstmSeqCache cache;
    Vec h1 = lstm_run(p, inputs, cache);
    LstmState s = lstm_step(p, inputs[0], LstmState{Vec(4, 0.0), Vec(4, 0.0)});
    for (int k = 0; k < 4; ++k) CHECK(h1[k] == s.h[k]);
  }
  SUBCASE("deterministic, and prefix states match the cache") {
    auto inputs = random_inputs(5, 3, rng);
    LstmSeqCache c1, c2;
    Vec a = lstm_run(p, inputs, c1);
    Vec b = lstm_run(p, inputs, c2);
    for (int k = 0; k < 4; ++k) CHECK(a[k] == b[k]);
    for (size_t t = 1; t <= 5; ++t) {
      LstmSeqCache prefix;
      std::vector<Vec> head(inputs.begin(), inputs.begin() + static_cast<long>(t));
      Vec ht = lstm_run(p, head, prefix);
      for (int k = 0; k < 4; ++k) CHECK(ht[k] == c1.steps[t - 1].hidden[k]);
    }
  }
}

TEST_CASE("lstm gradients match central finite differences") {
  Rng rng(11);
  const int in = 3, h = 5, T = 4;
  LstmParams p = random_lstm(in, h, rng);
  auto inputs = random_inputs(T, in, rng);
  Vec probe(h);
  for (int k = 0; k < h; ++k) probe[k] = rng.uniform(-1.0, 1.0);

  auto loss = [&]() {
    LstmSeqCache cache;
    Vec last = lstm_run(p, inputs, cache);
    return dot(last, probe);
  };

  LstmSeqCache cache;
  lstm_run(p, inputs, cache);
  LstmParams grads = make_lstm(in, h);
  std::vector<Vec> d_inputs;
  lstm_backward(p, inputs, cache, probe, grads, &d_inputs);

  const double step = 1e-5;
  auto check_entry = [&](double& theta, double analytic) {
    const double saved = theta;
    theta = saved + step;
    const double hi = loss();
    theta = saved - step;
    const double lo = loss();
    theta = saved;
    const double fd = (hi - lo) / (2 * step);
    CHECK(std::abs(analytic - fd) / std::max(std::abs(fd), 1e-8) < 1e-4);
  };
  for (size_t i = 0; i < p.wx.size(); ++i) check_entry(p.wx.data()[i], grads.wx.data()[i]);
  for (size_t i = 0; i < p.wh.size(); ++i) check_entry(p.wh.data()[i], grads.wh.data()[i]);
  for (int i = 0; i < p.bx.dim(); ++i) check_entry(p.bx[i], grads.bx[i]);
  for (int i = 0; i < p.bh.dim(); ++i) check_entry(p.bh[i], grads.bh[i]);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < in; ++i) check_entry(inputs[static_cast<size_t>(t)][i], d_inputs[static_cast<size_t>(t)][i]);
  }
}

namespace {

struct StackFixture {
  CharVocab char_vocab;
  WordVocab word_vocab;
  EncoderStack stack;

  explicit StackFixture(EncoderVariant variant, std::uint64_t seed = 3) {
    std::vector<AdmissionRecord> records = {
        {"1", {"acute renal failure", "malignant hypertension b"}, {}}};
    std::vector<CodeDefinition> codes = {{"X", "renal disease a"}};
    char_vocab = build_char_vocab(records, codes);
    word_vocab = build_word_vocab(records, codes);
    stack = make_encoder_stack(variant, char_vocab.size(), word_vocab.size(), 4, 6, 8);
    Rng rng(seed);
    init_encoder_stack(stack, 8, rng);
  }
};

}  // namespace

TEST_CASE("encode_word") {
  StackFixture f(EncoderVariant::kCharLstm);
  SUBCASE("deterministic") {
    Vec a = encode_word(f.stack, f.char_vocab, "renal");
    Vec b = encode_word(f.stack, f.char_vocab, "renal");
    for (int k = 0; k < a.dim(); ++k) CHECK(a[k] == b[k]);
  }
  SUBCASE("single char equals one lstm step over its embedding") {
    Vec got = encode_word(f.stack, f.char_vocab, "a");
    Vec x(f.stack.char_embed.cols());
    const double* row = f.stack.char_embed.row(f.char_vocab.lookup('a'));
    for (int k = 0; k < x.dim(); ++k) x[k] = row[k];
    LstmState s = lstm_step(f.stack.char_lstm, x,
                            LstmState{Vec(8, 0.0), Vec(8, 0.0)});
    for (int k = 0; k < 8; ++k) CHECK(got[k] == s.h[k]);
  }
  SUBCASE("unseen characters fall back to the UNK embedding") {
    Vec a = encode_word(f.stack, f.char_vocab, "\x01\x02");
    Vec b = encode_word(f.stack, f.char_vocab, "\x03\x04");
    for (int k = 0; k < a.dim(); ++k) CHECK(a[k] == b[k]);
  }
  SUBCASE("empty word errors") {
    CHECK_THROWS_AS(encode_word(f.stack, f.char_vocab, ""), std::invalid_argument);
  }
}

TEST_CASE("encode_sentence") {
  StackFixture f(EncoderVariant::kCharLstm);
  SUBCASE("one word runs the word lstm over a single step") {
    SentenceCache cache;
    Vec s = encode_sentence(f.stack, f.char_vocab, f.word_vocab, {"renal"}, cache);
    Vec wv = encode_word(f.stack, f.char_vocab, "renal");
    LstmState st = lstm_step(f.stack.word_lstm, wv, LstmState{Vec(8, 0.0), Vec(8, 0.0)});
    for (int k = 0; k < 8; ++k) CHECK(s[k] == st.h[k]);
  }
  SUBCASE("word order matters for random parameters") {
    SentenceCache c1, c2;
    Vec a = encode_sentence(f.stack, f.char_vocab, f.word_vocab, {"acute", "renal"}, c1);
    Vec b = encode_sentence(f.stack, f.char_vocab, f.word_vocab, {"renal", "acute"}, c2);
    double diff = 0.0;
    for (int k = 0; k < 8; ++k) diff += std::abs(a[k] - b[k]);
    CHECK(diff > 1e-12);
  }
  SUBCASE("empty list errors") {
    SentenceCache cache;
    CHECK_THROWS_AS(encode_sentence(f.stack, f.char_vocab, f.word_vocab, {}, cache),
                    std::invalid_argument);
  }
}

TEST_CASE("average_encode") {
  StackFixture f(EncoderVariant::kCharLstm);
  SUBCASE("single word returns that word's vector exactly") {
    Vec avg = average_encode(f.stack, f.char_vocab, f.word_vocab, {"renal"});
    Vec wv = encode_word(f.stack, f.char_vocab, "renal");
    for (int k = 0; k < 8; ++k) CHECK(avg[k] == wv[k]);
  }
  SUBCASE("permutation invariant") {
    Vec a = average_encode(f.stack, f.char_vocab, f.word_vocab, {"acute", "renal", "failure"});
    Vec b = average_encode(f.stack, f.char_vocab, f.word_vocab, {"failure", "acute", "renal"});
    for (int k = 0; k < 8; ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-15));
  }
  SUBCASE("avg-pool variant sentence equals the word-vector mean") {
    StackFixture g(EncoderVariant::kAvgPool);
    SentenceCache cache;
    Vec s = encode_sentence(g.stack, g.char_vocab, g.word_vocab, {"acute", "renal"}, cache);
    Vec a = encode_word(g.stack, g.char_vocab, "acute");
    Vec b = encode_word(g.stack, g.char_vocab, "renal");
    for (int k = 0; k < 8; ++k) CHECK(s[k] == doctest::Approx(0.5 * (a[k] + b[k])).epsilon(1e-15));
  }
}

TEST_CASE("untied stacks produce different encodings") {
  StackFixture f(EncoderVariant::kCharLstm, 3);
  StackFixture g(EncoderVariant::kCharLstm, 4);
  SentenceCache c1, c2;
  std::vector<std::string> title = {"renal", "disease"};
  Vec a = encode_sentence(f.stack, f.char_vocab, f.word_vocab, title, c1);
  Vec b = encode_sentence(g.stack, g.char_vocab, g.word_vocab, title, c2);
  double diff = 0.0;
  for (int k = 0; k < 8; ++k) diff += std::abs(a[k] - b[k]);
  CHECK(diff > 1e-12);
}

TEST_CASE("pretrained vector loading") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "icdattn_vectors_test.txt").string();
  SUBCASE("classic format parses") {
    std::ofstream out(path);
    out << "2 3\na 1 2 3\nb 4 5 6\n";
    out.close();
    auto pv = load_pretrained_vectors(path, nullptr);
    CHECK(pv.dim == 3);
    CHECK(pv.vectors.size() == 2);
    CHECK(pv.vectors.at("a")[2] == 3.0);
  }
  SUBCASE("keys are lowercased; duplicates keep the last and warn") {
    std::ofstream out(path);
    out << "2 2\nIschemia 1 1\nischemia 2 2\n";
    out.close();
    std::ostringstream warnings;
    auto pv = load_pretrained_vectors(path, &warnings);
    CHECK(pv.vectors.size() == 1);
    CHECK(pv.vectors.at("ischemia")[0] == 2.0);
    CHECK(warnings.str().find("duplicate") != std::string::npos);
  }
  SUBCASE("dimension drift errors with the line number") {
    std::ofstream out(path);
    out << "2 3\na 1 2 3\nb 4 5\n";
    out.close();
    CHECK_THROWS_WITH_AS(load_pretrained_vectors(path, nullptr), doctest::Contains("line 3"),
                         DataError);
  }
  SUBCASE("absent word simply stays absent") {
    std::ofstream out(path);
    out << "1 2\na 1 2\n";
    out.close();
    auto pv = load_pretrained_vectors(path, nullptr);
    CHECK(pv.vectors.find("zzz") == pv.vectors.end());
  }
  SUBCASE("seeding overwrites matched rows only") {
    StackFixture f(EncoderVariant::kWordEmbed);
    std::ofstream out(path);
    out << "1 6\nrenal 9 9 9 9 9 9\n";
    out.close();
    auto pv = load_pretrained_vectors(path, nullptr);
    Mat before = f.stack.word_embed;
    seed_word_embeddings(f.stack, f.word_vocab, pv);
    const int renal = f.word_vocab.lookup("renal");
    for (int k = 0; k < 6; ++k) CHECK(f.stack.word_embed.at(renal, k) == 9.0);
    const int failure = f.word_vocab.lookup("failure");
    for (int k = 0; k < 6; ++k) {
      CHECK(f.stack.word_embed.at(failure, k) == before.at(failure, k));
    }
    SUBCASE("dim mismatch errors") {
      PretrainedVectors bad;
      bad.dim = 4;
      CHECK_THROWS_AS(seed_word_embeddings(f.stack, f.word_vocab, bad), DataError);
    }
  }
  std::filesystem::remove(path);
}
