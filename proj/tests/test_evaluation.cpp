#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "icdattn/errors.hpp"
#include "icdattn/evaluation.hpp"

using namespace icdattn;

namespace {

Mat from_rows(std::initializer_list<std::initializer_list<double>> values) {
  int rows = static_cast<int>(values.size());
  int cols = static_cast<int>(values.begin()->size());
  Mat m(rows, cols);
  int r = 0;
  for (const auto& row : values) {
    int c = 0;
    for (double x : row) m.at(r, c++) = x;
    ++r;
  }
  return m;
}

// O(N^2) pair-counting oracle: concordant pairs plus half the ties.
double auc_oracle(const Mat& scores, const Mat& labels) {
  std::vector<double> pos, neg;
  for (size_t i = 0; i < scores.size(); ++i) {
    (labels.data()[i] != 0.0 ? pos : neg).push_back(scores.data()[i]);
  }
  double wins = 0.0;
  for (double p : pos) {
    for (double n : neg) {
      if (p > n) wins += 1.0;
      else if (p == n) wins += 0.5;
    }
  }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

}  // namespace

TEST_CASE("micro_f1 confusion arithmetic") {
  SUBCASE("tp=2 fp=1 fn=1 gives P=R=F1=2/3") {
    Mat scores = from_rows({{0.9, 0.8, 0.7, 0.1, 0.9, 0.2}});
    Mat labels = from_rows({{1, 1, 0, 1, 0, 0}});
    // threshold 0.5: predictions 1,1,1,0,1,0 -> tp {0,1}, fp {2,4}, fn {3}
    EvalReport r = micro_f1(scores, labels, 0.5);
    CHECK(r.tp == 2);
    CHECK(r.fp == 2);
    CHECK(r.fn == 1);
    CHECK(r.tn == 1);
    CHECK(r.precision == doctest::Approx(0.5));
    CHECK(r.recall == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("definition arithmetic from stated counts") {
    // craft a grid that pools to tp=2, fp=1, fn=1
    Mat scores = from_rows({{0.9, 0.9, 0.9, 0.1}});
    Mat labels = from_rows({{1, 1, 0, 1}});
    EvalReport r = micro_f1(scores, labels, 0.5);
    CHECK(r.tp == 2);
    CHECK(r.fp == 1);
    CHECK(r.fn == 1);
    CHECK(r.precision == doctest::Approx(2.0 / 3.0));
    CHECK(r.recall == doctest::Approx(2.0 / 3.0));
    CHECK(r.micro_f1 == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("perfect predictions give F1=1") {
    Mat scores = from_rows({{0.9, 0.1}, {0.2, 0.8}});
    Mat labels = from_rows({{1, 0}, {0, 1}});
    CHECK(micro_f1(scores, labels, 0.5).micro_f1 == 1.0);
  }
  SUBCASE("all negative predictions with positives present give F1=0") {
    Mat scores = from_rows({{0.1, 0.2}});
    Mat labels = from_rows({{1, 0}});
    EvalReport r = micro_f1(scores, labels, 0.5);
    CHECK(r.micro_f1 == 0.0);
    CHECK(r.precision == 0.0);
    CHECK(r.recall == 0.0);
  }
  SUBCASE("ties at the threshold count positive") {
    Mat scores = from_rows({{0.5}});
    Mat labels = from_rows({{1}});
    CHECK(micro_f1(scores, labels, 0.5).tp == 1);
  }
  SUBCASE("shape mismatch errors") {
    CHECK_THROWS_AS(micro_f1(from_rows({{0.5}}), from_rows({{1, 0}}), 0.5),
                    std::invalid_argument);
  }
}

TEST_CASE("micro_auc") {
  SUBCASE("perfect separation gives 1") {
    Mat scores = from_rows({{0.9, 0.8, 0.2, 0.1}});
    Mat labels = from_rows({{1, 1, 0, 0}});
    CHECK(micro_auc(scores, labels) == doctest::Approx(1.0));
  }
  SUBCASE("all scores identical gives 0.5") {
    Mat scores = from_rows({{0.3, 0.3, 0.3}});
    Mat labels = from_rows({{1, 0, 1}});
    CHECK(micro_auc(scores, labels) == doctest::Approx(0.5));
  }
  SUBCASE("worked pair example gives 0.5") {
    Mat scores = from_rows({{0.9, 0.8, 0.3}});
    Mat labels = from_rows({{1, 0, 1}});
    CHECK(micro_auc(scores, labels) == doctest::Approx(0.5));
    CHECK(auc_oracle(scores, labels) == doctest::Approx(0.5));
  }
  SUBCASE("degenerate labels error") {
    Mat scores = from_rows({{0.9, 0.8}});
    CHECK_THROWS_WITH_AS(micro_auc(scores, from_rows({{1, 1}})), "degenerate labels", DataError);
    CHECK_THROWS_WITH_AS(micro_auc(scores, from_rows({{0, 0}})), "degenerate labels", DataError);
  }
}

TEST_CASE("micro_auc equals the brute-force oracle on random grids") {
  Rng rng(314);
  int done = 0;
  while (done < 200) {
    const int rows = 1 + static_cast<int>(rng.uniform_int(20));
    const int cols = 1 + static_cast<int>(rng.uniform_int(25));
    Mat scores(rows, cols);
    Mat labels(rows, cols);
    for (size_t i = 0; i < scores.size(); ++i) {
      // quantized scores force plenty of ties
      scores.data()[i] = std::round(rng.uniform01() * 8.0) / 8.0;
      labels.data()[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
    }
    bool has_pos = false, has_neg = false;
    for (size_t i = 0; i < labels.size(); ++i) {
      (labels.data()[i] != 0.0 ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;
    CHECK(std::abs(micro_auc(scores, labels) - auc_oracle(scores, labels)) < 1e-9);
    ++done;
  }
}

TEST_CASE("micro_auc is invariant under strictly monotone transforms") {
  Rng rng(2718);
  Mat scores(8, 9);
  Mat labels(8, 9);
  for (size_t i = 0; i < scores.size(); ++i) {
    scores.data()[i] = rng.uniform(-3.0, 3.0);
    labels.data()[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
  }
  labels.data()[0] = 1.0;
  labels.data()[1] = 0.0;
  const double base = micro_auc(scores, labels);
  Mat transformed = scores;
  for (size_t i = 0; i < transformed.size(); ++i) {
    transformed.data()[i] = std::exp(0.7 * transformed.data()[i]) + 5.0;
  }
  CHECK(micro_auc(transformed, labels) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("metrics ignore record order") {
  Rng rng(99);
  Mat scores(6, 4);
  Mat labels(6, 4);
  for (size_t i = 0; i < scores.size(); ++i) {
    scores.data()[i] = rng.uniform01();
    labels.data()[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
  }
  labels.data()[0] = 1.0;
  labels.data()[5] = 0.0;
  Mat scores_flipped(6, 4), labels_flipped(6, 4);
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 4; ++c) {
      scores_flipped.at(5 - r, c) = scores.at(r, c);
      labels_flipped.at(5 - r, c) = labels.at(r, c);
    }
  }
  CHECK(micro_f1(scores, labels, 0.4).micro_f1 ==
        micro_f1(scores_flipped, labels_flipped, 0.4).micro_f1);
  CHECK(micro_auc(scores, labels) == doctest::Approx(micro_auc(scores_flipped, labels_flipped)));
}

TEST_CASE("tune_threshold") {
  SUBCASE("separable pair returns the lowest winning grid point") {
    Mat scores = from_rows({{0.9, 0.1}});
    Mat labels = from_rows({{1, 0}});
    CHECK(tune_threshold(scores, labels) == doctest::Approx(0.11));
  }
  SUBCASE("all labels positive pushes the threshold to 0.01") {
    Mat scores = from_rows({{0.9, 0.6, 0.3}});
    Mat labels = from_rows({{1, 1, 1}});
    CHECK(tune_threshold(scores, labels) == doctest::Approx(0.01));
  }
  SUBCASE("flat F1 keeps the lowest threshold") {
    Mat scores = from_rows({{1.0, 1.0}});
    Mat labels = from_rows({{1, 1}});
    CHECK(tune_threshold(scores, labels) == doctest::Approx(0.01));
  }
  SUBCASE("tuned threshold is at least as good as 0.5 on the tuning set") {
    Rng rng(1234);
    for (int trial = 0; trial < 20; ++trial) {
      Mat scores(5, 6);
      Mat labels(5, 6);
      for (size_t i = 0; i < scores.size(); ++i) {
        scores.data()[i] = rng.uniform01();
        labels.data()[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
      }
      const double t = tune_threshold(scores, labels);
      CHECK(micro_f1(scores, labels, t).micro_f1 >=
            micro_f1(scores, labels, 0.5).micro_f1 - 1e-15);
    }
  }
}

TEST_CASE("per-code thresholds") {
  Mat scores = from_rows({{0.9, 0.2}, {0.8, 0.3}, {0.4, 0.05}});
  Mat labels = from_rows({{1, 1}, {1, 1}, {0, 0}});
  auto thresholds = tune_threshold_per_code(scores, labels);
  REQUIRE(thresholds.size() == 2);
  EvalReport r = micro_f1_per_code_threshold(scores, labels, thresholds);
  CHECK(r.micro_f1 == doctest::Approx(1.0));  // separable per column, not globally
  CHECK(micro_f1(scores, labels, tune_threshold(scores, labels)).micro_f1 < 1.0);
}

TEST_CASE("eval report json and scores csv round trip") {
  EvalReport r;
  r.tp = 4; r.fp = 1; r.fn = 2; r.tn = 9;
  r.precision = 0.8;
  r.recall = 2.0 / 3.0;
  r.micro_f1 = 0.7272727;
  r.micro_auc = 0.91;
  r.threshold = 0.37;
  std::string json = eval_report_json(r);
  CHECK(json.find("\"tp\": 4") != std::string::npos);
  CHECK(json.find("\"threshold\": 0.37") != std::string::npos);

  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "icdattn_scores_test.csv").string();
  Mat scores = from_rows({{0.25, 0.5}, {0.75, 0.125}});
  write_scores_csv(path, {"A", "B"}, {"4010", "486"}, scores);
  ScoresCsv loaded = read_scores_csv(path);
  CHECK(loaded.record_ids == std::vector<std::string>{"A", "B"});
  CHECK(loaded.code_strings == std::vector<std::string>{"4010", "486"});
  for (size_t i = 0; i < scores.size(); ++i) {
    CHECK(loaded.values.data()[i] == scores.data()[i]);
  }
  std::filesystem::remove(path);
}
