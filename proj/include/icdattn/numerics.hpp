#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace icdattn {

// Dense 64-bit float vector. All model math runs in double so that central
// finite differences stay meaningful in the gradient checks.
class Vec {
 public:
  Vec() = default;
  explicit Vec(int dim, double value = 0.0) : v_(static_cast<size_t>(dim), value) {}

  int dim() const { return static_cast<int>(v_.size()); }
  bool empty() const { return v_.empty(); }
  double& operator[](int i) { return v_[static_cast<size_t>(i)]; }
  const double& operator[](int i) const { return v_[static_cast<size_t>(i)]; }
  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  void assign(int dim, double value) { v_.assign(static_cast<size_t>(dim), value); }
  void fill(double value) { for (auto& x : v_) x = value; }

  auto begin() { return v_.begin(); }
  auto end() { return v_.end(); }
  auto begin() const { return v_.begin(); }
  auto end() const { return v_.end(); }

 private:
  std::vector<double> v_;
};

// Dense row-major 64-bit float matrix.
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols, double value = 0.0)
      : rows_(rows), cols_(cols), a_(static_cast<size_t>(rows) * cols, value) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return a_.empty(); }
  size_t size() const { return a_.size(); }
  double& at(int r, int c) { return a_[static_cast<size_t>(r) * cols_ + c]; }
  const double& at(int r, int c) const { return a_[static_cast<size_t>(r) * cols_ + c]; }
  double* row(int r) { return a_.data() + static_cast<size_t>(r) * cols_; }
  const double* row(int r) const { return a_.data() + static_cast<size_t>(r) * cols_; }
  double* data() { return a_.data(); }
  const double* data() const { return a_.data(); }
  void fill(double value) { for (auto& x : a_) x = value; }

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<double> a_;
};

// ---- activations ----------------------------------------------------------

// 1/(1+exp(-x)), branch on sign so exp never overflows.
double sigmoid(double x);
// Derivative expressed through the cached output s = sigmoid(x).
inline double sigmoid_grad_from_value(double s) { return s * (1.0 - s); }
double tanh_act(double x);
inline double tanh_grad_from_value(double t) { return 1.0 - t * t; }

// Max-subtracted softmax; throws on empty input.
Vec softmax(const Vec& v);
void softmax_inplace(double* v, int n);

// ---- kernels ---------------------------------------------------------------

// y = m * x, y += m * x, x_grad += m^T * g, m += g * x^T. These are the hot
// loops; they carry simd pragmas. The `ref` namespace keeps naive serial
// versions around as the oracle the tests compare against.
void matvec(const Mat& m, const Vec& x, Vec& y);
void matvec_add(const Mat& m, const Vec& x, Vec& y);
void matvec_transpose_add(const Mat& m, const Vec& g, Vec& x_grad);
void outer_add(Mat& m, const Vec& g, const Vec& x);
double dot(const Vec& a, const Vec& b);
double dot(const double* a, const double* b, int n);
void axpy(double a, const Vec& x, Vec& y);
double norm2(const Vec& v);

namespace ref {
void matvec(const Mat& m, const Vec& x, Vec& y);
void matvec_transpose_add(const Mat& m, const Vec& g, Vec& x_grad);
void outer_add(Mat& m, const Vec& g, const Vec& x);
}  // namespace ref

bool all_finite(const double* p, size_t n);
bool all_finite(const Vec& v);
bool all_finite(const Mat& m);

// ---- rng -------------------------------------------------------------------

// xoshiro256** seeded through splitmix64. Fixed algorithm so that a seed
// produces the same stream on every platform; see README for the reference.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform draw in [0, 1) with 53 random mantissa bits.
  double uniform01();
  // Uniform draw in [lo, hi); throws unless lo < hi.
  double uniform(double lo, double hi);
  // Bernoulli draw; p=0 never fires, p=1 always fires; throws outside [0,1].
  bool bernoulli(double p);
  // Uniform integer in [0, bound); rejection sampled, no modulo bias.
  std::uint64_t uniform_int(std::uint64_t bound);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> s_{};
};

// ---- parameter views and Adam ----------------------------------------------

// Non-owning flat view over one named parameter (or gradient) tensor.
struct TensorView {
  std::string name;
  double* data = nullptr;
  size_t size = 0;
};

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m, v;  // aligned with the tensor list
};

AdamState make_adam_state(std::span<const TensorView> params, double lr);

// One bias-corrected update. Throws on shape mismatch or non-finite result.
void adam_step(std::span<const TensorView> params, std::span<const TensorView> grads,
               AdamState& state);

}  // namespace icdattn
