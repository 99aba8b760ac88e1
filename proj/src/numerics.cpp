#include "icdattn/numerics.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace icdattn {

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double tanh_act(double x) { return std::tanh(x); }

void softmax_inplace(double* v, int n) {
  if (n <= 0) throw std::invalid_argument("empty softmax input");
  double mx = v[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, v[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    v[i] = std::exp(v[i] - mx);
    sum += v[i];
  }
  for (int i = 0; i < n; ++i) v[i] /= sum;
}

Vec softmax(const Vec& v) {
  if (v.empty()) throw std::invalid_argument("empty softmax input");
  Vec out = v;
  softmax_inplace(out.data(), out.dim());
  return out;
}

// ---- kernels ---------------------------------------------------------------

static void check_matvec(const Mat& m, const Vec& x, const char* what) {
  if (m.cols() != x.dim()) {
    throw std::invalid_argument(std::string(what) + ": dim mismatch (" +
                                std::to_string(m.cols()) + " vs " + std::to_string(x.dim()) + ")");
  }
}

double dot(const double* a, const double* b, int n) {
  double acc = 0.0;
#pragma omp simd reduction(+ : acc)
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double dot(const Vec& a, const Vec& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("dot: dim mismatch");
  return dot(a.data(), b.data(), a.dim());
}

void matvec(const Mat& m, const Vec& x, Vec& y) {
  check_matvec(m, x, "matvec");
  y.assign(m.rows(), 0.0);
  const double* xp = x.data();
  const int cols = m.cols();
  for (int r = 0; r < m.rows(); ++r) {
    y[r] = dot(m.row(r), xp, cols);
  }
}

void matvec_add(const Mat& m, const Vec& x, Vec& y) {
  check_matvec(m, x, "matvec_add");
  if (y.dim() != m.rows()) throw std::invalid_argument("matvec_add: output dim mismatch");
  const double* xp = x.data();
  const int cols = m.cols();
  for (int r = 0; r < m.rows(); ++r) {
    y[r] += dot(m.row(r), xp, cols);
  }
}

void matvec_transpose_add(const Mat& m, const Vec& g, Vec& x_grad) {
  if (m.rows() != g.dim()) throw std::invalid_argument("matvec_transpose_add: dim mismatch");
  if (x_grad.dim() != m.cols()) throw std::invalid_argument("matvec_transpose_add: output dim");
  double* out = x_grad.data();
  const int cols = m.cols();
  for (int r = 0; r < m.rows(); ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    const double* row = m.row(r);
#pragma omp simd
    for (int c = 0; c < cols; ++c) out[c] += gr * row[c];
  }
}

void outer_add(Mat& m, const Vec& g, const Vec& x) {
  if (m.rows() != g.dim() || m.cols() != x.dim()) {
    throw std::invalid_argument("outer_add: dim mismatch");
  }
  const double* xp = x.data();
  const int cols = m.cols();
  for (int r = 0; r < m.rows(); ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    double* row = m.row(r);
#pragma omp simd
    for (int c = 0; c < cols; ++c) row[c] += gr * xp[c];
  }
}

void axpy(double a, const Vec& x, Vec& y) {
  if (x.dim() != y.dim()) throw std::invalid_argument("axpy: dim mismatch");
  double* yp = y.data();
  const double* xp = x.data();
#pragma omp simd
  for (int i = 0; i < x.dim(); ++i) yp[i] += a * xp[i];
}

double norm2(const Vec& v) { return std::sqrt(dot(v, v)); }

namespace ref {

void matvec(const Mat& m, const Vec& x, Vec& y) {
  check_matvec(m, x, "ref::matvec");
  y.assign(m.rows(), 0.0);
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      y[r] += m.at(r, c) * x[c];
    }
  }
}

void matvec_transpose_add(const Mat& m, const Vec& g, Vec& x_grad) {
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      x_grad[c] += m.at(r, c) * g[r];
    }
  }
}

void outer_add(Mat& m, const Vec& g, const Vec& x) {
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      m.at(r, c) += g[r] * x[c];
    }
  }
}

}  // namespace ref

bool all_finite(const double* p, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i])) return false;
  }
  return true;
}

bool all_finite(const Vec& v) { return all_finite(v.data(), static_cast<size_t>(v.dim())); }
bool all_finite(const Mat& m) { return all_finite(m.data(), m.size()); }

// ---- rng -------------------------------------------------------------------

static std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) {
  std::uint64_t sm = seed;
  for (auto& s : s_) s = splitmix64(sm);
}

static inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("uniform: requires lo < hi");
  return lo + (hi - lo) * uniform01();
}

bool Rng::bernoulli(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("bernoulli: p outside [0,1]");
  return uniform01() < p;
}

std::uint64_t Rng::uniform_int(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform_int: zero bound");
  // rejection sampling over the largest multiple of bound
  const std::uint64_t threshold = (0ULL - bound) % bound;
  for (;;) {
    std::uint64_t r = next_u64();
    if (r >= threshold) return r % bound;
  }
}

// ---- adam --------------------------------------------------------------------

AdamState make_adam_state(std::span<const TensorView> params, double lr) {
  AdamState state;
  state.lr = lr;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const auto& p : params) {
    state.m.emplace_back(p.size, 0.0);
    state.v.emplace_back(p.size, 0.0);
  }
  return state;
}

void adam_step(std::span<const TensorView> params, std::span<const TensorView> grads,
               AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: tensor count mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t k = 0; k < params.size(); ++k) {
    const TensorView& p = params[k];
    const TensorView& g = grads[k];
    if (p.size != g.size || p.size != state.m[k].size()) {
      throw std::invalid_argument("adam_step: shape mismatch in tensor " + p.name);
    }
    double* m = state.m[k].data();
    double* v = state.v[k].data();
    for (size_t i = 0; i < p.size; ++i) {
      const double gi = g.data[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.data[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    if (!all_finite(p.data, p.size)) {
      throw std::runtime_error("adam_step: non-finite parameter in " + p.name);
    }
  }
}

}  // namespace icdattn
