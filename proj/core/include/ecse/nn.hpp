#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ecse::nn {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double silu(double x) { return x * sigmoid(x); }

inline double silu_prime(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

// y = W x + b with W row-major (n_out rows of n_in).
inline void linear(std::span<const double> w, std::span<const double> b,
                   std::span<const double> x, std::span<double> y) {
  const std::size_t n_out = b.size();
  const std::size_t n_in = x.size();
  for (std::size_t r = 0; r < n_out; ++r) {
    double acc = b[r];
    const double* row = w.data() + r * n_in;
    for (std::size_t c = 0; c < n_in; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

// Accumulates gradients of a linear layer: given dL/dy, adds into dL/dW,
// dL/db and dL/dx (dx may be empty when the input is a leaf).
inline void linear_backward(std::span<const double> w, std::span<const double> x,
                            std::span<const double> dy, std::span<double> dw,
                            std::span<double> db, std::span<double> dx) {
  const std::size_t n_out = dy.size();
  const std::size_t n_in = x.size();
  for (std::size_t r = 0; r < n_out; ++r) {
    const double g = dy[r];
    db[r] += g;
    double* dwrow = dw.data() + r * n_in;
    const double* wrow = w.data() + r * n_in;
    for (std::size_t c = 0; c < n_in; ++c) {
      dwrow[c] += g * x[c];
      if (!dx.empty()) dx[c] += g * wrow[c];
    }
  }
}

// Named segments inside a flat parameter vector. `bound` is the half-width of
// the uniform initialization interval; a negative bound marks a segment that
// initializes to a constant instead (layer-norm gain/offset).
struct ParamSegment {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  double init_bound = 0.0;
  double init_constant = 0.0;
  bool constant_init = false;

  std::size_t size() const { return rows * cols; }
};

class ParamLayout {
 public:
  std::size_t add(const std::string& name, std::size_t rows, std::size_t cols,
                  double init_bound) {
    ParamSegment s{name, total_, rows, cols, init_bound, 0.0, false};
    segments_.push_back(s);
    total_ += s.size();
    return segments_.back().offset;
  }

  std::size_t add_constant(const std::string& name, std::size_t rows, std::size_t cols,
                           double value) {
    ParamSegment s{name, total_, rows, cols, 0.0, value, true};
    segments_.push_back(s);
    total_ += s.size();
    return segments_.back().offset;
  }

  std::size_t total() const { return total_; }
  const std::vector<ParamSegment>& segments() const { return segments_; }

 private:
  std::vector<ParamSegment> segments_;
  std::size_t total_ = 0;
};

}  // namespace ecse::nn
