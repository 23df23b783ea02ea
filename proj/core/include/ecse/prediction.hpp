#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ecse/linalg.hpp"

namespace ecse {

enum class OutputKind { Scalar, Vector, Tensor };

// A scalar, 3-vector or rank-k Cartesian tensor output together with its
// transformation rule. `values` holds 1, 3 or 3^k reals; `per_atom`, when
// populated, holds one row of the same width per atom and sums to `values`.
struct Prediction {
  OutputKind kind = OutputKind::Scalar;
  int rank = 0;  // 0 scalar, 1 vector, k >= 2 tensor
  std::vector<double> values;
  std::vector<double> per_atom;  // empty or n_atoms * values.size()

  static Prediction scalar(double v) { return {OutputKind::Scalar, 0, {v}, {}}; }
  static Prediction vector(const Vec3& v) {
    return {OutputKind::Vector, 1, {v.x, v.y, v.z}, {}};
  }

  double scalar_value() const {
    if (values.size() != 1) throw std::logic_error("Prediction: not a scalar");
    return values[0];
  }
  Vec3 vector_value() const {
    if (values.size() != 3) throw std::logic_error("Prediction: not a vector");
    return {values[0], values[1], values[2]};
  }
  std::size_t width() const { return values.size(); }
};

inline std::size_t values_size_for_rank(int rank) {
  std::size_t n = 1;
  for (int i = 0; i < rank; ++i) n *= 3;
  return n;
}

// Applies the rank-appropriate transformation of `rotation` (a row-basis
// rotation matrix) to the prediction values: identity for scalars, matrix
// action for vectors, index-by-index conjugation for rank-k tensors.
std::vector<double> transform_values(const std::vector<double>& values, int rank,
                                     const Mat3& rotation);

inline Prediction transformed(const Prediction& p, const Mat3& rotation) {
  Prediction out = p;
  out.values = transform_values(p.values, p.rank, rotation);
  if (!p.per_atom.empty()) {
    const std::size_t w = p.width();
    const std::size_t n = p.per_atom.size() / w;
    for (std::size_t a = 0; a < n; ++a) {
      std::vector<double> row(p.per_atom.begin() + static_cast<long>(a * w),
                              p.per_atom.begin() + static_cast<long>((a + 1) * w));
      row = transform_values(row, p.rank, rotation);
      for (std::size_t k = 0; k < w; ++k) out.per_atom[a * w + k] = row[k];
    }
  }
  return out;
}

}  // namespace ecse
