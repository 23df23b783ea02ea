#include "ecse/prediction.hpp"

namespace ecse {

std::vector<double> transform_values(const std::vector<double>& values, int rank,
                                     const Mat3& rotation) {
  if (rank == 0) return values;
  if (values.size() != values_size_for_rank(rank))
    throw std::logic_error("transform_values: size does not match rank");
  if (rank == 1) {
    const Vec3 v = rotation * Vec3{values[0], values[1], values[2]};
    return {v.x, v.y, v.z};
  }
  // Rank k: out[a1..ak] = sum_{b1..bk} prod_m R(a_m, b_m) * in[b1..bk].
  const std::size_t n = values.size();
  std::vector<double> out(n, 0.0);
  std::vector<std::size_t> a_idx(static_cast<std::size_t>(rank), 0);
  std::vector<std::size_t> b_idx(static_cast<std::size_t>(rank), 0);
  for (std::size_t a = 0; a < n; ++a) {
    std::size_t rest = a;
    for (int m = rank - 1; m >= 0; --m) {
      a_idx[static_cast<std::size_t>(m)] = rest % 3;
      rest /= 3;
    }
    double acc = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      rest = b;
      for (int m = rank - 1; m >= 0; --m) {
        b_idx[static_cast<std::size_t>(m)] = rest % 3;
        rest /= 3;
      }
      double coeff = 1.0;
      for (int m = 0; m < rank; ++m)
        coeff *= rotation(a_idx[static_cast<std::size_t>(m)],
                          b_idx[static_cast<std::size_t>(m)]);
      acc += coeff * values[b];
    }
    out[a] = acc;
  }
  return out;
}

}  // namespace ecse
