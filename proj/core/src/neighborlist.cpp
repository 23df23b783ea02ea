#include "ecse/neighborlist.hpp"

#include <cmath>
#include <stdexcept>

namespace ecse {

namespace {

[[noreturn]] void colliding(std::size_t i, std::size_t j, double d) {
  throw std::runtime_error("colliding points: atoms " + std::to_string(i) + " and " +
                           std::to_string(j) + " at distance " + std::to_string(d));
}

}  // namespace

NeighborList::NeighborList(const Structure& s, double r_c, double d_min) : r_c_(r_c) {
  if (!(r_c > 0.0)) throw std::invalid_argument("NeighborList: r_c must be > 0");
  if (!std::isfinite(r_c)) throw std::invalid_argument("NeighborList: r_c must be finite");
  s.validate();
  const std::size_t n = s.size();
  lists_.assign(n, {});

  if (!s.cell) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const Vec3 d = s.positions[j] - s.positions[i];
        const double r = norm(d);
        if (r < d_min) colliding(i, j, r);
        if (r <= r_c) lists_[i].push_back({static_cast<int>(j), {0, 0, 0}, d, r});
      }
    }
    return;
  }

  // Periodic: bound the image search per axis by the spacing between lattice
  // planes, h_k = 1 / |column k of cell^-1|.
  const Mat3& cell = *s.cell;
  const Mat3 inv = inverse(cell);
  std::array<double, 3> plane_h{};
  for (std::size_t k = 0; k < 3; ++k) {
    const Vec3 c = inv.col(k);
    plane_h[k] = 1.0 / norm(c);
  }

  const Vec3 a0 = cell.row(0), a1 = cell.row(1), a2 = cell.row(2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const Vec3 d = s.positions[j] - s.positions[i];
      // Fractional offset: center the shift search window on the image of j
      // nearest to i.
      const Vec3 frac = {dot(d, inv.col(0)), dot(d, inv.col(1)), dot(d, inv.col(2))};
      std::array<std::array<long, 2>, 3> range{};
      for (std::size_t k = 0; k < 3; ++k) {
        const double extent = r_c / plane_h[k];
        range[k][0] = static_cast<long>(std::floor(-frac[k] - extent)) - 1;
        range[k][1] = static_cast<long>(std::ceil(-frac[k] + extent)) + 1;
      }
      for (long n0 = range[0][0]; n0 <= range[0][1]; ++n0) {
        for (long n1 = range[1][0]; n1 <= range[1][1]; ++n1) {
          for (long n2 = range[2][0]; n2 <= range[2][1]; ++n2) {
            if (i == j && n0 == 0 && n1 == 0 && n2 == 0) continue;
            const Vec3 image = d + static_cast<double>(n0) * a0 +
                               static_cast<double>(n1) * a1 +
                               static_cast<double>(n2) * a2;
            const double r = norm(image);
            if (r < d_min) colliding(i, j, r);
            if (r <= r_c) {
              lists_[i].push_back({static_cast<int>(j),
                                   {static_cast<int>(n0), static_cast<int>(n1),
                                    static_cast<int>(n2)},
                                   image, r});
            }
          }
        }
      }
    }
  }
}

AtomicEnvironment environment(const Structure& s, const NeighborList& nl, std::size_t i) {
  if (i >= s.size()) throw std::out_of_range("environment: atom index out of range");
  AtomicEnvironment env;
  env.center_index = static_cast<int>(i);
  env.center_species = s.species[i];
  if (s.attribute) env.center_attribute = (*s.attribute)[i];
  const auto& nbrs = nl.neighbors_of(i);
  env.displacements.reserve(nbrs.size());
  env.distances.reserve(nbrs.size());
  env.neighbor_species.reserve(nbrs.size());
  for (const Neighbor& nb : nbrs) {
    env.displacements.push_back(nb.displacement);
    env.distances.push_back(nb.distance);
    env.neighbor_species.push_back(s.species[static_cast<std::size_t>(nb.index)]);
    if (s.attribute)
      env.neighbor_attributes.push_back((*s.attribute)[static_cast<std::size_t>(nb.index)]);
  }
  return env;
}

}  // namespace ecse
