#pragma once

#include <array>
#include <vector>

#include "ecse/structure.hpp"

namespace ecse {

// One directed neighbor entry: atom `index` reached from the center through
// periodic image `shift` (all zeros for non-periodic structures).
struct Neighbor {
  int index;
  std::array<int, 3> shift;
  Vec3 displacement;  // r_j + shift * cell - r_i
  double distance;
};

// Per-atom neighbor lists within a cutoff. Brute-force enumeration over all
// lattice images that can reach into the cutoff sphere; pairs at exactly the
// cutoff distance are included (their weights vanish there anyway). Symmetric
// by construction: (i -> j, shift) is present iff (j -> i, -shift) is.
class NeighborList {
 public:
  // d_min guards against colliding points; any pair closer than that throws.
  NeighborList(const Structure& s, double r_c, double d_min = 1e-3);

  double cutoff() const { return r_c_; }
  const std::vector<Neighbor>& neighbors_of(std::size_t i) const { return lists_[i]; }
  std::size_t size() const { return lists_.size(); }

 private:
  double r_c_;
  std::vector<std::vector<Neighbor>> lists_;
};

// Extracts the environment of atom i from a prebuilt neighbor list.
AtomicEnvironment environment(const Structure& s, const NeighborList& nl, std::size_t i);

}  // namespace ecse
