#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ecse/linalg.hpp"

namespace ecse {

// Reference energy/force labels attached to a structure.
struct Targets {
  std::optional<double> energy;
  std::vector<Vec3> forces;  // empty when absent
};

// A point cloud of atoms. Species are small internal indices into a symbol
// table; `attribute` carries an optional per-atom scalar such as a collinear
// spin. If `cell` is set the structure is periodic with the rows of the
// matrix as lattice vectors.
struct Structure {
  std::vector<Vec3> positions;
  std::vector<int> species;
  std::optional<std::vector<double>> attribute;
  std::optional<Mat3> cell;
  Targets targets;

  std::size_t size() const { return positions.size(); }

  // Throws std::invalid_argument on non-finite positions, size mismatches or
  // a singular cell.
  void validate() const;
};

// All neighbors of one center within a cutoff: displacement vectors
// r_j - r_i (plus periodic image shifts), their cached norms, and the species
// and optional scalar attributes on both ends.
struct AtomicEnvironment {
  int center_index = 0;
  int center_species = 0;
  std::optional<double> center_attribute;
  std::vector<Vec3> displacements;
  std::vector<double> distances;
  std::vector<int> neighbor_species;
  std::vector<double> neighbor_attributes;  // empty when the structure has none

  std::size_t size() const { return displacements.size(); }
};

// Rotates every displacement into the given row-basis rotation (distances are
// carried over unchanged; rotations preserve norms).
AtomicEnvironment rotated(const AtomicEnvironment& env, const Mat3& rotation);

// Species symbol table. Starts from the standard element symbols; custom
// symbols can be appended (they get the next free index).
class SpeciesTable {
 public:
  SpeciesTable();

  int index_of(const std::string& symbol) const;  // -1 when unknown
  int add(const std::string& symbol);             // existing index if present
  const std::string& symbol_of(int index) const;
  std::size_t size() const { return symbols_.size(); }

 private:
  std::vector<std::string> symbols_;
};

}  // namespace ecse
