#include "ecse/structure.hpp"

#include <cmath>
#include <stdexcept>

namespace ecse {

void Structure::validate() const {
  if (species.size() != positions.size())
    throw std::invalid_argument("Structure: species/position count mismatch");
  if (attribute && attribute->size() != positions.size())
    throw std::invalid_argument("Structure: attribute/position count mismatch");
  if (!targets.forces.empty() && targets.forces.size() != positions.size())
    throw std::invalid_argument("Structure: force/position count mismatch");
  for (const Vec3& p : positions) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      throw std::invalid_argument("Structure: non-finite position");
  }
  for (int s : species) {
    if (s < 0) throw std::invalid_argument("Structure: negative species index");
  }
  if (cell && det(*cell) == 0.0)
    throw std::invalid_argument("Structure: singular cell");
}

AtomicEnvironment rotated(const AtomicEnvironment& env, const Mat3& rotation) {
  AtomicEnvironment out = env;
  for (Vec3& d : out.displacements) d = rotation * d;
  return out;
}

namespace {

const char* const kElements[] = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al",
    "Si", "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe",
    "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",
    "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te",
    "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",  "Re", "Os", "Ir", "Pt",
    "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa",
    "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr"};

}  // namespace

SpeciesTable::SpeciesTable() {
  symbols_.assign(std::begin(kElements), std::end(kElements));
}

int SpeciesTable::index_of(const std::string& symbol) const {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_[i] == symbol) return static_cast<int>(i);
  }
  return -1;
}

int SpeciesTable::add(const std::string& symbol) {
  const int existing = index_of(symbol);
  if (existing >= 0) return existing;
  symbols_.push_back(symbol);
  return static_cast<int>(symbols_.size() - 1);
}

const std::string& SpeciesTable::symbol_of(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= symbols_.size())
    throw std::out_of_range("SpeciesTable: species index out of range");
  return symbols_[static_cast<std::size_t>(index)];
}

}  // namespace ecse
