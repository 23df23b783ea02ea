#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ecse/structure.hpp"

namespace ecse {

// Extended-XYZ reader/writer. Recognized comment-line keys: Lattice="...",
// Properties=..., energy=... . Recognized property columns: species:S:1,
// pos:R:3, forces:R:3. Species symbols are resolved through the table
// (unknown symbols are an error). Malformed input is reported with the
// offending line number.
std::vector<Structure> parse_xyz(const std::string& text, const SpeciesTable& table);
std::vector<Structure> read_xyz_file(const std::string& path, const SpeciesTable& table);

std::string write_xyz(const std::vector<Structure>& structures, const SpeciesTable& table);
void write_xyz_file(const std::string& path, const std::vector<Structure>& structures,
                    const SpeciesTable& table);

}  // namespace ecse
