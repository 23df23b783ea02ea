#include "ecse/xyz.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ecse {

namespace {

[[noreturn]] void fail(std::size_t line_no, const std::string& what) {
  throw std::runtime_error("xyz parse error at line " + std::to_string(line_no) + ": " +
                           what);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream iss(s);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

double parse_double(const std::string& tok, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) fail(line_no, "bad number '" + tok + "'");
    return v;
  } catch (const std::invalid_argument&) {
    fail(line_no, "bad number '" + tok + "'");
  } catch (const std::out_of_range&) {
    fail(line_no, "number out of range '" + tok + "'");
  }
}

// Splits a comment line into key=value items, honoring double quotes.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& line) {
  std::vector<std::pair<std::string, std::string>> items;
  std::size_t i = 0;
  const std::size_t n = line.size();
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= n) break;
    std::size_t eq = line.find('=', i);
    if (eq == std::string::npos) {
      // bare token without '=': skip it
      while (i < n && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      continue;
    }
    std::string key = line.substr(i, eq - i);
    i = eq + 1;
    std::string value;
    if (i < n && line[i] == '"') {
      ++i;
      std::size_t close = line.find('"', i);
      if (close == std::string::npos) close = n;
      value = line.substr(i, close - i);
      i = (close < n) ? close + 1 : n;
    } else {
      std::size_t end = i;
      while (end < n && !std::isspace(static_cast<unsigned char>(line[end]))) ++end;
      value = line.substr(i, end - i);
      i = end;
    }
    items.emplace_back(std::move(key), std::move(value));
  }
  return items;
}

struct Column {
  std::string name;
  char kind = 'R';
  int width = 1;
};

std::vector<Column> parse_properties(const std::string& spec, std::size_t line_no) {
  std::vector<Column> cols;
  std::istringstream iss(spec);
  std::string field;
  std::vector<std::string> parts;
  while (std::getline(iss, field, ':')) parts.push_back(field);
  if (parts.size() % 3 != 0) fail(line_no, "malformed Properties spec '" + spec + "'");
  for (std::size_t i = 0; i < parts.size(); i += 3) {
    Column c;
    c.name = parts[i];
    if (parts[i + 1].size() != 1) fail(line_no, "bad Properties type '" + parts[i + 1] + "'");
    c.kind = parts[i + 1][0];
    try {
      c.width = std::stoi(parts[i + 2]);
    } catch (...) {
      fail(line_no, "bad Properties width '" + parts[i + 2] + "'");
    }
    if (c.width < 1) fail(line_no, "bad Properties width");
    cols.push_back(c);
  }
  return cols;
}

}  // namespace

std::vector<Structure> parse_xyz(const std::string& text, const SpeciesTable& table) {
  std::vector<Structure> structures;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;

  while (true) {
    if (!std::getline(in, line)) break;
    ++line_no;
    // Allow blank lines between frames.
    if (split_ws(line).empty()) continue;

    long count = 0;
    {
      const auto toks = split_ws(line);
      if (toks.size() != 1) fail(line_no, "expected atom count");
      try {
        count = std::stol(toks[0]);
      } catch (...) {
        fail(line_no, "malformed atom count '" + toks[0] + "'");
      }
      if (count < 0) fail(line_no, "negative atom count");
    }

    if (!std::getline(in, line)) fail(line_no + 1, "missing comment line");
    ++line_no;

    Structure s;
    std::vector<Column> cols = {{"species", 'S', 1}, {"pos", 'R', 3}};
    for (const auto& [key, value] : parse_key_values(line)) {
      if (key == "Lattice") {
        const auto nums = split_ws(value);
        if (nums.size() != 9) fail(line_no, "Lattice needs 9 numbers");
        Mat3 cell;
        for (std::size_t k = 0; k < 9; ++k) cell.m[k] = parse_double(nums[k], line_no);
        s.cell = cell;
      } else if (key == "Properties") {
        cols = parse_properties(value, line_no);
      } else if (key == "energy") {
        s.targets.energy = parse_double(value, line_no);
      }
    }

    bool has_forces = false;
    std::size_t row_width = 0;
    for (const auto& c : cols) {
      row_width += static_cast<std::size_t>(c.width);
      if (c.name == "forces") has_forces = true;
    }

    for (long a = 0; a < count; ++a) {
      if (!std::getline(in, line)) fail(line_no + 1, "unexpected end of file in atom rows");
      ++line_no;
      const auto toks = split_ws(line);
      if (toks.size() != row_width)
        fail(line_no, "expected " + std::to_string(row_width) + " columns, got " +
                          std::to_string(toks.size()));
      std::size_t at = 0;
      for (const auto& c : cols) {
        if (c.name == "species") {
          const int idx = table.index_of(toks[at]);
          if (idx < 0) fail(line_no, "unknown element symbol '" + toks[at] + "'");
          s.species.push_back(idx);
          at += 1;
        } else if (c.name == "pos") {
          if (c.width != 3) fail(line_no, "pos must have width 3");
          s.positions.push_back({parse_double(toks[at], line_no),
                                 parse_double(toks[at + 1], line_no),
                                 parse_double(toks[at + 2], line_no)});
          at += 3;
        } else if (c.name == "forces") {
          if (c.width != 3) fail(line_no, "forces must have width 3");
          s.targets.forces.push_back({parse_double(toks[at], line_no),
                                      parse_double(toks[at + 1], line_no),
                                      parse_double(toks[at + 2], line_no)});
          at += 3;
        } else {
          at += static_cast<std::size_t>(c.width);  // unrecognized column: skipped
        }
      }
    }
    (void)has_forces;
    s.validate();
    structures.push_back(std::move(s));
  }
  return structures;
}

std::vector<Structure> read_xyz_file(const std::string& path, const SpeciesTable& table) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_xyz(ss.str(), table);
}

namespace {

void append_number(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

std::string write_xyz(const std::vector<Structure>& structures, const SpeciesTable& table) {
  std::string out;
  for (const Structure& s : structures) {
    out += std::to_string(s.size());
    out += '\n';
    if (s.cell) {
      out += "Lattice=\"";
      for (std::size_t k = 0; k < 9; ++k) {
        if (k) out += ' ';
        append_number(out, s.cell->m[k]);
      }
      out += "\" ";
    }
    out += "Properties=species:S:1:pos:R:3";
    if (!s.targets.forces.empty()) out += ":forces:R:3";
    if (s.targets.energy) {
      out += " energy=";
      append_number(out, *s.targets.energy);
    }
    out += '\n';
    for (std::size_t a = 0; a < s.size(); ++a) {
      out += table.symbol_of(s.species[a]);
      for (std::size_t k = 0; k < 3; ++k) {
        out += ' ';
        append_number(out, s.positions[a][k]);
      }
      if (!s.targets.forces.empty()) {
        for (std::size_t k = 0; k < 3; ++k) {
          out += ' ';
          append_number(out, s.targets.forces[a][k]);
        }
      }
      out += '\n';
    }
  }
  return out;
}

void write_xyz_file(const std::string& path, const std::vector<Structure>& structures,
                    const SpeciesTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << write_xyz(structures, table);
}

}  // namespace ecse
