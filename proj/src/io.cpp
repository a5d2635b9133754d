#include "sandpile/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace sandpile {

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

double parse_real(const std::string& s, int line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw std::runtime_error("line " + std::to_string(line) +
                             ": not a number: '" + s + "'");
  }
  return v;
}

void expect_header(std::istream& is, const std::string& header) {
  std::string line;
  if (!std::getline(is, line) || line != header) {
    throw std::runtime_error("expected header '" + header + "'");
  }
}

void write_cell(std::ostream& os, Vec2 c, double v) {
  os << format_real(c.x) << ',' << format_real(c.y) << ',' << format_real(v)
     << '\n';
}

}  // namespace

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_field_csv(std::ostream& os, const GridField& field) {
  os << "x,y,value\n";
  for (std::size_t c = 0; c < field.values.size(); ++c) {
    if (field.grid.inside(c)) write_cell(os, field.grid.center(c), field.values[c]);
  }
}

GridField read_field_csv(std::istream& is, const Grid& grid) {
  expect_header(is, "x,y,value");
  GridField f{grid, std::vector<double>(grid.cell_count(), 0.0)};
  std::string line;
  int n = 1;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    const auto cols = split_row(line);
    if (cols.size() != 3) {
      throw std::runtime_error("line " + std::to_string(n) + ": expected 3 columns");
    }
    const Vec2 x{parse_real(cols[0], n), parse_real(cols[1], n)};
    const std::size_t cell = grid.locate(x);
    if (!grid.inside(cell) || distance(grid.center(cell), x) > 1e-9 * grid.spacing()) {
      throw std::runtime_error("line " + std::to_string(n) +
                               ": point is not an inside cell center");
    }
    f.values[cell] = parse_real(cols[2], n);
  }
  return f;
}

void write_path_csv(std::ostream& os, const PathMeasure& mu) {
  os << "x,y,value\n";
  for (std::size_t c = 0; c < mu.density.size(); ++c) {
    if (mu.grid.inside(c) || mu.density[c] != 0.0) {
      write_cell(os, mu.grid.center(c), mu.density[c]);
    }
  }
}

void write_boundary_csv(std::ostream& os, const BoundaryMeasure& nu) {
  os << "edge_index,edge_parameter,mass\n";
  for (const auto& a : nu.atoms) {
    os << a.point.edge_index << ',' << format_real(a.point.edge_parameter) << ','
       << format_real(a.mass) << '\n';
  }
}

BoundaryMeasure read_boundary_csv(std::istream& is, const ConvexDomain& domain) {
  expect_header(is, "edge_index,edge_parameter,mass");
  BoundaryMeasure nu;
  std::string line;
  int n = 1;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    const auto cols = split_row(line);
    if (cols.size() != 3) {
      throw std::runtime_error("line " + std::to_string(n) + ": expected 3 columns");
    }
    const double e = parse_real(cols[0], n);
    if (e < 0 || e >= static_cast<double>(domain.edge_count()) ||
        e != static_cast<double>(static_cast<std::size_t>(e))) {
      throw std::runtime_error("line " + std::to_string(n) + ": bad edge index");
    }
    BoundaryAtom atom;
    atom.point = domain.boundary_point(static_cast<std::size_t>(e), parse_real(cols[1], n));
    atom.mass = parse_real(cols[2], n);
    nu.atoms.push_back(atom);
  }
  return nu;
}

}  // namespace sandpile
