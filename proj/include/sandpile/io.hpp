#pragma once

#include <iosfwd>
#include <string>

#include "sandpile/fields.hpp"
#include "sandpile/partition.hpp"

namespace sandpile {

// Comma-separated dumps. Reals use 17 significant digits so a dump parses
// back to the same doubles.

std::string format_real(double v);

/// Header `x,y,value`, one row per inside cell in row-major order.
void write_field_csv(std::ostream& os, const GridField& field);
/// Inverse of write_field_csv on the same grid. Throws std::runtime_error on
/// malformed rows or rows that do not hit an inside cell.
GridField read_field_csv(std::istream& is, const Grid& grid);

/// Same layout as a field, value = density. Cells outside the domain appear
/// only when they carry mass.
void write_path_csv(std::ostream& os, const PathMeasure& mu);

/// Header `edge_index,edge_parameter,mass`.
void write_boundary_csv(std::ostream& os, const BoundaryMeasure& nu);
BoundaryMeasure read_boundary_csv(std::istream& is, const ConvexDomain& domain);

}  // namespace sandpile
