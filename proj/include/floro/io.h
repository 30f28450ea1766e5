#pragma once

#include "floro/geometry.h"
#include "floro/mixture.h"

#include <string>
#include <utility>

namespace floro::io {

// Standard XYZ text: atom count, comment, then "Symbol x y z" in Å.
// Parse errors carry the 1-based line number.
geom::Molecule parse_xyz(const std::string &text);
std::string write_xyz(const geom::Molecule &mol, const std::string &comment);

// VASP 5+ CHGCAR. Stored voxel values are ρ·V_cell; they are converted
// to electrons/Å³ on read and back on write. Augmentation-occupancy
// blocks after the charge grid are skipped. Atom order in the returned
// molecule follows the file's species grouping.
std::pair<geom::Molecule, mix::DensityGrid>
parse_chgcar(const std::string &text);
std::string write_chgcar(const geom::Molecule &mol,
                         const mix::DensityGrid &grid);

// Versioned text document for a mixture plus its electron count. Numbers
// are written with 17 significant digits, so a read/write cycle restores
// every double bit-for-bit.
std::string write_mixture(const mix::Mixture &m, double n_elec);
std::pair<mix::Mixture, double> read_mixture(const std::string &text);

std::string read_file(const std::string &path);
void write_file(const std::string &path, const std::string &text);

} // namespace floro::io
