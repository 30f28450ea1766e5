#include "floro/io.h"

#include "floro/elements.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace floro::io {

namespace {

[[noreturn]] void fail_line(int line, const std::string &what) {
  throw std::runtime_error("line " + std::to_string(line) + ": " + what);
}

double parse_double(const std::string &token, int line) {
  size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(token, &used);
  } catch (const std::exception &) {
    fail_line(line, "malformed number '" + token + "'");
  }
  if (used != token.size())
    fail_line(line, "malformed number '" + token + "'");
  return value;
}

std::vector<std::string> split_lines(const std::string &text) {
  std::vector<std::string> lines;
  std::string current;
  for (const char c : text) {
    if (c == '\n') {
      lines.push_back(current);
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  if (!current.empty())
    lines.push_back(current);
  return lines;
}

std::vector<std::string> tokens_of(const std::string &line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok)
    out.push_back(tok);
  return out;
}

std::string format(const char *fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

} // namespace

geom::Molecule parse_xyz(const std::string &text) {
  const auto lines = split_lines(text);
  if (lines.empty())
    fail_line(1, "empty file");
  const auto head = tokens_of(lines[0]);
  if (head.size() != 1)
    fail_line(1, "expected the atom count");
  int count = 0;
  try {
    count = std::stoi(head[0]);
  } catch (const std::exception &) {
    fail_line(1, "malformed atom count '" + head[0] + "'");
  }
  if (count < 1)
    fail_line(1, "atom count must be positive");

  geom::Molecule mol;
  for (int a = 0; a < count; ++a) {
    const int line_no = a + 3; // count line, comment line, then atoms
    if (static_cast<size_t>(line_no) > lines.size())
      fail_line(static_cast<int>(lines.size()) + 1,
                "expected " + std::to_string(count) + " atoms, file ends after " +
                    std::to_string(a));
    const auto cols = tokens_of(lines[line_no - 1]);
    if (cols.size() < 4)
      fail_line(line_no, "expected 'Symbol x y z'");
    const int z = element_number(cols[0]);
    if (z == 0)
      fail_line(line_no, "unknown element '" + cols[0] + "'");
    mol.atoms.push_back({z,
                         {parse_double(cols[1], line_no),
                          parse_double(cols[2], line_no),
                          parse_double(cols[3], line_no)}});
  }
  mol.validate();
  return mol;
}

std::string write_xyz(const geom::Molecule &mol, const std::string &comment) {
  std::string out = std::to_string(mol.size()) + "\n" + comment + "\n";
  for (const auto &a : mol.atoms) {
    out += element_symbol(a.z);
    for (int k = 0; k < 3; ++k)
      out += format(" %.10f", a.position[k]);
    out += "\n";
  }
  return out;
}

std::pair<geom::Molecule, mix::DensityGrid>
parse_chgcar(const std::string &text) {
  const auto lines = split_lines(text);
  size_t row = 0;
  auto next_line = [&](const char *what) -> const std::string & {
    if (row >= lines.size())
      fail_line(static_cast<int>(lines.size()) + 1,
                std::string("unexpected end of file, expected ") + what);
    return lines[row++];
  };

  next_line("comment"); // free-text header
  const auto scale_toks = tokens_of(next_line("scale factor"));
  if (scale_toks.size() != 1)
    fail_line(static_cast<int>(row), "expected a single scale factor");
  const double scale = parse_double(scale_toks[0], static_cast<int>(row));
  if (!(scale > 0.0))
    fail_line(static_cast<int>(row), "unsupported non-positive scale factor");

  mix::Mat3 cell;
  for (int r = 0; r < 3; ++r) {
    const auto toks = tokens_of(next_line("lattice vector"));
    if (toks.size() != 3)
      fail_line(static_cast<int>(row), "expected three lattice components");
    for (int c = 0; c < 3; ++c)
      cell(c, r) = scale * parse_double(toks[c], static_cast<int>(row));
  }

  const auto symbols = tokens_of(next_line("species symbols"));
  const auto count_toks = tokens_of(next_line("species counts"));
  if (symbols.empty() || symbols.size() != count_toks.size())
    fail_line(static_cast<int>(row), "species and count lines disagree");
  std::vector<int> zs;
  for (size_t s = 0; s < symbols.size(); ++s) {
    const int z = element_number(symbols[s]);
    if (z == 0)
      fail_line(static_cast<int>(row) - 1,
                "unknown element '" + symbols[s] + "'");
    int n = 0;
    try {
      n = std::stoi(count_toks[s]);
    } catch (const std::exception &) {
      fail_line(static_cast<int>(row), "malformed count '" + count_toks[s] + "'");
    }
    for (int k = 0; k < n; ++k)
      zs.push_back(z);
  }

  const std::string mode_line = next_line("coordinate mode");
  const auto mode_toks = tokens_of(mode_line);
  if (mode_toks.empty())
    fail_line(static_cast<int>(row), "missing coordinate mode");
  const char mode = static_cast<char>(std::tolower(mode_toks[0][0]));
  if (mode != 'd' && mode != 'c' && mode != 'k')
    fail_line(static_cast<int>(row),
              "unsupported coordinate mode '" + mode_toks[0] + "'");

  geom::Molecule mol;
  mol.cell = cell;
  for (const int z : zs) {
    const auto toks = tokens_of(next_line("atom coordinates"));
    if (toks.size() < 3)
      fail_line(static_cast<int>(row), "expected three coordinates");
    mix::Vec3 p(parse_double(toks[0], static_cast<int>(row)),
                parse_double(toks[1], static_cast<int>(row)),
                parse_double(toks[2], static_cast<int>(row)));
    if (mode == 'd')
      p = cell * p;
    else
      p *= scale;
    mol.atoms.push_back({z, p});
  }
  mol.validate();

  while (row < lines.size() && tokens_of(lines[row]).empty())
    ++row;
  const auto shape_toks = tokens_of(next_line("grid shape"));
  if (shape_toks.size() != 3)
    fail_line(static_cast<int>(row), "expected 'n1 n2 n3'");
  mix::DensityGrid grid;
  for (int a = 0; a < 3; ++a) {
    try {
      grid.spec.shape[a] = std::stoi(shape_toks[a]);
    } catch (const std::exception &) {
      fail_line(static_cast<int>(row),
                "malformed grid dimension '" + shape_toks[a] + "'");
    }
    if (grid.spec.shape[a] < 1)
      fail_line(static_cast<int>(row), "grid dimensions must be positive");
  }
  grid.spec.cell = cell;

  const long expected = grid.spec.voxel_count();
  const double volume = std::abs(cell.determinant());
  if (volume < 1e-12)
    fail_line(static_cast<int>(row), "singular lattice");
  grid.values.reserve(expected);
  while (static_cast<long>(grid.values.size()) < expected) {
    const auto toks = tokens_of(next_line("grid values"));
    for (const auto &tok : toks) {
      if (static_cast<long>(grid.values.size()) == expected)
        fail_line(static_cast<int>(row), "more grid values than n1*n2*n3");
      grid.values.push_back(parse_double(tok, static_cast<int>(row)) / volume);
    }
  }
  // Anything after the charge block (augmentation occupancies, spin
  // channels) is intentionally ignored.
  return {std::move(mol), std::move(grid)};
}

std::string write_chgcar(const geom::Molecule &mol,
                         const mix::DensityGrid &grid) {
  // Species must be grouped; emit atoms regrouped by first appearance.
  std::vector<int> order(mol.atoms.size());
  std::vector<int> unique_z;
  std::vector<int> counts;
  {
    int pos = 0;
    for (size_t a = 0; a < mol.atoms.size(); ++a) {
      const int z = mol.atoms[a].z;
      bool seen = false;
      for (const int u : unique_z)
        seen = seen || u == z;
      if (!seen) {
        unique_z.push_back(z);
        counts.push_back(0);
        for (size_t b = 0; b < mol.atoms.size(); ++b)
          if (mol.atoms[b].z == z) {
            order[pos++] = static_cast<int>(b);
            ++counts.back();
          }
      }
    }
  }

  std::string out = "molecular charge density\n   1.0\n";
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c)
      out += format(" %21.16f", grid.spec.cell(c, r));
    out += "\n";
  }
  std::string names, nums;
  for (size_t s = 0; s < unique_z.size(); ++s) {
    names += "   " + std::string(element_symbol(unique_z[s]));
    nums += "   " + std::to_string(counts[s]);
  }
  out += names + "\n" + nums + "\nDirect\n";

  const mix::Mat3 cell_inv = grid.spec.cell.inverse();
  for (size_t a = 0; a < mol.atoms.size(); ++a) {
    const mix::Vec3 f = cell_inv * mol.atoms[order[a]].position;
    for (int k = 0; k < 3; ++k)
      out += format(" %19.16f", f[k]);
    out += "\n";
  }

  out += "\n " + std::to_string(grid.spec.shape[0]) + " " +
         std::to_string(grid.spec.shape[1]) + " " +
         std::to_string(grid.spec.shape[2]) + "\n";

  const double volume = std::abs(grid.spec.cell.determinant());
  for (size_t n = 0; n < grid.values.size(); ++n) {
    out += format(" %.10E", grid.values[n] * volume);
    if (n % 5 == 4 || n + 1 == grid.values.size())
      out += "\n";
  }
  return out;
}

std::string write_mixture(const mix::Mixture &m, double n_elec) {
  std::string out = "floro mixture format 1\n";
  out += "n_elec" + format(" %.16e", n_elec) + "\n";
  out += "scale" + format(" %.16e", m.scale) + "\n";
  out += std::string("clamp_negative ") + (m.clamp_negative ? "1" : "0") +
         "\n";
  out += "count " + std::to_string(m.gaussians.size()) + "\n";
  for (const auto &g : m.gaussians) {
    out += format("%.16e", g.w);
    for (int k = 0; k < 3; ++k)
      out += format(" %.16e", g.mu[k]);
    // Upper triangle of sigma, row-major: xx xy xz yy yz zz.
    for (int r = 0; r < 3; ++r)
      for (int c = r; c < 3; ++c)
        out += format(" %.16e", g.sigma(r, c));
    out += "\n";
  }
  return out;
}

std::pair<mix::Mixture, double> read_mixture(const std::string &text) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines[0] != "floro mixture format 1")
    throw std::runtime_error("unsupported mixture document schema");

  auto field = [&](size_t row, const std::string &key) -> std::string {
    if (row >= lines.size())
      fail_line(static_cast<int>(row) + 1, "missing '" + key + "'");
    const auto toks = tokens_of(lines[row]);
    if (toks.size() != 2 || toks[0] != key)
      fail_line(static_cast<int>(row) + 1, "expected '" + key + " <value>'");
    return toks[1];
  };

  const double n_elec = parse_double(field(1, "n_elec"), 2);
  mix::Mixture m;
  m.scale = parse_double(field(2, "scale"), 3);
  m.clamp_negative = field(3, "clamp_negative") != "0";
  const int count = std::stoi(field(4, "count"));
  if (count < 0 || lines.size() < static_cast<size_t>(5 + count))
    throw std::runtime_error("mixture document truncated");

  for (int g = 0; g < count; ++g) {
    const int line_no = 6 + g;
    const auto toks = tokens_of(lines[5 + g]);
    if (toks.size() != 10)
      fail_line(line_no, "expected 10 numbers per gaussian");
    double vals[10];
    for (int k = 0; k < 10; ++k)
      vals[k] = parse_double(toks[k], line_no);
    mix::Mat3 sigma;
    sigma << vals[4], vals[5], vals[6], vals[5], vals[7], vals[8], vals[6],
        vals[8], vals[9];
    try {
      m.gaussians.push_back(mix::Gaussian::make(
          vals[0], {vals[1], vals[2], vals[3]}, sigma));
    } catch (const std::exception &e) {
      fail_line(line_no, std::string("invalid gaussian: ") + e.what());
    }
  }
  return {std::move(m), n_elec};
}

std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out)
    throw std::runtime_error("failed writing '" + path + "'");
}

} // namespace floro::io
