#include "floro/geometry.h"

#include "floro/elements.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace floro::geom {

void Molecule::validate() const {
  if (atoms.empty())
    throw std::invalid_argument("molecule has no atoms");
  for (const auto &a : atoms) {
    if (!element_supported(a.z))
      throw std::invalid_argument("unsupported element Z=" +
                                  std::to_string(a.z));
    if (!a.position.allFinite())
      throw std::invalid_argument("non-finite atom position");
  }
}

double Molecule::total_mass() const {
  double m = 0.0;
  for (const auto &a : atoms)
    m += atomic_mass(a.z);
  return m;
}

Vec3 Molecule::center_of_mass() const {
  Vec3 com = Vec3::Zero();
  double m = 0.0;
  for (const auto &a : atoms) {
    const double ma = atomic_mass(a.z);
    com += ma * a.position;
    m += ma;
  }
  return com / m;
}

int Molecule::total_valence_electrons() const {
  int n = 0;
  for (const auto &a : atoms)
    n += valence_electrons(a.z);
  return n;
}

std::vector<int> NeighborGraph::edges_from(int i) const {
  std::vector<int> out;
  for (int e = 0; e < static_cast<int>(edges.size()); ++e)
    if (edges[e].i == i)
      out.push_back(e);
  return out;
}

NeighborGraph build_neighbor_graph(const Molecule &mol, double cutoff) {
  if (!(cutoff > 0.0))
    throw std::invalid_argument("cutoff must be positive");
  mol.validate();
  NeighborGraph g;
  g.cutoff = cutoff;
  const int n = mol.size();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j)
        continue;
      const Vec3 d = mol.atoms[j].position - mol.atoms[i].position;
      const double dist = d.norm();
      if (dist > 0.0 && dist <= cutoff)
        g.edges.push_back({i, j, d, dist});
    }
  }
  // i-major loop already yields (i, j) order; keep the contract explicit.
  std::sort(g.edges.begin(), g.edges.end(), [](const Edge &a, const Edge &b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  return g;
}

Mat3 local_moi(const Molecule &mol, const NeighborGraph &graph,
               int atom_index) {
  if (atom_index < 0 || atom_index >= mol.size())
    throw std::invalid_argument("atom index out of range");
  Mat3 inertia = Mat3::Zero();
  const Vec3 center = mol.atoms[atom_index].position;
  for (const auto &e : graph.edges) {
    if (e.i != atom_index)
      continue;
    const Vec3 r = mol.atoms[e.j].position - center;
    const double m = atomic_mass(mol.atoms[e.j].z);
    inertia += m * (r.squaredNorm() * Mat3::Identity() - r * r.transpose());
  }
  return inertia;
}

Vec3 canonicalize(const Vec3 &v, const Vec3 &r_com) {
  const double vn = v.norm();
  if (!(vn > 0.0))
    throw std::invalid_argument("cannot canonicalize a zero vector");
  const double dot = v.dot(r_com);
  const double tie_scale = 1e-10 * vn * r_com.norm();
  if (std::abs(dot) >= tie_scale && r_com.norm() > 0.0)
    return dot >= 0.0 ? v : Vec3(-v);
  // Tie: first nonzero component decides the sign.
  for (int k = 0; k < 3; ++k) {
    if (v[k] != 0.0)
      return v[k] > 0.0 ? v : Vec3(-v);
  }
  return v; // unreachable for nonzero v
}

namespace {

// Deterministic orthonormal basis of the eigenspace spanned by the columns
// of `basis`: Gram-Schmidt of the projected reference axes x, y, z.
void complete_degenerate_group(Eigen::Matrix3d &vectors, int first,
                               int count) {
  const Mat3 projector = [&] {
    Mat3 p = Mat3::Zero();
    for (int k = first; k < first + count; ++k)
      p += vectors.col(k) * vectors.col(k).transpose();
    return p;
  }();
  int filled = 0;
  Eigen::Matrix3d out = Eigen::Matrix3d::Zero();
  for (int axis = 0; axis < 3 && filled < count; ++axis) {
    Vec3 cand = projector * Vec3::Unit(axis);
    for (int k = 0; k < filled; ++k)
      cand -= cand.dot(out.col(k)) * out.col(k);
    const double n = cand.norm();
    if (n > 1e-8) {
      out.col(filled++) = cand / n;
    }
  }
  // A k-dimensional subspace always admits k of the three projected axes.
  for (int k = 0; k < count; ++k)
    vectors.col(first + k) = out.col(k);
}

bool lex_greater(const Vec3 &a, const Vec3 &b) {
  for (int k = 0; k < 3; ++k) {
    if (std::abs(a[k] - b[k]) > 1e-12)
      return a[k] > b[k];
  }
  return false;
}

} // namespace

Frame symmetry_breaking_frame(const Molecule &mol, const NeighborGraph &graph,
                              int atom_index) {
  const Mat3 inertia = local_moi(mol, graph, atom_index);
  const double scale = inertia.cwiseAbs().maxCoeff();

  Frame frame;
  if (scale <= 1e-14) {
    // Isolated atom (or no massful neighbors): canonical axes.
    for (int k = 0; k < 3; ++k) {
      frame.vectors[k] = Vec3::Unit(k);
      frame.eigenvalues[k] = 0.0;
    }
    return frame;
  }

  Eigen::SelfAdjointEigenSolver<Mat3> solver(inertia);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("moment-of-inertia eigendecomposition failed");

  // Descending eigenvalue order.
  Eigen::Vector3d evals;
  Eigen::Matrix3d evecs;
  for (int k = 0; k < 3; ++k) {
    evals[k] = solver.eigenvalues()[2 - k];
    evecs.col(k) = solver.eigenvectors().col(2 - k);
  }

  // Replace near-degenerate groups by the deterministic completion.
  int k = 0;
  while (k < 3) {
    int end = k + 1;
    while (end < 3 && std::abs(evals[k] - evals[end]) < 1e-8 * scale)
      ++end;
    if (end - k > 1)
      complete_degenerate_group(evecs, k, end - k);
    k = end;
  }

  const Vec3 r_com = mol.center_of_mass() - mol.atoms[atom_index].position;
  for (int c = 0; c < 3; ++c)
    evecs.col(c) = canonicalize(evecs.col(c), r_com);

  // Order inside a degenerate group: lexicographic on the canonicalized
  // vectors, largest first.
  k = 0;
  while (k < 3) {
    int end = k + 1;
    while (end < 3 && std::abs(evals[k] - evals[end]) < 1e-8 * scale)
      ++end;
    for (int a = k; a < end; ++a)
      for (int b = a + 1; b < end; ++b)
        if (lex_greater(evecs.col(b), evecs.col(a)))
          evecs.col(a).swap(evecs.col(b));
    k = end;
  }

  for (int c = 0; c < 3; ++c) {
    frame.vectors[c] = evecs.col(c);
    frame.eigenvalues[c] = evals[c];
  }
  return frame;
}

bool near_frame_tie(const Molecule &mol, const NeighborGraph &graph,
                    double margin) {
  const Vec3 com = mol.center_of_mass();
  for (int i = 0; i < mol.size(); ++i) {
    const Mat3 inertia = local_moi(mol, graph, i);
    const double scale = inertia.cwiseAbs().maxCoeff();
    if (scale <= 1e-14)
      return true;
    Eigen::SelfAdjointEigenSolver<Mat3> solver(inertia);
    const auto &evals = solver.eigenvalues();
    for (int k = 0; k + 1 < 3; ++k)
      if (std::abs(evals[k] - evals[k + 1]) < margin * scale)
        return true;
    const Vec3 r_com = com - mol.atoms[i].position;
    const double rn = r_com.norm();
    if (rn < margin)
      return true;
    for (int k = 0; k < 3; ++k)
      if (std::abs(solver.eigenvectors().col(k).dot(r_com)) < margin * rn)
        return true;
  }
  return false;
}

} // namespace floro::geom
