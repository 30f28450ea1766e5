#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

namespace floro::geom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Atom {
  int z;        // atomic number, in {1, 6, 7, 8, 9}
  Vec3 position; // Angstrom
};

// Atom identities and Cartesian positions. The optional cell is only grid
// placement metadata; no periodic images are ever generated from it.
struct Molecule {
  std::vector<Atom> atoms;
  std::optional<Mat3> cell; // rows are lattice vectors, Angstrom

  // Throws std::invalid_argument on empty molecules, non-finite positions
  // or unsupported elements.
  void validate() const;

  int size() const { return static_cast<int>(atoms.size()); }
  double total_mass() const;
  Vec3 center_of_mass() const;
  int total_valence_electrons() const;
};

struct Edge {
  int i, j;
  Vec3 displacement; // r_j - r_i, Angstrom
  double distance;   // |displacement| > 0
};

// Directed edges (both directions stored), sorted by (i, j).
struct NeighborGraph {
  double cutoff = 0.0;
  std::vector<Edge> edges;

  // Indices into `edges` of the edges leaving atom i.
  std::vector<int> edges_from(int i) const;
};

// Orthonormal direction triple with the eigenvalues (amu*A^2) it came
// from, ordered largest to smallest.
struct Frame {
  Vec3 vectors[3];
  double eigenvalues[3];
};

// Exactly the ordered pairs with 0 < d <= cutoff. Atoms with no neighbor
// simply contribute no edges.
NeighborGraph build_neighbor_graph(const Molecule &mol, double cutoff);

// Local moment-of-inertia tensor at one atom:
//   I_ab = sum_k m_k (|r_k|^2 delta_ab - r_ka r_kb)
// summed over graph neighbors k, with r_k relative to the atom.
Mat3 local_moi(const Molecule &mol, const NeighborGraph &graph,
               int atom_index);

// Sign convention for eigenvectors: keep v if v.r_com >= 0, else flip.
// Near-orthogonal ties (|v.r_com| < 1e-10 |v||r_com|, or r_com ~ 0) fall
// back to making the first nonzero component positive.
Vec3 canonicalize(const Vec3 &v, const Vec3 &r_com);

// Eigenvectors of local_moi sorted by descending eigenvalue, each sign-fixed
// against the molecular center of mass as seen from the atom. Near-degenerate
// eigenvalue groups (relative gap < 1e-8) are completed deterministically by
// Gram-Schmidt against the fixed x, y, z axes; an all-zero tensor (isolated
// atom) yields the canonical axes unchanged.
Frame symmetry_breaking_frame(const Molecule &mol, const NeighborGraph &graph,
                              int atom_index);

// True when any atom of the molecule sits close to a canonicalization or
// eigenvalue-degeneracy boundary; equivariance is not guaranteed there.
bool near_frame_tie(const Molecule &mol, const NeighborGraph &graph,
                    double margin = 1e-6);

} // namespace floro::geom
