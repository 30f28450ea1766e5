#pragma once

#include <Eigen/Dense>

#include <array>
#include <vector>

namespace floro::mix {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Anisotropic 3D normal with a signed weight in electrons. The Cholesky
// factor, inverse and normalizer are cached at construction so point
// evaluation is a quadratic form and one exp.
struct Gaussian {
  double w = 0.0;
  Vec3 mu = Vec3::Zero();
  Mat3 sigma = Mat3::Identity();

  Mat3 sigma_inv = Mat3::Identity();
  Mat3 chol_lower = Mat3::Identity();
  double norm_const = 0.0; // (2*pi)^{-3/2} det(sigma)^{-1/2}

  static Gaussian make(double w, const Vec3 &mu, const Mat3 &sigma);
  static Gaussian from_cholesky(double w, const Vec3 &mu, const Mat3 &lower);

  double mahalanobis2(const Vec3 &r) const;
  double pdf(const Vec3 &r) const; // unweighted N(r | mu, sigma)
};

// Signed Gaussian mixture with an optional negative-density clamp and a
// global scale: density(r) = scale * relu(sum_j w_j N(r)).
struct Mixture {
  std::vector<Gaussian> gaussians;
  double scale = 1.0;
  bool clamp_negative = true;

  double eval_point(const Vec3 &r) const;
};

Mixture rotated(const Mixture &m, const Mat3 &rot);
Mixture translated(const Mixture &m, const Vec3 &t);

// Voxel grid in a (possibly non-orthogonal) box. `cell` holds the three
// lattice vectors as columns; a fractional coordinate f maps to the
// Cartesian point origin + cell * f. Values are stored with the first
// index fastest (Fortran order), matching VASP volumetric files.
struct GridSpec {
  Vec3 origin = Vec3::Zero();
  Mat3 cell = Mat3::Identity();
  std::array<int, 3> shape = {1, 1, 1};

  long voxel_count() const {
    return static_cast<long>(shape[0]) * shape[1] * shape[2];
  }
  double voxel_volume() const;
};

// Corner sampling places voxel (i,j,k) at fractional (i/n1, j/n2, k/n3)
// like VASP; Centered adds half a voxel on each axis.
enum class Sampling { Corner, Centered };

struct DensityGrid {
  GridSpec spec;
  std::vector<double> values; // electrons / A^3

  long index(int i, int j, int k) const {
    return i + static_cast<long>(spec.shape[0]) *
                   (j + static_cast<long>(spec.shape[1]) * k);
  }
  Vec3 point(int i, int j, int k, Sampling sampling) const;
};

constexpr double kDefaultPruneThreshold = 60.0; // Mahalanobis^2

// Inclusive voxel index window covering a Gaussian's Mahalanobis
// ellipsoid, found through its axis-aligned bounds in fractional
// coordinates. `empty` when the ellipsoid misses the grid entirely.
struct VoxelWindow {
  int lo[3];
  int hi[3];
  bool empty = false;
};

VoxelWindow covering_window(const Gaussian &g, const GridSpec &spec,
                            const Mat3 &cell_inv, Sampling sampling,
                            double threshold);

// Evaluates the mixture at every voxel. Each Gaussian only touches the
// voxels inside its Mahalanobis^2 <= prune_threshold ellipsoid (located
// through a fractional-coordinate bounding box), so the cost scales with
// covered volume instead of grid size. Threads split the slowest axis
// into slabs; every voxel is written by one worker and accumulates its
// Gaussians in index order, so the result is bit-identical for any
// thread count.
DensityGrid rasterize(const Mixture &m, const GridSpec &spec,
                      Sampling sampling = Sampling::Corner,
                      double prune_threshold = kDefaultPruneThreshold,
                      int threads = 1);

// Riemann sum of |values| times the voxel volume, in electrons.
double integrate(const DensityGrid &grid);

// Rescales so the rasterized density integrates to n_elec.
Mixture normalize(const Mixture &m, const GridSpec &spec, double n_elec,
                  Sampling sampling = Sampling::Corner,
                  double prune_threshold = kDefaultPruneThreshold,
                  int threads = 1);

// Normalized mean absolute error in percent:
// 100 * sum|ref - pred| / sum|ref|. The variant with an explicit electron
// count replaces the denominator by n_elec / dV.
double nmae(const DensityGrid &pred, const DensityGrid &ref);
double nmae_nelec(const DensityGrid &pred, const DensityGrid &ref,
                  double n_elec);

} // namespace floro::mix
