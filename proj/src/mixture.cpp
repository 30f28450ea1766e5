#include "floro/mixture.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace floro::mix {

namespace {

constexpr double kInvTwoPiPow32 = 0.063493635934240969; // (2*pi)^{-3/2}

void finish_cache(Gaussian &g) {
  const Mat3 &lower = g.chol_lower;
  const double det_l = lower(0, 0) * lower(1, 1) * lower(2, 2);
  if (!(det_l > 0.0) || !lower.allFinite())
    throw std::invalid_argument("covariance is not positive definite");
  g.norm_const = kInvTwoPiPow32 / det_l;
  const Mat3 lower_inv =
      lower.triangularView<Eigen::Lower>().solve(Mat3::Identity());
  g.sigma_inv = lower_inv.transpose() * lower_inv;
}

} // namespace

Gaussian Gaussian::make(double w, const Vec3 &mu, const Mat3 &sigma) {
  const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("covariance is not symmetric");
  Gaussian g;
  g.w = w;
  g.mu = mu;
  g.sigma = 0.5 * (sigma + sigma.transpose());
  Eigen::LLT<Mat3> llt(g.sigma);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("covariance is not positive definite");
  g.chol_lower = llt.matrixL();
  finish_cache(g);
  return g;
}

Gaussian Gaussian::from_cholesky(double w, const Vec3 &mu, const Mat3 &lower) {
  Gaussian g;
  g.w = w;
  g.mu = mu;
  g.chol_lower = lower.triangularView<Eigen::Lower>();
  g.sigma = g.chol_lower * g.chol_lower.transpose();
  finish_cache(g);
  return g;
}

double Gaussian::mahalanobis2(const Vec3 &r) const {
  const Vec3 d = r - mu;
  return d.dot(sigma_inv * d);
}

double Gaussian::pdf(const Vec3 &r) const {
  return norm_const * std::exp(-0.5 * mahalanobis2(r));
}

double Mixture::eval_point(const Vec3 &r) const {
  double sum = 0.0;
  for (const auto &g : gaussians)
    sum += g.w * g.pdf(r);
  if (clamp_negative && sum < 0.0)
    sum = 0.0;
  return scale * sum;
}

Mixture rotated(const Mixture &m, const Mat3 &rot) {
  Mixture out = m;
  for (auto &g : out.gaussians)
    g = Gaussian::make(g.w, rot * g.mu, rot * g.sigma * rot.transpose());
  return out;
}

Mixture translated(const Mixture &m, const Vec3 &t) {
  Mixture out = m;
  for (auto &g : out.gaussians)
    g.mu += t;
  return out;
}

double GridSpec::voxel_volume() const {
  return std::abs(cell.determinant()) / static_cast<double>(voxel_count());
}

Vec3 DensityGrid::point(int i, int j, int k, Sampling sampling) const {
  const double off = sampling == Sampling::Corner ? 0.0 : 0.5;
  const Vec3 f((i + off) / spec.shape[0], (j + off) / spec.shape[1],
               (k + off) / spec.shape[2]);
  return spec.origin + spec.cell * f;
}

// The ellipsoid maps to fractional coordinates through cell^{-1}; its
// axis-aligned bounds follow from the diagonal of the mapped covariance.
VoxelWindow covering_window(const Gaussian &g, const GridSpec &spec,
                            const Mat3 &cell_inv, Sampling sampling,
                            double threshold) {
  const Vec3 f0 = cell_inv * (g.mu - spec.origin);
  const Mat3 frac_cov = cell_inv * g.sigma * cell_inv.transpose();
  const double off = sampling == Sampling::Corner ? 0.0 : 0.5;
  VoxelWindow range;
  for (int a = 0; a < 3; ++a) {
    const double hw = std::sqrt(threshold * frac_cov(a, a));
    const int n = spec.shape[a];
    const double lo_d = std::ceil((f0[a] - hw) * n - off);
    const double hi_d = std::floor((f0[a] + hw) * n - off);
    const int lo =
        static_cast<int>(std::clamp(lo_d, 0.0, static_cast<double>(n)));
    const int hi =
        static_cast<int>(std::clamp(hi_d, -1.0, static_cast<double>(n - 1)));
    if (lo > hi)
      range.empty = true;
    range.lo[a] = lo;
    range.hi[a] = hi;
  }
  return range;
}

DensityGrid rasterize(const Mixture &m, const GridSpec &spec,
                      Sampling sampling, double prune_threshold,
                      int threads) {
  if (prune_threshold < 0.0)
    throw std::invalid_argument("prune threshold must be non-negative");
  if (std::abs(spec.cell.determinant()) < 1e-12)
    throw std::invalid_argument("grid cell is singular");
  for (int a = 0; a < 3; ++a)
    if (spec.shape[a] < 1)
      throw std::invalid_argument("grid shape must be at least 1 per axis");

  DensityGrid grid;
  grid.spec = spec;
  grid.values.assign(spec.voxel_count(), 0.0);
  const Mat3 cell_inv = spec.cell.inverse();

  std::vector<VoxelWindow> ranges;
  ranges.reserve(m.gaussians.size());
  for (const auto &g : m.gaussians)
    ranges.push_back(
        covering_window(g, spec, cell_inv, sampling, prune_threshold));

  const int n3 = spec.shape[2];
  threads = std::max(1, std::min(threads, n3));

  auto worker = [&](int k_begin, int k_end) {
    for (size_t gi = 0; gi < m.gaussians.size(); ++gi) {
      const auto &range = ranges[gi];
      if (range.empty)
        continue;
      const auto &g = m.gaussians[gi];
      const int klo = std::max(range.lo[2], k_begin);
      const int khi = std::min(range.hi[2], k_end - 1);
      for (int k = klo; k <= khi; ++k)
        for (int j = range.lo[1]; j <= range.hi[1]; ++j) {
          long idx = grid.index(range.lo[0], j, k);
          for (int i = range.lo[0]; i <= range.hi[0]; ++i, ++idx) {
            const double m2 = g.mahalanobis2(grid.point(i, j, k, sampling));
            if (m2 <= prune_threshold) {
              const double pv = g.norm_const * std::exp(-0.5 * m2);
              grid.values[idx] += g.w * pv;
            }
          }
        }
    }
  };

  if (threads == 1) {
    worker(0, n3);
  } else {
    const int slab = (n3 + threads - 1) / threads;
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back(worker, t * slab, std::min(n3, (t + 1) * slab));
    for (auto &th : pool)
      th.join();
  }

  for (auto &v : grid.values) {
    if (m.clamp_negative && v < 0.0)
      v = 0.0;
    v *= m.scale;
  }
  return grid;
}

double integrate(const DensityGrid &grid) {
  if (static_cast<long>(grid.values.size()) != grid.spec.voxel_count())
    throw std::invalid_argument("grid value count does not match its shape");
  const long plane =
      static_cast<long>(grid.spec.shape[0]) * grid.spec.shape[1];
  double sum = 0.0;
  for (int k = 0; k < grid.spec.shape[2]; ++k) {
    double part = 0.0;
    const long base = plane * k;
    for (long idx = base; idx < base + plane; ++idx)
      part += std::abs(grid.values[idx]);
    sum += part;
  }
  return sum * grid.spec.voxel_volume();
}

Mixture normalize(const Mixture &m, const GridSpec &spec, double n_elec,
                  Sampling sampling, double prune_threshold, int threads) {
  const double total =
      integrate(rasterize(m, spec, sampling, prune_threshold, threads));
  if (!(total > 0.0))
    throw std::runtime_error("cannot normalize a density with zero integral");
  Mixture out = m;
  out.scale = m.scale * n_elec / total;
  return out;
}

namespace {

void check_same_spec(const DensityGrid &a, const DensityGrid &b) {
  if (a.spec.shape != b.spec.shape ||
      (a.spec.origin - b.spec.origin).cwiseAbs().maxCoeff() > 1e-9 ||
      (a.spec.cell - b.spec.cell).cwiseAbs().maxCoeff() > 1e-9)
    throw std::invalid_argument("grids do not share a voxel layout");
  if (static_cast<long>(a.values.size()) != a.spec.voxel_count() ||
      static_cast<long>(b.values.size()) != b.spec.voxel_count())
    throw std::invalid_argument("grid value count does not match its shape");
}

double abs_error_sum(const DensityGrid &pred, const DensityGrid &ref) {
  const long plane = static_cast<long>(ref.spec.shape[0]) * ref.spec.shape[1];
  double err = 0.0;
  for (int k = 0; k < ref.spec.shape[2]; ++k) {
    double part = 0.0;
    const long base = plane * k;
    for (long idx = base; idx < base + plane; ++idx)
      part += std::abs(ref.values[idx] - pred.values[idx]);
    err += part;
  }
  return err;
}

} // namespace

double nmae(const DensityGrid &pred, const DensityGrid &ref) {
  check_same_spec(pred, ref);
  double denom = 0.0;
  for (const double v : ref.values)
    denom += std::abs(v);
  if (denom == 0.0)
    throw std::runtime_error("reference density is identically zero");
  return 100.0 * abs_error_sum(pred, ref) / denom;
}

double nmae_nelec(const DensityGrid &pred, const DensityGrid &ref,
                  double n_elec) {
  check_same_spec(pred, ref);
  if (!(n_elec > 0.0))
    throw std::runtime_error("electron count must be positive");
  const double denom = n_elec / ref.spec.voxel_volume();
  return 100.0 * abs_error_sum(pred, ref) / denom;
}

} // namespace floro::mix
