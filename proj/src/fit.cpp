#include "floro/fit.h"

#include "floro/rng.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <thread>
#include <vector>

namespace floro::fit {

namespace {

using geom::Mat3;
using geom::Vec3;

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double softplus_inverse(double y) {
  if (!(y > 0.0))
    throw std::invalid_argument("softplus inverse needs a positive value");
  return std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0.0)
    return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

} // namespace

mix::Gaussian FitParams::gaussian(int k) const {
  if (k < 0 || static_cast<Eigen::Index>(k + 1) * kPerGaussian > theta.size())
    throw std::invalid_argument("gaussian index out of range");
  const auto t =
      theta.segment(static_cast<Eigen::Index>(k) * kPerGaussian, kPerGaussian);
  const Vec3 mu(t[1], t[2], t[3]);
  Mat3 lower = Mat3::Zero();
  lower(0, 0) = softplus(t[4]);
  lower(1, 0) = t[5];
  lower(1, 1) = softplus(t[6]);
  lower(2, 0) = t[7];
  lower(2, 1) = t[8];
  lower(2, 2) = softplus(t[9]);
  return mix::Gaussian::from_cholesky(t[0], mu, lower);
}

mix::Mixture FitParams::to_mixture(bool clamp_negative, double scale) const {
  if (theta.size() % kPerGaussian != 0)
    throw std::invalid_argument(
        "parameter vector length must be a multiple of 10");
  mix::Mixture m;
  m.scale = scale;
  m.clamp_negative = clamp_negative;
  const int k_total = count();
  m.gaussians.reserve(k_total);
  for (int k = 0; k < k_total; ++k)
    m.gaussians.push_back(gaussian(k));
  return m;
}

FitParams FitParams::from_mixture(const mix::Mixture &m) {
  FitParams p;
  p.theta.resize(static_cast<Eigen::Index>(m.gaussians.size()) * kPerGaussian);
  for (std::size_t k = 0; k < m.gaussians.size(); ++k) {
    const mix::Gaussian &g = m.gaussians[k];
    auto t = p.theta.segment(static_cast<Eigen::Index>(k) * kPerGaussian,
                             kPerGaussian);
    t[0] = g.w;
    t[1] = g.mu[0];
    t[2] = g.mu[1];
    t[3] = g.mu[2];
    t[4] = softplus_inverse(g.chol_lower(0, 0));
    t[5] = g.chol_lower(1, 0);
    t[6] = softplus_inverse(g.chol_lower(1, 1));
    t[7] = g.chol_lower(2, 0);
    t[8] = g.chol_lower(2, 1);
    t[9] = softplus_inverse(g.chol_lower(2, 2));
  }
  return p;
}

FitParams init_fit(const geom::Molecule &mol, int k_total,
                   const FitConfig &config) {
  mol.validate();
  if (k_total <= 0)
    throw std::invalid_argument("fit needs at least one gaussian");
  if (!(config.init_sigma > 0.0))
    throw std::invalid_argument("initial width must be positive");
  if (config.init_displacement < 0.0)
    throw std::invalid_argument("displacement scale must be non-negative");
  std::mt19937_64 gen(config.seed);
  const double w0 =
      static_cast<double>(mol.total_valence_electrons()) / k_total;
  const double l_diag = softplus_inverse(config.init_sigma);
  FitParams p;
  p.theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k_total) *
                                  FitParams::kPerGaussian);
  const int n_atoms = static_cast<int>(mol.size());
  for (int k = 0; k < k_total; ++k) {
    auto t = p.theta.segment(
        static_cast<Eigen::Index>(k) * FitParams::kPerGaussian,
        FitParams::kPerGaussian);
    const Vec3 &center = mol.atoms[k % n_atoms].position;
    t[0] = w0;
    for (int a = 0; a < 3; ++a)
      t[1 + a] = center[a] + rng::uniform(gen, -config.init_displacement,
                                          config.init_displacement);
    t[4] = l_diag;
    t[6] = l_diag;
    t[9] = l_diag;
  }
  return p;
}

// The loss is L(theta) = sum_v |ref_v - s * C_v| dV / n_elec with
// T_v = sum_j w_j N_j(r_v) over each Gaussian's pruning window,
// C_v = relu(T_v) when clamping, I = sum_v |C_v| dV and s = n_elec / I.
// Writing A = sum_v sign(ref_v - s C_v) mask_v dT_v/dtheta,
//         B = sum_v sign(C_v) mask_v dT_v/dtheta,
//         U = sum_v sign(ref_v - s C_v) C_v,
// the chain rule through the normalization quotient gives
//   dL/dtheta = -(dV s / n_elec) A + (dV^2 U / I^2) B.
// Both A and B share the per-Gaussian sufficient statistics
// sum c_v p_v, sum c_v p_v d_v and sum c_v p_v d_v d_v^T (d = r - mu),
// which are accumulated per grid plane so the result is bit-identical
// for any thread count; sign(0) and the ReLU subgradient at 0 are 0.
LossResult loss_and_grad(const FitParams &p, const mix::DensityGrid &ref,
                         double n_elec, const FitConfig &config) {
  if (p.theta.size() == 0 ||
      p.theta.size() % FitParams::kPerGaussian != 0)
    throw std::invalid_argument(
        "parameter vector length must be a non-empty multiple of 10");
  if (!(n_elec > 0.0))
    throw std::invalid_argument("electron count must be positive");
  const mix::GridSpec &spec = ref.spec;
  const int n1 = spec.shape[0];
  const int n2 = spec.shape[1];
  const int n3 = spec.shape[2];
  const long nvox = spec.voxel_count();
  if (nvox <= 0)
    throw std::invalid_argument("grid must contain voxels");
  if (static_cast<long>(ref.values.size()) != nvox)
    throw std::invalid_argument("grid value count does not match its shape");
  if (std::abs(spec.cell.determinant()) < 1e-12)
    throw std::invalid_argument("grid cell is singular");
  const Mat3 cell_inv = spec.cell.inverse();
  const double dv = spec.voxel_volume();
  const bool clamp = config.clamp_negative;
  const double threshold = config.prune_threshold;

  const int k_total = p.count();
  std::vector<mix::Gaussian> gs;
  gs.reserve(k_total);
  std::vector<mix::VoxelWindow> wins(k_total);
  for (int k = 0; k < k_total; ++k) {
    gs.push_back(p.gaussian(k));
    wins[k] = mix::covering_window(gs.back(), spec, cell_inv, config.sampling,
                                   threshold);
  }

  // Per-Gaussian pdf values from the density pass are kept for the
  // gradient pass when they fit in a fixed budget.
  constexpr long kMaxCacheDoubles = (256L << 20) / 8;
  std::vector<long> cache_base(k_total, -1);
  long cache_total = 0;
  for (int k = 0; k < k_total; ++k) {
    if (wins[k].empty)
      continue;
    cache_base[k] = cache_total;
    cache_total += static_cast<long>(wins[k].hi[0] - wins[k].lo[0] + 1) *
                   (wins[k].hi[1] - wins[k].lo[1] + 1) *
                   (wins[k].hi[2] - wins[k].lo[2] + 1);
  }
  const bool use_cache = cache_total <= kMaxCacheDoubles;
  std::vector<double> cache(use_cache ? cache_total : 0);

  const int threads = std::max(1, std::min(config.threads, n3));
  const int slab = (n3 + threads - 1) / threads;
  const auto run_slabs = [&](auto body) {
    if (threads <= 1) {
      body(0, n3);
      return;
    }
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      const int kb = t * slab;
      const int ke = std::min(n3, kb + slab);
      if (kb >= ke)
        break;
      pool.emplace_back(body, kb, ke);
    }
    for (auto &th : pool)
      th.join();
  };

  // Density pass: every voxel accumulates its Gaussians in index order,
  // with the same per-voxel expressions as rasterize, so the prediction
  // matches the rasterized mixture bit for bit.
  std::vector<double> traw(nvox, 0.0);
  run_slabs([&](int kb, int ke) {
    for (int gi = 0; gi < k_total; ++gi) {
      const mix::VoxelWindow &w = wins[gi];
      if (w.empty)
        continue;
      const mix::Gaussian &g = gs[gi];
      const int wi = w.hi[0] - w.lo[0] + 1;
      const int wj = w.hi[1] - w.lo[1] + 1;
      const int klo = std::max(w.lo[2], kb);
      const int khi = std::min(w.hi[2], ke - 1);
      for (int k = klo; k <= khi; ++k) {
        for (int j = w.lo[1]; j <= w.hi[1]; ++j) {
          const long row = ref.index(w.lo[0], j, k);
          const long cpos =
              use_cache ? cache_base[gi] +
                              static_cast<long>(wi) *
                                  ((j - w.lo[1]) +
                                   static_cast<long>(wj) * (k - w.lo[2]))
                        : 0;
          for (int u = 0; u < wi; ++u) {
            const double m2 = g.mahalanobis2(
                ref.point(w.lo[0] + u, j, k, config.sampling));
            double pv = 0.0;
            if (m2 <= threshold) {
              pv = g.norm_const * std::exp(-0.5 * m2);
              traw[row + u] += g.w * pv;
            }
            if (use_cache)
              cache[cpos + u] = pv;
          }
        }
      }
    }
  });

  // Normalization scale from the unsigned integral.
  const long plane = static_cast<long>(n1) * n2;
  std::vector<double> plane_abs(n3, 0.0);
  run_slabs([&](int kb, int ke) {
    for (int k = kb; k < ke; ++k) {
      double acc = 0.0;
      const long base = plane * k;
      for (long idx = base; idx < base + plane; ++idx) {
        const double t = traw[idx];
        acc += std::abs(clamp ? std::max(t, 0.0) : t);
      }
      plane_abs[k] = acc;
    }
  });
  double abs_sum = 0.0;
  for (int k = 0; k < n3; ++k)
    abs_sum += plane_abs[k];
  const double i_raw = abs_sum * dv;
  if (!std::isfinite(i_raw) || !(i_raw > 0.0))
    throw std::runtime_error(
        "mixture density integrates to zero or is not finite on the grid");
  const double scale = n_elec / i_raw;

  // Residual pass: loss, the normalization coupling term U and the
  // per-voxel subgradient coefficients for both sums.
  std::vector<double> plane_loss(n3, 0.0);
  std::vector<double> plane_u(n3, 0.0);
  std::vector<signed char> acoef(nvox);
  std::vector<signed char> bcoef(nvox);
  run_slabs([&](int kb, int ke) {
    for (int k = kb; k < ke; ++k) {
      double lacc = 0.0;
      double uacc = 0.0;
      const long base = plane * k;
      for (long idx = base; idx < base + plane; ++idx) {
        const double t = traw[idx];
        const double c = clamp ? std::max(t, 0.0) : t;
        const double resid = ref.values[idx] - scale * c;
        const int gsign = (resid > 0.0) - (resid < 0.0);
        const int csign = (c > 0.0) - (c < 0.0);
        const int mask = clamp ? (t > 0.0 ? 1 : 0) : 1;
        lacc += std::abs(resid);
        uacc += gsign * c;
        acoef[idx] = static_cast<signed char>(gsign * mask);
        bcoef[idx] = static_cast<signed char>(csign * mask);
      }
      plane_loss[k] = lacc;
      plane_u[k] = uacc;
    }
  });
  double loss_sum = 0.0;
  double u_sum = 0.0;
  for (int k = 0; k < n3; ++k) {
    loss_sum += plane_loss[k];
    u_sum += plane_u[k];
  }
  const double loss = loss_sum * dv / n_elec;
  if (!std::isfinite(loss))
    throw std::runtime_error("fit loss is not finite");

  // Gradient pass: sufficient statistics per Gaussian and grid plane.
  std::vector<double> stats(static_cast<std::size_t>(k_total) * n3 * 20, 0.0);
  run_slabs([&](int kb, int ke) {
    for (int gi = 0; gi < k_total; ++gi) {
      const mix::VoxelWindow &w = wins[gi];
      if (w.empty)
        continue;
      const mix::Gaussian &g = gs[gi];
      const int wi = w.hi[0] - w.lo[0] + 1;
      const int wj = w.hi[1] - w.lo[1] + 1;
      const int klo = std::max(w.lo[2], kb);
      const int khi = std::min(w.hi[2], ke - 1);
      for (int k = klo; k <= khi; ++k) {
        double *acc = &stats[(static_cast<std::size_t>(gi) * n3 + k) * 20];
        for (int j = w.lo[1]; j <= w.hi[1]; ++j) {
          const long row = ref.index(w.lo[0], j, k);
          const long cpos =
              use_cache ? cache_base[gi] +
                              static_cast<long>(wi) *
                                  ((j - w.lo[1]) +
                                   static_cast<long>(wj) * (k - w.lo[2]))
                        : 0;
          for (int u = 0; u < wi; ++u) {
            const int a = acoef[row + u];
            const int b = bcoef[row + u];
            if (a == 0 && b == 0)
              continue;
            const Vec3 r = ref.point(w.lo[0] + u, j, k, config.sampling);
            double pv;
            if (use_cache) {
              pv = cache[cpos + u];
            } else {
              const double m2 = g.mahalanobis2(r);
              pv = m2 <= threshold ? g.norm_const * std::exp(-0.5 * m2) : 0.0;
            }
            if (pv == 0.0)
              continue;
            const Vec3 d = r - g.mu;
            const double dd00 = d[0] * d[0];
            const double dd01 = d[0] * d[1];
            const double dd02 = d[0] * d[2];
            const double dd11 = d[1] * d[1];
            const double dd12 = d[1] * d[2];
            const double dd22 = d[2] * d[2];
            const double ap = a * pv;
            acc[0] += ap;
            acc[1] += ap * d[0];
            acc[2] += ap * d[1];
            acc[3] += ap * d[2];
            acc[4] += ap * dd00;
            acc[5] += ap * dd01;
            acc[6] += ap * dd02;
            acc[7] += ap * dd11;
            acc[8] += ap * dd12;
            acc[9] += ap * dd22;
            const double bp = b * pv;
            acc[10] += bp;
            acc[11] += bp * d[0];
            acc[12] += bp * d[1];
            acc[13] += bp * d[2];
            acc[14] += bp * dd00;
            acc[15] += bp * dd01;
            acc[16] += bp * dd02;
            acc[17] += bp * dd11;
            acc[18] += bp * dd12;
            acc[19] += bp * dd22;
          }
        }
      }
    }
  });

  LossResult out;
  out.loss = loss;
  out.scale = scale;
  out.grad = Eigen::VectorXd::Zero(p.theta.size());
  const double ca = -(dv * scale) / n_elec;
  const double cb = dv * dv * u_sum / (i_raw * i_raw);
  for (int gi = 0; gi < k_total; ++gi) {
    double m[20] = {0.0};
    for (int k = 0; k < n3; ++k) {
      const double *acc = &stats[(static_cast<std::size_t>(gi) * n3 + k) * 20];
      for (int c = 0; c < 20; ++c)
        m[c] += acc[c];
    }
    const double sw = ca * m[0] + cb * m[10];
    const Vec3 sd = ca * Vec3(m[1], m[2], m[3]) + cb * Vec3(m[11], m[12], m[13]);
    Mat3 sm;
    sm(0, 0) = ca * m[4] + cb * m[14];
    sm(0, 1) = sm(1, 0) = ca * m[5] + cb * m[15];
    sm(0, 2) = sm(2, 0) = ca * m[6] + cb * m[16];
    sm(1, 1) = ca * m[7] + cb * m[17];
    sm(1, 2) = sm(2, 1) = ca * m[8] + cb * m[18];
    sm(2, 2) = ca * m[9] + cb * m[19];
    const mix::Gaussian &g = gs[gi];
    const Mat3 &sinv = g.sigma_inv;
    const Mat3 grad_l = g.w * (sinv * sm * sinv - sw * sinv) * g.chol_lower;
    const Vec3 grad_mu = g.w * (sinv * sd);
    const Eigen::Index base =
        static_cast<Eigen::Index>(gi) * FitParams::kPerGaussian;
    auto gseg = out.grad.segment(base, FitParams::kPerGaussian);
    gseg[0] = sw;
    gseg[1] = grad_mu[0];
    gseg[2] = grad_mu[1];
    gseg[3] = grad_mu[2];
    gseg[4] = grad_l(0, 0) * sigmoid(p.theta[base + 4]);
    gseg[5] = grad_l(1, 0);
    gseg[6] = grad_l(1, 1) * sigmoid(p.theta[base + 6]);
    gseg[7] = grad_l(2, 0);
    gseg[8] = grad_l(2, 1);
    gseg[9] = grad_l(2, 2) * sigmoid(p.theta[base + 9]);
  }
  return out;
}

void adam_step(FitParams &p, const Eigen::VectorXd &grad, AdamState &state,
               const FitConfig &config) {
  if (grad.size() != p.theta.size() || state.m.size() != grad.size())
    throw std::invalid_argument("gradient and moment sizes must match");
  if (!(config.learning_rate > 0.0))
    throw std::invalid_argument("learning rate must be positive");
  state.step += 1;
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  state.m = b1 * state.m + (1.0 - b1) * grad;
  state.v = (b2 * state.v.array() + (1.0 - b2) * grad.array().square()).matrix();
  const double c1 = 1.0 - std::pow(b1, state.step);
  const double c2 = 1.0 - std::pow(b2, state.step);
  p.theta.array() -= config.learning_rate * (state.m.array() / c1) /
                     ((state.v.array() / c2).sqrt() + config.epsilon);
}

std::pair<mix::Mixture, FitReport> fit(const FitParams &init,
                                       const mix::DensityGrid &ref,
                                       double n_elec,
                                       const FitConfig &config) {
  if (config.steps < 0)
    throw std::invalid_argument("step count must be non-negative");
  if (!(config.learning_rate > 0.0))
    throw std::invalid_argument("learning rate must be positive");
  const auto t0 = std::chrono::steady_clock::now();
  FitParams p = init;
  AdamState state(static_cast<int>(p.theta.size()));
  FitReport report;
  report.steps = config.steps;
  FitParams best = p;
  double best_loss = std::numeric_limits<double>::infinity();
  double best_scale = 0.0;
  const int log_every = std::max(1, config.log_every);
  for (int step = 0; step <= config.steps; ++step) {
    const LossResult r = loss_and_grad(p, ref, n_elec, config);
    if (r.loss < best_loss) {
      best_loss = r.loss;
      best = p;
      best_scale = r.scale;
    }
    if (step % log_every == 0 || step == config.steps)
      report.history.emplace_back(step, r.loss);
    if (step == config.steps)
      break;
    adam_step(p, r.grad, state, config);
  }
  report.final_loss = best_loss;
  report.final_nmae = 100.0 * best_loss;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return {best.to_mixture(config.clamp_negative, best_scale), report};
}

std::pair<mix::Mixture, FitReport> fit(const geom::Molecule &mol,
                                       const mix::DensityGrid &ref,
                                       int gaussians_per_electron,
                                       const FitConfig &config) {
  mol.validate();
  if (gaussians_per_electron <= 0)
    throw std::invalid_argument("needs at least one gaussian per electron");
  const int n_elec = mol.total_valence_electrons();
  const FitParams p = init_fit(mol, n_elec * gaussians_per_electron, config);
  return fit(p, ref, static_cast<double>(n_elec), config);
}

} // namespace floro::fit
