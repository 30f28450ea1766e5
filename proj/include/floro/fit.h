#pragma once

#include "floro/geometry.h"
#include "floro/mixture.h"

#include <cstdint>
#include <utility>
#include <vector>

namespace floro::fit {

// Free mixture parameters, 10 per Gaussian in the order
// [w, mu_x, mu_y, mu_z, l00, l10, l11, l20, l21, l22] where the diagonal
// entries are stored pre-softplus: the covariance is rebuilt as
// sigma = L L^T with L_kk = softplus(l_kk), so it is SPD for any theta.
struct FitParams {
  Eigen::VectorXd theta;

  int count() const { return static_cast<int>(theta.size()) / 10; }
  static constexpr int kPerGaussian = 10;

  mix::Gaussian gaussian(int k) const;
  mix::Mixture to_mixture(bool clamp_negative, double scale = 1.0) const;
  // Inverts the parameterization (softplus inverse on the Cholesky
  // diagonal); mixture scale and clamp flag are not captured.
  static FitParams from_mixture(const mix::Mixture &m);
};

struct FitConfig {
  int steps = 0;
  double learning_rate = 3.5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  double init_displacement = 0.2; // A, around each atom
  double init_sigma = 0.4;        // A, isotropic starting width
  bool clamp_negative = true;
  mix::Sampling sampling = mix::Sampling::Corner;
  double prune_threshold = mix::kDefaultPruneThreshold;
  int threads = 1;
  int log_every = 100;
};

// Places K Gaussians cycling over the atoms: mu = atom position plus a
// seeded uniform displacement in a cube of half-width init_displacement,
// w = n_elec / K, isotropic width init_sigma.
FitParams init_fit(const geom::Molecule &mol, int k_total,
                   const FitConfig &config);

struct LossResult {
  double loss = 0.0;          // sum |ref - pred| dV / n_elec
  double scale = 0.0;         // n_elec over the unnormalized integral
  Eigen::VectorXd grad;       // d loss / d theta
};

// Analytic loss and gradient. The prediction is normalized to n_elec on
// the reference grid before the error is taken, and the gradient chains
// through that normalization, the optional negative-density clamp and
// the Cholesky/softplus parameterization. Absolute-value and ReLU
// subgradients at 0 are taken as 0.
LossResult loss_and_grad(const FitParams &p, const mix::DensityGrid &ref,
                         double n_elec, const FitConfig &config);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  int step = 0; // completed updates

  explicit AdamState(int dim)
      : m(Eigen::VectorXd::Zero(dim)), v(Eigen::VectorXd::Zero(dim)) {}
};

// Standard bias-corrected Adam; epsilon is added outside the square root.
void adam_step(FitParams &p, const Eigen::VectorXd &grad, AdamState &state,
               const FitConfig &config);

struct FitReport {
  std::vector<std::pair<int, double>> history; // (step, loss)
  double final_loss = 0.0;  // best loss seen
  double final_nmae = 0.0;  // percent, n_elec denominator (100 * loss)
  double wall_seconds = 0.0;
  int steps = 0;
};

// Adam descent from an explicit starting point; returns the best-loss
// mixture (scale folded in) and the trace of the run.
std::pair<mix::Mixture, FitReport> fit(const FitParams &init,
                                       const mix::DensityGrid &ref,
                                       double n_elec,
                                       const FitConfig &config);

// Convenience wrapper: init_fit around the molecule's atoms with
// K = n_elec(mol) * gaussians_per_electron, n_elec from its valence count.
std::pair<mix::Mixture, FitReport> fit(const geom::Molecule &mol,
                                       const mix::DensityGrid &ref,
                                       int gaussians_per_electron,
                                       const FitConfig &config);

} // namespace floro::fit
