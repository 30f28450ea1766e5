#pragma once

#include <Eigen/Dense>

#include <random>
#include <vector>

namespace floro::tensors {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Per-atom Cartesian tensor channels of rank 0, 1 and 2. All ranks share
// the channel width D; v[a] stores the D vectors of atom a as columns.
struct TensorFeatures {
  Eigen::MatrixXd s;               // A x D
  std::vector<Eigen::Matrix3Xd> v; // per atom: 3 x D
  std::vector<std::vector<Mat3>> M;

  static TensorFeatures zeros(int atoms, int channels);
  int atom_count() const { return static_cast<int>(s.rows()); }
  int channels() const { return static_cast<int>(s.cols()); }
};

// Rotates every channel: scalars unchanged, v -> R v, M -> R M R^T.
// R must be a proper rotation (orthogonal, det +1, checked to 1e-10).
TensorFeatures rotate_features(const TensorFeatures &f, const Mat3 &rot);

// Channel mixing without bias; adding a constant to a vector or matrix
// channel would break rotation equivariance.
Eigen::Matrix3Xd mix_channels(const Eigen::Matrix3Xd &v,
                              const Eigen::MatrixXd &weight);
std::vector<Mat3> mix_channels(const std::vector<Mat3> &m,
                               const Eigen::MatrixXd &weight);

enum class Activation { Softplus, Identity, Sigmoid };

double activate(double x, Activation act);

struct DenseLayer {
  Eigen::MatrixXd weight; // out x in
  Eigen::VectorXd bias;   // empty when the layer is bias-free
};

// Small feed-forward block: softplus between layers, `final_activation`
// after the last one.
struct DenseBlock {
  std::vector<DenseLayer> layers;
  Activation final_activation = Activation::Identity;

  // Weights (and biases when enabled) drawn uniformly from
  // [-1/sqrt(fan_in), 1/sqrt(fan_in)], row by row, in a fixed order.
  static DenseBlock random(const std::vector<int> &dims,
                           Activation final_activation, bool bias,
                           std::mt19937_64 &gen);

  Eigen::VectorXd forward(const Eigen::VectorXd &x) const;
  int in_dim() const;
  int out_dim() const;
};

// n_basis Gaussian bumps equally spaced on [0, cutoff] with width
// sigma = cutoff / n_basis, damped by the envelope (cos(pi d/cutoff)+1)/2
// so every output reaches zero smoothly at, and stays zero beyond, cutoff.
struct RadialBasis {
  int n_basis = 0;
  double cutoff = 0.0;
  Eigen::VectorXd centers;
  double sigma = 0.0;

  static RadialBasis make(int n_basis, double cutoff);
  Eigen::VectorXd eval(double d) const;
};

} // namespace floro::tensors
