#pragma once

#include "floro/geometry.h"
#include "floro/mixture.h"
#include "floro/tensors.h"

#include <array>
#include <cstdint>
#include <vector>

namespace floro::net {

using geom::Mat3;
using geom::Vec3;

// Fixed-length element descriptor [P, N, V, E_1s, E_2s, E_2p, F_1s, F_2s,
// F_2p]: proton, neutron and valence-electron counts, then per-subshell
// occupancies and free slots.
Eigen::VectorXd atomic_descriptor(int z);
constexpr int kDescriptorSize = 9;

// One message-passing layer. Radial gates are bias-free linear maps from
// the radial basis so every message decays smoothly to zero at the
// cutoff; the v/M channel mixers are bias-free because adding a constant
// tensor would break equivariance.
struct LayerParams {
  Eigen::MatrixXd gate_s;  // scalar messages
  Eigen::MatrixXd gate_v0; // s_j * rhat term
  Eigen::MatrixXd gate_v1; // v_j term
  Eigen::MatrixXd gate_m0; // s_j * (rhat rhat^T - I/3) term
  Eigen::MatrixXd gate_m1; // sym(v_j rhat^T) term
  Eigen::MatrixXd gate_m2; // M_j term
  Eigen::MatrixXd mix_s;
  Eigen::VectorXd mix_s_bias;
  Eigen::MatrixXd mix_v;
  Eigen::MatrixXd mix_m;
  tensors::DenseBlock self_update; // scalar channels only
  tensors::DenseBlock debias_gate; // sigmoid head, one weight per channel
};

struct HeadParams {
  tensors::DenseBlock scalar;
  Eigen::MatrixXd mix_v;
  Eigen::MatrixXd mix_m;
};

struct NetworkConfig {
  int gaussians_per_electron = 4; // M_e
  int message_layers = 2;
  int n_basis = 16;
  double cutoff = 8.0;

  int channels() const { return 8 * gaussians_per_electron; }
};

struct NetworkParams {
  NetworkConfig config;
  tensors::RadialBasis rbf;
  tensors::DenseBlock embedding;
  std::vector<LayerParams> layers;
  std::array<HeadParams, 3> heads;
  tensors::DenseBlock mlp_p; // 3 position scale factors
  tensors::DenseBlock mlp_m; // 3 covariance softmax logits
  tensors::DenseBlock mlp_w; // signed mixture weight

  // Deterministic: equal (config, seed) gives bit-identical parameters.
  static NetworkParams random(const NetworkConfig &config, uint64_t seed);
};

struct ForwardOptions {
  bool symmetry_breaking = true;
  bool debias = true;
  // Apply the debias projection to the raw vector instead of its
  // unit-normalized copy (alternative reading of the update rule).
  bool raw_projection_debias = false;
};

Eigen::VectorXd atomic_embedding(int z, const NetworkParams &params);

// Scalars from the embedding; v channels 0..2 from the canonicalized
// moment-of-inertia frame (largest eigenvalue first) unless
// symmetry-breaking is disabled; everything else zero.
tensors::TensorFeatures init_features(const geom::Molecule &mol,
                                      const geom::NeighborGraph &graph,
                                      const NetworkParams &params,
                                      const ForwardOptions &options = {});

tensors::TensorFeatures message_pass(const tensors::TensorFeatures &f,
                                     const geom::NeighborGraph &graph,
                                     const LayerParams &layer,
                                     const tensors::RadialBasis &rbf);

// Removes a learned fraction of each atom's principal l=1 direction and
// renormalizes, so vector features carry direction only.
tensors::TensorFeatures debias(const tensors::TensorFeatures &f,
                               const tensors::DenseBlock &gate,
                               bool raw_projection = false);

// Same update with caller-chosen removal weights (one per atom/channel);
// lets tests drive the w = 0 and w = 1 limits directly.
tensors::TensorFeatures debias_with_weights(const tensors::TensorFeatures &f,
                                            const Eigen::MatrixXd &weights,
                                            bool raw_projection = false);

// Largest eigenvalue of the atom's l=1 covariance over its trace:
// 1/3 for an isotropic vector set, 1 when every vector is parallel.
double bias_metric(const tensors::TensorFeatures &f, int atom_index);

struct ReadoutChannel {
  Eigen::Vector3d s_p; // position scale factors
  Eigen::Vector3d s_m; // covariance logits
  double w = 0.0;      // signed weight
  std::array<Vec3, 3> v;
  std::array<Mat3, 3> M;
};

// Per atom, entries for the first n_e(Z) * M_e channels only.
struct ReadoutTriple {
  std::vector<std::vector<ReadoutChannel>> atoms;
};

ReadoutTriple readout(const tensors::TensorFeatures &f,
                      const geom::Molecule &mol, const NetworkParams &params);

mix::Mixture build_gaussians(const ReadoutTriple &triple,
                             const geom::Molecule &mol);

constexpr double kCovarianceJitter = 1e-8; // A^2, keeps sigma invertible

// Whole pipeline: neighbor graph, embedding + frame init, message
// passing with interleaved debias layers, readout, Gaussian assembly.
// The returned mixture is unnormalized (scale 1).
mix::Mixture forward(const geom::Molecule &mol, const NetworkParams &params,
                     const ForwardOptions &options = {});

} // namespace floro::net
