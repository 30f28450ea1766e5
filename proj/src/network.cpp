#include "floro/network.h"

#include "floro/elements.h"
#include "floro/rng.h"

#include <cmath>
#include <stdexcept>

namespace floro::net {

namespace {

constexpr double kDebiasGuard = 1e-12;

Eigen::MatrixXd random_matrix(int rows, int cols, std::mt19937_64 &gen) {
  const double a = 1.0 / std::sqrt(static_cast<double>(cols));
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      m(r, c) = rng::uniform(gen, -a, a);
  return m;
}

Eigen::VectorXd random_vector(int size, int fan_in, std::mt19937_64 &gen) {
  const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Eigen::VectorXd v(size);
  for (int k = 0; k < size; ++k)
    v[k] = rng::uniform(gen, -a, a);
  return v;
}

} // namespace

Eigen::VectorXd atomic_descriptor(int z) {
  if (!element_supported(z))
    throw std::invalid_argument("unsupported element Z=" + std::to_string(z));
  int occ[3], cap[3];
  shell_occupancies(z, occ);
  shell_capacities(cap);
  Eigen::VectorXd f(kDescriptorSize);
  f[0] = z;
  f[1] = neutron_count(z);
  f[2] = valence_electrons(z);
  for (int k = 0; k < 3; ++k) {
    f[3 + k] = occ[k];
    f[6 + k] = cap[k] - occ[k];
  }
  return f;
}

NetworkParams NetworkParams::random(const NetworkConfig &config,
                                    uint64_t seed) {
  if (config.gaussians_per_electron < 1 || config.message_layers < 1)
    throw std::invalid_argument("invalid network configuration");
  const int d = config.channels();
  std::mt19937_64 gen(seed);

  NetworkParams p;
  p.config = config;
  p.rbf = tensors::RadialBasis::make(config.n_basis, config.cutoff);
  p.embedding = tensors::DenseBlock::random(
      {kDescriptorSize, d, d}, tensors::Activation::Identity, true, gen);

  for (int l = 0; l < config.message_layers; ++l) {
    LayerParams layer;
    layer.gate_s = random_matrix(d, config.n_basis, gen);
    layer.gate_v0 = random_matrix(d, config.n_basis, gen);
    layer.gate_v1 = random_matrix(d, config.n_basis, gen);
    layer.gate_m0 = random_matrix(d, config.n_basis, gen);
    layer.gate_m1 = random_matrix(d, config.n_basis, gen);
    layer.gate_m2 = random_matrix(d, config.n_basis, gen);
    layer.mix_s = random_matrix(d, d, gen);
    layer.mix_s_bias = random_vector(d, d, gen);
    layer.mix_v = random_matrix(d, d, gen);
    layer.mix_m = random_matrix(d, d, gen);
    layer.self_update = tensors::DenseBlock::random(
        {d, d}, tensors::Activation::Softplus, true, gen);
    layer.debias_gate = tensors::DenseBlock::random(
        {d, d}, tensors::Activation::Sigmoid, true, gen);
    p.layers.push_back(std::move(layer));
  }

  for (auto &head : p.heads) {
    head.scalar = tensors::DenseBlock::random(
        {d, d}, tensors::Activation::Identity, true, gen);
    head.mix_v = random_matrix(d, d, gen);
    head.mix_m = random_matrix(d, d, gen);
  }

  const int inp = kDescriptorSize + 3;
  p.mlp_p = tensors::DenseBlock::random({inp, d, 3},
                                        tensors::Activation::Identity, true,
                                        gen);
  p.mlp_m = tensors::DenseBlock::random({inp, d, 3},
                                        tensors::Activation::Identity, true,
                                        gen);
  p.mlp_w = tensors::DenseBlock::random({inp, d, 1},
                                        tensors::Activation::Identity, true,
                                        gen);
  return p;
}

Eigen::VectorXd atomic_embedding(int z, const NetworkParams &params) {
  return params.embedding.forward(atomic_descriptor(z));
}

tensors::TensorFeatures init_features(const geom::Molecule &mol,
                                      const geom::NeighborGraph &graph,
                                      const NetworkParams &params,
                                      const ForwardOptions &options) {
  const int d = params.config.channels();
  auto f = tensors::TensorFeatures::zeros(mol.size(), d);
  for (int a = 0; a < mol.size(); ++a) {
    f.s.row(a) = atomic_embedding(mol.atoms[a].z, params).transpose();
    if (options.symmetry_breaking) {
      const auto frame = geom::symmetry_breaking_frame(mol, graph, a);
      for (int k = 0; k < 3; ++k)
        f.v[a].col(k) = frame.vectors[k];
    }
  }
  return f;
}

tensors::TensorFeatures message_pass(const tensors::TensorFeatures &f,
                                     const geom::NeighborGraph &graph,
                                     const LayerParams &layer,
                                     const tensors::RadialBasis &rbf) {
  const int atoms = f.atom_count();
  const int d = f.channels();
  if (layer.gate_s.rows() != d || layer.gate_s.cols() != rbf.n_basis)
    throw std::invalid_argument("layer does not match feature shape");

  auto agg = tensors::TensorFeatures::zeros(atoms, d);
  for (const auto &e : graph.edges) {
    const Eigen::VectorXd basis = rbf.eval(e.distance);
    const Eigen::VectorXd gs = layer.gate_s * basis;
    const Eigen::VectorXd gv0 = layer.gate_v0 * basis;
    const Eigen::VectorXd gv1 = layer.gate_v1 * basis;
    const Eigen::VectorXd gm0 = layer.gate_m0 * basis;
    const Eigen::VectorXd gm1 = layer.gate_m1 * basis;
    const Eigen::VectorXd gm2 = layer.gate_m2 * basis;

    const Vec3 rhat = e.displacement / e.distance;
    const Mat3 traceless =
        rhat * rhat.transpose() - Mat3::Identity() / 3.0;
    for (int c = 0; c < d; ++c) {
      const double sj = f.s(e.j, c);
      agg.s(e.i, c) += gs[c] * sj;
      agg.v[e.i].col(c) += gv0[c] * sj * rhat + gv1[c] * f.v[e.j].col(c);
      const Mat3 vr = f.v[e.j].col(c) * rhat.transpose();
      agg.M[e.i][c] += gm0[c] * sj * traceless +
                       gm1[c] * 0.5 * (vr + vr.transpose()) +
                       gm2[c] * f.M[e.j][c];
    }
  }

  auto out = tensors::TensorFeatures::zeros(atoms, d);
  for (int a = 0; a < atoms; ++a) {
    out.s.row(a) = f.s.row(a) +
                   layer.self_update.forward(f.s.row(a).transpose())
                       .transpose() +
                   (layer.mix_s * agg.s.row(a).transpose() +
                    layer.mix_s_bias)
                       .transpose();
    out.v[a] = f.v[a] + tensors::mix_channels(agg.v[a], layer.mix_v);
    const auto mixed = tensors::mix_channels(agg.M[a], layer.mix_m);
    for (int c = 0; c < d; ++c)
      out.M[a][c] = f.M[a][c] + mixed[c];
  }
  return out;
}

tensors::TensorFeatures
debias_with_weights(const tensors::TensorFeatures &f,
                    const Eigen::MatrixXd &weights, bool raw_projection) {
  const int d = f.channels();
  if (d < 2)
    throw std::invalid_argument("debias needs at least two channels");
  if (weights.rows() != f.atom_count() || weights.cols() != d)
    throw std::invalid_argument("weight shape does not match features");

  tensors::TensorFeatures out = f;
  for (int a = 0; a < f.atom_count(); ++a) {
    Mat3 cov = Mat3::Zero();
    for (int c = 0; c < d; ++c)
      cov += f.v[a].col(c) * f.v[a].col(c).transpose();
    cov /= static_cast<double>(d);
    Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
    const Vec3 u1 = solver.eigenvectors().col(2); // largest eigenvalue

    for (int c = 0; c < d; ++c) {
      const Vec3 v = f.v[a].col(c);
      Vec3 projected;
      if (raw_projection) {
        projected = v.dot(u1) * u1;
      } else {
        const double norm = v.norm();
        const Vec3 vhat = norm > 0.0 ? Vec3(v / norm) : Vec3::Zero();
        projected = vhat.dot(u1) * u1;
      }
      const Vec3 numerator = v - weights(a, c) * projected;
      out.v[a].col(c) = numerator / (numerator.norm() + kDebiasGuard);
    }
  }
  return out;
}

tensors::TensorFeatures debias(const tensors::TensorFeatures &f,
                               const tensors::DenseBlock &gate,
                               bool raw_projection) {
  Eigen::MatrixXd weights(f.atom_count(), f.channels());
  for (int a = 0; a < f.atom_count(); ++a)
    weights.row(a) = gate.forward(f.s.row(a).transpose()).transpose();
  return debias_with_weights(f, weights, raw_projection);
}

double bias_metric(const tensors::TensorFeatures &f, int atom_index) {
  if (atom_index < 0 || atom_index >= f.atom_count())
    throw std::invalid_argument("atom index out of range");
  Mat3 cov = Mat3::Zero();
  for (int c = 0; c < f.channels(); ++c)
    cov += f.v[atom_index].col(c) * f.v[atom_index].col(c).transpose();
  const double trace = cov.trace();
  if (!(trace > 0.0))
    throw std::invalid_argument(
        "bias metric undefined for all-zero vector features");
  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  return solver.eigenvalues()[2] / trace;
}

ReadoutTriple readout(const tensors::TensorFeatures &f,
                      const geom::Molecule &mol,
                      const NetworkParams &params) {
  const int d = params.config.channels();
  if (f.channels() != d || f.atom_count() != mol.size())
    throw std::invalid_argument("features do not match molecule/params");

  // Head projections over all channels first, then per-channel scalars.
  std::array<Eigen::MatrixXd, 3> hs;
  std::array<std::vector<Eigen::Matrix3Xd>, 3> hv;
  std::array<std::vector<std::vector<Mat3>>, 3> hm;
  for (int h = 0; h < 3; ++h) {
    hs[h].resize(mol.size(), d);
    for (int a = 0; a < mol.size(); ++a) {
      hs[h].row(a) = params.heads[h]
                         .scalar.forward(f.s.row(a).transpose())
                         .transpose();
      hv[h].push_back(tensors::mix_channels(f.v[a], params.heads[h].mix_v));
      hm[h].push_back(tensors::mix_channels(f.M[a], params.heads[h].mix_m));
    }
  }

  ReadoutTriple triple;
  triple.atoms.resize(mol.size());
  for (int a = 0; a < mol.size(); ++a) {
    const int used =
        valence_electrons(mol.atoms[a].z) * params.config.gaussians_per_electron;
    if (used > d)
      throw std::invalid_argument("channel width too small for element");
    const Eigen::VectorXd descriptor = atomic_descriptor(mol.atoms[a].z);
    Eigen::VectorXd s_inp(kDescriptorSize + 3);
    s_inp.head(kDescriptorSize) = descriptor;
    for (int j = 0; j < used; ++j) {
      s_inp[kDescriptorSize + 0] = hs[0](a, j);
      s_inp[kDescriptorSize + 1] = hs[1](a, j);
      s_inp[kDescriptorSize + 2] = hs[2](a, j);
      ReadoutChannel ch;
      ch.s_p = params.mlp_p.forward(s_inp);
      ch.s_m = params.mlp_m.forward(s_inp);
      ch.w = params.mlp_w.forward(s_inp)[0];
      for (int h = 0; h < 3; ++h) {
        ch.v[h] = hv[h][a].col(j);
        ch.M[h] = hm[h][a][j];
      }
      triple.atoms[a].push_back(std::move(ch));
    }
  }
  return triple;
}

mix::Mixture build_gaussians(const ReadoutTriple &triple,
                             const geom::Molecule &mol) {
  if (static_cast<int>(triple.atoms.size()) != mol.size())
    throw std::invalid_argument("readout does not match molecule");
  mix::Mixture m;
  for (int a = 0; a < mol.size(); ++a) {
    const Vec3 r_a = mol.atoms[a].position;
    for (const auto &ch : triple.atoms[a]) {
      const Vec3 mu = r_a + std::exp(ch.s_p[0]) * ch.v[0] +
                      ch.s_p[1] * ch.s_p[1] * ch.v[1] + ch.s_p[2] * ch.v[2];

      const double top = ch.s_m.maxCoeff();
      Eigen::Vector3d soft = (ch.s_m.array() - top).exp();
      soft /= soft.sum();

      Mat3 sigma = kCovarianceJitter * Mat3::Identity();
      for (int h = 0; h < 3; ++h) {
        const double fro = ch.M[h].norm();
        if (fro > 0.0)
          sigma += soft[h] * (ch.M[h] * ch.M[h].transpose()) / fro;
      }
      m.gaussians.push_back(mix::Gaussian::make(ch.w, mu, sigma));
    }
  }
  return m;
}

mix::Mixture forward(const geom::Molecule &mol, const NetworkParams &params,
                     const ForwardOptions &options) {
  mol.validate();
  const auto graph = geom::build_neighbor_graph(mol, params.config.cutoff);
  auto f = init_features(mol, graph, params, options);
  for (const auto &layer : params.layers) {
    f = message_pass(f, graph, layer, params.rbf);
    if (options.debias)
      f = debias(f, layer.debias_gate, options.raw_projection_debias);
  }
  return build_gaussians(readout(f, mol, params), mol);
}

} // namespace floro::net
