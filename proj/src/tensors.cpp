#include "floro/tensors.h"

#include "floro/rng.h"

#include <cmath>
#include <stdexcept>

namespace floro::tensors {

TensorFeatures TensorFeatures::zeros(int atoms, int channels) {
  TensorFeatures f;
  f.s = Eigen::MatrixXd::Zero(atoms, channels);
  f.v.assign(atoms, Eigen::Matrix3Xd::Zero(3, channels));
  f.M.assign(atoms, std::vector<Mat3>(channels, Mat3::Zero()));
  return f;
}

TensorFeatures rotate_features(const TensorFeatures &f, const Mat3 &rot) {
  const double ortho =
      (rot.transpose() * rot - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-10 || std::abs(rot.determinant() - 1.0) > 1e-10)
    throw std::invalid_argument("not a proper rotation matrix");

  TensorFeatures out;
  out.s = f.s;
  out.v.reserve(f.v.size());
  for (const auto &va : f.v)
    out.v.push_back(rot * va);
  out.M.reserve(f.M.size());
  for (const auto &ma : f.M) {
    std::vector<Mat3> rotated;
    rotated.reserve(ma.size());
    for (const auto &m : ma)
      rotated.push_back(rot * m * rot.transpose());
    out.M.push_back(std::move(rotated));
  }
  return out;
}

Eigen::Matrix3Xd mix_channels(const Eigen::Matrix3Xd &v,
                              const Eigen::MatrixXd &weight) {
  if (weight.cols() != v.cols())
    throw std::invalid_argument("channel mix shape mismatch");
  return v * weight.transpose();
}

std::vector<Mat3> mix_channels(const std::vector<Mat3> &m,
                               const Eigen::MatrixXd &weight) {
  if (weight.cols() != static_cast<Eigen::Index>(m.size()))
    throw std::invalid_argument("channel mix shape mismatch");
  std::vector<Mat3> out(weight.rows(), Mat3::Zero());
  for (Eigen::Index o = 0; o < weight.rows(); ++o)
    for (Eigen::Index c = 0; c < weight.cols(); ++c)
      out[o] += weight(o, c) * m[c];
  return out;
}

double activate(double x, Activation act) {
  switch (act) {
  case Activation::Softplus:
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  case Activation::Sigmoid:
    return 1.0 / (1.0 + std::exp(-x));
  case Activation::Identity:
    return x;
  }
  return x;
}

DenseBlock DenseBlock::random(const std::vector<int> &dims,
                              Activation final_activation, bool bias,
                              std::mt19937_64 &gen) {
  if (dims.size() < 2)
    throw std::invalid_argument("dense block needs at least one layer");
  DenseBlock block;
  block.final_activation = final_activation;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l];
    const int out = dims[l + 1];
    const double a = 1.0 / std::sqrt(static_cast<double>(in));
    DenseLayer layer;
    layer.weight.resize(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c)
        layer.weight(r, c) = rng::uniform(gen, -a, a);
    if (bias) {
      layer.bias.resize(out);
      for (int r = 0; r < out; ++r)
        layer.bias[r] = rng::uniform(gen, -a, a);
    }
    block.layers.push_back(std::move(layer));
  }
  return block;
}

Eigen::VectorXd DenseBlock::forward(const Eigen::VectorXd &x) const {
  if (layers.empty())
    throw std::invalid_argument("empty dense block");
  if (x.size() != layers.front().weight.cols())
    throw std::invalid_argument("dense block input dimension mismatch");
  Eigen::VectorXd h = x;
  for (size_t l = 0; l < layers.size(); ++l) {
    h = (layers[l].weight * h).eval();
    if (layers[l].bias.size() > 0)
      h += layers[l].bias;
    const Activation act =
        l + 1 == layers.size() ? final_activation : Activation::Softplus;
    for (Eigen::Index k = 0; k < h.size(); ++k)
      h[k] = activate(h[k], act);
  }
  return h;
}

int DenseBlock::in_dim() const {
  return static_cast<int>(layers.front().weight.cols());
}

int DenseBlock::out_dim() const {
  return static_cast<int>(layers.back().weight.rows());
}

RadialBasis RadialBasis::make(int n_basis, double cutoff) {
  if (n_basis < 1 || !(cutoff > 0.0))
    throw std::invalid_argument("radial basis needs n_basis >= 1, cutoff > 0");
  RadialBasis rb;
  rb.n_basis = n_basis;
  rb.cutoff = cutoff;
  rb.sigma = cutoff / n_basis;
  rb.centers.resize(n_basis);
  for (int k = 0; k < n_basis; ++k)
    rb.centers[k] =
        n_basis == 1 ? 0.0 : cutoff * k / static_cast<double>(n_basis - 1);
  return rb;
}

Eigen::VectorXd RadialBasis::eval(double d) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_basis);
  if (d >= cutoff)
    return out;
  const double envelope = 0.5 * (std::cos(M_PI * d / cutoff) + 1.0);
  for (int k = 0; k < n_basis; ++k) {
    const double t = (d - centers[k]) / sigma;
    out[k] = envelope * std::exp(-0.5 * t * t);
  }
  return out;
}

} // namespace floro::tensors
