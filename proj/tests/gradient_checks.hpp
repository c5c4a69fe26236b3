#pragma once

// Finite-difference checks of every network and loss, shared by the unit
// tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "infopart/neural.hpp"
#include "infopart/trainer.hpp"

namespace gradcheck {

using namespace infopart;

struct Result {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_error < tolerance; }
};

// |a - n| / max(|a|, |n|, 1e-3): relative for ordinary entries, absolute
// (scaled) for entries near zero where the relative error is meaningless.
inline double error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

inline constexpr double kStep = 1e-5;

inline double central_difference(double& x, const std::function<double()>& f) {
  const double saved = x;
  x = saved + kStep;
  const double up = f();
  x = saved - kStep;
  const double down = f();
  x = saved;
  return (up - down) / (2 * kStep);
}

inline Tensor2D<double> random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Tensor2D<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

// Scalar probe loss sum(out .* w), so d loss / d out = w.
inline double probe(const Tensor2D<double>& out, const Tensor2D<double>& w) { return out.cwiseProduct(w).sum(); }

// Nonzero biases keep pre-activations off the rectifier kink at exactly 0
// (with zero biases a row of dead inputs lands there).
template <class T>
void randomize_biases(DenseNet<T>& net, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 0.5);
  for (auto& l : net.layers())
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = static_cast<T>(d(rng));
}

inline Result dense_net(Activation hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DenseNet<double> net(5, {7, 6}, 3, hidden, Activation::linear, rng);
  randomize_biases(net, rng);
  Tensor2D<double> x = random_matrix(4, 5, rng);
  const Tensor2D<double> w = random_matrix(4, 3, rng);
  net.zero_grad();
  net.forward(x);
  const Tensor2D<double> dx = net.backward(w);
  const auto loss = [&] { return probe(net.infer(x), w); };

  Result r{"dense_net/" + activation_name(hidden), 0.0, 1e-6};
  auto grads = net.gradient_blocks();
  auto params = net.parameter_blocks();
  for (std::size_t b = 0; b < params.size(); ++b)
    for (std::size_t i = 0; i < params[b].size(); ++i)
      r.max_error = std::max(r.max_error, error(grads[b][i], central_difference(params[b][i], loss)));
  for (Eigen::Index i = 0; i < x.size(); ++i)
    r.max_error = std::max(r.max_error, error(dx.data()[i], central_difference(x.data()[i], loss)));
  return r;
}

// Analytic gradients of the float network against differences of the same
// weights evaluated in double.
inline Result dense_net_float(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DenseNet<float> net(5, {16, 16}, 3, Activation::leaky_relu, Activation::linear, rng);
  randomize_biases(net, rng);
  const Tensor2D<double> x = random_matrix(8, 5, rng);
  const Tensor2D<double> w = random_matrix(8, 3, rng);
  net.zero_grad();
  net.forward(x.cast<float>());
  net.backward(w.cast<float>());
  auto twin = net.cast<double>();
  const auto loss = [&] { return probe(twin.infer(x), w); };

  Result r{"dense_net/float32", 0.0, 1e-3};
  auto grads = net.gradient_blocks();
  auto params = twin.parameter_blocks();
  for (std::size_t b = 0; b < params.size(); ++b)
    for (std::size_t i = 0; i < params[b].size(); ++i)
      r.max_error = std::max(r.max_error, error(grads[b][i], central_difference(params[b][i], loss)));
  return r;
}

// head -> posterior -> (reparameterized sample probe + weighted KL).
inline Result posterior(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Eigen::Index n = 5, k = 3;
  Tensor2D<double> head = random_matrix(n, 2 * k, rng);
  const Tensor2D<double> noise = random_matrix(n, k, rng);
  const Tensor2D<double> w = random_matrix(n, k, rng);
  ColVector<double> kl_w(n);
  for (Eigen::Index i = 0; i < n; ++i) kl_w[i] = 0.3 + 0.1 * static_cast<double>(i);

  const auto loss = [&] {
    const auto p = GaussianPosterior<double>::from_head(head);
    return probe(reparameterize(p, noise), w) + kl_w.dot(gaussian_kl(p));
  };
  const auto p = GaussianPosterior<double>::from_head(head);
  Tensor2D<double> dm, dlv, km, klv;
  reparameterize_backward(p, noise, w, dm, dlv);
  gaussian_kl_backward(p, kl_w, km, klv);
  const Tensor2D<double> dhead = p.head_gradient(dm + km, dlv + klv);

  Result r{"posterior/reparameterize+kl", 0.0, 1e-6};
  for (Eigen::Index i = 0; i < head.size(); ++i)
    r.max_error = std::max(r.max_error, error(dhead.data()[i], central_difference(head.data()[i], loss)));
  return r;
}

inline Result softmax(std::uint64_t seed, double tau) {
  std::mt19937_64 rng(seed);
  Tensor2D<double> logits = random_matrix(4, 3, rng, 2.0);
  const Tensor2D<double> w = random_matrix(4, 3, rng);
  const auto loss = [&] { return probe(tempered_softmax(logits, tau), w); };
  const Tensor2D<double> g = tempered_softmax_backward(tempered_softmax(logits, tau), w, tau);
  Result r{"tempered_softmax/tau=" + std::to_string(tau).substr(0, 4), 0.0, 1e-6};
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    r.max_error = std::max(r.max_error, error(g.data()[i], central_difference(logits.data()[i], loss)));
  return r;
}

inline Result infonce(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor2D<double> q = random_matrix(6, 4, rng);
  Tensor2D<double> k = random_matrix(6, 4, rng);
  const auto res = infonce_loss(q, k, true);
  const auto loss = [&] { return infonce_loss(q, k, false).loss; };
  Result r{"infonce", 0.0, 1e-6};
  for (Eigen::Index i = 0; i < q.size(); ++i)
    r.max_error = std::max(r.max_error, error(res.d_queries.data()[i], central_difference(q.data()[i], loss)));
  for (Eigen::Index i = 0; i < k.size(); ++i)
    r.max_error = std::max(r.max_error, error(res.d_keys.data()[i], central_difference(k.data()[i], loss)));
  return r;
}

inline TrainerConfig tiny_config(const MapSpec& map) {
  TrainerConfig c;
  c.map = map;
  c.L = 2;
  c.batch_size = 4;
  c.bottleneck_dim = 3;
  c.embedding_dim = 4;
  c.frequencies = 3;
  c.encoder_hidden = {4};
  c.quantizer_hidden = {4};
  c.predictor_hidden = {4};
  c.reference_hidden = {4};
  return c;
}

// Total loss (InfoNCE + beta * KL penalty) of the whole model with respect
// to every parameter of all four networks.
inline Result full_loss(const MapSpec& map, std::uint64_t seed) {
  const auto c = tiny_config(map);
  std::mt19937_64 rng(seed);
  DibModel<double> model(c, map.dim(), rng);
  for (auto* net : model.nets()) randomize_biases(*net, rng);
  const auto pool = generate_trajectory(map, 500, seed);
  const auto batch = sample_batch<double>(pool, c.batch_size, c.L, c.resolved_ref_index(), c.bottleneck_dim,
                                          c.frequencies, rng);
  const double beta = 0.7;
  model.evaluate(batch, beta, true);
  const auto loss = [&] { return model.evaluate(batch, beta, false).total; };
  std::vector<std::vector<double>> grads;
  for (auto* net : model.nets())
    for (auto g : net->gradient_blocks()) grads.emplace_back(g.begin(), g.end());

  Result r{"dib_loss/" + map.name(), 0.0, 1e-3};
  std::size_t block = 0;
  for (auto* net : model.nets())
    for (auto p : net->parameter_blocks()) {
      for (std::size_t i = 0; i < p.size(); ++i)
        r.max_error = std::max(r.max_error, error(grads[block][i], central_difference(p[i], loss)));
      ++block;
    }
  return r;
}

inline std::vector<Result> run_all(std::uint64_t seed = 1) {
  std::vector<Result> out;
  for (auto a : {Activation::linear, Activation::leaky_relu, Activation::relu, Activation::tanh})
    out.push_back(dense_net(a, seed));
  out.push_back(dense_net_float(seed));
  out.push_back(posterior(seed));
  out.push_back(softmax(seed, 1.0));
  out.push_back(softmax(seed, 0.5));
  out.push_back(infonce(seed));
  for (const auto& map : {MapSpec::logistic(), MapSpec::henon(), MapSpec::ikeda()}) out.push_back(full_loss(map, seed));
  return out;
}

}  // namespace gradcheck
