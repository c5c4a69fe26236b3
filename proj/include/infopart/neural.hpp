#pragma once

// Minimal dense networks trained from scratch: forward/backward, Adam,
// Gaussian posteriors with reparameterization, KL to a standard normal,
// tempered softmax, and the squared-distance InfoNCE loss.
//
// Everything is templated on the scalar type. Training uses float; the
// gradient-check tests instantiate double.

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "infopart/error.hpp"

namespace infopart {

template <class T>
using Tensor2D = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <class T>
using ColVector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

enum class Activation { linear, leaky_relu, relu, tanh };

inline constexpr double kLeakySlope = 0.3;

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

template <class T>
struct DenseLayer {
  Tensor2D<T> weight;  // in x out
  RowVector<T> bias;   // out
  Activation activation = Activation::linear;
  Tensor2D<T> grad_weight;
  RowVector<T> grad_bias;

  int in_dim() const { return static_cast<int>(weight.rows()); }
  int out_dim() const { return static_cast<int>(weight.cols()); }
};

/// Stack of affine layers. `forward` caches activations for `backward`;
/// `infer` is the pure (cache-free, thread-safe) evaluation.
template <class T>
class DenseNet {
 public:
  DenseNet() = default;

  /// Glorot-uniform weights, zero biases. Hidden layers use `hidden`, the
  /// last layer uses `output`.
  DenseNet(int in_dim, const std::vector<int>& hidden_widths, int out_dim, Activation hidden,
           Activation output, std::mt19937_64& rng);

  static DenseNet from_layers(std::vector<DenseLayer<T>> layers);

  int in_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
  int out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }
  std::size_t parameter_count() const;
  const std::vector<DenseLayer<T>>& layers() const { return layers_; }
  std::vector<DenseLayer<T>>& layers() { return layers_; }

  const Tensor2D<T>& forward(const Tensor2D<T>& input);
  Tensor2D<T> infer(const Tensor2D<T>& input) const;

  /// Accumulates parameter gradients (call zero_grad between steps) and
  /// returns d loss / d input.
  Tensor2D<T> backward(const Tensor2D<T>& upstream);
  void zero_grad();
  bool has_cache() const { return !cache_.empty(); }
  void clear_cache() { cache_.clear(); pre_.clear(); }

  /// Flat views over parameter blocks (weights then bias, per layer).
  std::vector<std::span<T>> parameter_blocks();
  std::vector<std::span<const T>> gradient_blocks() const;

  template <class U>
  DenseNet<U> cast() const;

 private:
  std::vector<DenseLayer<T>> layers_;
  std::vector<Tensor2D<T>> cache_;  // inputs to each layer, then the output
  std::vector<Tensor2D<T>> pre_;    // pre-activations per layer
};

template <class T>
template <class U>
DenseNet<U> DenseNet<T>::cast() const {
  std::vector<DenseLayer<U>> out;
  for (const auto& l : layers_) {
    DenseLayer<U> c;
    c.weight = l.weight.template cast<U>();
    c.bias = l.bias.template cast<U>();
    c.activation = l.activation;
    out.push_back(std::move(c));
  }
  return DenseNet<U>::from_layers(std::move(out));
}

struct AdamHyper {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

/// Moment buffers for a set of parameter blocks.
template <class T>
struct AdamState {
  AdamHyper hyper;
  std::vector<std::vector<T>> first;
  std::vector<std::vector<T>> second;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update of `params` (block-wise) with `grads`.
template <class T>
void adam_step(AdamState<T>& state, std::vector<std::span<T>> params,
               const std::vector<std::span<const T>>& grads);

template <class T>
void adam_step(AdamState<T>& state, DenseNet<T>& net) {
  adam_step(state, net.parameter_blocks(), net.gradient_blocks());
}

inline constexpr int kPositionalFrequencies = 10;

/// (x, sin 2x, sin 4x, ..., sin 2^10 x) per coordinate; input N x d,
/// output N x d*11 (coordinates are laid out one after another).
template <class T>
Tensor2D<T> positional_encode(const Eigen::Ref<const Tensor2D<double>>& states,
                              int frequencies = kPositionalFrequencies);

std::vector<double> positional_encode(std::span<const double> x, int frequencies = kPositionalFrequencies);

inline constexpr double kLogVarianceMin = -10.0;
inline constexpr double kLogVarianceMax = 10.0;

/// Diagonal Gaussian per row. Built from a raw N x 2k head: first k columns
/// are means, last k are log-variances (clamped).
template <class T>
struct GaussianPosterior {
  Tensor2D<T> mean;
  Tensor2D<T> log_variance;
  Tensor2D<T> clamp_mask;  // 1 where the raw log-variance was inside the clamp range

  static GaussianPosterior from_head(const Tensor2D<T>& head);
  int rows() const { return static_cast<int>(mean.rows()); }
  int dims() const { return static_cast<int>(mean.cols()); }
  /// d loss / d head from gradients w.r.t. mean and (clamped) log-variance.
  Tensor2D<T> head_gradient(const Tensor2D<T>& d_mean, const Tensor2D<T>& d_log_variance) const;
};

/// KL(N(mu, sigma^2) || N(0, 1)) per row, in nats.
template <class T>
ColVector<T> gaussian_kl(const GaussianPosterior<T>& post);

/// Gradient of sum_i w_i * KL_i w.r.t. mean and log-variance.
template <class T>
void gaussian_kl_backward(const GaussianPosterior<T>& post, const ColVector<T>& row_weights,
                          Tensor2D<T>& d_mean, Tensor2D<T>& d_log_variance);

/// u = mu + sigma * noise.
template <class T>
Tensor2D<T> reparameterize(const GaussianPosterior<T>& post, const Tensor2D<T>& noise);

/// Backprop through reparameterize.
template <class T>
void reparameterize_backward(const GaussianPosterior<T>& post, const Tensor2D<T>& noise,
                             const Tensor2D<T>& upstream, Tensor2D<T>& d_mean,
                             Tensor2D<T>& d_log_variance);

/// Row-wise softmax(logits / tau); tau == 0 gives a one-hot argmax (ties to
/// the lowest index).
template <class T>
Tensor2D<T> tempered_softmax(const Tensor2D<T>& logits, double tau);

std::vector<double> tempered_softmax(std::span<const double> logits, double tau);

/// Backprop through softmax(logits / tau) for tau > 0.
template <class T>
Tensor2D<T> tempered_softmax_backward(const Tensor2D<T>& probabilities, const Tensor2D<T>& upstream,
                                      double tau);

template <class T>
struct InfoNceResult {
  double loss = 0.0;  // nats
  Tensor2D<T> d_queries;
  Tensor2D<T> d_keys;
  /// log2 B - loss / ln 2
  double mi_lower_bound_bits() const;
  int batch = 0;
};

/// -(1/B) sum_i log softmax_j(-|q_i - k_j|^2)[i]; row i of keys is the positive
/// for row i of queries, the other rows are negatives.
template <class T>
InfoNceResult<T> infonce_loss(const Tensor2D<T>& queries, const Tensor2D<T>& keys,
                              bool with_gradients = true);

}  // namespace infopart
