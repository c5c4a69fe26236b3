#include "infopart/neural.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace infopart {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "linear";
}

Activation activation_from_name(const std::string& name) {
  if (name == "linear") return Activation::linear;
  if (name == "leaky_relu") return Activation::leaky_relu;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ContractError("unknown activation '" + name + "'");
}

namespace {

template <class T>
void activate(Activation a, Tensor2D<T>& z) {
  switch (a) {
    case Activation::linear: break;
    case Activation::leaky_relu: {
      // max(z, slope z) equals the leaky rectifier for slope < 1, and vectorizes.
      z = z.cwiseMax(static_cast<T>(kLeakySlope) * z);
      break;
    }
    case Activation::relu: z = z.cwiseMax(T(0)); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
  }
}

// Multiplies `grad` in place by f'(pre) given pre-activation and output.
template <class T>
void activation_backward(Activation a, const Tensor2D<T>& pre, const Tensor2D<T>& out,
                         Tensor2D<T>& grad) {
  switch (a) {
    case Activation::linear: break;
    case Activation::leaky_relu: {
      const T slope = static_cast<T>(kLeakySlope);
      grad.array() *= (pre.array() >= T(0)).template cast<T>() * (T(1) - slope) + slope;
      break;
    }
    case Activation::relu:
      grad.array() *= (pre.array() > T(0)).template cast<T>();
      break;
    case Activation::tanh:
      grad = (grad.array() * (T(1) - out.array().square())).matrix();
      break;
  }
}

}  // namespace

template <class T>
DenseNet<T>::DenseNet(int in_dim, const std::vector<int>& hidden_widths, int out_dim,
                      Activation hidden, Activation output, std::mt19937_64& rng) {
  require(in_dim > 0 && out_dim > 0, "network dimensions must be positive");
  std::vector<int> dims{in_dim};
  dims.insert(dims.end(), hidden_widths.begin(), hidden_widths.end());
  dims.push_back(out_dim);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    require(dims[l + 1] > 0, "layer widths must be positive");
    DenseLayer<T> layer;
    const double limit = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
    std::uniform_real_distribution<double> dist(-limit, limit);
    layer.weight.resize(dims[l], dims[l + 1]);
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i)
      layer.weight.data()[i] = static_cast<T>(dist(rng));
    layer.bias = RowVector<T>::Zero(dims[l + 1]);
    layer.activation = (l + 2 == dims.size()) ? output : hidden;
    layers_.push_back(std::move(layer));
  }
  zero_grad();
}

template <class T>
DenseNet<T> DenseNet<T>::from_layers(std::vector<DenseLayer<T>> layers) {
  require(!layers.empty(), "a network needs at least one layer");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    require(layers[l].bias.size() == layers[l].weight.cols(), "bias width must match the layer output");
    if (l > 0)
      require(layers[l].weight.rows() == layers[l - 1].weight.cols(),
              "consecutive layer dimensions are incompatible");
  }
  DenseNet net;
  net.layers_ = std::move(layers);
  net.zero_grad();
  return net;
}

template <class T>
std::size_t DenseNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

template <class T>
const Tensor2D<T>& DenseNet<T>::forward(const Tensor2D<T>& input) {
  require(input.cols() == in_dim(), "network input has " + std::to_string(input.cols()) +
                                        " features, expected " + std::to_string(in_dim()));
  cache_.resize(layers_.size() + 1);
  pre_.resize(layers_.size());
  cache_[0] = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    pre_[l].noalias() = cache_[l] * layer.weight;
    pre_[l].rowwise() += layer.bias;
    cache_[l + 1] = pre_[l];
    activate(layer.activation, cache_[l + 1]);
  }
  return cache_.back();
}

template <class T>
Tensor2D<T> DenseNet<T>::infer(const Tensor2D<T>& input) const {
  require(input.cols() == in_dim(), "network input has " + std::to_string(input.cols()) +
                                        " features, expected " + std::to_string(in_dim()));
  Tensor2D<T> x = input;
  for (const auto& layer : layers_) {
    Tensor2D<T> z;
    z.noalias() = x * layer.weight;
    z.rowwise() += layer.bias;
    activate(layer.activation, z);
    x = std::move(z);
  }
  return x;
}

template <class T>
Tensor2D<T> DenseNet<T>::backward(const Tensor2D<T>& upstream) {
  require(has_cache(), "backward called without a cached forward pass");
  require(upstream.rows() == cache_.back().rows() && upstream.cols() == out_dim(),
          "upstream gradient shape does not match the network output");
  Tensor2D<T> grad = upstream;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    auto& layer = layers_[l];
    activation_backward(layer.activation, pre_[l], cache_[l + 1], grad);
    layer.grad_weight.noalias() += cache_[l].transpose() * grad;
    layer.grad_bias += grad.colwise().sum();
    Tensor2D<T> next;
    next.noalias() = grad * layer.weight.transpose();
    grad = std::move(next);
  }
  return grad;
}

template <class T>
void DenseNet<T>::zero_grad() {
  for (auto& l : layers_) {
    l.grad_weight = Tensor2D<T>::Zero(l.weight.rows(), l.weight.cols());
    l.grad_bias = RowVector<T>::Zero(l.bias.size());
  }
}

template <class T>
std::vector<std::span<T>> DenseNet<T>::parameter_blocks() {
  std::vector<std::span<T>> out;
  for (auto& l : layers_) {
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return out;
}

template <class T>
std::vector<std::span<const T>> DenseNet<T>::gradient_blocks() const {
  std::vector<std::span<const T>> out;
  for (const auto& l : layers_) {
    out.emplace_back(l.grad_weight.data(), static_cast<std::size_t>(l.grad_weight.size()));
    out.emplace_back(l.grad_bias.data(), static_cast<std::size_t>(l.grad_bias.size()));
  }
  return out;
}

template <class T>
void adam_step(AdamState<T>& state, std::vector<std::span<T>> params,
               const std::vector<std::span<const T>>& grads) {
  require(params.size() == grads.size(), "adam: parameter and gradient block counts differ");
  if (state.first.empty()) {
    for (const auto& p : params) {
      state.first.emplace_back(p.size(), T(0));
      state.second.emplace_back(p.size(), T(0));
    }
  }
  require(state.first.size() == params.size(), "adam: state was built for different parameters");
  ++state.step;
  const auto& h = state.hyper;
  const double correction1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  const T step_size = static_cast<T>(h.learning_rate * std::sqrt(correction2) / correction1);
  const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
  // m_hat / (sqrt(v_hat) + eps) rewritten on the raw moments.
  const T eps = static_cast<T>(h.epsilon * std::sqrt(correction2));
  for (std::size_t b = 0; b < params.size(); ++b) {
    require(params[b].size() == grads[b].size() && params[b].size() == state.first[b].size(),
            "adam: block shape mismatch");
    T* p = params[b].data();
    const T* g = grads[b].data();
    T* m = state.first[b].data();
    T* v = state.second[b].data();
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      p[i] -= step_size * m[i] / (std::sqrt(v[i]) + eps);
    }
  }
}

template <class T>
Tensor2D<T> positional_encode(const Eigen::Ref<const Tensor2D<double>>& states, int frequencies) {
  const Eigen::Index n = states.rows(), d = states.cols();
  const Eigen::Index width = frequencies + 1;
  Tensor2D<T> out(n, d * width);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < d; ++c) {
      const double x = states(i, c);
      out(i, c * width) = static_cast<T>(x);
      double omega = 2.0;
      for (int k = 1; k <= frequencies; ++k, omega *= 2.0)
        out(i, c * width + k) = static_cast<T>(std::sin(omega * x));
    }
  }
  return out;
}

std::vector<double> positional_encode(std::span<const double> x, int frequencies) {
  Tensor2D<double> s(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) s(0, static_cast<Eigen::Index>(i)) = x[i];
  const Tensor2D<double> e = positional_encode<double>(s, frequencies);
  return {e.data(), e.data() + e.size()};
}

template <class T>
GaussianPosterior<T> GaussianPosterior<T>::from_head(const Tensor2D<T>& head) {
  require(head.cols() % 2 == 0, "posterior head needs an even number of columns");
  const Eigen::Index k = head.cols() / 2;
  GaussianPosterior p;
  p.mean = head.leftCols(k);
  const Tensor2D<T> raw = head.rightCols(k);
  const T lo = static_cast<T>(kLogVarianceMin), hi = static_cast<T>(kLogVarianceMax);
  p.log_variance = raw.cwiseMax(lo).cwiseMin(hi);
  p.clamp_mask = raw.unaryExpr([lo, hi](T v) { return (v >= lo && v <= hi) ? T(1) : T(0); });
  return p;
}

template <class T>
Tensor2D<T> GaussianPosterior<T>::head_gradient(const Tensor2D<T>& d_mean,
                                                const Tensor2D<T>& d_log_variance) const {
  Tensor2D<T> out(mean.rows(), 2 * mean.cols());
  out.leftCols(mean.cols()) = d_mean;
  out.rightCols(mean.cols()) = d_log_variance.cwiseProduct(clamp_mask);
  return out;
}

template <class T>
ColVector<T> gaussian_kl(const GaussianPosterior<T>& post) {
  const auto& mu = post.mean.array();
  const auto& lv = post.log_variance.array();
  return (T(0.5) * (mu.square() + lv.exp() - T(1) - lv)).matrix().rowwise().sum();
}

template <class T>
void gaussian_kl_backward(const GaussianPosterior<T>& post, const ColVector<T>& row_weights,
                          Tensor2D<T>& d_mean, Tensor2D<T>& d_log_variance) {
  d_mean = post.mean.array().colwise() * row_weights.array();
  d_log_variance = (T(0.5) * (post.log_variance.array().exp() - T(1))).colwise() * row_weights.array();
}

template <class T>
Tensor2D<T> reparameterize(const GaussianPosterior<T>& post, const Tensor2D<T>& noise) {
  require(noise.rows() == post.mean.rows() && noise.cols() == post.mean.cols(),
          "noise shape must match the posterior");
  return post.mean + ((T(0.5) * post.log_variance.array()).exp() * noise.array()).matrix();
}

template <class T>
void reparameterize_backward(const GaussianPosterior<T>& post, const Tensor2D<T>& noise,
                             const Tensor2D<T>& upstream, Tensor2D<T>& d_mean,
                             Tensor2D<T>& d_log_variance) {
  d_mean = upstream;
  d_log_variance =
      (upstream.array() * noise.array() * T(0.5) * (T(0.5) * post.log_variance.array()).exp()).matrix();
}

template <class T>
Tensor2D<T> tempered_softmax(const Tensor2D<T>& logits, double tau) {
  require(tau >= 0.0, "softmax temperature must be >= 0");
  Tensor2D<T> out = Tensor2D<T>::Zero(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (tau == 0.0) {
      Eigen::Index best = 0;
      for (Eigen::Index j = 1; j < logits.cols(); ++j)
        if (logits(i, j) > logits(i, best)) best = j;
      out(i, best) = T(1);
    } else {
      const T inv = static_cast<T>(1.0 / tau);
      const T top = logits.row(i).maxCoeff();
      out.row(i) = ((logits.row(i).array() - top) * inv).exp().matrix();
      out.row(i) /= out.row(i).sum();
    }
  }
  return out;
}

std::vector<double> tempered_softmax(std::span<const double> logits, double tau) {
  Tensor2D<double> l(1, static_cast<Eigen::Index>(logits.size()));
  for (std::size_t i = 0; i < logits.size(); ++i) l(0, static_cast<Eigen::Index>(i)) = logits[i];
  const Tensor2D<double> p = tempered_softmax<double>(l, tau);
  return {p.data(), p.data() + p.size()};
}

template <class T>
Tensor2D<T> tempered_softmax_backward(const Tensor2D<T>& probabilities, const Tensor2D<T>& upstream,
                                      double tau) {
  require(tau > 0.0, "softmax backward needs tau > 0");
  const ColVector<T> inner = (probabilities.cwiseProduct(upstream)).rowwise().sum();
  Tensor2D<T> g = upstream;
  g.colwise() -= inner;
  return g.cwiseProduct(probabilities) * static_cast<T>(1.0 / tau);
}

template <class T>
double InfoNceResult<T>::mi_lower_bound_bits() const {
  return std::log2(static_cast<double>(batch)) - loss / std::numbers::ln2;
}

template <class T>
InfoNceResult<T> infonce_loss(const Tensor2D<T>& queries, const Tensor2D<T>& keys, bool with_gradients) {
  require(queries.rows() == keys.rows() && queries.cols() == keys.cols(),
          "InfoNCE queries and keys must have equal shapes");
  require(queries.rows() >= 2, "InfoNCE needs a batch of at least 2");
  const Eigen::Index b = queries.rows();
  const ColVector<T> qn = queries.rowwise().squaredNorm();
  const RowVector<T> kn = keys.rowwise().squaredNorm().transpose();
  Tensor2D<T> scores;
  scores.noalias() = T(2) * queries * keys.transpose();
  scores.colwise() -= qn;
  scores.rowwise() -= kn;  // scores(i, j) = -|q_i - k_j|^2

  InfoNceResult<T> r;
  r.batch = static_cast<int>(b);
  double total = 0.0;
  Tensor2D<T> weights(b, b);  // softmax rows
  for (Eigen::Index i = 0; i < b; ++i) {
    const T top = scores.row(i).maxCoeff();
    weights.row(i) = (scores.row(i).array() - top).exp().matrix();
    const double z = static_cast<double>(weights.row(i).sum());
    weights.row(i) /= static_cast<T>(z);
    total += -(static_cast<double>(scores(i, i) - top) - std::log(z));
  }
  r.loss = total / static_cast<double>(b);
  if (with_gradients) {
    // d loss / d scores = (softmax - I) / B
    Tensor2D<T> g = weights;
    g.diagonal().array() -= T(1);
    g *= static_cast<T>(1.0 / static_cast<double>(b));
    r.d_queries.noalias() = T(2) * g * keys;  // rows of g sum to zero
    r.d_keys.noalias() = T(2) * g.transpose() * queries;
    const ColVector<T> col = g.colwise().sum().transpose();
    r.d_keys -= T(2) * (keys.array().colwise() * col.array()).matrix();
  }
  return r;
}

#define INFOPART_INSTANTIATE(T)                                                                 \
  template class DenseNet<T>;                                                                   \
  template void adam_step<T>(AdamState<T>&, std::vector<std::span<T>>,                          \
                             const std::vector<std::span<const T>>&);                           \
  template Tensor2D<T> positional_encode<T>(const Eigen::Ref<const Tensor2D<double>>&, int);    \
  template struct GaussianPosterior<T>;                                                         \
  template ColVector<T> gaussian_kl<T>(const GaussianPosterior<T>&);                            \
  template void gaussian_kl_backward<T>(const GaussianPosterior<T>&, const ColVector<T>&,       \
                                        Tensor2D<T>&, Tensor2D<T>&);                            \
  template Tensor2D<T> reparameterize<T>(const GaussianPosterior<T>&, const Tensor2D<T>&);      \
  template void reparameterize_backward<T>(const GaussianPosterior<T>&, const Tensor2D<T>&,     \
                                           const Tensor2D<T>&, Tensor2D<T>&, Tensor2D<T>&);     \
  template Tensor2D<T> tempered_softmax<T>(const Tensor2D<T>&, double);                         \
  template Tensor2D<T> tempered_softmax_backward<T>(const Tensor2D<T>&, const Tensor2D<T>&,     \
                                                    double);                                    \
  template struct InfoNceResult<T>;                                                             \
  template InfoNceResult<T> infonce_loss<T>(const Tensor2D<T>&, const Tensor2D<T>&, bool);

INFOPART_INSTANTIATE(float)
INFOPART_INSTANTIATE(double)

#undef INFOPART_INSTANTIATE

}  // namespace infopart
