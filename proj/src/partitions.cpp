#include "infopart/partitions.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "infopart/io.hpp"
#include "infopart/seed.hpp"

namespace infopart {

double PolylinePartition::boundary_x(double y) const {
  if (y <= knots.front()[1]) return knots.front()[0];
  if (y >= knots.back()[1]) return knots.back()[0];
  auto hi = std::upper_bound(knots.begin(), knots.end(), y,
                             [](double v, const std::array<double, 2>& k) { return v < k[1]; });
  auto lo = hi - 1;
  const double w = (y - (*lo)[1]) / ((*hi)[1] - (*lo)[1]);
  return (*lo)[0] + w * ((*hi)[0] - (*lo)[0]);
}

Partition::Partition(Variant v, int alphabet_size, std::uint64_t creation_seed)
    : variant_(std::make_shared<const Variant>(std::move(v))),
      alphabet_size_(alphabet_size),
      creation_seed_(creation_seed) {
  require(alphabet_size >= 2 && alphabet_size <= 256, "partition alphabet size must be in [2, 256]");
}

Partition Partition::threshold(std::vector<double> boundaries) {
  require(!boundaries.empty(), "threshold partition needs at least one boundary");
  require(std::is_sorted(boundaries.begin(), boundaries.end()), "threshold boundaries must be sorted");
  const int m = static_cast<int>(boundaries.size()) + 1;
  return Partition(ThresholdPartition{std::move(boundaries)}, m);
}

Partition Partition::polyline(std::vector<std::array<double, 2>> knots) {
  require(knots.size() >= 2, "polyline partition needs at least two knots");
  for (std::size_t i = 1; i < knots.size(); ++i)
    require(knots[i][1] > knots[i - 1][1], "polyline knots must have strictly increasing y");
  return Partition(PolylinePartition{std::move(knots)}, 2);
}

Partition Partition::random_mlp(const RandomMlpSpec& spec) {
  require(spec.n_layers >= 1 && spec.n_layers <= 3, "random MLP needs 1 to 3 hidden layers");
  require(spec.output_dim >= 2, "random MLP output dimension must be >= 2");
  require(spec.units_per_layer > 0, "random MLP layers need units");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> dist(spec.weight_mean, spec.weight_std);
  const Activation hidden =
      spec.activation == RandomMlpActivation::relu ? Activation::relu : Activation::tanh;
  std::vector<DenseLayer<double>> layers;
  int in = spec.input_dim;
  for (int l = 0; l <= spec.n_layers; ++l) {
    const bool last = l == spec.n_layers;
    const int out = last ? spec.output_dim : spec.units_per_layer;
    DenseLayer<double> layer;
    layer.weight.resize(in, out);
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(rng);
    layer.bias.resize(out);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = dist(rng);
    layer.activation = last ? Activation::linear : hidden;
    layers.push_back(std::move(layer));
    in = out;
  }
  return Partition(RandomMlpPartition{spec, DenseNet<double>::from_layers(std::move(layers))},
                   spec.output_dim, spec.seed);
}

Partition Partition::neural(NeuralPartition p) {
  require(p.encoder.out_dim() == 2 * p.quantizer.in_dim(),
          "neural partition: encoder head must hold a mean and log-variance per bottleneck dim");
  require(p.noise.rows() >= 1 && p.noise.cols() == p.quantizer.in_dim(),
          "neural partition: noise vectors must match the bottleneck dimension");
  require(p.encoder.in_dim() == p.state_dim * (p.frequencies + 1),
          "neural partition: encoder input does not match the positional encoding");
  const int m = p.quantizer.out_dim();
  return Partition(std::move(p), m);
}

std::string Partition::kind() const {
  switch (variant_->index()) {
    case 0: return "threshold";
    case 1: return "polyline";
    case 2: return "random_mlp";
    default: return "neural";
  }
}

int Partition::input_dim() const {
  if (std::holds_alternative<ThresholdPartition>(*variant_)) return 1;
  if (const auto* r = std::get_if<RandomMlpPartition>(variant_.get())) return r->spec.input_dim;
  if (const auto* n = std::get_if<NeuralPartition>(variant_.get())) return n->state_dim;
  return 2;
}

namespace {

std::uint8_t argmax_abs(const double* row, Eigen::Index n) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < n; ++j)
    if (std::abs(row[j]) > std::abs(row[best])) best = j;
  return static_cast<std::uint8_t>(best);
}

std::vector<std::uint8_t> apply_neural(const NeuralPartition& p, std::span<const double> rows, int dim) {
  const auto n = static_cast<Eigen::Index>(rows.size() / static_cast<std::size_t>(dim));
  Eigen::Map<const Tensor2D<double>> states(rows.data(), n, dim);
  const auto head = p.encoder.infer(positional_encode<float>(states, p.frequencies));
  const auto post = GaussianPosterior<float>::from_head(head);
  const Tensor2D<float> sigma = (0.5f * post.log_variance.array()).exp().matrix();
  const int m = p.quantizer.out_dim();
  std::vector<std::uint16_t> votes(static_cast<std::size_t>(n) * static_cast<std::size_t>(m), 0);
  for (Eigen::Index k = 0; k < p.noise.rows(); ++k) {
    Tensor2D<float> sample = post.mean;
    sample += (sigma.array().rowwise() * p.noise.row(k).array()).matrix();
    const Tensor2D<float> logits = p.quantizer.infer(sample);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      for (Eigen::Index j = 1; j < m; ++j)
        if (logits(i, j) > logits(i, best)) best = j;
      ++votes[static_cast<std::size_t>(i * m + best)];
    }
  }
  std::vector<std::uint8_t> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto* v = votes.data() + i * m;
    out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::max_element(v, v + m) - v);
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> Partition::apply_rows(std::span<const double> rows, int dim) const {
  require(dim >= 1 && rows.size() % static_cast<std::size_t>(dim) == 0, "rows are not a multiple of dim");
  require(input_dim() == 1 ? dim >= 1 : dim == input_dim(),
          kind() + " partition expects " + std::to_string(input_dim()) + "-dimensional states");
  const std::size_t n = rows.size() / static_cast<std::size_t>(dim);
  std::vector<std::uint8_t> out(n);
  std::visit(
      [&](const auto& v) {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, ThresholdPartition>) {
          for (std::size_t i = 0; i < n; ++i) {
            const double x = rows[i * static_cast<std::size_t>(dim)];
            out[i] = static_cast<std::uint8_t>(
                std::lower_bound(v.boundaries.begin(), v.boundaries.end(), x) - v.boundaries.begin());
          }
        } else if constexpr (std::is_same_v<V, PolylinePartition>) {
          for (std::size_t i = 0; i < n; ++i) {
            const double x = rows[2 * i], y = rows[2 * i + 1];
            out[i] = x > v.boundary_x(y) ? 1 : 0;
          }
        } else if constexpr (std::is_same_v<V, RandomMlpPartition>) {
          constexpr std::size_t kChunk = 8192;
          for (std::size_t start = 0; start < n; start += kChunk) {
            const std::size_t len = std::min(kChunk, n - start);
            Eigen::Map<const Tensor2D<double>> x(rows.data() + start * 2, static_cast<Eigen::Index>(len), 2);
            const Tensor2D<double> y = v.net.infer(x);
            for (std::size_t i = 0; i < len; ++i)
              out[start + i] = argmax_abs(y.data() + static_cast<Eigen::Index>(i) * y.cols(), y.cols());
          }
        } else {
          constexpr std::size_t kChunk = 8192;
          for (std::size_t start = 0; start < n; start += kChunk) {
            const std::size_t len = std::min(kChunk, n - start);
            const auto part = apply_neural(v, rows.subspan(start * static_cast<std::size_t>(dim),
                                                           len * static_cast<std::size_t>(dim)),
                                           dim);
            std::copy(part.begin(), part.end(), out.begin() + static_cast<std::ptrdiff_t>(start));
          }
        }
      },
      *variant_);
  return out;
}

std::uint8_t Partition::apply(const StateVector& x) const {
  return apply_rows(x.coords(), x.dim()).front();
}

SymbolSequence symbolize(const Partition& p, const Trajectory& t) {
  SymbolSequence s;
  s.alphabet_size = p.alphabet_size();
  if (!t.empty()) s.symbols = p.apply_rows(t.data, t.dim);
  return s;
}

SymbolSequence symbolize_stream(const Partition& p, const MapSpec& map, std::size_t n,
                                std::uint64_t seed, std::size_t burn_in) {
  SymbolSequence s;
  s.alphabet_size = p.alphabet_size();
  s.symbols.reserve(n);
  constexpr std::size_t kChunk = 1 << 16;
  constexpr std::uint64_t kMaxRestarts = 64;
  StateVector x = map.default_initial_state(seed);
  std::uint64_t restarts = 0;
  bool fresh = true;
  while (s.symbols.size() < n) {
    const std::size_t len = std::min(kChunk, n - s.symbols.size());
    // Continue from the last state: skip it (burn_in 0, first state repeated).
    Trajectory t = fresh ? generate_trajectory(map, x, len, burn_in, seed)
                         : generate_trajectory(map, map.step(x), len, 0, seed);
    // Round-off can drop a chaotic orbit exactly onto a fixed point (logistic
    // r=4: 4x(1-x) rounds to 1, then 0 forever). Keep what came before and
    // restart from a fresh initial state. An attracting fixed point keeps
    // recurring, so restarts are capped.
    std::size_t keep = len;
    for (std::size_t i = 0; restarts < kMaxRestarts && i + 1 < len; ++i)
      if (std::equal(t.data.begin() + static_cast<std::ptrdiff_t>(i * t.dim),
                     t.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * t.dim),
                     t.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * t.dim))) {
        keep = i;
        break;
      }
    const auto sym = p.apply_rows(t.data, t.dim);
    s.symbols.insert(s.symbols.end(), sym.begin(), sym.begin() + static_cast<std::ptrdiff_t>(keep));
    if (keep < len) {
      x = map.default_initial_state(derive_seed(seed, "restart", restarts++));
      fresh = true;
    } else {
      x = t.state(len - 1);
      fresh = false;
    }
  }
  return s;
}

double measurement_entropy(const SymbolSequence& s) {
  require(!s.empty(), "measurement entropy of an empty sequence is undefined");
  std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(s.alphabet_size, 1)), 0);
  for (auto x : s.symbols) {
    require(x < counts.size(), "symbol outside the declared alphabet");
    ++counts[x];
  }
  const auto n = static_cast<double>(s.size());
  double h = 0.0;
  for (auto c : counts)
    if (c > 0) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log2(p);
    }
  return std::max(0.0, h);
}

ColoredCloud shift_coloring(const Trajectory& t, const SymbolSequence& labels, int k) {
  require(labels.size() == t.size(), "labels must come from symbolizing the same trajectory");
  const std::size_t n = t.size();
  const std::size_t shift = static_cast<std::size_t>(std::abs(k));
  require(shift < n, "|k| must be smaller than the trajectory length");
  ColoredCloud cloud;
  cloud.shift = k;
  const std::size_t count = n - shift;
  cloud.points.reserve(count);
  cloud.labels.reserve(count);
  for (std::size_t j = 0; j < count; ++j) {
    // pairs (x_{i+k}, u_i) with i ranging over the valid overlap
    const std::size_t i = k >= 0 ? j : j + shift;
    const std::size_t state = k >= 0 ? i + shift : i - shift;
    cloud.points.push_back(t.state(state));
    cloud.labels.push_back(labels[i]);
  }
  return cloud;
}

std::vector<RandomMlpSpec> random_partition_configs(std::uint64_t seed, int per_config) {
  std::vector<RandomMlpSpec> out;
  std::uint64_t index = 0;
  for (int layers = 1; layers <= 3; ++layers)
    for (auto act : {RandomMlpActivation::relu, RandomMlpActivation::tanh})
      for (int m : {2, 4})
        for (int s = 0; s < per_config; ++s) {
          RandomMlpSpec spec;
          spec.n_layers = layers;
          spec.activation = act;
          spec.output_dim = m;
          spec.seed = derive_seed(seed, "random_mlp", index++);
          out.push_back(spec);
        }
  return out;
}

std::vector<Partition> sample_random_partitions(const std::vector<RandomMlpSpec>& configs) {
  std::vector<Partition> out;
  out.reserve(configs.size());
  for (const auto& c : configs) out.push_back(Partition::random_mlp(c));
  return out;
}

std::vector<Partition> sample_random_partitions(std::uint64_t seed, int per_config) {
  return sample_random_partitions(random_partition_configs(seed, per_config));
}

Partition henon_reference_partition() {
  return load_partition(std::string(INFOPART_DATA_DIR) + "/henon_generator.json");
}

}  // namespace infopart
