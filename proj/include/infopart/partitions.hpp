#pragma once

// Deterministic measurements state -> symbol, symbolization of trajectories,
// measurement entropy, iterated colorings, and the random-MLP partitions.

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "infopart/maps.hpp"
#include "infopart/neural.hpp"
#include "infopart/symbols.hpp"

namespace infopart {

/// Boundaries on coordinate 0; symbol = number of boundaries below x.
struct ThresholdPartition {
  std::vector<double> boundaries;  // sorted ascending
};

/// Two-symbol split of a 2-D state space by the curve x = g(y), g piecewise
/// linear through `knots` (sorted by y, constant beyond the ends).
/// Symbol 1 when x > g(y).
struct PolylinePartition {
  std::vector<std::array<double, 2>> knots;  // (x, y) pairs
  double boundary_x(double y) const;
};

enum class RandomMlpActivation { relu, tanh };

struct RandomMlpSpec {
  int n_layers = 1;             // 1..3 hidden layers
  int units_per_layer = 64;
  RandomMlpActivation activation = RandomMlpActivation::relu;
  int output_dim = 2;           // alphabet size, 2 or 4
  double weight_mean = 0.05;
  double weight_std = 0.5;
  int input_dim = 2;
  std::uint64_t seed = 0;
};

/// Symbol = index of the output coordinate with the largest |value|.
struct RandomMlpPartition {
  RandomMlpSpec spec;
  DenseNet<double> net;
};

/// Hardened learned measurement: positional encoding -> posterior network ->
/// K fixed noise vectors -> quantizer argmax votes -> majority.
struct NeuralPartition {
  DenseNet<float> encoder;    // PE(x) -> 2k (means, log-variances)
  DenseNet<float> quantizer;  // k -> m logits
  Tensor2D<float> noise;      // K x k
  int state_dim = 2;
  int frequencies = kPositionalFrequencies;
};

class Partition {
 public:
  using Variant = std::variant<ThresholdPartition, PolylinePartition, RandomMlpPartition, NeuralPartition>;

  static Partition threshold(std::vector<double> boundaries);
  static Partition polyline(std::vector<std::array<double, 2>> knots);
  static Partition random_mlp(const RandomMlpSpec& spec);
  static Partition neural(NeuralPartition p);
  /// Built from its parts; `creation_seed` is recorded in serialized files.
  Partition(Variant v, int alphabet_size, std::uint64_t creation_seed = 0);

  int alphabet_size() const { return alphabet_size_; }
  std::uint64_t creation_seed() const { return creation_seed_; }
  const Variant& variant() const { return *variant_; }
  std::string kind() const;
  /// Input dimension (1 for threshold partitions, 2 otherwise).
  int input_dim() const;

  std::uint8_t apply(const StateVector& x) const;
  /// Batch form over an n x d row-major block.
  std::vector<std::uint8_t> apply_rows(std::span<const double> rows, int dim) const;

 private:
  std::shared_ptr<const Variant> variant_;  // immutable, shared between copies
  int alphabet_size_ = 2;
  std::uint64_t creation_seed_ = 0;
};

SymbolSequence symbolize(const Partition& p, const Trajectory& t);

/// Generates and symbolizes n states chunk by chunk without keeping them. An
/// orbit that lands exactly on a fixed point is cut there and restarted from a
/// fresh seeded initial state.
SymbolSequence symbolize_stream(const Partition& p, const MapSpec& map, std::size_t n,
                                std::uint64_t seed, std::size_t burn_in = kDefaultBurnIn);

/// Plug-in entropy of the empirical symbol frequencies, bits.
double measurement_entropy(const SymbolSequence& s);

struct ColoredCloud {
  std::vector<StateVector> points;
  std::vector<std::uint8_t> labels;
  int shift = 0;
};

/// Pairs x_{i+k} with u_i: the partition's labels carried k steps forward
/// (k > 0) or backward (k < 0) along the dynamics.
ColoredCloud shift_coloring(const Trajectory& t, const SymbolSequence& labels, int k);

/// Cross product {1,2,3 layers} x {relu, tanh} x {m=2, m=4} with
/// `per_config` samples each.
std::vector<RandomMlpSpec> random_partition_configs(std::uint64_t seed, int per_config = 20);
std::vector<Partition> sample_random_partitions(const std::vector<RandomMlpSpec>& configs);
std::vector<Partition> sample_random_partitions(std::uint64_t seed, int per_config = 20);

/// The Henon reference generator shipped under data/.
Partition henon_reference_partition();

}  // namespace infopart
