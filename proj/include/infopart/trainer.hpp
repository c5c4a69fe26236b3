#pragma once

// Distributed information bottleneck training of a binary measurement:
// state -> posterior over an 8-d bottleneck -> quantizer -> soft symbol,
// applied at every position of a length-L window; the symbol sequence is
// scored by InfoNCE against an embedding of a reference state from the same
// window. Annealing the KL penalty lets information in gradually.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "infopart/maps.hpp"
#include "infopart/neural.hpp"
#include "infopart/partitions.hpp"

namespace infopart {

struct TrainerConfig {
  MapSpec map;
  int L = 12;
  int ref_index = -1;  // -1 -> L / 2
  int batch_size = 2048;
  double beta_start = 10.0;
  double beta_end = 1e-4;
  int base_steps = 20000;
  double anneal_multiplier = 1.0;  // total steps = base_steps / multiplier
  double learning_rate = 3e-4;
  double stop_threshold_bits = 1.0;
  std::uint64_t seed = 0;
  std::size_t training_pool_length = 1'000'000;

  // Architecture.
  int bottleneck_dim = 8;
  int alphabet_size = 2;
  int embedding_dim = 32;
  std::vector<int> encoder_hidden{128, 128};
  std::vector<int> quantizer_hidden{128, 128};
  std::vector<int> predictor_hidden{256, 256};
  std::vector<int> reference_hidden{256, 256};
  int frequencies = kPositionalFrequencies;

  // Monitoring and hardening.
  int mi_batch = 256;
  int running_window = 100;
  int noise_count = 32;
  std::optional<double> fixed_beta;  // overrides the schedule when set
  int max_steps = 0;                 // 0 -> schedule length
  std::filesystem::path diagnostic_dir;  // NaN snapshots land here when set

  int resolved_ref_index() const { return ref_index < 0 ? L / 2 : ref_index; }
  int total_steps() const;
  void validate() const;
};

/// beta_start * (beta_end / beta_start)^(step / total_steps).
double beta_at(const TrainerConfig& config, int step);

/// Per-measurement bounds on I(U~; X), bits.
struct MiEstimate {
  double lower_bits = 0.0;
  double upper_bits = 0.0;
};

/// Minibatch bounds from diagonal Gaussian posteriors and one sample per row:
/// the mixture over the batch in the denominator (lower) or over the batch
/// without row i (upper).
template <class T>
MiEstimate mi_bounds(const GaussianPosterior<T>& posteriors, const Tensor2D<T>& samples);

/// One minibatch with the parameter-free preprocessing done: positionally
/// encoded window states (row b * L + i), encoded reference states, and the
/// standard-normal noise for the reparameterization.
template <class T>
struct TrainingBatch {
  int batch = 0;
  int L = 0;
  Tensor2D<T> encoded_states;
  Tensor2D<T> encoded_refs;
  Tensor2D<T> noise;
};

struct LossBreakdown {
  double infonce_nats = 0.0;
  double kl_penalty = 0.0;   // sum over positions of squared batch-mean KL
  double kl_nats_mean = 0.0;
  double total = 0.0;        // infonce + beta * kl_penalty
  MiEstimate mi;
};

/// The four jointly trained networks.
template <class T>
struct DibModel {
  DenseNet<T> encoder;    // PE(x) -> 2 * bottleneck (means, log-variances)
  DenseNet<T> quantizer;  // bottleneck -> alphabet logits
  DenseNet<T> predictor;  // L * alphabet -> embedding
  DenseNet<T> reference;  // PE(x_ref) -> embedding

  DibModel() = default;
  DibModel(const TrainerConfig& config, int state_dim, std::mt19937_64& rng);

  /// Forward pass and, if requested, gradients accumulated into every net
  /// (after zeroing). `mi_rows` > 0 computes MI bounds on the first mi_rows
  /// windows at position 0.
  LossBreakdown evaluate(const TrainingBatch<T>& batch, double beta, bool with_gradients, int mi_rows = 0);

  std::vector<DenseNet<T>*> nets() { return {&encoder, &quantizer, &predictor, &reference}; }
};

enum class StopReason { mi_threshold, schedule_end, step_limit };
std::string stop_reason_name(StopReason r);

struct StepLog {
  int step = 0;
  double beta = 0.0;
  double infonce_nats = 0.0;
  double kl_nats_mean = 0.0;
  double mi_lower_bits = 0.0;
  double mi_upper_bits = 0.0;
};

struct TrainingRun {
  TrainerConfig config;
  std::vector<StepLog> curve;
  std::optional<Partition> partition;
  DibModel<float> model;
  StopReason stop_reason = StopReason::schedule_end;
  double wall_seconds = 0.0;
  int steps() const { return static_cast<int>(curve.size()); }
};

/// Draws a batch from the pool (n x d row-major states) using rng.
template <class T>
TrainingBatch<T> sample_batch(const Trajectory& pool, int batch, int L, int ref_index, int bottleneck_dim,
                              int frequencies, std::mt19937_64& rng);

/// Full training loop; the returned run carries the hardened partition.
TrainingRun train(const TrainerConfig& config);

/// Deterministic measurement from the trained encoder and quantizer with
/// `noise_count` fixed noise vectors and majority vote.
Partition harden(const DibModel<float>& model, int state_dim, int noise_count, std::uint64_t seed,
                 int frequencies = kPositionalFrequencies);

/// Renders the config as key=value lines (map parameters included).
std::string trainer_config_text(const TrainerConfig& config);

}  // namespace infopart
