#pragma once

// Multi-trial training experiments and the random-partition scan. Trials run
// on a thread pool; results are merged in job order, so outputs do not depend
// on the degree of parallelism.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "infopart/entropy_rate.hpp"
#include "infopart/partitions.hpp"
#include "infopart/trainer.hpp"

namespace infopart {

enum class ExperimentKind { fig2, fig3_ref_sweep, fig3_slow_anneal };
std::string experiment_name(ExperimentKind k);
ExperimentKind experiment_from_name(const std::string& name);

struct ExperimentOptions {
  ExperimentKind kind = ExperimentKind::fig2;
  int trials = 20;
  std::uint64_t seed = 0;
  /// fig2: sequence lengths to sweep. fig3: L is lengths.back() (12 by default).
  std::vector<int> lengths{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  /// Training settings shared by every trial (map, L, ref_index and seed are
  /// filled in per trial).
  TrainerConfig trainer;
  int parallel = 1;
  /// Fast single-pass CTW used to rank trials.
  std::size_t ranking_length = 200'000;
  /// Reduced protocol giving each trial's h_inf.
  HInfOptions trial_protocol = reduced_protocol();
  /// Full protocol applied to the best partition of each group; disabled when
  /// certify_best is false.
  bool certify_best = true;
  HInfOptions certification;
  std::size_t cloud_points = 20'000;

  static HInfOptions reduced_protocol();
};

struct TrialResult {
  int L = 0;
  int ref_index = 0;
  double anneal_multiplier = 1.0;
  int trial = 0;
  std::uint64_t seed = 0;
  int steps = 0;
  StopReason stop_reason = StopReason::schedule_end;
  double measurement_entropy_bits = 0.0;
  double h_fast_bits = 0.0;
  double h_inf_bits = 0.0;
  double fractional_deviation = 0.0;  // (h_KS - h_inf) / h_KS
  double wall_seconds = 0.0;
  std::vector<StepLog> curve;
  std::optional<Partition> partition;
};

struct GroupBest {
  int L = 0;
  int ref_index = 0;
  int trial_index = -1;       // into ExperimentResult::trials
  std::optional<HInfResult> certified;
};

struct ExperimentResult {
  ExperimentOptions options;
  double h_ks = 0.0;
  std::vector<TrialResult> trials;
  std::vector<GroupBest> best;  // one per (L, ref_index) group

  /// One row per trial. Byte-identical for a fixed seed.
  std::string trials_csv() const;
  /// One row per group with the certified h_inf of its best trial.
  std::string best_csv() const;
  /// "cloud_L12_ref6.csv" -> x,y,symbol rows for each group's best partition.
  std::map<std::string, std::string> cloud_csvs() const;
};

ExperimentResult reproduce_experiment(const ExperimentOptions& options);

/// Trains one trial and evaluates its partition (fast CTW plus reduced protocol).
TrialResult run_trial(const TrainerConfig& config, int trial, double h_ks, const ExperimentOptions& options);

/// Median of fractional deviations over the given trials.
double median_fractional_deviation(const std::vector<TrialResult>& trials);

struct RandomPartitionRow {
  int index = 0;
  RandomMlpSpec spec;
  double measurement_entropy_bits = 0.0;
  double h_inf_bits = 0.0;
  double h_fast_bits = 0.0;
};

struct RandomScanOptions {
  std::uint64_t seed = 0;
  int per_config = 20;
  std::size_t dataset_size = 200'000;
  /// Reduced scaling protocol per partition; when empty only the fast CTW
  /// value is computed and reported as h_inf.
  std::vector<std::size_t> lengths = log_spaced_lengths(2'000, 200'000, 8);
  int repeats = 2;
  int parallel = 1;
};

std::vector<RandomPartitionRow> random_partition_scan(const MapSpec& map, const RandomScanOptions& options);
std::string random_scan_csv(const std::vector<RandomPartitionRow>& rows);

/// Runs `count` jobs on up to `threads` workers; job(i) must be independent.
void parallel_for(int count, int threads, const std::function<void(int)>& job);

}  // namespace infopart
