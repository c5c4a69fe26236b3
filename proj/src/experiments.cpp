#include "infopart/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "infopart/io.hpp"
#include "infopart/seed.hpp"

namespace infopart {

std::string experiment_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::fig2: return "fig2";
    case ExperimentKind::fig3_ref_sweep: return "fig3_ref_sweep";
    default: return "fig3_slow_anneal";
  }
}

ExperimentKind experiment_from_name(const std::string& name) {
  if (name == "fig2") return ExperimentKind::fig2;
  if (name == "fig3_ref_sweep" || name == "fig3") return ExperimentKind::fig3_ref_sweep;
  if (name == "fig3_slow_anneal") return ExperimentKind::fig3_slow_anneal;
  throw ContractError("unknown experiment '" + name + "' (valid: fig2, fig3_ref_sweep, fig3_slow_anneal)");
}

HInfOptions ExperimentOptions::reduced_protocol() {
  HInfOptions o;
  o.dataset_size = 200'000;
  o.protocol.lengths = log_spaced_lengths(2'000, 200'000, 10);
  o.protocol.repeats = 3;
  return o;
}

void parallel_for(int count, int threads, const std::function<void(int)>& job) {
  const int workers = std::max(1, std::min(threads, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

TrialResult run_trial(const TrainerConfig& config, int trial, double h_ks, const ExperimentOptions& options) {
  const auto run = train(config);
  TrialResult r;
  r.L = config.L;
  r.ref_index = config.resolved_ref_index();
  r.anneal_multiplier = config.anneal_multiplier;
  r.trial = trial;
  r.seed = config.seed;
  r.steps = run.steps();
  r.stop_reason = run.stop_reason;
  r.curve = run.curve;
  r.partition = run.partition;
  const auto fast = symbolize_stream(*run.partition, config.map, options.ranking_length,
                                     derive_seed(config.seed, "ranking"));
  r.measurement_entropy_bits = measurement_entropy(fast);
  r.h_fast_bits = ctw_entropy_rate(fast).value;
  HInfOptions reduced = options.trial_protocol;
  reduced.protocol.seed = derive_seed(config.seed, "trial_protocol");
  try {
    r.h_inf_bits = estimate_h_inf(*run.partition, config.map, reduced).fit.h_inf;
  } catch (const FitError&) {
    r.h_inf_bits = r.h_fast_bits;
  }
  r.fractional_deviation = (h_ks - r.h_inf_bits) / h_ks;
  r.wall_seconds = run.wall_seconds;
  return r;
}

double median_fractional_deviation(const std::vector<TrialResult>& trials) {
  require(!trials.empty(), "median of no trials");
  std::vector<double> v;
  for (const auto& t : trials) v.push_back(t.fractional_deviation);
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ExperimentResult reproduce_experiment(const ExperimentOptions& options) {
  require(options.trials >= 1, "need at least one trial");
  require(!options.lengths.empty(), "need at least one sequence length");
  ExperimentResult result;
  result.options = options;
  const MapSpec& map = options.trainer.map;
  result.h_ks = lyapunov_spectrum(map, 1'000'000).h_ks;

  struct Group {
    int L, ref_index;
    double anneal;
  };
  std::vector<Group> groups;
  if (options.kind == ExperimentKind::fig2) {
    for (int L : options.lengths) groups.push_back({L, -1, options.trainer.anneal_multiplier});
  } else {
    const int L = options.lengths.back();
    const double anneal = options.kind == ExperimentKind::fig3_slow_anneal ? 0.5 : options.trainer.anneal_multiplier;
    for (int r = 0; r < L; ++r) groups.push_back({L, r, anneal});
  }

  std::vector<TrainerConfig> configs;
  std::vector<int> trial_of;
  for (const auto& g : groups)
    for (int t = 0; t < options.trials; ++t) {
      TrainerConfig c = options.trainer;
      c.L = g.L;
      c.ref_index = g.ref_index;
      c.anneal_multiplier = g.anneal;
      const std::string tag = "trial:L=" + std::to_string(g.L) + ":ref=" + std::to_string(c.resolved_ref_index()) +
                              ":anneal=" + format_double(g.anneal);
      c.seed = derive_seed(options.seed, tag, static_cast<std::uint64_t>(t));
      if (!c.diagnostic_dir.empty())
        c.diagnostic_dir /= "L" + std::to_string(g.L) + "_ref" + std::to_string(c.resolved_ref_index()) + "_t" +
                            std::to_string(t);
      configs.push_back(std::move(c));
      trial_of.push_back(t);
    }

  result.trials.resize(configs.size());
  parallel_for(static_cast<int>(configs.size()), options.parallel, [&](int i) {
    result.trials[static_cast<std::size_t>(i)] =
        run_trial(configs[static_cast<std::size_t>(i)], trial_of[static_cast<std::size_t>(i)], result.h_ks, options);
  });

  for (std::size_t g = 0; g < groups.size(); ++g) {
    GroupBest best;
    best.L = groups[g].L;
    best.ref_index = configs[g * static_cast<std::size_t>(options.trials)].resolved_ref_index();
    for (int t = 0; t < options.trials; ++t) {
      const int i = static_cast<int>(g) * options.trials + t;
      if (best.trial_index < 0 ||
          result.trials[static_cast<std::size_t>(i)].h_fast_bits >
              result.trials[static_cast<std::size_t>(best.trial_index)].h_fast_bits)
        best.trial_index = i;
    }
    result.best.push_back(std::move(best));
  }
  if (options.certify_best) {
    parallel_for(static_cast<int>(result.best.size()), options.parallel, [&](int g) {
      auto& best = result.best[static_cast<std::size_t>(g)];
      const auto& trial = result.trials[static_cast<std::size_t>(best.trial_index)];
      HInfOptions cert = options.certification;
      cert.protocol.seed = derive_seed(trial.seed, "certification");
      best.certified = estimate_h_inf(*trial.partition, map, cert);
    });
  }
  return result;
}

std::string ExperimentResult::trials_csv() const {
  std::ostringstream os;
  os << "experiment,map,L,ref_index,anneal_multiplier,trial,seed,steps,stop_reason,H_U_bits,h_fast_bits,"
        "h_inf_bits,h_ks_bits,fractional_deviation\n";
  for (const auto& t : trials)
    os << experiment_name(options.kind) << ',' << options.trainer.map.name() << ',' << t.L << ',' << t.ref_index
       << ',' << format_double(t.anneal_multiplier) << ',' << t.trial << ',' << t.seed << ',' << t.steps << ','
       << stop_reason_name(t.stop_reason) << ',' << format_double(t.measurement_entropy_bits) << ','
       << format_double(t.h_fast_bits) << ',' << format_double(t.h_inf_bits) << ',' << format_double(h_ks) << ','
       << format_double(t.fractional_deviation) << '\n';
  return os.str();
}

std::string ExperimentResult::best_csv() const {
  std::ostringstream os;
  os << "experiment,map,L,ref_index,trial,h_fast_bits,h_inf_bits,h_inf_std_error,h_ks_bits,fractional_deviation\n";
  for (const auto& b : best) {
    const auto& t = trials[static_cast<std::size_t>(b.trial_index)];
    const double h = b.certified ? b.certified->fit.h_inf : t.h_inf_bits;
    const double se = b.certified ? b.certified->fit.std_error_h_inf : 0.0;
    os << experiment_name(options.kind) << ',' << options.trainer.map.name() << ',' << b.L << ',' << b.ref_index
       << ',' << t.trial << ',' << format_double(t.h_fast_bits) << ',' << format_double(h) << ','
       << format_double(se) << ',' << format_double(h_ks) << ',' << format_double((h_ks - h) / h_ks) << '\n';
  }
  return os.str();
}

std::map<std::string, std::string> ExperimentResult::cloud_csvs() const {
  std::map<std::string, std::string> out;
  const MapSpec& map = options.trainer.map;
  const auto cloud = generate_trajectory(map, options.cloud_points, derive_seed(options.seed, "cloud"));
  for (const auto& b : best) {
    const auto& p = *trials[static_cast<std::size_t>(b.trial_index)].partition;
    const auto labels = symbolize(p, cloud);
    std::ostringstream os;
    os << (cloud.dim == 1 ? "x,label,shift\n" : "x,y,label,shift\n");
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      for (int j = 0; j < cloud.dim; ++j) os << format_double(cloud.row(i)[static_cast<std::size_t>(j)]) << ',';
      os << static_cast<int>(labels[i]) << ",0\n";
    }
    out["cloud_L" + std::to_string(b.L) + "_ref" + std::to_string(b.ref_index) + ".csv"] = os.str();
  }
  return out;
}

std::vector<RandomPartitionRow> random_partition_scan(const MapSpec& map, const RandomScanOptions& options) {
  const auto specs = random_partition_configs(options.seed, options.per_config);
  const std::size_t longest =
      options.lengths.empty() ? 0 : *std::max_element(options.lengths.begin(), options.lengths.end());
  require(options.dataset_size >= longest, "scan dataset shorter than the longest protocol length");
  const auto trajectory = generate_trajectory(map, options.dataset_size, derive_seed(options.seed, "scan_dataset"));
  std::vector<RandomPartitionRow> rows(specs.size());
  parallel_for(static_cast<int>(specs.size()), options.parallel, [&](int i) {
    const auto& spec = specs[static_cast<std::size_t>(i)];
    const auto p = Partition::random_mlp(spec);
    const auto symbols = symbolize(p, trajectory);
    RandomPartitionRow row;
    row.index = i;
    row.spec = spec;
    row.measurement_entropy_bits = measurement_entropy(symbols);
    row.h_fast_bits = ctw_entropy_rate(symbols).value;
    row.h_inf_bits = row.h_fast_bits;
    if (!options.lengths.empty() && row.measurement_entropy_bits > 0.0) {
      HInfOptions o;
      o.dataset_size = options.dataset_size;
      o.protocol.lengths = options.lengths;
      o.protocol.repeats = options.repeats;
      o.protocol.seed = derive_seed(options.seed, "scan_protocol", static_cast<std::uint64_t>(i));
      try {
        row.h_inf_bits = estimate_h_inf(symbols, o).fit.h_inf;
      } catch (const FitError&) {
        // Keep the single-pass value when the extrapolation does not converge.
      }
    }
    rows[static_cast<std::size_t>(i)] = row;
  });
  return rows;
}

std::string random_scan_csv(const std::vector<RandomPartitionRow>& rows) {
  std::ostringstream os;
  os << "index,n_layers,activation,alphabet_size,spec_seed,H_U_bits,h_inf_bits,h_fast_bits\n";
  for (const auto& r : rows)
    os << r.index << ',' << r.spec.n_layers << ','
       << (r.spec.activation == RandomMlpActivation::relu ? "relu" : "tanh") << ',' << r.spec.output_dim << ','
       << r.spec.seed << ',' << format_double(r.measurement_entropy_bits) << ',' << format_double(r.h_inf_bits)
       << ',' << format_double(r.h_fast_bits) << '\n';
  return os.str();
}

}  // namespace infopart
