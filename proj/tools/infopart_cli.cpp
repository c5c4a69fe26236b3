// infopart: simulate maps, certify entropy rates, train learned partitions,
// iterate partitions along the dynamics, and scan random partitions.
//
// Settings come from an optional key=value file (--config) overridden by
// flags. Every command writes the merged settings next to its outputs so the
// run can be repeated with --config.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include "infopart/entropy_rate.hpp"
#include "infopart/experiments.hpp"
#include "infopart/io.hpp"
#include "infopart/maps.hpp"
#include "infopart/partitions.hpp"
#include "infopart/seed.hpp"
#include "infopart/trainer.hpp"

namespace fs = std::filesystem;
using namespace infopart;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

// Flags registered as strings; only those given on the command line override
// the config file.
class Settings {
 public:
  explicit Settings(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "key=value settings file");
  }

  void flag(const std::string& key, const std::string& help) {
    std::string name = "--" + key;
    for (auto& c : name)
      if (c == '_') c = '-';
    options_[key] = app_->add_option(name, raw_[key], help);
  }

  KeyValueConfig resolve() const {
    KeyValueConfig kv = config_path_.empty() ? KeyValueConfig{} : KeyValueConfig::load(config_path_);
    for (const auto& [key, opt] : options_)
      if (opt->count() > 0) kv.set(key, raw_.at(key));
    return kv;
  }

 private:
  CLI::App* app_;
  std::string config_path_;
  std::map<std::string, std::string> raw_;
  std::map<std::string, CLI::Option*> options_;
};

void add_map_flags(Settings& s) {
  s.flag("map", "logistic | henon | ikeda");
  s.flag("r", "logistic parameter");
  s.flag("a", "Henon/Ikeda parameter a");
  s.flag("b", "Henon/Ikeda parameter b");
  s.flag("kappa", "Ikeda kappa");
  s.flag("eta", "Ikeda eta");
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<double> parse_doubles(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : split(text, ',')) {
    KeyValueConfig tmp;
    tmp.set(what, item);
    out.push_back(tmp.get_double(what, 0.0));
  }
  return out;
}

// "12", "1,2,4" or "1-12".
std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  for (const auto& item : split(text, ',')) {
    const auto dash = item.find('-', 1);
    KeyValueConfig tmp;
    if (dash == std::string::npos) {
      tmp.set(what, item);
      out.push_back(static_cast<int>(tmp.get_int(what, 0)));
    } else {
      tmp.set("lo", item.substr(0, dash));
      tmp.set("hi", item.substr(dash + 1));
      const auto lo = tmp.get_int("lo", 0), hi = tmp.get_int("hi", 0);
      require(lo <= hi, what + " range " + item + " is empty");
      for (auto v = lo; v <= hi; ++v) out.push_back(static_cast<int>(v));
    }
  }
  require(!out.empty(), what + " is empty");
  return out;
}

// "lo:hi:count" log-spaced, or an explicit comma list.
std::vector<std::size_t> parse_lengths(const std::string& text) {
  const auto parts = split(text, ':');
  KeyValueConfig tmp;
  if (parts.size() == 3) {
    tmp.set("lo", parts[0]);
    tmp.set("hi", parts[1]);
    tmp.set("count", parts[2]);
    return log_spaced_lengths(static_cast<std::size_t>(tmp.get_int("lo", 0)),
                              static_cast<std::size_t>(tmp.get_int("hi", 0)),
                              static_cast<int>(tmp.get_int("count", 0)));
  }
  std::vector<std::size_t> out;
  for (double v : parse_doubles(text, "lengths")) out.push_back(static_cast<std::size_t>(v));
  return out;
}

// Settings that change where or how fast a run happens but not its results.
KeyValueConfig reproducible(const KeyValueConfig& kv) {
  KeyValueConfig out;
  for (const auto& [k, v] : kv.values())
    if (k != "out" && k != "parallel") out.set(k, v);
  return out;
}

void write_echo(const fs::path& path, const KeyValueConfig& kv) {
  const auto r = reproducible(kv);
  write_file_atomic(path, "# infopart " INFOPART_VERSION " config=" + r.hash() + "\n" + r.to_text());
}

std::string with_header(const KeyValueConfig& kv, const std::string& csv) {
  return csv_header_comment(reproducible(kv).hash()) + csv;
}

Partition partition_from_settings(const KeyValueConfig& kv) {
  if (auto file = kv.get("partition")) return load_partition(*file);
  if (auto t = kv.get("threshold")) return Partition::threshold(parse_doubles(*t, "threshold"));
  throw CLI::ValidationError("partition", "one of --partition FILE or --threshold B[,B...] is required");
}

int cmd_simulate(const KeyValueConfig& in) {
  KeyValueConfig kv = in;
  const MapSpec map = map_from_config(kv);
  map_to_config(map, kv);
  const auto n = static_cast<std::size_t>(kv.get_int("n", 1'000'000));
  const auto burn_in = static_cast<std::size_t>(kv.get_int("burn_in", static_cast<long long>(kDefaultBurnIn)));
  const auto seed = kv.get_u64("seed", 0);
  kv.set("n", std::to_string(n));
  kv.set("burn_in", std::to_string(burn_in));
  kv.set("seed", std::to_string(seed));
  const auto out = kv.get("out");
  if (!out) throw CLI::ValidationError("out", "--out FILE is required");
  StateVector x0 = map.default_initial_state(seed);
  if (auto x = kv.get("x0")) x0 = StateVector::from_span(parse_doubles(*x, "x0"));
  const auto t = generate_trajectory(map, x0, n, burn_in, seed);
  export_trajectory(t, *out);
  write_echo(*out + ".config", kv);
  std::vector<double> lo(static_cast<std::size_t>(t.dim), 1e300), hi(static_cast<std::size_t>(t.dim), -1e300);
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < static_cast<std::size_t>(t.dim); ++j) {
      lo[j] = std::min(lo[j], t.row(i)[j]);
      hi[j] = std::max(hi[j], t.row(i)[j]);
    }
  std::cout << "wrote " << t.size() << " states of " << map.describe() << " to " << *out << "\n";
  for (std::size_t j = 0; j < lo.size(); ++j)
    std::cout << "  coordinate " << j << " in [" << format_double(lo[j]) << ", " << format_double(hi[j]) << "]\n";
  return 0;
}

int cmd_estimate(const KeyValueConfig& in) {
  KeyValueConfig kv = in;
  const auto symbol_file = kv.get("symbols");
  const MapSpec map = map_from_config(kv);
  if (!symbol_file) map_to_config(map, kv);
  const std::string method = kv.get_or("method", "ctw");
  std::vector<std::string> methods;
  if (method == "all")
    methods = {"ctw", "lz", "block" + std::to_string(kv.get_int("block", 8))};
  else
    methods = {method};
  std::vector<SequenceEstimator> estimators;
  for (const auto& m : methods) estimators.push_back(estimator_by_name(m));

  HInfOptions options;
  SymbolSequence symbols;
  if (symbol_file) symbols = read_symbols(*symbol_file, static_cast<int>(kv.get_int("alphabet", 2)));
  options.dataset_size =
      static_cast<std::size_t>(kv.get_int("dataset", symbol_file ? static_cast<long long>(symbols.size()) : 20'000'000));
  options.protocol.lengths = parse_lengths(kv.get_or("lengths", "2000:2000000:15"));
  options.protocol.repeats = static_cast<int>(kv.get_int("repeats", 5));
  options.protocol.seed = kv.get_u64("seed", 0);
  kv.set("method", method);
  kv.set("dataset", std::to_string(options.dataset_size));
  kv.set("repeats", std::to_string(options.protocol.repeats));
  kv.set("seed", std::to_string(options.protocol.seed));
  const auto longest = *std::max_element(options.protocol.lengths.begin(), options.protocol.lengths.end());
  require(options.dataset_size >= longest, "dataset must be at least as long as the longest protocol length");

  if (symbol_file) {
    require(symbols.size() >= options.dataset_size, "symbol file holds " + std::to_string(symbols.size()) +
                                                        " symbols, fewer than --dataset");
    symbols.symbols.resize(options.dataset_size);
    std::cout << *symbol_file << ", m=" << symbols.alphabet_size << "\n";
  } else {
    const Partition p = partition_from_settings(kv);
    symbols = symbolize_stream(p, map, options.dataset_size, derive_seed(options.protocol.seed, "dataset"),
                               options.burn_in);
    std::cout << map.describe() << ", " << p.kind() << " partition, m=" << p.alphabet_size() << "\n";
  }
  std::ostringstream csv;
  csv << "method,n,repeat,offset,value_bits,stderr_bits\n";
  std::ostringstream summary;
  std::cout << "H(U) = " << format_double(measurement_entropy(symbols)) << " bits\n";
  for (std::size_t k = 0; k < methods.size(); ++k) {
    HInfResult r;
    try {
      r = estimate_h_inf(symbols, estimators[k], options);
    } catch (const FitError& e) {
      std::cout << methods[k] << ": " << e.what() << "; best iterate h_inf = " << format_double(e.best().h_inf)
                << "\n";
      throw;
    }
    for (const auto& pt : r.points)
      csv << methods[k] << ',' << pt.n << ',' << pt.repeat << ',' << pt.offset << ','
          << format_double(pt.estimate.value) << ',' << format_double(pt.estimate.std_error) << '\n';
    summary << "# summary method=" << methods[k] << " h_inf=" << format_double(r.fit.h_inf)
            << " stderr=" << format_double(r.fit.std_error_h_inf) << " c=" << format_double(r.fit.c)
            << " gamma=" << format_double(r.fit.gamma) << '\n';
    char line[160];
    std::snprintf(line, sizeof line, "%s: h_inf = %.4f ± %.4f bits/iter (gamma %.3f)", methods[k].c_str(),
                  r.fit.h_inf, r.fit.std_error_h_inf, r.fit.gamma);
    std::cout << line << "\n";
  }
  if (auto out = kv.get("out")) {
    write_file_atomic(*out, with_header(kv, csv.str() + summary.str()));
    write_echo(*out + ".config", kv);
  }
  return 0;
}

TrainerConfig trainer_from_settings(KeyValueConfig& kv, bool full_scale) {
  TrainerConfig c;
  c.map = map_from_config(kv);
  map_to_config(c.map, kv);
  if (!full_scale) {
    c.batch_size = 512;
    c.base_steps = 10000;
  }
  c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
  c.base_steps = static_cast<int>(kv.get_int("base_steps", c.base_steps));
  c.anneal_multiplier = kv.get_double("anneal", c.anneal_multiplier);
  c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
  c.beta_start = kv.get_double("beta_start", c.beta_start);
  c.beta_end = kv.get_double("beta_end", c.beta_end);
  c.stop_threshold_bits = kv.get_double("stop_threshold_bits", c.stop_threshold_bits);
  c.ref_index = static_cast<int>(kv.get_int("ref_index", c.ref_index));
  c.training_pool_length = static_cast<std::size_t>(kv.get_int("pool", static_cast<long long>(c.training_pool_length)));
  c.mi_batch = static_cast<int>(kv.get_int("mi_batch", c.mi_batch));
  c.noise_count = static_cast<int>(kv.get_int("noise_count", c.noise_count));
  c.max_steps = static_cast<int>(kv.get_int("max_steps", c.max_steps));
  kv.set("batch_size", std::to_string(c.batch_size));
  kv.set("base_steps", std::to_string(c.base_steps));
  kv.set("anneal", format_double(c.anneal_multiplier));
  kv.set("learning_rate", format_double(c.learning_rate));
  kv.set("beta_start", format_double(c.beta_start));
  kv.set("beta_end", format_double(c.beta_end));
  kv.set("stop_threshold_bits", format_double(c.stop_threshold_bits));
  kv.set("pool", std::to_string(c.training_pool_length));
  kv.set("mi_batch", std::to_string(c.mi_batch));
  kv.set("noise_count", std::to_string(c.noise_count));
  kv.set("max_steps", std::to_string(c.max_steps));
  return c;
}

std::string curve_csv(const std::vector<StepLog>& curve) {
  std::ostringstream os;
  os << "step,beta,infonce_nats,kl_nats_mean,mi_lower_bits,mi_upper_bits\n";
  for (const auto& s : curve)
    os << s.step << ',' << format_double(s.beta) << ',' << format_double(s.infonce_nats) << ','
       << format_double(s.kl_nats_mean) << ',' << format_double(s.mi_lower_bits) << ','
       << format_double(s.mi_upper_bits) << '\n';
  return os.str();
}

int cmd_train(const KeyValueConfig& in) {
  KeyValueConfig kv = in;
  const bool full = kv.get_or("scale", "ci") == "full";
  kv.set("scale", full ? "full" : "ci");
  ExperimentOptions o;
  o.trainer = trainer_from_settings(kv, full);
  o.kind = experiment_from_name(kv.get_or("experiment", "fig2"));
  if (o.kind == ExperimentKind::fig3_ref_sweep && o.trainer.anneal_multiplier != 1.0)
    o.kind = ExperimentKind::fig3_slow_anneal;
  kv.set("experiment", experiment_name(o.kind));
  const std::string default_lengths = o.kind == ExperimentKind::fig2 ? "1-12" : "12";
  kv.set("L", kv.get_or("L", default_lengths));
  o.lengths = parse_int_list(kv.get_or("L", default_lengths), "L");
  o.trials = static_cast<int>(kv.get_int("trials", o.kind == ExperimentKind::fig2 ? 20 : 10));
  o.seed = kv.get_u64("seed", 0);
  o.parallel = static_cast<int>(kv.get_int("parallel", 1));
  o.certify_best = kv.get_or("certify", "true") == "true";
  o.certification.dataset_size = static_cast<std::size_t>(kv.get_int("cert_dataset", full ? 20'000'000 : 2'000'000));
  kv.set("trials", std::to_string(o.trials));
  kv.set("seed", std::to_string(o.seed));
  kv.set("certify", o.certify_best ? "true" : "false");
  kv.set("cert_dataset", std::to_string(o.certification.dataset_size));
  const auto out = kv.get("out");
  if (!out) throw CLI::ValidationError("out", "--out DIR is required");
  const fs::path dir = *out;
  o.trainer.diagnostic_dir = dir / "diagnostics";
  write_echo(dir / "config.txt", kv);

  const auto result = reproduce_experiment(o);
  write_file_atomic(dir / "trials.csv", with_header(kv, result.trials_csv()));
  write_file_atomic(dir / "best.csv", with_header(kv, result.best_csv()));
  for (const auto& t : result.trials) {
    const std::string stem = "L" + std::to_string(t.L) + "_ref" + std::to_string(t.ref_index) + "_t" + std::to_string(t.trial);
    write_file_atomic(dir / "curves" / (stem + ".csv"), with_header(kv, curve_csv(t.curve)));
  }
  for (const auto& b : result.best) {
    const auto& t = result.trials[static_cast<std::size_t>(b.trial_index)];
    save_partition(*t.partition,
                   dir / ("best_L" + std::to_string(b.L) + "_ref" + std::to_string(b.ref_index) + ".json"));
  }
  if (o.kind != ExperimentKind::fig2)
    for (const auto& [name, csv] : result.cloud_csvs()) write_file_atomic(dir / name, with_header(kv, csv));

  std::cout << experiment_name(o.kind) << " on " << o.trainer.map.describe() << ": h_KS = "
            << format_double(result.h_ks) << " bits\n";
  for (std::size_t g = 0; g < result.best.size(); ++g) {
    const auto& b = result.best[g];
    std::vector<TrialResult> group(result.trials.begin() + static_cast<std::ptrdiff_t>(g) * o.trials,
                                   result.trials.begin() + static_cast<std::ptrdiff_t>(g + 1) * o.trials);
    const auto& t = result.trials[static_cast<std::size_t>(b.trial_index)];
    const double h = b.certified ? b.certified->fit.h_inf : t.h_inf_bits;
    char line[200];
    std::snprintf(line, sizeof line, "  L=%d ref=%d: median deviation %.4f, best h_inf %.4f (%.4f h_KS)", b.L,
                  b.ref_index, median_fractional_deviation(group), h, h / result.h_ks);
    std::cout << line << "\n";
  }
  std::cout << "outputs in " << dir.string() << "\n";
  return 0;
}

int cmd_iterate(const KeyValueConfig& in) {
  KeyValueConfig kv = in;
  const MapSpec map = map_from_config(kv);
  map_to_config(map, kv);
  const Partition p = partition_from_settings(kv);
  const int k_min = static_cast<int>(kv.get_int("k_min", -3));
  const int k_max = static_cast<int>(kv.get_int("k_max", 3));
  require(k_min <= k_max, "k_min must not exceed k_max");
  const auto n = static_cast<std::size_t>(kv.get_int("n", 20'000));
  const auto seed = kv.get_u64("seed", 0);
  kv.set("k_min", std::to_string(k_min));
  kv.set("k_max", std::to_string(k_max));
  kv.set("n", std::to_string(n));
  kv.set("seed", std::to_string(seed));
  const auto out = kv.get("out");
  if (!out) throw CLI::ValidationError("out", "--out DIR is required");
  const fs::path dir = *out;
  const auto t = generate_trajectory(map, n, seed);
  const auto labels = symbolize(p, t);
  write_echo(dir / "config.txt", kv);
  int files = 0;
  for (int k = k_min; k <= k_max; ++k) {
    const auto cloud = shift_coloring(t, labels, k);
    std::ostringstream os;
    os << (t.dim == 1 ? "x,label,shift\n" : "x,y,label,shift\n");
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
      for (int j = 0; j < cloud.points[i].dim(); ++j) os << format_double(cloud.points[i][j]) << ',';
      os << static_cast<int>(cloud.labels[i]) << ',' << k << '\n';
    }
    write_file_atomic(dir / ("iterate_k" + std::to_string(k) + ".csv"), with_header(kv, os.str()));
    ++files;
  }
  std::cout << "wrote " << files << " colored clouds to " << dir.string() << "\n";
  return 0;
}

int cmd_random_partitions(const KeyValueConfig& in) {
  KeyValueConfig kv = in;
  if (!kv.has("map")) kv.set("map", "ikeda");
  const MapSpec map = map_from_config(kv);
  map_to_config(map, kv);
  RandomScanOptions o;
  o.seed = kv.get_u64("seed", 0);
  o.per_config = static_cast<int>(kv.get_int("per_config", 20));
  o.dataset_size = static_cast<std::size_t>(kv.get_int("dataset", static_cast<long long>(o.dataset_size)));
  o.parallel = static_cast<int>(kv.get_int("parallel", 1));
  const std::string estimator = kv.get_or("estimator", "fit");
  require(estimator == "fit" || estimator == "fast", "estimator must be 'fit' or 'fast'");
  if (estimator == "fast") o.lengths.clear();
  kv.set("seed", std::to_string(o.seed));
  kv.set("per_config", std::to_string(o.per_config));
  kv.set("dataset", std::to_string(o.dataset_size));
  kv.set("estimator", estimator);
  const auto out = kv.get("out");
  if (!out) throw CLI::ValidationError("out", "--out FILE is required");
  const auto rows = random_partition_scan(map, o);
  write_file_atomic(*out, with_header(kv, random_scan_csv(rows)));
  write_echo(*out + ".config", kv);
  const double h_ks = lyapunov_spectrum(map, 1'000'000).h_ks;
  int violations = 0;
  for (const auto& r : rows)
    if (r.h_inf_bits > std::min(r.measurement_entropy_bits, h_ks) + 0.02) ++violations;
  std::cout << rows.size() << " random partitions of " << map.describe() << " (h_KS = " << format_double(h_ks)
            << "); rows above min(H(U), h_KS) + 0.02: " << violations << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"infopart: optimized measurements of chaotic dynamical systems"};
  app.set_version_flag("--version", INFOPART_VERSION);
  app.require_subcommand(1);

  auto* simulate = app.add_subcommand("simulate", "Generate a trajectory file");
  Settings s_sim(simulate);
  add_map_flags(s_sim);
  for (auto k : {"n", "burn_in", "x0", "seed", "out"}) s_sim.flag(k, k);

  auto* estimate = app.add_subcommand("estimate", "Certify the entropy rate of a partition");
  Settings s_est(estimate);
  add_map_flags(s_est);
  s_est.flag("partition", "partition file");
  s_est.flag("threshold", "threshold boundaries on coordinate 0, comma separated");
  s_est.flag("symbols", "raw symbol file (one symbol per byte) instead of a partition");
  s_est.flag("alphabet", "alphabet size of --symbols (default 2)");
  s_est.flag("method", "ctw | lz | block<B> | all");
  s_est.flag("block", "block length used by --method all");
  s_est.flag("dataset", "symbols generated before windowing");
  s_est.flag("lengths", "lo:hi:count or comma list");
  s_est.flag("repeats", "windows per length");
  s_est.flag("seed", "root seed");
  s_est.flag("out", "CSV of per-window estimates");

  auto* train = app.add_subcommand("train", "Train learned partitions (multi-trial experiments)");
  Settings s_train(train);
  add_map_flags(s_train);
  for (auto k : {"experiment", "L", "trials", "parallel", "anneal", "batch_size", "base_steps", "learning_rate",
                 "beta_start", "beta_end", "stop_threshold_bits", "ref_index", "pool", "mi_batch", "noise_count",
                 "max_steps", "certify", "cert_dataset", "scale", "seed", "out"})
    s_train.flag(k, k);

  auto* iterate = app.add_subcommand("iterate", "Push partition labels along the dynamics");
  Settings s_it(iterate);
  add_map_flags(s_it);
  for (auto k : {"partition", "threshold", "k_min", "k_max", "n", "seed", "out"}) s_it.flag(k, k);

  auto* random = app.add_subcommand("random-partitions", "Entropy scan of random MLP partitions");
  Settings s_rand(random);
  add_map_flags(s_rand);
  for (auto k : {"seed", "per_config", "dataset", "estimator", "parallel", "out"}) s_rand.flag(k, k);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(s_sim.resolve());
    if (*estimate) return cmd_estimate(s_est.resolve());
    if (*train) return cmd_train(s_train.resolve());
    if (*iterate) return cmd_iterate(s_it.resolve());
    if (*random) return cmd_random_partitions(s_rand.resolve());
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const EscapeError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
