#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "infopart/entropy_rate.hpp"
#include "infopart/partitions.hpp"
#include "infopart/seed.hpp"

namespace infopart {

namespace {

// Suffix automaton of the database: accepts exactly its substrings.
class SuffixAutomaton {
 public:
  explicit SuffixAutomaton(const SymbolSequence& s) : m_(std::max(2, s.alphabet_size)) {
    states_.reserve(2 * s.size() + 1);
    next_.reserve((2 * s.size() + 1) * static_cast<std::size_t>(m_));
    add_state(0, -1);
    int last = 0;
    for (auto c : s.symbols) last = extend(last, c);
  }

  int transition(int state, std::uint8_t c) const {
    return next_[static_cast<std::size_t>(state) * static_cast<std::size_t>(m_) + c];
  }

 private:
  struct State {
    int length;
    int link;
  };

  int add_state(int length, int link) {
    states_.push_back({length, link});
    next_.resize(next_.size() + static_cast<std::size_t>(m_), -1);
    return static_cast<int>(states_.size() - 1);
  }
  int& edge(int state, std::uint8_t c) {
    return next_[static_cast<std::size_t>(state) * static_cast<std::size_t>(m_) + c];
  }

  int extend(int last, std::uint8_t c) {
    const int cur = add_state(states_[static_cast<std::size_t>(last)].length + 1, 0);
    int p = last;
    while (p != -1 && edge(p, c) == -1) {
      edge(p, c) = cur;
      p = states_[static_cast<std::size_t>(p)].link;
    }
    if (p == -1) {
      states_[static_cast<std::size_t>(cur)].link = 0;
      return cur;
    }
    const int q = edge(p, c);
    if (states_[static_cast<std::size_t>(p)].length + 1 == states_[static_cast<std::size_t>(q)].length) {
      states_[static_cast<std::size_t>(cur)].link = q;
      return cur;
    }
    const int clone = add_state(states_[static_cast<std::size_t>(p)].length + 1,
                                states_[static_cast<std::size_t>(q)].link);
    std::copy_n(next_.begin() + static_cast<std::ptrdiff_t>(q) * m_, m_,
                next_.begin() + static_cast<std::ptrdiff_t>(clone) * m_);
    while (p != -1 && edge(p, c) == q) {
      edge(p, c) = clone;
      p = states_[static_cast<std::size_t>(p)].link;
    }
    states_[static_cast<std::size_t>(q)].link = clone;
    states_[static_cast<std::size_t>(cur)].link = clone;
    return cur;
  }

  int m_;
  std::vector<State> states_;
  std::vector<int> next_;
};

}  // namespace

EntropyEstimate lz_cross_parse_rate(const SymbolSequence& database, const SymbolSequence& target) {
  require(!database.empty() && !target.empty(), "cross parsing needs non-empty database and target");
  require(database.alphabet_size == target.alphabet_size, "cross parsing needs a shared alphabet");
  const SuffixAutomaton automaton(database);
  std::size_t phrases = 0;
  std::size_t i = 0;
  const std::size_t n = target.size();
  while (i < n) {
    int state = 0;
    std::size_t j = i;
    while (j < n) {
      const int next = automaton.transition(state, target[j]);
      if (next < 0) break;
      state = next;
      ++j;
    }
    // A symbol absent from the database still costs a phrase of length one.
    i = (j == i) ? i + 1 : j;
    ++phrases;
  }
  EntropyEstimate e;
  e.method = "lz";
  e.n = target.size();
  e.value = static_cast<double>(phrases) * std::log2(static_cast<double>(database.size())) /
            static_cast<double>(target.size());
  return e;
}

double grassberger_entropy_nats(const std::vector<std::uint64_t>& counts) {
  // H = ln N - (1/N) sum n_i G(n_i), with G(1) = -gamma - ln 2,
  // G(2n+1) = G(2n), G(2n+2) = G(2n) + 2/(2n+1).
  std::uint64_t total = 0, largest = 0;
  for (auto c : counts) {
    total += c;
    largest = std::max(largest, c);
  }
  require(total > 0, "entropy of an empty histogram");
  std::vector<double> g(largest + 1, 0.0);
  const double g1 = -std::numbers::egamma - std::numbers::ln2;
  if (largest >= 1) g[1] = g1;
  if (largest >= 2) g[2] = 2.0 + g1;
  for (std::uint64_t k = 3; k <= largest; ++k)
    g[k] = (k % 2 == 1) ? g[k - 1] : g[k - 2] + 2.0 / static_cast<double>(k - 1);
  double sum = 0.0;
  for (auto c : counts)
    if (c > 0) sum += static_cast<double>(c) * g[c];
  const auto n = static_cast<double>(total);
  return std::log(n) - sum / n;
}

namespace {

// Bias-corrected entropy of length-B windows (bits) and the number of
// distinct blocks seen.
std::pair<double, std::size_t> block_entropy_bits(const SymbolSequence& s, int block_length) {
  if (block_length == 0) return {0.0, 1};
  const std::size_t n = s.size() - static_cast<std::size_t>(block_length) + 1;
  const auto m = static_cast<std::uint64_t>(std::max(2, s.alphabet_size));
  std::vector<std::uint64_t> keys(n);
  std::uint64_t key = 0, top = 1;
  for (int b = 0; b < block_length - 1; ++b) top *= m;
  for (int b = 0; b < block_length; ++b) key = key * m + s[static_cast<std::size_t>(b)];
  keys[0] = key;
  for (std::size_t i = 1; i < n; ++i) {
    key = (key - s[i - 1] * top) * m + s[i + static_cast<std::size_t>(block_length) - 1];
    keys[i] = key;
  }
  std::sort(keys.begin(), keys.end());
  std::vector<std::uint64_t> counts;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && keys[j] == keys[i]) ++j;
    counts.push_back(j - i);
    i = j;
  }
  return {grassberger_entropy_nats(counts) / std::numbers::ln2, counts.size()};
}

}  // namespace

EntropyEstimate block_entropy_rate(const SymbolSequence& s, int block_length) {
  require(block_length >= 1, "block length must be >= 1");
  require(s.size() > static_cast<std::size_t>(block_length), "sequence shorter than the block length");
  const double bits_per_symbol = std::log2(static_cast<double>(std::max(2, s.alphabet_size)));
  require(bits_per_symbol * block_length <= 63.0, "block too long to index");
  const auto [h_b, distinct] = block_entropy_bits(s, block_length);
  const auto [h_prev, distinct_prev] = block_entropy_bits(s, block_length - 1);
  (void)distinct_prev;
  EntropyEstimate e;
  e.method = "block" + std::to_string(block_length);
  e.n = s.size();
  e.value = h_b - h_prev;
  e.undersampled = static_cast<double>(distinct) > static_cast<double>(s.size()) / 10.0;
  return e;
}

SequenceEstimator estimator_by_name(const std::string& name) {
  if (name == "ctw") return [](const SymbolSequence& s) { return ctw_entropy_rate(s); };
  if (name == "lz")
    return [](const SymbolSequence& s) {
      require(s.size() >= 2, "lz estimator needs at least two symbols");
      const std::size_t half = s.size() / 2;
      return lz_cross_parse_rate(s.window(0, half), s.window(half, s.size() - half));
    };
  if (name.rfind("block", 0) == 0 && name.size() > 5 && name.size() < 9 &&
      std::all_of(name.begin() + 5, name.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    const int b = std::stoi(name.substr(5));
    return [b](const SymbolSequence& s) { return block_entropy_rate(s, b); };
  }
  std::string valid;
  for (const auto& v : estimator_names()) valid += (valid.empty() ? "" : ", ") + v;
  throw ContractError("unknown estimation method '" + name + "' (valid: " + valid + ")");
}

std::vector<std::string> estimator_names() { return {"ctw", "lz", "block<B>"}; }

std::vector<std::size_t> log_spaced_lengths(std::size_t lo, std::size_t hi, int count) {
  require(lo >= 1 && hi >= lo && count >= 1, "bad length range");
  std::vector<std::size_t> out;
  for (int i = 0; i < count; ++i) {
    const double f = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    const double v = std::exp(std::log(static_cast<double>(lo)) +
                              f * (std::log(static_cast<double>(hi)) - std::log(static_cast<double>(lo))));
    out.push_back(static_cast<std::size_t>(std::llround(v)));
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::size_t> default_protocol_lengths() { return log_spaced_lengths(2000, 2'000'000, 15); }

std::vector<ProtocolPoint> finite_size_protocol(const SymbolSequence& full, const SequenceEstimator& estimator,
                                                const ProtocolOptions& options) {
  const auto lengths = options.lengths.empty() ? default_protocol_lengths() : options.lengths;
  require(options.repeats >= 1, "protocol needs at least one repeat");
  std::vector<ProtocolPoint> out;
  for (std::size_t li = 0; li < lengths.size(); ++li) {
    const std::size_t n = lengths[li];
    require(n >= 1 && n <= full.size(), "protocol window of " + std::to_string(n) +
                                            " symbols is longer than the dataset (" +
                                            std::to_string(full.size()) + ")");
    std::mt19937_64 rng(derive_seed(options.seed, "protocol_windows", li));
    std::uniform_int_distribution<std::size_t> offset(0, full.size() - n);
    for (int r = 0; r < options.repeats; ++r) {
      ProtocolPoint p;
      p.n = n;
      p.repeat = r;
      p.offset = offset(rng);
      p.estimate = estimator(full.window(p.offset, n));
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<ScalingPoint> aggregate_protocol(const std::vector<ProtocolPoint>& points) {
  std::vector<ScalingPoint> out;
  std::vector<std::size_t> ns;
  for (const auto& p : points)
    if (std::find(ns.begin(), ns.end(), p.n) == ns.end()) ns.push_back(p.n);
  for (auto n : ns) {
    std::vector<double> v;
    for (const auto& p : points)
      if (p.n == n) v.push_back(p.estimate.value);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double se = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1) /
                                               static_cast<double>(v.size()))
                                   : 0.0;
    out.push_back({static_cast<double>(n), mean, se});
  }
  return out;
}

HInfResult estimate_h_inf(const SymbolSequence& dataset, const SequenceEstimator& estimator,
                          const HInfOptions& options) {
  HInfResult r;
  r.measurement_entropy_bits = measurement_entropy(dataset);
  r.points = finite_size_protocol(dataset, estimator, options.protocol);
  r.fit = fit_scaling_ansatz(aggregate_protocol(r.points));
  return r;
}

HInfResult estimate_h_inf(const SymbolSequence& dataset, const HInfOptions& options) {
  const CtwOptions ctw = options.ctw;
  return estimate_h_inf(
      dataset, [ctw](const SymbolSequence& s) { return ctw_entropy_rate(s, ctw); }, options);
}

HInfResult estimate_h_inf(const Partition& p, const MapSpec& map, const HInfOptions& options) {
  const auto lengths =
      options.protocol.lengths.empty() ? default_protocol_lengths() : options.protocol.lengths;
  require(options.dataset_size >= *std::max_element(lengths.begin(), lengths.end()),
          "dataset must be at least as long as the longest protocol window");
  const auto symbols = symbolize_stream(p, map, options.dataset_size,
                                        derive_seed(options.protocol.seed, "dataset"), options.burn_in);
  return estimate_h_inf(symbols, options);
}

EntropyEstimate quick_entropy_rate(const Partition& p, const MapSpec& map, std::size_t n, std::uint64_t seed) {
  return ctw_entropy_rate(symbolize_stream(p, map, n, derive_seed(seed, "quick_dataset")));
}

}  // namespace infopart
