#pragma once

// Entropy-rate estimators for symbol sequences and the finite-size
// extrapolation h_N = h_inf + c log N / N^gamma.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "infopart/maps.hpp"
#include "infopart/symbols.hpp"

namespace infopart {

class Partition;

struct EntropyEstimate {
  double value = 0.0;   // bits/symbol
  double std_error = 0.0;  // bits/symbol
  std::string method;
  std::size_t n = 0;
  bool undersampled = false;  // block entropy only
};

/// Sequential infinite-depth context tree weighting over an m-ary alphabet.
///
/// Every context is extended indefinitely into the past by padding with
/// symbol 0, so all tree sources are unbounded; contexts that agree for
/// `max_depth` symbols are merged into one leaf. Chains of nodes visited by
/// exactly the same occurrences are stored as a single compressed edge whose
/// weighted probability has the closed form
///   Pw(top) = (1 - 2^-g) Pe + 2^-g Pw(bottom)
/// for g implicit nodes, so memory stays O(N).
class CtwTree {
 public:
  static constexpr std::uint32_t kDefaultMaxDepth = 1024;

  explicit CtwTree(int alphabet_size, std::uint32_t max_depth = kDefaultMaxDepth);

  /// Feed the next symbol; returns its code length in bits.
  double update(std::uint8_t symbol);

  /// Feed a whole sequence (must match the alphabet).
  void consume(const SymbolSequence& s);
  void reserve(std::size_t more_symbols);

  double log2_probability() const;  // log2 Pw of everything seen so far
  double root_kt_log2_probability() const;  // memoryless KT model at the root
  std::size_t symbols_seen() const { return history_.size() - max_depth_; }
  std::size_t node_count() const { return nodes_.size(); }
  int alphabet_size() const { return m_; }

  /// Re-derives counts and weighted probabilities of every internal node from
  /// its children and compares with the stored values. For tests.
  bool check_invariants(double tolerance = 1e-9) const;

 private:
  struct Node {
    std::uint32_t first_child = 0;
    std::uint32_t next_sibling = 0;
    std::uint32_t pos = 0;    // occurrence time whose context runs through this node
    std::uint32_t depth = 0;  // depth at the bottom of the incoming edge
    std::uint32_t total = 0;
    std::uint8_t symbol = 0;  // first context symbol on the incoming edge
    double log_pe = 0.0;      // natural log
    double log_pw = 0.0;
    double contribution = 0.0;  // log Pw at the top of the incoming edge
  };

  std::uint8_t context_symbol(std::uint32_t t, std::uint32_t depth) const {
    return history_[max_depth_ + t - depth];
  }
  bool is_leaf(const Node& n) const { return n.depth == max_depth_; }
  double child_contribution(const Node& child, std::uint32_t parent_depth) const;
  void refresh(Node& n, std::uint32_t parent_depth) const;  // log_pw and contribution
  void grow_log_tables(std::size_t size);
  std::uint32_t new_node(std::uint32_t pos, std::uint32_t depth, std::uint8_t symbol);

  int m_;
  std::uint32_t max_depth_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> counts_;  // nodes_.size() * m_
  std::vector<std::uint8_t> history_;  // max_depth_ zeros, then the sequence
  std::vector<std::uint32_t> path_;
  std::vector<double> log_keep_;  // log(1 - 2^-g) by gap g
  std::vector<double> log_count_;  // log(k + 1/2)
  std::vector<double> log_total_;  // log(k + m/2)
};

struct CtwOptions {
  std::uint32_t max_depth = CtwTree::kDefaultMaxDepth;
};

/// -log2 Pw(s) / N. std_error is the i.i.d. standard error of the per-symbol
/// code lengths (an indication only; code lengths are correlated).
EntropyEstimate ctw_entropy_rate(const SymbolSequence& s, const CtwOptions& options = {});

/// Ziv-Merhav cross parsing: target is split greedily into the longest
/// phrases that occur somewhere in database; value = c log2|database| / |target|.
EntropyEstimate lz_cross_parse_rate(const SymbolSequence& database, const SymbolSequence& target);

/// Bias-corrected block entropy difference H(B) - H(B-1) in bits.
EntropyEstimate block_entropy_rate(const SymbolSequence& s, int block_length);

/// Grassberger (2003) bias-corrected entropy (nats) of a histogram of counts.
double grassberger_entropy_nats(const std::vector<std::uint64_t>& counts);

using SequenceEstimator = std::function<EntropyEstimate(const SymbolSequence&)>;

/// Named estimator: "ctw", "lz" (cross parse of first half vs second half of
/// the window) or "block<B>" e.g. "block8".
SequenceEstimator estimator_by_name(const std::string& name);
std::vector<std::string> estimator_names();

struct ProtocolPoint {
  std::size_t n = 0;
  int repeat = 0;
  std::size_t offset = 0;
  EntropyEstimate estimate;
};

struct ProtocolOptions {
  std::vector<std::size_t> lengths;  // empty -> default_protocol_lengths()
  int repeats = 5;
  std::uint64_t seed = 0;
};

/// `count` lengths logarithmically spaced between lo and hi (rounded).
std::vector<std::size_t> log_spaced_lengths(std::size_t lo, std::size_t hi, int count);
/// Fifteen lengths in [2e3, 2e6].
std::vector<std::size_t> default_protocol_lengths();

/// Runs the estimator on `repeats` random contiguous windows per length.
std::vector<ProtocolPoint> finite_size_protocol(const SymbolSequence& full,
                                                const SequenceEstimator& estimator,
                                                const ProtocolOptions& options);

struct ScalingPoint {
  double n = 0.0;
  double value = 0.0;
  double std_error = 0.0;
};

/// Mean and standard error over repeats, one point per distinct N.
std::vector<ScalingPoint> aggregate_protocol(const std::vector<ProtocolPoint>& points);

struct ScalingFit {
  double h_inf = 0.0;
  double c = 0.0;
  double gamma = 0.5;
  double std_error_h_inf = 0.0;
  double residual_norm = 0.0;  // sqrt of weighted chi^2
  int iterations = 0;
  bool converged = false;
};

/// Carries the best iterate when Levenberg-Marquardt fails to converge.
class FitError : public NumericError {
 public:
  FitError(const std::string& what, ScalingFit best) : NumericError(what), best_(best) {}
  const ScalingFit& best() const { return best_; }

 private:
  ScalingFit best_;
};

struct FitOptions {
  int max_iterations = 500;
  double tolerance = 1e-14;
};

/// Weighted Levenberg-Marquardt fit of h_N = h_inf + c ln N / N^gamma with
/// gamma > 0; standard error from the covariance scaled by the reduced chi^2.
ScalingFit fit_scaling_ansatz(const std::vector<ScalingPoint>& points, const FitOptions& options = {});

double scaling_model(double n, double h_inf, double c, double gamma);

struct HInfOptions {
  std::size_t dataset_size = 20'000'000;
  ProtocolOptions protocol;
  CtwOptions ctw;
  std::size_t burn_in = kDefaultBurnIn;
};

struct HInfResult {
  ScalingFit fit;
  std::vector<ProtocolPoint> points;
  double measurement_entropy_bits = 0.0;
};

/// Trajectory -> symbols -> CTW finite-size protocol -> ansatz fit.
HInfResult estimate_h_inf(const Partition& p, const MapSpec& map, const HInfOptions& options);

/// Same pipeline on an already symbolized dataset.
HInfResult estimate_h_inf(const SymbolSequence& dataset, const HInfOptions& options);
/// With any sequence estimator in place of CTW (options.ctw is ignored).
HInfResult estimate_h_inf(const SymbolSequence& dataset, const SequenceEstimator& estimator,
                          const HInfOptions& options);

/// Single CTW pass on a fresh trajectory of n symbols (no scaling fit); used
/// to rank trials.
EntropyEstimate quick_entropy_rate(const Partition& p, const MapSpec& map, std::size_t n,
                                   std::uint64_t seed);

}  // namespace infopart
