#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "infopart/entropy_rate.hpp"
#include "infopart/partitions.hpp"

using namespace infopart;

namespace {

SymbolSequence iid(std::size_t n, int m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(0, m - 1);
  std::vector<std::uint8_t> s(n);
  for (auto& x : s) x = static_cast<std::uint8_t>(d(rng));
  return {std::move(s), m};
}

SymbolSequence markov_chain(std::size_t n, double p01, double p10, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::uint8_t> s(n);
  std::uint8_t x = 0;
  for (auto& v : s) {
    const double flip = x == 0 ? p01 : p10;
    if (u(rng) < flip) x = static_cast<std::uint8_t>(1 - x);
    v = x;
  }
  return {std::move(s), 2};
}

double binary_entropy(double p) { return -p * std::log2(p) - (1 - p) * std::log2(1 - p); }

// Textbook CTW on an explicit context tree of fixed depth. Contexts read the
// past most-recent-first, padded with zeros before the start.
double reference_ctw_log2(const std::vector<std::uint8_t>& s, int m, int depth) {
  struct Node {
    std::vector<double> counts;
    double log_pe = 0.0;
  };
  std::map<std::vector<std::uint8_t>, Node> nodes;
  for (std::size_t t = 0; t < s.size(); ++t) {
    std::vector<std::uint8_t> ctx;
    for (int d = 0; d <= depth; ++d) {
      auto& node = nodes[ctx];
      if (node.counts.empty()) node.counts.assign(static_cast<std::size_t>(m), 0.0);
      double total = 0.0;
      for (double c : node.counts) total += c;
      node.log_pe += std::log2((node.counts[s[t]] + 0.5) / (total + 0.5 * m));
      node.counts[s[t]] += 1.0;
      const std::size_t back = static_cast<std::size_t>(d) + 1;
      ctx.push_back(t >= back ? s[t - back] : 0);
    }
  }
  // Weighted probabilities bottom-up: longer contexts first.
  std::map<std::vector<std::uint8_t>, double> log_pw;
  for (int d = depth; d >= 0; --d)
    for (const auto& [ctx, node] : nodes) {
      if (static_cast<int>(ctx.size()) != d) continue;
      if (d == depth) {
        log_pw[ctx] = node.log_pe;
        continue;
      }
      double children = 0.0;
      for (int a = 0; a < m; ++a) {
        auto c = ctx;
        c.push_back(static_cast<std::uint8_t>(a));
        if (auto it = log_pw.find(c); it != log_pw.end()) children += it->second;
      }
      const double hi = std::max(node.log_pe, children);
      log_pw[ctx] = hi + std::log2(0.5 * std::exp2(node.log_pe - hi) + 0.5 * std::exp2(children - hi));
    }
  return log_pw[{}];
}

// psi via recurrence up to x >= 8 and the asymptotic series.
double digamma(double x) {
  double r = 0.0;
  while (x < 8.0) {
    r -= 1.0 / x;
    x += 1.0;
  }
  const double f = 1.0 / (x * x);
  return r + std::log(x) - 0.5 / x - f * (1.0 / 12 - f * (1.0 / 120 - f * (1.0 / 252 - f / 240)));
}

double grassberger_g(double n) {
  return digamma(n) + 0.5 * std::pow(-1.0, n) * (digamma((n + 1) / 2) - digamma(n / 2));
}

}  // namespace

TEST_CASE("CTW code lengths on short strings") {
  // Identical contexts at every depth: the mixture collapses to KT.
  CtwTree a(2);
  CHECK(a.update(0) == doctest::Approx(1.0));
  CHECK(a.update(0) == doctest::Approx(-std::log2(0.75)));
  CHECK(a.log2_probability() == doctest::Approx(std::log2(3.0 / 8.0)));

  // "10": root KT 1/8, the two depth-1 children 1/2 each.
  CtwTree b(2);
  b.update(1);
  b.update(0);
  CHECK(b.log2_probability() == doctest::Approx(std::log2(0.5 / 8 + 0.5 / 4)));

  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const int m = seed % 2 == 0 ? 2 : 3;
    const auto s = iid(24, m, seed);
    CtwTree tree(m);
    tree.consume(s);
    CHECK(tree.log2_probability() == doctest::Approx(reference_ctw_log2(s.symbols, m, 30)).epsilon(1e-10));
    CHECK(tree.check_invariants());
  }
}

TEST_CASE("CTW invariants on longer strings") {
  const auto s = markov_chain(20'000, 0.2, 0.4, 3);
  CtwTree tree(2);
  tree.consume(s);
  CHECK(tree.check_invariants());
  // Pw >= Pe(root) / 2.
  CHECK(-tree.log2_probability() <= -tree.root_kt_log2_probability() + 1.0 + 1e-9);
  // Compressed storage keeps memory linear.
  CHECK(tree.node_count() <= 2 * s.size() + 1);

  const auto est = ctw_entropy_rate(s);
  CHECK(est.value == doctest::Approx(-tree.log2_probability() / static_cast<double>(s.size())));
}

TEST_CASE("CTW rejects bad input") {
  CHECK_THROWS_AS(CtwTree(1), ContractError);
  CtwTree t(2);
  CHECK_THROWS_AS(t.update(2), ContractError);
  CHECK_THROWS_AS(ctw_entropy_rate(SymbolSequence{}), ContractError);
}

TEST_CASE("CTW sanity on known sources") {
  CHECK(std::abs(ctw_entropy_rate(iid(1'000'000, 2, 1)).value - 1.0) <= 0.005);

  std::vector<std::uint8_t> alt(1'000'000);
  for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = static_cast<std::uint8_t>(i % 2);
  CHECK(ctw_entropy_rate(SymbolSequence(alt, 2)).value <= 0.01);

  const double p01 = 0.1, p10 = 0.3;
  const double pi0 = p10 / (p01 + p10);
  const double truth = pi0 * binary_entropy(p01) + (1 - pi0) * binary_entropy(p10);
  CHECK(std::abs(ctw_entropy_rate(markov_chain(1'000'000, p01, p10, 2)).value - truth) <= 0.005);

  CHECK(std::abs(ctw_entropy_rate(iid(200'000, 4, 5)).value - 2.0) <= 0.01);
}

TEST_CASE("CTW beats LZ cross parsing on the r=4 logistic generator") {
  const auto s = symbolize_stream(Partition::threshold({0.5}), MapSpec::logistic(4.0), 2'000'000, 0);
  const double ctw = ctw_entropy_rate(s).value;
  const double lz = estimator_by_name("lz")(s).value;
  CHECK(std::abs(ctw - 1.0) < std::abs(lz - 1.0));
}

TEST_CASE("LZ cross parsing phrase counts") {
  const SymbolSequence zeros(std::vector<std::uint8_t>(8, 0), 2);
  // Symbols absent from the database are length-one phrases.
  CHECK(lz_cross_parse_rate(zeros, SymbolSequence({1, 1, 1, 1}, 2)).value == doctest::Approx(3.0));
  CHECK(lz_cross_parse_rate(zeros, SymbolSequence({0, 0, 0, 0}, 2)).value == doctest::Approx(0.75));
  // Greedy parse of 01101 against 0101: "01" | "101".
  const SymbolSequence db({0, 1, 0, 1}, 2);
  CHECK(lz_cross_parse_rate(db, SymbolSequence({0, 1, 1, 0, 1}, 2)).value == doctest::Approx(2 * 2.0 / 5));
  // 0110 against 0101: "01" | "10".
  CHECK(lz_cross_parse_rate(db, SymbolSequence({0, 1, 1, 0}, 2)).value == doctest::Approx(2 * 2.0 / 4));
  CHECK_THROWS_AS(lz_cross_parse_rate(SymbolSequence{}, db), ContractError);
}

TEST_CASE("Grassberger correction") {
  for (int n = 1; n <= 40; ++n) {
    const std::vector<std::uint64_t> single{static_cast<std::uint64_t>(n)};
    const double expected = std::log(n) - grassberger_g(n);
    CHECK(grassberger_entropy_nats(single) == doctest::Approx(expected).epsilon(1e-10));
  }
  const std::vector<std::uint64_t> counts{3, 7, 1, 12};
  double total = 0, sum = 0;
  for (auto c : counts) {
    total += static_cast<double>(c);
    sum += static_cast<double>(c) * grassberger_g(static_cast<double>(c));
  }
  CHECK(grassberger_entropy_nats(counts) == doctest::Approx(std::log(total) - sum / total).epsilon(1e-10));
  // Large uniform histograms approach ln K.
  CHECK(grassberger_entropy_nats(std::vector<std::uint64_t>(16, 100000)) == doctest::Approx(std::log(16.0)).epsilon(1e-4));
}

TEST_CASE("block entropy") {
  const auto coin = iid(1'000'000, 2, 8);
  const auto e = block_entropy_rate(coin, 6);
  CHECK(std::abs(e.value - 1.0) < 0.005);
  CHECK_FALSE(e.undersampled);

  const double p01 = 0.2, p10 = 0.3;
  const double pi0 = p10 / (p01 + p10);
  const double truth = pi0 * binary_entropy(p01) + (1 - pi0) * binary_entropy(p10);
  CHECK(std::abs(block_entropy_rate(markov_chain(1'000'000, p01, p10, 4), 4).value - truth) < 0.005);

  CHECK(block_entropy_rate(iid(1000, 2, 1), 10).undersampled);
  CHECK_THROWS_AS(estimator_by_name("blockX"), ContractError);
  CHECK_THROWS_AS(estimator_by_name("gzip"), ContractError);
  CHECK(estimator_by_name("block3")(coin).method.find("block") != std::string::npos);
}

TEST_CASE("finite-size protocol") {
  const auto lengths = log_spaced_lengths(2000, 2'000'000, 15);
  CHECK(lengths.size() == 15);
  CHECK(lengths.front() == 2000);
  CHECK(lengths.back() == 2'000'000);
  for (std::size_t i = 1; i < lengths.size(); ++i)
    CHECK(static_cast<double>(lengths[i]) / lengths[i - 1] == doctest::Approx(std::pow(1000.0, 1.0 / 14)).epsilon(0.01));
  CHECK(default_protocol_lengths() == lengths);

  const auto s = markov_chain(100'000, 0.2, 0.3, 1);
  ProtocolOptions opt;
  opt.lengths = {1000, 4000, 16000};
  opt.repeats = 3;
  opt.seed = 17;
  const auto a = finite_size_protocol(s, estimator_by_name("ctw"), opt);
  const auto b = finite_size_protocol(s, estimator_by_name("ctw"), opt);
  REQUIRE(a.size() == 9);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].n == b[i].n);
    CHECK(a[i].offset == b[i].offset);
    CHECK(a[i].estimate.value == b[i].estimate.value);
    CHECK(a[i].offset + a[i].n <= s.size());
  }
  const auto agg = aggregate_protocol(a);
  REQUIRE(agg.size() == 3);
  double mean = 0.0;
  for (int r = 0; r < 3; ++r) mean += a[static_cast<std::size_t>(r)].estimate.value / 3;
  CHECK(agg[0].n == 1000);
  CHECK(agg[0].value == doctest::Approx(mean));

  opt.lengths = {200'000};
  CHECK_THROWS_AS(finite_size_protocol(s, estimator_by_name("ctw"), opt), ContractError);
}

TEST_CASE("scaling fit recovers exact synthetic data") {
  std::vector<ScalingPoint> pts;
  for (auto n : log_spaced_lengths(2000, 2'000'000, 15)) {
    const double x = static_cast<double>(n);
    pts.push_back({x, scaling_model(x, 0.52, 1.7, 0.6), 0.0});
  }
  const auto f = fit_scaling_ansatz(pts);
  CHECK(f.converged);
  CHECK(f.h_inf == doctest::Approx(0.52).epsilon(1e-6));
  CHECK(f.c == doctest::Approx(1.7).epsilon(1e-5));
  CHECK(f.gamma == doctest::Approx(0.6).epsilon(1e-6));
}

TEST_CASE("scaling fit with noise lands within three standard errors") {
  std::mt19937_64 rng(99);
  int inside = 0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    std::vector<ScalingPoint> pts;
    for (auto n : log_spaced_lengths(2000, 2'000'000, 15)) {
      const double x = static_cast<double>(n);
      const double se = 0.02 / std::sqrt(x / 2000.0);
      std::normal_distribution<double> noise(0.0, se);
      pts.push_back({x, scaling_model(x, 1.0, 2.0, 0.7) + noise(rng), se});
    }
    const auto f = fit_scaling_ansatz(pts);
    CHECK(f.std_error_h_inf > 0.0);
    if (std::abs(f.h_inf - 1.0) <= 3 * f.std_error_h_inf) ++inside;
  }
  CHECK(inside >= trials - 1);
}

TEST_CASE("scaling fit edge cases") {
  std::vector<ScalingPoint> flat;
  for (double n : {1e3, 1e4, 1e5, 1e6, 1e7}) flat.push_back({n, 0.8, 0.0});
  const auto f = fit_scaling_ansatz(flat);
  CHECK(f.h_inf == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(std::abs(f.c) < 1e-6);

  CHECK_THROWS_AS(fit_scaling_ansatz({{1e3, 1, 0}, {1e4, 1, 0}, {1e5, 1, 0}}), ContractError);
  CHECK_THROWS_AS(fit_scaling_ansatz({{1e3, 1, 0}, {1e3, 1, 0}, {1e4, 1, 0}, {1e5, 1, 0}}), ContractError);
  CHECK_THROWS_AS(fit_scaling_ansatz({{1e3, NAN, 0}, {1e4, 1, 0}, {1e5, 1, 0}, {1e6, 1, 0}}), ContractError);
}
