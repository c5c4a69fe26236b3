#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "infopart/entropy_rate.hpp"

namespace infopart {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

}  // namespace

CtwTree::CtwTree(int alphabet_size, std::uint32_t max_depth) : m_(alphabet_size), max_depth_(max_depth) {
  require(alphabet_size >= 2 && alphabet_size <= 256, "CTW alphabet size must be in [2, 256]");
  require(max_depth >= 1, "CTW max depth must be >= 1");
  history_.assign(max_depth_, 0);
  log_keep_.resize(max_depth_ + 1, 0.0);
  for (std::uint32_t g = 1; g <= max_depth_; ++g)
    log_keep_[g] = std::log1p(-std::exp(-static_cast<double>(g) * std::numbers::ln2));
  new_node(0, 0, 0);  // root
}

std::uint32_t CtwTree::new_node(std::uint32_t pos, std::uint32_t depth, std::uint8_t symbol) {
  Node n;
  n.pos = pos;
  n.depth = depth;
  n.symbol = symbol;
  nodes_.push_back(n);
  counts_.resize(counts_.size() + static_cast<std::size_t>(m_), 0);
  return static_cast<std::uint32_t>(nodes_.size() - 1);
}

double CtwTree::child_contribution(const Node& child, std::uint32_t parent_depth) const {
  // The implicit nodes between parent and child have the child's counts.
  if (is_leaf(child)) return child.log_pe;
  const std::uint32_t gap = child.depth - parent_depth - 1;
  if (gap == 0) return child.log_pw;
  const double deep = -static_cast<double>(gap) * std::numbers::ln2;
  return log_add(log_keep_[gap] + child.log_pe, deep + child.log_pw);
}

void CtwTree::grow_log_tables(std::size_t size) {
  for (std::size_t k = log_count_.size(); k < size; ++k) {
    log_count_.push_back(std::log(static_cast<double>(k) + 0.5));
    log_total_.push_back(std::log(static_cast<double>(k) + 0.5 * m_));
  }
}

void CtwTree::refresh(Node& n, std::uint32_t parent_depth) const {
  if (is_leaf(n)) {
    n.log_pw = n.contribution = n.log_pe;
    return;
  }
  double product = 0.0;
  for (std::uint32_t c = n.first_child; c != 0; c = nodes_[c].next_sibling) product += nodes_[c].contribution;
  // Pw = (Pe + P) / 2 and, with w = 2^-(gap+1), the edge top is (1 - w) Pe + w P.
  // Both share r = log P - log Pe.
  const std::uint32_t gap = n.depth > parent_depth ? n.depth - parent_depth - 1 : 0;  // root: unused
  const double w = std::ldexp(1.0, -static_cast<int>(gap) - 1);
  const double r = product - n.log_pe;
  if (r <= 0.0) {
    const double e = std::exp(r);
    n.log_pw = n.log_pe - std::numbers::ln2 + std::log1p(e);
    n.contribution = gap == 0 ? n.log_pw : n.log_pe + std::log1p(w * std::expm1(r));
  } else {
    const double e = std::exp(-r);
    n.log_pw = product - std::numbers::ln2 + std::log1p(e);
    n.contribution = gap == 0 ? n.log_pw : product + std::log(w + (1.0 - w) * e);
  }
}

double CtwTree::update(std::uint8_t symbol) {
  require(symbol < m_, "symbol outside the CTW alphabet");
  require(history_.size() - max_depth_ < std::numeric_limits<std::uint32_t>::max() - 1,
          "CTW sequence too long");
  const auto t = static_cast<std::uint32_t>(history_.size() - max_depth_);
  const double before = nodes_[0].log_pw;

  path_.clear();
  std::uint32_t node = 0;
  path_.push_back(node);
  while (nodes_[node].depth < max_depth_) {
    const std::uint32_t depth = nodes_[node].depth + 1;
    const std::uint8_t c = context_symbol(t, depth);
    std::uint32_t prev = 0, child = nodes_[node].first_child;
    while (child != 0 && nodes_[child].symbol != c) {
      prev = child;
      child = nodes_[child].next_sibling;
    }
    if (child == 0) {
      const std::uint32_t leaf = new_node(t, max_depth_, c);
      nodes_[leaf].next_sibling = nodes_[node].first_child;
      nodes_[node].first_child = leaf;
      path_.push_back(leaf);
      break;
    }
    const std::uint32_t child_depth = nodes_[child].depth;
    const std::uint32_t other = nodes_[child].pos;
    std::uint32_t d = depth + 1;
    while (d <= child_depth && context_symbol(t, d) == context_symbol(other, d)) ++d;
    if (d > child_depth) {
      node = child;
      path_.push_back(node);
      continue;
    }
    // Split the edge: `mid` sits at depth d - 1, the last agreeing depth.
    const std::uint32_t mid = new_node(other, d - 1, c);
    Node& m = nodes_[mid];
    Node& ch = nodes_[child];
    m.total = ch.total;
    m.log_pe = ch.log_pe;
    std::copy_n(counts_.begin() + static_cast<std::ptrdiff_t>(child) * m_, m_,
                counts_.begin() + static_cast<std::ptrdiff_t>(mid) * m_);
    m.next_sibling = ch.next_sibling;
    if (prev == 0)
      nodes_[node].first_child = mid;
    else
      nodes_[prev].next_sibling = mid;
    ch.next_sibling = 0;
    ch.symbol = context_symbol(other, d);
    ch.contribution = child_contribution(ch, d - 1);
    const std::uint32_t leaf = new_node(t, max_depth_, context_symbol(t, d));
    nodes_[leaf].next_sibling = child;
    nodes_[mid].first_child = leaf;
    path_.push_back(mid);
    path_.push_back(leaf);
    break;
  }

  grow_log_tables(static_cast<std::size_t>(t) + 1);
  for (std::size_t i = path_.size(); i-- > 0;) {
    Node& n = nodes_[path_[i]];
    std::uint32_t& count = counts_[static_cast<std::size_t>(path_[i]) * m_ + symbol];
    n.log_pe += log_count_[count] - log_total_[n.total];
    ++count;
    ++n.total;
    refresh(n, i > 0 ? nodes_[path_[i - 1]].depth : 0);
  }
  history_.push_back(symbol);
  return (before - nodes_[0].log_pw) / std::numbers::ln2;
}

void CtwTree::consume(const SymbolSequence& s) {
  require(s.alphabet_size <= m_, "sequence alphabet larger than the CTW alphabet");
  reserve(s.size());
  for (auto x : s.symbols) update(x);
}

void CtwTree::reserve(std::size_t more_symbols) {
  nodes_.reserve(nodes_.size() + 2 * more_symbols);
  counts_.reserve(counts_.size() + 2 * more_symbols * static_cast<std::size_t>(m_));
  history_.reserve(history_.size() + more_symbols);
  log_count_.reserve(log_count_.size() + more_symbols);
  log_total_.reserve(log_total_.size() + more_symbols);
}

double CtwTree::log2_probability() const { return nodes_[0].log_pw / std::numbers::ln2; }

double CtwTree::root_kt_log2_probability() const { return nodes_[0].log_pe / std::numbers::ln2; }

bool CtwTree::check_invariants(double tolerance) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (is_leaf(n)) {
      if (n.first_child != 0 || std::abs(n.log_pw - n.log_pe) > tolerance) return false;
      continue;
    }
    if (i != 0 && n.first_child == 0) return false;
    std::vector<std::uint64_t> sum(static_cast<std::size_t>(m_), 0);
    std::uint64_t total = 0;
    for (std::uint32_t c = n.first_child; c != 0; c = nodes_[c].next_sibling) {
      if (nodes_[c].depth <= n.depth) return false;
      total += nodes_[c].total;
      for (int s = 0; s < m_; ++s) sum[static_cast<std::size_t>(s)] += counts_[c * static_cast<std::size_t>(m_) + static_cast<std::size_t>(s)];
    }
    if (total != n.total) return false;
    double log_pe = 0.0;  // KT probability recomputed from the final counts
    std::uint64_t running = 0;
    for (int s = 0; s < m_; ++s) {
      const std::uint64_t k = sum[static_cast<std::size_t>(s)];
      if (k != counts_[i * static_cast<std::size_t>(m_) + static_cast<std::size_t>(s)]) return false;
      log_pe += std::lgamma(static_cast<double>(k) + 0.5) - std::lgamma(0.5);
      running += k;
    }
    log_pe -= std::lgamma(static_cast<double>(running) + 0.5 * m_) - std::lgamma(0.5 * m_);
    if (std::abs(log_pe - n.log_pe) > tolerance * std::max(1.0, std::abs(log_pe))) return false;
    double product = 0.0;
    for (std::uint32_t c = n.first_child; c != 0; c = nodes_[c].next_sibling) {
      const double fresh = child_contribution(nodes_[c], n.depth);
      if (std::abs(fresh - nodes_[c].contribution) > tolerance * std::max(1.0, std::abs(fresh))) return false;
      product += fresh;
    }
    const double log_pw = log_add(n.log_pe, product) - std::numbers::ln2;
    if (std::abs(log_pw - n.log_pw) > tolerance * std::max(1.0, std::abs(n.log_pw))) return false;
    if (n.log_pw < n.log_pe - std::numbers::ln2 - tolerance) return false;
  }
  return true;
}

EntropyEstimate ctw_entropy_rate(const SymbolSequence& s, const CtwOptions& options) {
  require(!s.empty(), "CTW needs a non-empty sequence");
  const int m = std::max(2, s.alphabet_size);
  CtwTree tree(m, options.max_depth);
  tree.reserve(s.size());
  double sum = 0.0, sum_sq = 0.0;
  for (auto x : s.symbols) {
    const double bits = tree.update(x);
    sum += bits;
    sum_sq += bits * bits;
  }
  const auto n = static_cast<double>(s.size());
  EntropyEstimate e;
  e.method = "ctw";
  e.n = s.size();
  e.value = -tree.log2_probability() / n;
  const double mean = sum / n;
  const double var = std::max(0.0, sum_sq / n - mean * mean);
  e.std_error = std::sqrt(var / n);
  return e;
}

}  // namespace infopart
