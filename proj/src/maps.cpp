#include "infopart/maps.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

#include "infopart/error.hpp"

namespace infopart {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

StateVector StateVector::from_span(std::span<const double> v) {
  require(v.size() == 1 || v.size() == 2, "state vectors have dimension 1 or 2");
  return v.size() == 1 ? StateVector(v[0]) : StateVector(v[0], v[1]);
}

bool StateVector::finite() const {
  for (int i = 0; i < dim_; ++i)
    if (!std::isfinite(coords_[static_cast<std::size_t>(i)])) return false;
  return true;
}

MapSpec MapSpec::logistic(double r) {
  require(r > 0.0 && r <= 4.0, "logistic map requires 0 < r <= 4 (got r=" + std::to_string(r) + ")");
  return MapSpec(LogisticParams{r});
}

MapSpec MapSpec::henon(double a, double b) {
  require(b != 0.0, "henon map requires b != 0 for invertibility");
  require(std::isfinite(a) && std::isfinite(b), "henon parameters must be finite");
  return MapSpec(HenonParams{a, b});
}

MapSpec MapSpec::ikeda(double a, double b, double kappa, double eta) {
  require(b != 0.0, "ikeda map requires b != 0 for invertibility");
  require(std::isfinite(a) && std::isfinite(b) && std::isfinite(kappa) && std::isfinite(eta),
          "ikeda parameters must be finite");
  return MapSpec(IkedaParams{a, b, kappa, eta});
}

MapSpec MapSpec::by_name(const std::string& name) {
  if (name == "logistic") return logistic();
  if (name == "henon") return henon();
  if (name == "ikeda") return ikeda();
  throw ContractError("unknown map '" + name + "' (valid: logistic, henon, ikeda)");
}

int MapSpec::dim() const {
  return std::holds_alternative<LogisticParams>(params_) ? 1 : 2;
}

std::string MapSpec::name() const {
  return std::visit(overloaded{[](const LogisticParams&) { return std::string("logistic"); },
                               [](const HenonParams&) { return std::string("henon"); },
                               [](const IkedaParams&) { return std::string("ikeda"); }},
                    params_);
}

std::string MapSpec::describe() const {
  // shortest representation that parses back to the same double
  const auto num = [](double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  std::ostringstream os;
  std::visit(overloaded{[&](const LogisticParams& p) { os << "logistic r=" << num(p.r); },
                        [&](const HenonParams& p) { os << "henon a=" << num(p.a) << " b=" << num(p.b); },
                        [&](const IkedaParams& p) {
                          os << "ikeda a=" << num(p.a) << " b=" << num(p.b) << " kappa=" << num(p.kappa)
                             << " eta=" << num(p.eta);
                        }},
             params_);
  return os.str();
}

void MapSpec::check_state(const StateVector& x) const {
  if (x.dim() != dim())
    throw ContractError(name() + " map expects a " + std::to_string(dim()) +
                        "-dimensional state, got " + std::to_string(x.dim()));
  if (!x.finite()) throw InvalidStateError(name() + " map was given a non-finite state");
}

StateVector MapSpec::step(const StateVector& x) const {
  check_state(x);
  return std::visit(
      overloaded{[&](const LogisticParams& p) { return StateVector(p.r * x[0] * (1.0 - x[0])); },
                 [&](const HenonParams& p) {
                   return StateVector(1.0 - p.a * x[0] * x[0] + p.b * x[1], x[0]);
                 },
                 [&](const IkedaParams& p) {
                   const double phi = p.kappa - p.eta / (1.0 + x[0] * x[0] + x[1] * x[1]);
                   const double c = std::cos(phi), s = std::sin(phi);
                   return StateVector(p.a + p.b * (x[0] * c - x[1] * s),
                                      p.b * (x[0] * s + x[1] * c));
                 }},
      params_);
}

Jacobian MapSpec::jacobian(const StateVector& x) const {
  check_state(x);
  Jacobian j;
  std::visit(overloaded{[&](const LogisticParams& p) {
                          j.dim = 1;
                          j(0, 0) = p.r * (1.0 - 2.0 * x[0]);
                        },
                        [&](const HenonParams& p) {
                          j.dim = 2;
                          j(0, 0) = -2.0 * p.a * x[0];
                          j(0, 1) = p.b;
                          j(1, 0) = 1.0;
                          j(1, 1) = 0.0;
                        },
                        [&](const IkedaParams& p) {
                          j.dim = 2;
                          const double q = 1.0 + x[0] * x[0] + x[1] * x[1];
                          const double phi = p.kappa - p.eta / q;
                          const double c = std::cos(phi), s = std::sin(phi);
                          const double dphi_dx = 2.0 * p.eta * x[0] / (q * q);
                          const double dphi_dy = 2.0 * p.eta * x[1] / (q * q);
                          const double rot_x = x[0] * c - x[1] * s;  // d/dphi of y-part
                          const double rot_y = x[0] * s + x[1] * c;  // -d/dphi of x-part
                          j(0, 0) = p.b * (c - rot_y * dphi_dx);
                          j(0, 1) = p.b * (-s - rot_y * dphi_dy);
                          j(1, 0) = p.b * (s + rot_x * dphi_dx);
                          j(1, 1) = p.b * (c + rot_x * dphi_dy);
                        }},
             params_);
  return j;
}

StateVector MapSpec::default_initial_state(std::uint64_t seed) const {
  StateVector x0 = std::visit(
      overloaded{[](const LogisticParams&) { return StateVector(0.3); },
                 [](const HenonParams&) { return StateVector(0.1, 0.1); },
                 [](const IkedaParams&) { return StateVector(0.1, 0.0); }},
      params_);
  if (seed != 0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-0.01, 0.01);
    for (int i = 0; i < x0.dim(); ++i) x0[i] += jitter(rng);
  }
  return x0;
}

namespace {

void check_escape(const StateVector& x, std::size_t iteration) {
  bool escaped = !x.finite();
  for (int i = 0; i < x.dim() && !escaped; ++i) escaped = std::abs(x[i]) > kEscapeRadius;
  if (escaped)
    throw EscapeError("trajectory escaped at iteration " + std::to_string(iteration), iteration);
}

}  // namespace

Trajectory generate_trajectory(const MapSpec& map, const StateVector& x0, std::size_t n,
                               std::size_t burn_in, std::uint64_t seed) {
  require(n >= 1, "trajectory length n must be >= 1");
  require(x0.dim() == map.dim(), "initial state dimension does not match the map");
  if (!x0.finite()) throw InvalidStateError("initial state is not finite");

  Trajectory t{map, map.dim(), {}, seed, burn_in};
  t.data.reserve(n * static_cast<std::size_t>(map.dim()));
  StateVector x = x0;
  std::size_t iteration = 0;
  for (; iteration < burn_in; ++iteration) {
    x = map.step(x);
    check_escape(x, iteration + 1);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) {
      x = map.step(x);
      check_escape(x, ++iteration);
    }
    for (int c = 0; c < x.dim(); ++c) t.data.push_back(x[c]);
  }
  return t;
}

Trajectory generate_trajectory(const MapSpec& map, std::size_t n, std::uint64_t seed,
                               std::size_t burn_in) {
  return generate_trajectory(map, map.default_initial_state(seed), n, burn_in, seed);
}

LyapunovSpectrum lyapunov_spectrum(const MapSpec& map, std::size_t n, std::uint64_t seed) {
  require(n >= 1, "lyapunov_spectrum needs n >= 1");
  const int d = map.dim();
  StateVector x = map.default_initial_state(seed);
  for (std::size_t i = 0; i < kDefaultBurnIn; ++i) {
    x = map.step(x);
    check_escape(x, i + 1);
  }

  // Orthonormal tangent frame, columns q1, q2.
  std::array<double, 4> q{1.0, 0.0, 0.0, 1.0};
  std::array<double, 2> sums{0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    const Jacobian j = map.jacobian(x);
    if (d == 1) {
      sums[0] += std::log(std::abs(j(0, 0)));
    } else {
      double w1x = j(0, 0) * q[0] + j(0, 1) * q[2];
      double w1y = j(1, 0) * q[0] + j(1, 1) * q[2];
      double w2x = j(0, 0) * q[1] + j(0, 1) * q[3];
      double w2y = j(1, 0) * q[1] + j(1, 1) * q[3];
      const double r11 = std::hypot(w1x, w1y);
      w1x /= r11;
      w1y /= r11;
      const double proj = w1x * w2x + w1y * w2y;
      w2x -= proj * w1x;
      w2y -= proj * w1y;
      const double r22 = std::hypot(w2x, w2y);
      q = {w1x, w2x / r22, w1y, w2y / r22};
      sums[0] += std::log(r11);
      sums[1] += std::log(r22);
    }
    x = map.step(x);
    check_escape(x, kDefaultBurnIn + i + 1);
  }

  LyapunovSpectrum out;
  out.n_iterations = n;
  for (int k = 0; k < d; ++k)
    out.exponents.push_back(sums[static_cast<std::size_t>(k)] / static_cast<double>(n) /
                            std::numbers::ln2);
  std::sort(out.exponents.begin(), out.exponents.end(), std::greater<>());
  for (double e : out.exponents) out.h_ks += std::max(e, 0.0);
  return out;
}

}  // namespace infopart
