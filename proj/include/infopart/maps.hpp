#pragma once

// Chaotic maps, trajectories over their invariant measures, and the
// Lyapunov-spectrum oracle for the metric entropy.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace infopart {

/// A point in a 1-D or 2-D state space.
class StateVector {
 public:
  StateVector() = default;
  explicit StateVector(double x) : coords_{x, 0.0}, dim_(1) {}
  StateVector(double x, double y) : coords_{x, y}, dim_(2) {}
  static StateVector from_span(std::span<const double> v);

  int dim() const { return dim_; }
  double operator[](int i) const { return coords_[static_cast<std::size_t>(i)]; }
  double& operator[](int i) { return coords_[static_cast<std::size_t>(i)]; }
  std::span<const double> coords() const { return {coords_.data(), static_cast<std::size_t>(dim_)}; }
  bool finite() const;

  friend bool operator==(const StateVector&, const StateVector&) = default;

 private:
  std::array<double, 2> coords_{0.0, 0.0};
  int dim_ = 1;
};

struct LogisticParams {
  double r = 3.7115;
  friend bool operator==(const LogisticParams&, const LogisticParams&) = default;
};
struct HenonParams {
  double a = 1.4;
  double b = 0.3;
  friend bool operator==(const HenonParams&, const HenonParams&) = default;
};
struct IkedaParams {
  double a = 1.0;
  double b = 0.9;
  double kappa = 0.4;
  double eta = 6.0;
  friend bool operator==(const IkedaParams&, const IkedaParams&) = default;
};

/// Row-major d x d matrix, d in {1, 2}.
struct Jacobian {
  int dim = 1;
  std::array<double, 4> m{};
  double operator()(int i, int j) const { return m[static_cast<std::size_t>(i * dim + j)]; }
  double& operator()(int i, int j) { return m[static_cast<std::size_t>(i * dim + j)]; }
  double determinant() const { return dim == 1 ? m[0] : m[0] * m[3] - m[1] * m[2]; }
};

/// One of the three parameterized maps. Construction validates parameters.
class MapSpec {
 public:
  using Variant = std::variant<LogisticParams, HenonParams, IkedaParams>;

  MapSpec() = default;  // logistic, r = 3.7115

  static MapSpec logistic(double r = 3.7115);
  static MapSpec henon(double a = 1.4, double b = 0.3);
  static MapSpec ikeda(double a = 1.0, double b = 0.9, double kappa = 0.4, double eta = 6.0);
  /// Build by name ("logistic", "henon", "ikeda") with default parameters.
  static MapSpec by_name(const std::string& name);

  const Variant& params() const { return params_; }
  int dim() const;
  std::string name() const;
  /// "logistic r=4" style description, stable across runs (used in headers).
  std::string describe() const;

  StateVector step(const StateVector& x) const;
  Jacobian jacobian(const StateVector& x) const;
  /// Standard-basin starting point; seed != 0 adds a small seeded offset.
  StateVector default_initial_state(std::uint64_t seed = 0) const;

  friend bool operator==(const MapSpec&, const MapSpec&) = default;

 private:
  explicit MapSpec(Variant p) : params_(p) {}
  void check_state(const StateVector& x) const;
  Variant params_{LogisticParams{}};
};

inline constexpr std::size_t kDefaultBurnIn = 1000;
inline constexpr double kEscapeRadius = 1e6;

/// n recorded states (row-major n x d) after discarding burn_in iterates.
struct Trajectory {
  MapSpec map;
  int dim = 1;
  std::vector<double> data;
  std::uint64_t seed = 0;
  std::size_t burn_in = 0;

  std::size_t size() const { return data.size() / static_cast<std::size_t>(dim); }
  bool empty() const { return data.empty(); }
  StateVector state(std::size_t i) const {
    return StateVector::from_span(row(i));
  }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
};

Trajectory generate_trajectory(const MapSpec& map, const StateVector& x0, std::size_t n,
                               std::size_t burn_in = kDefaultBurnIn, std::uint64_t seed = 0);

/// Convenience: start from map.default_initial_state(seed).
Trajectory generate_trajectory(const MapSpec& map, std::size_t n, std::uint64_t seed,
                               std::size_t burn_in = kDefaultBurnIn);

struct LyapunovSpectrum {
  std::vector<double> exponents;  // bits/iteration, descending
  std::size_t n_iterations = 0;
  double h_ks = 0.0;
};

/// Tangent-space iteration with Gram-Schmidt re-orthonormalization every step.
LyapunovSpectrum lyapunov_spectrum(const MapSpec& map, std::size_t n, std::uint64_t seed = 0);

}  // namespace infopart
