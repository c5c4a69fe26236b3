#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "infopart/entropy_rate.hpp"

namespace infopart {

double scaling_model(double n, double h_inf, double c, double gamma) {
  return h_inf + c * std::log(n) / std::pow(n, gamma);
}

namespace {

struct Problem {
  Eigen::VectorXd n, y, w;

  double chi2(const Eigen::Vector3d& p) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n.size(); ++i) {
      const double r = y[i] - scaling_model(n[i], p[0], p[1], p[2]);
      s += w[i] * r * r;
    }
    return s;
  }

  Eigen::MatrixXd jacobian(const Eigen::Vector3d& p) const {
    Eigen::MatrixXd j(n.size(), 3);
    for (Eigen::Index i = 0; i < n.size(); ++i) {
      const double ln = std::log(n[i]);
      const double t = ln / std::pow(n[i], p[2]);
      j(i, 0) = 1.0;
      j(i, 1) = t;
      j(i, 2) = -p[1] * t * ln;
    }
    return j;
  }

  Eigen::VectorXd residuals(const Eigen::Vector3d& p) const {
    Eigen::VectorXd r(n.size());
    for (Eigen::Index i = 0; i < n.size(); ++i) r[i] = y[i] - scaling_model(n[i], p[0], p[1], p[2]);
    return r;
  }
};

ScalingFit make_fit(const Problem& pr, const Eigen::Vector3d& p, int iterations, bool converged) {
  ScalingFit f;
  f.h_inf = p[0];
  f.c = p[1];
  f.gamma = p[2];
  f.iterations = iterations;
  f.converged = converged;
  const double chi2 = pr.chi2(p);
  f.residual_norm = std::sqrt(chi2);
  const Eigen::MatrixXd j = pr.jacobian(p);
  const Eigen::MatrixXd jtwj = j.transpose() * pr.w.asDiagonal() * j;
  const Eigen::MatrixXd cov = jtwj.completeOrthogonalDecomposition().pseudoInverse();
  const auto dof = static_cast<double>(pr.n.size() - 3);
  const double scale = dof > 0 ? chi2 / dof : 0.0;
  f.std_error_h_inf = std::sqrt(std::max(0.0, cov(0, 0) * scale));
  return f;
}

}  // namespace

ScalingFit fit_scaling_ansatz(const std::vector<ScalingPoint>& points, const FitOptions& options) {
  {
    std::vector<double> ns;
    for (const auto& p : points) ns.push_back(p.n);
    std::sort(ns.begin(), ns.end());
    require(std::unique(ns.begin(), ns.end()) - ns.begin() >= 4, "scaling fit needs at least four distinct lengths");
  }
  Problem pr;
  const auto n = static_cast<Eigen::Index>(points.size());
  pr.n.resize(n);
  pr.y.resize(n);
  pr.w.resize(n);
  double min_se = std::numeric_limits<double>::infinity();
  for (const auto& p : points) {
    require(p.n > 1.0 && std::isfinite(p.value), "scaling fit needs finite values at N > 1");
    if (p.std_error > 0.0) min_se = std::min(min_se, p.std_error);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = points[static_cast<std::size_t>(i)];
    pr.n[i] = p.n;
    pr.y[i] = p.value;
    // All-zero errors mean an unweighted fit; isolated zeros get the smallest
    // observed error so they do not dominate.
    if (!std::isfinite(min_se))
      pr.w[i] = 1.0;
    else
      pr.w[i] = 1.0 / std::pow(p.std_error > 0.0 ? p.std_error : min_se, 2);
  }

  const auto [lo_it, hi_it] = std::minmax_element(pr.y.begin(), pr.y.end());
  const double n_min = pr.n.minCoeff();
  Eigen::Vector3d p(*lo_it, 0.0, 0.5);
  p[1] = (*hi_it - *lo_it) * std::pow(n_min, p[2]) / std::log(n_min);

  double chi2 = pr.chi2(p);
  double lambda = 1e-3;
  int it = 0;
  bool converged = false;
  for (; it < options.max_iterations; ++it) {
    const Eigen::MatrixXd j = pr.jacobian(p);
    const Eigen::VectorXd r = pr.residuals(p);
    const Eigen::Matrix3d a = j.transpose() * pr.w.asDiagonal() * j;
    const Eigen::Vector3d g = j.transpose() * pr.w.asDiagonal() * r;
    bool accepted = false;
    while (lambda < 1e12) {
      Eigen::Matrix3d damped = a;
      for (int k = 0; k < 3; ++k) damped(k, k) += lambda * std::max(a(k, k), 1e-300);
      const Eigen::Vector3d step = damped.ldlt().solve(g);
      const Eigen::Vector3d trial = p + step;
      if (step.allFinite() && trial[2] > 0.0) {
        const double trial_chi2 = pr.chi2(trial);
        if (std::isfinite(trial_chi2) && trial_chi2 <= chi2) {
          const double drop = chi2 - trial_chi2;
          const double rel_step = step.norm() / (p.norm() + 1e-30);
          p = trial;
          chi2 = trial_chi2;
          lambda = std::max(lambda / 3.0, 1e-15);
          accepted = true;
          if (drop <= options.tolerance * std::max(chi2, 1e-30) || rel_step < 1e-12) converged = true;
          break;
        }
      }
      lambda *= 2.0;
    }
    if (!accepted) {
      // No downhill step at any damping: at a minimum to machine precision.
      converged = true;
      break;
    }
    if (converged) break;
  }
  auto fit = make_fit(pr, p, it + 1, converged);
  if (!converged || !std::isfinite(fit.h_inf))
    throw FitError("scaling fit did not converge after " + std::to_string(fit.iterations) + " iterations", fit);
  return fit;
}

}  // namespace infopart
