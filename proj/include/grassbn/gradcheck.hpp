#pragma once

// Central-difference oracles for Euclidean gradients and for Riemannian
// gradients on G(1,n). These are independent of the backward passes they
// check: they only ever evaluate the objective.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "grassbn/errors.hpp"
#include "grassbn/manifold.hpp"
#include "grassbn/numerics.hpp"
#include "grassbn/random.hpp"

namespace grassbn {

/// |a - n| / max(|a|, |n|, 1e-8)
inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / scale;
}

struct FdEntry {
  std::string id;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct FdReport {
  double max_rel_error = 0.0;
  std::string worst_index;
  std::vector<FdEntry> entries;

  void add(std::string id, double analytic, double numeric) {
    const double err = relative_error(analytic, numeric);
    if (entries.empty() || err > max_rel_error) {
      max_rel_error = err;
      worst_index = id;
    }
    entries.push_back({std::move(id), analytic, numeric, err});
  }

  void merge(const FdReport& other) {
    for (const auto& e : other.entries) add(e.id, e.analytic, e.numeric);
  }

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : entries) {
      rows.push_back({{"id", e.id}, {"analytic", e.analytic}, {"numeric", e.numeric},
                      {"rel_error", e.rel_error}});
    }
    return {{"max_rel_error", max_rel_error}, {"worst_index", worst_index}, {"entries", rows}};
  }
};

using ScalarFn = std::function<double(const Vector&)>;

/// (f(x + eps·e_i) - f(x - eps·e_i)) / (2·eps) for every coordinate i.
inline Vector fd_gradient(const ScalarFn& f, const Vector& x, double eps = 1e-6) {
  if (!(eps > 0.0)) throw PreconditionError("fd_gradient: eps must be positive");
  Vector g(x.size());
  Vector probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = f(probe);
    probe[i] = x[i] - eps;
    const double down = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("fd_gradient: non-finite objective at coordinate " + std::to_string(i));
    }
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

/// Element-wise comparison of an analytic gradient with a numeric one.
inline FdReport compare_gradients(const Vector& analytic, const Vector& numeric,
                                  const std::string& label = "x") {
  if (analytic.size() != numeric.size()) throw DimensionError("compare_gradients: size mismatch");
  FdReport report;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    report.add(label + "[" + std::to_string(i) + "]", analytic[i], numeric[i]);
  }
  return report;
}

using ManifoldFn = std::function<double(const GrassmannPoint&)>;

/// Checks a Euclidean gradient against the objective restricted to G(1,n):
/// along random unit tangent directions v, the geodesic difference quotient
/// (f(exp_y(t v)) - f(exp_y(-t v))) / 2t must equal ⟨project(y, ∇f), v⟩.
inline FdReport riemannian_fd_check(const ManifoldFn& f, const Vector& euclidean_grad,
                                    const GrassmannPoint& y, int trials, Rng& rng,
                                    double t = 1e-6) {
  const TangentVector grad = project_tangent(y, euclidean_grad);
  FdReport report;
  for (int trial = 0; trial < trials; ++trial) {
    TangentVector v = project_tangent(y, gaussian_vector(rng, y.dim()));
    v = (1.0 / v.norm()) * v;
    const double up = f(exp_map(y, t * v));
    const double down = f(exp_map(y, (-t) * v));
    report.add("direction " + std::to_string(trial), tangent_inner(grad, v),
               (up - down) / (2.0 * t));
  }
  return report;
}

}  // namespace grassbn
