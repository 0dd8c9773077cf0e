#pragma once

// Independent reference computations used by the test suites and the
// `selftest` command. Nothing here calls into the solver, frustum or
// analysis code.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>

namespace mirrorcast::oracle {

/// Reflection coordinate by Fermat's principle: minimizes the path length
/// |V - S| + |S - P| over S on the glass line. The path length is convex in
/// s, so its minimizer is the root of the derivative
///   d/ds = (s - v) / |V - S| + (s - p) / |P - S|,
/// found by bisection in extended precision. Searching on the derivative
/// rather than on path-length values keeps the result accurate to ~1e-12 m
/// even when the objective is extremely flat (tiny depths, long baselines).
inline double fermat_reflection(double p, double pz, double v, double vz) {
  using ld = long double;
  auto slope = [&](ld s) {
    const ld dv = s - v, dp = s - p;
    return dv / std::sqrt(dv * dv + ld(vz) * vz) + dp / std::sqrt(dp * dp + ld(pz) * pz);
  };
  ld lo = std::min(p, v), hi = std::max(p, v);
  if (lo == hi) return static_cast<double>(lo);
  for (int i = 0; i < 200 && hi - lo > 1e-15L; ++i) {
    const ld mid = 0.5L * (lo + hi);
    (slope(mid) > 0 ? hi : lo) = mid;
  }
  return static_cast<double>(0.5L * (lo + hi));
}

/// Golden-section minimization of the path length itself; only used where
/// the objective is well curved (moderate depths, short baselines).
inline double golden_path_length(double p, double pz, double v, double vz, double tol = 1e-12) {
  auto length = [&](double s) { return std::hypot(v - s, vz) + std::hypot(p - s, pz); };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::min(p, v) - 1.0, b = std::max(p, v) + 1.0;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  while (b - a > tol) {
    if (length(c) < length(d)) {
      b = d;
    } else {
      a = c;
    }
    c = b - inv_phi * (b - a);
    d = a + inv_phi * (b - a);
  }
  return 0.5 * (a + b);
}

/// Rotation matrix about a unit axis by Rodrigues' formula.
inline Eigen::Matrix3d rodrigues(const Eigen::Vector3d& axis, double angle) {
  Eigen::Matrix3d k;
  k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
  return Eigen::Matrix3d::Identity() + std::sin(angle) * k + (1.0 - std::cos(angle)) * k * k;
}

/// Mirror image of q across the plane through `o` with unit normal `n`.
inline Eigen::Vector3d reflect_across_plane(const Eigen::Vector3d& q, const Eigen::Vector3d& o,
                                            const Eigen::Vector3d& n) {
  return q - 2.0 * n.dot(q - o) * n;
}

/// Where the ray from `eye` through `q` meets the plane z = 0 of a frame
/// given by origin and orthonormal axes; returns mirror-local (x, y).
inline Eigen::Vector2d glass_hit(const Eigen::Vector3d& eye_local, const Eigen::Vector3d& q_local) {
  const double t = eye_local.z() / (eye_local.z() - q_local.z());
  const Eigen::Vector3d hit = eye_local + t * (q_local - eye_local);
  return hit.head<2>();
}

/// Solid angle of the rectangle [x0,x1] x [y0,y1] in the plane z = 0 seen
/// from (0, 0, d), by midpoint quadrature of d / r^3.
inline double solid_angle_quadrature(double x0, double x1, double y0, double y1, double d,
                                     int n = 2000) {
  const double hx = (x1 - x0) / n, hy = (y1 - y0) / n;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = x0 + (i + 0.5) * hx;
    for (int j = 0; j < n; ++j) {
      const double y = y0 + (j + 0.5) * hy;
      const double r2 = x * x + y * y + d * d;
      sum += d / (r2 * std::sqrt(r2));
    }
  }
  return sum * hx * hy;
}

/// Ellipse area.
inline double ellipse_area(double a, double b) { return std::numbers::pi * a * b; }

/// Deterministic uniform helper.
struct Rng {
  std::mt19937_64 engine;
  explicit Rng(std::uint64_t seed) : engine(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine); }
  Eigen::Vector3d unit_vector() {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Vector3d v(n(engine), n(engine), n(engine));
    return v.normalized();
  }
  Eigen::Quaterniond rotation() {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Quaterniond q(n(engine), n(engine), n(engine), n(engine));
    return q.normalized();
  }
};

}  // namespace mirrorcast::oracle
