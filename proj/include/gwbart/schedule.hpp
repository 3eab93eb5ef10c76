#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gwbart {

enum class ScheduleKind { PolynomialDecay, GeometricDecay, Table };

/// Depth-indexed probability that a node splits.
///
/// PolynomialDecay is the classic Bayesian CART / BART choice
/// p(d) = alpha / (1 + d)^gamma. GeometricDecay is p(d) = xi * alpha^d with
/// 0 < alpha < 1/2, which gives the k log k tail on the number of leaves.
/// `xi` defaults to alpha (root splits with probability alpha); xi = 1 makes
/// the root split surely. Table holds explicit per-depth values and repeats
/// the last entry for deeper nodes.
class SplitSchedule {
 public:
  static SplitSchedule polynomial(double alpha, double gamma);
  static SplitSchedule geometric(double alpha);
  static SplitSchedule geometric(double alpha, double xi);
  static SplitSchedule table(std::vector<double> probabilities);
  /// p(d) = p for every depth (homogeneous Galton-Watson process).
  static SplitSchedule constant(double p);

  double operator()(int depth) const;

  ScheduleKind kind() const { return kind_; }
  double alpha() const { return alpha_; }
  double gamma() const { return gamma_; }
  double xi() const { return xi_; }
  const std::vector<double>& table_values() const { return table_; }

  /// True when p(d) is constant in d.
  bool homogeneous() const;
  /// True when p(d + 1) <= p(d) for all d.
  bool non_increasing() const;

  std::string describe() const;

 private:
  SplitSchedule() = default;

  ScheduleKind kind_ = ScheduleKind::Table;
  double alpha_ = 0.0;
  double gamma_ = 0.0;
  double xi_ = 1.0;
  std::vector<double> table_;
};

double split_probability(const SplitSchedule& schedule, int depth);

}  // namespace gwbart
