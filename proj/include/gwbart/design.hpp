#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gwbart {

/// Row-major n x p matrix of predictor values in [0,1]^p.
class Design {
 public:
  Design() = default;
  Design(std::size_t n, std::size_t p);
  Design(std::size_t n, std::size_t p, std::vector<double> values);

  static Design from_rows(const std::vector<std::vector<double>>& rows);
  /// One-dimensional design from a list of points.
  static Design column(std::vector<double> x);

  std::size_t rows() const { return n_; }
  std::size_t cols() const { return p_; }
  bool empty() const { return n_ == 0; }

  double operator()(std::size_t i, std::size_t j) const { return values_[i * p_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values_[i * p_ + j]; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * p_, p_}; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::size_t n_ = 0;
  std::size_t p_ = 0;
  std::vector<double> values_;
};

/// Rank-1 lattice on [0,1]^p: x_ij = (((i * h_j) mod n) + 1/2) / n with
/// multipliers h_j coprime to n. Coordinate 0 is the midpoint grid, and
/// every coordinate takes n distinct values.
Design lattice_design(std::size_t n, std::size_t p);

/// iid uniform design (outside the regular-design assumption of the theory).
class Rng;
Design uniform_design(std::size_t n, std::size_t p, Rng& rng);

}  // namespace gwbart
