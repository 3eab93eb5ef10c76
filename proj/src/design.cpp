#include "gwbart/design.hpp"

#include <numeric>

#include "gwbart/error.hpp"
#include "gwbart/rng.hpp"

namespace gwbart {

Design::Design(std::size_t n, std::size_t p) : n_(n), p_(p), values_(n * p, 0.0) {}

Design::Design(std::size_t n, std::size_t p, std::vector<double> values)
    : n_(n), p_(p), values_(std::move(values)) {
  if (values_.size() != n * p) {
    throw ParameterError("design values do not match n x p");
  }
}

Design Design::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  const std::size_t p = rows.front().size();
  Design d(rows.size(), p);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != p) throw ParameterError("ragged design rows");
    for (std::size_t j = 0; j < p; ++j) d(i, j) = rows[i][j];
  }
  return d;
}

Design Design::column(std::vector<double> x) {
  const std::size_t n = x.size();
  return Design(n, 1, std::move(x));
}

Design lattice_design(std::size_t n, std::size_t p) {
  if (n == 0 || p == 0) throw ParameterError("lattice design needs n, p >= 1");
  // Multipliers: successive integers near n * (golden ratio conjugate)^j that
  // are coprime to n, so each column is a permutation of the midpoint grid.
  std::vector<std::size_t> mult(p, 1);
  double g = 1.0;
  for (std::size_t j = 1; j < p; ++j) {
    g *= 0.6180339887498949;
    auto h = static_cast<std::size_t>(g * static_cast<double>(n)) % n;
    if (h == 0) h = 1;
    while (std::gcd(h, n) != 1) h = (h + 1) % n == 0 ? 1 : h + 1;
    mult[j] = h;
  }
  Design d(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      d(i, j) = (static_cast<double>((i * mult[j]) % n) + 0.5) / static_cast<double>(n);
    }
  }
  return d;
}

Design uniform_design(std::size_t n, std::size_t p, Rng& rng) {
  Design d(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) d(i, j) = rng.uniform();
  }
  return d;
}

}  // namespace gwbart
