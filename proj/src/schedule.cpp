#include "gwbart/schedule.hpp"

#include <cmath>
#include <sstream>

#include "gwbart/error.hpp"

namespace gwbart {

SplitSchedule SplitSchedule::polynomial(double alpha, double gamma) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ParameterError("polynomial schedule needs 0 < alpha < 1");
  }
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw ParameterError("polynomial schedule needs gamma >= 0");
  }
  SplitSchedule s;
  s.kind_ = ScheduleKind::PolynomialDecay;
  s.alpha_ = alpha;
  s.gamma_ = gamma;
  return s;
}

SplitSchedule SplitSchedule::geometric(double alpha) { return geometric(alpha, alpha); }

SplitSchedule SplitSchedule::geometric(double alpha, double xi) {
  if (!(alpha > 0.0 && alpha < 0.5)) {
    throw ParameterError("geometric schedule needs 0 < alpha < 1/2");
  }
  if (!(xi > 0.0 && xi <= 1.0)) {
    throw ParameterError("geometric schedule needs 0 < xi <= 1");
  }
  SplitSchedule s;
  s.kind_ = ScheduleKind::GeometricDecay;
  s.alpha_ = alpha;
  s.xi_ = xi;
  return s;
}

SplitSchedule SplitSchedule::table(std::vector<double> probabilities) {
  if (probabilities.empty()) {
    throw ParameterError("table schedule needs at least one entry");
  }
  for (double p : probabilities) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ParameterError("table schedule entries must lie in [0, 1]");
    }
  }
  SplitSchedule s;
  s.kind_ = ScheduleKind::Table;
  s.table_ = std::move(probabilities);
  return s;
}

SplitSchedule SplitSchedule::constant(double p) { return table({p}); }

double SplitSchedule::operator()(int depth) const {
  if (depth < 0) {
    throw ParameterError("depth must be non-negative");
  }
  switch (kind_) {
    case ScheduleKind::PolynomialDecay:
      return alpha_ / std::pow(1.0 + depth, gamma_);
    case ScheduleKind::GeometricDecay:
      return xi_ * std::pow(alpha_, depth);
    case ScheduleKind::Table:
      break;
  }
  auto idx = static_cast<std::size_t>(depth);
  return idx < table_.size() ? table_[idx] : table_.back();
}

bool SplitSchedule::homogeneous() const {
  switch (kind_) {
    case ScheduleKind::PolynomialDecay:
      return gamma_ == 0.0;
    case ScheduleKind::GeometricDecay:
      return false;
    case ScheduleKind::Table:
      break;
  }
  for (double p : table_) {
    if (p != table_.front()) return false;
  }
  return true;
}

bool SplitSchedule::non_increasing() const {
  if (kind_ != ScheduleKind::Table) return true;
  for (std::size_t i = 1; i < table_.size(); ++i) {
    if (table_[i] > table_[i - 1]) return false;
  }
  return true;
}

std::string SplitSchedule::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case ScheduleKind::PolynomialDecay:
      os << "poly(alpha=" << alpha_ << ",gamma=" << gamma_ << ")";
      break;
    case ScheduleKind::GeometricDecay:
      os << "geometric(alpha=" << alpha_ << ",xi=" << xi_ << ")";
      break;
    case ScheduleKind::Table:
      os << "table(";
      for (std::size_t i = 0; i < table_.size(); ++i) os << (i ? "," : "") << table_[i];
      os << ")";
      break;
  }
  return os.str();
}

double split_probability(const SplitSchedule& schedule, int depth) { return schedule(depth); }

}  // namespace gwbart
