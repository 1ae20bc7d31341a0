#include "mmlab/estimation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mmlab {

PriceGrid::PriceGrid(std::size_t resolution) : resolution_(resolution) {
  if (resolution == 0) throw std::invalid_argument("grid resolution must be positive");
}

PriceGrid PriceGrid::for_horizon(std::uint64_t horizon) { return make_grid(horizon); }

std::size_t PriceGrid::ceil_index(double x) const noexcept {
  if (x > 1.0) return size();
  if (x <= 0.0) return 0;
  auto k = static_cast<std::size_t>(std::ceil(x * static_cast<double>(resolution_)));
  k = std::min(k, resolution_);
  while (k > 0 && x <= point(k - 1)) --k;
  while (k <= resolution_ && x > point(k)) ++k;
  return k;
}

PriceGrid make_grid(std::uint64_t horizon) {
  if (horizon == 0) throw std::invalid_argument("horizon must be at least 1");
  auto n = static_cast<std::uint64_t>(std::sqrt(static_cast<double>(horizon)));
  while (n * n > horizon) --n;
  while (n * n < horizon) ++n;
  return PriceGrid(static_cast<std::size_t>(n));
}

// CensoredCdfEstimator -----------------------------------------------------------

CensoredCdfEstimator::CensoredCdfEstimator(PriceGrid grid, EstimatorMode mode, double clip_offset)
    : grid_(grid), mode_(mode), clip_offset_(clip_offset), counts_(grid.size(), 0) {
  if (!(clip_offset > 0.0)) throw std::invalid_argument("clip offset must be positive");
}

void CensoredCdfEstimator::absorb(const Observation& obs, const Quote& quote) {
  const double clipped = clipped_valuation(obs, quote, clip_offset_);
  ++rounds_;
  if (mode_ == EstimatorMode::Lazy) {
    buffer_.push_back(clipped);
    ++work_;
    return;
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    counts_[i] += clipped <= grid_.point(i) ? 1 : 0;
  }
  work_ += counts_.size();
  counts_round_ = rounds_;
}

void CensoredCdfEstimator::rebuild() {
  if (mode_ == EstimatorMode::Eager || buffer_.empty()) return;
  // Bucket each value at the first grid point it does not exceed, then prefix-sum.
  std::vector<std::uint64_t> bucket(grid_.size() + 1, 0);
  for (double c : buffer_) ++bucket[grid_.ceil_index(c)];
  std::uint64_t running = 0;
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    running += bucket[i];
    counts_[i] = running;
  }
  work_ += buffer_.size() + counts_.size();
  counts_round_ = rounds_;
}

double CensoredCdfEstimator::estimate(std::size_t index) const noexcept {
  if (counts_round_ == 0) return 0.0;
  return static_cast<double>(counts_[index]) / static_cast<double>(counts_round_);
}

// Widths ---------------------------------------------------------------------------

namespace {

void check_width_args(std::uint64_t t, double delta, std::uint64_t horizon) {
  if (t == 0) throw std::invalid_argument("width needs t >= 1");
  if (horizon == 0) throw std::invalid_argument("width needs T >= 1");
  if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("delta must lie in (0, 1]");
}

double ceil_log2(std::uint64_t horizon) {
  return horizon <= 1 ? 0.0 : static_cast<double>(std::bit_width(horizon - 1));
}

}  // namespace

double psi(std::uint64_t t, double delta, std::uint64_t horizon) {
  check_width_args(t, delta, horizon);
  const double T = static_cast<double>(horizon);
  return std::sqrt(3.0 * std::log(3.0 * T / delta) / (4.0 * static_cast<double>(t)));
}

double phi(std::uint64_t t, double delta, std::uint64_t horizon) {
  check_width_args(t, delta, horizon);
  const double blocks = std::max(1.0, ceil_log2(horizon));
  return std::sqrt(std::log(3.0 * blocks / delta) / static_cast<double>(t));
}

double phibar_ar(std::uint64_t t, double delta, std::uint64_t horizon, double gamma,
                 std::size_t order) {
  check_width_args(t, delta, horizon);
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  const double T = static_cast<double>(horizon);
  const double td = static_cast<double>(t);
  return std::sqrt(std::log(2.0 * T / delta) / (4.0 * td)) +
         gamma * static_cast<double>(order + 1) / ((1.0 - gamma) * td);
}

double phibar_global(std::uint64_t t, double delta, std::uint64_t horizon) {
  check_width_args(t, delta, horizon);
  const double T = static_cast<double>(horizon);
  return std::sqrt(4.0 * std::log(2.0 * T / delta) / static_cast<double>(t));
}

std::string_view to_string(MeanRegime regime) noexcept {
  switch (regime) {
    case MeanRegime::Iid:
      return "iid";
    case MeanRegime::AutoRegressive:
      return "ar";
    case MeanRegime::Global:
      return "global";
  }
  return "unknown";
}

MeanRegime parse_mean_regime(std::string_view name) {
  if (name == "iid") return MeanRegime::Iid;
  if (name == "ar") return MeanRegime::AutoRegressive;
  if (name == "global") return MeanRegime::Global;
  throw std::invalid_argument("unknown mean regime '" + std::string(name) +
                              "' (expected iid, ar or global)");
}

void WidthSchedule::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("delta must lie in (0, 1), got " + std::to_string(delta));
  }
  if (horizon == 0) throw std::invalid_argument("horizon must be at least 1");
  if (regime == MeanRegime::AutoRegressive) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
    if (order == 0) throw std::invalid_argument("AR order must be at least 1");
  }
}

double WidthSchedule::cdf_width(std::uint64_t t) const {
  return std::min(1.0, psi(t, delta, horizon));
}

double WidthSchedule::raw_mean_width(std::uint64_t t) const { return phibar(t, *this); }

double WidthSchedule::mean_width(std::uint64_t t) const { return std::min(1.0, raw_mean_width(t)); }

double phibar(std::uint64_t t, const WidthSchedule& schedule) {
  switch (schedule.regime) {
    case MeanRegime::Iid:
      return phi(t, schedule.delta, schedule.horizon);
    case MeanRegime::AutoRegressive:
      return phibar_ar(t, schedule.delta, schedule.horizon, schedule.gamma, schedule.order);
    case MeanRegime::Global:
      return phibar_global(t, schedule.delta, schedule.horizon);
  }
  throw std::logic_error("unhandled mean regime");
}

std::size_t tighten(ConfidenceEnvelopes& env, const CensoredCdfEstimator& est, double mu_hat,
                    std::uint64_t t, const WidthSchedule& schedule, IndexRange active,
                    double width_scale) {
  if (est.counts_round() != t) {
    throw std::logic_error("estimator is at round " + std::to_string(est.counts_round()) +
                           ", envelopes asked for round " + std::to_string(t));
  }
  const double wf = schedule.cdf_width(t) * width_scale;
  for (std::size_t i = active.lo; i <= active.hi; ++i) {
    const double fhat = est.estimate(i);
    env.f_up[i] = std::min(env.f_up[i], std::clamp(fhat + wf, 0.0, 1.0));
    env.f_low[i] = std::max(env.f_low[i], std::clamp(fhat - wf, 0.0, 1.0));
  }
  const double wm = schedule.mean_width(t) * width_scale;
  env.mu_up = std::min(env.mu_up, std::clamp(mu_hat + wm, 0.0, 1.0));
  env.mu_low = std::max(env.mu_low, std::clamp(mu_hat - wm, 0.0, 1.0));
  return active.size();
}

}  // namespace mmlab
