#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mmlab/market.hpp"

namespace mmlab {

/// Uniform quantization {n / N : n = 0..N} of the unit interval. Points are
/// addressed by integer index; floats are derived, never compared for identity.
class PriceGrid {
 public:
  explicit PriceGrid(std::size_t resolution);

  static PriceGrid for_horizon(std::uint64_t horizon);

  std::size_t resolution() const noexcept { return resolution_; }
  std::size_t size() const noexcept { return resolution_ + 1; }
  std::size_t last() const noexcept { return resolution_; }

  double point(std::size_t index) const noexcept {
    return static_cast<double>(index) / static_cast<double>(resolution_);
  }

  /// Smallest index i with x <= point(i); size() when x > 1.
  std::size_t ceil_index(double x) const noexcept;

  friend bool operator==(const PriceGrid&, const PriceGrid&) = default;

 private:
  std::size_t resolution_;
};

/// Grid of resolution ceil(sqrt(T)).
PriceGrid make_grid(std::uint64_t horizon);

/// Closed index range [lo, hi] of grid points.
struct IndexRange {
  std::size_t lo;
  std::size_t hi;

  bool contains(std::size_t i) const noexcept { return lo <= i && i <= hi; }
  std::size_t size() const noexcept { return hi - lo + 1; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

/// A quote expressed in grid indices; bid < ask.
struct GridQuote {
  std::size_t bid;
  std::size_t ask;

  Quote to_quote(const PriceGrid& grid) const { return Quote(grid.point(bid), grid.point(ask)); }
  friend bool operator==(const GridQuote&, const GridQuote&) = default;
};

enum class EstimatorMode { Eager, Lazy };

/// Empirical CDF of the clipped valuations, evaluated on the grid.
///
/// Eager mode increments every grid count on each round. Lazy mode only
/// buffers the clipped values and rebuilds all counts on demand with one
/// bucket pass plus a prefix sum, which is O(t + |grid|).
class CensoredCdfEstimator {
 public:
  CensoredCdfEstimator(PriceGrid grid, EstimatorMode mode, double clip_offset = kDefaultClipOffset);

  void absorb(const Observation& obs, const Quote& quote);
  /// Lazy mode: recompute counts from the whole buffer. Eager mode: no-op.
  void rebuild();

  EstimatorMode mode() const noexcept { return mode_; }
  const PriceGrid& grid() const noexcept { return grid_; }
  std::uint64_t rounds() const noexcept { return rounds_; }
  /// Round through which counts() is current.
  std::uint64_t counts_round() const noexcept { return counts_round_; }
  std::span<const std::uint64_t> counts() const noexcept { return counts_; }
  std::span<const double> buffered() const noexcept { return buffer_; }

  /// counts[i] / counts_round(); 0 before any data.
  double estimate(std::size_t index) const noexcept;

  /// Grid entries and buffered values touched so far.
  std::uint64_t work() const noexcept { return work_; }

 private:
  PriceGrid grid_;
  EstimatorMode mode_;
  double clip_offset_;
  std::vector<std::uint64_t> counts_;
  std::vector<double> buffer_;
  std::uint64_t rounds_ = 0;
  std::uint64_t counts_round_ = 0;
  std::uint64_t work_ = 0;
};

// Confidence widths. All use natural logarithms and return unclipped values.

/// sqrt(3 ln(3T/delta) / (4t)).
double psi(std::uint64_t t, double delta, std::uint64_t horizon);
/// sqrt(ln(3 L / delta) / t) with L = max(1, ceil(log2 T)).
double phi(std::uint64_t t, double delta, std::uint64_t horizon);
/// sqrt(ln(2T/delta) / (4t)) + gamma (k + 1) / ((1 - gamma) t).
double phibar_ar(std::uint64_t t, double delta, std::uint64_t horizon, double gamma,
                 std::size_t order);
/// sqrt(4 ln(2T/delta) / t).
double phibar_global(std::uint64_t t, double delta, std::uint64_t horizon);

enum class MeanRegime { Iid, AutoRegressive, Global };

std::string_view to_string(MeanRegime regime) noexcept;
MeanRegime parse_mean_regime(std::string_view name);

/// Picks psi for the CDF and the regime's width for the mean.
struct WidthSchedule {
  MeanRegime regime = MeanRegime::Iid;
  double delta = 0.05;
  std::uint64_t horizon = 1;
  double gamma = 0.0;
  std::size_t order = 1;

  void validate() const;
  double cdf_width(std::uint64_t t) const;   // clipped to 1
  double mean_width(std::uint64_t t) const;  // clipped to 1
  double raw_mean_width(std::uint64_t t) const;
};

double phibar(std::uint64_t t, const WidthSchedule& schedule);

/// Monotone optimistic/pessimistic envelopes for F on the grid and for mu.
struct ConfidenceEnvelopes {
  std::vector<double> f_up;
  std::vector<double> f_low;
  double mu_up = 1.0;
  double mu_low = 0.0;

  explicit ConfidenceEnvelopes(std::size_t grid_size)
      : f_up(grid_size, 1.0), f_low(grid_size, 0.0) {}

  double s_up(std::size_t i) const noexcept { return 1.0 - f_low[i]; }
  double s_low(std::size_t i) const noexcept { return 1.0 - f_up[i]; }
};

/// Intersects the envelopes with [F_hat -+ psi] on the active range and with
/// [mu_hat -+ width] for the mean. Returns the number of grid points touched.
/// `width_scale` exists only for fault injection; 1 is the real algorithm.
std::size_t tighten(ConfidenceEnvelopes& env, const CensoredCdfEstimator& est, double mu_hat,
                    std::uint64_t t, const WidthSchedule& schedule, IndexRange active,
                    double width_scale = 1.0);

/// True when t is a power of two (1, 2, 4, ...).
constexpr bool is_power_of_two(std::uint64_t t) noexcept { return t != 0 && (t & (t - 1)) == 0; }

}  // namespace mmlab
