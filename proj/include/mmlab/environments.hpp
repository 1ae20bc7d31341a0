#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mmlab/rng.hpp"

namespace mmlab {

/// A nondecreasing path of (x, F) vertices from (0, 0) to (1, 1). Consecutive
/// vertices with equal x encode a jump, so any CDF built from uniform pieces,
/// linear interpolation and atoms has an exact representation.
class MonotonePolyline {
 public:
  struct Vertex {
    double x;
    double f;
  };

  explicit MonotonePolyline(std::vector<Vertex> vertices);

  /// Right-continuous F(x).
  double operator()(double x) const;
  /// F(x-).
  double left_limit(double x) const;
  /// inf{x : F(x) >= u} for u in (0, 1].
  double quantile(double u) const;
  double mean() const;

  std::span<const Vertex> vertices() const noexcept { return vertices_; }

 private:
  std::vector<Vertex> vertices_;
};

struct UniformInterval {
  double lo = 0.0;
  double hi = 1.0;
};

struct PiecewiseLinearCdf {
  std::vector<std::pair<double, double>> knots;  // (x, F(x)), sorted by x
};

/// With probability `weight` draw from the continuous part, otherwise from the atoms.
struct AtomMixture {
  std::vector<std::pair<double, double>> atoms;  // (x, p), p sums to 1
  std::optional<PiecewiseLinearCdf> continuous_part;
  double weight = 0.0;
};

using ValuationSpec = std::variant<UniformInterval, PiecewiseLinearCdf, AtomMixture>;

/// Law of the trader valuations (also reused for i.i.d. prices and AR innovations).
class ValuationModel {
 public:
  ValuationModel(ValuationSpec spec);  // NOLINT(google-explicit-constructor)

  const ValuationSpec& spec() const noexcept { return spec_; }
  const MonotonePolyline& polyline() const noexcept { return cdf_; }

  double cdf(double x) const;
  double survival(double x) const { return 1.0 - cdf(x); }
  double mean() const { return cdf_.mean(); }
  double sample(Rng& rng) const;

 private:
  ValuationSpec spec_;
  MonotonePolyline cdf_;
};

double sample_valuation(const ValuationModel& model, Rng& rng);
double cdf(const ValuationModel& model, double x);

// Price processes -----------------------------------------------------------

struct IidPrices {
  ValuationModel law;
};

/// M_{t+1} = sum_tau gamma_tau M_{t-tau} + (1 - gamma) eta_{t+1}.
struct AutoRegressive {
  std::vector<double> coefficients;  // gamma_0 .. gamma_{k-1}
  ValuationModel innovation;
  double mu = 0.5;
  std::vector<double> initial;  // initial[j] = M_{-j}; empty means all equal to mu
};

/// M_1 ~ Unif(0, 1), M_{t+1} = 1 - M_t.
struct Alternating {};

/// Oblivious sequence read from a file, one price per line.
struct FileSequence {
  std::filesystem::path path;
  std::vector<double> prices;
};

/// Symmetric +-step walk reflected at 0 and 1; violates global mean reversion.
struct ReflectedWalk {
  double step = 0.05;
  double start = 0.5;
};

using PriceSpec = std::variant<IidPrices, AutoRegressive, Alternating, FileSequence, ReflectedWalk>;

class PriceProcess {
 public:
  PriceProcess(PriceSpec spec);  // NOLINT(google-explicit-constructor)

  const PriceSpec& spec() const noexcept { return spec_; }
  std::string kind() const;

  /// Long-run mean when the process has one.
  std::optional<double> mean() const;

  /// E[M_{t+1} | F_t] given M_1..M_t, when it is available in closed form.
  std::optional<double> conditional_mean(std::span<const double> history) const;

  /// Emits M_{t+1} given history = M_1..M_t.
  double next(std::span<const double> history, Rng& rng) const;

  /// Sum of the AR coefficients, 0 for other variants.
  double gamma() const noexcept;
  std::size_t order() const noexcept;

 private:
  PriceSpec spec_;
};

double next_price(const PriceProcess& process, std::span<const double> history, Rng& rng);

/// Parses one decimal price per line. Blank lines are skipped.
FileSequence load_price_file(const std::filesystem::path& path);
void write_price_file(const std::filesystem::path& path, std::span<const double> prices);

/// Draws a full path M_1..M_T.
std::vector<double> sample_path(const PriceProcess& process, std::size_t horizon, Rng& rng);

struct MeanReversionReport {
  bool checkable = false;
  std::string reason;
  std::size_t paths = 0;
  std::size_t horizon = 0;
  double max_estimate = 0.0;     // max_t of the Monte Carlo mean of E[X_{t+1}|F_t] S_t
  double radius_at_max = 0.0;
  std::size_t argmax_round = 0;
  std::size_t flagged_rounds = 0;  // rounds where estimate > radius
  bool violated = false;
};

/// Monte Carlo check of E[X_{t+1} | F_t] * S_t <= 0 with X_t = M_t - mu.
MeanReversionReport verify_global_mean_reversion(const PriceProcess& process, double mu,
                                                 std::size_t paths, std::size_t horizon,
                                                 std::uint64_t seed);

}  // namespace mmlab
