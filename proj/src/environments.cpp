#include "mmlab/environments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "mmlab/market.hpp"

namespace mmlab {

namespace {

constexpr double kUnitTolerance = 1e-12;

double clamp_unit(double x, std::string_view what) {
  if (x < -kUnitTolerance || x > 1.0 + kUnitTolerance || std::isnan(x)) {
    throw std::logic_error(std::string(what) + " left [0, 1]: " + std::to_string(x));
  }
  return std::clamp(x, 0.0, 1.0);
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::vector<MonotonePolyline::Vertex> knots_to_vertices(const PiecewiseLinearCdf& spec) {
  if (spec.knots.empty()) throw std::invalid_argument("piecewise-linear CDF needs knots");
  std::vector<MonotonePolyline::Vertex> v;
  v.push_back({0.0, 0.0});
  v.push_back({spec.knots.front().first, 0.0});
  double prev_x = 0.0;
  double prev_f = 0.0;
  for (auto [x, f] : spec.knots) {
    require_unit_interval(x, "knot x");
    require_unit_interval(f, "knot F");
    if (x < prev_x || f < prev_f) {
      throw std::invalid_argument("piecewise-linear CDF knots must be nondecreasing");
    }
    v.push_back({x, f});
    prev_x = x;
    prev_f = f;
  }
  if (std::abs(prev_f - 1.0) > 1e-12) {
    throw std::invalid_argument("piecewise-linear CDF must reach F = 1");
  }
  v.back().f = 1.0;
  v.push_back({1.0, 1.0});
  return v;
}

MonotonePolyline build_polyline(const ValuationSpec& spec) {
  return std::visit(
      Overloaded{
          [](const UniformInterval& u) {
            require_unit_interval(u.lo, "uniform lo");
            require_unit_interval(u.hi, "uniform hi");
            if (u.lo > u.hi) throw std::invalid_argument("uniform interval needs lo <= hi");
            return MonotonePolyline({{0.0, 0.0}, {u.lo, 0.0}, {u.hi, 1.0}, {1.0, 1.0}});
          },
          [](const PiecewiseLinearCdf& p) { return MonotonePolyline(knots_to_vertices(p)); },
          [](const AtomMixture& m) {
            if (!(m.weight >= 0.0 && m.weight <= 1.0)) {
              throw std::invalid_argument("atom mixture weight must lie in [0, 1]");
            }
            if (m.weight > 0.0 && !m.continuous_part) {
              throw std::invalid_argument("atom mixture with weight > 0 needs a continuous part");
            }
            double total = 0.0;
            for (auto [x, p] : m.atoms) {
              require_unit_interval(x, "atom location");
              if (!(p > 0.0)) throw std::invalid_argument("atom probabilities must be positive");
              total += p;
            }
            if (m.weight < 1.0 && std::abs(total - 1.0) > 1e-9) {
              throw std::invalid_argument("atom probabilities must sum to 1");
            }
            std::optional<MonotonePolyline> cont;
            if (m.continuous_part) cont.emplace(knots_to_vertices(*m.continuous_part));

            std::set<double> breaks{0.0, 1.0};
            for (auto [x, p] : m.atoms) breaks.insert(x);
            if (cont) {
              for (const auto& v : cont->vertices()) breaks.insert(v.x);
            }
            auto atom_cdf = [&](double x, bool strict) {
              double s = 0.0;
              for (auto [ax, p] : m.atoms) {
                if (strict ? ax < x : ax <= x) s += p / total;
              }
              return s;
            };
            const double w = m.weight;
            std::vector<MonotonePolyline::Vertex> v;
            for (double b : breaks) {
              const double cl = cont ? cont->left_limit(b) : 0.0;
              const double cr = cont ? (*cont)(b) : 0.0;
              const double al = m.atoms.empty() ? 0.0 : atom_cdf(b, true);
              const double ar = m.atoms.empty() ? 0.0 : atom_cdf(b, false);
              double left = w * cl + (1.0 - w) * al;
              double right = w * cr + (1.0 - w) * ar;
              if (!v.empty()) left = std::max(left, v.back().f);
              right = std::max(right, left);
              v.push_back({b, std::min(left, 1.0)});
              v.push_back({b, std::min(right, 1.0)});
            }
            v.back().f = 1.0;
            return MonotonePolyline(std::move(v));
          },
      },
      spec);
}

double reflect_unit(double x) {
  if (x < 0.0) return -x;
  if (x > 1.0) return 2.0 - x;
  return x;
}

}  // namespace

// MonotonePolyline ------------------------------------------------------------

MonotonePolyline::MonotonePolyline(std::vector<Vertex> vertices) : vertices_(std::move(vertices)) {
  if (vertices_.size() < 2) throw std::invalid_argument("polyline needs at least two vertices");
  for (std::size_t i = 0; i < vertices_.size(); ++i) {
    const auto& v = vertices_[i];
    require_unit_interval(v.x, "polyline x");
    require_unit_interval(v.f, "polyline F");
    if (i > 0 && (v.x < vertices_[i - 1].x || v.f < vertices_[i - 1].f)) {
      throw std::invalid_argument("polyline must be nondecreasing in x and F");
    }
  }
  if (vertices_.front().f != 0.0 || vertices_.back().f != 1.0) {
    throw std::invalid_argument("polyline must run from F = 0 to F = 1");
  }
}

double MonotonePolyline::operator()(double x) const {
  auto it = std::upper_bound(vertices_.begin(), vertices_.end(), x,
                             [](double value, const Vertex& v) { return value < v.x; });
  if (it == vertices_.begin()) return 0.0;
  const auto idx = static_cast<std::size_t>(it - vertices_.begin()) - 1;
  if (idx + 1 == vertices_.size()) return vertices_[idx].f;
  const auto& a = vertices_[idx];
  const auto& b = vertices_[idx + 1];
  return a.f + (x - a.x) / (b.x - a.x) * (b.f - a.f);
}

double MonotonePolyline::left_limit(double x) const {
  auto it = std::lower_bound(vertices_.begin(), vertices_.end(), x,
                             [](const Vertex& v, double value) { return v.x < value; });
  if (it == vertices_.end()) return 1.0;
  if (it->x == x) return it->f;
  if (it == vertices_.begin()) return 0.0;
  const auto& a = *(it - 1);
  const auto& b = *it;
  return a.f + (x - a.x) / (b.x - a.x) * (b.f - a.f);
}

double MonotonePolyline::quantile(double u) const {
  auto it = std::lower_bound(vertices_.begin(), vertices_.end(), u,
                             [](const Vertex& v, double value) { return v.f < value; });
  if (it == vertices_.begin()) return it->x;
  if (it == vertices_.end()) return vertices_.back().x;
  const auto& a = *(it - 1);
  const auto& b = *it;
  if (a.x == b.x) return b.x;
  return a.x + (u - a.f) / (b.f - a.f) * (b.x - a.x);
}

double MonotonePolyline::mean() const {
  double m = 0.0;
  for (std::size_t i = 1; i < vertices_.size(); ++i) {
    const auto& a = vertices_[i - 1];
    const auto& b = vertices_[i];
    m += (b.f - a.f) * 0.5 * (a.x + b.x);
  }
  return m;
}

// ValuationModel ----------------------------------------------------------------

ValuationModel::ValuationModel(ValuationSpec spec)
    : spec_(std::move(spec)), cdf_(build_polyline(spec_)) {}

double ValuationModel::cdf(double x) const { return cdf_(x); }

double ValuationModel::sample(Rng& rng) const {
  return clamp_unit(cdf_.quantile(rng.uniform()), "valuation sample");
}

double sample_valuation(const ValuationModel& model, Rng& rng) { return model.sample(rng); }

double cdf(const ValuationModel& model, double x) {
  require_unit_interval(x, "x");
  return model.cdf(x);
}

// PriceProcess ----------------------------------------------------------------

PriceProcess::PriceProcess(PriceSpec spec) : spec_(std::move(spec)) {
  if (auto* ar = std::get_if<AutoRegressive>(&spec_)) {
    if (ar->coefficients.empty()) throw std::invalid_argument("AR process needs coefficients");
    double g = 0.0;
    for (double c : ar->coefficients) {
      if (!(c >= 0.0)) throw std::invalid_argument("AR coefficients must be nonnegative");
      g += c;
    }
    if (!(g < 1.0)) throw std::invalid_argument("AR coefficients must sum to less than 1");
    require_unit_interval(ar->mu, "AR mean");
    if (std::abs(ar->innovation.mean() - ar->mu) > 1e-6) {
      throw std::invalid_argument("AR innovation mean " + std::to_string(ar->innovation.mean()) +
                                  " does not match mu " + std::to_string(ar->mu));
    }
    for (double m : ar->initial) require_unit_interval(m, "AR initial condition");
    if (ar->initial.size() > ar->coefficients.size()) {
      throw std::invalid_argument("AR process has more initial conditions than its order");
    }
    ar->initial.resize(ar->coefficients.size(), ar->mu);
  } else if (auto* fs = std::get_if<FileSequence>(&spec_)) {
    if (fs->prices.empty() && !fs->path.empty()) *fs = load_price_file(fs->path);
    for (double p : fs->prices) require_unit_interval(p, "sequence price");
  } else if (auto* rw = std::get_if<ReflectedWalk>(&spec_)) {
    if (!(rw->step > 0.0 && rw->step <= 1.0)) {
      throw std::invalid_argument("reflected walk step must lie in (0, 1]");
    }
    require_unit_interval(rw->start, "reflected walk start");
  }
}

std::string PriceProcess::kind() const {
  return std::visit(Overloaded{
                        [](const IidPrices&) { return std::string("iid"); },
                        [](const AutoRegressive&) { return std::string("ar"); },
                        [](const Alternating&) { return std::string("alternating"); },
                        [](const FileSequence&) { return std::string("file"); },
                        [](const ReflectedWalk&) { return std::string("reflected_walk"); },
                    },
                    spec_);
}

std::optional<double> PriceProcess::mean() const {
  return std::visit(Overloaded{
                        [](const IidPrices& p) -> std::optional<double> { return p.law.mean(); },
                        [](const AutoRegressive& p) -> std::optional<double> { return p.mu; },
                        [](const Alternating&) -> std::optional<double> { return 0.5; },
                        [](const FileSequence&) -> std::optional<double> { return std::nullopt; },
                        [](const ReflectedWalk&) -> std::optional<double> { return 0.5; },
                    },
                    spec_);
}

double PriceProcess::gamma() const noexcept {
  if (const auto* ar = std::get_if<AutoRegressive>(&spec_)) {
    return std::accumulate(ar->coefficients.begin(), ar->coefficients.end(), 0.0);
  }
  return 0.0;
}

std::size_t PriceProcess::order() const noexcept {
  if (const auto* ar = std::get_if<AutoRegressive>(&spec_)) return ar->coefficients.size();
  return 1;
}

namespace {

double ar_memory_term(const AutoRegressive& ar, std::span<const double> history) {
  const auto t = static_cast<std::ptrdiff_t>(history.size());
  double acc = 0.0;
  for (std::size_t tau = 0; tau < ar.coefficients.size(); ++tau) {
    const std::ptrdiff_t s = t - static_cast<std::ptrdiff_t>(tau);
    const double m = s >= 1 ? history[static_cast<std::size_t>(s - 1)]
                            : ar.initial[static_cast<std::size_t>(-s)];
    acc += ar.coefficients[tau] * m;
  }
  return acc;
}

double ar_gamma(const AutoRegressive& ar) {
  return std::accumulate(ar.coefficients.begin(), ar.coefficients.end(), 0.0);
}

}  // namespace

std::optional<double> PriceProcess::conditional_mean(std::span<const double> history) const {
  return std::visit(
      Overloaded{
          [](const IidPrices& p) -> std::optional<double> { return p.law.mean(); },
          [&](const AutoRegressive& p) -> std::optional<double> {
            return ar_memory_term(p, history) + (1.0 - ar_gamma(p)) * p.mu;
          },
          [&](const Alternating&) -> std::optional<double> {
            return history.empty() ? 0.5 : 1.0 - history.back();
          },
          [](const FileSequence&) -> std::optional<double> { return std::nullopt; },
          [&](const ReflectedWalk& w) -> std::optional<double> {
            const double prev = history.empty() ? w.start : history.back();
            return 0.5 * (reflect_unit(prev + w.step) + reflect_unit(prev - w.step));
          },
      },
      spec_);
}

double PriceProcess::next(std::span<const double> history, Rng& rng) const {
  const double value = std::visit(
      Overloaded{
          [&](const IidPrices& p) { return p.law.sample(rng); },
          [&](const AutoRegressive& p) {
            const double eta = p.innovation.sample(rng);
            return ar_memory_term(p, history) + (1.0 - ar_gamma(p)) * eta;
          },
          [&](const Alternating&) { return history.empty() ? rng.uniform() : 1.0 - history.back(); },
          [&](const FileSequence& f) {
            if (history.size() >= f.prices.size()) {
              throw std::runtime_error("price sequence " + f.path.string() + " exhausted at round " +
                                       std::to_string(history.size() + 1));
            }
            return f.prices[history.size()];
          },
          [&](const ReflectedWalk& w) {
            const double prev = history.empty() ? w.start : history.back();
            const double step = rng.uniform() < 0.5 ? -w.step : w.step;
            return reflect_unit(prev + step);
          },
      },
      spec_);
  return clamp_unit(value, "market price");
}

double next_price(const PriceProcess& process, std::span<const double> history, Rng& rng) {
  return process.next(history, rng);
}

FileSequence load_price_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open price file " + path.string());
  FileSequence seq{path, {}};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    const std::string token = line.substr(first, last - first + 1);
    double value = 0.0;
    std::size_t used = 0;
    try {
      value = std::stod(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != token.size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": not a decimal price: '" + token + "'");
    }
    if (!(value >= 0.0 && value <= 1.0)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": price " + token +
                               " outside [0, 1]");
    }
    seq.prices.push_back(value);
  }
  return seq;
}

void write_price_file(const std::filesystem::path& path, std::span<const double> prices) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write price file " + path.string());
  out.precision(17);
  for (double p : prices) out << p << '\n';
}

std::vector<double> sample_path(const PriceProcess& process, std::size_t horizon, Rng& rng) {
  std::vector<double> path;
  path.reserve(horizon);
  for (std::size_t t = 0; t < horizon; ++t) path.push_back(process.next(path, rng));
  return path;
}

MeanReversionReport verify_global_mean_reversion(const PriceProcess& process, double mu,
                                                 std::size_t paths, std::size_t horizon,
                                                 std::uint64_t seed) {
  MeanReversionReport report;
  report.paths = paths;
  report.horizon = horizon;
  if (!process.conditional_mean({})) {
    report.reason = "process '" + process.kind() + "' has no closed-form conditional mean";
    return report;
  }
  if (paths < 2 || horizon < 1) throw std::invalid_argument("need at least 2 paths and 1 round");
  report.checkable = true;

  std::vector<double> sum(horizon, 0.0);
  std::vector<double> sumsq(horizon, 0.0);
  std::vector<double> history;
  history.reserve(horizon);
  for (std::size_t p = 0; p < paths; ++p) {
    Rng rng = Rng::stream(seed, {p, static_cast<std::uint64_t>(StreamRole::Price)});
    history.clear();
    double cumulative = 0.0;
    for (std::size_t t = 0; t < horizon; ++t) {
      const double drift = *process.conditional_mean(history) - mu;
      const double product = drift * cumulative;
      sum[t] += product;
      sumsq[t] += product * product;
      history.push_back(process.next(history, rng));
      cumulative += history.back() - mu;
    }
  }

  // Bonferroni-style z so that a process meeting the condition is rarely flagged.
  const double z = std::max(3.0, std::sqrt(2.0 * std::log(static_cast<double>(horizon) / 0.01)));
  const double n = static_cast<double>(paths);
  report.max_estimate = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < horizon; ++t) {
    const double mean = sum[t] / n;
    const double var = std::max(0.0, (sumsq[t] - n * mean * mean) / (n - 1.0));
    const double radius = z * std::sqrt(var / n) + 1e-12;
    if (mean > report.max_estimate) {
      report.max_estimate = mean;
      report.radius_at_max = radius;
      report.argmax_round = t;
    }
    if (mean > radius) ++report.flagged_rounds;
  }
  report.violated = report.flagged_rounds > 0;
  report.reason = report.violated ? "drift-sum product significantly positive" : "ok";
  return report;
}

}  // namespace mmlab
