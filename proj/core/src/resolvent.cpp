#include "eigoverlap/resolvent.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numbers>

#include "eigoverlap/csv.hpp"
#include "eigoverlap/error.hpp"
#include "text_util.hpp"

namespace eigoverlap {
namespace {

constexpr double kPi = std::numbers::pi;

struct LoopEval {
  cplx f;  // (1/N) sum g_n
  cplx a;  // (1/N) sum g_n^2
};

LoopEval evaluate_loop(std::span<const double> levels, double s2, cplx z, cplx m) {
  const cplx shift = z + s2 * m;
  cplx f = 0.0;
  cplx a = 0.0;
  for (double eps : levels) {
    const cplx g = 1.0 / (eps - shift);
    f += g;
    a += g * g;
  }
  const double inv_n = 1.0 / static_cast<double>(levels.size());
  return {f * inv_n, a * inv_n};
}

cplx bare_transform(std::span<const double> levels, cplx z) {
  cplx f = 0.0;
  for (double eps : levels) f += 1.0 / (eps - z);
  return f / static_cast<double>(levels.size());
}

// Iterates at fixed z. Returns the converged m or nullopt.
std::optional<cplx> iterate(std::span<const double> levels, double s2, cplx z, cplx m,
                            const SolverConfig& config, double* final_residual) {
  // Relative once |m| > 1: near an isolated level at small eta, m grows
  // large and an absolute bound would sit below rounding.
  auto converged = [&](double res, cplx m) { return res < config.tol * std::max(1.0, std::abs(m)); };
  LoopEval ev = evaluate_loop(levels, s2, z, m);
  double res = std::abs(m - ev.f);
  for (int it = 0; it < config.max_iters; ++it) {
    if (converged(res, m)) {
      if (final_residual) *final_residual = res;
      return m;
    }
    const cplx r = m - ev.f;
    const cplx jac = 1.0 - s2 * ev.a;
    bool accepted = false;
    if (std::abs(jac) > 1e-300) {
      const cplx trial = m - r / jac;
      if (trial.imag() > 0.0 && std::isfinite(trial.real()) && std::isfinite(trial.imag())) {
        const LoopEval tev = evaluate_loop(levels, s2, z, trial);
        const double tres = std::abs(trial - tev.f);
        if (tres < res) {
          m = trial;
          ev = tev;
          res = tres;
          accepted = true;
        }
      }
    }
    if (!accepted) {
      // Convex combination of two upper half-plane points stays there.
      m = (1.0 - config.damping) * m + config.damping * ev.f;
      ev = evaluate_loop(levels, s2, z, m);
      res = std::abs(m - ev.f);
    }
    assert(m.imag() > 0.0);
  }
  if (final_residual) *final_residual = res;
  if (converged(res, m)) return m;
  return std::nullopt;
}

// Walks from `from_eta` (where m is known) down to z, bisecting the log-eta
// step whenever a stage fails to converge.
std::optional<cplx> descend(std::span<const double> levels, double s2, double lambda,
                            double from_eta, cplx m, double to_eta, const SolverConfig& config,
                            int depth, double* residual) {
  const cplx z{lambda, to_eta};
  if (auto out = iterate(levels, s2, z, m, config, residual)) return out;
  if (depth >= 24) return std::nullopt;
  const double mid_eta = std::sqrt(from_eta * to_eta);
  auto mid = descend(levels, s2, lambda, from_eta, m, mid_eta, config, depth + 1, residual);
  if (!mid) return std::nullopt;
  return descend(levels, s2, lambda, mid_eta, *mid, to_eta, config, depth + 1, residual);
}

cplx anneal(std::span<const double> levels, double sigma_w, cplx z, const SolverConfig& config) {
  const double s2 = sigma_w * sigma_w;
  const double lambda = z.real();
  double eta = std::max(z.imag(), config.eta_schedule.front());
  // Far from the axis the plain map contracts; start from the bare transform.
  cplx m = bare_transform(levels, cplx{lambda, eta + sigma_w});
  double residual = 0.0;
  auto first = iterate(levels, s2, cplx{lambda, eta}, m, config, &residual);
  if (!first) {
    throw ConvergenceError("loop equation did not converge at the top of the eta schedule",
                           cplx{lambda, eta}, residual);
  }
  m = *first;
  std::vector<double> stages;
  for (double e : config.eta_schedule) {
    if (e < eta && e > z.imag()) stages.push_back(e);
  }
  if (z.imag() < eta) stages.push_back(z.imag());
  for (double next : stages) {
    auto out = descend(levels, s2, lambda, eta, m, next, config, 0, &residual);
    if (!out) {
      throw ConvergenceError("loop equation did not converge", cplx{lambda, next}, residual);
    }
    m = *out;
    eta = next;
  }
  return m;
}

}  // namespace

SolverConfig SolverConfig::defaults(double sigma_w) {
  SolverConfig config;
  double scale = 1.0;
  while (scale > 1.5e-6) {
    config.eta_schedule.push_back(scale * sigma_w);
    config.eta_schedule.push_back(0.3 * scale * sigma_w);
    scale *= 0.1;
  }
  config.eta_schedule.pop_back();  // ends at 1e-6 * sigma_w
  return config;
}

void SolverConfig::validate() const {
  if (eta_schedule.empty()) throw ConfigError("eta schedule is empty");
  for (std::size_t k = 0; k < eta_schedule.size(); ++k) {
    if (!(eta_schedule[k] > 0.0)) throw ConfigError("eta schedule entries must be > 0");
    if (k > 0 && !(eta_schedule[k] < eta_schedule[k - 1])) {
      throw ConfigError("eta schedule must be strictly decreasing");
    }
  }
  if (!(damping > 0.0 && damping <= 1.0)) throw ConfigError("damping must be in (0, 1]");
  if (!(tol > 0.0)) throw ConfigError("solver tolerance must be > 0");
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
}

cplx stieltjes_residual(std::span<const double> levels, double sigma_w, cplx z, cplx m) {
  return evaluate_loop(levels, sigma_w * sigma_w, z, m).f - m;
}

cplx stieltjes_derivative(std::span<const double> levels, double sigma_w, cplx z, cplx m) {
  const double s2 = sigma_w * sigma_w;
  const cplx a = evaluate_loop(levels, s2, z, m).a;
  return a / (1.0 - s2 * a);
}

cplx solve_m(const BareSpectrum& spectrum, double sigma_w, cplx z, const SolverConfig& config,
             std::optional<cplx> warm_start) {
  if (!(z.imag() > 0.0)) throw DomainError("solve_m requires Im z > 0");
  if (!(sigma_w >= 0.0)) throw DomainError("sigma_w must be >= 0");
  config.validate();
  const auto levels = spectrum.levels();
  if (warm_start && warm_start->imag() > 0.0) {
    if (auto out = iterate(levels, sigma_w * sigma_w, z, *warm_start, config, nullptr)) {
      return *out;
    }
  }
  return anneal(levels, sigma_w, z, config);
}

std::vector<double> default_grid(const BareSpectrum& spectrum, double sigma_w) {
  const std::size_t points = 4 * spectrum.size();
  const double lo = spectrum.min() - 5.0 * sigma_w;
  const double hi = spectrum.max() + 5.0 * sigma_w;
  std::vector<double> grid;
  grid.reserve(points + spectrum.size());
  for (std::size_t k = 0; k < points; ++k) {
    grid.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1));
  }
  grid.insert(grid.end(), spectrum.levels().begin(), spectrum.levels().end());
  std::sort(grid.begin(), grid.end());
  const double min_gap = 1e-12 * (hi - lo);
  std::vector<double> unique;
  unique.reserve(grid.size());
  for (double x : grid) {
    if (unique.empty() || x - unique.back() > min_gap) unique.push_back(x);
  }
  return unique;
}

namespace {

std::vector<double> real_parts(const std::vector<cplx>& v) {
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](cplx c) { return c.real(); });
  return out;
}

std::vector<double> imag_parts(const std::vector<cplx>& v) {
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](cplx c) { return c.imag(); });
  return out;
}

void check_grid(const std::vector<double>& grid) {
  if (grid.size() < 4) throw DomainError("grid needs at least 4 points");
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (!(grid[k] > grid[k - 1])) throw DomainError("grid must be strictly increasing");
  }
}

}  // namespace

StieltjesSolution::StieltjesSolution(BareSpectrum spectrum, double sigma_w, SolverConfig config,
                                     std::vector<double> grid, std::vector<cplx> m_values)
    : spectrum_(std::move(spectrum)),
      sigma_w_(sigma_w),
      config_(std::move(config)),
      grid_(std::move(grid)),
      m_values_(std::move(m_values)),
      re_interp_((check_grid(grid_), std::vector<double>(grid_)), real_parts(m_values_)),
      im_interp_(std::vector<double>(grid_), imag_parts(m_values_)) {
  config_.validate();
  if (grid_.size() != m_values_.size()) throw DomainError("grid and m sizes differ");
  const double s2 = sigma_w_ * sigma_w_;
  rho_.resize(grid_.size());
  hilbert_.resize(grid_.size());
  s_shift_.resize(grid_.size());
  s_width_.resize(grid_.size());
  for (std::size_t k = 0; k < grid_.size(); ++k) {
    const cplx m = m_values_[k];
    rho_[k] = m.imag() / kPi;
    hilbert_[k] = m.real() / kPi;
    s_shift_[k] = s2 * m.real();
    s_width_[k] = kPi * s2 * rho_[k];
  }
}

cplx StieltjesSolution::m_interp(double lambda) const {
  if (!contains(lambda)) {
    throw RangeError("lambda=" + detail::format_double(lambda) + " outside solved grid [" +
                     detail::format_double(grid_.front()) + ", " +
                     detail::format_double(grid_.back()) + "]");
  }
  // pchip can overshoot below zero between two tiny samples; the density
  // itself is non-negative.
  return {re_interp_(lambda), std::max(im_interp_(lambda), 0.0)};
}

cplx StieltjesSolution::m_at(cplx z) const {
  if (z.imag() == 0.0) throw DomainError("m(z) is evaluated off the real axis only");
  if (z.imag() < 0.0) return std::conj(m_at(std::conj(z)));
  return solve_m(spectrum_, sigma_w_, z, config_);
}

cplx StieltjesSolution::dm_at(cplx z) const {
  if (z.imag() == 0.0) throw DomainError("m'(z) is evaluated off the real axis only");
  if (z.imag() < 0.0) return std::conj(dm_at(std::conj(z)));
  return stieltjes_derivative(spectrum_.levels(), sigma_w_, z, m_at(z));
}

double StieltjesSolution::normalization() const {
  double total = 0.0;
  for (std::size_t k = 1; k < grid_.size(); ++k) {
    total += 0.5 * (rho_[k] + rho_[k - 1]) * (grid_[k] - grid_[k - 1]);
  }
  return total;
}

namespace {

cplx solve_point(std::span<const double> levels, double sigma_w, double lambda,
                 const SolverConfig& config) {
  try {
    return anneal(levels, sigma_w, cplx{lambda, config.eta_final()}, config);
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(std::string(e.what()) + " at lambda=" + detail::format_double(lambda) +
                               ", eta=" + detail::format_double(e.z().imag()),
                           e.z(), e.residual());
  }
}

void check_coverage(const BareSpectrum& spectrum, double sigma_w, const std::vector<double>& grid) {
  const double need_lo = spectrum.min() - 5.0 * sigma_w;
  const double need_hi = spectrum.max() + 5.0 * sigma_w;
  const double slack = 1e-9 * (need_hi - need_lo);
  if (grid.front() > need_lo + slack || grid.back() < need_hi - slack) {
    throw DomainError("grid [" + detail::format_double(grid.front()) + ", " +
                      detail::format_double(grid.back()) + "] does not cover [" +
                      detail::format_double(need_lo) + ", " + detail::format_double(need_hi) +
                      "]");
  }
}

}  // namespace

StieltjesSolution solve_grid(const BareSpectrum& spectrum, double sigma_w,
                             std::vector<double> grid, const SolverConfig& config) {
  config.validate();
  if (!(sigma_w > 0.0)) throw DomainError("sigma_w must be > 0");
  check_grid(grid);
  check_coverage(spectrum, sigma_w, grid);
  std::vector<cplx> m(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    m[k] = solve_point(spectrum.levels(), sigma_w, grid[k], config);
  }
  return StieltjesSolution(spectrum, sigma_w, config, std::move(grid), std::move(m));
}

StieltjesSolution solve_adaptive(const BareSpectrum& spectrum, double sigma_w,
                                 const SolverConfig& config, const RefineOptions& options) {
  config.validate();
  if (!(sigma_w > 0.0)) throw DomainError("sigma_w must be > 0");
  const auto levels = spectrum.levels();
  const double s2 = sigma_w * sigma_w;
  const double eta = config.eta_final();

  std::vector<double> grid = default_grid(spectrum, sigma_w);
  std::vector<cplx> m(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    m[k] = solve_point(levels, sigma_w, grid[k], config);
  }
  const double min_width = options.min_width_fraction * (grid.back() - grid.front());

  // Solves at `lambda`, warm-starting from a neighbour; the upper half-plane
  // root of the loop equation is unique, so any converged Herglotz value is it.
  auto solve_near = [&](double lambda, cplx guess) {
    if (guess.imag() > 0.0) {
      if (auto out = iterate(levels, s2, cplx{lambda, eta}, guess, config, nullptr)) {
        if (out->imag() > 0.0) return *out;
      }
    }
    return solve_point(levels, sigma_w, lambda, config);
  };

  std::vector<char> pending(grid.size() - 1, 1);
  for (int pass = 0; pass < options.max_passes; ++pass) {
    std::vector<double> next_grid;
    std::vector<cplx> next_m;
    std::vector<char> next_pending;
    next_grid.reserve(grid.size() * 2);
    bool any = false;
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
      next_grid.push_back(grid[k]);
      next_m.push_back(m[k]);
      const double a = grid[k];
      const double b = grid[k + 1];
      if (!pending[k] || b - a <= 2.0 * min_width) {
        next_pending.push_back(0);
        continue;
      }
      const double mid = 0.5 * (a + b);
      const cplx m_mid = solve_near(mid, m[k]);
      const cplx linear = 0.5 * (m[k] + m[k + 1]);
      const double err = std::abs(m_mid - linear) / kPi * (b - a);
      const char split = err > options.mass_tol ? 1 : 0;
      any = any || split;
      next_grid.push_back(mid);
      next_m.push_back(m_mid);
      next_pending.push_back(split);
      next_pending.push_back(split);
    }
    next_grid.push_back(grid.back());
    next_m.push_back(m.back());
    grid = std::move(next_grid);
    m = std::move(next_m);
    pending = std::move(next_pending);
    if (!any) break;
  }
  return StieltjesSolution(spectrum, sigma_w, config, std::move(grid), std::move(m));
}

cplx mean_green_diag(const StieltjesSolution& solution, std::size_t n, double lambda) {
  if (n >= solution.dimension()) throw RangeError("level index out of range");
  const cplx m = solution.m_interp(lambda);
  const cplx z{lambda, solution.eta_final()};
  const double s2 = solution.sigma_w() * solution.sigma_w();
  return 1.0 / (solution.spectrum()[n] - z - s2 * m);
}

cplx mean_green_diag(const StieltjesSolution& solution, std::size_t n, cplx z) {
  if (n >= solution.dimension()) throw RangeError("level index out of range");
  const double s2 = solution.sigma_w() * solution.sigma_w();
  return 1.0 / (solution.spectrum()[n] - z - s2 * solution.m_at(z));
}

std::vector<double> mean_positions(const StieltjesSolution& solution, std::size_t count) {
  if (count == 0) return {};
  const auto& grid = solution.grid();
  const auto& rho = solution.rho();
  const double total = solution.normalization();
  if (!(total > 0.0)) throw DomainError("density has no mass on the grid");

  std::vector<double> out;
  out.reserve(count);
  // Walk the grid from the top, accumulating mass above the current point.
  std::size_t k = grid.size() - 1;
  double above = 0.0;
  for (std::size_t j = 1; j <= count; ++j) {
    const double target = (static_cast<double>(j) - 0.5) / static_cast<double>(count) * total;
    while (k > 0) {
      const double h = grid[k] - grid[k - 1];
      const double seg = 0.5 * (rho[k] + rho[k - 1]) * h;
      if (above + seg >= target) break;
      above += seg;
      --k;
    }
    if (k == 0) {
      out.push_back(grid.front());
      continue;
    }
    // Linear rho on [a, b]; mass from b down to b - t is t rho_b + kappa t^2 / 2.
    const double h = grid[k] - grid[k - 1];
    const double rb = rho[k];
    const double kappa = (rho[k - 1] - rb) / h;
    const double need = target - above;
    const double disc = std::max(rb * rb + 2.0 * kappa * need, 0.0);
    const double denom = rb + std::sqrt(disc);
    double t = denom > 0.0 ? 2.0 * need / denom : h;
    t = std::clamp(t, 0.0, h);
    out.push_back(grid[k] - t);
  }
  return out;
}

cplx second_subordinate(const StieltjesSolution& solution, cplx z1, cplx z2,
                        double switch_distance) {
  const double s2 = solution.sigma_w() * solution.sigma_w();
  if (std::abs(z1 - z2) < switch_distance * std::max(1.0, std::abs(z1))) {
    return s2 * solution.dm_at(z1);
  }
  return s2 * (solution.m_at(z1) - solution.m_at(z2)) / (z1 - z2);
}

SubordinationReport subordination_check(const StieltjesSolution& solution) {
  SubordinationReport report;
  const double s2 = solution.sigma_w() * solution.sigma_w();
  const auto levels = solution.spectrum().levels();
  report.rows.reserve(solution.grid().size());
  for (std::size_t k = 0; k < solution.grid().size(); ++k) {
    const cplx z{solution.grid()[k], solution.eta_final()};
    const cplx m = solution.m_values()[k];
    const cplx shifted = bare_transform(levels, z + s2 * m);
    const double residual = std::abs(shifted - m);
    report.rows.push_back({z, m, shifted, residual});
    report.max_residual = std::max(report.max_residual, residual);
  }
  return report;
}

void write_solution_csv(const std::filesystem::path& path, const StieltjesSolution& solution,
                        const std::vector<std::string>& metadata) {
  CsvTable table;
  table.comments = metadata;
  table.set_meta("sigma_w", detail::format_double(solution.sigma_w()));
  table.set_meta("n_levels", std::to_string(solution.dimension()));
  table.columns = {"lambda", "re_m", "im_m", "rho", "s_shift", "s_width", "eta_final"};
  const std::string eta = detail::format_double(solution.eta_final());
  for (std::size_t k = 0; k < solution.grid().size(); ++k) {
    table.rows.push_back({detail::format_double(solution.grid()[k]),
                          detail::format_double(solution.m_values()[k].real()),
                          detail::format_double(solution.m_values()[k].imag()),
                          detail::format_double(solution.rho()[k]),
                          detail::format_double(solution.s_shift()[k]),
                          detail::format_double(solution.s_width()[k]), eta});
  }
  write_csv(path, table);
}

StieltjesSolution read_solution_csv(const std::filesystem::path& path, BareSpectrum spectrum,
                                    double sigma_w, SolverConfig config) {
  const CsvTable table = read_csv(path);
  if (auto s = table.meta("sigma_w")) {
    double stored = 0.0;
    if (!detail::parse_double(*s, stored) || stored != sigma_w) {
      throw ConfigError("solution CSV was produced with sigma_w=" + *s);
    }
  }
  const auto lambda = table.numeric_column("lambda");
  const auto re = table.numeric_column("re_m");
  const auto im = table.numeric_column("im_m");
  const auto eta = table.numeric_column("eta_final");
  if (!eta.empty() && eta.front() != config.eta_final()) {
    throw ConfigError("solution CSV eta_final does not match solver config");
  }
  std::vector<cplx> m(lambda.size());
  for (std::size_t k = 0; k < m.size(); ++k) m[k] = {re[k], im[k]};
  return StieltjesSolution(std::move(spectrum), sigma_w, std::move(config), lambda, std::move(m));
}

}  // namespace eigoverlap
