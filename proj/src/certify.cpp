#include "antifrag/certify.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "antifrag/env.hpp"
#include "antifrag/metrics.hpp"
#include "antifrag/parallel.hpp"

namespace antifrag::certify {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean(std::span<const double> v) {
  if (v.empty()) return kNaN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Linear-interpolation quantile of an unsorted sample.
double quantile(Vec v, double q) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Interval percentile_interval(const Vec& draws) {
  return {quantile(draws, 0.025), quantile(draws, 0.975)};
}

// Slopes between consecutive points; nullopt where x does not increase.
std::vector<std::optional<double>> secant_slopes(std::span<const double> x,
                                                 std::span<const double> y) {
  std::vector<std::optional<double>> s;
  if (x.size() < 2) return s;
  const double scale = std::max(std::abs(x.front()), std::abs(x.back()));
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double dx = x[i + 1] - x[i];
    if (dx > 1e-12 * std::max(scale, 1e-300)) {
      s.emplace_back((y[i + 1] - y[i]) / dx);
    } else {
      s.emplace_back(std::nullopt);
    }
  }
  return s;
}

std::vector<std::optional<double>> second_differences(std::span<const double> x,
                                                      std::span<const double> y) {
  const auto s = secant_slopes(x, y);
  std::vector<std::optional<double>> d;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    if (s[i] && s[i + 1]) {
      d.emplace_back(*s[i + 1] - *s[i]);
    } else {
      d.emplace_back(std::nullopt);
    }
  }
  return d;
}

double fit_curvature(std::span<const double> x, std::span<const double> h) {
  const auto s = secant_slopes(x, h);
  if (s.size() < 2 || !s.front() || !s.back()) return 0.0;
  return *s.front() - *s.back();
}

struct PowerLaw {
  double beta = kNaN;
  double log_c = kNaN;
};

PowerLaw power_law(std::span<const double> v, std::span<const double> r,
                   std::span<const std::size_t> use) {
  Vec lx, ly;
  for (std::size_t i : use) {
    if (v[i] > 0.0 && r[i] > 0.0) {
      lx.push_back(std::log(v[i]));
      ly.push_back(std::log(r[i]));
    }
  }
  if (lx.size() < 2) return {};
  const auto f = least_squares(lx, ly);
  return {f.slope, f.intercept};
}

// Lawson-Hanson active-set nonnegative least squares.
Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  const Eigen::Index n = A.cols();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  const double tol = 10.0 * std::numeric_limits<double>::epsilon() *
                     std::max(1.0, A.norm()) * std::max(1.0, b.norm()) *
                     static_cast<double>(std::max<Eigen::Index>(n, 1));

  auto solve_passive = [&](Eigen::VectorXd& z) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    }
    z.setZero(n);
    if (idx.empty()) return;
    Eigen::MatrixXd Ap(A.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) Ap.col(static_cast<Eigen::Index>(k)) = A.col(idx[k]);
    const Eigen::VectorXd zp = Ap.colPivHouseholderQr().solve(b);
    for (std::size_t k = 0; k < idx.size(); ++k) z(idx[k]) = zp(static_cast<Eigen::Index>(k));
  };

  for (int outer = 0; outer < 3 * static_cast<int>(n) + 3; ++outer) {
    const Eigen::VectorXd w = A.transpose() * (b - A * x);
    Eigen::Index best = -1;
    double best_w = tol;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[static_cast<std::size_t>(j)] && w(j) > best_w) {
        best_w = w(j);
        best = j;
      }
    }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;

    Eigen::VectorXd z;
    for (int inner = 0; inner < 3 * static_cast<int>(n) + 3; ++inner) {
      solve_passive(z);
      bool feasible = true;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) feasible = false;
      }
      if (feasible) break;
      double alpha = 1.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) {
          alpha = std::min(alpha, x(j) / (x(j) - z(j)));
        }
      }
      x += alpha * (z - x);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && x(j) <= tol) {
          passive[static_cast<std::size_t>(j)] = false;
          x(j) = 0.0;
        }
      }
    }
    x = z;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[static_cast<std::size_t>(j)]) x(j) = 0.0;
    }
  }
  return x;
}

}  // namespace

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Cells
// ---------------------------------------------------------------------------

CellEvaluation evaluate_cell(const EnvironmentTrace& trace, learners::Learner& learner,
                             std::span<const std::size_t> K_grid, RunRecord* record_out) {
  CellEvaluation out;
  const auto start = std::chrono::steady_clock::now();
  RunRecord record;
  try {
    record = learners::run(learner, trace);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::aborted) throw;
    out.error = e.what();
    return out;
  }
  out.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  const auto& space = trace.space;
  const auto tv = metrics::temporal_variability(space, trace.losses);
  out.v_f = tv.f;
  out.v_g = tv.g;
  const Vec best_fixed = block_argmin(space, trace.losses);
  out.static_regret = metrics::static_regret(trace.losses, record.actions, best_fixed);
  for (std::size_t K : K_grid) {
    const auto comparator = metrics::best_comparator_in_UK(space, trace.losses, K);
    CellScore score;
    score.K = K;
    score.v_path = metrics::path_length(comparator.actions);
    score.dyn_regret = metrics::dynamic_regret(space, trace.losses, record.actions, comparator);
    out.scores.push_back(score);
  }
  out.complete = true;
  if (record_out != nullptr) *record_out = std::move(record);
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

void SweepResult::finalize() {
  for (auto& level : levels) {
    Vec v, r;
    for (const auto& s : level.reps) {
      v.push_back(s.v);
      r.push_back(s.r);
    }
    level.v_mean = v.empty() ? 0.0 : mean(v);
    level.v_sd = sample_sd(v);
    level.r_mean = r.empty() ? 0.0 : mean(r);
    level.r_sd = sample_sd(r);
  }
  std::stable_sort(levels.begin(), levels.end(),
                   [](const SweepLevel& a, const SweepLevel& b) { return a.v_mean < b.v_mean; });
}

std::uint64_t cell_seed(std::uint64_t master, std::string_view phase, std::size_t level,
                        std::size_t rep) {
  return split_seed(split_seed(master, phase, level), "rep", rep);
}

EnvironmentTrace sweep_environment(const SweepPlan& plan, std::size_t level, std::size_t rep) {
  EnvSpec spec = plan.base;
  spec.horizon = plan.horizon;
  spec.target_volatility = plan.levels.at(level);
  spec.seed = cell_seed(plan.seed, "sweep", level, rep);
  return env::generate(spec, plan.space);
}

std::vector<SweepResult> assemble_sweeps(const SweepPlan& plan, std::string_view learner_id,
                                         std::span<const std::size_t> K_grid,
                                         std::span<const CellEvaluation> cells) {
  if (cells.size() != plan.levels.size() * plan.reps) {
    fail(ErrorCode::invalid_input, "assemble_sweeps: cell count does not match the plan");
  }
  std::vector<SweepResult> out;
  for (std::size_t k = 0; k < K_grid.size(); ++k) {
    SweepResult sweep;
    sweep.family = std::string(to_string(plan.base.family));
    sweep.learner_id = std::string(learner_id);
    sweep.K = K_grid[k];
    sweep.horizon = plan.horizon;
    for (std::size_t level = 0; level < plan.levels.size(); ++level) {
      SweepLevel lv;
      lv.v_target = plan.levels[level];
      for (std::size_t rep = 0; rep < plan.reps; ++rep) {
        const auto& cell = cells[level * plan.reps + rep];
        if (!cell.complete) {
          ++lv.incomplete;
          continue;
        }
        lv.reps.push_back({cell.scores.at(k).v_path, cell.scores.at(k).dyn_regret});
      }
      sweep.levels.push_back(std::move(lv));
    }
    sweep.finalize();
    out.push_back(std::move(sweep));
  }
  return out;
}

std::vector<SweepResult> volatility_sweep(const SweepPlan& plan, const LearnerFactory& learner,
                                          std::string_view learner_id,
                                          std::span<const std::size_t> K_grid) {
  if (plan.levels.empty()) fail(ErrorCode::invalid_input, "volatility sweep needs levels");
  if (plan.reps < 1) fail(ErrorCode::invalid_input, "volatility sweep needs reps >= 1");
  if (K_grid.empty()) fail(ErrorCode::invalid_input, "volatility sweep needs a K grid");
  std::vector<CellEvaluation> results(plan.levels.size() * plan.reps);
  parallel_for(results.size(), plan.jobs, [&](std::size_t i) {
    const auto trace = sweep_environment(plan, i / plan.reps, i % plan.reps);
    auto l = learner(plan.horizon);
    results[i] = evaluate_cell(trace, *l, K_grid);
  });
  return assemble_sweeps(plan, learner_id, K_grid, results);
}

SweepResult volatility_sweep(const SweepPlan& plan, const LearnerFactory& learner,
                             std::string_view learner_id, std::size_t K) {
  const std::size_t grid[] = {K};
  return std::move(volatility_sweep(plan, learner, learner_id, grid).front());
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

LineFit least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    fail(ErrorCode::invalid_input, "least squares needs at least two paired points");
  }
  const double mx = mean(x);
  const double my = mean(y);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) return {kNaN, kNaN};
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

Vec concave_nondecreasing_fit(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n != y.size()) fail(ErrorCode::invalid_input, "concave fit: size mismatch");
  if (n <= 1) return Vec(y.begin(), y.end());
  // h_i = h_1 + sum_k delta_k (x_{min(i,k+1)} - x_1) with delta >= 0: the slopes
  // s_j = sum_{k>=j} delta_k are nonnegative and nonincreasing. h_1 is free and
  // is profiled out by centering.
  const auto m = static_cast<Eigen::Index>(n - 1);
  Eigen::MatrixXd A(static_cast<Eigen::Index>(n), m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k + 1 < n; ++k) {
      A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = x[std::min(i, k + 1)] - x[0];
    }
  }
  Eigen::VectorXd b(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) b(static_cast<Eigen::Index>(i)) = y[i];
  const Eigen::RowVectorXd col_mean = A.colwise().mean();
  const double b_mean = b.mean();
  Eigen::MatrixXd Ac = A.rowwise() - col_mean;
  Eigen::VectorXd bc = b.array() - b_mean;
  const Eigen::VectorXd delta = nnls(Ac, bc);
  const double h1 = b_mean - col_mean.dot(delta);
  const Eigen::VectorXd h = (A * delta).array() + h1;
  return Vec(h.data(), h.data() + h.size());
}

ResponseCurve fit_response(const SweepResult& sweep, const FitOptions& options) {
  ResponseCurve out;
  std::vector<const SweepLevel*> levels;
  std::size_t min_n = std::numeric_limits<std::size_t>::max();
  for (const auto& lv : sweep.levels) {
    if (lv.n() == 0) {
      out.notes.push_back("level with target " + std::to_string(lv.v_target) +
                          " has no completed repetitions");
      continue;
    }
    levels.push_back(&lv);
    min_n = std::min(min_n, lv.n());
  }
  if (levels.empty()) fail(ErrorCode::invalid_input, "fit_response: no completed levels");
  std::stable_sort(levels.begin(), levels.end(),
                   [](const SweepLevel* a, const SweepLevel* b) { return a->v_mean < b->v_mean; });
  const std::size_t L = levels.size();
  for (const auto* lv : levels) {
    out.v_levels.push_back(lv->v_mean);
    out.r_levels.push_back(lv->r_mean);
  }
  if (std::all_of(out.v_levels.begin(), out.v_levels.end(), [](double v) { return v <= 0.0; })) {
    fail(ErrorCode::invalid_input,
         "fit_response: degenerate sweep, every level has zero realized volatility");
  }
  out.tested_range = {out.v_levels.front(), out.v_levels.back()};

  std::vector<std::size_t> all(L);
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t i = 0; i < L; ++i) {
    if (out.v_levels[i] > 0.0 && out.r_levels[i] > 0.0) {
      out.log_fit_levels.push_back(i);
    } else {
      const std::string msg = "level " + std::to_string(i) + " (mean V=" +
                              std::to_string(out.v_levels[i]) + ", mean R=" +
                              std::to_string(out.r_levels[i]) + ") excluded from the log fit";
      out.notes.push_back(msg);
      warn("fit_response: " + msg);
    }
  }
  const auto point = power_law(out.v_levels, out.r_levels, out.log_fit_levels);
  out.beta = point.beta;
  out.c = std::exp(point.log_c);
  out.concave_fit = concave_nondecreasing_fit(out.v_levels, out.r_levels);
  out.curvature = fit_curvature(out.v_levels, out.concave_fit);
  const auto d_point = second_differences(out.v_levels, out.r_levels);

  // Bootstrap over repetitions within each level.
  Rng rng(split_seed(options.seed, "fit.bootstrap", sweep.K));
  Vec beta_draws, logc_draws, curv_draws;
  std::vector<Vec> d_dev(d_point.size());
  Vec vb(L), rb(L);
  for (std::size_t b = 0; b < options.bootstrap_draws; ++b) {
    for (std::size_t i = 0; i < L; ++i) {
      const auto& reps = levels[i]->reps;
      double sv = 0.0, sr = 0.0;
      for (std::size_t k = 0; k < reps.size(); ++k) {
        const auto& s = reps[rng.below(reps.size())];
        sv += s.v;
        sr += s.r;
      }
      vb[i] = sv / static_cast<double>(reps.size());
      rb[i] = sr / static_cast<double>(reps.size());
    }
    const auto pl = power_law(vb, rb, out.log_fit_levels);
    if (std::isfinite(pl.beta)) {
      beta_draws.push_back(pl.beta);
      logc_draws.push_back(pl.log_c);
    }
    const auto d = second_differences(vb, rb);
    for (std::size_t i = 0; i < d.size() && i < d_point.size(); ++i) {
      if (d[i] && d_point[i]) d_dev[i].push_back(std::abs(*d[i] - *d_point[i]));
    }
    // Bootstrap means need not stay sorted; the curvature needs ordered x.
    bool ordered = true;
    for (std::size_t i = 1; i < L; ++i) ordered = ordered && vb[i] > vb[i - 1];
    if (ordered) curv_draws.push_back(fit_curvature(vb, concave_nondecreasing_fit(vb, rb)));
  }

  if (!beta_draws.empty()) {
    out.beta_ci = percentile_interval(beta_draws);
    const auto logc_ci = percentile_interval(logc_draws);
    out.c_ci = {std::exp(logc_ci.lo), std::exp(logc_ci.hi)};
  } else {
    out.beta_ci = {kNaN, kNaN};
    out.c_ci = {kNaN, kNaN};
  }
  out.curvature_ci = curv_draws.empty() ? Interval{out.curvature, out.curvature}
                                        : percentile_interval(curv_draws);

  // Convexity check: every second difference must sit inside its noise band.
  // Bands are Bonferroni-corrected so the family of positions holds 5%.
  const auto positions =
      static_cast<double>(std::count_if(d_point.begin(), d_point.end(), [](const auto& d) { return d.has_value(); }));
  const double band_level = 1.0 - 0.05 / std::max(1.0, positions);
  for (std::size_t i = 0; i < d_point.size(); ++i) {
    if (!d_point[i]) continue;
    const double band = d_dev[i].empty() ? 0.0 : quantile(d_dev[i], band_level);
    if (*d_point[i] > out.max_positive_second_difference) {
      out.max_positive_second_difference = *d_point[i];
      out.second_difference_band = band;
    }
    if (*d_point[i] > band) out.convex_kink = true;
  }

  const double lo_v = out.v_levels.front();
  const double hi_v = out.v_levels.back();
  out.notes.push_back("tested realized volatility range [" + std::to_string(lo_v) + ", " +
                      std::to_string(hi_v) + "]");

  if (min_n < options.min_reps || L < options.min_levels) {
    out.notes.push_back("verdicts need >= " + std::to_string(options.min_reps) +
                        " repetitions per level and >= " + std::to_string(options.min_levels) +
                        " levels");
    return out;
  }

  // Slope scale for deciding that the concave fit bends at all.
  double slope_scale = 0.0;
  for (const auto& s : secant_slopes(out.v_levels, out.concave_fit)) {
    if (s) slope_scale = std::max(slope_scale, std::abs(*s));
  }
  const double bend_tol = 1e-9 * std::max(slope_scale, 1e-300);

  const bool beta_known = std::isfinite(out.beta_ci.hi);
  if (beta_known && out.beta_ci.hi < 1.0 && !out.convex_kink && out.curvature_ci.lo > bend_tol) {
    out.strictly_concave_in_V = Verdict::pass;
  } else if ((beta_known && out.beta_ci.lo >= 1.0) || out.convex_kink ||
             out.curvature_ci.hi <= bend_tol) {
    out.strictly_concave_in_V = Verdict::fail;
  } else {
    out.strictly_concave_in_V = Verdict::inconclusive;
  }

  bool dominated = true;
  for (std::size_t i = 0; i < L; ++i) {
    if (out.r_levels[i] > options.domination_scale * out.v_levels[i]) dominated = false;
  }
  out.dominated_by_identity = dominated ? Verdict::pass : Verdict::fail;
  return out;
}

// ---------------------------------------------------------------------------
// Sublinearity
// ---------------------------------------------------------------------------

SublinearityResult sublinearity_test(std::span<const HorizonPoint> points,
                                     const SublinearityOptions& options) {
  if (points.size() < 3) fail(ErrorCode::invalid_input, "sublinearity test needs >= 3 horizons");
  SublinearityResult out;
  for (const auto& p : points) {
    if (p.regrets.empty()) fail(ErrorCode::invalid_input, "sublinearity test: empty horizon");
    out.horizons.push_back(static_cast<double>(p.horizon));
    out.mean_regret.push_back(mean(p.regrets));
  }
  const double min_mean = *std::min_element(out.mean_regret.begin(), out.mean_regret.end());
  if (min_mean <= 0.0) {
    out.shifted = true;
    out.shift = std::abs(min_mean) + 1.0;
  }
  Vec lx;
  for (double T : out.horizons) lx.push_back(std::log(T));
  auto slope_of = [&](const Vec& means) {
    Vec ly;
    for (double m : means) ly.push_back(std::log(m + out.shift));
    for (double v : ly) {
      if (!std::isfinite(v)) return kNaN;
    }
    return least_squares(lx, ly).slope;
  };
  out.slope = slope_of(out.mean_regret);

  Rng rng(split_seed(options.seed, "sublinearity.bootstrap", points.size()));
  Vec draws;
  Vec means(points.size());
  for (std::size_t b = 0; b < options.bootstrap_draws; ++b) {
    for (std::size_t h = 0; h < points.size(); ++h) {
      const auto& r = points[h].regrets;
      double s = 0.0;
      for (std::size_t k = 0; k < r.size(); ++k) s += r[rng.below(r.size())];
      means[h] = s / static_cast<double>(r.size());
    }
    const double s = slope_of(means);
    if (std::isfinite(s)) draws.push_back(s);
  }
  out.ci = draws.empty() ? Interval{out.slope, out.slope} : percentile_interval(draws);
  const double threshold = 1.0 - options.delta;
  if (!std::isfinite(out.slope)) {
    out.verdict = Verdict::inconclusive;
  } else if (out.ci.hi < threshold) {
    out.verdict = Verdict::pass;
  } else if (out.ci.lo >= threshold) {
    out.verdict = Verdict::fail;
  } else {
    out.verdict = Verdict::inconclusive;
  }
  return out;
}

EnvironmentTrace horizon_environment(const HorizonPlan& plan, std::size_t horizon_index,
                                     std::size_t rep) {
  EnvSpec spec = plan.base;
  spec.horizon = plan.horizons.at(horizon_index);
  spec.target_volatility = plan.volatility_rate * static_cast<double>(spec.horizon);
  spec.seed = cell_seed(plan.seed, "horizon", horizon_index, rep);
  return env::generate(spec, plan.space);
}

std::vector<std::vector<HorizonPoint>> assemble_horizons(const HorizonPlan& plan,
                                                         std::span<const std::size_t> K_grid,
                                                         std::span<const CellEvaluation> cells) {
  const std::size_t H = plan.horizons.size();
  if (cells.size() != H * plan.reps) {
    fail(ErrorCode::invalid_input, "assemble_horizons: cell count does not match the plan");
  }
  std::vector<std::vector<HorizonPoint>> out(K_grid.size());
  for (std::size_t k = 0; k < K_grid.size(); ++k) {
    for (std::size_t h = 0; h < H; ++h) {
      HorizonPoint p;
      p.horizon = plan.horizons[h];
      for (std::size_t rep = 0; rep < plan.reps; ++rep) {
        const auto& cell = cells[h * plan.reps + rep];
        if (cell.complete) p.regrets.push_back(cell.scores.at(k).dyn_regret);
      }
      out[k].push_back(std::move(p));
    }
  }
  return out;
}

std::vector<std::vector<HorizonPoint>> horizon_sweep(const HorizonPlan& plan,
                                                     const LearnerFactory& learner,
                                                     std::span<const std::size_t> K_grid) {
  std::vector<CellEvaluation> results(plan.horizons.size() * plan.reps);
  parallel_for(results.size(), plan.jobs, [&](std::size_t i) {
    const auto trace = horizon_environment(plan, i / plan.reps, i % plan.reps);
    auto l = learner(trace.horizon());
    results[i] = evaluate_cell(trace, *l, K_grid);
  });
  return assemble_horizons(plan, K_grid, results);
}

// ---------------------------------------------------------------------------
// Certification
// ---------------------------------------------------------------------------

CertificationResult certify_from_data(std::string_view learner_id,
                                      std::span<const std::size_t> K_grid,
                                      std::vector<SweepResult> sweeps,
                                      std::span<const std::vector<HorizonPoint>> horizons,
                                      const CertifyOptions& options) {
  if (!std::is_sorted(K_grid.begin(), K_grid.end()) || K_grid.empty()) {
    fail(ErrorCode::invalid_input, "certify: K grid must be nonempty and sorted ascending");
  }
  if (sweeps.size() != K_grid.size() || horizons.size() != K_grid.size()) {
    fail(ErrorCode::invalid_input, "certify: one sweep and one horizon series per K required");
  }
  CertificationResult out;
  out.learner_id = std::string(learner_id);
  for (std::size_t k = 0; k < K_grid.size(); ++k) {
    OrderResult r;
    r.K = K_grid[k];
    r.sweep = std::move(sweeps[k]);
    bool static_class = r.K >= r.sweep.horizon;
    for (const auto& p : horizons[k]) static_class = static_class && r.K >= p.horizon;
    if (static_class) {
      // U^K holds only fixed comparators: path-length is zero by construction
      // and the response criteria hold vacuously.
      for (const auto& lv : r.sweep.levels) {
        r.curve.v_levels.push_back(lv.v_mean);
        r.curve.r_levels.push_back(lv.r_mean);
      }
      r.curve.strictly_concave_in_V = Verdict::pass;
      r.curve.dominated_by_identity = Verdict::pass;
      r.curve.notes.push_back("K >= T: static comparator class, certification reduces to sublinearity");
    } else {
      try {
        r.curve = fit_response(r.sweep, options.fit);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::invalid_input) throw;
        r.curve.notes.push_back(e.what());
      }
    }
    bool horizons_complete = true;
    for (const auto& p : horizons[k]) horizons_complete = horizons_complete && !p.regrets.empty();
    if (horizons_complete) {
      r.sublinearity = sublinearity_test(horizons[k], options.sublinearity);
    } else {
      r.curve.notes.push_back("a horizon had no completed repetitions");
    }
    r.curve.sublinear_in_T = r.sublinearity.verdict;
    r.certified = r.curve.sublinear_in_T == Verdict::pass &&
                  r.curve.strictly_concave_in_V == Verdict::pass &&
                  r.curve.dominated_by_identity == Verdict::pass;
    if (r.certified && !out.order) out.order = r.K;
    out.per_K.push_back(std::move(r));
  }
  for (auto& r : out.per_K) r.curve.estimated_order = out.order;

  // Worst-case regret over U^K can only shrink when K grows by a multiple.
  for (std::size_t k = 0; k + 1 < out.per_K.size(); ++k) {
    const auto& a = out.per_K[k];
    const auto& b = out.per_K[k + 1];
    if (b.K % a.K != 0) continue;
    for (const auto& la : a.sweep.levels) {
      for (const auto& lb : b.sweep.levels) {
        if (la.v_target != lb.v_target || la.reps.size() != lb.reps.size()) continue;
        for (std::size_t i = 0; i < la.reps.size(); ++i) {
          const double tol = 1e-9 * std::max(1.0, std::abs(la.reps[i].r));
          if (lb.reps[i].r > la.reps[i].r + tol) out.regret_monotone_in_K = false;
        }
      }
    }
  }

  if (out.order) {
    out.summary = "certified at K*=" + std::to_string(*out.order);
  } else {
    out.summary = "not certified up to K_max=" + std::to_string(K_grid.back());
  }
  return out;
}

CertificationResult certify_order(const SweepPlan& sweep_plan, const HorizonPlan& horizon_plan,
                                  const LearnerFactory& learner, std::string_view learner_id,
                                  std::span<const std::size_t> K_grid,
                                  const CertifyOptions& options) {
  if (!std::is_sorted(K_grid.begin(), K_grid.end()) || K_grid.empty()) {
    fail(ErrorCode::invalid_input, "certify: K grid must be nonempty and sorted ascending");
  }
  auto sweeps = volatility_sweep(sweep_plan, learner, learner_id, K_grid);
  const auto horizons = horizon_sweep(horizon_plan, learner, K_grid);
  return certify_from_data(learner_id, K_grid, std::move(sweeps), horizons, options);
}

}  // namespace antifrag::certify
