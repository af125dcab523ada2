#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "antifrag/core.hpp"
#include "antifrag/learners.hpp"

namespace antifrag::certify {

enum class Verdict { pass, fail, inconclusive };

std::string_view to_string(Verdict v);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// ---------------------------------------------------------------------------
// Cells: one learner on one trace, scored against U^K for several K.
// ---------------------------------------------------------------------------

struct CellScore {
  std::size_t K = 1;
  double v_path = 0.0;     // path-length of the worst-case member of U^K_T
  double dyn_regret = 0.0; // dynamic regret against it
};

struct CellEvaluation {
  bool complete = false;
  std::string error;  // set when the run aborted
  double v_f = 0.0;
  double v_g = 0.0;
  double static_regret = 0.0;
  double wall_ms = 0.0;
  std::vector<CellScore> scores;  // one per requested K, in request order
};

/// Runs the learner on the trace and scores it. Aborted runs return
/// complete == false with the diagnostic in error; other errors propagate.
CellEvaluation evaluate_cell(const EnvironmentTrace& trace, learners::Learner& learner,
                             std::span<const std::size_t> K_grid,
                             RunRecord* record_out = nullptr);

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct RepSample {
  double v = 0.0;  // realized path-length
  double r = 0.0;  // worst-case dynamic regret
};

struct SweepLevel {
  double v_target = 0.0;
  std::vector<RepSample> reps;  // completed repetitions only
  std::size_t incomplete = 0;
  double v_mean = 0.0, v_sd = 0.0;
  double r_mean = 0.0, r_sd = 0.0;

  std::size_t n() const noexcept { return reps.size(); }
};

struct SweepResult {
  std::string family;
  std::string learner_id;
  std::size_t K = 1;
  std::size_t horizon = 0;
  std::vector<SweepLevel> levels;

  /// Recomputes level summaries and sorts levels by realized mean volatility.
  void finalize();
};

/// Everything needed to regenerate the environments of a sweep.
struct SweepPlan {
  EnvSpec base;  // family and structural parameters; horizon and volatility are overridden
  ActionSpace space;
  std::vector<double> levels;  // target volatilities
  std::size_t reps = 10;
  std::size_t horizon = 1024;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

using LearnerFactory = std::function<std::unique_ptr<learners::Learner>(std::size_t horizon)>;

/// Seed of the environment for (level, rep); shared by every learner and K.
std::uint64_t cell_seed(std::uint64_t master, std::string_view phase, std::size_t level,
                        std::size_t rep);

/// One SweepResult per K in K_grid (same runs, scored against each U^K).
std::vector<SweepResult> volatility_sweep(const SweepPlan& plan, const LearnerFactory& learner,
                                          std::string_view learner_id,
                                          std::span<const std::size_t> K_grid);

SweepResult volatility_sweep(const SweepPlan& plan, const LearnerFactory& learner,
                             std::string_view learner_id, std::size_t K);

/// Environment of sweep cell (level, rep).
EnvironmentTrace sweep_environment(const SweepPlan& plan, std::size_t level, std::size_t rep);

/// Groups evaluated cells (row-major over level, rep) into one SweepResult per K.
std::vector<SweepResult> assemble_sweeps(const SweepPlan& plan, std::string_view learner_id,
                                         std::span<const std::size_t> K_grid,
                                         std::span<const CellEvaluation> cells);

// ---------------------------------------------------------------------------
// Response fitting
// ---------------------------------------------------------------------------

struct FitOptions {
  std::size_t bootstrap_draws = 1000;
  std::uint64_t seed = 0;
  double domination_scale = 1.0;
  std::size_t min_reps = 10;
  std::size_t min_levels = 5;
};

struct ResponseCurve {
  // Power law log R = log c + beta log V on level means.
  double c = 0.0;
  double beta = 0.0;
  Interval c_ci;
  Interval beta_ci;
  std::vector<std::size_t> log_fit_levels;  // indices of levels used in the log fit

  // Level means (sorted by realized volatility) and the concave nondecreasing fit.
  Vec v_levels;
  Vec r_levels;
  Vec concave_fit;

  // Largest second divided difference of the level means (convexity) and the
  // Bonferroni-corrected bootstrap noise band at that position.
  double max_positive_second_difference = 0.0;
  double second_difference_band = 0.0;
  bool convex_kink = false;

  // Slope lost by the concave fit between its first and last segments.
  double curvature = 0.0;
  Interval curvature_ci;

  Verdict sublinear_in_T = Verdict::inconclusive;
  Verdict strictly_concave_in_V = Verdict::inconclusive;
  Verdict dominated_by_identity = Verdict::inconclusive;
  std::optional<std::size_t> estimated_order;

  Interval tested_range;  // realized volatility range covered
  std::vector<std::string> notes;
};

/// Least-squares fit over points sorted by x that is concave and nondecreasing.
Vec concave_nondecreasing_fit(std::span<const double> x, std::span<const double> y);

/// Ordinary least-squares slope and intercept of y on x.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};
LineFit least_squares(std::span<const double> x, std::span<const double> y);

/// Throws invalid_input for a degenerate sweep (zero realized volatility everywhere).
ResponseCurve fit_response(const SweepResult& sweep, const FitOptions& options = {});

// ---------------------------------------------------------------------------
// Sublinearity in T
// ---------------------------------------------------------------------------

struct HorizonPoint {
  std::size_t horizon = 0;
  Vec regrets;  // one per repetition
};

struct SublinearityOptions {
  double delta = 0.05;
  std::size_t bootstrap_draws = 1000;
  std::uint64_t seed = 0;
};

struct SublinearityResult {
  double slope = 0.0;
  Interval ci;
  Verdict verdict = Verdict::inconclusive;
  bool shifted = false;  // nonpositive regret forced the R + |min| + 1 shift
  double shift = 0.0;
  Vec horizons;
  Vec mean_regret;
};

/// Slope of log mean regret against log T with a bootstrap interval; passes iff
/// the upper bound is below 1 - delta. Needs at least three horizons.
SublinearityResult sublinearity_test(std::span<const HorizonPoint> points,
                                     const SublinearityOptions& options = {});

struct HorizonPlan {
  EnvSpec base;
  ActionSpace space;
  std::vector<std::size_t> horizons{1024, 4096, 16384};
  double volatility_rate = 0.0;  // target volatility = rate * T
  std::size_t reps = 10;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

/// Environment of horizon cell (horizon index, rep).
EnvironmentTrace horizon_environment(const HorizonPlan& plan, std::size_t horizon_index,
                                     std::size_t rep);

/// Groups evaluated cells (row-major over horizon, rep) into per-K horizon points.
std::vector<std::vector<HorizonPoint>> assemble_horizons(const HorizonPlan& plan,
                                                         std::span<const std::size_t> K_grid,
                                                         std::span<const CellEvaluation> cells);

/// Per K in K_grid: regrets at every horizon.
std::vector<std::vector<HorizonPoint>> horizon_sweep(const HorizonPlan& plan,
                                                     const LearnerFactory& learner,
                                                     std::span<const std::size_t> K_grid);

// ---------------------------------------------------------------------------
// Order-K certification
// ---------------------------------------------------------------------------

struct CertifyOptions {
  FitOptions fit;
  SublinearityOptions sublinearity;
};

struct OrderResult {
  std::size_t K = 1;
  SweepResult sweep;
  ResponseCurve curve;
  SublinearityResult sublinearity;
  bool certified = false;
};

struct CertificationResult {
  std::string learner_id;
  std::optional<std::size_t> order;  // smallest certified K
  std::vector<OrderResult> per_K;
  /// Worst-case regret never increases along K_grid steps where K divides the next K.
  bool regret_monotone_in_K = true;
  std::string summary;
};

/// Runs sweep + fit + sublinearity for every K; K* is the smallest K passing all three.
CertificationResult certify_order(const SweepPlan& sweep_plan, const HorizonPlan& horizon_plan,
                                  const LearnerFactory& learner, std::string_view learner_id,
                                  std::span<const std::size_t> K_grid,
                                  const CertifyOptions& options = {});

/// Assembles a certification from already computed sweeps and horizon points
/// (one entry per K, same order as K_grid).
CertificationResult certify_from_data(std::string_view learner_id,
                                      std::span<const std::size_t> K_grid,
                                      std::vector<SweepResult> sweeps,
                                      std::span<const std::vector<HorizonPoint>> horizons,
                                      const CertifyOptions& options = {});

}  // namespace antifrag::certify
