#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "antifrag/error.hpp"
#include "antifrag/rng.hpp"

namespace antifrag {

using Vec = std::vector<double>;

/// Relative tolerance used for exact-identity assertions.
inline constexpr double kRelTol = 1e-9;

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
double distance(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);
bool all_finite(std::span<const double> a);

// ---------------------------------------------------------------------------
// Action space
// ---------------------------------------------------------------------------

enum class SpaceKind { box, ball, simplex };

std::string_view to_string(SpaceKind kind);

/// Bounded convex decision set. Immutable once built; the factories validate.
class ActionSpace {
 public:
  static ActionSpace box(Vec lo, Vec hi);
  static ActionSpace unit_box(std::size_t dimension, double lo = -1.0, double hi = 1.0);
  static ActionSpace ball(Vec center, double radius);
  static ActionSpace simplex(std::size_t dimension);

  SpaceKind kind() const noexcept { return kind_; }
  std::size_t dimension() const noexcept { return dimension_; }
  const Vec& lo() const noexcept { return lo_; }
  const Vec& hi() const noexcept { return hi_; }
  const Vec& center() const noexcept { return center_; }
  double radius() const noexcept { return radius_; }

  double diameter() const noexcept { return diameter_; }
  Vec centroid() const { return center_; }

  bool contains(std::span<const double> x, double tol = 1e-9) const;

  /// Euclidean projection. Throws invalid_input on non-finite or wrongly sized x.
  Vec project(std::span<const double> x) const;

  /// argmin over the set of <w, a>. Ties resolve toward the centroid.
  Vec linear_argmin(std::span<const double> w) const;

  /// max and min of <w, a> over the set.
  double support(std::span<const double> w) const;
  double support_min(std::span<const double> w) const;

  /// max over the set of |a - x|^2, i.e. the squared distance to the farthest point.
  double max_squared_distance(std::span<const double> x) const;

  /// Point of the set farthest from x.
  Vec farthest_point(std::span<const double> x) const;

  /// A sample from the uniform distribution on the set.
  Vec sample_uniform(Rng& rng) const;

  /// Axis-aligned bounding box.
  Vec bounding_lo() const;
  Vec bounding_hi() const;

 private:
  ActionSpace() = default;
  void check_dim(std::span<const double> x, std::string_view what) const;

  SpaceKind kind_ = SpaceKind::box;
  std::size_t dimension_ = 0;
  Vec lo_, hi_;      // box
  Vec center_;       // all kinds: the centroid
  double radius_ = 0.0;
  double diameter_ = 0.0;
};

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

enum class LossKind { quadratic, linear };

std::string_view to_string(LossKind kind);

/// Per-round convex loss: quadratic tracking 1/2 |a - target|^2 or linear <g, a>.
class LossFunction {
 public:
  static LossFunction quadratic(Vec target);
  static LossFunction linear(Vec gradient);

  LossKind kind() const noexcept { return kind_; }
  std::size_t dimension() const noexcept { return param_.size(); }
  /// Target for quadratic losses, gradient vector for linear losses.
  const Vec& param() const noexcept { return param_; }

  double value(std::span<const double> a) const;
  Vec grad(std::span<const double> a) const;

 private:
  LossFunction(LossKind kind, Vec param) : kind_(kind), param_(std::move(param)) {}

  LossKind kind_;
  Vec param_;
};

using LossSpan = std::span<const LossFunction>;

// ---------------------------------------------------------------------------
// Environment trace
// ---------------------------------------------------------------------------

enum class EnvFamily { piecewise, drift, besbes_adversarial, zhang_piecewise, latent_regime };

std::string_view to_string(EnvFamily family);
std::optional<EnvFamily> parse_env_family(std::string_view name);
std::span<const EnvFamily> all_env_families();

/// Generation request. The stress knob is target_volatility in path-length units.
struct EnvSpec {
  EnvFamily family = EnvFamily::piecewise;
  std::size_t horizon = 1;
  double target_volatility = 0.0;
  std::size_t block_size = 1;   // K for piecewise / latent_regime
  std::size_t num_states = 2;   // X for latent_regime
  std::uint64_t seed = 0;
  /// Std-dev of i.i.d. Gaussian noise added to every quadratic target (0 = noiseless).
  double noise_sd = 0.0;
  /// Besbes candidate gap; unset means diameter / 4.
  std::optional<double> eps_gap;
  /// latent_regime: perturb dwell lengths by up to +-25%.
  bool jitter = false;

  void validate() const;
};

struct EnvironmentTrace {
  explicit EnvironmentTrace(ActionSpace s) : space(std::move(s)) {}

  std::string env_id;
  EnvSpec spec;
  ActionSpace space;
  std::vector<LossFunction> losses;
  std::optional<std::vector<int>> latent_states;
  /// 1-based rounds at which the loss minimizer changes segment; sorted, in [2, T].
  std::vector<std::size_t> switch_times;
  /// Path-length of the per-segment minimizer sequence (segments delimited by switch_times).
  double realized_path_length = 0.0;
  /// drift: target minus realized walk length lost to projection.
  double clipping = 0.0;
  /// besbes: gap actually used between the two candidates.
  double eps_gap = 0.0;

  std::size_t horizon() const noexcept { return losses.size(); }

  /// Throws invalid_input if an invariant is violated.
  void validate() const;

  /// Per-round minimizer sequence that is constant on the segments delimited by switch_times.
  std::vector<Vec> segment_optima() const;
};

// ---------------------------------------------------------------------------
// Comparators and run records
// ---------------------------------------------------------------------------

struct ComparatorSequence {
  std::vector<Vec> actions;
  std::optional<std::size_t> block_size;

  std::size_t size() const noexcept { return actions.size(); }

  /// Throws invalid_input unless every action is feasible and, when block_size is
  /// set, the sequence is constant on each block ((i-1)K, iK].
  void validate(const ActionSpace& space) const;
  bool is_block_constant(std::size_t K) const;
};

struct RunRecord {
  std::string learner_id;
  std::string env_id;
  std::uint64_t seed = 0;
  std::vector<Vec> actions;
  Vec losses;
  Vec cumulative;

  void push(Vec action, double loss);
  double total_loss() const noexcept { return cumulative.empty() ? 0.0 : cumulative.back(); }
};

// ---------------------------------------------------------------------------
// Geometry operations
// ---------------------------------------------------------------------------

/// Euclidean projection onto the space.
inline Vec project(const ActionSpace& space, std::span<const double> x) { return space.project(x); }

/// Minimizer of the summed losses over the space.
/// Quadratic terms: projection of (sum targets - sum linear gradients) / #quadratic.
/// Purely linear: the linear-minimization oracle on the summed gradient.
Vec block_argmin(const ActionSpace& space, LossSpan losses);

/// Calls fn(point) for every point of a regular grid over the space; resolution
/// cells per axis. Simplex grids live on the simplex itself (last coordinate
/// is implied). Requires dimension <= 3.
void for_each_grid_point(const ActionSpace& space, std::size_t resolution,
                         const std::function<void(std::span<const double>)>& fn);

/// Exhaustive minimizer over the grid. Accuracy is about diameter * d / resolution.
/// Ties keep the lowest grid index.
Vec grid_oracle_argmin(const ActionSpace& space, LossSpan losses, std::size_t resolution);

double total_value(LossSpan losses, std::span<const double> a);

}  // namespace antifrag
