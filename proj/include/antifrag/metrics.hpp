#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "antifrag/core.hpp"

namespace antifrag::metrics {

enum class PathMetric { euclid, sq_euclid };

enum class VariabilityMethod { exact, grid };

/// Path-length and temporal-variability measures of one trace. Sets over which
/// the temporal-variability maxima are taken are the action space itself.
struct VariabilityReport {
  double path_length = 0.0;
  double temporal_variability_f = 0.0;
  double temporal_variability_g = 0.0;
  VariabilityMethod method = VariabilityMethod::exact;
  std::size_t grid_resolution = 0;  // meaningful when method == grid
};

/// sum_t l_t(a_t) - sum_t l_t(u)
double static_regret(std::span<const LossFunction> losses, std::span<const Vec> actions,
                     std::span<const double> u);

/// sum_t l_t(a_t) - sum_t l_t(u_t); every u_t must lie in the space.
double dynamic_regret(const ActionSpace& space, std::span<const LossFunction> losses,
                      std::span<const Vec> actions, const ComparatorSequence& comparators);

/// The member of U^K_T maximizing dynamic regret: block-wise minimizers stitched
/// into a block-constant sequence. A trailing partial block is its own block.
ComparatorSequence best_comparator_in_UK(const ActionSpace& space,
                                         std::span<const LossFunction> losses, std::size_t K);

/// sum_{t>=2} rho(u_t, u_{t-1}).
double path_length(std::span<const Vec> sequence, PathMetric metric = PathMetric::euclid);

struct TemporalVariability {
  double f = 0.0;
  double g = 0.0;
  VariabilityMethod method = VariabilityMethod::exact;
  std::size_t grid_resolution = 0;
};

/// V^f and V^g. Consecutive pairs of the same loss kind have closed forms; mixed
/// pairs fall back to grid sampling (dimension <= 3). Forcing the grid method is
/// allowed for cross-checking.
TemporalVariability temporal_variability(const ActionSpace& space,
                                         std::span<const LossFunction> losses,
                                         VariabilityMethod method = VariabilityMethod::exact,
                                         std::size_t grid_resolution = 200);

/// Full report for a trace; path length is that of the given comparator.
VariabilityReport variability_report(const EnvironmentTrace& trace,
                                     const ComparatorSequence& comparator,
                                     PathMetric metric = PathMetric::euclid);

}  // namespace antifrag::metrics
