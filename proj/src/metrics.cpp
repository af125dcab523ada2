#include "antifrag/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace antifrag::metrics {

namespace {

void require_same_length(std::size_t losses, std::size_t actions) {
  if (losses != actions) {
    fail(ErrorCode::invalid_input, "regret: " + std::to_string(losses) + " losses but " +
                                       std::to_string(actions) + " actions");
  }
}

double learner_loss(std::span<const LossFunction> losses, std::span<const Vec> actions) {
  double s = 0.0;
  for (std::size_t t = 0; t < losses.size(); ++t) s += losses[t].value(actions[t]);
  return s;
}

// |l_t(a) - l_{t-1}(a)| and |grad l_t(a) - grad l_{t-1}(a)|^2 maximized over a in the set.
struct PairSup {
  double f;
  double g;
};

PairSup exact_pair(const ActionSpace& space, const LossFunction& prev, const LossFunction& cur) {
  const std::size_t d = space.dimension();
  Vec w(d);
  double b = 0.0;
  if (cur.kind() == LossKind::quadratic) {
    // 1/2|a - c|^2 - 1/2|a - p|^2 = <p - c, a> + (|c|^2 - |p|^2) / 2
    const auto& c = cur.param();
    const auto& p = prev.param();
    for (std::size_t i = 0; i < d; ++i) w[i] = p[i] - c[i];
    b = 0.5 * (dot(c, c) - dot(p, p));
  } else {
    for (std::size_t i = 0; i < d; ++i) w[i] = cur.param()[i] - prev.param()[i];
  }
  const double hi = space.support(w) + b;
  const double lo = space.support_min(w) + b;
  return {std::max(std::abs(hi), std::abs(lo)), dot(w, w)};
}

PairSup grid_pair(const ActionSpace& space, const LossFunction& prev, const LossFunction& cur,
                  std::size_t resolution) {
  PairSup out{0.0, 0.0};
  for_each_grid_point(space, resolution, [&](std::span<const double> a) {
    out.f = std::max(out.f, std::abs(cur.value(a) - prev.value(a)));
    out.g = std::max(out.g, squared_distance(cur.grad(a), prev.grad(a)));
  });
  return out;
}

}  // namespace

double static_regret(std::span<const LossFunction> losses, std::span<const Vec> actions,
                     std::span<const double> u) {
  require_same_length(losses.size(), actions.size());
  double s = learner_loss(losses, actions);
  for (const auto& l : losses) s -= l.value(u);
  return s;
}

double dynamic_regret(const ActionSpace& space, std::span<const LossFunction> losses,
                      std::span<const Vec> actions, const ComparatorSequence& comparators) {
  require_same_length(losses.size(), actions.size());
  require_same_length(losses.size(), comparators.size());
  comparators.validate(space);
  double s = learner_loss(losses, actions);
  for (std::size_t t = 0; t < losses.size(); ++t) s -= losses[t].value(comparators.actions[t]);
  return s;
}

ComparatorSequence best_comparator_in_UK(const ActionSpace& space,
                                         std::span<const LossFunction> losses, std::size_t K) {
  if (K < 1) fail(ErrorCode::invalid_input, "best_comparator_in_UK: K must be >= 1");
  ComparatorSequence out;
  out.block_size = K;
  out.actions.reserve(losses.size());
  for (std::size_t begin = 0; begin < losses.size(); begin += K) {
    const std::size_t len = std::min(K, losses.size() - begin);
    const Vec u = block_argmin(space, losses.subspan(begin, len));
    for (std::size_t t = 0; t < len; ++t) out.actions.push_back(u);
  }
  return out;
}

double path_length(std::span<const Vec> sequence, PathMetric metric) {
  double s = 0.0;
  for (std::size_t t = 1; t < sequence.size(); ++t) {
    const double sq = squared_distance(sequence[t], sequence[t - 1]);
    s += metric == PathMetric::euclid ? std::sqrt(sq) : sq;
  }
  return s;
}

TemporalVariability temporal_variability(const ActionSpace& space,
                                         std::span<const LossFunction> losses,
                                         VariabilityMethod method, std::size_t grid_resolution) {
  TemporalVariability out;
  out.method = method;
  if (method == VariabilityMethod::grid) out.grid_resolution = grid_resolution;
  for (std::size_t t = 1; t < losses.size(); ++t) {
    const auto& prev = losses[t - 1];
    const auto& cur = losses[t];
    PairSup sup{};
    if (method == VariabilityMethod::exact && prev.kind() == cur.kind()) {
      sup = exact_pair(space, prev, cur);
    } else {
      if (space.dimension() > 3) {
        fail(ErrorCode::unsupported,
             "temporal variability: mixed loss kinds need the grid path, which supports d <= 3");
      }
      sup = grid_pair(space, prev, cur, grid_resolution);
      out.method = VariabilityMethod::grid;
      out.grid_resolution = grid_resolution;
    }
    out.f += sup.f;
    out.g += sup.g;
  }
  return out;
}

VariabilityReport variability_report(const EnvironmentTrace& trace,
                                     const ComparatorSequence& comparator, PathMetric metric) {
  const auto tv = temporal_variability(trace.space, trace.losses);
  VariabilityReport r;
  r.path_length = path_length(comparator.actions, metric);
  r.temporal_variability_f = tv.f;
  r.temporal_variability_g = tv.g;
  r.method = tv.method;
  r.grid_resolution = tv.grid_resolution;
  return r;
}

}  // namespace antifrag::metrics
