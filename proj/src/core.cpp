#include "antifrag/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

namespace antifrag {

namespace {

WarningSink g_warning_sink = nullptr;

}  // namespace

void set_warning_sink(WarningSink sink) { g_warning_sink = sink; }

void warn(const std::string& message) {
  if (g_warning_sink != nullptr) {
    g_warning_sink(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

std::string_view to_string(SpaceKind kind) {
  switch (kind) {
    case SpaceKind::box: return "box";
    case SpaceKind::ball: return "ball";
    case SpaceKind::simplex: return "simplex";
  }
  return "?";
}

std::string_view to_string(LossKind kind) {
  return kind == LossKind::quadratic ? "quadratic" : "linear";
}

// ---------------------------------------------------------------------------
// ActionSpace
// ---------------------------------------------------------------------------

ActionSpace ActionSpace::box(Vec lo, Vec hi) {
  if (lo.empty() || lo.size() != hi.size()) {
    fail(ErrorCode::invalid_input, "box bounds must be nonempty and of equal length");
  }
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!std::isfinite(lo[i]) || !std::isfinite(hi[i]) || !(lo[i] < hi[i])) {
      fail(ErrorCode::invalid_input, "box bounds must be finite with lo < hi on every axis");
    }
  }
  ActionSpace s;
  s.kind_ = SpaceKind::box;
  s.dimension_ = lo.size();
  s.center_.resize(lo.size());
  for (std::size_t i = 0; i < lo.size(); ++i) s.center_[i] = 0.5 * (lo[i] + hi[i]);
  s.diameter_ = distance(lo, hi);
  s.lo_ = std::move(lo);
  s.hi_ = std::move(hi);
  return s;
}

ActionSpace ActionSpace::unit_box(std::size_t dimension, double lo, double hi) {
  return box(Vec(dimension, lo), Vec(dimension, hi));
}

ActionSpace ActionSpace::ball(Vec center, double radius) {
  if (center.empty() || !all_finite(center)) {
    fail(ErrorCode::invalid_input, "ball center must be a nonempty finite vector");
  }
  if (!std::isfinite(radius) || !(radius > 0.0)) {
    fail(ErrorCode::invalid_input, "ball radius must be positive and finite");
  }
  ActionSpace s;
  s.kind_ = SpaceKind::ball;
  s.dimension_ = center.size();
  s.center_ = std::move(center);
  s.radius_ = radius;
  s.diameter_ = 2.0 * radius;
  return s;
}

ActionSpace ActionSpace::simplex(std::size_t dimension) {
  if (dimension < 2) fail(ErrorCode::invalid_input, "simplex needs dimension >= 2");
  ActionSpace s;
  s.kind_ = SpaceKind::simplex;
  s.dimension_ = dimension;
  s.center_.assign(dimension, 1.0 / static_cast<double>(dimension));
  s.diameter_ = std::sqrt(2.0);
  return s;
}

void ActionSpace::check_dim(std::span<const double> x, std::string_view what) const {
  if (x.size() != dimension_) {
    fail(ErrorCode::invalid_input, std::string(what) + ": dimension mismatch (got " +
                                       std::to_string(x.size()) + ", expected " +
                                       std::to_string(dimension_) + ")");
  }
}

bool ActionSpace::contains(std::span<const double> x, double tol) const {
  if (x.size() != dimension_ || !all_finite(x)) return false;
  switch (kind_) {
    case SpaceKind::box:
      for (std::size_t i = 0; i < dimension_; ++i) {
        if (x[i] < lo_[i] - tol || x[i] > hi_[i] + tol) return false;
      }
      return true;
    case SpaceKind::ball:
      return distance(x, center_) <= radius_ * (1.0 + tol) + tol;
    case SpaceKind::simplex: {
      double sum = 0.0;
      for (double v : x) {
        if (v < -tol) return false;
        sum += v;
      }
      return std::abs(sum - 1.0) <= tol * static_cast<double>(dimension_);
    }
  }
  return false;
}

Vec ActionSpace::project(std::span<const double> x) const {
  check_dim(x, "project");
  if (!all_finite(x)) fail(ErrorCode::invalid_input, "project: non-finite input");
  Vec out(x.begin(), x.end());
  switch (kind_) {
    case SpaceKind::box:
      for (std::size_t i = 0; i < dimension_; ++i) out[i] = std::clamp(out[i], lo_[i], hi_[i]);
      break;
    case SpaceKind::ball: {
      const double r = distance(x, center_);
      if (r > radius_) {
        const double scale = radius_ / r;
        for (std::size_t i = 0; i < dimension_; ++i) {
          out[i] = center_[i] + (x[i] - center_[i]) * scale;
        }
      }
      break;
    }
    case SpaceKind::simplex: {
      // Sort-and-threshold: find tau with sum(max(x - tau, 0)) = 1.
      Vec sorted(x.begin(), x.end());
      std::sort(sorted.begin(), sorted.end(), std::greater<>());
      double cumsum = 0.0;
      double tau = 0.0;
      for (std::size_t k = 0; k < dimension_; ++k) {
        cumsum += sorted[k];
        const double candidate = (cumsum - 1.0) / static_cast<double>(k + 1);
        if (sorted[k] - candidate > 0.0) tau = candidate;
      }
      for (auto& v : out) v = std::max(v - tau, 0.0);
      break;
    }
  }
  return out;
}

Vec ActionSpace::linear_argmin(std::span<const double> w) const {
  check_dim(w, "linear_argmin");
  if (!all_finite(w)) fail(ErrorCode::invalid_input, "linear_argmin: non-finite direction");
  Vec out(dimension_);
  switch (kind_) {
    case SpaceKind::box:
      for (std::size_t i = 0; i < dimension_; ++i) {
        out[i] = w[i] > 0.0 ? lo_[i] : (w[i] < 0.0 ? hi_[i] : center_[i]);
      }
      break;
    case SpaceKind::ball: {
      const double n = norm(w);
      for (std::size_t i = 0; i < dimension_; ++i) {
        out[i] = n > 0.0 ? center_[i] - radius_ * w[i] / n : center_[i];
      }
      break;
    }
    case SpaceKind::simplex: {
      // The minimizing face is the hull of the tied minimal vertices; its
      // point closest to the centroid is their barycenter.
      const double m = *std::min_element(w.begin(), w.end());
      const auto ties = std::count(w.begin(), w.end(), m);
      for (std::size_t i = 0; i < dimension_; ++i) {
        out[i] = w[i] == m ? 1.0 / static_cast<double>(ties) : 0.0;
      }
      break;
    }
  }
  return out;
}

double ActionSpace::support(std::span<const double> w) const {
  check_dim(w, "support");
  switch (kind_) {
    case SpaceKind::box: {
      double s = 0.0;
      for (std::size_t i = 0; i < dimension_; ++i) s += std::max(w[i] * lo_[i], w[i] * hi_[i]);
      return s;
    }
    case SpaceKind::ball:
      return dot(w, center_) + radius_ * norm(w);
    case SpaceKind::simplex:
      return *std::max_element(w.begin(), w.end());
  }
  return 0.0;
}

double ActionSpace::support_min(std::span<const double> w) const {
  Vec neg(w.begin(), w.end());
  for (auto& v : neg) v = -v;
  return -support(neg);
}

Vec ActionSpace::farthest_point(std::span<const double> x) const {
  check_dim(x, "farthest_point");
  Vec out(dimension_);
  switch (kind_) {
    case SpaceKind::box:
      for (std::size_t i = 0; i < dimension_; ++i) {
        out[i] = std::abs(x[i] - lo_[i]) >= std::abs(x[i] - hi_[i]) ? lo_[i] : hi_[i];
      }
      break;
    case SpaceKind::ball: {
      const double r = distance(x, center_);
      for (std::size_t i = 0; i < dimension_; ++i) {
        if (r > 0.0) {
          out[i] = center_[i] - radius_ * (x[i] - center_[i]) / r;
        } else {
          out[i] = center_[i] + (i == 0 ? radius_ : 0.0);
        }
      }
      break;
    }
    case SpaceKind::simplex: {
      // |e_i - x|^2 = |x|^2 - 2 x_i + 1: the farthest vertex has the smallest x_i.
      const auto it = std::min_element(x.begin(), x.end());
      std::fill(out.begin(), out.end(), 0.0);
      out[static_cast<std::size_t>(it - x.begin())] = 1.0;
      break;
    }
  }
  return out;
}

double ActionSpace::max_squared_distance(std::span<const double> x) const {
  return squared_distance(farthest_point(x), x);
}

Vec ActionSpace::sample_uniform(Rng& rng) const {
  Vec out(dimension_);
  switch (kind_) {
    case SpaceKind::box:
      for (std::size_t i = 0; i < dimension_; ++i) out[i] = rng.uniform(lo_[i], hi_[i]);
      break;
    case SpaceKind::ball: {
      double n = 0.0;
      do {
        for (auto& v : out) v = rng.normal();
        n = norm(out);
      } while (n == 0.0);
      const double r = radius_ * std::pow(rng.uniform(), 1.0 / static_cast<double>(dimension_));
      for (std::size_t i = 0; i < dimension_; ++i) out[i] = center_[i] + r * out[i] / n;
      break;
    }
    case SpaceKind::simplex: {
      double sum = 0.0;
      for (auto& v : out) {
        v = rng.exponential();
        sum += v;
      }
      for (auto& v : out) v /= sum;
      break;
    }
  }
  return out;
}

Vec ActionSpace::bounding_lo() const {
  switch (kind_) {
    case SpaceKind::box: return lo_;
    case SpaceKind::ball: {
      Vec out = center_;
      for (auto& v : out) v -= radius_;
      return out;
    }
    case SpaceKind::simplex: return Vec(dimension_, 0.0);
  }
  return {};
}

Vec ActionSpace::bounding_hi() const {
  switch (kind_) {
    case SpaceKind::box: return hi_;
    case SpaceKind::ball: {
      Vec out = center_;
      for (auto& v : out) v += radius_;
      return out;
    }
    case SpaceKind::simplex: return Vec(dimension_, 1.0);
  }
  return {};
}

// ---------------------------------------------------------------------------
// LossFunction
// ---------------------------------------------------------------------------

LossFunction LossFunction::quadratic(Vec target) {
  if (target.empty() || !all_finite(target)) {
    fail(ErrorCode::invalid_input, "quadratic loss needs a nonempty finite target");
  }
  return LossFunction(LossKind::quadratic, std::move(target));
}

LossFunction LossFunction::linear(Vec gradient) {
  if (gradient.empty() || !all_finite(gradient)) {
    fail(ErrorCode::invalid_input, "linear loss needs a nonempty finite gradient");
  }
  return LossFunction(LossKind::linear, std::move(gradient));
}

double LossFunction::value(std::span<const double> a) const {
  if (a.size() != param_.size()) fail(ErrorCode::invalid_input, "loss value: dimension mismatch");
  return kind_ == LossKind::quadratic ? 0.5 * squared_distance(a, param_) : dot(param_, a);
}

Vec LossFunction::grad(std::span<const double> a) const {
  if (a.size() != param_.size()) fail(ErrorCode::invalid_input, "loss grad: dimension mismatch");
  if (kind_ == LossKind::linear) return param_;
  Vec g(a.begin(), a.end());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] -= param_[i];
  return g;
}

double total_value(LossSpan losses, std::span<const double> a) {
  double s = 0.0;
  for (const auto& l : losses) s += l.value(a);
  return s;
}

// ---------------------------------------------------------------------------
// Env families
// ---------------------------------------------------------------------------

namespace {

constexpr std::array kFamilies = {EnvFamily::piecewise, EnvFamily::drift,
                                  EnvFamily::besbes_adversarial, EnvFamily::zhang_piecewise,
                                  EnvFamily::latent_regime};

}  // namespace

std::string_view to_string(EnvFamily family) {
  switch (family) {
    case EnvFamily::piecewise: return "piecewise";
    case EnvFamily::drift: return "drift";
    case EnvFamily::besbes_adversarial: return "besbes_adversarial";
    case EnvFamily::zhang_piecewise: return "zhang_piecewise";
    case EnvFamily::latent_regime: return "latent_regime";
  }
  return "?";
}

std::optional<EnvFamily> parse_env_family(std::string_view name) {
  for (auto f : kFamilies) {
    if (to_string(f) == name) return f;
  }
  return std::nullopt;
}

std::span<const EnvFamily> all_env_families() { return kFamilies; }

void EnvSpec::validate() const {
  if (horizon < 1) fail(ErrorCode::invalid_spec, "horizon must be >= 1");
  if (!std::isfinite(target_volatility) || target_volatility < 0.0) {
    fail(ErrorCode::invalid_spec, "target volatility must be finite and >= 0");
  }
  if (block_size < 1) fail(ErrorCode::invalid_spec, "block size K must be >= 1");
  if (num_states < 1) fail(ErrorCode::invalid_spec, "number of latent states must be >= 1");
  if (!std::isfinite(noise_sd) || noise_sd < 0.0) {
    fail(ErrorCode::invalid_spec, "noise_sd must be finite and >= 0");
  }
  if (eps_gap && (!std::isfinite(*eps_gap) || *eps_gap <= 0.0)) {
    fail(ErrorCode::invalid_spec, "eps_gap must be positive");
  }
}

// ---------------------------------------------------------------------------
// Trace / comparator / record
// ---------------------------------------------------------------------------

void EnvironmentTrace::validate() const {
  const std::size_t T = losses.size();
  if (T == 0) fail(ErrorCode::invalid_input, "trace has no losses");
  if (spec.horizon != T) fail(ErrorCode::invalid_input, "trace length differs from its horizon");
  for (const auto& l : losses) {
    if (l.dimension() != space.dimension()) {
      fail(ErrorCode::invalid_input, "trace loss dimension differs from the action space");
    }
  }
  for (std::size_t i = 0; i < switch_times.size(); ++i) {
    if (switch_times[i] < 2 || switch_times[i] > T) {
      fail(ErrorCode::invalid_input, "switch time outside [2, T]");
    }
    if (i > 0 && switch_times[i] <= switch_times[i - 1]) {
      fail(ErrorCode::invalid_input, "switch times must be strictly increasing");
    }
  }
  if (latent_states && latent_states->size() != T) {
    fail(ErrorCode::invalid_input, "latent state sequence length differs from T");
  }
}

std::vector<Vec> EnvironmentTrace::segment_optima() const {
  std::vector<Vec> out;
  out.reserve(losses.size());
  std::size_t begin = 0;  // 0-based start of the current segment
  auto flush = [&](std::size_t end) {
    const Vec u = block_argmin(space, LossSpan(losses).subspan(begin, end - begin));
    for (std::size_t t = begin; t < end; ++t) out.push_back(u);
    begin = end;
  };
  for (std::size_t s : switch_times) flush(s - 1);
  flush(losses.size());
  return out;
}

bool ComparatorSequence::is_block_constant(std::size_t K) const {
  if (K == 0) return false;
  for (std::size_t t = 1; t < actions.size(); ++t) {
    if (t % K != 0 && actions[t] != actions[t - 1]) return false;
  }
  return true;
}

void ComparatorSequence::validate(const ActionSpace& space) const {
  for (std::size_t t = 0; t < actions.size(); ++t) {
    if (!space.contains(actions[t])) {
      fail(ErrorCode::invalid_input, "comparator at round " + std::to_string(t + 1) +
                                         " lies outside the action space");
    }
  }
  if (block_size && !is_block_constant(*block_size)) {
    fail(ErrorCode::invalid_input, "comparator is not constant on blocks of K=" +
                                       std::to_string(*block_size));
  }
}

void RunRecord::push(Vec action, double loss) {
  actions.push_back(std::move(action));
  losses.push_back(loss);
  cumulative.push_back((cumulative.empty() ? 0.0 : cumulative.back()) + loss);
}

// ---------------------------------------------------------------------------
// Argmin operations
// ---------------------------------------------------------------------------

Vec block_argmin(const ActionSpace& space, LossSpan losses) {
  if (losses.empty()) fail(ErrorCode::invalid_input, "block_argmin: empty loss slice");
  const std::size_t d = space.dimension();
  Vec target_sum(d, 0.0);
  Vec linear_sum(d, 0.0);
  std::size_t quadratic_count = 0;
  for (const auto& l : losses) {
    if (l.dimension() != d) fail(ErrorCode::invalid_input, "block_argmin: dimension mismatch");
    auto& acc = l.kind() == LossKind::quadratic ? target_sum : linear_sum;
    for (std::size_t i = 0; i < d; ++i) acc[i] += l.param()[i];
    quadratic_count += l.kind() == LossKind::quadratic ? 1 : 0;
  }
  if (quadratic_count == 0) return space.linear_argmin(linear_sum);
  // sum_q 1/2|a - theta|^2 + <G, a> is minimized over the set at the projection
  // of (sum theta - G) / n_q.
  Vec x(d);
  for (std::size_t i = 0; i < d; ++i) {
    x[i] = (target_sum[i] - linear_sum[i]) / static_cast<double>(quadratic_count);
  }
  return space.project(x);
}

void for_each_grid_point(const ActionSpace& space, std::size_t resolution,
                         const std::function<void(std::span<const double>)>& fn) {
  const std::size_t d = space.dimension();
  if (d > 3) fail(ErrorCode::unsupported, "grid oracle supports dimension <= 3");
  if (resolution < 1) fail(ErrorCode::invalid_input, "grid resolution must be >= 1");
  const double r = static_cast<double>(resolution);
  Vec point(d);

  if (space.kind() == SpaceKind::simplex) {
    // Free coordinates 0..d-2 on the lattice i/resolution; the last is implied.
    std::array<std::size_t, 3> idx{};
    const std::size_t free = d - 1;
    while (true) {
      std::size_t used = 0;
      for (std::size_t k = 0; k < free; ++k) used += idx[k];
      if (used <= resolution) {
        for (std::size_t k = 0; k < free; ++k) point[k] = static_cast<double>(idx[k]) / r;
        point[free] = static_cast<double>(resolution - used) / r;
        fn(point);
      }
      std::size_t k = 0;
      while (k < free && ++idx[k] > resolution) idx[k++] = 0;
      if (k == free) break;
    }
    return;
  }

  const Vec lo = space.bounding_lo();
  const Vec hi = space.bounding_hi();
  std::array<std::size_t, 3> idx{};
  while (true) {
    for (std::size_t k = 0; k < d; ++k) {
      point[k] = lo[k] + (hi[k] - lo[k]) * static_cast<double>(idx[k]) / r;
    }
    if (space.kind() == SpaceKind::box || space.contains(point, 0.0)) fn(point);
    std::size_t k = 0;
    while (k < d && ++idx[k] > resolution) idx[k++] = 0;
    if (k == d) break;
  }
}

Vec grid_oracle_argmin(const ActionSpace& space, LossSpan losses, std::size_t resolution) {
  if (losses.empty()) fail(ErrorCode::invalid_input, "grid oracle: empty loss slice");
  if (space.dimension() > 3) fail(ErrorCode::unsupported, "grid oracle supports dimension <= 3");
  if (resolution < 10) fail(ErrorCode::invalid_input, "grid oracle resolution must be >= 10");
  Vec best;
  double best_value = std::numeric_limits<double>::infinity();
  for_each_grid_point(space, resolution, [&](std::span<const double> p) {
    const double v = total_value(losses, p);
    if (v < best_value) {
      best_value = v;
      best.assign(p.begin(), p.end());
    }
  });
  return best;
}

}  // namespace antifrag
