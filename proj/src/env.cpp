#include "antifrag/env.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>

#include "antifrag/metrics.hpp"

namespace antifrag::env {

namespace {

std::string make_env_id(const EnvSpec& spec) {
  std::uint64_t h = fnv1a64(to_string(spec.family));
  auto fold = [&h](std::uint64_t v) { h = mix64(h ^ v); };
  fold(spec.horizon);
  fold(std::bit_cast<std::uint64_t>(spec.target_volatility));
  fold(spec.block_size);
  fold(spec.num_states);
  fold(spec.seed);
  fold(std::bit_cast<std::uint64_t>(spec.noise_sd));
  fold(spec.eps_gap ? std::bit_cast<std::uint64_t>(*spec.eps_gap) : 0);
  fold(spec.jitter ? 1 : 0);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(to_string(spec.family)) + "-" + buf;
}

EnvironmentTrace start_trace(const EnvSpec& spec, const ActionSpace& space) {
  spec.validate();
  EnvironmentTrace trace(space);
  trace.spec = spec;
  trace.env_id = make_env_id(spec);
  trace.losses.reserve(spec.horizon);
  return trace;
}

// Emits one quadratic loss per round from the clean target sequence, adding
// Gaussian observation noise when requested.
void emit_quadratic(EnvironmentTrace& trace, const std::vector<Vec>& targets) {
  Rng noise(split_seed(trace.spec.seed, "noise", 0));
  for (const auto& target : targets) {
    Vec theta = target;
    if (trace.spec.noise_sd > 0.0) {
      for (auto& v : theta) v += trace.spec.noise_sd * noise.normal();
    }
    trace.losses.push_back(LossFunction::quadratic(std::move(theta)));
  }
}

void finish(EnvironmentTrace& trace) {
  trace.validate();
  trace.realized_path_length = metrics::path_length(trace.segment_optima());
}

// Unit direction used for the antipodal constructions.
Vec axis_direction(const ActionSpace& space) {
  Vec e(space.dimension(), 0.0);
  if (space.kind() == SpaceKind::simplex) {
    e[0] = std::sqrt(0.5);
    e[1] = -std::sqrt(0.5);
    return e;
  }
  std::size_t axis = 0;
  if (space.kind() == SpaceKind::box) {
    for (std::size_t i = 1; i < space.dimension(); ++i) {
      if (space.hi()[i] - space.lo()[i] > space.hi()[axis] - space.lo()[axis]) axis = i;
    }
  }
  e[axis] = 1.0;
  return e;
}

Vec offset(const Vec& base, const Vec& dir, double scale) {
  Vec out = base;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale * dir[i];
  return out;
}

std::vector<std::size_t> latent_segments(const EnvSpec& spec, std::size_t multiplier) {
  const std::size_t T = spec.horizon;
  const std::size_t base = multiplier * spec.block_size;
  std::vector<std::size_t> lengths;
  Rng jitter(split_seed(spec.seed, "latent.jitter", multiplier));
  std::size_t used = 0;
  while (used < T) {
    std::size_t len = base;
    if (spec.jitter) {
      const double u = jitter.uniform(-1.0, 1.0);
      len = static_cast<std::size_t>(
          std::max(1.0, std::round(static_cast<double>(base) * (1.0 + 0.25 * u))));
    }
    len = std::min(len, T - used);
    lengths.push_back(len);
    used += len;
  }
  return lengths;
}

std::vector<Vec> latent_targets(const EnvSpec& spec, const ActionSpace& space) {
  Rng rng(split_seed(spec.seed, "latent.targets", 0));
  std::vector<Vec> targets;
  for (std::size_t x = 0; x < spec.num_states; ++x) targets.push_back(space.sample_uniform(rng));
  return targets;
}

double cyclic_path(const std::vector<Vec>& targets, std::size_t switches) {
  const std::size_t X = targets.size();
  double s = 0.0;
  for (std::size_t i = 0; i < switches; ++i) s += distance(targets[i % X], targets[(i + 1) % X]);
  return s;
}

}  // namespace

EnvironmentTrace gen_piecewise(const EnvSpec& spec, const ActionSpace& space) {
  auto trace = start_trace(spec, space);
  const std::size_t T = spec.horizon;
  const std::size_t K = spec.block_size;
  if (K > T) fail(ErrorCode::invalid_spec, "piecewise: block size K exceeds the horizon");
  const std::size_t blocks = (T + K - 1) / K;

  Rng rng(split_seed(spec.seed, "piecewise.targets", 0));
  std::vector<Vec> raw;
  for (std::size_t b = 0; b < blocks; ++b) raw.push_back(space.sample_uniform(rng));
  const double natural = metrics::path_length(raw);
  const double shrink =
      natural > 0.0 ? std::min(1.0, spec.target_volatility / natural) : 1.0;
  const Vec c = space.centroid();

  std::vector<Vec> targets;
  targets.reserve(T);
  for (std::size_t b = 0; b < blocks; ++b) {
    Vec theta(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) theta[i] = c[i] + shrink * (raw[b][i] - c[i]);
    for (std::size_t t = b * K; t < std::min(T, (b + 1) * K); ++t) targets.push_back(theta);
    if (b > 0) trace.switch_times.push_back(b * K + 1);
  }
  emit_quadratic(trace, targets);
  finish(trace);
  return trace;
}

EnvironmentTrace gen_drift(const EnvSpec& spec, const ActionSpace& space) {
  auto trace = start_trace(spec, space);
  const std::size_t T = spec.horizon;
  const double V = spec.target_volatility;
  if (V > static_cast<double>(T) * space.diameter()) {
    fail(ErrorCode::invalid_spec, "drift: target volatility exceeds T * diameter");
  }
  const double step = T > 1 ? V / static_cast<double>(T - 1) : 0.0;

  Rng rng(split_seed(spec.seed, "drift.walk", 0));
  std::vector<Vec> targets;
  targets.reserve(T);
  targets.push_back(space.sample_uniform(rng));
  double walked = 0.0;
  const std::size_t d = space.dimension();
  Vec dir(d);
  for (std::size_t t = 1; t < T; ++t) {
    const Vec& prev = targets.back();
    if (step == 0.0) {
      targets.push_back(prev);
      continue;
    }
    if (d == 1) {
      dir[0] = rng.coin() ? 1.0 : -1.0;
    } else {
      double n = 0.0;
      do {
        for (auto& v : dir) v = rng.normal();
        n = norm(dir);
      } while (n == 0.0);
      for (auto& v : dir) v /= n;
    }
    Vec next = space.project(offset(prev, dir, step));
    walked += distance(next, prev);
    if (next != prev) trace.switch_times.push_back(t + 1);
    targets.push_back(std::move(next));
  }
  trace.clipping = V - walked;
  emit_quadratic(trace, targets);
  finish(trace);
  return trace;
}

EnvironmentTrace gen_besbes_adversarial(const EnvSpec& spec, const ActionSpace& space) {
  auto trace = start_trace(spec, space);
  const std::size_t T = spec.horizon;
  const double V = spec.target_volatility;
  if (!(V > 0.0)) fail(ErrorCode::invalid_spec, "besbes: target volatility must be > 0");
  const double gap = spec.eps_gap.value_or(space.diameter() / 4.0);
  const double batches_wanted = std::max(1.0, std::round(V / gap));
  const double batch_len = std::floor(static_cast<double>(T) / batches_wanted);
  if (batch_len < 1.0) {
    fail(ErrorCode::invalid_spec, "besbes: batch length < 1 (volatility too high for horizon)");
  }
  const auto delta = static_cast<std::size_t>(batch_len);

  const Vec c = space.centroid();
  const Vec e = axis_direction(space);
  const std::array<Vec, 2> candidates = {space.project(offset(c, e, -0.5 * gap)),
                                         space.project(offset(c, e, 0.5 * gap))};
  trace.eps_gap = distance(candidates[0], candidates[1]);

  Rng coins(split_seed(spec.seed, "besbes.coins", 0));
  std::vector<Vec> targets;
  std::vector<int> states;
  targets.reserve(T);
  states.reserve(T);
  int previous = -1;
  for (std::size_t begin = 0; begin < T; begin += delta) {
    const int coin = coins.coin() ? 1 : 0;
    if (previous >= 0 && coin != previous) trace.switch_times.push_back(begin + 1);
    previous = coin;
    for (std::size_t t = begin; t < std::min(T, begin + delta); ++t) {
      targets.push_back(candidates[static_cast<std::size_t>(coin)]);
      states.push_back(coin);
    }
  }
  trace.latent_states = std::move(states);
  emit_quadratic(trace, targets);
  finish(trace);
  return trace;
}

EnvironmentTrace gen_zhang_piecewise(const EnvSpec& spec, const ActionSpace& space) {
  auto trace = start_trace(spec, space);
  const std::size_t T = spec.horizon;
  const double D = space.diameter();
  const auto L = static_cast<std::size_t>(1.0 + std::floor(spec.target_volatility / D));
  if (L > T) fail(ErrorCode::invalid_spec, "zhang: segment count exceeds the horizon");

  Rng rng(split_seed(spec.seed, "zhang.minimizers", 0));
  std::vector<Vec> minimizers;
  minimizers.push_back(space.project(offset(space.centroid(), axis_direction(space), -D / 4.0)));
  for (std::size_t i = 1; i < L; ++i) {
    const Vec& prev = minimizers.back();
    Vec next;
    for (int attempt = 0; attempt < 64; ++attempt) {
      Vec candidate = space.sample_uniform(rng);
      if (distance(candidate, prev) >= D / 2.0) {
        next = std::move(candidate);
        break;
      }
    }
    if (next.empty()) next = space.farthest_point(prev);
    minimizers.push_back(std::move(next));
  }

  std::vector<Vec> targets;
  targets.reserve(T);
  for (std::size_t i = 0; i < L; ++i) {
    const std::size_t begin = i * T / L;
    const std::size_t end = (i + 1) * T / L;
    if (i > 0) trace.switch_times.push_back(begin + 1);
    for (std::size_t t = begin; t < end; ++t) targets.push_back(minimizers[i]);
  }
  emit_quadratic(trace, targets);
  finish(trace);
  return trace;
}

std::size_t latent_dwell_multiplier(const EnvSpec& spec, const ActionSpace& space) {
  spec.validate();
  const auto targets = latent_targets(spec, space);
  const std::size_t T = spec.horizon;
  const std::size_t K = spec.block_size;
  const std::size_t max_m = (T + K - 1) / K;
  for (std::size_t m = 1; m <= max_m; ++m) {
    const auto segments = latent_segments(spec, m);
    if (cyclic_path(targets, segments.size() - 1) <= spec.target_volatility) return m;
  }
  return max_m;
}

EnvironmentTrace gen_latent_regime(const EnvSpec& spec, const ActionSpace& space) {
  auto trace = start_trace(spec, space);
  const auto targets = latent_targets(spec, space);
  const std::size_t X = spec.num_states;
  const std::size_t m = latent_dwell_multiplier(spec, space);
  const auto segments = latent_segments(spec, m);

  std::vector<Vec> per_round;
  std::vector<int> states;
  per_round.reserve(spec.horizon);
  states.reserve(spec.horizon);
  std::size_t t = 0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const std::size_t regime = i % X;
    if (i > 0 && X > 1) trace.switch_times.push_back(t + 1);
    for (std::size_t k = 0; k < segments[i]; ++k, ++t) {
      per_round.push_back(targets[regime]);
      states.push_back(static_cast<int>(regime));
    }
  }
  trace.latent_states = std::move(states);
  emit_quadratic(trace, per_round);
  finish(trace);
  return trace;
}

EnvironmentTrace generate(const EnvSpec& spec, const ActionSpace& space) {
  switch (spec.family) {
    case EnvFamily::piecewise: return gen_piecewise(spec, space);
    case EnvFamily::drift: return gen_drift(spec, space);
    case EnvFamily::besbes_adversarial: return gen_besbes_adversarial(spec, space);
    case EnvFamily::zhang_piecewise: return gen_zhang_piecewise(spec, space);
    case EnvFamily::latent_regime: return gen_latent_regime(spec, space);
  }
  fail(ErrorCode::invalid_spec, "unknown environment family");
}

}  // namespace antifrag::env
