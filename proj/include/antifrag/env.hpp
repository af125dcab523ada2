#pragma once

#include "antifrag/core.hpp"

namespace antifrag::env {

// Generators are pure functions of (spec, space). All randomness derives from
// spec.seed through split_seed, one stream per purpose.
//
// Every generator records switch_times (segment boundaries of the loss
// minimizer) and realized_path_length, the path-length of the per-segment
// minimizers of the emitted losses.

/// Quadratic losses, target constant on blocks of K. Block targets are uniform
/// draws from the space, shrunk toward the centroid just enough that the
/// per-block path-length does not exceed target_volatility (no shrinking when
/// there is a single block).
EnvironmentTrace gen_piecewise(const EnvSpec& spec, const ActionSpace& space);

/// Projected random walk of the target with step target_volatility / (T - 1).
EnvironmentTrace gen_drift(const EnvSpec& spec, const ActionSpace& space);

/// Batches of length floor(T / round(V / eps)); each batch's target is one of
/// two antipodal candidates around the centroid chosen by a fair coin.
EnvironmentTrace gen_besbes_adversarial(const EnvSpec& spec, const ActionSpace& space);

/// L = 1 + floor(V / diameter) near-equal segments; each segment minimizer is at
/// least diameter / 2 away from the previous one.
EnvironmentTrace gen_zhang_piecewise(const EnvSpec& spec, const ActionSpace& space);

/// X recurring regimes visited cyclically. Regimes switch every m*K rounds with m
/// the smallest multiplier whose path-length stays within target_volatility, so
/// a large budget switches every K rounds and a zero budget never switches.
EnvironmentTrace gen_latent_regime(const EnvSpec& spec, const ActionSpace& space);

EnvironmentTrace generate(const EnvSpec& spec, const ActionSpace& space);

/// Dwell multiplier chosen by gen_latent_regime (exposed for tests).
std::size_t latent_dwell_multiplier(const EnvSpec& spec, const ActionSpace& space);

}  // namespace antifrag::env
