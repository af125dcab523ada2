#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "antifrag/core.hpp"

namespace antifrag::learners {

/// What a learner sees after committing to its action for the round.
struct Feedback {
  std::size_t round = 0;  // 1-based
  double loss_value = 0.0;
  std::span<const double> gradient;  // at the played action
  const LossFunction* loss = nullptr;  // full-information handle
  std::optional<int> regime;           // hindsight latent-state reveal
};

/// Full-information online learner. The runner calls act() then observe() once
/// per round; a learner never sees round t's loss before acting on round t.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual std::string_view id() const = 0;
  virtual Vec act() = 0;
  virtual void observe(const Feedback& feedback) = 0;
};

enum class StepSchedule { constant, sqrt_decay };

struct OgdConfig {
  StepSchedule schedule = StepSchedule::sqrt_decay;
  double eta = 0.1;  // constant schedule only
  /// Gradient-norm bound G for eta_t = D / (G sqrt(t)). Unset means the diameter,
  /// which is exact for quadratic targets inside the space.
  std::optional<double> gradient_bound;
};

struct MetaConfig {
  std::optional<std::size_t> num_experts;  // default ceil(log2 T) + 1
  std::optional<double> meta_rate;         // default sqrt(8 ln N / T) / (G^2 / 2)
  std::optional<double> gradient_bound;
};

struct RestartConfig {
  std::size_t period = 256;
  OgdConfig ogd;
};

struct RegimeConfig {
  /// Predict the next regime from a (regime, run-length) -> next-regime count
  /// table instead of repeating the last revealed regime.
  bool transition_table = false;
  std::optional<double> gradient_bound;
};

/// Projected gradient step.
Vec ogd_step(const ActionSpace& space, std::span<const double> iterate,
             std::span<const double> gradient, double eta);

/// eta_t for round t >= 1.
double step_size(const OgdConfig& config, const ActionSpace& space, std::size_t t);

/// Multiplicative-weights update w_i <- w_i exp(-eta l_i), renormalized. If every
/// weight underflows, resets to uniform and warns.
Vec hedge_step(std::span<const double> weights, std::span<const double> losses, double eta_meta);

std::unique_ptr<Learner> make_ogd(const ActionSpace& space, OgdConfig config = {});
std::unique_ptr<Learner> make_greedy(const ActionSpace& space);
std::unique_ptr<Learner> make_meta_expert(const ActionSpace& space, std::size_t horizon,
                                          MetaConfig config = {});
/// window == 0 means unbounded.
std::unique_ptr<Learner> make_windowed(const ActionSpace& space, std::size_t window);
std::unique_ptr<Learner> make_restart(const ActionSpace& space, RestartConfig config = {});
std::unique_ptr<Learner> make_regime(const ActionSpace& space, RegimeConfig config = {});

/// Introspection for the meta-learner (tests and diagnostics).
struct MetaInspector {
  virtual ~MetaInspector() = default;
  virtual std::span<const double> weights() const = 0;
  virtual std::span<const double> expert_steps() const = 0;
};

/// Introspection for the regime learner.
struct RegimeInspector {
  virtual ~RegimeInspector() = default;
  virtual std::optional<int> predicted_regime() const = 0;
  virtual std::size_t memory_slots() const = 0;
};

// ---------------------------------------------------------------------------
// Roster entries
// ---------------------------------------------------------------------------

/// Registered learner types, in listing order.
std::span<const std::string_view> learner_types();

/// A named learner with hyperparameters, as it appears in an experiment config.
struct LearnerSpec {
  std::string type;  // one of learner_types()
  std::string name;  // stable id used in outputs; defaults to type
  OgdConfig ogd;
  MetaConfig meta;
  std::size_t window = 16;
  RestartConfig restart;
  RegimeConfig regime;

  const std::string& id() const { return name.empty() ? type : name; }
};

std::unique_ptr<Learner> make_learner(const LearnerSpec& spec, const ActionSpace& space,
                                      std::size_t horizon);

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

/// Plays the learner through the trace. Latent states, when the trace carries
/// them, are revealed after each round. Throws ErrorCode::aborted if the learner
/// produces an infeasible or non-finite action, or if it aborts itself.
RunRecord run(Learner& learner, const EnvironmentTrace& trace);

}  // namespace antifrag::learners
