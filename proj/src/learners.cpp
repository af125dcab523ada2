#include "antifrag/learners.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>

namespace antifrag::learners {

namespace {

double gradient_bound(std::optional<double> configured, const ActionSpace& space) {
  const double G = configured.value_or(space.diameter());
  if (!std::isfinite(G) || G <= 0.0) fail(ErrorCode::invalid_input, "gradient bound must be > 0");
  return G;
}

void require_finite_gradient(std::span<const double> g, std::string_view who, std::size_t round) {
  if (!all_finite(g)) {
    fail(ErrorCode::aborted, std::string(who) + ": non-finite gradient at round " +
                                 std::to_string(round));
  }
}

class Ogd final : public Learner {
 public:
  Ogd(const ActionSpace& space, OgdConfig config, std::string id)
      : space_(space), config_(config), id_(std::move(id)), iterate_(space.centroid()) {
    step_size(config_, space_, 1);  // validates the configuration
  }

  std::string_view id() const override { return id_; }
  Vec act() override { return iterate_; }

  void observe(const Feedback& fb) override {
    require_finite_gradient(fb.gradient, id_, fb.round);
    ++steps_;
    iterate_ = ogd_step(space_, iterate_, fb.gradient, step_size(config_, space_, steps_));
  }

  void reset() {
    iterate_ = space_.centroid();
    steps_ = 0;
  }

 private:
  ActionSpace space_;
  OgdConfig config_;
  std::string id_;
  Vec iterate_;
  std::size_t steps_ = 0;
};

class Restart final : public Learner {
 public:
  Restart(const ActionSpace& space, RestartConfig config)
      : inner_(space, config.ogd, "restart"), period_(config.period) {
    if (period_ < 1) fail(ErrorCode::invalid_input, "restart period must be >= 1");
  }

  std::string_view id() const override { return "restart"; }
  Vec act() override { return inner_.act(); }

  void observe(const Feedback& fb) override {
    inner_.observe(fb);
    if (++since_restart_ == period_) {
      inner_.reset();
      since_restart_ = 0;
    }
  }

 private:
  Ogd inner_;
  std::size_t period_;
  std::size_t since_restart_ = 0;
};

class Greedy final : public Learner {
 public:
  explicit Greedy(const ActionSpace& space) : space_(space), next_(space.centroid()) {}

  std::string_view id() const override { return "greedy"; }
  Vec act() override { return next_; }

  void observe(const Feedback& fb) override {
    next_ = block_argmin(space_, std::span<const LossFunction>(fb.loss, 1));
  }

 private:
  ActionSpace space_;
  Vec next_;
};

// Follows the minimizer of the losses in a sliding window, kept as running sums.
class Windowed final : public Learner {
 public:
  Windowed(const ActionSpace& space, std::size_t window)
      : space_(space),
        window_(window),
        target_sum_(space.dimension(), 0.0),
        linear_sum_(space.dimension(), 0.0) {}

  std::string_view id() const override { return "windowed"; }

  Vec act() override {
    if (window_losses_.empty()) return space_.centroid();
    if (quadratic_count_ == 0) return space_.linear_argmin(linear_sum_);
    Vec x(target_sum_.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = (target_sum_[i] - linear_sum_[i]) / static_cast<double>(quadratic_count_);
    }
    return space_.project(x);
  }

  void observe(const Feedback& fb) override {
    add(*fb.loss, 1.0);
    window_losses_.push_back(*fb.loss);
    if (window_ != 0 && window_losses_.size() > window_) {
      add(window_losses_.front(), -1.0);
      window_losses_.pop_front();
    }
  }

 private:
  void add(const LossFunction& l, double sign) {
    auto& acc = l.kind() == LossKind::quadratic ? target_sum_ : linear_sum_;
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += sign * l.param()[i];
    if (l.kind() == LossKind::quadratic) {
      quadratic_count_ = sign > 0 ? quadratic_count_ + 1 : quadratic_count_ - 1;
    }
  }

  ActionSpace space_;
  std::size_t window_;
  std::deque<LossFunction> window_losses_;
  Vec target_sum_;
  Vec linear_sum_;
  std::size_t quadratic_count_ = 0;
};

class MetaExpert final : public Learner, public MetaInspector {
 public:
  MetaExpert(const ActionSpace& space, std::size_t horizon, const MetaConfig& config)
      : space_(space) {
    if (horizon < 1) fail(ErrorCode::invalid_input, "meta_expert: horizon must be >= 1");
    const double T = static_cast<double>(horizon);
    const std::size_t n = config.num_experts.value_or(
        static_cast<std::size_t>(std::ceil(std::log2(T))) + 1);
    if (n < 1) fail(ErrorCode::invalid_input, "meta_expert: step-size grid is empty");
    const double G = gradient_bound(config.gradient_bound, space);
    const double base = space.diameter() / (G * std::sqrt(T));
    for (std::size_t i = 0; i < n; ++i) steps_.push_back(std::ldexp(base, static_cast<int>(i)));
    iterates_.assign(n, space.centroid());
    weights_.assign(n, 1.0 / static_cast<double>(n));
    // Losses lie in [0, G^2 / 2]; the default is the usual Hedge rate for that range.
    meta_rate_ = config.meta_rate.value_or(std::sqrt(8.0 * std::log(static_cast<double>(n)) / T) /
                                           (0.5 * G * G));
    if (!std::isfinite(meta_rate_) || meta_rate_ < 0.0) {
      fail(ErrorCode::invalid_input, "meta_expert: meta rate must be >= 0");
    }
    expert_losses_.resize(n);
  }

  std::string_view id() const override { return "meta_expert"; }

  Vec act() override {
    Vec x(space_.dimension(), 0.0);
    for (std::size_t i = 0; i < iterates_.size(); ++i) {
      for (std::size_t k = 0; k < x.size(); ++k) x[k] += weights_[i] * iterates_[i][k];
    }
    return space_.project(x);
  }

  void observe(const Feedback& fb) override {
    for (std::size_t i = 0; i < iterates_.size(); ++i) {
      expert_losses_[i] = fb.loss->value(iterates_[i]);
      const Vec g = fb.loss->grad(iterates_[i]);
      require_finite_gradient(g, "meta_expert", fb.round);
      iterates_[i] = ogd_step(space_, iterates_[i], g, steps_[i]);
    }
    weights_ = hedge_step(weights_, expert_losses_, meta_rate_);
  }

  std::span<const double> weights() const override { return weights_; }
  std::span<const double> expert_steps() const override { return steps_; }

 private:
  ActionSpace space_;
  Vec steps_;
  std::vector<Vec> iterates_;
  Vec weights_;
  Vec expert_losses_;
  double meta_rate_ = 0.0;
};

class Regime final : public Learner, public RegimeInspector {
 public:
  Regime(const ActionSpace& space, RegimeConfig config)
      : space_(space), config_(config), G_(gradient_bound(config.gradient_bound, space)) {}

  std::string_view id() const override { return "regime"; }

  Vec act() override {
    const auto r = predicted_regime();
    if (r) {
      const auto it = slots_.find(*r);
      if (it != slots_.end()) return it->second.iterate;
    }
    return space_.centroid();
  }

  void observe(const Feedback& fb) override {
    if (!fb.regime) {
      fail(ErrorCode::aborted,
           "regime: no latent-state reveal at round " + std::to_string(fb.round));
    }
    const int r = *fb.regime;
    if (last_) {
      ++transitions_[{*last_, run_length_}][r];
      run_length_ = r == *last_ ? run_length_ + 1 : 1;
    } else {
      run_length_ = 1;
    }
    last_ = r;

    auto [it, inserted] = slots_.try_emplace(r, Slot{space_.centroid(), 0});
    Slot& slot = it->second;
    ++slot.visits;
    const Vec g = fb.loss->grad(slot.iterate);
    require_finite_gradient(g, "regime", fb.round);
    const double eta = space_.diameter() / (G_ * std::sqrt(static_cast<double>(slot.visits)));
    slot.iterate = ogd_step(space_, slot.iterate, g, eta);
  }

  std::optional<int> predicted_regime() const override {
    if (!last_ || !config_.transition_table) return last_;
    const auto row = transitions_.find({*last_, run_length_});
    if (row == transitions_.end()) return last_;
    int best = *last_;
    std::size_t best_count = 0;
    const auto stay = row->second.find(*last_);
    if (stay != row->second.end()) best_count = stay->second;
    for (const auto& [next, count] : row->second) {
      if (count > best_count) {
        best = next;
        best_count = count;
      }
    }
    return best;
  }

  std::size_t memory_slots() const override { return slots_.size(); }

 private:
  struct Slot {
    Vec iterate;
    std::size_t visits;
  };

  ActionSpace space_;
  RegimeConfig config_;
  double G_;
  std::map<int, Slot> slots_;
  std::optional<int> last_;
  std::size_t run_length_ = 0;
  std::map<std::pair<int, std::size_t>, std::map<int, std::size_t>> transitions_;
};

constexpr std::array<std::string_view, 6> kLearnerTypes = {"ogd",      "greedy",  "meta_expert",
                                                           "windowed", "restart", "regime"};

}  // namespace

Vec ogd_step(const ActionSpace& space, std::span<const double> iterate,
             std::span<const double> gradient, double eta) {
  if (!all_finite(gradient)) fail(ErrorCode::aborted, "ogd_step: non-finite gradient");
  Vec x(iterate.begin(), iterate.end());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] -= eta * gradient[i];
  return space.project(x);
}

double step_size(const OgdConfig& config, const ActionSpace& space, std::size_t t) {
  if (config.schedule == StepSchedule::constant) {
    if (!std::isfinite(config.eta) || config.eta < 0.0) {
      fail(ErrorCode::invalid_input, "constant step size must be >= 0");
    }
    return config.eta;
  }
  const double G = gradient_bound(config.gradient_bound, space);
  return space.diameter() / (G * std::sqrt(static_cast<double>(std::max<std::size_t>(t, 1))));
}

Vec hedge_step(std::span<const double> weights, std::span<const double> losses, double eta_meta) {
  if (weights.size() != losses.size() || weights.empty()) {
    fail(ErrorCode::invalid_input, "hedge_step: weights and losses must have equal nonzero size");
  }
  if (!all_finite(losses)) fail(ErrorCode::invalid_input, "hedge_step: non-finite loss");
  // Shifting by the smallest loss leaves the normalized weights unchanged.
  const double shift = *std::min_element(losses.begin(), losses.end());
  Vec out(weights.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = weights[i] * std::exp(-eta_meta * (losses[i] - shift));
    sum += out[i];
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    warn("hedge_step: all weights underflowed; resetting to uniform");
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(out.size()));
    return out;
  }
  for (auto& w : out) w /= sum;
  return out;
}

std::unique_ptr<Learner> make_ogd(const ActionSpace& space, OgdConfig config) {
  return std::make_unique<Ogd>(space, config, "ogd");
}

std::unique_ptr<Learner> make_greedy(const ActionSpace& space) {
  return std::make_unique<Greedy>(space);
}

std::unique_ptr<Learner> make_meta_expert(const ActionSpace& space, std::size_t horizon,
                                          MetaConfig config) {
  return std::make_unique<MetaExpert>(space, horizon, config);
}

std::unique_ptr<Learner> make_windowed(const ActionSpace& space, std::size_t window) {
  return std::make_unique<Windowed>(space, window);
}

std::unique_ptr<Learner> make_restart(const ActionSpace& space, RestartConfig config) {
  return std::make_unique<Restart>(space, config);
}

std::unique_ptr<Learner> make_regime(const ActionSpace& space, RegimeConfig config) {
  return std::make_unique<Regime>(space, config);
}

std::span<const std::string_view> learner_types() { return kLearnerTypes; }

std::unique_ptr<Learner> make_learner(const LearnerSpec& spec, const ActionSpace& space,
                                      std::size_t horizon) {
  if (spec.type == "ogd") return make_ogd(space, spec.ogd);
  if (spec.type == "greedy") return make_greedy(space);
  if (spec.type == "meta_expert") return make_meta_expert(space, horizon, spec.meta);
  if (spec.type == "windowed") return make_windowed(space, spec.window);
  if (spec.type == "restart") return make_restart(space, spec.restart);
  if (spec.type == "regime") return make_regime(space, spec.regime);
  fail(ErrorCode::invalid_input, "unknown learner type '" + spec.type + "'");
}

RunRecord run(Learner& learner, const EnvironmentTrace& trace) {
  RunRecord record;
  record.learner_id = std::string(learner.id());
  record.env_id = trace.env_id;
  record.seed = trace.spec.seed;
  const std::size_t T = trace.horizon();
  record.actions.reserve(T);
  record.losses.reserve(T);
  record.cumulative.reserve(T);
  const double tol = 1e-9 * std::max(1.0, trace.space.diameter());
  for (std::size_t t = 0; t < T; ++t) {
    Vec a = learner.act();
    if (!trace.space.contains(a, tol)) {
      fail(ErrorCode::aborted, std::string(learner.id()) + ": infeasible action at round " +
                                   std::to_string(t + 1));
    }
    const LossFunction& loss = trace.losses[t];
    const double value = loss.value(a);
    const Vec g = loss.grad(a);
    Feedback fb;
    fb.round = t + 1;
    fb.loss_value = value;
    fb.gradient = g;
    fb.loss = &loss;
    if (trace.latent_states) fb.regime = (*trace.latent_states)[t];
    learner.observe(fb);
    record.push(std::move(a), value);
  }
  return record;
}

}  // namespace antifrag::learners
