#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "antifrag/env.hpp"
#include "antifrag/learners.hpp"
#include "antifrag/metrics.hpp"

using namespace antifrag;
using namespace antifrag::learners;

namespace {

EnvironmentTrace make_trace(const ActionSpace& space, std::vector<LossFunction> losses,
                            std::optional<std::vector<int>> states = std::nullopt) {
  EnvironmentTrace t(space);
  t.spec.horizon = losses.size();
  t.losses = std::move(losses);
  t.latent_states = std::move(states);
  return t;
}

EnvironmentTrace stationary_trace(const ActionSpace& space, std::size_t T, double noise, std::uint64_t seed) {
  EnvSpec s;
  s.family = EnvFamily::piecewise;
  s.horizon = T;
  s.block_size = T;
  s.noise_sd = noise;
  s.seed = seed;
  return env::gen_piecewise(s, space);
}

std::vector<std::unique_ptr<Learner>> roster(const ActionSpace& space, std::size_t T) {
  std::vector<std::unique_ptr<Learner>> out;
  for (auto type : learner_types()) {
    LearnerSpec spec;
    spec.type = std::string(type);
    spec.restart.period = 7;
    spec.regime.transition_table = true;
    out.push_back(make_learner(spec, space, T));
  }
  return out;
}

class Stray final : public Learner {
 public:
  std::string_view id() const override { return "stray"; }
  Vec act() override { return Vec{5.0}; }
  void observe(const Feedback&) override {}
};

}  // namespace

TEST_CASE("ogd_step examples") {
  const auto box = ActionSpace::unit_box(1);
  CHECK(ogd_step(box, Vec{0.3}, Vec{0.0}, 0.5) == Vec{0.3});
  CHECK(ogd_step(box, Vec{0.0}, Vec{1.0}, 0.5) == Vec{-0.5});
  CHECK(ogd_step(box, Vec{0.0}, Vec{-10.0}, 0.5) == Vec{1.0});
  try {
    ogd_step(box, Vec{0.0}, Vec{NAN}, 0.5);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::aborted);
  }
}

TEST_CASE("ogd on a fixed quadratic follows the hand recursion") {
  const auto box = ActionSpace::unit_box(1);
  OgdConfig cfg;
  cfg.schedule = StepSchedule::constant;
  cfg.eta = 0.5;
  auto ogd = make_ogd(box, cfg);
  const auto trace = make_trace(box, std::vector<LossFunction>(3, LossFunction::quadratic({0.8})));
  run(*ogd, trace);
  double a = 0.0;
  std::vector<double> scripted;
  for (int i = 0; i < 3; ++i) {
    a = a + 0.5 * (0.8 - a);
    scripted.push_back(a);
  }
  CHECK(scripted[0] == doctest::Approx(0.4));
  CHECK(scripted[1] == doctest::Approx(0.6));
  CHECK(scripted[2] == doctest::Approx(0.7));
  CHECK(ogd->act()[0] == doctest::Approx(scripted[2]).epsilon(1e-12));
  const auto record = run(*make_ogd(box, cfg), trace);
  CHECK(record.actions[1][0] == doctest::Approx(0.4));
  CHECK(record.actions[2][0] == doctest::Approx(0.6));
}

TEST_CASE("step size schedule") {
  const auto box = ActionSpace::unit_box(2);
  OgdConfig cfg;
  CHECK(step_size(cfg, box, 4) == doctest::Approx(0.5));
  cfg.gradient_bound = 4.0;
  CHECK(step_size(cfg, box, 1) == doctest::Approx(box.diameter() / 4.0));
  cfg.gradient_bound = 0.0;
  CHECK_THROWS_AS(step_size(cfg, box, 1), Error);
  OgdConfig bad;
  bad.schedule = StepSchedule::constant;
  bad.eta = -1.0;
  CHECK_THROWS_AS(make_ogd(box, bad), Error);
}

TEST_CASE("hedge_step examples") {
  const Vec w{0.2, 0.3, 0.5};
  const Vec same = hedge_step(w, Vec{1.0, 1.0, 1.0}, 2.0);
  for (int i = 0; i < 3; ++i) CHECK(same[i] == doctest::Approx(w[i]).epsilon(1e-15));
  const Vec frozen = hedge_step(w, Vec{0.0, 5.0, 9.0}, 0.0);
  for (int i = 0; i < 3; ++i) CHECK(frozen[i] == doctest::Approx(w[i]).epsilon(1e-15));

  const Vec two = hedge_step(Vec{0.5, 0.5}, Vec{0.0, 10.0}, 1.0);
  const double r = std::exp(-10.0);
  CHECK(two[0] == doctest::Approx(1.0 / (1.0 + r)).epsilon(1e-14));
  CHECK(two[1] == doctest::Approx(r / (1.0 + r)).epsilon(1e-12));
  CHECK(two[1] == doctest::Approx(4.54e-5).epsilon(1e-3));

  const Vec reset = hedge_step(Vec{0.5, 0.5}, Vec{1e6, 1e6}, 1e3);
  CHECK(reset[0] == doctest::Approx(0.5));
  CHECK(std::accumulate(reset.begin(), reset.end(), 0.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(hedge_step(Vec{1.0}, Vec{1.0, 2.0}, 1.0), Error);
}

TEST_CASE("meta expert with one expert is that OGD instance") {
  const auto box = ActionSpace::unit_box(2);
  const auto trace = env::gen_drift(
      [] {
        EnvSpec s;
        s.family = EnvFamily::drift;
        s.horizon = 300;
        s.target_volatility = 5.0;
        s.seed = 3;
        return s;
      }(),
      box);
  MetaConfig mc;
  mc.num_experts = 1;
  auto meta = make_meta_expert(box, trace.horizon(), mc);
  const auto* inspect = dynamic_cast<const MetaInspector*>(meta.get());
  REQUIRE(inspect != nullptr);
  OgdConfig oc;
  oc.schedule = StepSchedule::constant;
  oc.eta = inspect->expert_steps()[0];
  CHECK(oc.eta == doctest::Approx(box.diameter() / (box.diameter() * std::sqrt(300.0))));
  auto ogd = make_ogd(box, oc);
  const auto a = run(*meta, trace);
  const auto b = run(*ogd, trace);
  for (std::size_t t = 0; t < a.actions.size(); ++t) CHECK(a.actions[t] == b.actions[t]);
}

TEST_CASE("meta expert defaults") {
  const auto box = ActionSpace::unit_box(1);
  auto meta = make_meta_expert(box, 1024);
  const auto* inspect = dynamic_cast<const MetaInspector*>(meta.get());
  CHECK(inspect->expert_steps().size() == 11);
  CHECK(inspect->expert_steps()[1] == doctest::Approx(2.0 * inspect->expert_steps()[0]));
  CHECK(std::accumulate(inspect->weights().begin(), inspect->weights().end(), 0.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(make_meta_expert(box, 0), Error);
}

TEST_CASE("meta expert stays close to its best expert on stationary losses") {
  const auto box = ActionSpace::unit_box(2);
  const std::size_t T = 1 << 14;
  const auto trace = stationary_trace(box, T, 0.3, 12);
  auto meta = make_meta_expert(box, T);
  const auto steps = dynamic_cast<const MetaInspector*>(meta.get())->expert_steps();
  const Vec step_copy(steps.begin(), steps.end());
  const double meta_loss = run(*meta, trace).total_loss();
  double best = INFINITY;
  for (double eta : step_copy) {
    OgdConfig oc;
    oc.schedule = StepSchedule::constant;
    oc.eta = eta;
    best = std::min(best, run(*make_ogd(box, oc), trace).total_loss());
  }
  CHECK(meta_loss <= 1.1 * best);
  const double N = static_cast<double>(step_copy.size());
  CHECK(meta_loss - best <= 2.0 * std::sqrt(static_cast<double>(T) * std::log(N)));
}

TEST_CASE("windowed and restart examples") {
  const auto box = ActionSpace::unit_box(2);
  std::vector<LossFunction> losses;
  for (int t = 0; t < 200; ++t) losses.push_back(LossFunction::quadratic({t % 2 ? 0.4 : 0.0, 0.2}));
  auto unbounded = make_windowed(box, 0);
  run(*unbounded, make_trace(box, losses));
  const Vec a = unbounded->act();
  CHECK(a[0] == doctest::Approx(0.2));
  CHECK(a[1] == doctest::Approx(0.2));

  RestartConfig rc;
  rc.period = 1;
  const auto record = run(*make_restart(box, rc), make_trace(box, losses));
  for (const auto& x : record.actions) CHECK(x == box.centroid());
  rc.period = 0;
  CHECK_THROWS_AS(make_restart(box, rc), Error);
}

TEST_CASE("windowed learner is exact once its window lies inside a block") {
  // With W = K the window always straddles a switch, so a shorter window is
  // used for the within-block comparison.
  const auto box = ActionSpace::unit_box(2);
  const std::size_t K = 32, W = 8, T = 1024;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EnvSpec s;
    s.family = EnvFamily::piecewise;
    s.horizon = T;
    s.block_size = K;
    s.target_volatility = 1e6;
    s.seed = seed;
    const auto trace = env::gen_piecewise(s, box);
    const auto w = run(*make_windowed(box, W), trace);
    const auto o = run(*make_ogd(box), trace);
    const double ogd_avg = o.total_loss() / static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t) {
      if (t % K >= W) CHECK(w.losses[t] <= ogd_avg);
    }
  }
}

TEST_CASE("regime learner with one regime is plain OGD") {
  const auto box = ActionSpace::unit_box(2);
  const auto base = stationary_trace(box, 500, 0.2, 9);
  const auto trace = make_trace(box, base.losses, std::vector<int>(500, 0));
  const auto a = run(*make_regime(box), trace);
  const auto b = run(*make_ogd(box), trace);
  for (std::size_t t = 0; t < a.actions.size(); ++t) {
    for (std::size_t i = 0; i < 2; ++i) CHECK(a.actions[t][i] == doctest::Approx(b.actions[t][i]).epsilon(1e-15));
  }
}

TEST_CASE("regime learner prediction with the transition table") {
  const auto box = ActionSpace::unit_box(1);
  const std::size_t K = 5, T = 100;
  std::vector<LossFunction> losses;
  std::vector<int> states;
  for (std::size_t t = 0; t < T; ++t) {
    const int r = static_cast<int>((t / K) % 2);
    states.push_back(r);
    losses.push_back(LossFunction::quadratic({r ? 0.5 : -0.5}));
  }
  RegimeConfig rc;
  rc.transition_table = true;
  auto learner = make_regime(box, rc);
  const auto* inspect = dynamic_cast<const RegimeInspector*>(learner.get());
  std::size_t correct = 0, counted = 0;
  for (std::size_t t = 0; t < T; ++t) {
    learner->act();
    const auto predicted = inspect->predicted_regime();
    // The switch out of the second regime is first seen at round 2K + 1.
    if (t > 2 * K) {
      ++counted;
      correct += predicted && *predicted == states[t];
    }
    const Vec a = learner->act();
    Feedback fb;
    fb.round = t + 1;
    fb.loss = &losses[t];
    const Vec g = losses[t].grad(a);
    fb.gradient = g;
    fb.loss_value = losses[t].value(a);
    fb.regime = states[t];
    learner->observe(fb);
  }
  CHECK(correct == counted);
  CHECK(inspect->memory_slots() == 2);

  // The default predictor is always one step behind at a switch.
  auto plain = make_regime(box);
  const auto rec = run(*plain, make_trace(box, losses, states));
  CHECK(rec.actions.size() == T);
}

TEST_CASE("regime learner aborts without reveals") {
  const auto box = ActionSpace::unit_box(1);
  const auto trace = make_trace(box, std::vector<LossFunction>(4, LossFunction::quadratic({0.1})));
  try {
    run(*make_regime(box), trace);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::aborted);
  }
}

TEST_CASE("greedy examples") {
  const auto box = ActionSpace::unit_box(2);
  const Vec theta{0.3, -0.6};
  const auto st = run(*make_greedy(box), make_trace(box, std::vector<LossFunction>(10, LossFunction::quadratic(theta))));
  for (std::size_t t = 1; t < 10; ++t) CHECK(st.actions[t] == theta);
  for (std::size_t t = 1; t < 10; ++t) CHECK(st.losses[t] == 0.0);

  const Vec a{0.5, 0.5}, b{-0.5, 0.25};
  std::vector<LossFunction> alt;
  for (int t = 0; t < 12; ++t) alt.push_back(LossFunction::quadratic(t % 2 ? b : a));
  const auto rec = run(*make_greedy(box), make_trace(box, alt));
  for (std::size_t t = 1; t < 12; ++t) {
    CHECK(rec.losses[t] == doctest::Approx(0.5 * squared_distance(a, b)));
  }
}

TEST_CASE("learners never read a loss before acting") {
  const auto box = ActionSpace::unit_box(2);
  EnvSpec s;
  s.family = EnvFamily::latent_regime;
  s.horizon = 200;
  s.block_size = 8;
  s.num_states = 3;
  s.target_volatility = 1e6;
  s.seed = 4;
  const auto trace = env::gen_latent_regime(s, box);
  const std::size_t cut = 120;
  auto permuted = trace;
  Rng rng(1);
  for (std::size_t t = trace.horizon() - 1; t > cut; --t) {
    const std::size_t j = cut + rng.below(t - cut + 1);
    std::swap(permuted.losses[t], permuted.losses[j]);
    std::swap((*permuted.latent_states)[t], (*permuted.latent_states)[j]);
  }
  auto first = roster(box, trace.horizon());
  auto second = roster(box, trace.horizon());
  for (std::size_t i = 0; i < first.size(); ++i) {
    const auto a = run(*first[i], trace);
    const auto b = run(*second[i], permuted);
    INFO(first[i]->id());
    for (std::size_t t = 0; t <= cut; ++t) CHECK(a.actions[t] == b.actions[t]);
  }
}

TEST_CASE("every learner plays feasible actions") {
  const std::vector<ActionSpace> spaces = {ActionSpace::unit_box(3), ActionSpace::ball({0.5, 0.5}, 0.3),
                                           ActionSpace::simplex(4)};
  for (const auto& space : spaces) {
    for (auto family : all_env_families()) {
      EnvSpec s;
      s.family = family;
      s.horizon = 300;
      s.target_volatility = 4.0;
      s.block_size = 10;
      s.num_states = 3;
      s.noise_sd = 0.5;
      const auto trace = env::generate(s, space);
      for (auto& learner : roster(space, trace.horizon())) {
        if (learner->id() == "regime" && !trace.latent_states) continue;
        const auto rec = run(*learner, trace);
        for (const auto& a : rec.actions) CHECK(space.contains(a));
      }
    }
  }
}

TEST_CASE("runner aborts on infeasible actions") {
  const auto box = ActionSpace::unit_box(1);
  Stray stray;
  try {
    run(stray, make_trace(box, std::vector<LossFunction>(3, LossFunction::quadratic({0.0}))));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::aborted);
  }
}

TEST_CASE("learner roster") {
  const auto types = learner_types();
  CHECK(types.size() == 6);
  const auto box = ActionSpace::unit_box(1);
  for (auto t : types) {
    LearnerSpec spec;
    spec.type = std::string(t);
    CHECK(make_learner(spec, box, 10)->id() == t);
    CHECK(spec.id() == t);
  }
  LearnerSpec bad;
  bad.type = "nope";
  CHECK_THROWS_AS(make_learner(bad, box, 10), Error);
}
