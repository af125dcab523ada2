#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "antifrag/certify.hpp"
#include "antifrag/env.hpp"
#include "synthetic.hpp"

using namespace antifrag;
using namespace antifrag::certify;

namespace {

const std::vector<double> kLevels = synthetic::geometric_levels(1.0, 2.0, 6);
const std::vector<std::size_t> kHorizons = {1024, 4096, 16384};

FitOptions fast_fit(std::uint64_t seed = 1) {
  FitOptions o;
  o.bootstrap_draws = 400;
  o.seed = seed;
  return o;
}

double sse(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

bool concave_nondecreasing(std::span<const double> x, std::span<const double> h, double tol) {
  double prev_slope = INFINITY;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double s = (h[i + 1] - h[i]) / (x[i + 1] - x[i]);
    if (s < -tol || s > prev_slope + tol) return false;
    prev_slope = s;
  }
  return true;
}

LearnerFactory factory(const ActionSpace& space, const std::string& type) {
  return [space, type](std::size_t T) {
    learners::LearnerSpec spec;
    spec.type = type;
    return learners::make_learner(spec, space, T);
  };
}

// Aborts on any round whose target lies right of zero.
class Skittish final : public learners::Learner {
 public:
  std::string_view id() const override { return "skittish"; }
  Vec act() override { return Vec{0.0}; }
  void observe(const learners::Feedback& fb) override {
    if (fb.loss->param()[0] > 0.9) fail(ErrorCode::aborted, "skittish: target too far right");
  }
};

}  // namespace

TEST_CASE("least squares line") {
  const Vec x{1.0, 2.0, 3.0, 4.0};
  const Vec y{3.0, 5.0, 7.0, 9.0};
  const auto f = least_squares(x, y);
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK_THROWS_AS(least_squares(Vec{1.0}, Vec{1.0}), Error);
  CHECK(std::isnan(least_squares(Vec{2.0, 2.0}, Vec{1.0, 3.0}).slope));
}

TEST_CASE("concave nondecreasing fit") {
  const Vec x{1.0, 2.0, 4.0, 8.0, 16.0};
  const Vec concave{1.0, 1.8, 2.5, 3.0, 3.2};
  const auto same = concave_nondecreasing_fit(x, concave);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(same[i] == doctest::Approx(concave[i]).epsilon(1e-9));

  const Vec convex{1.0, 1.1, 1.5, 3.0, 9.0};
  const auto fit = concave_nondecreasing_fit(x, convex);
  CHECK(concave_nondecreasing(x, fit, 1e-9));
  // A convex input is best approximated by a straight line.
  const auto line = least_squares(x, convex);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(fit[i] == doctest::Approx(line.intercept + line.slope * x[i]).epsilon(1e-9));

  const Vec decreasing{5.0, 4.0, 3.0, 2.0, 1.0};
  const auto flat = concave_nondecreasing_fit(x, decreasing);
  for (double h : flat) CHECK(h == doctest::Approx(3.0));
}

TEST_CASE("concave fit beats random feasible candidates") {
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 4 + rng.below(4);
    Vec x, y;
    double xv = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      xv += rng.uniform(0.2, 2.0);
      x.push_back(xv);
      y.push_back(rng.uniform(0.0, 5.0));
    }
    const auto fit = concave_nondecreasing_fit(x, y);
    CHECK(concave_nondecreasing(x, fit, 1e-9));
    const double best = sse(fit, y);
    for (int c = 0; c < 500; ++c) {
      // Random concave nondecreasing: decreasing nonnegative slopes.
      Vec slopes(n - 1);
      for (auto& s : slopes) s = rng.exponential();
      std::sort(slopes.begin(), slopes.end(), std::greater<>());
      Vec h(n);
      h[0] = rng.uniform(-1.0, 5.0);
      for (std::size_t i = 1; i < n; ++i) h[i] = h[i - 1] + slopes[i - 1] * (x[i] - x[i - 1]);
      CHECK(best <= sse(h, y) + 1e-9);
    }
  }
}

TEST_CASE("exact square-root response passes") {
  const auto s = synthetic::sweep(kLevels, 10, [](double v) { return std::sqrt(v); }, 0.0, 1);
  const auto c = fit_response(s, fast_fit());
  CHECK(c.beta == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(c.beta_ci.lo == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(c.beta_ci.hi == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(c.c == doctest::Approx(1.0));
  CHECK(c.strictly_concave_in_V == Verdict::pass);
  CHECK(c.dominated_by_identity == Verdict::pass);
  CHECK_FALSE(c.convex_kink);
  CHECK(c.tested_range.lo == 1.0);
  CHECK(c.tested_range.hi == 32.0);
}

TEST_CASE("exact linear response fails") {
  const auto s = synthetic::sweep(kLevels, 10, [](double v) { return v; }, 0.0, 1);
  const auto c = fit_response(s, fast_fit());
  CHECK(c.beta == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c.strictly_concave_in_V == Verdict::fail);
  CHECK(c.dominated_by_identity == Verdict::pass);

  const auto affine = synthetic::sweep(kLevels, 10, [](double v) { return 0.5 + 0.2 * v; }, 0.0, 1);
  const auto a = fit_response(affine, fast_fit());
  CHECK(a.beta_ci.hi < 1.0);
  CHECK(a.strictly_concave_in_V == Verdict::fail);

  const auto convex = synthetic::sweep(kLevels, 10, [](double v) { return 0.01 * v * v; }, 0.0, 1);
  const auto k = fit_response(convex, fast_fit());
  CHECK(k.convex_kink);
  CHECK(k.strictly_concave_in_V == Verdict::fail);
}

TEST_CASE("noisy power laws") {
  int pass = 0, linear_pass = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = synthetic::sweep(kLevels, 10, [](double v) { return std::pow(v, 0.7); }, 0.02, seed);
    pass += fit_response(s, fast_fit(seed)).strictly_concave_in_V == Verdict::pass;
    const auto l = synthetic::sweep(kLevels, 10, [](double v) { return v; }, 0.02, seed + 100);
    linear_pass += fit_response(l, fast_fit(seed)).strictly_concave_in_V == Verdict::pass;
  }
  CHECK(pass >= 19);
  CHECK(linear_pass <= 1);
}

TEST_CASE("domination uses the configured scale") {
  const auto s = synthetic::sweep(kLevels, 10, [](double v) { return 2.0 * std::sqrt(v); }, 0.0, 1);
  CHECK(fit_response(s, fast_fit()).dominated_by_identity == Verdict::fail);
  auto opts = fast_fit();
  opts.domination_scale = 2.0;
  CHECK(fit_response(s, opts).dominated_by_identity == Verdict::pass);
}

TEST_CASE("verdicts need enough repetitions and levels") {
  const auto few_reps = synthetic::sweep(kLevels, 5, [](double v) { return std::sqrt(v); }, 0.0, 1);
  auto c = fit_response(few_reps, fast_fit());
  CHECK(c.strictly_concave_in_V == Verdict::inconclusive);
  CHECK(c.dominated_by_identity == Verdict::inconclusive);
  CHECK(c.beta == doctest::Approx(0.5));
  const auto few_levels = synthetic::sweep({1.0, 2.0, 4.0, 8.0}, 10, [](double v) { return std::sqrt(v); }, 0.0, 1);
  c = fit_response(few_levels, fast_fit());
  CHECK(c.strictly_concave_in_V == Verdict::inconclusive);
}

TEST_CASE("degenerate and partly degenerate sweeps") {
  const auto zero = synthetic::sweep({0.0, 0.0, 0.0, 0.0, 0.0}, 10, [](double) { return 3.0; }, 0.0, 1);
  try {
    fit_response(zero, fast_fit());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::invalid_input);
  }
  auto levels = kLevels;
  levels.insert(levels.begin(), 0.0);
  const auto partial = synthetic::sweep(levels, 10, [](double v) { return std::sqrt(v); }, 0.0, 1);
  const auto c = fit_response(partial, fast_fit());
  CHECK(c.log_fit_levels.size() == 6);
  CHECK(c.beta == doctest::Approx(0.5));
  CHECK(std::any_of(c.notes.begin(), c.notes.end(),
                    [](const std::string& n) { return n.find("excluded from the log fit") != std::string::npos; }));
}

TEST_CASE("fits are deterministic and seed-stable on calibrated curves") {
  const auto s = synthetic::sweep(kLevels, 10, [](double v) { return std::pow(v, 0.5); }, 0.02, 3);
  const auto a = fit_response(s, fast_fit(5));
  const auto b = fit_response(s, fast_fit(5));
  CHECK(a.beta_ci.lo == b.beta_ci.lo);
  CHECK(a.beta_ci.hi == b.beta_ci.hi);
  CHECK(a.curvature_ci.lo == b.curvature_ci.lo);
  // Exponents at least 0.15 away from the threshold on either side.
  for (double p : {0.5, 0.7, 0.85, 1.15, 1.3}) {
    const auto first = fit_response(synthetic::sweep(kLevels, 10, [p](double v) { return std::pow(v, p); }, 0.02, 1),
                                    fast_fit(1))
                           .strictly_concave_in_V;
    CHECK(first == (p < 1.0 ? Verdict::pass : Verdict::fail));
    for (std::uint64_t block = 1000; block < 1010; ++block) {
      const auto sw = synthetic::sweep(kLevels, 10, [p](double v) { return std::pow(v, p); }, 0.02, block);
      CHECK(fit_response(sw, fast_fit(block)).strictly_concave_in_V == first);
    }
  }
}

TEST_CASE("sublinearity examples") {
  const auto root = synthetic::horizons(kHorizons, 10, [](double T) { return std::sqrt(T); }, 0.0, 1);
  auto r = sublinearity_test(root);
  CHECK(r.slope == doctest::Approx(0.5));
  CHECK(r.verdict == Verdict::pass);
  CHECK_FALSE(r.shifted);

  const auto lin = synthetic::horizons(kHorizons, 10, [](double T) { return T; }, 0.0, 1);
  r = sublinearity_test(lin);
  CHECK(r.slope == doctest::Approx(1.0));
  CHECK(r.verdict == Verdict::fail);

  const auto negative = synthetic::horizons(kHorizons, 10, [](double T) { return -std::sqrt(T); }, 0.0, 1);
  r = sublinearity_test(negative);
  CHECK(r.shifted);
  CHECK(r.shift == doctest::Approx(129.0));

  CHECK_THROWS_AS(sublinearity_test(std::span(root).first(2)), Error);
}

TEST_CASE("stationary environments give a flat, degenerate sweep") {
  const auto box = ActionSpace::unit_box(2);
  EnvSpec base;
  base.family = EnvFamily::piecewise;
  base.block_size = 256;
  base.noise_sd = 0.2;
  SweepPlan plan{base, box, {0.5, 1.0, 2.0, 4.0, 8.0}, 10, 256, 7, 1};
  const auto s = volatility_sweep(plan, factory(box, "ogd"), "ogd", 1);
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& lv : s.levels) {
    lo = std::min(lo, lv.r_mean);
    hi = std::max(hi, lv.r_mean);
  }
  CHECK(hi - lo <= 0.5 * std::max(std::abs(hi), std::abs(lo)));
  const auto sk = volatility_sweep(plan, factory(box, "ogd"), "ogd", 256);
  for (const auto& lv : sk.levels) CHECK(lv.v_mean == 0.0);
  CHECK_THROWS_AS(fit_response(sk, fast_fit()), Error);
}

TEST_CASE("greedy on the besbes family responds increasingly") {
  const auto box = ActionSpace::unit_box(1);
  EnvSpec base;
  base.family = EnvFamily::besbes_adversarial;
  SweepPlan plan{base, box, {1.0, 1.5, 2.0, 3.0, 4.0, 6.0}, 10, 4096, 11, 1};
  const auto s = volatility_sweep(plan, factory(box, "greedy"), "greedy", 1);
  for (std::size_t i = 1; i < s.levels.size(); ++i) {
    CHECK(s.levels[i].r_mean > s.levels[i - 1].r_mean);
    CHECK(s.levels[i].v_mean >= s.levels[i - 1].v_mean);
  }
  const auto c = fit_response(s, fast_fit());
  CHECK(c.strictly_concave_in_V != Verdict::pass);
}

TEST_CASE("sweeps are independent of the number of jobs") {
  const auto box = ActionSpace::unit_box(2);
  EnvSpec base;
  base.family = EnvFamily::drift;
  SweepPlan plan{base, box, {1.0, 2.0, 4.0}, 4, 200, 13, 1};
  const std::vector<std::size_t> K{1, 4};
  const auto a = volatility_sweep(plan, factory(box, "meta_expert"), "m", K);
  plan.jobs = 3;
  const auto b = volatility_sweep(plan, factory(box, "meta_expert"), "m", K);
  REQUIRE(a.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(a[k].K == K[k]);
    for (std::size_t l = 0; l < 3; ++l) {
      for (std::size_t r = 0; r < 4; ++r) {
        CHECK(a[k].levels[l].reps[r].r == b[k].levels[l].reps[r].r);
        CHECK(a[k].levels[l].reps[r].v == b[k].levels[l].reps[r].v);
      }
    }
  }
  CHECK(cell_seed(13, "sweep", 0, 1) != cell_seed(13, "sweep", 1, 0));
  CHECK(cell_seed(13, "sweep", 0, 1) != cell_seed(13, "horizon", 0, 1));
}

TEST_CASE("levels are sorted by realized volatility") {
  SweepResult s;
  for (double v : {3.0, 1.0, 2.0}) {
    SweepLevel lv;
    lv.v_target = 4.0 - v;
    lv.reps = {{v, 1.0}, {v, 3.0}};
    s.levels.push_back(lv);
  }
  s.finalize();
  CHECK(s.levels[0].v_mean == 1.0);
  CHECK(s.levels[2].v_mean == 3.0);
  CHECK(s.levels[0].r_mean == 2.0);
  CHECK(s.levels[0].r_sd == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("aborted runs mark levels incomplete without stopping the sweep") {
  const auto box = ActionSpace::unit_box(1);
  EnvSpec base;
  base.family = EnvFamily::piecewise;
  base.block_size = 4;
  SweepPlan plan{base, box, {0.1, 100.0}, 10, 64, 2, 1};
  const auto s = volatility_sweep(
      plan, [](std::size_t) { return std::make_unique<Skittish>(); }, "skittish", 1);
  std::size_t incomplete = 0, complete = 0;
  for (const auto& lv : s.levels) {
    incomplete += lv.incomplete;
    complete += lv.n();
  }
  CHECK(incomplete > 0);
  CHECK(complete > 0);
  CHECK(incomplete + complete == 20);

  const auto trace = sweep_environment(plan, 1, 0);
  Skittish sk;
  const std::size_t K[] = {1};
  const auto cell = evaluate_cell(trace, sk, K);
  if (!cell.complete) CHECK(cell.error.find("skittish") != std::string::npos);
}

TEST_CASE("evaluate_cell scores every K") {
  const auto box = ActionSpace::unit_box(2);
  EnvSpec spec;
  spec.family = EnvFamily::piecewise;
  spec.horizon = 64;
  spec.block_size = 8;
  spec.target_volatility = 5.0;
  const auto trace = env::generate(spec, box);
  auto learner = learners::make_ogd(box);
  const std::size_t K[] = {1, 8, 64};
  RunRecord rec;
  const auto cell = evaluate_cell(trace, *learner, K, &rec);
  REQUIRE(cell.complete);
  REQUIRE(cell.scores.size() == 3);
  CHECK(cell.scores[2].v_path == 0.0);
  CHECK(cell.scores[2].dyn_regret == doctest::Approx(cell.static_regret));
  CHECK(cell.scores[1].v_path == doctest::Approx(trace.realized_path_length));
  CHECK(cell.scores[0].dyn_regret >= cell.scores[1].dyn_regret - 1e-9);
  CHECK(cell.scores[1].dyn_regret >= cell.scores[2].dyn_regret - 1e-9);
  CHECK(rec.actions.size() == 64);
}

TEST_CASE("certification from synthetic data") {
  const std::vector<std::size_t> K{1, 2, 4};
  std::vector<SweepResult> sweeps;
  std::vector<std::vector<HorizonPoint>> hz;
  // Linear at K = 1, concave from K = 2 on; regret shrinks with K.
  sweeps.push_back(synthetic::sweep(kLevels, 10, [](double v) { return 0.9 * v; }, 0.0, 1));
  sweeps.push_back(synthetic::sweep(kLevels, 10, [](double v) { return 0.8 * std::sqrt(v); }, 0.0, 1));
  sweeps.push_back(synthetic::sweep(kLevels, 10, [](double v) { return 0.7 * std::sqrt(v); }, 0.0, 1));
  for (int i = 0; i < 3; ++i) {
    hz.push_back(synthetic::horizons(kHorizons, 10, [](double T) { return std::sqrt(T); }, 0.0, 1));
  }
  CertifyOptions opts;
  opts.fit = fast_fit();
  const auto r = certify_from_data("syn", K, sweeps, hz, opts);
  REQUIRE(r.order.has_value());
  CHECK(*r.order == 2);
  CHECK_FALSE(r.per_K[0].certified);
  CHECK(r.per_K[1].certified);
  CHECK(r.per_K[2].certified);
  CHECK(r.regret_monotone_in_K);
  CHECK(r.summary == "certified at K*=2");

  // Regret growing with K contradicts set inclusion.
  std::swap(sweeps[0], sweeps[2]);
  const auto bad = certify_from_data("syn", K, sweeps, hz, opts);
  CHECK_FALSE(bad.regret_monotone_in_K);

  std::vector<SweepResult> lin(3, synthetic::sweep(kLevels, 10, [](double v) { return v; }, 0.0, 1));
  const auto none = certify_from_data("syn", K, lin, hz, opts);
  CHECK_FALSE(none.order.has_value());
  CHECK(none.summary == "not certified up to K_max=4");

  const std::vector<std::size_t> unsorted{4, 2};
  CHECK_THROWS_AS(certify_from_data("syn", unsorted, std::vector<SweepResult>(2), std::span(hz).first(2), opts), Error);
}

TEST_CASE("static comparator class reduces to sublinearity") {
  const auto box = ActionSpace::unit_box(2);
  EnvSpec base;
  base.family = EnvFamily::piecewise;
  base.block_size = 1 << 14;
  base.noise_sd = 0.3;
  const std::vector<std::size_t> K{1 << 14};
  SweepPlan sp{base, box, {0.5, 1.0, 2.0, 4.0, 8.0}, 10, 1 << 14, 3, 1};
  HorizonPlan hp{base, box, kHorizons, 0.0, 10, 3, 1};
  hp.base.block_size = 1024;  // K <= every horizon
  CertifyOptions opts;
  opts.fit = fast_fit();
  const auto r = certify_order(sp, hp, factory(box, "ogd"), "ogd", K, opts);
  REQUIRE(r.per_K.size() == 1);
  CHECK(r.per_K[0].curve.strictly_concave_in_V == Verdict::pass);
  CHECK(r.per_K[0].curve.dominated_by_identity == Verdict::pass);
  CHECK(r.per_K[0].sublinearity.verdict == Verdict::pass);
  CHECK(r.order == K[0]);
}

TEST_CASE("greedy on besbes is not certified") {
  const auto box = ActionSpace::unit_box(1);
  EnvSpec base;
  base.family = EnvFamily::besbes_adversarial;
  const std::vector<std::size_t> K{1, 4};
  SweepPlan sp{base, box, {1.0, 1.5, 2.0, 3.0, 4.0, 6.0}, 10, 4096, 21, 1};
  HorizonPlan hp{base, box, kHorizons, 0.5 / 256.0, 10, 21, 1};
  CertifyOptions opts;
  opts.fit = fast_fit();
  opts.sublinearity.bootstrap_draws = 400;
  const auto r = certify_order(sp, hp, factory(box, "greedy"), "greedy", K, opts);
  CHECK_FALSE(r.order.has_value());
  CHECK(r.regret_monotone_in_K);
}
