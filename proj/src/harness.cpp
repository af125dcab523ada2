#include "antifrag/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <json.hpp>

#include "antifrag/env.hpp"
#include "antifrag/parallel.hpp"

namespace antifrag::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void invalid(const std::string& where, const std::string& what) {
  fail(ErrorCode::validation, where + ": " + what);
}

void check_keys(const json& j, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) invalid(where, "expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      invalid(where, "unknown key '" + key + "'");
    }
  }
}

double get_number(const json& j, const std::string& where) {
  if (!j.is_number()) invalid(where, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) invalid(where, "expected a finite number");
  return v;
}

std::uint64_t get_uint(const json& j, const std::string& where) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer()) {
    const auto v = j.get<std::int64_t>();
    if (v < 0) invalid(where, "expected a nonnegative integer");
    return static_cast<std::uint64_t>(v);
  }
  invalid(where, "expected a nonnegative integer");
}

bool get_bool(const json& j, const std::string& where) {
  if (!j.is_boolean()) invalid(where, "expected true or false");
  return j.get<bool>();
}

std::string get_string(const json& j, const std::string& where) {
  if (!j.is_string()) invalid(where, "expected a string");
  return j.get<std::string>();
}

std::optional<double> get_optional_number(const json& j, const std::string& where) {
  if (j.is_null()) return std::nullopt;
  return get_number(j, where);
}

Vec get_vector_or_scalar(const json& j, std::size_t d, const std::string& where) {
  if (j.is_number()) return Vec(d, get_number(j, where));
  if (!j.is_array()) invalid(where, "expected a number or an array");
  Vec out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_number(j[i], where + "[" + std::to_string(i) + "]"));
  if (out.size() != d) invalid(where, "expected " + std::to_string(d) + " entries");
  return out;
}

template <typename Fn>
auto as_validation(const std::string& where, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::validation) throw;
    invalid(where, e.what());
  }
}

Pipeline parse_pipeline(const std::string& s, const std::string& where) {
  if (s == "run") return Pipeline::run;
  if (s == "sweep") return Pipeline::sweep;
  if (s == "certify") return Pipeline::certify;
  invalid(where, "expected one of run, sweep, certify");
}

// ---------------------------------------------------------------------------
// Space
// ---------------------------------------------------------------------------

ActionSpace parse_space(const json& j) {
  const std::string where = "space";
  if (!j.is_object()) invalid(where, "expected an object");
  const std::string kind = j.contains("kind") ? get_string(j["kind"], where + ".kind") : "box";
  const std::size_t d =
      j.contains("dimension") ? static_cast<std::size_t>(get_uint(j["dimension"], where + ".dimension")) : 1;
  if (d < 1) invalid(where + ".dimension", "must be >= 1");
  return as_validation(where, [&] {
    if (kind == "box") {
      check_keys(j, where, {"kind", "dimension", "lo", "hi"});
      const Vec lo = j.contains("lo") ? get_vector_or_scalar(j["lo"], d, where + ".lo") : Vec(d, -1.0);
      const Vec hi = j.contains("hi") ? get_vector_or_scalar(j["hi"], d, where + ".hi") : Vec(d, 1.0);
      return ActionSpace::box(lo, hi);
    }
    if (kind == "ball") {
      check_keys(j, where, {"kind", "dimension", "center", "radius"});
      const Vec c = j.contains("center") ? get_vector_or_scalar(j["center"], d, where + ".center") : Vec(d, 0.0);
      const double r = j.contains("radius") ? get_number(j["radius"], where + ".radius") : 1.0;
      return ActionSpace::ball(c, r);
    }
    if (kind == "simplex") {
      check_keys(j, where, {"kind", "dimension"});
      return ActionSpace::simplex(d);
    }
    invalid(where + ".kind", "expected one of box, ball, simplex");
  });
}

json space_json(const ActionSpace& s) {
  json j;
  j["kind"] = std::string(to_string(s.kind()));
  j["dimension"] = s.dimension();
  switch (s.kind()) {
    case SpaceKind::box:
      j["lo"] = s.lo();
      j["hi"] = s.hi();
      break;
    case SpaceKind::ball:
      j["center"] = s.center();
      j["radius"] = s.radius();
      break;
    case SpaceKind::simplex:
      break;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Learners
// ---------------------------------------------------------------------------

json ogd_json(const learners::OgdConfig& c) {
  json j;
  j["schedule"] = c.schedule == learners::StepSchedule::constant ? "constant" : "sqrt_decay";
  j["eta"] = c.eta;
  j["gradient_bound"] = c.gradient_bound ? json(*c.gradient_bound) : json(nullptr);
  return j;
}

void parse_ogd_fields(const json& j, const std::string& where, learners::OgdConfig& c) {
  if (j.contains("schedule")) {
    const auto s = get_string(j["schedule"], where + ".schedule");
    if (s == "constant") {
      c.schedule = learners::StepSchedule::constant;
    } else if (s == "sqrt_decay") {
      c.schedule = learners::StepSchedule::sqrt_decay;
    } else {
      invalid(where + ".schedule", "expected constant or sqrt_decay");
    }
  }
  if (j.contains("eta")) {
    c.eta = get_number(j["eta"], where + ".eta");
    if (!(c.eta > 0.0)) invalid(where + ".eta", "must be > 0");
  }
  if (j.contains("gradient_bound")) {
    c.gradient_bound = get_optional_number(j["gradient_bound"], where + ".gradient_bound");
    if (c.gradient_bound && !(*c.gradient_bound > 0.0)) invalid(where + ".gradient_bound", "must be > 0");
  }
}

json learner_json(const learners::LearnerSpec& s) {
  json j;
  j["type"] = s.type;
  j["name"] = s.id();
  if (s.type == "ogd") {
    j.update(ogd_json(s.ogd));
  } else if (s.type == "meta_expert") {
    j["num_experts"] = s.meta.num_experts ? json(*s.meta.num_experts) : json(nullptr);
    j["meta_rate"] = s.meta.meta_rate ? json(*s.meta.meta_rate) : json(nullptr);
    j["gradient_bound"] = s.meta.gradient_bound ? json(*s.meta.gradient_bound) : json(nullptr);
  } else if (s.type == "windowed") {
    j["window"] = s.window;
  } else if (s.type == "restart") {
    j["period"] = s.restart.period;
    j.update(ogd_json(s.restart.ogd));
  } else if (s.type == "regime") {
    j["transition_table"] = s.regime.transition_table;
    j["gradient_bound"] = s.regime.gradient_bound ? json(*s.regime.gradient_bound) : json(nullptr);
  }
  return j;
}

learners::LearnerSpec parse_learner(const json& j, const std::string& where) {
  if (!j.is_object()) invalid(where, "expected an object");
  if (!j.contains("type")) invalid(where, "missing 'type'");
  learners::LearnerSpec s;
  s.type = get_string(j["type"], where + ".type");
  if (j.contains("name")) {
    s.name = get_string(j["name"], where + ".name");
    if (s.name.empty()) invalid(where + ".name", "must not be empty");
    for (char c : s.name) {
      if (c == ',' || c == '"' || c == '\n' || c == '\r' || c == '/') {
        invalid(where + ".name", "must not contain ',', '\"', '/' or line breaks");
      }
    }
  }
  if (s.type == "ogd") {
    check_keys(j, where, {"type", "name", "schedule", "eta", "gradient_bound"});
    parse_ogd_fields(j, where, s.ogd);
  } else if (s.type == "greedy") {
    check_keys(j, where, {"type", "name"});
  } else if (s.type == "meta_expert") {
    check_keys(j, where, {"type", "name", "num_experts", "meta_rate", "gradient_bound"});
    if (j.contains("num_experts") && !j["num_experts"].is_null()) {
      s.meta.num_experts = static_cast<std::size_t>(get_uint(j["num_experts"], where + ".num_experts"));
      if (*s.meta.num_experts < 1) invalid(where + ".num_experts", "must be >= 1");
    }
    if (j.contains("meta_rate")) {
      s.meta.meta_rate = get_optional_number(j["meta_rate"], where + ".meta_rate");
      if (s.meta.meta_rate && *s.meta.meta_rate < 0.0) invalid(where + ".meta_rate", "must be >= 0");
    }
    if (j.contains("gradient_bound")) {
      s.meta.gradient_bound = get_optional_number(j["gradient_bound"], where + ".gradient_bound");
      if (s.meta.gradient_bound && !(*s.meta.gradient_bound > 0.0)) {
        invalid(where + ".gradient_bound", "must be > 0");
      }
    }
  } else if (s.type == "windowed") {
    check_keys(j, where, {"type", "name", "window"});
    if (j.contains("window")) s.window = static_cast<std::size_t>(get_uint(j["window"], where + ".window"));
  } else if (s.type == "restart") {
    check_keys(j, where, {"type", "name", "period", "schedule", "eta", "gradient_bound"});
    if (j.contains("period")) {
      s.restart.period = static_cast<std::size_t>(get_uint(j["period"], where + ".period"));
      if (s.restart.period < 1) invalid(where + ".period", "must be >= 1");
    }
    parse_ogd_fields(j, where, s.restart.ogd);
  } else if (s.type == "regime") {
    check_keys(j, where, {"type", "name", "transition_table", "gradient_bound"});
    if (j.contains("transition_table")) {
      s.regime.transition_table = get_bool(j["transition_table"], where + ".transition_table");
    }
    if (j.contains("gradient_bound")) {
      s.regime.gradient_bound = get_optional_number(j["gradient_bound"], where + ".gradient_bound");
      if (s.regime.gradient_bound && !(*s.regime.gradient_bound > 0.0)) {
        invalid(where + ".gradient_bound", "must be > 0");
      }
    }
  } else {
    invalid(where + ".type", "unknown learner type '" + s.type + "'");
  }
  return s;
}

// ---------------------------------------------------------------------------
// Env
// ---------------------------------------------------------------------------

json env_json(const ExperimentConfig& c) {
  json j;
  j["family"] = std::string(to_string(c.env.family));
  j["horizon"] = c.horizon;
  j["levels"] = c.levels;
  j["block_size"] = c.env.block_size;
  j["num_states"] = c.env.num_states;
  j["noise_sd"] = c.env.noise_sd;
  j["jitter"] = c.env.jitter;
  j["eps_gap"] = c.env.eps_gap ? json(*c.env.eps_gap) : json(nullptr);
  return j;
}

void parse_env(const json& j, ExperimentConfig& c) {
  const std::string where = "env";
  check_keys(j, where, {"family", "horizon", "levels", "block_size", "num_states", "noise_sd", "jitter", "eps_gap"});
  if (!j.contains("family")) invalid(where, "missing 'family'");
  const auto name = get_string(j["family"], where + ".family");
  const auto family = parse_env_family(name);
  if (!family) invalid(where + ".family", "unknown environment family '" + name + "'");
  c.env.family = *family;
  if (j.contains("horizon")) c.horizon = static_cast<std::size_t>(get_uint(j["horizon"], where + ".horizon"));
  if (!j.contains("levels")) invalid(where, "missing 'levels'");
  if (!j["levels"].is_array() || j["levels"].empty()) invalid(where + ".levels", "expected a nonempty array");
  c.levels.clear();
  for (std::size_t i = 0; i < j["levels"].size(); ++i) {
    const double v = get_number(j["levels"][i], where + ".levels[" + std::to_string(i) + "]");
    if (v < 0.0) invalid(where + ".levels", "volatility levels must be >= 0");
    c.levels.push_back(v);
  }
  if (j.contains("block_size")) c.env.block_size = static_cast<std::size_t>(get_uint(j["block_size"], where + ".block_size"));
  if (j.contains("num_states")) c.env.num_states = static_cast<std::size_t>(get_uint(j["num_states"], where + ".num_states"));
  if (j.contains("noise_sd")) c.env.noise_sd = get_number(j["noise_sd"], where + ".noise_sd");
  if (j.contains("jitter")) c.env.jitter = get_bool(j["jitter"], where + ".jitter");
  if (j.contains("eps_gap")) c.env.eps_gap = get_optional_number(j["eps_gap"], where + ".eps_gap");
}

std::vector<std::size_t> parse_size_list(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) invalid(where, "expected a nonempty array");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(static_cast<std::size_t>(get_uint(j[i], where + "[" + std::to_string(i) + "]")));
  }
  return out;
}

json to_json(const ExperimentConfig& c, bool with_runtime) {
  json j;
  j["schema"] = std::string(kConfigSchema);
  j["name"] = c.name;
  j["pipeline"] = std::string(to_string(c.pipeline));
  j["seed"] = c.seed;
  if (with_runtime) {
    j["jobs"] = c.jobs;
    j["output_dir"] = c.output_dir;
  }
  j["space"] = space_json(c.space);
  j["env"] = env_json(c);
  j["K_grid"] = c.K_grid;
  j["repetitions"] = c.repetitions;
  j["horizons"] = c.horizons;
  j["volatility_rate"] = c.volatility_rate;
  json roster = json::array();
  for (const auto& l : c.learners) roster.push_back(learner_json(l));
  j["learners"] = roster;
  j["certify"] = {{"bootstrap", c.certify.fit.bootstrap_draws},
                  {"domination_scale", c.certify.fit.domination_scale},
                  {"delta", c.certify.sublinearity.delta},
                  {"min_reps", c.certify.fit.min_reps},
                  {"min_levels", c.certify.fit.min_levels}};
  j["output"] = {{"rounds", c.output.rounds}, {"timing", c.output.timing}, {"traces", c.output.traces}};
  return j;
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) fail(ErrorCode::io, "failed writing '" + path.string() + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot read '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::string join_action(const Vec& a) {
  std::string s;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i) s += ' ';
    s += format_double(a[i]);
  }
  return s;
}

json interval_json(const certify::Interval& i) { return json::array({i.lo, i.hi}); }

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json interval_or_null(const certify::Interval& i) {
  return json::array({finite_or_null(i.lo), finite_or_null(i.hi)});
}

json levels_json(const certify::SweepResult& s) {
  json arr = json::array();
  for (const auto& l : s.levels) {
    arr.push_back({{"v_target", l.v_target},
                   {"v_mean", l.v_mean},
                   {"v_sd", l.v_sd},
                   {"r_mean", l.r_mean},
                   {"r_sd", l.r_sd},
                   {"n", l.n()},
                   {"incomplete", l.incomplete}});
  }
  return arr;
}

json curve_json(const certify::ResponseCurve& c) {
  return {{"c", finite_or_null(c.c)},
          {"beta", finite_or_null(c.beta)},
          {"c_ci", interval_or_null(c.c_ci)},
          {"beta_ci", interval_or_null(c.beta_ci)},
          {"log_fit_levels", c.log_fit_levels},
          {"v_levels", c.v_levels},
          {"r_levels", c.r_levels},
          {"concave_fit", c.concave_fit},
          {"max_positive_second_difference", c.max_positive_second_difference},
          {"second_difference_band", c.second_difference_band},
          {"convex_kink", c.convex_kink},
          {"curvature", c.curvature},
          {"curvature_ci", interval_or_null(c.curvature_ci)},
          {"sublinear_in_T", std::string(certify::to_string(c.sublinear_in_T))},
          {"strictly_concave_in_V", std::string(certify::to_string(c.strictly_concave_in_V))},
          {"dominated_by_identity", std::string(certify::to_string(c.dominated_by_identity))},
          {"estimated_order", c.estimated_order ? json(*c.estimated_order) : json(nullptr)},
          {"tested_range", interval_json(c.tested_range)},
          {"notes", c.notes}};
}

json sublinearity_json(const certify::SublinearityResult& s) {
  return {{"slope", finite_or_null(s.slope)},
          {"ci", interval_or_null(s.ci)},
          {"verdict", std::string(certify::to_string(s.verdict))},
          {"shifted", s.shifted},
          {"shift", s.shift},
          {"horizons", s.horizons},
          {"mean_regret", s.mean_regret}};
}

std::string verdict_line(const std::string& learner, std::size_t K, const certify::ResponseCurve& c) {
  std::ostringstream os;
  os << "  " << learner << " K=" << K << ": beta=" << format_double(c.beta) << " ["
     << format_double(c.beta_ci.lo) << ", " << format_double(c.beta_ci.hi)
     << "] concave=" << certify::to_string(c.strictly_concave_in_V)
     << " dominated=" << certify::to_string(c.dominated_by_identity);
  return os.str();
}

struct Phase {
  std::string name;         // "sweep" or "horizon"
  char index_tag;           // 'L' or 'H'
  std::size_t count;        // levels or horizons
  std::size_t reps;
};

}  // namespace

std::string_view to_string(Pipeline p) {
  switch (p) {
    case Pipeline::run: return "run";
    case Pipeline::sweep: return "sweep";
    case Pipeline::certify: return "certify";
  }
  return "?";
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string cells_header() {
  return "run_id,learner,family,K,T,level,rep,seed,v_path,v_f,v_g,dyn_regret_worstUK,static_regret,"
         "wall_ms,status";
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

ExperimentConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::validation, std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "config",
             {"schema", "name", "pipeline", "seed", "jobs", "output_dir", "space", "env", "K_grid",
              "repetitions", "horizons", "volatility_rate", "learners", "certify", "output"});
  ExperimentConfig c;
  if (j.contains("schema") && get_string(j["schema"], "schema") != kConfigSchema) {
    invalid("schema", "expected '" + std::string(kConfigSchema) + "'");
  }
  if (j.contains("name")) c.name = get_string(j["name"], "name");
  if (j.contains("pipeline")) c.pipeline = parse_pipeline(get_string(j["pipeline"], "pipeline"), "pipeline");
  if (j.contains("seed")) c.seed = get_uint(j["seed"], "seed");
  if (j.contains("jobs")) c.jobs = static_cast<std::size_t>(get_uint(j["jobs"], "jobs"));
  if (j.contains("output_dir")) c.output_dir = get_string(j["output_dir"], "output_dir");
  if (j.contains("space")) c.space = parse_space(j["space"]);
  if (!j.contains("env")) invalid("config", "missing 'env'");
  parse_env(j["env"], c);
  if (j.contains("K_grid")) c.K_grid = parse_size_list(j["K_grid"], "K_grid");
  if (j.contains("repetitions")) c.repetitions = static_cast<std::size_t>(get_uint(j["repetitions"], "repetitions"));
  if (j.contains("horizons")) c.horizons = parse_size_list(j["horizons"], "horizons");
  if (j.contains("volatility_rate")) c.volatility_rate = get_number(j["volatility_rate"], "volatility_rate");
  if (!j.contains("learners")) invalid("config", "missing 'learners'");
  if (!j["learners"].is_array() || j["learners"].empty()) invalid("learners", "expected a nonempty array");
  for (std::size_t i = 0; i < j["learners"].size(); ++i) {
    c.learners.push_back(parse_learner(j["learners"][i], "learners[" + std::to_string(i) + "]"));
  }
  if (j.contains("certify")) {
    const auto& cj = j["certify"];
    check_keys(cj, "certify", {"bootstrap", "domination_scale", "delta", "min_reps", "min_levels"});
    if (cj.contains("bootstrap")) {
      const auto b = static_cast<std::size_t>(get_uint(cj["bootstrap"], "certify.bootstrap"));
      c.certify.fit.bootstrap_draws = b;
      c.certify.sublinearity.bootstrap_draws = b;
    }
    if (cj.contains("domination_scale")) {
      c.certify.fit.domination_scale = get_number(cj["domination_scale"], "certify.domination_scale");
    }
    if (cj.contains("delta")) c.certify.sublinearity.delta = get_number(cj["delta"], "certify.delta");
    if (cj.contains("min_reps")) c.certify.fit.min_reps = static_cast<std::size_t>(get_uint(cj["min_reps"], "certify.min_reps"));
    if (cj.contains("min_levels")) {
      c.certify.fit.min_levels = static_cast<std::size_t>(get_uint(cj["min_levels"], "certify.min_levels"));
    }
  }
  if (j.contains("output")) {
    const auto& oj = j["output"];
    check_keys(oj, "output", {"rounds", "timing", "traces"});
    if (oj.contains("rounds")) c.output.rounds = get_bool(oj["rounds"], "output.rounds");
    if (oj.contains("timing")) c.output.timing = get_bool(oj["timing"], "output.timing");
    if (oj.contains("traces")) c.output.traces = get_bool(oj["traces"], "output.traces");
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    fail(ErrorCode::validation, e.what());
  }
  return parse_config(text);
}

void validate(const ExperimentConfig& c) {
  if (c.horizon < 1) invalid("env.horizon", "must be >= 1");
  if (c.levels.empty()) invalid("env.levels", "must not be empty");
  if (c.repetitions < 1) invalid("repetitions", "must be >= 1");
  if (c.jobs < 1) invalid("jobs", "must be >= 1");
  if (c.learners.empty()) invalid("learners", "must not be empty");
  if (c.K_grid.empty()) invalid("K_grid", "must not be empty");
  for (std::size_t i = 0; i < c.K_grid.size(); ++i) {
    if (c.K_grid[i] < 1) invalid("K_grid", "entries must be >= 1");
    if (i > 0 && c.K_grid[i] <= c.K_grid[i - 1]) invalid("K_grid", "must be strictly increasing");
  }
  std::set<std::string> ids;
  for (const auto& l : c.learners) {
    if (!ids.insert(l.id()).second) invalid("learners", "duplicate learner id '" + l.id() + "'");
  }
  if (!(c.certify.fit.domination_scale > 0.0)) invalid("certify.domination_scale", "must be > 0");
  if (!(c.certify.sublinearity.delta > 0.0 && c.certify.sublinearity.delta < 1.0)) {
    invalid("certify.delta", "must be in (0, 1)");
  }
  if (c.certify.fit.bootstrap_draws < 1) invalid("certify.bootstrap", "must be >= 1");
  if (c.env.noise_sd < 0.0) invalid("env.noise_sd", "must be >= 0");
  if (c.env.eps_gap && !(*c.env.eps_gap > 0.0)) invalid("env.eps_gap", "must be > 0");

  // Every planned environment must be generable. Rep 0 of each level stands
  // in for the others: the constraints do not depend on the seed.
  EnvSpec spec = c.env;
  spec.horizon = c.horizon;
  for (std::size_t i = 0; i < c.levels.size(); ++i) {
    spec.target_volatility = c.levels[i];
    as_validation("env.levels[" + std::to_string(i) + "]", [&] {
      env::generate(spec, c.space);
      return 0;
    });
  }
  if (c.pipeline == Pipeline::certify) {
    if (c.horizons.size() < 3) invalid("horizons", "certify needs at least three horizons");
    if (c.volatility_rate < 0.0) invalid("volatility_rate", "must be >= 0");
    for (std::size_t i = 0; i < c.horizons.size(); ++i) {
      if (c.horizons[i] < 1) invalid("horizons", "entries must be >= 1");
      spec.horizon = c.horizons[i];
      spec.target_volatility = c.volatility_rate * static_cast<double>(c.horizons[i]);
      as_validation("horizons[" + std::to_string(i) + "]", [&] {
        env::generate(spec, c.space);
        return 0;
      });
    }
  }
}

std::string config_json(const ExperimentConfig& c) { return to_json(c, true).dump(2) + "\n"; }

std::string config_hash(const ExperimentConfig& c) {
  const std::string canonical = to_json(c, false).dump();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(canonical)));
  return buf;
}

Plan plan(const ExperimentConfig& c, Pipeline pipeline) {
  Plan p;
  const std::size_t per_env = c.K_grid.size() * c.learners.size();
  p.sweep_environments = c.levels.size() * c.repetitions;
  p.sweep_rows = p.sweep_environments * per_env;
  if (pipeline == Pipeline::certify) {
    p.horizon_environments = c.horizons.size() * c.repetitions;
    p.horizon_rows = p.horizon_environments * per_env;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

Outcome execute(const ExperimentConfig& config_in, Pipeline pipeline) {
  ExperimentConfig config = config_in;
  config.pipeline = pipeline;
  validate(config);
  const std::string hash = config_hash(config);
  const std::string family(to_string(config.env.family));
  const std::size_t NL = config.learners.size();
  const std::size_t NK = config.K_grid.size();

  const certify::SweepPlan sweep_plan{config.env, config.space, config.levels, config.repetitions,
                                      config.horizon, config.seed, config.jobs};
  const certify::HorizonPlan horizon_plan{config.env,       config.space,      config.horizons,
                                          config.volatility_rate, config.repetitions, config.seed,
                                          config.jobs};

  std::vector<Phase> phases{{"sweep", 'L', config.levels.size(), config.repetitions}};
  if (pipeline == Pipeline::certify) {
    phases.push_back({"horizon", 'H', config.horizons.size(), config.repetitions});
  }

  const fs::path out_dir(config.output_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::io, "cannot create output directory '" + out_dir.string() + "': " + ec.message());
  if (config.output.traces) {
    fs::create_directories(out_dir / "traces", ec);
    if (ec) fail(ErrorCode::io, "cannot create traces directory: " + ec.message());
  }

  // evaluations[phase][env][learner]; records likewise when rounds are kept.
  struct EnvResult {
    std::uint64_t seed = 0;
    std::size_t horizon = 0;
    std::vector<certify::CellEvaluation> cells;
    std::vector<RunRecord> records;
  };
  std::vector<std::vector<EnvResult>> results(phases.size());
  for (std::size_t ph = 0; ph < phases.size(); ++ph) {
    auto& slots = results[ph];
    const auto& phase = phases[ph];
    slots.resize(phase.count * phase.reps);
    parallel_for(slots.size(), config.jobs, [&](std::size_t i) {
      const std::size_t idx = i / phase.reps;
      const std::size_t rep = i % phase.reps;
      const EnvironmentTrace trace = ph == 0 ? certify::sweep_environment(sweep_plan, idx, rep)
                                             : certify::horizon_environment(horizon_plan, idx, rep);
      auto& slot = slots[i];
      slot.seed = trace.spec.seed;
      slot.horizon = trace.horizon();
      slot.cells.resize(NL);
      if (config.output.rounds) slot.records.resize(NL);
      for (std::size_t l = 0; l < NL; ++l) {
        auto learner = learners::make_learner(config.learners[l], config.space, trace.horizon());
        slot.cells[l] = certify::evaluate_cell(trace, *learner, config.K_grid,
                                               config.output.rounds ? &slot.records[l] : nullptr);
      }
      if (config.output.traces) {
        const std::string file = phase.name + "-" + phase.index_tag + std::to_string(idx) + "-R" +
                                 std::to_string(rep) + ".json";
        write_file(out_dir / "traces" / file, trace_to_json(trace, hash));
      }
    });
  }

  Outcome outcome;
  json errors = json::array();

  // cells.csv
  std::string csv = "# antifrag " + std::string(kToolVersion) + " schema=" + std::string(kCellsSchema) +
                    " config_hash=" + hash + "\n" + cells_header() + "\n";
  std::string rounds;
  if (config.output.rounds) {
    rounds = "# antifrag " + std::string(kToolVersion) + " schema=rounds/1 config_hash=" + hash +
             "\nrun_id,learner,t,loss,cumulative,action\n";
  }
  for (std::size_t ph = 0; ph < phases.size(); ++ph) {
    const auto& phase = phases[ph];
    for (std::size_t l = 0; l < NL; ++l) {
      const std::string& lid = config.learners[l].id();
      for (std::size_t idx = 0; idx < phase.count; ++idx) {
        for (std::size_t rep = 0; rep < phase.reps; ++rep) {
          const auto& slot = results[ph][idx * phase.reps + rep];
          const auto& cell = slot.cells[l];
          const std::string base = phase.name + "/" + lid + "/" + phase.index_tag + std::to_string(idx) +
                                   "/R" + std::to_string(rep);
          if (!cell.complete) {
            ++outcome.aborted_cells;
            errors.push_back({{"run_id", base}, {"message", cell.error}});
          }
          for (std::size_t k = 0; k < NK; ++k) {
            std::string row = base + "/K" + std::to_string(config.K_grid[k]) + "," + lid + "," + family + "," +
                              std::to_string(config.K_grid[k]) + "," + std::to_string(slot.horizon) + "," +
                              std::to_string(idx) + "," + std::to_string(rep) + "," + std::to_string(slot.seed) + ",";
            if (cell.complete) {
              row += format_double(cell.scores[k].v_path) + "," + format_double(cell.v_f) + "," +
                     format_double(cell.v_g) + "," + format_double(cell.scores[k].dyn_regret) + "," +
                     format_double(cell.static_regret) + "," +
                     (config.output.timing ? format_double(cell.wall_ms) : std::string()) + ",ok";
            } else {
              row += ",,,,,,aborted";
            }
            csv += row + "\n";
            ++outcome.rows;
          }
          if (config.output.rounds && cell.complete) {
            const auto& rec = slot.records[l];
            for (std::size_t t = 0; t < rec.actions.size(); ++t) {
              rounds += base + "," + lid + "," + std::to_string(t + 1) + "," + format_double(rec.losses[t]) + "," +
                        format_double(rec.cumulative[t]) + "," + join_action(rec.actions[t]) + "\n";
            }
          }
        }
      }
    }
  }
  outcome.incomplete = outcome.aborted_cells > 0;

  // report.json
  json report;
  report["schema"] = std::string(kReportSchema);
  report["tool_version"] = std::string(kToolVersion);
  report["config_hash"] = hash;
  report["name"] = config.name;
  report["pipeline"] = std::string(to_string(pipeline));
  report["incomplete"] = outcome.incomplete;
  report["aborted_cells"] = outcome.aborted_cells;
  report["errors"] = errors;
  report["config"] = to_json(config, false);

  std::ostringstream summary;
  summary << config.name << ": " << to_string(pipeline) << ", " << outcome.rows << " cells";
  if (outcome.incomplete) summary << " (" << outcome.aborted_cells << " aborted runs)";
  summary << "\n";

  certify::CertifyOptions options = config.certify;
  options.fit.seed = split_seed(config.seed, "fit", 0);
  options.sublinearity.seed = split_seed(config.seed, "sublinearity", 0);

  json learners_out = json::array();
  for (std::size_t l = 0; l < NL; ++l) {
    const std::string& lid = config.learners[l].id();
    std::vector<certify::CellEvaluation> sweep_cells;
    for (const auto& slot : results[0]) sweep_cells.push_back(slot.cells[l]);
    auto sweeps = certify::assemble_sweeps(sweep_plan, lid, config.K_grid, sweep_cells);

    json entry;
    entry["learner"] = lid;
    entry["type"] = config.learners[l].type;
    json per_K = json::array();
    if (pipeline == Pipeline::certify) {
      std::vector<certify::CellEvaluation> horizon_cells;
      for (const auto& slot : results[1]) horizon_cells.push_back(slot.cells[l]);
      const auto points = certify::assemble_horizons(horizon_plan, config.K_grid, horizon_cells);
      const auto cert = certify::certify_from_data(lid, config.K_grid, std::move(sweeps), points, options);
      for (const auto& r : cert.per_K) {
        per_K.push_back({{"K", r.K},
                         {"levels", levels_json(r.sweep)},
                         {"fit", curve_json(r.curve)},
                         {"sublinearity", sublinearity_json(r.sublinearity)},
                         {"certified", r.certified}});
        summary << verdict_line(lid, r.K, r.curve) << " sublinear=" << certify::to_string(r.curve.sublinear_in_T)
                << "\n";
      }
      entry["certified_order"] = cert.order ? json(*cert.order) : json(nullptr);
      entry["regret_monotone_in_K"] = cert.regret_monotone_in_K;
      entry["summary"] = cert.summary;
      summary << "  " << lid << ": " << cert.summary << "\n";
    } else {
      for (const auto& s : sweeps) {
        json k_entry{{"K", s.K}, {"levels", levels_json(s)}};
        if (pipeline == Pipeline::sweep) {
          try {
            const auto curve = certify::fit_response(s, options.fit);
            k_entry["fit"] = curve_json(curve);
            summary << verdict_line(lid, s.K, curve) << "\n";
          } catch (const Error& e) {
            if (e.code() != ErrorCode::invalid_input) throw;
            k_entry["fit"] = nullptr;
            k_entry["fit_error"] = e.what();
            summary << "  " << lid << " K=" << s.K << ": no fit (" << e.what() << ")\n";
          }
        }
        per_K.push_back(std::move(k_entry));
      }
    }
    entry["per_K"] = per_K;
    learners_out.push_back(std::move(entry));
  }
  report["learners"] = learners_out;

  write_file(out_dir / "cells.csv", csv);
  outcome.files.push_back((out_dir / "cells.csv").string());
  if (config.output.rounds) {
    write_file(out_dir / "rounds.csv", rounds);
    outcome.files.push_back((out_dir / "rounds.csv").string());
  }
  write_file(out_dir / "report.json", report.dump(2) + "\n");
  outcome.files.push_back((out_dir / "report.json").string());
  outcome.summary = summary.str();
  return outcome;
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

namespace {

json registry() {
  json j;
  j["tool_version"] = std::string(kToolVersion);
  json learners_j = json::object();
  for (auto type : learners::learner_types()) {
    learners::LearnerSpec s;
    s.type = std::string(type);
    json d = learner_json(s);
    d.erase("type");
    d.erase("name");
    learners_j[std::string(type)] = d;
  }
  j["learners"] = learners_j;
  json fam = json::object();
  for (auto f : all_env_families()) {
    json params = json::array({"noise_sd"});
    switch (f) {
      case EnvFamily::piecewise: params.push_back("block_size"); break;
      case EnvFamily::drift: break;
      case EnvFamily::besbes_adversarial: params.push_back("eps_gap"); break;
      case EnvFamily::zhang_piecewise: break;
      case EnvFamily::latent_regime:
        params.push_back("block_size");
        params.push_back("num_states");
        params.push_back("jitter");
        break;
    }
    fam[std::string(to_string(f))] = {{"parameters", params}};
  }
  j["env_families"] = fam;

  ExperimentConfig defaults;
  defaults.levels = {0.5, 1.0, 2.0, 4.0, 8.0};
  for (auto type : learners::learner_types()) {
    learners::LearnerSpec s;
    s.type = std::string(type);
    defaults.learners.push_back(s);
  }
  j["default_config"] = to_json(defaults, true);
  return j;
}

}  // namespace

std::string registry_json() { return registry().dump(2) + "\n"; }

std::string registry_text() {
  const json r = registry();
  std::ostringstream os;
  os << "antifrag " << kToolVersion << "\n\nlearners:\n";
  for (const auto& [name, params] : r["learners"].items()) {
    os << "  " << name;
    if (!params.empty()) os << "  " << params.dump();
    os << "\n";
  }
  os << "\nenv families:\n";
  for (const auto& [name, info] : r["env_families"].items()) {
    os << "  " << name << "  parameters: ";
    bool first = true;
    for (const auto& p : info["parameters"]) {
      os << (first ? "" : ", ") << p.get<std::string>();
      first = false;
    }
    os << "\n";
  }
  os << "\nspaces: box {dimension, lo, hi}, ball {dimension, center, radius}, simplex {dimension}\n";
  os << "pipelines: run, sweep, certify\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

std::string trace_to_json(const EnvironmentTrace& t, std::string_view config_hash) {
  json j;
  j["schema"] = std::string(kTraceSchema);
  j["tool_version"] = std::string(kToolVersion);
  if (!config_hash.empty()) j["config_hash"] = std::string(config_hash);
  j["env_id"] = t.env_id;
  j["spec"] = {{"family", std::string(to_string(t.spec.family))},
               {"horizon", t.spec.horizon},
               {"target_volatility", t.spec.target_volatility},
               {"block_size", t.spec.block_size},
               {"num_states", t.spec.num_states},
               {"seed", t.spec.seed},
               {"noise_sd", t.spec.noise_sd},
               {"eps_gap", t.spec.eps_gap ? json(*t.spec.eps_gap) : json(nullptr)},
               {"jitter", t.spec.jitter}};
  j["space"] = space_json(t.space);
  json losses = json::array();
  for (const auto& l : t.losses) {
    if (l.kind() == LossKind::quadratic) {
      losses.push_back({{"kind", "quadratic"}, {"theta", l.param()}});
    } else {
      losses.push_back({{"kind", "linear"}, {"g", l.param()}});
    }
  }
  j["losses"] = losses;
  j["latent_states"] = t.latent_states ? json(*t.latent_states) : json(nullptr);
  j["switch_times"] = t.switch_times;
  j["meta"] = {{"realized_path_length", t.realized_path_length},
               {"clipping", t.clipping},
               {"eps_gap", t.eps_gap}};
  return j.dump() + "\n";
}

EnvironmentTrace trace_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::validation, std::string("trace is not valid JSON: ") + e.what());
  }
  check_keys(j, "trace",
             {"schema", "tool_version", "config_hash", "env_id", "spec", "space", "losses", "latent_states",
              "switch_times", "meta"});
  if (!j.contains("schema") || get_string(j["schema"], "trace.schema") != kTraceSchema) {
    invalid("trace.schema", "expected '" + std::string(kTraceSchema) + "'");
  }
  if (!j.contains("space") || !j.contains("losses")) invalid("trace", "needs 'space' and 'losses'");
  EnvironmentTrace t(parse_space(j["space"]));
  if (j.contains("env_id")) t.env_id = get_string(j["env_id"], "trace.env_id");
  if (j.contains("spec")) {
    const auto& s = j["spec"];
    check_keys(s, "trace.spec",
               {"family", "horizon", "target_volatility", "block_size", "num_states", "seed", "noise_sd", "eps_gap",
                "jitter"});
    if (s.contains("family")) {
      const auto f = parse_env_family(get_string(s["family"], "trace.spec.family"));
      if (!f) invalid("trace.spec.family", "unknown family");
      t.spec.family = *f;
    }
    if (s.contains("horizon")) t.spec.horizon = static_cast<std::size_t>(get_uint(s["horizon"], "trace.spec.horizon"));
    if (s.contains("target_volatility")) {
      t.spec.target_volatility = get_number(s["target_volatility"], "trace.spec.target_volatility");
    }
    if (s.contains("block_size")) {
      t.spec.block_size = static_cast<std::size_t>(get_uint(s["block_size"], "trace.spec.block_size"));
    }
    if (s.contains("num_states")) {
      t.spec.num_states = static_cast<std::size_t>(get_uint(s["num_states"], "trace.spec.num_states"));
    }
    if (s.contains("seed")) t.spec.seed = get_uint(s["seed"], "trace.spec.seed");
    if (s.contains("noise_sd")) t.spec.noise_sd = get_number(s["noise_sd"], "trace.spec.noise_sd");
    if (s.contains("eps_gap")) t.spec.eps_gap = get_optional_number(s["eps_gap"], "trace.spec.eps_gap");
    if (s.contains("jitter")) t.spec.jitter = get_bool(s["jitter"], "trace.spec.jitter");
  }
  const std::size_t d = t.space.dimension();
  if (!j["losses"].is_array() || j["losses"].empty()) invalid("trace.losses", "expected a nonempty array");
  for (std::size_t i = 0; i < j["losses"].size(); ++i) {
    const auto& l = j["losses"][i];
    const std::string where = "trace.losses[" + std::to_string(i) + "]";
    if (!l.is_object() || !l.contains("kind")) invalid(where, "expected an object with 'kind'");
    const auto kind = get_string(l["kind"], where + ".kind");
    if (kind == "quadratic") {
      check_keys(l, where, {"kind", "theta"});
      if (!l.contains("theta")) invalid(where, "missing 'theta'");
      t.losses.push_back(LossFunction::quadratic(get_vector_or_scalar(l["theta"], d, where + ".theta")));
    } else if (kind == "linear") {
      check_keys(l, where, {"kind", "g"});
      if (!l.contains("g")) invalid(where, "missing 'g'");
      t.losses.push_back(LossFunction::linear(get_vector_or_scalar(l["g"], d, where + ".g")));
    } else {
      invalid(where + ".kind", "expected quadratic or linear");
    }
  }
  if (j.contains("latent_states") && !j["latent_states"].is_null()) {
    std::vector<int> states;
    for (const auto& s : j["latent_states"]) {
      if (!s.is_number_integer()) invalid("trace.latent_states", "expected integers");
      states.push_back(s.get<int>());
    }
    t.latent_states = std::move(states);
  }
  if (j.contains("switch_times")) {
    for (const auto& s : j["switch_times"]) {
      t.switch_times.push_back(static_cast<std::size_t>(get_uint(s, "trace.switch_times")));
    }
  }
  if (j.contains("meta")) {
    const auto& m = j["meta"];
    check_keys(m, "trace.meta", {"realized_path_length", "clipping", "eps_gap"});
    if (m.contains("realized_path_length")) {
      t.realized_path_length = get_number(m["realized_path_length"], "trace.meta.realized_path_length");
    }
    if (m.contains("clipping")) t.clipping = get_number(m["clipping"], "trace.meta.clipping");
    if (m.contains("eps_gap")) t.eps_gap = get_number(m["eps_gap"], "trace.meta.eps_gap");
  }
  as_validation("trace", [&] {
    t.validate();
    return 0;
  });
  return t;
}

EnvironmentTrace load_trace(const std::string& path) { return trace_from_json(read_file(path)); }

std::string replay(const EnvironmentTrace& trace, const ExperimentConfig* config) {
  std::vector<learners::LearnerSpec> roster;
  std::vector<std::size_t> K_grid{1};
  bool timing = false;
  if (config != nullptr) {
    roster = config->learners;
    K_grid = config->K_grid;
    timing = config->output.timing;
  } else {
    for (auto type : learners::learner_types()) {
      learners::LearnerSpec s;
      s.type = std::string(type);
      roster.push_back(s);
    }
  }
  const std::string family(to_string(trace.spec.family));
  std::string csv = "# antifrag " + std::string(kToolVersion) + " schema=" + std::string(kCellsSchema) +
                    " env_id=" + trace.env_id + "\n" + cells_header() + "\n";
  for (const auto& spec : roster) {
    auto learner = learners::make_learner(spec, trace.space, trace.horizon());
    const auto cell = certify::evaluate_cell(trace, *learner, K_grid);
    for (std::size_t k = 0; k < K_grid.size(); ++k) {
      std::string row = "replay/" + spec.id() + "/K" + std::to_string(K_grid[k]) + "," + spec.id() + "," + family +
                        "," + std::to_string(K_grid[k]) + "," + std::to_string(trace.horizon()) + ",0,0," +
                        std::to_string(trace.spec.seed) + ",";
      if (cell.complete) {
        row += format_double(cell.scores[k].v_path) + "," + format_double(cell.v_f) + "," + format_double(cell.v_g) +
               "," + format_double(cell.scores[k].dyn_regret) + "," + format_double(cell.static_regret) + "," +
               (timing ? format_double(cell.wall_ms) : std::string()) + ",ok";
      } else {
        row += ",,,,,,aborted";
      }
      csv += row + "\n";
    }
  }
  return csv;
}

}  // namespace antifrag::harness
