#include "antifrag/antifrag.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "antifrag/harness.hpp"

struct af_experiment {
  antifrag::harness::ExperimentConfig config;
};

namespace {

thread_local std::string last_error;

af_status status_of(antifrag::ErrorCode code) {
  using antifrag::ErrorCode;
  switch (code) {
    case ErrorCode::validation:
    case ErrorCode::invalid_spec:
    case ErrorCode::invalid_input:
    case ErrorCode::unsupported: return AF_E_VALIDATION;
    case ErrorCode::aborted: return AF_E_ABORTED;
    case ErrorCode::io: return AF_E_IO;
  }
  return AF_E_INTERNAL;
}

template <typename Fn>
af_status guarded(Fn&& fn) {
  try {
    last_error.clear();
    return fn();
  } catch (const antifrag::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return AF_E_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return AF_E_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return AF_E_INTERNAL;
  }
}

af_status bad_argument(const char* what) {
  last_error = what;
  return AF_E_INVALID_ARGUMENT;
}

char* duplicate(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

antifrag::harness::Pipeline pipeline_of(const af_experiment* exp, af_mode mode) {
  using antifrag::harness::Pipeline;
  switch (mode) {
    case AF_MODE_RUN: return Pipeline::run;
    case AF_MODE_SWEEP: return Pipeline::sweep;
    case AF_MODE_CERTIFY: return Pipeline::certify;
    case AF_MODE_CONFIG: break;
  }
  return exp->config.pipeline;
}

bool valid_mode(af_mode mode) { return mode >= AF_MODE_CONFIG && mode <= AF_MODE_CERTIFY; }

}  // namespace

extern "C" {

const char* af_version(void) {
  static const std::string v(antifrag::harness::kToolVersion);
  return v.c_str();
}

const char* af_last_error(void) { return last_error.c_str(); }

af_status af_experiment_load(const char* path, af_experiment** out) {
  if (path == nullptr || out == nullptr) return bad_argument("af_experiment_load: null argument");
  *out = nullptr;
  return guarded([&] {
    auto* exp = new af_experiment{antifrag::harness::load_config(path)};
    *out = exp;
    return AF_OK;
  });
}

af_status af_experiment_parse(const char* json_text, af_experiment** out) {
  if (json_text == nullptr || out == nullptr) return bad_argument("af_experiment_parse: null argument");
  *out = nullptr;
  return guarded([&] {
    auto* exp = new af_experiment{antifrag::harness::parse_config(json_text)};
    *out = exp;
    return AF_OK;
  });
}

void af_experiment_free(af_experiment* exp) { delete exp; }

af_status af_experiment_set_seed(af_experiment* exp, uint64_t seed) {
  if (exp == nullptr) return bad_argument("af_experiment_set_seed: null experiment");
  exp->config.seed = seed;
  return AF_OK;
}

af_status af_experiment_set_jobs(af_experiment* exp, size_t jobs) {
  if (exp == nullptr) return bad_argument("af_experiment_set_jobs: null experiment");
  if (jobs < 1) return bad_argument("af_experiment_set_jobs: jobs must be >= 1");
  exp->config.jobs = jobs;
  return AF_OK;
}

af_status af_experiment_set_output_dir(af_experiment* exp, const char* dir) {
  if (exp == nullptr || dir == nullptr) return bad_argument("af_experiment_set_output_dir: null argument");
  if (*dir == '\0') return bad_argument("af_experiment_set_output_dir: empty path");
  exp->config.output_dir = dir;
  return AF_OK;
}

af_status af_experiment_plan(const af_experiment* exp, af_mode mode, af_plan* out) {
  if (exp == nullptr || out == nullptr) return bad_argument("af_experiment_plan: null argument");
  if (!valid_mode(mode)) return bad_argument("af_experiment_plan: unknown mode");
  return guarded([&] {
    auto config = exp->config;
    config.pipeline = pipeline_of(exp, mode);
    antifrag::harness::validate(config);
    const auto p = antifrag::harness::plan(config, config.pipeline);
    out->sweep_environments = p.sweep_environments;
    out->horizon_environments = p.horizon_environments;
    out->rows = p.rows();
    return AF_OK;
  });
}

af_status af_experiment_execute(af_experiment* exp, af_mode mode, char** summary) {
  if (summary != nullptr) *summary = nullptr;
  if (exp == nullptr) return bad_argument("af_experiment_execute: null experiment");
  if (!valid_mode(mode)) return bad_argument("af_experiment_execute: unknown mode");
  return guarded([&] {
    const auto outcome = antifrag::harness::execute(exp->config, pipeline_of(exp, mode));
    if (summary != nullptr) *summary = duplicate(outcome.summary);
    if (outcome.incomplete) {
      last_error = std::to_string(outcome.aborted_cells) + " runs aborted; outputs are marked incomplete";
      return AF_E_ABORTED;
    }
    return AF_OK;
  });
}

af_status af_experiment_config_json(const af_experiment* exp, char** out) {
  if (exp == nullptr || out == nullptr) return bad_argument("af_experiment_config_json: null argument");
  return guarded([&] {
    *out = duplicate(antifrag::harness::config_json(exp->config));
    return AF_OK;
  });
}

af_status af_experiment_config_hash(const af_experiment* exp, char** out) {
  if (exp == nullptr || out == nullptr) return bad_argument("af_experiment_config_hash: null argument");
  return guarded([&] {
    *out = duplicate(antifrag::harness::config_hash(exp->config));
    return AF_OK;
  });
}

af_status af_registry(int as_json, char** out) {
  if (out == nullptr) return bad_argument("af_registry: null argument");
  return guarded([&] {
    *out = duplicate(as_json ? antifrag::harness::registry_json() : antifrag::harness::registry_text());
    return AF_OK;
  });
}

af_status af_replay(const char* trace_path, const af_experiment* exp, char** csv_out) {
  if (trace_path == nullptr || csv_out == nullptr) return bad_argument("af_replay: null argument");
  *csv_out = nullptr;
  return guarded([&] {
    const auto trace = antifrag::harness::load_trace(trace_path);
    *csv_out = duplicate(antifrag::harness::replay(trace, exp != nullptr ? &exp->config : nullptr));
    return AF_OK;
  });
}

void af_string_free(char* s) { std::free(s); }

}  // extern "C"
