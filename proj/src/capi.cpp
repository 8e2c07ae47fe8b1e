#include "dvio.h"

#include <string>

#include "dvio/config.hpp"
#include "dvio/pipeline.hpp"
#include "dvio/util.hpp"

struct dvio_config {
  dvio::Config impl;
  std::string scratch;  // backs dvio_config_get
};

struct dvio_run {
  dvio::pipeline::RunResult impl;
};

namespace {

thread_local std::string g_last_error;

dvio_status status_from(const dvio::Error& e) {
  switch (e.kind()) {
    case dvio::ErrorKind::InvalidArgument: return DVIO_ERR_INVALID_ARGUMENT;
    case dvio::ErrorKind::DimensionMismatch: return DVIO_ERR_DIMENSION;
    case dvio::ErrorKind::MalformedData: return DVIO_ERR_MALFORMED_DATA;
    case dvio::ErrorKind::Io: return DVIO_ERR_IO;
    case dvio::ErrorKind::NumericFault: return DVIO_ERR_NUMERIC;
    case dvio::ErrorKind::NonConvergence: return DVIO_ERR_NO_CONVERGENCE;
    case dvio::ErrorKind::DegenerateInput: return DVIO_ERR_DEGENERATE;
  }
  return DVIO_ERR_INTERNAL;
}

template <typename Fn>
dvio_status guarded(Fn&& fn) {
  try {
    fn();
    return DVIO_OK;
  } catch (const dvio::Error& e) {
    g_last_error = e.what();
    return status_from(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DVIO_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return DVIO_ERR_INTERNAL;
  }
}

using CommandFn = dvio::pipeline::RunResult (*)(const dvio::Config&);

dvio_status run_command(CommandFn fn, const dvio_config* cfg, dvio_run** out_run) {
  if (!cfg || !out_run) {
    g_last_error = "null argument";
    return DVIO_ERR_INVALID_ARGUMENT;
  }
  *out_run = nullptr;
  return guarded([&] { *out_run = new dvio_run{fn(cfg->impl)}; });
}

}  // namespace

extern "C" {

const char* dvio_version(void) { return "dvio 1.0.0"; }

const char* dvio_last_error(void) { return g_last_error.c_str(); }

dvio_config* dvio_config_new(void) { return new dvio_config(); }

void dvio_config_free(dvio_config* cfg) { delete cfg; }

dvio_status dvio_config_load_file(dvio_config* cfg, const char* path) {
  if (!cfg || !path) {
    g_last_error = "null argument";
    return DVIO_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] { cfg->impl.merge_from(dvio::Config::from_file(path)); });
}

dvio_status dvio_config_set(dvio_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) {
    g_last_error = "null argument";
    return DVIO_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] { cfg->impl.override_key(key, value); });
}

dvio_status dvio_config_append(dvio_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) {
    g_last_error = "null argument";
    return DVIO_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] { cfg->impl.append(key, value); });
}

const char* dvio_config_get(dvio_config* cfg, const char* key) {
  if (!cfg || !key) return nullptr;
  auto v = cfg->impl.get(key);
  if (!v) return nullptr;
  cfg->scratch = *v;
  return cfg->scratch.c_str();
}

dvio_status dvio_gen(const dvio_config* cfg, dvio_run** out_run) {
  return run_command(&dvio::pipeline::run_gen, cfg, out_run);
}
dvio_status dvio_train(const dvio_config* cfg, dvio_run** out_run) {
  return run_command(&dvio::pipeline::run_train, cfg, out_run);
}
dvio_status dvio_eval(const dvio_config* cfg, dvio_run** out_run) {
  return run_command(&dvio::pipeline::run_eval, cfg, out_run);
}
dvio_status dvio_bound(const dvio_config* cfg, dvio_run** out_run) {
  return run_command(&dvio::pipeline::run_bound, cfg, out_run);
}
dvio_status dvio_fly(const dvio_config* cfg, dvio_run** out_run) {
  return run_command(&dvio::pipeline::run_fly, cfg, out_run);
}
dvio_status dvio_report(const dvio_config* cfg, dvio_run** out_run) {
  return run_command(&dvio::pipeline::run_report, cfg, out_run);
}

void dvio_run_free(dvio_run* run) { delete run; }

double dvio_run_metric(const dvio_run* run, const char* name, double fallback) {
  if (!run || !name) return fallback;
  return run->impl.metric(name, fallback);
}

int dvio_run_has_metric(const dvio_run* run, const char* name) {
  if (!run || !name) return 0;
  return run->impl.metrics.count(name) ? 1 : 0;
}

const char* dvio_run_summary(const dvio_run* run) {
  if (!run) return "";
  return run->impl.summary.c_str();
}

}  // extern "C"
