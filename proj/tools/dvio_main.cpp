// Command-line frontend. Talks to the core library exclusively through the
// C API in dvio.h; flag precedence is flags > --config file > built-in
// defaults.
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dvio.h"

namespace {

struct ConfigHandle {
  dvio_config* cfg = dvio_config_new();
  ~ConfigHandle() { dvio_config_free(cfg); }
};

struct RunHandle {
  dvio_run* run = nullptr;
  ~RunHandle() { dvio_run_free(run); }
};

int fail_status(const char* what, dvio_status st) {
  std::fprintf(stderr, "error: %s failed (%d): %s\n", what, static_cast<int>(st),
               dvio_last_error());
  return 2;
}

struct CommonArgs {
  std::string out;
  std::string config_file;
  std::vector<std::string> sets;
  long seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--out", args.out, "Output directory")->required();
  cmd->add_option("--config", args.config_file, "key=value configuration file");
  cmd->add_option("--set", args.sets, "Extra key=value override (repeatable)");
  cmd->add_option("--seed", args.seed, "Random seed");
}

int apply_common(dvio_config* cfg, const CommonArgs& args) {
  if (!args.config_file.empty()) {
    dvio_status st = dvio_config_load_file(cfg, args.config_file.c_str());
    if (st != DVIO_OK) return fail_status("loading config", st);
  }
  for (const auto& kv : args.sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set needs key=value, got '%s'\n", kv.c_str());
      return 2;
    }
    dvio_config_set(cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
  }
  dvio_config_set(cfg, "out", args.out.c_str());
  if (args.seed >= 0) dvio_config_set(cfg, "seed", std::to_string(args.seed).c_str());
  return 0;
}

using Command = dvio_status (*)(const dvio_config*, dvio_run**);

int execute(Command fn, const char* name, dvio_config* cfg, RunHandle& run) {
  dvio_status st = fn(cfg, &run.run);
  if (st != DVIO_OK) return fail_status(name, st);
  std::fputs(dvio_run_summary(run.run), stdout);
  return 0;
}

int check_assert(const RunHandle& run, const char* metric, double threshold, const char* label) {
  double v = dvio_run_metric(run.run, metric, -1.0);
  if (v < 0.0 || v > threshold) {
    std::fprintf(stderr, "assert failed: %s = %g exceeds %g\n", label, v, threshold);
    return 1;
  }
  std::printf("assert ok: %s = %g <= %g\n", label, v, threshold);
  return 0;
}

void set_if(dvio_config* cfg, const char* key, const std::string& v) {
  if (!v.empty()) dvio_config_set(cfg, key, v.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned visual-inertial odometry: data generation, training, evaluation, "
               "filter bounds, and closed-loop flight"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  CommonArgs gen_args;
  add_common(gen, gen_args);
  double gen_duration = -1.0, gen_corrupt = -1.0;
  gen->add_option("--duration", gen_duration, "Recording length [s]");
  gen->add_option("--corrupt", gen_corrupt, "Fraction of frames to corrupt");

  auto* train = app.add_subcommand("train", "Train the fusion model");
  CommonArgs train_args;
  add_common(train, train_args);
  std::string train_data, train_loss, train_resume;
  long train_epochs = -1;
  double train_beta = -1.0, train_lr = -1.0;
  train->add_option("--data", train_data, "Dataset directory")->required();
  train->add_option("--epochs", train_epochs, "Training epochs");
  train->add_option("--loss", train_loss, "Loss mode: sigma | beta");
  train->add_option("--beta", train_beta, "Fixed rotation weight (beta mode)");
  train->add_option("--lr", train_lr, "Adam learning rate");
  train->add_option("--resume", train_resume, "Checkpoint to continue from");

  auto* eval = app.add_subcommand("eval", "Open-loop evaluation on a dataset");
  CommonArgs eval_args;
  add_common(eval, eval_args);
  std::string eval_data, eval_ckpt, eval_estimator;
  double eval_assert_rmse = -1.0;
  eval->add_option("--data", eval_data, "Dataset directory")->required();
  eval->add_option("--checkpoint", eval_ckpt, "Model checkpoint");
  eval->add_option("--estimator", eval_estimator, "truth | kf | learned");
  eval->add_option("--assert-rmse", eval_assert_rmse,
                   "Exit nonzero if translation RMSE [m] exceeds this");

  auto* bound = app.add_subcommand("bound", "Kalman steady-state bound analysis");
  CommonArgs bound_args;
  add_common(bound, bound_args);
  std::string bound_data, bound_ckpt, bound_estimator;
  bool bound_self_test = false;
  bound->add_option("--data", bound_data, "Dataset directory");
  bound->add_option("--checkpoint", bound_ckpt, "Model checkpoint");
  bound->add_option("--estimator", bound_estimator, "truth | kf | learned");
  bound->add_flag("--self-test", bound_self_test, "Run the scalar Riccati fixed-point check");

  auto* fly = app.add_subcommand("fly", "Closed-loop flight and landing");
  CommonArgs fly_args;
  add_common(fly, fly_args);
  std::string fly_mission, fly_ckpt, fly_estimator;
  double fly_assert_landing = -1.0;
  fly->add_option("--mission", fly_mission, "Mission file (waypoints, pad)");
  fly->add_option("--checkpoint", fly_ckpt, "Model checkpoint");
  fly->add_option("--estimator", fly_estimator, "truth | kf | learned");
  fly->add_option("--assert-landing", fly_assert_landing,
                  "Exit nonzero if landing error [m] exceeds this");

  auto* report = app.add_subcommand("report", "Re-emit plots from run artifacts");
  CommonArgs report_args;
  add_common(report, report_args);

  CLI11_PARSE(app, argc, argv);

  ConfigHandle cfg;
  RunHandle run;

  if (gen->parsed()) {
    if (int rc = apply_common(cfg.cfg, gen_args)) return rc;
    if (gen_duration >= 0.0)
      dvio_config_set(cfg.cfg, "duration_s", std::to_string(gen_duration).c_str());
    if (gen_corrupt >= 0.0)
      dvio_config_set(cfg.cfg, "corrupt_fraction", std::to_string(gen_corrupt).c_str());
    return execute(&dvio_gen, "gen", cfg.cfg, run);
  }

  if (train->parsed()) {
    if (int rc = apply_common(cfg.cfg, train_args)) return rc;
    dvio_config_set(cfg.cfg, "data", train_data.c_str());
    if (train_epochs >= 0) dvio_config_set(cfg.cfg, "epochs", std::to_string(train_epochs).c_str());
    set_if(cfg.cfg, "loss", train_loss);
    if (train_beta >= 0.0) dvio_config_set(cfg.cfg, "beta", std::to_string(train_beta).c_str());
    if (train_lr >= 0.0) dvio_config_set(cfg.cfg, "lr", std::to_string(train_lr).c_str());
    set_if(cfg.cfg, "resume", train_resume);
    return execute(&dvio_train, "train", cfg.cfg, run);
  }

  if (eval->parsed()) {
    if (int rc = apply_common(cfg.cfg, eval_args)) return rc;
    dvio_config_set(cfg.cfg, "data", eval_data.c_str());
    set_if(cfg.cfg, "checkpoint", eval_ckpt);
    set_if(cfg.cfg, "estimator", eval_estimator);
    if (int rc = execute(&dvio_eval, "eval", cfg.cfg, run)) return rc;
    if (eval_assert_rmse >= 0.0)
      return check_assert(run, "trans_rmse_m", eval_assert_rmse, "translation rmse");
    return 0;
  }

  if (bound->parsed()) {
    if (int rc = apply_common(cfg.cfg, bound_args)) return rc;
    set_if(cfg.cfg, "data", bound_data);
    set_if(cfg.cfg, "checkpoint", bound_ckpt);
    set_if(cfg.cfg, "estimator", bound_estimator);
    if (bound_self_test) dvio_config_set(cfg.cfg, "self_test", "true");
    return execute(&dvio_bound, "bound", cfg.cfg, run);
  }

  if (fly->parsed()) {
    if (int rc = apply_common(cfg.cfg, fly_args)) return rc;
    set_if(cfg.cfg, "mission", fly_mission);
    set_if(cfg.cfg, "checkpoint", fly_ckpt);
    set_if(cfg.cfg, "estimator", fly_estimator);
    if (int rc = execute(&dvio_fly, "fly", cfg.cfg, run)) return rc;
    if (fly_assert_landing >= 0.0) {
      if (dvio_run_metric(run.run, "touched_down", 0.0) < 0.5) {
        std::fprintf(stderr, "assert failed: no touchdown\n");
        return 1;
      }
      return check_assert(run, "landing_error_m", fly_assert_landing, "landing error");
    }
    return 0;
  }

  if (report->parsed()) {
    if (int rc = apply_common(cfg.cfg, report_args)) return rc;
    return execute(&dvio_report, "report", cfg.cfg, run);
  }

  return 0;
}
