#include <filesystem>

#include "doctest.h"
#include "dvio.h"
#include "dvio/config.hpp"
#include "dvio/pipeline.hpp"
#include "dvio/util.hpp"

using namespace dvio;

namespace {

// A short mission that exercises gen/eval/fly quickly at a small image size.
Config small_gen_config(const std::string& out) {
  Config cfg;
  cfg.set("out", out);
  cfg.set("seed", "7");
  cfg.set("duration_s", "4.1");
  cfg.append("wp", "0,-0.6,0.4,1.5");
  cfg.append("wp", "4.2,0.6,-0.4,1.2");
  cfg.set("pad", "0.6,-0.4");
  cfg.set("img_h", "12");
  cfg.set("img_w", "16");
  cfg.set("corrupt_fraction", "0.2");
  return cfg;
}

std::string slurp(const std::string& path) { return read_text_file(path); }

}  // namespace

TEST_CASE("config: precedence, repeats, round trip") {
  Config cfg = Config::from_string("a = 1\nb = x\nwp = 0,0,0,1\nwp = 1,1,1,1\n# comment\n");
  CHECK(cfg.get_double("a", 0) == 1.0);
  CHECK(cfg.get_string("b", "") == "x");
  CHECK(cfg.get_all("wp").size() == 2);
  cfg.append("a", "2");  // later entries win lookups
  CHECK(cfg.get_double("a", 0) == 2.0);

  Config back = Config::from_string(cfg.to_string());
  CHECK(back.get_all("wp") == cfg.get_all("wp"));

  CHECK_THROWS_AS(Config::from_string("novalue\n"), Error);
  CHECK_THROWS_AS(cfg.get_double("b", 0), Error);
}

TEST_CASE("run_gen: layout, counts, determinism, echo round trip") {
  std::string out = "pipe_gen";
  auto res = pipeline::run_gen(small_gen_config(out));
  CHECK(res.metric("n_observations", 0) == 40.0);
  CHECK(res.metric("n_frames", 0) == 41.0);
  CHECK(res.metric("n_corrupted", 0) == 8.0);
  CHECK(res.metric("n_train", 0) == 32.0);
  CHECK(res.metric("n_test", 0) == 8.0);
  for (const char* f : {"/imu.csv", "/frames.csv", "/groundtruth.csv", "/dataset.meta",
                        "/config.echo", "/train/imu.csv", "/test/imu.csv"})
    CHECK(file_exists(out + f));

  std::string imu_first = slurp(out + "/imu.csv");
  pipeline::run_gen(small_gen_config(out));
  CHECK(slurp(out + "/imu.csv") == imu_first);

  // Echo reproduces the run.
  Config echo = Config::from_file(out + "/config.echo");
  echo.set("out", "pipe_gen_echo");
  pipeline::run_gen(echo);
  CHECK(slurp("pipe_gen_echo/imu.csv") == imu_first);
  CHECK(slurp("pipe_gen_echo/groundtruth.csv") == slurp(out + "/groundtruth.csv"));
}

TEST_CASE("run_eval with the truth estimator reports zero rmse") {
  std::string data = "pipe_eval_data";
  pipeline::run_gen(small_gen_config(data));

  Config cfg;
  cfg.set("out", "pipe_eval");
  cfg.set("data", data);
  cfg.set("estimator", "truth");
  auto res = pipeline::run_eval(cfg);
  CHECK(res.metric("trans_rmse_m", -1) == 0.0);
  CHECK(res.metric("rot_rmse_rad", -1) == 0.0);
  CHECK(file_exists("pipe_eval/eval_overlay.csv"));
  CHECK(file_exists("pipe_eval/eval_traj.svg"));
  CHECK(file_exists("pipe_eval/eval_summary.txt"));
}

TEST_CASE("run_bound self test prints the golden ratio") {
  Config cfg;
  cfg.set("out", "pipe_bound_self");
  cfg.set("self_test", "true");
  auto res = pipeline::run_bound(cfg);
  CHECK(res.metric("riccati_scalar_fixed_point", 0) ==
        doctest::Approx(1.6180339887498949).epsilon(1e-9));
  CHECK(res.summary.find("1.618") != std::string::npos);
}

TEST_CASE("run_bound on a dataset with kf estimator") {
  std::string data = "pipe_bound_data";
  Config gen = small_gen_config(data);
  gen.set("corrupt_fraction", "0");
  pipeline::run_gen(gen);

  Config cfg;
  cfg.set("out", "pipe_bound");
  cfg.set("data", data);
  cfg.set("estimator", "truth");
  auto res = pipeline::run_bound(cfg);
  CHECK(res.metric("ml_rmse_m", -1) == 0.0);
  CHECK(res.metric("kf_rmse_m", 0) > 0.0);
  CHECK(res.metric("kf_steady_std_m", 0) > 0.0);
  std::string csv = slurp("pipe_bound/bound_report.csv");
  CHECK(csv.rfind("timestamp_s,kf_err_m,ml_err_m,kf_steady_std_m", 0) == 0);
}

TEST_CASE("run_fly truth estimator: landing, determinism") {
  Config cfg;
  cfg.set("out", "pipe_fly");
  cfg.set("seed", "7");
  cfg.append("wp", "0,0.8,-0.6,1.5");
  cfg.append("wp", "3,0,0,1.5");
  cfg.append("wp", "4,0,0,1.5");
  cfg.set("pad", "0,0");
  cfg.set("estimator", "truth");
  cfg.set("timeout", "20");
  auto res = pipeline::run_fly(cfg);
  CHECK(res.metric("touched_down", 0) == 1.0);
  CHECK(res.metric("landing_error_m", 1) < 0.05);
  CHECK(res.metric("touchdown_time_s", 100) < 10.0);
  std::string log = slurp("pipe_fly/flight_log.csv");

  cfg.set("out", "pipe_fly2");
  pipeline::run_fly(cfg);
  CHECK(slurp("pipe_fly2/flight_log.csv") == log);
}

TEST_CASE("run_report regenerates training plots") {
  ensure_dir("pipe_report");
  write_text_file("pipe_report/train_log.csv",
                  "epoch,train_loss,val_trans_rmse_m,val_rot_rmse_rad,s_x,s_q\n"
                  "1,2.0,0.5,0.1,0.0,-3.0\n2,1.0,0.4,0.09,0.01,-2.9\n");
  Config cfg;
  cfg.set("out", "pipe_report");
  auto res = pipeline::run_report(cfg);
  CHECK(res.metric("files_written", 0) == 2.0);
  CHECK(file_exists("pipe_report/train_loss.svg"));
}

TEST_CASE("pipeline errors carry useful kinds") {
  Config cfg;  // missing out
  CHECK_THROWS_AS(pipeline::run_gen(cfg), Error);
  cfg.set("out", "pipe_err");
  CHECK_THROWS_AS(pipeline::run_gen(cfg), Error);  // no waypoints
  Config ev;
  ev.set("out", "pipe_err");
  CHECK_THROWS_AS(pipeline::run_eval(ev), Error);  // no data
}

TEST_CASE("c api: config handling and a full gen run") {
  dvio_config* cfg = dvio_config_new();
  REQUIRE(cfg != nullptr);
  CHECK(dvio_config_set(cfg, "out", "capi_gen") == DVIO_OK);
  CHECK(dvio_config_set(cfg, "duration_s", "2.1") == DVIO_OK);
  CHECK(dvio_config_set(cfg, "img_h", "12") == DVIO_OK);
  CHECK(dvio_config_set(cfg, "img_w", "16") == DVIO_OK);
  CHECK(dvio_config_append(cfg, "wp", "0,0,0,1.5") == DVIO_OK);
  CHECK(dvio_config_append(cfg, "wp", "2.2,0.4,0,1.5") == DVIO_OK);
  CHECK(std::string(dvio_config_get(cfg, "out")) == "capi_gen");
  CHECK(dvio_config_get(cfg, "missing") == nullptr);

  dvio_run* run = nullptr;
  dvio_status st = dvio_gen(cfg, &run);
  REQUIRE(st == DVIO_OK);
  REQUIRE(run != nullptr);
  CHECK(dvio_run_metric(run, "n_observations", 0) == 20.0);
  CHECK(dvio_run_has_metric(run, "n_train") == 1);
  CHECK(std::string(dvio_run_summary(run)).find("generated") != std::string::npos);
  dvio_run_free(run);
  dvio_config_free(cfg);
}

TEST_CASE("c api: errors set status and message") {
  dvio_config* cfg = dvio_config_new();
  dvio_config_set(cfg, "out", "capi_err");
  dvio_run* run = nullptr;
  dvio_status st = dvio_gen(cfg, &run);  // no waypoints
  CHECK(st == DVIO_ERR_INVALID_ARGUMENT);
  CHECK(run == nullptr);
  CHECK(std::string(dvio_last_error()).find("waypoint") != std::string::npos);

  CHECK(dvio_config_load_file(cfg, "no_such_file.cfg") == DVIO_ERR_IO);
  CHECK(dvio_gen(nullptr, &run) == DVIO_ERR_INVALID_ARGUMENT);
  dvio_config_free(cfg);
}
