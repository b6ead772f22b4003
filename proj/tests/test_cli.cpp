#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::path(SPD_TEST_WORKDIR) / "cli";

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Result spd(const std::string& args) {
  fs::create_directories(kWork);
  const auto out = kWork / "stdout.txt", err = kWork / "stderr.txt";
  const std::string cmd = std::string("\"") + SPD_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path fresh(const std::string& name) {
  const auto p = kWork / name;
  fs::remove_all(p);
  return p;
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

fs::path write_config(const std::string& name, const json& doc) {
  fs::create_directories(kWork);
  const auto p = kWork / name;
  std::ofstream(p) << doc.dump(2);
  return p;
}

}  // namespace

TEST_CASE("tmm point echoes energy conservation") {
  const auto out = fresh("point");
  const auto r = spd("tmm point --out " + out.string());
  REQUIRE(r.code == 0);
  const auto doc = read_json(out / "tmm_point.json");
  CHECK(std::abs(doc["response"]["energy_sum"].get<double>() - 1.0) < 1e-9);
  CHECK(doc["response"]["energy_conserved"].get<bool>());
  CHECK(doc["response"]["layers"].size() == 8);
}

TEST_CASE("tmm map covers 0-400 nm on both axes at 2 nm") {
  const auto out = fresh("map");
  REQUIRE(spd("tmm map --out " + out.string()).code == 0);
  std::ifstream csv(out / "tmm_map.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "t_top_nm,t_bottom_nm,a_bp");
  std::size_t rows = 0;
  double best = 0.0;
  while (std::getline(csv, line)) {
    ++rows;
    best = std::max(best, std::stod(line.substr(line.rfind(',') + 1)));
  }
  CHECK(rows == 201 * 201);
  const auto summary = read_json(out / "tmm_map.json");
  CHECK(summary["rows"] == 201);
  CHECK(summary["columns"] == 201);

  const auto opt = fresh("optimize");
  REQUIRE(spd("tmm optimize --out " + opt.string()).code == 0);
  const auto o = read_json(opt / "tmm_optimum.json");
  CHECK(o["absorptance"].get<double>() >= best - 1e-12);
}

TEST_CASE("simulate is byte-reproducible and seed-sensitive") {
  const auto a = fresh("sim_a"), b = fresh("sim_b"), c = fresh("sim_c");
  REQUIRE(spd("simulate --duration 0.5 --seed 5 --out " + a.string()).code == 0);
  REQUIRE(spd("--seed 5 --duration 0.5 simulate --out " + b.string()).code == 0);
  REQUIRE(spd("simulate --duration 0.5 --seed 6 --out " + c.string()).code == 0);
  for (const char* f : {"events.csv", "trace.bin", "trace.json"}) {
    CAPTURE(f);
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(slurp(a / "events.csv") != slurp(c / "events.csv"));
  auto ma = read_json(a / "manifest.json"), mb = read_json(b / "manifest.json");
  CHECK(ma["config_hash"] == mb["config_hash"]);
  CHECK(ma["seed"] == 5);
  CHECK(ma.contains("versions"));
}

TEST_CASE("manifest records expected dark events") {
  const auto out = fresh("short");
  REQUIRE(spd("simulate --duration 0.001 --out " + out.string()).code == 0);
  const auto m = read_json(out / "manifest.json");
  CHECK(m["expected"]["dark_events"].get<double>() == doctest::Approx(0.72));
  CHECK(m["config"]["run"]["duration_s"].get<double>() == 0.001);
}

TEST_CASE("closed shutter zeroes the photon number but keeps dark counts") {
  const auto out = fresh("closed");
  REQUIRE(spd("simulate --shutter closed --duration 2 --out " + out.string()).code == 0);
  const auto m = read_json(out / "manifest.json");
  CHECK(m["device"]["mean_photons"].get<double>() == 0.0);
  CHECK(m["counts"]["photon"] == 0);
  CHECK(m["counts"]["dark"].get<int>() > 0);
  CHECK(m["config"]["run"]["shutter"] == "closed");
}

TEST_CASE("a manifest re-runs to identical outputs") {
  const auto first = fresh("rerun_a"), second = fresh("rerun_b");
  REQUIRE(spd("simulate --duration 0.3 --seed 11 --mean-photons 0.2 --out " + first.string()).code == 0);
  REQUIRE(spd("simulate --config " + (first / "manifest.json").string() + " --out " + second.string()).code == 0);
  for (const char* f : {"events.csv", "trace.bin", "trace.json"}) CHECK(slurp(first / f) == slurp(second / f));
  CHECK(read_json(first / "manifest.json")["config_hash"] == read_json(second / "manifest.json")["config_hash"]);
}

TEST_CASE("flags override the file, the file overrides defaults") {
  const auto cfg = write_config("override.json", json{{"run", {{"seed", 3}, {"duration_s", 0.01}}},
                                                      {"detector", {{"dark_rate_hz", 100.0}}}});
  const auto out = fresh("override");
  REQUIRE(spd("simulate --config " + cfg.string() + " --seed 4 --out " + out.string()).code == 0);
  const auto m = read_json(out / "manifest.json");
  CHECK(m["seed"] == 4);
  CHECK(m["config"]["run"]["duration_s"].get<double>() == 0.01);
  CHECK(m["config"]["detector"]["dark_rate_hz"].get<double>() == 100.0);
  CHECK(m["config"]["detector"]["iqe"].get<double>() == 0.75);
}

TEST_CASE("config errors name the key and exit 2") {
  const auto cfg = write_config("bad.json", json{{"detector", {{"dark_rate_hz", -5}}}});
  const auto r = spd("simulate --config " + cfg.string() + " --out " + fresh("bad").string());
  CHECK(r.code == 2);
  CHECK(r.err.find("/detector/dark_rate_hz") != std::string::npos);
}

TEST_CASE("unwritable output directory is reported") {
  fs::create_directories(kWork);
  std::ofstream(kWork / "plainfile") << "x";
  const auto r = spd("simulate --duration 0.01 --out " + (kWork / "plainfile" / "sub").string());
  CHECK(r.code == 4);
  CHECK(r.err.find("output") != std::string::npos);
}

TEST_CASE("source calibrate writes the report") {
  const auto cfg = write_config(
      "cal.json", json{{"calibration", {{"power_w", 1e-6}, {"tap_fraction", 0.01},
                                        {"post_tap_chain", json::array({{{"type", "attenuator"},
                                                                         {"transmittance", 1e-9}}})}}}});
  const auto out = fresh("cal");
  REQUIRE(spd("source calibrate --config " + cfg.string() + " --out " + out.string()).code == 0);
  const auto doc = read_json(out / "calibration.json");
  const double device_w = 1e-6 * 99.0 * 1e-9;
  CHECK(doc["power_device_watts"].get<double>() == doctest::Approx(device_w).epsilon(1e-12));
  CHECK(doc["n_bar_sigma"].get<double>() == doctest::Approx(0.05 * doc["n_bar"].get<double>()));
  CHECK(spd("source calibrate --out " + fresh("nocal").string()).code == 2);
}

TEST_CASE("analyze trace finds the simulated events") {
  const auto sim = fresh("an_sim"), out = fresh("an_trace");
  const auto cfg = write_config(
      "trace.json", json{{"detector", {{"dark_rate_hz", 2000.0}, {"hold_time_min_us", 10.0}, {"dead_time_us", 200.0},
                                       {"noise_sigma_v", 1.25e-4}}},
                         {"analysis", {{"baseline_window_us", 2000.0}}},
                         {"run", {{"duration_s", 0.05}, {"trace", {{"max_duration_s", 0.05}}}}}});
  REQUIRE(spd("simulate --config " + cfg.string() + " --shutter closed --out " + sim.string()).code == 0);
  REQUIRE(spd("analyze trace --config " + cfg.string() + " --input " + sim.string() + " --out " + out.string()).code == 0);
  const auto m = read_json(sim / "manifest.json");
  const auto a = read_json(out / "trace_analysis.json");
  CHECK(a["events"] == m["counts"]["captures"]);
  CHECK(a["histogram_peaks"].size() == 2);
  CHECK(fs::exists(out / "histogram.csv"));
  CHECK(fs::exists(out / "detected_events.csv"));
  CHECK(spd("analyze trace --input " + (kWork / "nowhere").string() + " --out " + out.string()).code == 3);
}

TEST_CASE("end-to-end counting recovers the configured EQE") {
  const auto cfg = write_config(
      "eqe.json", json{{"source", {{"mean_photons", 0.05}}},
                       {"detector", {{"absorptance_armchair", 0.27}, {"absorptance_zigzag", 0.27}, {"iqe", 0.79},
                                     {"dead_time_us", 0.0}}},
                       {"run", {{"duration_s", 30.0}, {"trace", {{"enabled", false}}}}}});
  const auto light = fresh("eqe_light"), dark = fresh("eqe_dark"), out = fresh("eqe_out");
  REQUIRE(spd("simulate --config " + cfg.string() + " --seed 21 --out " + light.string()).code == 0);
  REQUIRE(spd("simulate --config " + cfg.string() + " --seed 22 --shutter closed --out " + dark.string()).code == 0);
  REQUIRE(spd("analyze counts --light " + light.string() + " --dark " + dark.string() + " --out " + out.string())
              .code == 0);
  const auto res = read_json(out / "counts.json")["results"][0];
  const double truth = 0.27 * 0.79;
  CHECK(std::abs(res["eqe"].get<double>() - truth) < 3.0 * res["eqe_sigma"].get<double>());
  std::ifstream csv(out / "counts.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "photon_flux_hz,counts_light,counts_dark,eqe,eqe_sigma,negative");
}

TEST_CASE("analyze sweep fits a directory of runs") {
  const auto cfg = write_config(
      "sweep.json", json{{"source", {{"mean_photons", 0.05}}},
                         {"detector", {{"absorptance_armchair", 0.27}, {"absorptance_zigzag", 0.27}, {"iqe", 0.79},
                                       {"dead_time_us", 0.0}}},
                         {"run", {{"duration_s", 5.0}, {"trace", {{"enabled", false}}}}}});
  const auto root = fresh("sweep_runs");
  int seed = 100;
  for (const char* f : {"1000", "2000", "5000", "10000", "20000"}) {
    REQUIRE(spd("simulate --config " + cfg.string() + " --rep-rate " + f + " --seed " + std::to_string(seed++) +
                " --out " + (root / (std::string("f") + f)).string())
                .code == 0);
  }
  const auto out = fresh("sweep_out");
  REQUIRE(spd("analyze sweep --input " + root.string() + " --out " + out.string()).code == 0);
  const auto fit = read_json(out / "sweep_fit.json");
  CHECK(fit["points"] == 5);
  CHECK(std::abs(fit["eqe_from_slope"].get<double>() - 0.27 * 0.79) < 3.0 * fit["eqe_sigma"].get<double>());
  CHECK(fit["expected_intercept"].get<double>() == doctest::Approx(720.0 * 5.0));
  CHECK(spd("analyze sweep --input " + (kWork / "plainfile").string() + " --out " + out.string()).code == 3);
}

TEST_CASE("usage errors") {
  CHECK(spd("").code != 0);
  CHECK(spd("tmm").code != 0);
  CHECK(spd("simulate --shutter ajar").code != 0);
  CHECK(spd("--version").out.find("0.1.0") != std::string::npos);
}
