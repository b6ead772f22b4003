// spd: transfer-matrix design, pulse-train calibration, detector simulation
// and counting analysis driven by one JSON experiment config.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <boost/version.hpp>
#include <fmt/format.h>

#include "spd/analysis.hpp"
#include "spd/config.hpp"
#include "spd/detsim.hpp"
#include "spd/io.hpp"
#include "spd/source.hpp"
#include "spd/tmm.hpp"
#include "spd/version.hpp"

namespace fs = std::filesystem;
using spd::config::ConfigError;
using spd::config::ExperimentConfig;
using json = spd::config::json;

namespace {

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct OutputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> shutter;
  std::optional<double> duration_s;
  std::optional<double> mean_photons;
  std::optional<double> rep_rate_hz;
};

// flag > file > default. The result is re-read through from_json so that
// overridden values get the same validation as file values.
ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c = o.config_path.empty() ? spd::config::defaults() : spd::config::load(o.config_path);
  if (o.seed) c.run.seed = *o.seed;
  if (o.out) c.run.out = *o.out;
  if (o.shutter) c.run.shutter_open = *o.shutter == "open";
  if (o.duration_s) c.run.duration_s = *o.duration_s;
  if (o.mean_photons) c.laser.mean_photons = *o.mean_photons;
  if (o.rep_rate_hz) c.laser.rep_rate_hz = *o.rep_rate_hz;
  return spd::config::from_json(spd::config::to_json(c));
}

fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw OutputError("cannot create output directory " + dir);
  const auto probe = fs::path(dir) / ".spd-write-test";
  {
    std::ofstream test(probe);
    if (!test) throw OutputError("output directory is not writable: " + dir);
  }
  fs::remove(probe, ec);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw OutputError("cannot write " + path.string());
  out << text;
  if (!out) throw OutputError("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

// Hash of the resolved config without the output location, so a manifest
// re-run into another directory keeps the same identity.
std::string experiment_hash(const ExperimentConfig& c) {
  auto doc = spd::config::to_json(c);
  doc["run"].erase("out");
  return spd::config::config_hash(doc);
}

json response_json(const spd::tmm::LayerStack& stack, const spd::tmm::OpticalResponse& r) {
  json layers = json::array();
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    layers.push_back(json{{"label", stack.layers[i].label},
                          {"material", stack.layers[i].material->name()},
                          {"thickness_nm", stack.layers[i].thickness_nm},
                          {"absorptance", r.absorptance[i]}});
  }
  return json{{"reflectance", r.reflectance},
              {"transmittance", r.transmittance},
              {"total_absorptance", r.total_absorptance()},
              {"energy_sum", r.energy_sum()},
              {"energy_conserved", std::abs(1.0 - r.energy_sum()) < 1e-9},
              {"layers", layers}};
}

int cmd_tmm_point(const ExperimentConfig& c) {
  const auto out = prepare_out(c.run.out);
  const auto lib = spd::config::materials(c);
  const auto stack = spd::config::build_stack(c, lib);
  json doc;
  doc["wavelength_nm"] = c.wavelength_nm;
  doc["axis"] = spd::to_string(c.tmm.axis);
  doc["response"] = response_json(stack, spd::tmm::response(stack, c.wavelength_nm, c.tmm.axis));
  if (c.tmm.axis == spd::Axis::unpolarized) {
    doc["armchair"] = response_json(stack, spd::tmm::response(stack, c.wavelength_nm, spd::Axis::armchair));
    doc["zigzag"] = response_json(stack, spd::tmm::response(stack, c.wavelength_nm, spd::Axis::zigzag));
  }
  write_json(out / "tmm_point.json", doc);
  std::cout << fmt::format("R={:.6f} T={:.6f} sum={:.12f}\n", doc["response"]["reflectance"].get<double>(),
                           doc["response"]["transmittance"].get<double>(),
                           doc["response"]["energy_sum"].get<double>());
  return 0;
}

int cmd_tmm_map(const ExperimentConfig& c) {
  const auto out = prepare_out(c.run.out);
  const auto lib = spd::config::materials(c);
  const auto stack = spd::config::build_stack(c, lib);
  const auto top = spd::tmm::thickness_grid(c.tmm.top.min_nm, c.tmm.top.max_nm, c.tmm.top.step_nm);
  const auto bottom =
      spd::tmm::thickness_grid(c.tmm.bottom.min_nm, c.tmm.bottom.max_nm, c.tmm.bottom.step_nm);
  const auto map = spd::tmm::absorption_map(stack, top, bottom, c.wavelength_nm, c.tmm.axis, c.tmm.layers);

  std::string csv = "t_top_nm,t_bottom_nm,a_bp\n";
  std::size_t bi = 0, bj = 0;
  for (std::size_t i = 0; i < top.size(); ++i) {
    for (std::size_t j = 0; j < bottom.size(); ++j) {
      csv += fmt::format("{},{},{:.12f}\n", top[i], bottom[j], map.at(i, j));
      if (map.at(i, j) > map.at(bi, bj)) bi = i, bj = j;
    }
  }
  write_text(out / "tmm_map.csv", csv);
  json summary{{"wavelength_nm", c.wavelength_nm},
               {"axis", spd::to_string(c.tmm.axis)},
               {"rows", top.size()},
               {"columns", bottom.size()},
               {"best", json{{"top_nm", top[bi]}, {"bottom_nm", bottom[bj]}, {"absorptance", map.at(bi, bj)}}}};
  write_json(out / "tmm_map.json", summary);
  std::cout << fmt::format("{}x{} map, best A={:.6f} at top={} bottom={}\n", top.size(), bottom.size(),
                           map.at(bi, bj), top[bi], bottom[bj]);
  return 0;
}

int cmd_tmm_optimize(const ExperimentConfig& c) {
  const auto out = prepare_out(c.run.out);
  const auto lib = spd::config::materials(c);
  const auto stack = spd::config::build_stack(c, lib);
  spd::tmm::OptimizeOptions opts;
  opts.grid_step_nm = std::min(c.tmm.top.step_nm, c.tmm.bottom.step_nm);
  opts.tolerance_nm = c.tmm.tolerance_nm;
  const auto best = spd::tmm::optimize_thicknesses(stack, {c.tmm.top.min_nm, c.tmm.top.max_nm},
                                                   {c.tmm.bottom.min_nm, c.tmm.bottom.max_nm},
                                                   c.wavelength_nm, c.tmm.axis, opts, c.tmm.layers);
  json doc{{"wavelength_nm", c.wavelength_nm},
           {"axis", spd::to_string(c.tmm.axis)},
           {"top_nm", best.top_nm},
           {"bottom_nm", best.bottom_nm},
           {"absorptance", best.absorptance},
           {"grid_best", best.grid_best},
           {"grid_step_nm", opts.grid_step_nm}};
  write_json(out / "tmm_optimum.json", doc);
  std::cout << fmt::format("A={:.6f} at top={:.3f} bottom={:.3f} (grid best {:.6f})\n", best.absorptance,
                           best.top_nm, best.bottom_nm, best.grid_best);
  return 0;
}

int cmd_calibrate(const ExperimentConfig& c) {
  if (!c.calibration) throw ConfigError("/calibration", "required for source calibrate");
  const auto out = prepare_out(c.run.out);
  const auto& cal = *c.calibration;
  const auto r = spd::source::calibrate_flux(cal.reading, cal.tap_fraction, cal.post_tap, c.wavelength_nm,
                                             c.laser.rep_rate_hz, c.laser.polarization);
  json doc{{"n_bar", r.mean_photons},
           {"n_bar_sigma", r.mean_photons_sigma},
           {"power_device_watts", r.device_power_w},
           {"repetition_rate_hz", c.laser.rep_rate_hz},
           {"wavelength_nm", c.wavelength_nm},
           {"multi_photon_probability", spd::source::multi_photon_probability(r.mean_photons)}};
  write_json(out / "calibration.json", doc);
  std::cout << fmt::format("n_bar={:.6g} +- {:.2g}\n", r.mean_photons, r.mean_photons_sigma);
  return 0;
}

int cmd_simulate(const ExperimentConfig& c) {
  const auto out = prepare_out(c.run.out);
  const auto lib = spd::config::materials(c);
  const auto params = spd::config::resolved_detector(c, lib);
  const auto train = spd::config::device_train(c);
  const auto events = spd::detsim::simulate(params, train, c.run.duration_s, c.run.seed);
  events.check_ledger(params.max_occupancy);
  spd::io::write_events_csv(events, out / "events.csv");

  json outputs{{"events", "events.csv"}};
  if (c.run.trace.enabled) {
    const double span = std::min(c.run.duration_s, c.run.trace.max_duration_s);
    const auto trace = spd::detsim::synthesize_trace(events, params, span, c.run.trace.sample_rate_hz, c.run.seed);
    spd::io::write_trace(trace, out / "trace.bin");
    outputs["trace"] = "trace.bin";
    outputs["trace_sidecar"] = "trace.json";
  }

  const double eta = params.absorptance(train.polarization) * params.iqe;
  const double pulses = train.rep_rate_hz * c.run.duration_s;
  json manifest;
  manifest["tool"] = spd::kToolName;
  manifest["version"] = spd::kVersion;
  manifest["versions"] = json{{"spd", spd::kVersion},
                              {"fmt", FMT_VERSION},
                              {"boost", BOOST_LIB_VERSION},
                              {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR,
                                                            NLOHMANN_JSON_VERSION_MINOR,
                                                            NLOHMANN_JSON_VERSION_PATCH)}};
  manifest["seed"] = c.run.seed;
  manifest["config_hash"] = experiment_hash(c);
  manifest["device"] = json{{"mean_photons", train.mean_photons},
                            {"repetition_rate_hz", train.rep_rate_hz},
                            {"photon_flux_hz", train.photon_flux_hz()},
                            {"polarization", train.polarization.unpolarized
                                                 ? json("unpolarized")
                                                 : json(train.polarization.angle_deg)},
                            {"absorptance_armchair", params.absorptance_armchair},
                            {"absorptance_zigzag", params.absorptance_zigzag},
                            {"eqe", eta}};
  manifest["expected"] = json{{"dark_events", params.dark_rate_hz * c.run.duration_s},
                              {"photon_captures", pulses * -std::expm1(-train.mean_photons * eta)}};
  manifest["counts"] = json{{"captures", events.capture_count()},
                            {"photon", events.count(spd::detsim::Origin::photon)},
                            {"dark", events.count(spd::detsim::Origin::dark)},
                            {"releases", events.releases_us.size()},
                            {"max_occupancy", events.max_occupancy()}};
  manifest["outputs"] = outputs;
  manifest["config"] = spd::config::to_json(c);
  write_json(out / "manifest.json", manifest);
  std::cout << fmt::format("{} captures ({} photon, {} dark) in {} s\n", events.capture_count(),
                           events.count(spd::detsim::Origin::photon), events.count(spd::detsim::Origin::dark),
                           c.run.duration_s);
  return 0;
}

// One simulated (or measured) run directory: manifest.json + events.csv.
struct RunInput {
  fs::path dir;
  ExperimentConfig config;
  double mean_photons = 0.0;
  double rep_rate_hz = 0.0;
  double duration_s = 0.0;
  double dark_rate_hz = 0.0;
  std::size_t counts = 0;
};

RunInput read_run(const fs::path& dir) {
  RunInput run;
  run.dir = dir;
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw InputError("missing " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
    run.config = spd::config::from_json(manifest.at("config"));
    const auto& dev = manifest.at("device");
    run.mean_photons = dev.at("mean_photons").get<double>();
    run.rep_rate_hz = dev.at("repetition_rate_hz").get<double>();
  } catch (const json::exception& e) {
    throw InputError("malformed manifest " + manifest_path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw InputError("malformed manifest " + manifest_path.string() + ": /config" + e.what());
  }
  run.duration_s = run.config.run.duration_s;
  run.dark_rate_hz = run.config.detector.dark_rate_hz;
  try {
    run.counts = spd::io::read_events_csv(dir / "events.csv").capture_count();
  } catch (const std::runtime_error& e) {
    throw InputError(e.what());
  }
  return run;
}

std::vector<fs::path> expand_run_dirs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> dirs;
  for (const auto& item : inputs) {
    const fs::path p(item);
    if (fs::exists(p / "manifest.json")) {
      dirs.push_back(p);
      continue;
    }
    if (!fs::is_directory(p)) throw InputError("not a run directory: " + item);
    std::vector<fs::path> children;
    for (const auto& entry : fs::directory_iterator(p)) {
      if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) children.push_back(entry.path());
    }
    if (children.empty()) throw InputError("no run directories under " + item);
    std::sort(children.begin(), children.end());
    dirs.insert(dirs.end(), children.begin(), children.end());
  }
  return dirs;
}

int cmd_analyze_trace(const ExperimentConfig& c, const std::string& input) {
  fs::path path(input);
  if (fs::is_directory(path)) path /= "trace.bin";
  spd::detsim::TimeTrace trace;
  try {
    trace = spd::io::read_trace(path);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  const auto out = prepare_out(c.run.out);
  const auto events = spd::analysis::detect_events(trace, c.detection);
  spd::io::write_events_csv(events, out / "detected_events.csv");
  const auto hist = spd::analysis::occupation_histogram(trace, c.histogram_bin_v);
  std::string csv = "level_v,count\n";
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    csv += fmt::format("{:.9f},{}\n", hist.bin_center(i), hist.counts[i]);
  }
  write_text(out / "histogram.csv", csv);
  json peaks = json::array();
  for (std::size_t k = 0; k < hist.peak_levels_v.size(); ++k) {
    peaks.push_back(json{{"state", hist.label(k)}, {"level_v", hist.peak_levels_v[k]}});
  }
  const auto rate = spd::analysis::count_rate(events, trace.duration_s());
  json doc{{"duration_s", trace.duration_s()},
           {"sample_rate_hz", trace.sample_rate_hz},
           {"events", events.capture_count()},
           {"rate_hz", rate.rate_hz},
           {"rate_sigma_hz", rate.sigma_hz},
           {"rate_upper_95_hz", rate.upper_95_hz},
           {"max_occupancy", events.max_occupancy()},
           {"histogram_peaks", peaks}};
  write_json(out / "trace_analysis.json", doc);
  std::cout << fmt::format("{} events, {} histogram peaks\n", events.capture_count(), hist.peak_levels_v.size());
  return 0;
}

int cmd_analyze_counts(const ExperimentConfig& c, const std::vector<std::string>& light,
                       const std::vector<std::string>& dark) {
  if (light.empty()) throw InputError("at least one --light run is required");
  if (dark.size() != 1 && dark.size() != light.size()) {
    throw InputError("give one --dark run, or one per --light run");
  }
  std::vector<RunInput> light_runs, dark_runs;
  for (const auto& d : light) light_runs.push_back(read_run(d));
  for (const auto& d : dark) dark_runs.push_back(read_run(d));
  const auto out = prepare_out(c.run.out);

  std::string csv = "photon_flux_hz,counts_light,counts_dark,eqe,eqe_sigma,negative\n";
  json rows = json::array();
  for (std::size_t i = 0; i < light_runs.size(); ++i) {
    const auto& L = light_runs[i];
    const auto& D = dark_runs.size() == 1 ? dark_runs[0] : dark_runs[i];
    if (std::abs(L.duration_s - D.duration_s) > 1e-12 * L.duration_s) {
      throw InputError(fmt::format("light run {} and dark run {} differ in duration", L.dir.string(),
                                   D.dir.string()));
    }
    const double cal = c.calibration ? c.calibration->reading.relative_uncertainty : 0.05;
    const auto r = spd::analysis::estimate_eqe(static_cast<long long>(L.counts), static_cast<long long>(D.counts),
                                               L.mean_photons, L.rep_rate_hz, L.duration_s, cal);
    csv += fmt::format("{},{},{},{:.9g},{:.9g},{}\n", r.photon_flux_hz, r.counts_light, r.counts_dark, r.eqe,
                       r.eqe_sigma, r.negative ? 1 : 0);
    rows.push_back(json{{"photon_flux_hz", r.photon_flux_hz},
                        {"counts_light", r.counts_light},
                        {"counts_dark", r.counts_dark},
                        {"duration_s", r.duration_s},
                        {"eqe", r.eqe},
                        {"eqe_sigma", r.eqe_sigma},
                        {"eqe_poisson_sigma", r.eqe_poisson_sigma},
                        {"negative", r.negative}});
    std::cout << fmt::format("flux {:g} Hz: eqe = {:.4f} +- {:.4f}{}\n", r.photon_flux_hz, r.eqe, r.eqe_sigma,
                             r.negative ? " (negative)" : "");
  }
  write_text(out / "counts.csv", csv);
  write_json(out / "counts.json", json{{"results", rows}});
  return 0;
}

int cmd_analyze_sweep(const ExperimentConfig& c, const std::vector<std::string>& inputs) {
  const auto dirs = expand_run_dirs(inputs);
  std::vector<RunInput> runs;
  for (const auto& d : dirs) runs.push_back(read_run(d));
  const double n = runs.front().mean_photons;
  const double T = runs.front().duration_s;
  for (const auto& r : runs) {
    if (std::abs(r.mean_photons - n) > 1e-12 * std::max(n, 1e-300)) {
      throw InputError("sweep runs must share one mean photon number: " + r.dir.string());
    }
    if (std::abs(r.duration_s - T) > 1e-12 * T) throw InputError("sweep runs must share one duration: " + r.dir.string());
  }
  std::sort(runs.begin(), runs.end(), [](const RunInput& a, const RunInput& b) { return a.rep_rate_hz < b.rep_rate_hz; });
  std::vector<spd::analysis::SweepPoint> points;
  for (const auto& r : runs) points.push_back({r.rep_rate_hz, static_cast<double>(r.counts)});
  const auto fit = spd::analysis::eqe_from_frequency_sweep(points, n, T);
  const auto out = prepare_out(c.run.out);

  std::string csv = "repetition_rate_hz,photon_flux_hz,counts,fit,residual\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double f = points[i].rep_rate_hz;
    csv += fmt::format("{},{},{},{:.9g},{:.9g}\n", f, f * n, points[i].counts, fit.slope * f + fit.intercept,
                       fit.residuals[i]);
  }
  write_text(out / "sweep.csv", csv);
  json doc{{"slope", fit.slope},
           {"intercept", fit.intercept},
           {"slope_sigma", fit.slope_sigma},
           {"intercept_sigma", fit.intercept_sigma},
           {"eqe_from_slope", fit.eqe_from_slope},
           {"eqe_sigma", fit.eqe_sigma},
           {"mean_photons", n},
           {"duration_s", T},
           {"expected_intercept", runs.front().dark_rate_hz * T},
           {"points", points.size()}};
  write_json(out / "sweep_fit.json", doc);
  std::cout << fmt::format("eqe = {:.4f} +- {:.4f}, intercept = {:.1f} +- {:.1f}\n", fit.eqe_from_slope,
                           fit.eqe_sigma, fit.intercept, fit.intercept_sigma);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-photon detector design and characterisation toolkit"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(spd::kVersion));

  Overrides o;
  app.add_option("--config", o.config_path, "Experiment config (JSON), or a run manifest")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Random seed");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--shutter", o.shutter, "Laser shutter")->check(CLI::IsMember({"open", "closed"}));
  app.add_option("--duration", o.duration_s, "Run duration in seconds");
  app.add_option("--mean-photons", o.mean_photons, "Mean photons per pulse at the laser");
  app.add_option("--rep-rate", o.rep_rate_hz, "Pulse repetition rate in Hz");

  auto* tmm = app.add_subcommand("tmm", "Transfer-matrix calculations on the configured stack");
  tmm->require_subcommand(1);
  auto* tmm_point = tmm->add_subcommand("point", "Response of the stack as configured");
  auto* tmm_map = tmm->add_subcommand("map", "Absorber absorptance over the top/bottom thickness grid");
  auto* tmm_opt = tmm->add_subcommand("optimize", "Thicknesses that maximise absorber absorptance");

  auto* src = app.add_subcommand("source", "Light source utilities");
  src->require_subcommand(1);
  auto* calibrate = src->add_subcommand("calibrate", "Device-plane photon number from the tap power reading");

  auto* simulate = app.add_subcommand("simulate", "Simulate a counting run");

  auto* analyze = app.add_subcommand("analyze", "Analyse traces and count data");
  analyze->require_subcommand(1);
  std::string trace_input;
  auto* an_trace = analyze->add_subcommand("trace", "Detect events and build the occupation histogram");
  an_trace->add_option("--input", trace_input, "Trace .bin/.json or a run directory")->required();
  std::vector<std::string> light, dark;
  auto* an_counts = analyze->add_subcommand("counts", "Dark-subtracted EQE from shutter-open/closed runs");
  an_counts->add_option("--light", light, "Shutter-open run directories")->required();
  an_counts->add_option("--dark", dark, "Shutter-closed run directories")->required();
  std::vector<std::string> sweep_inputs;
  auto* an_sweep = analyze->add_subcommand("sweep", "EQE from a repetition-rate sweep at fixed photon number");
  an_sweep->add_option("--input", sweep_inputs, "Run directories, or directories holding them")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const auto c = resolve(o);
    if (*tmm_point) return cmd_tmm_point(c);
    if (*tmm_map) return cmd_tmm_map(c);
    if (*tmm_opt) return cmd_tmm_optimize(c);
    if (*calibrate) return cmd_calibrate(c);
    if (*simulate) return cmd_simulate(c);
    if (*an_trace) return cmd_analyze_trace(c, trace_input);
    if (*an_counts) return cmd_analyze_counts(c, light, dark);
    if (*an_sweep) return cmd_analyze_sweep(c, sweep_inputs);
  } catch (const ConfigError& e) {
    std::cerr << "config error at " << e.what() << '\n';
    return 2;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 3;
  } catch (const OutputError& e) {
    std::cerr << "output error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
