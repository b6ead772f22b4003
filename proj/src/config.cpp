#include "spd/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <fmt/format.h>

namespace spd::config {

namespace {

std::string escape_token(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') {
      out += "~0";
    } else if (c == '/') {
      out += "~1";
    } else {
      out += c;
    }
  }
  return out;
}

enum class Range { any, nonnegative, positive, fraction };

// Cursor on one JSON object that knows its pointer path and which keys it may hold.
class Node {
 public:
  Node(const json& value, std::string path) : value_(value), path_(std::move(path)) {
    if (!value_.is_object()) throw ConfigError(path_.empty() ? "/" : path_, "expected an object");
  }

  std::string path_of(const std::string& key) const { return path_ + "/" + escape_token(key); }
  const std::string& path() const { return path_; }
  bool has(const std::string& key) const { return value_.contains(key) && !value_.at(key).is_null(); }
  const json& raw(const std::string& key) const { return value_.at(key); }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& item : value_.items()) {
      if (!ok.count(item.key())) throw ConfigError(path_of(item.key()), "unknown key");
    }
  }

  Node child(const std::string& key) const { return Node(value_.at(key), path_of(key)); }

  double number(const std::string& key, double fallback, Range range = Range::any) const {
    if (!has(key)) return fallback;
    const auto& v = value_.at(key);
    if (!v.is_number()) throw ConfigError(path_of(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path_of(key), "must be finite");
    switch (range) {
      case Range::nonnegative:
        if (x < 0.0) throw ConfigError(path_of(key), "must be >= 0");
        break;
      case Range::positive:
        if (x <= 0.0) throw ConfigError(path_of(key), "must be > 0");
        break;
      case Range::fraction:
        if (x < 0.0 || x > 1.0) throw ConfigError(path_of(key), "must lie in [0, 1]");
        break;
      case Range::any:
        break;
    }
    return x;
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const auto& v = value_.at(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ConfigError(path_of(key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const auto& v = value_.at(key);
    if (!v.is_string()) throw ConfigError(path_of(key), "expected a string");
    return v.get<std::string>();
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = value_.at(key);
    if (!v.is_boolean()) throw ConfigError(path_of(key), "expected true or false");
    return v.get<bool>();
  }

 private:
  const json& value_;
  std::string path_;
};

source::Polarization read_polarization(const Node& parent, const std::string& key,
                                       source::Polarization fallback) {
  if (!parent.has(key)) return fallback;
  const auto& v = parent.raw(key);
  if (v.is_string() && v.get<std::string>() == "unpolarized") return source::Polarization::none();
  if (v.is_number()) {
    const double angle = v.get<double>();
    if (!std::isfinite(angle)) throw ConfigError(parent.path_of(key), "must be finite");
    return source::Polarization::linear(angle);
  }
  throw ConfigError(parent.path_of(key), "expected \"unpolarized\" or a linear angle in degrees");
}

json polarization_json(const source::Polarization& p) {
  if (p.unpolarized) return "unpolarized";
  return p.angle_deg;
}

source::OpticalChain read_chain(const json& value, const std::string& path) {
  if (!value.is_array()) throw ConfigError(path, "expected an array of stages");
  source::OpticalChain chain;
  for (std::size_t i = 0; i < value.size(); ++i) {
    Node stage(value[i], path + "/" + std::to_string(i));
    const auto type = stage.text("type", "");
    if (type == "polarizer") {
      stage.allow({"type", "angle_deg"});
      chain.stages.emplace_back(source::Polarizer{stage.number("angle_deg", 0.0)});
    } else if (type == "splitter") {
      stage.allow({"type", "tap_fraction", "arm"});
      const auto arm = stage.text("arm", "pass");
      if (arm != "pass" && arm != "tap") throw ConfigError(stage.path_of("arm"), "expected pass or tap");
      chain.stages.emplace_back(
          source::Splitter{stage.number("tap_fraction", 0.5, Range::fraction), arm == "tap"});
    } else if (type == "attenuator") {
      stage.allow({"type", "transmittance"});
      if (!stage.has("transmittance")) throw ConfigError(stage.path_of("transmittance"), "required");
      chain.stages.emplace_back(source::Attenuator{stage.number("transmittance", 1.0, Range::fraction)});
    } else if (type == "depolarizer") {
      stage.allow({"type"});
      chain.stages.emplace_back(source::Depolarizer{});
    } else {
      throw ConfigError(stage.path_of("type"), "expected polarizer, splitter, attenuator or depolarizer");
    }
  }
  return chain;
}

json chain_json(const source::OpticalChain& chain) {
  json out = json::array();
  for (const auto& stage : chain.stages) {
    json s;
    if (const auto* p = std::get_if<source::Polarizer>(&stage)) {
      s["type"] = "polarizer";
      s["angle_deg"] = p->angle_deg;
    } else if (const auto* b = std::get_if<source::Splitter>(&stage)) {
      s["type"] = "splitter";
      s["tap_fraction"] = b->tap_fraction;
      s["arm"] = b->take_tap_arm ? "tap" : "pass";
    } else if (const auto* a = std::get_if<source::Attenuator>(&stage)) {
      s["type"] = "attenuator";
      s["transmittance"] = a->transmittance;
    } else {
      s["type"] = "depolarizer";
    }
    out.push_back(std::move(s));
  }
  return out;
}

GridSpec read_grid(const Node& parent, const std::string& key, const GridSpec& fallback) {
  if (!parent.has(key)) return fallback;
  auto n = parent.child(key);
  n.allow({"min", "max", "step"});
  GridSpec g;
  g.min_nm = n.number("min", fallback.min_nm, Range::nonnegative);
  g.max_nm = n.number("max", fallback.max_nm, Range::nonnegative);
  g.step_nm = n.number("step", fallback.step_nm, Range::positive);
  if (g.max_nm < g.min_nm) throw ConfigError(n.path_of("max"), "must be >= min");
  return g;
}

json grid_json(const GridSpec& g) { return json{{"min", g.min_nm}, {"max", g.max_nm}, {"step", g.step_nm}}; }

std::string bad_axis_message() { return "expected armchair, zigzag or unpolarized"; }

}  // namespace

ExperimentConfig defaults() {
  ExperimentConfig c;
  c.stack.layers = {{"top_hbn", "hbn", 356.0}, {"bp", "bp", 25.0},        {"mos2", "mos2", 5.0},
                    {"wse2", "wse2", 5.0},     {"bottom_hbn", "hbn", 84.0}, {"au", "au", 40.0},
                    {"ti", "ti", 30.0},        {"sio2", "sio2", 285.0}};
  c.laser.mean_photons = 0.0053;
  c.laser.polarization = source::Polarization::none();
  return c;
}

ExperimentConfig from_json(const json& doc) {
  const auto base = defaults();
  ExperimentConfig c = base;
  Node root(doc, "");
  root.allow({"wavelength_nm", "materials_dir", "stack", "tmm", "source", "calibration", "detector",
              "analysis", "run"});
  c.wavelength_nm = root.number("wavelength_nm", base.wavelength_nm, Range::positive);
  c.materials_dir = root.text("materials_dir", base.materials_dir);

  if (root.has("stack")) {
    auto s = root.child("stack");
    s.allow({"incident", "exit", "layers"});
    c.stack.incident = s.text("incident", base.stack.incident);
    c.stack.exit = s.text("exit", base.stack.exit);
    if (s.has("layers")) {
      const auto& arr = s.raw("layers");
      const auto path = s.path_of("layers");
      if (!arr.is_array()) throw ConfigError(path, "expected an array of layers");
      c.stack.layers.clear();
      std::set<std::string> labels;
      for (std::size_t i = 0; i < arr.size(); ++i) {
        Node l(arr[i], path + "/" + std::to_string(i));
        l.allow({"label", "material", "thickness_nm"});
        LayerSpec spec;
        spec.material = l.text("material", "");
        if (spec.material.empty()) throw ConfigError(l.path_of("material"), "required");
        spec.label = l.text("label", spec.material);
        if (!labels.insert(spec.label).second) throw ConfigError(l.path_of("label"), "duplicate label");
        if (!l.has("thickness_nm")) throw ConfigError(l.path_of("thickness_nm"), "required");
        spec.thickness_nm = l.number("thickness_nm", 0.0, Range::nonnegative);
        c.stack.layers.push_back(std::move(spec));
      }
    }
  }

  if (root.has("tmm")) {
    auto t = root.child("tmm");
    t.allow({"axis", "top", "bottom", "tolerance_nm", "sweep"});
    try {
      c.tmm.axis = axis_from_string(t.text("axis", to_string(base.tmm.axis)));
    } catch (const std::invalid_argument&) {
      throw ConfigError(t.path_of("axis"), bad_axis_message());
    }
    c.tmm.top = read_grid(t, "top", base.tmm.top);
    c.tmm.bottom = read_grid(t, "bottom", base.tmm.bottom);
    c.tmm.tolerance_nm = t.number("tolerance_nm", base.tmm.tolerance_nm, Range::positive);
    if (t.has("sweep")) {
      auto w = t.child("sweep");
      w.allow({"top", "bottom", "absorber"});
      c.tmm.layers.top = w.text("top", base.tmm.layers.top);
      c.tmm.layers.bottom = w.text("bottom", base.tmm.layers.bottom);
      c.tmm.layers.absorber = w.text("absorber", base.tmm.layers.absorber);
    }
  }

  if (root.has("source")) {
    auto s = root.child("source");
    s.allow({"repetition_rate_hz", "mean_photons", "polarization", "chain"});
    c.laser.rep_rate_hz = s.number("repetition_rate_hz", base.laser.rep_rate_hz, Range::positive);
    c.laser.mean_photons = s.number("mean_photons", base.laser.mean_photons, Range::nonnegative);
    c.laser.polarization = read_polarization(s, "polarization", base.laser.polarization);
    if (s.has("chain")) c.chain = read_chain(s.raw("chain"), s.path_of("chain"));
  }
  c.laser.wavelength_nm = c.wavelength_nm;

  if (root.has("calibration")) {
    auto k = root.child("calibration");
    k.allow({"power_w", "relative_uncertainty", "tap_fraction", "post_tap_chain"});
    CalibrationSpec cal;
    if (!k.has("power_w")) throw ConfigError(k.path_of("power_w"), "required");
    cal.reading.mean_power_w = k.number("power_w", 0.0, Range::nonnegative);
    cal.reading.relative_uncertainty = k.number("relative_uncertainty", 0.05, Range::nonnegative);
    cal.tap_fraction = k.number("tap_fraction", 0.5, Range::fraction);
    if (cal.tap_fraction <= 0.0 || cal.tap_fraction >= 1.0) {
      throw ConfigError(k.path_of("tap_fraction"), "must lie in (0, 1)");
    }
    if (k.has("post_tap_chain")) cal.post_tap = read_chain(k.raw("post_tap_chain"), k.path_of("post_tap_chain"));
    c.calibration = cal;
  }

  if (root.has("detector")) {
    auto d = root.child("detector");
    d.allow({"absorptance_armchair", "absorptance_zigzag", "absorptance_from_stack", "iqe",
             "dark_rate_hz", "fall_time_us", "rise_time_us", "hold_time_mean_us", "hold_time_min_us",
             "dead_time_us", "max_occupancy", "step_amplitude_v", "noise_sigma_v", "baseline_v"});
    const auto& b = base.detector;
    auto& p = c.detector;
    p.absorptance_armchair = d.number("absorptance_armchair", b.absorptance_armchair, Range::fraction);
    p.absorptance_zigzag = d.number("absorptance_zigzag", b.absorptance_zigzag, Range::fraction);
    c.absorptance_from_stack = d.flag("absorptance_from_stack", base.absorptance_from_stack);
    p.iqe = d.number("iqe", b.iqe, Range::fraction);
    p.dark_rate_hz = d.number("dark_rate_hz", b.dark_rate_hz, Range::nonnegative);
    p.fall_time_us = d.number("fall_time_us", b.fall_time_us, Range::positive);
    p.rise_time_us = d.number("rise_time_us", b.rise_time_us, Range::positive);
    p.hold_time_mean_us = d.number("hold_time_mean_us", b.hold_time_mean_us, Range::nonnegative);
    p.hold_time_min_us = d.number("hold_time_min_us", b.hold_time_min_us, Range::nonnegative);
    p.dead_time_us = d.number("dead_time_us", b.dead_time_us, Range::nonnegative);
    const auto occ = d.unsigned_integer("max_occupancy", static_cast<std::uint64_t>(b.max_occupancy));
    if (occ < 1 || occ > 1000) throw ConfigError(d.path_of("max_occupancy"), "must lie in [1, 1000]");
    p.max_occupancy = static_cast<int>(occ);
    p.step_amplitude_v = d.number("step_amplitude_v", b.step_amplitude_v);
    p.noise_sigma_v = d.number("noise_sigma_v", b.noise_sigma_v, Range::nonnegative);
    p.baseline_v = d.number("baseline_v", b.baseline_v);
  }

  if (root.has("analysis")) {
    auto a = root.child("analysis");
    a.allow({"threshold_v", "hysteresis_v", "min_width_us", "baseline_window_us", "mode_bin_v",
             "histogram_bin_v"});
    const auto& b = base.detection;
    auto& s = c.detection;
    s.threshold_v = a.number("threshold_v", b.threshold_v, Range::positive);
    s.hysteresis_v = a.number("hysteresis_v", b.hysteresis_v, Range::positive);
    if (s.hysteresis_v >= s.threshold_v) throw ConfigError(a.path_of("hysteresis_v"), "must be below threshold_v");
    s.min_width_us = a.number("min_width_us", b.min_width_us, Range::nonnegative);
    s.baseline_window_us = a.number("baseline_window_us", b.baseline_window_us, Range::positive);
    s.mode_bin_v = a.number("mode_bin_v", b.mode_bin_v, Range::nonnegative);
    c.histogram_bin_v = a.number("histogram_bin_v", base.histogram_bin_v, Range::positive);
  }

  if (root.has("run")) {
    auto r = root.child("run");
    r.allow({"duration_s", "seed", "shutter", "out", "trace"});
    c.run.duration_s = r.number("duration_s", base.run.duration_s, Range::positive);
    c.run.seed = r.unsigned_integer("seed", base.run.seed);
    const auto shutter = r.text("shutter", base.run.shutter_open ? "open" : "closed");
    if (shutter != "open" && shutter != "closed") throw ConfigError(r.path_of("shutter"), "expected open or closed");
    c.run.shutter_open = shutter == "open";
    c.run.out = r.text("out", base.run.out);
    if (r.has("trace")) {
      auto t = r.child("trace");
      t.allow({"enabled", "sample_rate_hz", "max_duration_s"});
      c.run.trace.enabled = t.flag("enabled", base.run.trace.enabled);
      c.run.trace.sample_rate_hz = t.number("sample_rate_hz", base.run.trace.sample_rate_hz, Range::positive);
      c.run.trace.max_duration_s = t.number("max_duration_s", base.run.trace.max_duration_s, Range::positive);
    }
  }
  return c;
}

json to_json(const ExperimentConfig& c) {
  json doc;
  doc["wavelength_nm"] = c.wavelength_nm;
  doc["materials_dir"] = c.materials_dir;

  json layers = json::array();
  for (const auto& l : c.stack.layers) {
    layers.push_back(json{{"label", l.label}, {"material", l.material}, {"thickness_nm", l.thickness_nm}});
  }
  doc["stack"] = json{{"incident", c.stack.incident}, {"exit", c.stack.exit}, {"layers", layers}};

  doc["tmm"] = json{{"axis", to_string(c.tmm.axis)},
                    {"top", grid_json(c.tmm.top)},
                    {"bottom", grid_json(c.tmm.bottom)},
                    {"tolerance_nm", c.tmm.tolerance_nm},
                    {"sweep", json{{"top", c.tmm.layers.top},
                                   {"bottom", c.tmm.layers.bottom},
                                   {"absorber", c.tmm.layers.absorber}}}};

  doc["source"] = json{{"repetition_rate_hz", c.laser.rep_rate_hz},
                       {"mean_photons", c.laser.mean_photons},
                       {"polarization", polarization_json(c.laser.polarization)},
                       {"chain", chain_json(c.chain)}};

  if (c.calibration) {
    doc["calibration"] = json{{"power_w", c.calibration->reading.mean_power_w},
                              {"relative_uncertainty", c.calibration->reading.relative_uncertainty},
                              {"tap_fraction", c.calibration->tap_fraction},
                              {"post_tap_chain", chain_json(c.calibration->post_tap)}};
  }

  const auto& p = c.detector;
  doc["detector"] = json{{"absorptance_armchair", p.absorptance_armchair},
                         {"absorptance_zigzag", p.absorptance_zigzag},
                         {"absorptance_from_stack", c.absorptance_from_stack},
                         {"iqe", p.iqe},
                         {"dark_rate_hz", p.dark_rate_hz},
                         {"fall_time_us", p.fall_time_us},
                         {"rise_time_us", p.rise_time_us},
                         {"hold_time_mean_us", p.hold_time_mean_us},
                         {"hold_time_min_us", p.hold_time_min_us},
                         {"dead_time_us", p.dead_time_us},
                         {"max_occupancy", p.max_occupancy},
                         {"step_amplitude_v", p.step_amplitude_v},
                         {"noise_sigma_v", p.noise_sigma_v},
                         {"baseline_v", p.baseline_v}};

  const auto& s = c.detection;
  doc["analysis"] = json{{"threshold_v", s.threshold_v},
                         {"hysteresis_v", s.hysteresis_v},
                         {"min_width_us", s.min_width_us},
                         {"baseline_window_us", s.baseline_window_us},
                         {"mode_bin_v", s.mode_bin_v},
                         {"histogram_bin_v", c.histogram_bin_v}};

  doc["run"] = json{{"duration_s", c.run.duration_s},
                    {"seed", c.run.seed},
                    {"shutter", c.run.shutter_open ? "open" : "closed"},
                    {"out", c.run.out},
                    {"trace", json{{"enabled", c.run.trace.enabled},
                                   {"sample_rate_hz", c.run.trace.sample_rate_hz},
                                   {"max_duration_s", c.run.trace.max_duration_s}}}};
  return doc;
}

ExperimentConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("/", "cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("/", fmt::format("{}: {}", path.string(), e.what()));
  }
  // A run manifest carries its resolved config under "config".
  if (doc.is_object() && doc.contains("tool") && doc.contains("config")) {
    try {
      return from_json(doc.at("config"));
    } catch (const ConfigError& e) {
      throw ConfigError("/config" + e.path(), std::string(e.what()).substr(e.path().size() + 2));
    }
  }
  return from_json(doc);
}

MaterialLibrary materials(const ExperimentConfig& config) {
  if (config.materials_dir.empty()) return MaterialLibrary::bundled();
  try {
    return MaterialLibrary::load_directory(config.materials_dir);
  } catch (const std::exception& e) {
    throw ConfigError("/materials_dir", e.what());
  }
}

tmm::LayerStack build_stack(const ExperimentConfig& config, const MaterialLibrary& lib) {
  auto lookup = [&](const std::string& name, const std::string& path) {
    if (!lib.contains(name)) throw ConfigError(path, "unknown material '" + name + "'");
    return lib.get(name);
  };
  tmm::LayerStack stack;
  stack.incident = lookup(config.stack.incident, "/stack/incident");
  stack.exit = lookup(config.stack.exit, "/stack/exit");
  for (std::size_t i = 0; i < config.stack.layers.size(); ++i) {
    const auto& l = config.stack.layers[i];
    stack.layers.push_back(
        {l.label, lookup(l.material, fmt::format("/stack/layers/{}/material", i)), l.thickness_nm});
  }
  try {
    stack.validate();
  } catch (const std::exception& e) {
    throw ConfigError("/stack", e.what());
  }
  return stack;
}

source::CoherentPulseTrain device_train(const ExperimentConfig& config) {
  source::CoherentPulseTrain train;
  if (config.calibration) {
    const auto& cal = *config.calibration;
    const auto result = source::calibrate_flux(cal.reading, cal.tap_fraction, cal.post_tap,
                                               config.wavelength_nm, config.laser.rep_rate_hz,
                                               config.laser.polarization);
    train = config.laser;
    train.mean_photons = result.mean_photons;
    train.polarization = source::propagate(cal.post_tap, config.laser.polarization).output;
  } else {
    train = source::apply_chain(config.laser, config.chain);
  }
  if (!config.run.shutter_open) train.mean_photons = 0.0;
  return train;
}

detsim::DetectorParams resolved_detector(const ExperimentConfig& config, const MaterialLibrary& lib) {
  auto params = config.detector;
  if (config.absorptance_from_stack) {
    const auto stack = build_stack(config, lib);
    std::size_t k = 0;
    try {
      k = stack.index_of(config.tmm.layers.absorber);
    } catch (const std::exception&) {
      throw ConfigError("/tmm/sweep/absorber", "no layer labelled '" + config.tmm.layers.absorber + "'");
    }
    params.absorptance_armchair = tmm::response(stack, config.wavelength_nm, Axis::armchair).absorptance[k];
    params.absorptance_zigzag = tmm::response(stack, config.wavelength_nm, Axis::zigzag).absorptance[k];
  }
  return params;
}

std::string config_hash(const json& doc) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : doc.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace spd::config
