#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spd/analysis.hpp"
#include "spd/detsim.hpp"
#include "spd/materials.hpp"
#include "spd/source.hpp"
#include "spd/tmm.hpp"

namespace spd::config {

using json = nlohmann::ordered_json;

/// Validation failure; `path()` is a JSON pointer to the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct LayerSpec {
  std::string label;
  std::string material;
  double thickness_nm = 0.0;
};

struct StackSpec {
  std::string incident = "air";
  std::string exit = "si";
  std::vector<LayerSpec> layers;
};

struct GridSpec {
  double min_nm = 0.0;
  double max_nm = 400.0;
  double step_nm = 2.0;
};

struct TmmSettings {
  Axis axis = Axis::armchair;
  GridSpec top;
  GridSpec bottom;
  double tolerance_nm = 1e-3;
  tmm::SweepLayers layers;
};

struct CalibrationSpec {
  source::PowerReading reading;
  double tap_fraction = 0.5;
  source::OpticalChain post_tap;
};

struct TraceSettings {
  bool enabled = true;
  double sample_rate_hz = 5e7;
  double max_duration_s = 0.01;  ///< the trace covers the first min(duration, this) seconds
};

struct RunSettings {
  double duration_s = 1.0;
  std::uint64_t seed = 1;
  bool shutter_open = true;
  std::string out = "out";
  TraceSettings trace;
};

/// Everything one experiment needs; serialisable both ways so that a run
/// manifest can be fed back in as a config.
struct ExperimentConfig {
  double wavelength_nm = 1550.0;
  std::string materials_dir;  ///< empty: bundled tables
  StackSpec stack;
  TmmSettings tmm;
  source::CoherentPulseTrain laser;  ///< at the laser, before the chain
  source::OpticalChain chain;
  std::optional<CalibrationSpec> calibration;
  detsim::DetectorParams detector;
  bool absorptance_from_stack = false;
  analysis::DetectionSettings detection;
  double histogram_bin_v = 5e-5;
  RunSettings run;
};

/// Device-default experiment (device stack, unpolarised 10 kHz source).
ExperimentConfig defaults();

ExperimentConfig from_json(const json& doc);
json to_json(const ExperimentConfig& config);

/// Reads a config file, or the embedded config of a run manifest.
ExperimentConfig load(const std::filesystem::path& path);

MaterialLibrary materials(const ExperimentConfig& config);
tmm::LayerStack build_stack(const ExperimentConfig& config, const MaterialLibrary& lib);
/// Pulse train at the device plane; zero photons when the shutter is closed.
source::CoherentPulseTrain device_train(const ExperimentConfig& config);
/// Detector parameters, with absorptances taken from the stack when requested.
detsim::DetectorParams resolved_detector(const ExperimentConfig& config, const MaterialLibrary& lib);

/// 64-bit FNV-1a of the compact JSON serialisation, as 16 hex digits.
std::string config_hash(const json& doc);

}  // namespace spd::config
