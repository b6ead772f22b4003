#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spd/source.hpp"

namespace spd::detsim {

/// Phenomenological detector model. Times in microseconds, voltages in volts.
struct DetectorParams {
  double absorptance_armchair = 0.518;
  double absorptance_zigzag = 0.0;
  double iqe = 0.75;               ///< capture probability per absorbed photon
  double dark_rate_hz = 720.0;
  double fall_time_us = 2.3;       ///< 10-90 % of the capture edge
  double rise_time_us = 2.1;       ///< 10-90 % of the release edge
  double hold_time_mean_us = 10.0; ///< mean of the exponential part of the dwell
  double hold_time_min_us = 0.0;   ///< fixed part of the dwell before auto-reset
  double dead_time_us = 50.0;      ///< non-paralyzable readout dead time
  int max_occupancy = 4;
  double step_amplitude_v = 1e-3;
  double noise_sigma_v = 1e-4;
  double baseline_v = 0.0;

  void validate() const;
  /// Absorptance seen by light of the given polarisation; unpolarised light
  /// sees the mean of both axes, linear light cos^2 / sin^2 weighting.
  double absorptance(const source::Polarization& p) const;
};

enum class Origin : std::uint8_t { photon, dark };

/// Capture and release timestamps of one simulated (or detected) run.
/// `releases_us` is sorted; `release_of[i]` is the capture index it empties.
struct EventRecord {
  std::vector<double> captures_us;
  std::vector<Origin> origins;
  std::vector<double> releases_us;
  std::vector<std::size_t> release_of;

  std::size_t capture_count() const { return captures_us.size(); }
  std::size_t count(Origin origin) const;
  /// Highest simultaneous occupancy reached.
  int max_occupancy() const;
  /// Throws std::logic_error when occupancy leaves [0, max] or a release
  /// precedes its capture.
  void check_ledger(int max_occupancy) const;
};

struct TimeTrace {
  double sample_rate_hz = 0.0;
  double baseline_v = 0.0;
  std::vector<double> samples;

  double dt_us() const { return 1e6 / sample_rate_hz; }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

/// Event-driven simulation of the detection cycle for `duration_s` seconds.
///
/// Pulses arrive at k / f. Each carries Poisson(n) photons, each absorbed with
/// the polarisation-appropriate absorptance and captured with probability
/// `iqe`. Photons of one pulse arrive together and register as at most one
/// capture. Dark captures form a homogeneous Poisson process. A capture is
/// accepted only when occupancy < max_occupancy and the readout is outside
/// the dead time of the last accepted capture; each accepted capture
/// auto-resets after hold_time_min + Exp(hold_time_mean).
///
/// Photon, dark and dwell draws use separate substreams of `seed`, so the
/// output is a pure function of (params, source, duration, seed).
EventRecord simulate(const DetectorParams& params, const source::CoherentPulseTrain& source,
                     double duration_s, std::uint64_t seed);

/// Non-paralyzable dead time: drop any capture closer than `dead_time_us` to
/// the previously accepted one. Input must be sorted.
std::vector<double> apply_dead_time(std::span<const double> captures_us, double dead_time_us);

/// V_OUT = baseline - step * occupancy(t) with single-exponential edges and
/// white Gaussian noise. Edge time constants are fall_time / ln 9 and
/// rise_time / ln 9, so the 10-90 % times equal the configured values.
TimeTrace synthesize_trace(const EventRecord& events, const DetectorParams& params,
                           double duration_s, double sample_rate_hz, std::uint64_t seed);

}  // namespace spd::detsim
