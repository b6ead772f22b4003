#pragma once

#include <span>
#include <string>
#include <vector>

#include "spd/detsim.hpp"

namespace spd::analysis {

using detsim::EventRecord;
using detsim::TimeTrace;

struct DetectionSettings {
  double threshold_v = 5e-4;        ///< depth below baseline that opens an event
  double hysteresis_v = 2.5e-4;     ///< event closes below threshold - hysteresis
  double min_width_us = 1.0;        ///< narrower events are discarded
  double baseline_window_us = 1e4;  ///< rolling-mode window
  double mode_bin_v = 0.0;          ///< histogram bin for the mode; 0 -> hysteresis / 4

  void validate() const;
};

/// Baseline per sample: histogram mode of consecutive windows, linearly
/// interpolated between window centres.
std::vector<double> rolling_baseline(const TimeTrace& trace, const DetectionSettings& settings);

/// Threshold crossings with hysteresis. Detected events carry origin `dark`
/// (a trace cannot tell photon from dark captures). Throws on traces shorter
/// than one baseline window or with no variation at all.
EventRecord detect_events(const TimeTrace& trace, const DetectionSettings& settings);

struct OccupationHistogram {
  double origin_v = 0.0;  ///< lower edge of bin 0
  double bin_width_v = 0.0;
  std::vector<std::size_t> counts;
  /// Peak centres, descending in voltage; entry k is occupation state |k>.
  std::vector<double> peak_levels_v;

  double bin_center(std::size_t i) const { return origin_v + (static_cast<double>(i) + 0.5) * bin_width_v; }
  std::string label(std::size_t k) const { return "|" + std::to_string(k) + ">"; }
};

/// Value histogram of the trace; peaks are local maxima whose topographic
/// prominence is at least `prominence_fraction` of the tallest bin.
OccupationHistogram occupation_histogram(const TimeTrace& trace, double bin_width_v,
                                         double prominence_fraction = 2e-3);

struct RateEstimate {
  std::size_t count = 0;
  double rate_hz = 0.0;
  double sigma_hz = 0.0;      ///< sqrt(N) / duration
  double upper_95_hz = 0.0;   ///< one-sided 95 % upper limit (ln 20 / duration at N = 0)
};

RateEstimate count_rate(std::size_t count, double duration_s);
RateEstimate count_rate(const EventRecord& events, double duration_s);

struct WindowedRates {
  double window_s = 0.0;
  std::vector<std::size_t> counts;
  double chi_square = 0.0;
  double dof = 0.0;
  double p_value = 1.0;  ///< homogeneity (constant-rate) test
};

/// Capture counts in consecutive windows and a Poisson dispersion test.
WindowedRates windowed_rates(const EventRecord& events, double duration_s, double window_s);

struct CountingResult {
  long long counts_light = 0;
  long long counts_dark = 0;
  double duration_s = 0.0;
  double photon_flux_hz = 0.0;
  double eqe = 0.0;
  double eqe_sigma = 0.0;          ///< Poisson and calibration terms in quadrature
  double eqe_poisson_sigma = 0.0;
  bool negative = false;           ///< dark-subtracted counts below zero; eqe left unclamped
};

/// EQE from shutter-open and shutter-closed counts of equal duration.
CountingResult estimate_eqe(long long counts_light, long long counts_dark, double mean_photons,
                            double rep_rate_hz, double duration_s,
                            double calibration_uncertainty = 0.05);

struct SweepPoint {
  double rep_rate_hz = 0.0;
  double counts = 0.0;
};

struct FitResult {
  double slope = 0.0;  ///< counts per Hz of repetition rate
  double intercept = 0.0;
  double slope_sigma = 0.0;
  double intercept_sigma = 0.0;
  double eqe_from_slope = 0.0;
  double eqe_sigma = 0.0;
  std::vector<double> residuals;
};

/// Ordinary least squares counts = slope * f + intercept at fixed n;
/// EQE = slope / (n * duration).
FitResult eqe_from_frequency_sweep(std::span<const SweepPoint> points, double mean_photons,
                                   double duration_s);

struct EdgeOptions {
  double pre_window_us = 4.0;    ///< reference averaging window before the capture / after the release
  double guard_us = 2.0;         ///< gap between the capture mark and the window before it
  double post_guard_us = 12.0;   ///< gap between the release mark and the window after it
  int smooth_samples = 1;      ///< centred moving average applied before crossing search
  bool require_resolved = true;
};

struct EdgeTimes {
  double fall_us = 0.0;
  double rise_us = 0.0;
  double depth_v = 0.0;
};

/// 10-90 % fall and rise times of the event between `capture_us` and
/// `release_us`, by linear interpolation between samples. The fall is
/// referenced to the level before the capture, the rise to the level after
/// the release; both share the deepest point of the event. With
/// `require_resolved`, throws if either edge spans under two sample periods.
EdgeTimes edge_times(const TimeTrace& trace, double capture_us, double release_us,
                     const EdgeOptions& options = {});

/// Single-edge variants for waveforms that hold only one edge, such as
/// capture- or release-aligned averages.
double fall_time(const TimeTrace& trace, double capture_us, double plateau_end_us,
                 const EdgeOptions& options = {});
double rise_time(const TimeTrace& trace, double release_us, double plateau_start_us,
                 const EdgeOptions& options = {});

enum class Align { capture, release };

/// Mean waveform of all events aligned on their capture (or release) marks,
/// covering [mark - pre_us, mark + post_us). Events that do not fit are skipped.
TimeTrace average_event_shape(const TimeTrace& trace, const EventRecord& events, Align align,
                              double pre_us, double post_us);

}  // namespace spd::analysis
