#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "spd/random.hpp"

namespace spd::source {

// CODATA 2018 exact values.
inline constexpr double kPlanck = 6.62607015e-34;      // J s
inline constexpr double kSpeedOfLight = 299792458.0;   // m / s

/// Energy of one photon of vacuum wavelength `wavelength_nm`, in joules.
double photon_energy(double wavelength_nm);

/// Probability that a coherent state of mean photon number `mean` holds
/// exactly `n` photons. Evaluated in log space.
double poisson_pmf(double mean, std::uint64_t n);

/// Mean photons per pulse from average optical power: P = n h nu f.
double mean_photons_from_power(double power_w, double wavelength_nm, double rep_rate_hz);
double power_from_mean_photons(double mean_photons, double wavelength_nm, double rep_rate_hz);

/// Probability of two or more photons in one pulse: 1 - e^-n (1 + n).
double multi_photon_probability(double mean_photons);

/// Linear polarisation (angle measured from the absorber's armchair axis) or
/// fully unpolarised light.
struct Polarization {
  bool unpolarized = true;
  double angle_deg = 0.0;

  static Polarization linear(double angle_deg) { return {false, angle_deg}; }
  static Polarization none() { return {true, 0.0}; }
};

struct Polarizer {
  double angle_deg = 0.0;
};

/// Beam splitter. The pass arm carries 1 - tap_fraction, the tap arm tap_fraction.
struct Splitter {
  double tap_fraction = 0.5;
  bool take_tap_arm = false;
};

struct Attenuator {
  double transmittance = 1.0;
};

/// Multimode fibre: scrambles polarisation, lossless.
struct Depolarizer {};

using Stage = std::variant<Polarizer, Splitter, Attenuator, Depolarizer>;

struct OpticalChain {
  std::vector<Stage> stages;

  void validate() const;
};

struct ChainTransfer {
  double transmittance = 1.0;
  Polarization output;
};

/// Power transmittance of the chain for a given input polarisation.
/// Polarizers follow Malus's law (0.5 for unpolarised input).
ChainTransfer propagate(const OpticalChain& chain, Polarization input);

struct CoherentPulseTrain {
  double wavelength_nm = 1550.0;
  double rep_rate_hz = 1e4;
  double mean_photons = 0.0;
  Polarization polarization;

  void validate() const;
  double photon_flux_hz() const { return mean_photons * rep_rate_hz; }
};

struct PowerReading {
  double mean_power_w = 0.0;
  double relative_uncertainty = 0.05;

  void validate() const;
};

/// Attenuation keeps the state coherent: only the mean photon number scales.
CoherentPulseTrain apply_chain(const CoherentPulseTrain& train, const OpticalChain& chain);
PowerReading apply_chain(const PowerReading& reading, const OpticalChain& chain,
                         Polarization input = Polarization::linear(0.0));

struct Calibration {
  double mean_photons = 0.0;
  double mean_photons_sigma = 0.0;
  double device_power_w = 0.0;
};

/// Device-plane photon number inferred from the power meter on the tap arm
/// of a splitter. The device arm receives (1 - tap) / tap of the metered
/// power, then `post_tap` (shutter, attenuators, fibre). The meter's relative
/// uncertainty maps one-to-one onto the photon number.
Calibration calibrate_flux(const PowerReading& tap_reading, double tap_fraction,
                           const OpticalChain& post_tap, double wavelength_nm, double rep_rate_hz,
                           Polarization input = Polarization::linear(0.0));

/// Photon numbers for `count` consecutive pulses of the train.
std::vector<std::uint64_t> sample_photon_numbers(const CoherentPulseTrain& train,
                                                 std::size_t count, RandomStream& rng);

}  // namespace spd::source
