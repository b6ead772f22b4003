#include "spd/source.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace spd::source {

namespace {

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string(what) + " must be positive and finite");
  }
}

double malus(Polarization in, double polarizer_deg) {
  if (in.unpolarized) return 0.5;
  const double c = std::cos((polarizer_deg - in.angle_deg) * std::numbers::pi / 180.0);
  return c * c;
}

}  // namespace

double photon_energy(double wavelength_nm) {
  require_positive(wavelength_nm, "wavelength");
  return kPlanck * kSpeedOfLight / (wavelength_nm * 1e-9);
}

double poisson_pmf(double mean, std::uint64_t n) {
  if (!(mean >= 0.0)) throw std::invalid_argument("mean photon number must be >= 0");
  if (mean == 0.0) return n == 0 ? 1.0 : 0.0;
  const double k = static_cast<double>(n);
  return std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0));
}

double mean_photons_from_power(double power_w, double wavelength_nm, double rep_rate_hz) {
  require_positive(power_w, "power");
  require_positive(rep_rate_hz, "repetition rate");
  return power_w / (photon_energy(wavelength_nm) * rep_rate_hz);
}

double power_from_mean_photons(double mean_photons, double wavelength_nm, double rep_rate_hz) {
  require_positive(mean_photons, "mean photon number");
  require_positive(rep_rate_hz, "repetition rate");
  return mean_photons * photon_energy(wavelength_nm) * rep_rate_hz;
}

double multi_photon_probability(double mean_photons) {
  if (!(mean_photons >= 0.0)) throw std::invalid_argument("mean photon number must be >= 0");
  // -expm1 keeps precision for small means, where 1 - e^-n (1+n) ~ n^2 / 2.
  return -std::expm1(-mean_photons) - mean_photons * std::exp(-mean_photons);
}

void OpticalChain::validate() const {
  for (const auto& stage : stages) {
    if (const auto* s = std::get_if<Splitter>(&stage)) {
      if (!(s->tap_fraction >= 0.0 && s->tap_fraction <= 1.0)) {
        throw std::invalid_argument("splitter tap fraction must lie in [0, 1]");
      }
    } else if (const auto* a = std::get_if<Attenuator>(&stage)) {
      if (!(a->transmittance >= 0.0 && a->transmittance <= 1.0)) {
        throw std::invalid_argument("attenuator transmittance must lie in [0, 1]");
      }
    } else if (const auto* p = std::get_if<Polarizer>(&stage)) {
      if (!std::isfinite(p->angle_deg)) throw std::invalid_argument("polarizer angle must be finite");
    }
  }
}

ChainTransfer propagate(const OpticalChain& chain, Polarization input) {
  chain.validate();
  ChainTransfer out{1.0, input};
  for (const auto& stage : chain.stages) {
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, Polarizer>) {
            out.transmittance *= malus(out.output, s.angle_deg);
            out.output = Polarization::linear(s.angle_deg);
          } else if constexpr (std::is_same_v<T, Splitter>) {
            out.transmittance *= s.take_tap_arm ? s.tap_fraction : 1.0 - s.tap_fraction;
          } else if constexpr (std::is_same_v<T, Attenuator>) {
            out.transmittance *= s.transmittance;
          } else {
            out.output = Polarization::none();
          }
        },
        stage);
  }
  return out;
}

void CoherentPulseTrain::validate() const {
  require_positive(wavelength_nm, "wavelength");
  require_positive(rep_rate_hz, "repetition rate");
  if (!(mean_photons >= 0.0) || !std::isfinite(mean_photons)) {
    throw std::invalid_argument("mean photon number must be >= 0");
  }
}

void PowerReading::validate() const {
  if (!(mean_power_w >= 0.0)) throw std::invalid_argument("power must be >= 0");
  if (!(relative_uncertainty >= 0.0)) throw std::invalid_argument("uncertainty must be >= 0");
}

CoherentPulseTrain apply_chain(const CoherentPulseTrain& train, const OpticalChain& chain) {
  train.validate();
  const auto transfer = propagate(chain, train.polarization);
  CoherentPulseTrain out = train;
  out.mean_photons = train.mean_photons * transfer.transmittance;
  out.polarization = transfer.output;
  return out;
}

PowerReading apply_chain(const PowerReading& reading, const OpticalChain& chain,
                         Polarization input) {
  reading.validate();
  PowerReading out = reading;
  out.mean_power_w = reading.mean_power_w * propagate(chain, input).transmittance;
  return out;
}

Calibration calibrate_flux(const PowerReading& tap_reading, double tap_fraction,
                           const OpticalChain& post_tap, double wavelength_nm, double rep_rate_hz,
                           Polarization input) {
  tap_reading.validate();
  if (!(tap_fraction > 0.0 && tap_fraction < 1.0)) {
    throw std::invalid_argument("tap fraction must lie in (0, 1)");
  }
  require_positive(rep_rate_hz, "repetition rate");
  const double device_arm = tap_reading.mean_power_w * (1.0 - tap_fraction) / tap_fraction;
  Calibration c;
  c.device_power_w = device_arm * propagate(post_tap, input).transmittance;
  c.mean_photons = c.device_power_w / (photon_energy(wavelength_nm) * rep_rate_hz);
  c.mean_photons_sigma = c.mean_photons * tap_reading.relative_uncertainty;
  return c;
}

std::vector<std::uint64_t> sample_photon_numbers(const CoherentPulseTrain& train,
                                                 std::size_t count, RandomStream& rng) {
  train.validate();
  std::vector<std::uint64_t> out(count);
  for (auto& n : out) n = rng.poisson(train.mean_photons);
  return out;
}

}  // namespace spd::source
