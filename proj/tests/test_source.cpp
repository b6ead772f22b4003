#include <doctest.h>

#include <cmath>
#include <numbers>

#include "spd/source.hpp"

using namespace spd::source;

TEST_CASE("photon energy at 1550 nm") {
  const double expected = 6.62607015e-34 * 299792458.0 / 1550e-9;
  CHECK(photon_energy(1550.0) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(photon_energy(1550.0) == doctest::Approx(1.2815e-19).epsilon(1e-4));
  CHECK_THROWS(photon_energy(0.0));
}

TEST_CASE("mean photon number and power convert both ways") {
  // 0.0053 photons per pulse at 10 kHz and 1550 nm
  const double p = power_from_mean_photons(0.0053, 1550.0, 1e4);
  CHECK(p == doctest::Approx(6.79e-18).epsilon(2e-3));
  CHECK(mean_photons_from_power(p, 1550.0, 1e4) == doctest::Approx(0.0053).epsilon(1e-14));
  CHECK_THROWS(mean_photons_from_power(-1.0, 1550.0, 1e4));
  CHECK_THROWS(mean_photons_from_power(1e-18, 1550.0, 0.0));
}

TEST_CASE("poisson pmf is normalised with the right mean and variance") {
  for (double mean : {1e-4, 0.0053, 0.2652, 1.0, 7.5, 60.0}) {
    CAPTURE(mean);
    double s = 0.0, m = 0.0, m2 = 0.0;
    for (std::uint64_t n = 0; n < 400; ++n) {
      const double p = poisson_pmf(mean, n);
      s += p;
      m += n * p;
      m2 += static_cast<double>(n * n) * p;
    }
    CHECK(std::abs(s - 1.0) < 1e-10);
    CHECK(std::abs(m - mean) < 1e-10);
    CHECK(std::abs(m2 - m * m - mean) < 1e-10);
  }
  CHECK(poisson_pmf(0.0, 0) == 1.0);
  CHECK(poisson_pmf(0.0, 3) == 0.0);
  CHECK(poisson_pmf(500.0, 500) > 0.0);  // no overflow in the factorial
}

TEST_CASE("multi-photon probability matches the direct series") {
  for (double mean : {1e-6, 0.0053, 0.2652, 2.0}) {
    double series = 0.0;
    for (std::uint64_t n = 2; n < 200; ++n) series += poisson_pmf(mean, n);
    CHECK(std::abs(multi_photon_probability(mean) - series) < 1e-12);
  }
  CHECK(multi_photon_probability(0.2652) == doctest::Approx(1.0 - std::exp(-0.2652) * 1.2652).epsilon(1e-12));
  CHECK(multi_photon_probability(0.2652) == doctest::Approx(2.88e-2).epsilon(5e-3));
  CHECK(multi_photon_probability(0.0) == 0.0);
  // small-mean limit n^2 / 2 without cancellation
  CHECK(multi_photon_probability(1e-9) == doctest::Approx(0.5e-18).epsilon(1e-6));
}

TEST_CASE("polarizers follow Malus's law") {
  OpticalChain chain{{Polarizer{60.0}}};
  CHECK(propagate(chain, Polarization::linear(0.0)).transmittance == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(propagate(chain, Polarization::none()).transmittance == 0.5);
  const auto out = propagate(chain, Polarization::none()).output;
  CHECK_FALSE(out.unpolarized);
  CHECK(out.angle_deg == 60.0);
  // crossed pair blocks, a third polarizer in between lets 1/8 through
  OpticalChain crossed{{Polarizer{0.0}, Polarizer{90.0}}};
  CHECK(propagate(crossed, Polarization::none()).transmittance < 1e-30);
  OpticalChain three{{Polarizer{0.0}, Polarizer{45.0}, Polarizer{90.0}}};
  CHECK(propagate(three, Polarization::none()).transmittance == doctest::Approx(0.125).epsilon(1e-14));
}

TEST_CASE("depolarizer scrambles without loss") {
  OpticalChain chain{{Polarizer{0.0}, Depolarizer{}, Polarizer{90.0}}};
  const auto t = propagate(chain, Polarization::linear(0.0));
  CHECK(t.transmittance == doctest::Approx(0.5).epsilon(1e-15));
  OpticalChain fibre{{Depolarizer{}}};
  CHECK(propagate(fibre, Polarization::linear(30.0)).transmittance == 1.0);
  CHECK(propagate(fibre, Polarization::linear(30.0)).output.unpolarized);
}

TEST_CASE("splitter arms and attenuators multiply") {
  OpticalChain pass{{Splitter{0.1, false}, Attenuator{1e-3}}};
  OpticalChain tap{{Splitter{0.1, true}}};
  CHECK(propagate(pass, Polarization::none()).transmittance == doctest::Approx(0.9e-3).epsilon(1e-14));
  CHECK(propagate(tap, Polarization::none()).transmittance == doctest::Approx(0.1).epsilon(1e-15));
  CHECK_THROWS(propagate(OpticalChain{{Attenuator{1.5}}}, Polarization::none()));
  CHECK_THROWS(propagate(OpticalChain{{Splitter{-0.1}}}, Polarization::none()));
}

TEST_CASE("attenuating a coherent train scales only its mean") {
  CoherentPulseTrain laser{1550.0, 1e4, 10.0, Polarization::linear(0.0)};
  const auto out = apply_chain(laser, OpticalChain{{Attenuator{0.01}, Depolarizer{}}});
  CHECK(out.mean_photons == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(out.rep_rate_hz == 1e4);
  CHECK(out.polarization.unpolarized);
  CHECK(out.photon_flux_hz() == doctest::Approx(1e3));

  // Poisson statistics survive: variance equals mean after attenuation
  spd::RandomStream rng(17);
  const auto n = sample_photon_numbers(out, 200000, rng);
  double s = 0.0, s2 = 0.0;
  for (auto k : n) {
    s += static_cast<double>(k);
    s2 += static_cast<double>(k * k);
  }
  const double mean = s / n.size(), var = s2 / n.size() - mean * mean;
  CHECK(std::abs(mean - 0.1) < 5.0 * std::sqrt(0.1 / n.size()));
  CHECK(std::abs(var - mean) < 5.0 * std::sqrt((0.1 + 2 * 0.01) / n.size()));
}

TEST_CASE("power readings through a chain") {
  const auto r = apply_chain(PowerReading{2e-3, 0.05}, OpticalChain{{Polarizer{90.0}}}, Polarization::linear(0.0));
  CHECK(r.mean_power_w < 1e-30);
  const auto r2 = apply_chain(PowerReading{2e-3, 0.05}, OpticalChain{{Attenuator{0.5}}});
  CHECK(r2.mean_power_w == 1e-3);
  CHECK(r2.relative_uncertainty == 0.05);
}

TEST_CASE("calibration from the tap arm of a splitter") {
  // 1 % tap reads 1 uW; device arm gets 99 uW then 1e-9 of attenuation
  OpticalChain post{{Attenuator{1e-9}}};
  const auto c = calibrate_flux(PowerReading{1e-6, 0.05}, 0.01, post, 1550.0, 1e4);
  const double device_w = 1e-6 * 99.0 * 1e-9;
  CHECK(c.device_power_w == doctest::Approx(device_w).epsilon(1e-13));
  CHECK(c.mean_photons == doctest::Approx(device_w / (photon_energy(1550.0) * 1e4)).epsilon(1e-13));
  CHECK(c.mean_photons_sigma == doctest::Approx(0.05 * c.mean_photons).epsilon(1e-14));
  CHECK_THROWS(calibrate_flux(PowerReading{1e-6}, 0.0, post, 1550.0, 1e4));
  CHECK_THROWS(calibrate_flux(PowerReading{1e-6}, 1.0, post, 1550.0, 1e4));
  CHECK_THROWS(calibrate_flux(PowerReading{1e-6}, 0.5, post, 1550.0, 0.0));
}

TEST_CASE("invalid trains are rejected") {
  CHECK_THROWS(CoherentPulseTrain{1550.0, 0.0, 0.1, {}}.validate());
  CHECK_THROWS(CoherentPulseTrain{1550.0, 1e4, -0.1, {}}.validate());
  CHECK_THROWS(CoherentPulseTrain{-1.0, 1e4, 0.1, {}}.validate());
  CHECK_NOTHROW(CoherentPulseTrain{1550.0, 1e4, 0.0, {}}.validate());
}
