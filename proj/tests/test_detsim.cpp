#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "spd/detsim.hpp"

using namespace spd;
using namespace spd::detsim;
using source::CoherentPulseTrain;
using source::Polarization;

namespace {

DetectorParams quiet() {
  DetectorParams p;
  p.dark_rate_hz = 0.0;
  p.dead_time_us = 0.0;
  p.max_occupancy = 1000;
  return p;
}

CoherentPulseTrain dark_only() { return {1550.0, 1e4, 0.0, Polarization::none()}; }

}  // namespace

TEST_CASE("absorptance follows the light's polarisation") {
  DetectorParams p;
  p.absorptance_armchair = 0.6;
  p.absorptance_zigzag = 0.2;
  CHECK(p.absorptance(Polarization::none()) == doctest::Approx(0.4));
  CHECK(p.absorptance(Polarization::linear(0.0)) == doctest::Approx(0.6));
  CHECK(p.absorptance(Polarization::linear(90.0)) == doctest::Approx(0.2));
  CHECK(p.absorptance(Polarization::linear(45.0)) == doctest::Approx(0.4));
}

TEST_CASE("parameter validation") {
  DetectorParams p;
  CHECK_NOTHROW(p.validate());
  p.iqe = 1.2;
  CHECK_THROWS(p.validate());
  p = {};
  p.max_occupancy = 0;
  CHECK_THROWS(p.validate());
  p = {};
  p.dark_rate_hz = -1.0;
  CHECK_THROWS(p.validate());
  p = {};
  CHECK_THROWS(simulate(p, dark_only(), 0.0, 1));
}

TEST_CASE("dark captures form a Poisson process") {
  auto p = quiet();
  p.dark_rate_hz = 720.0;
  p.hold_time_mean_us = 1.0;
  const double T = 30.0;
  const auto ev = simulate(p, dark_only(), T, 5);
  const double n = static_cast<double>(ev.capture_count());
  CHECK(std::abs(n - 720.0 * T) < 5.0 * std::sqrt(720.0 * T));
  CHECK(ev.count(Origin::photon) == 0);
  std::vector<double> gaps;
  for (std::size_t i = 1; i < ev.captures_us.size(); ++i) gaps.push_back(ev.captures_us[i] - ev.captures_us[i - 1]);
  CHECK(oracle::ks_exponential_p(gaps, 1e6 / 720.0) > 1e-3);
}

TEST_CASE("photon captures per pulse follow 1 - exp(-n eta)") {
  auto p = quiet();
  p.absorptance_armchair = 0.5;
  p.absorptance_zigzag = 0.1;
  p.iqe = 0.8;
  CoherentPulseTrain src{1550.0, 1e5, 0.4, Polarization::none()};
  const double T = 2.0;
  const auto ev = simulate(p, src, T, 9);
  const double pulses = 1e5 * T;
  const double prob = -std::expm1(-0.4 * 0.3 * 0.8);
  const double expected = pulses * prob;
  CHECK(std::abs(ev.capture_count() - expected) < 5.0 * std::sqrt(expected * (1 - prob)));
  // captures sit on pulse arrival times
  for (std::size_t i = 0; i < 100; ++i) {
    const double k = ev.captures_us[i] / 10.0;
    CHECK(std::abs(k - std::round(k)) < 1e-9);
  }
}

TEST_CASE("closed shutter keeps only the dark process") {
  DetectorParams p;
  CoherentPulseTrain closed{1550.0, 1e4, 0.0, Polarization::none()};
  const auto ev = simulate(p, closed, 5.0, 3);
  CHECK(ev.count(Origin::photon) == 0);
  CHECK(ev.count(Origin::dark) > 0);
}

TEST_CASE("occupancy, dead time and ledger invariants hold") {
  DetectorParams p;
  p.dark_rate_hz = 2e4;
  p.hold_time_mean_us = 200.0;
  p.dead_time_us = 30.0;
  p.max_occupancy = 3;
  CoherentPulseTrain src{1550.0, 1e5, 0.5, Polarization::linear(0.0)};
  const auto ev = simulate(p, src, 0.5, 21);
  CHECK_NOTHROW(ev.check_ledger(3));
  CHECK(ev.max_occupancy() == 3);
  for (std::size_t i = 1; i < ev.captures_us.size(); ++i) {
    CHECK(ev.captures_us[i] - ev.captures_us[i - 1] >= 30.0);
  }
  CHECK(std::is_sorted(ev.releases_us.begin(), ev.releases_us.end()));
  for (std::size_t j = 0; j < ev.releases_us.size(); ++j) {
    CHECK(ev.releases_us[j] >= ev.captures_us[ev.release_of[j]]);
    CHECK(ev.releases_us[j] < 0.5e6);
  }
}

TEST_CASE("ledger check catches corrupted records") {
  EventRecord rec;
  rec.captures_us = {1.0, 2.0};
  rec.origins = {Origin::dark, Origin::dark};
  rec.releases_us = {0.5};
  rec.release_of = {0};
  CHECK_THROWS_AS(rec.check_ledger(4), std::logic_error);
  rec.releases_us = {3.0};
  CHECK_NOTHROW(rec.check_ledger(4));
  CHECK_THROWS_AS(rec.check_ledger(1), std::logic_error);
}

TEST_CASE("dwell is the fixed part plus an exponential") {
  auto p = quiet();
  p.dark_rate_hz = 1000.0;
  p.hold_time_min_us = 5.0;
  p.hold_time_mean_us = 20.0;
  const auto ev = simulate(p, dark_only(), 10.0, 4);
  std::vector<double> excess;
  for (std::size_t j = 0; j < ev.releases_us.size(); ++j) {
    const double dwell = ev.releases_us[j] - ev.captures_us[ev.release_of[j]];
    CHECK(dwell >= 5.0);
    excess.push_back(dwell - 5.0);
  }
  CHECK(oracle::ks_exponential_p(excess, 20.0) > 1e-3);
}

TEST_CASE("same seed, same record; streams are separate") {
  DetectorParams p;
  CoherentPulseTrain src{1550.0, 1e4, 0.05, Polarization::none()};
  const auto a = simulate(p, src, 2.0, 77);
  const auto b = simulate(p, src, 2.0, 77);
  CHECK(a.captures_us == b.captures_us);
  CHECK(a.releases_us == b.releases_us);
  const auto c = simulate(p, src, 2.0, 78);
  CHECK(a.captures_us != c.captures_us);

  // without blocking, the dark captures do not depend on the light level
  auto q = quiet();
  q.dark_rate_hz = 720.0;
  const auto lit = simulate(q, {1550.0, 1e4, 0.05, Polarization::none()}, 2.0, 5);
  const auto unlit = simulate(q, dark_only(), 2.0, 5);
  std::vector<double> lit_dark;
  for (std::size_t i = 0; i < lit.captures_us.size(); ++i) {
    if (lit.origins[i] == Origin::dark) lit_dark.push_back(lit.captures_us[i]);
  }
  CHECK(lit_dark == unlit.captures_us);
}

TEST_CASE("apply_dead_time is non-paralyzable") {
  const std::vector<double> t{0.0, 10.0, 49.0, 50.0, 60.0, 99.0, 101.0};
  CHECK(apply_dead_time(t, 50.0) == std::vector<double>{0.0, 50.0, 101.0});
  CHECK(apply_dead_time(t, 0.0) == t);
  const std::vector<double> unsorted{2.0, 1.0};
  CHECK_THROWS(apply_dead_time(unsorted, 1.0));
}

TEST_CASE("noise-free trace settles on -step * occupancy") {
  auto p = quiet();
  p.noise_sigma_v = 0.0;
  p.baseline_v = 0.01;
  EventRecord ev;
  ev.captures_us = {100.0, 200.0};
  ev.origins = {Origin::dark, Origin::dark};
  ev.releases_us = {300.0, 400.0};
  ev.release_of = {0, 1};
  const auto tr = synthesize_trace(ev, p, 500e-6, 5e7, 1);
  REQUIRE(tr.samples.size() == 25000);
  const auto at = [&](double us) { return tr.samples[static_cast<std::size_t>(us * 50)]; };
  CHECK(at(90.0) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(at(190.0) == doctest::Approx(0.01 - 1e-3).epsilon(1e-9));
  CHECK(at(290.0) == doctest::Approx(0.01 - 2e-3).epsilon(1e-9));
  CHECK(at(390.0) == doctest::Approx(0.01 - 1e-3).epsilon(1e-9));
  CHECK(at(490.0) == doctest::Approx(0.01).epsilon(1e-9));
}

TEST_CASE("exponential edges hit their configured 10-90 % times") {
  auto p = quiet();
  p.noise_sigma_v = 0.0;
  EventRecord ev;
  ev.captures_us = {50.0};
  ev.origins = {Origin::dark};
  ev.releases_us = {150.0};
  ev.release_of = {0};
  const double rate = 1e9;
  const auto tr = synthesize_trace(ev, p, 250e-6, rate, 1);
  const double dt = 1e6 / rate;
  const auto crossing = [&](std::size_t from, double level, bool falling) {
    for (std::size_t i = from + 1; i < tr.samples.size(); ++i) {
      const double a = tr.samples[i - 1], b = tr.samples[i];
      if (falling ? (a > level && b <= level) : (a < level && b >= level)) {
        return (static_cast<double>(i - 1) + (level - a) / (b - a)) * dt;
      }
    }
    return -1.0;
  };
  const std::size_t c0 = static_cast<std::size_t>(49.0 / dt), r0 = static_cast<std::size_t>(149.0 / dt);
  const double fall = crossing(c0, -0.9e-3, true) - crossing(c0, -0.1e-3, true);
  const double rise = crossing(r0, -0.1e-3, false) - crossing(r0, -0.9e-3, false);
  CHECK(fall == doctest::Approx(2.3).epsilon(1e-3));
  CHECK(rise == doctest::Approx(2.1).epsilon(1e-3));
}

TEST_CASE("trace synthesis rejects undersampling and is seeded") {
  DetectorParams p;
  EventRecord ev;
  CHECK_THROWS(synthesize_trace(ev, p, 1e-3, 1e6, 1));
  const auto a = synthesize_trace(ev, p, 1e-3, 5e7, 8);
  const auto b = synthesize_trace(ev, p, 1e-3, 5e7, 8);
  const auto c = synthesize_trace(ev, p, 1e-3, 5e7, 9);
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
  double s2 = 0.0;
  for (double v : a.samples) s2 += v * v;
  CHECK(std::sqrt(s2 / a.samples.size()) == doctest::Approx(p.noise_sigma_v).epsilon(0.02));
}
