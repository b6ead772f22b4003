#include "spd/detsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <stdexcept>

namespace spd::detsim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Stream indices below the caller's seed.
constexpr std::uint64_t kPhotonStream = 1;
constexpr std::uint64_t kDarkStream = 2;
constexpr std::uint64_t kDwellStream = 3;
constexpr std::uint64_t kNoiseStream = 4;

void require_fraction(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
}

void require_nonnegative(double v, const char* what) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string(what) + " must be >= 0");
  }
}

// Walks captures and releases in time order (releases first on ties) and
// reports the occupancy after every step.
template <class F>
void sweep_occupancy(const EventRecord& r, F&& on_step) {
  std::vector<double> caps = r.captures_us;
  std::sort(caps.begin(), caps.end());
  std::size_t i = 0, j = 0;
  int occ = 0;
  while (i < caps.size() || j < r.releases_us.size()) {
    if (j < r.releases_us.size() && (i == caps.size() || r.releases_us[j] <= caps[i])) {
      --occ;
      ++j;
    } else {
      ++occ;
      ++i;
    }
    on_step(occ);
  }
}

}  // namespace

void DetectorParams::validate() const {
  require_fraction(absorptance_armchair, "absorptance_armchair");
  require_fraction(absorptance_zigzag, "absorptance_zigzag");
  require_fraction(iqe, "iqe");
  require_nonnegative(dark_rate_hz, "dark_rate_hz");
  require_nonnegative(fall_time_us, "fall_time_us");
  require_nonnegative(rise_time_us, "rise_time_us");
  require_nonnegative(hold_time_mean_us, "hold_time_mean_us");
  require_nonnegative(hold_time_min_us, "hold_time_min_us");
  require_nonnegative(dead_time_us, "dead_time_us");
  require_nonnegative(noise_sigma_v, "noise_sigma_v");
  if (max_occupancy < 1) throw std::invalid_argument("max_occupancy must be >= 1");
  if (!std::isfinite(step_amplitude_v) || !std::isfinite(baseline_v)) {
    throw std::invalid_argument("step_amplitude_v and baseline_v must be finite");
  }
}

double DetectorParams::absorptance(const source::Polarization& p) const {
  if (p.unpolarized) return 0.5 * (absorptance_armchair + absorptance_zigzag);
  const double c = std::cos(p.angle_deg * std::numbers::pi / 180.0);
  return absorptance_armchair * c * c + absorptance_zigzag * (1.0 - c * c);
}

std::size_t EventRecord::count(Origin origin) const {
  return static_cast<std::size_t>(std::count(origins.begin(), origins.end(), origin));
}

int EventRecord::max_occupancy() const {
  int best = 0;
  sweep_occupancy(*this, [&](int occ) { best = std::max(best, occ); });
  return best;
}

void EventRecord::check_ledger(int max_occ) const {
  if (origins.size() != captures_us.size() || release_of.size() != releases_us.size()) {
    throw std::logic_error("event record arrays differ in length");
  }
  std::vector<bool> released(captures_us.size(), false);
  for (std::size_t j = 0; j < releases_us.size(); ++j) {
    const auto c = release_of[j];
    if (c >= captures_us.size()) throw std::logic_error("release refers to unknown capture");
    if (released[c]) throw std::logic_error("capture released twice");
    if (releases_us[j] < captures_us[c]) throw std::logic_error("release precedes its capture");
    released[c] = true;
  }
  sweep_occupancy(*this, [&](int occ) {
    if (occ < 0 || occ > max_occ) throw std::logic_error("occupancy out of range");
  });
}

EventRecord simulate(const DetectorParams& params, const source::CoherentPulseTrain& source,
                     double duration_s, std::uint64_t seed) {
  params.validate();
  source.validate();
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) {
    throw std::invalid_argument("duration must be positive");
  }
  const double end_us = duration_s * 1e6;
  const double period_us = 1e6 / source.rep_rate_hz;
  const double pulses_exact = duration_s * source.rep_rate_hz;
  const double pulses_rounded = std::round(pulses_exact);
  const auto pulse_count = static_cast<std::uint64_t>(
      std::abs(pulses_exact - pulses_rounded) <= 1e-9 * std::max(1.0, pulses_exact)
          ? pulses_rounded
          : std::ceil(pulses_exact));
  const double eta = params.absorptance(source.polarization) * params.iqe;

  RandomStream photons = RandomStream::substream(seed, kPhotonStream);
  RandomStream dark = RandomStream::substream(seed, kDarkStream);
  RandomStream dwell = RandomStream::substream(seed, kDwellStream);

  std::uint64_t pulse = 0;
  const auto next_photon_candidate = [&]() -> double {
    if (source.mean_photons == 0.0 || eta == 0.0) return kInf;
    while (pulse < pulse_count) {
      const std::uint64_t k = pulse++;
      const auto n = photons.poisson(source.mean_photons);
      bool hit = false;
      for (std::uint64_t p = 0; p < n && !hit; ++p) hit = photons.uniform() < eta;
      if (hit) return static_cast<double>(k) * period_us;
    }
    return kInf;
  };
  const double dark_mean_gap_us = params.dark_rate_hz > 0.0 ? 1e6 / params.dark_rate_hz : kInf;
  const auto next_dark = [&]() -> double {
    return params.dark_rate_hz > 0.0 ? dark.exponential(dark_mean_gap_us) : kInf;
  };

  using Pending = std::pair<double, std::size_t>;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> pending;

  EventRecord rec;
  int occupancy = 0;
  double last_accepted = -kInf;
  double t_photon = next_photon_candidate();
  double t_dark = next_dark();

  const auto drain_until = [&](double t) {
    while (!pending.empty() && pending.top().first <= t) {
      rec.releases_us.push_back(pending.top().first);
      rec.release_of.push_back(pending.top().second);
      pending.pop();
      --occupancy;
    }
  };

  while (true) {
    const bool photon_first = t_photon <= t_dark;
    const double t = photon_first ? t_photon : t_dark;
    if (!(t < end_us)) break;
    const Origin origin = photon_first ? Origin::photon : Origin::dark;
    if (photon_first) {
      t_photon = next_photon_candidate();
    } else {
      t_dark += next_dark();
    }

    drain_until(t);
    if (t - last_accepted < params.dead_time_us) continue;
    if (occupancy >= params.max_occupancy) continue;

    const double hold = params.hold_time_min_us +
                        (params.hold_time_mean_us > 0.0 ? dwell.exponential(params.hold_time_mean_us) : 0.0);
    rec.captures_us.push_back(t);
    rec.origins.push_back(origin);
    pending.emplace(t + hold, rec.captures_us.size() - 1);
    ++occupancy;
    last_accepted = t;
  }
  // Electrons still trapped at the end of the run are not released inside it.
  while (!pending.empty() && pending.top().first < end_us) {
    rec.releases_us.push_back(pending.top().first);
    rec.release_of.push_back(pending.top().second);
    pending.pop();
  }
  return rec;
}

std::vector<double> apply_dead_time(std::span<const double> captures_us, double dead_time_us) {
  require_nonnegative(dead_time_us, "dead time");
  if (!std::is_sorted(captures_us.begin(), captures_us.end())) {
    throw std::invalid_argument("captures must be sorted");
  }
  std::vector<double> kept;
  double last = -kInf;
  for (double t : captures_us) {
    if (t - last < dead_time_us) continue;
    kept.push_back(t);
    last = t;
  }
  return kept;
}

TimeTrace synthesize_trace(const EventRecord& events, const DetectorParams& params,
                           double duration_s, double sample_rate_hz, std::uint64_t seed) {
  params.validate();
  if (!(duration_s > 0.0)) throw std::invalid_argument("duration must be positive");
  const double fastest_edge_us = std::min(params.fall_time_us, params.rise_time_us);
  if (!(sample_rate_hz > 0.0) || sample_rate_hz * fastest_edge_us * 1e-6 < 10.0) {
    throw std::invalid_argument("sample rate too low: need at least 10 samples per edge time");
  }

  TimeTrace trace;
  trace.sample_rate_hz = sample_rate_hz;
  trace.baseline_v = params.baseline_v;
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
  trace.samples.resize(n);

  std::vector<double> caps = events.captures_us;
  std::sort(caps.begin(), caps.end());
  const auto& rels = events.releases_us;

  const double ln9 = std::log(9.0);
  const double tau_fall = params.fall_time_us / ln9;
  const double tau_rise = params.rise_time_us / ln9;
  const double dt = 1e6 / sample_rate_hz;
  const double fall_decay = std::exp(-dt / tau_fall);
  const double rise_decay = std::exp(-dt / tau_rise);

  RandomStream noise = RandomStream::substream(seed, kNoiseStream);
  const double step = params.step_amplitude_v;

  // Level = -step * (captures so far - releases so far) plus the unfinished
  // part of every exponential edge, tracked as decaying sums.
  std::size_t ic = 0, ir = 0;
  double fall_tail = 0.0, rise_tail = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    fall_tail *= fall_decay;
    rise_tail *= rise_decay;
    for (; ic < caps.size() && caps[ic] <= t; ++ic) fall_tail += std::exp(-(t - caps[ic]) / tau_fall);
    for (; ir < rels.size() && rels[ir] <= t; ++ir) rise_tail += std::exp(-(t - rels[ir]) / tau_rise);
    if (fall_tail < 1e-30) fall_tail = 0.0;
    if (rise_tail < 1e-30) rise_tail = 0.0;
    const double occupancy = static_cast<double>(ic) - static_cast<double>(ir);
    double v = params.baseline_v - step * (occupancy - fall_tail + rise_tail);
    if (params.noise_sigma_v > 0.0) v += params.noise_sigma_v * noise.normal();
    trace.samples[i] = v;
  }
  return trace;
}

}  // namespace spd::detsim
