#include "spd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <boost/math/special_functions/gamma.hpp>

namespace spd::analysis {

namespace {

double block_mode(std::span<const double> block, double bin) {
  const auto [lo_it, hi_it] = std::minmax_element(block.begin(), block.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (hi == lo) return lo;
  constexpr double kMaxBins = 1e6;
  if ((hi - lo) / bin > kMaxBins) bin = (hi - lo) / kMaxBins;
  const auto nbins = static_cast<std::size_t>(std::floor((hi - lo) / bin)) + 1;
  std::vector<std::size_t> counts(nbins, 0);
  const auto bin_of = [&](double v) {
    return std::min(nbins - 1, static_cast<std::size_t>((v - lo) / bin));
  };
  for (double v : block) ++counts[bin_of(v)];
  const auto mode_bin = static_cast<std::size_t>(
      std::max_element(counts.begin(), counts.end()) - counts.begin());
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : block) {
    const auto b = bin_of(v);
    if (b + 1 >= mode_bin && b <= mode_bin + 1) {
      sum += v;
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

// Centred moving average; the window shrinks at the ends.
std::vector<double> smooth(std::span<const double> x, int width) {
  if (width <= 1) return {x.begin(), x.end()};
  const auto half = static_cast<std::ptrdiff_t>(width / 2);
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  std::vector<double> prefix(x.size() + 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> out(x.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto a = std::max<std::ptrdiff_t>(0, i - half);
    const auto b = std::min<std::ptrdiff_t>(n, i - half + width);
    out[static_cast<std::size_t>(i)] = (prefix[static_cast<std::size_t>(b)] - prefix[static_cast<std::size_t>(a)]) /
                                       static_cast<double>(b - a);
  }
  return out;
}

std::size_t index_at(const TimeTrace& t, double time_us) {
  const double idx = std::floor(time_us / t.dt_us());
  if (idx <= 0.0) return 0;
  return std::min(t.samples.size() - 1, static_cast<std::size_t>(idx));
}

double mean_over(std::span<const double> x, std::size_t a, std::size_t b) {
  if (b <= a) throw std::runtime_error("empty averaging window");
  double s = 0.0;
  for (std::size_t i = a; i < b; ++i) s += x[i];
  return s / static_cast<double>(b - a);
}

// Time (us) at which `y` first reaches `level` going in direction `sign`
// (+1 upward, -1 downward) at or after index `from`, interpolated linearly.
double first_crossing(std::span<const double> y, std::size_t from, std::size_t to, double level,
                      int sign, double dt_us) {
  for (std::size_t i = std::max<std::size_t>(from, 1); i < to; ++i) {
    if (sign * (y[i] - level) >= 0.0) {
      const double prev = y[i - 1];
      if (sign * (prev - level) >= 0.0) return static_cast<double>(i - 1) * dt_us;
      const double frac = (level - prev) / (y[i] - prev);
      return (static_cast<double>(i - 1) + frac) * dt_us;
    }
  }
  throw std::runtime_error("edge crossing not found");
}

struct Plateau {
  std::size_t index;
  double level;
};

Plateau deepest(std::span<const double> raw, std::span<const double> smoothed, std::size_t a,
                std::size_t b, int smooth_width) {
  if (b <= a) throw std::runtime_error("event window is empty");
  std::size_t best = a;
  for (std::size_t i = a; i < b; ++i) {
    if (smoothed[i] < smoothed[best]) best = i;
  }
  const std::size_t half = static_cast<std::size_t>(std::max(smooth_width, 5));
  const std::size_t lo = best > a + half ? best - half : a;
  const std::size_t hi = std::min(b, best + half + 1);
  return {best, mean_over(raw, lo, hi)};
}

}  // namespace

void DetectionSettings::validate() const {
  if (!(hysteresis_v > 0.0) || !(threshold_v > hysteresis_v)) {
    throw std::invalid_argument("need threshold > hysteresis > 0");
  }
  if (!(min_width_us >= 0.0)) throw std::invalid_argument("min_width must be >= 0");
  if (!(baseline_window_us > 0.0)) throw std::invalid_argument("baseline window must be positive");
  if (mode_bin_v < 0.0) throw std::invalid_argument("mode bin must be >= 0");
}

std::vector<double> rolling_baseline(const TimeTrace& trace, const DetectionSettings& settings) {
  settings.validate();
  const std::size_t n = trace.samples.size();
  const auto window = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(settings.baseline_window_us / trace.dt_us())));
  if (n == 0 || n < window) throw std::invalid_argument("trace shorter than one baseline window");
  const double bin = settings.mode_bin_v > 0.0 ? settings.mode_bin_v : settings.hysteresis_v / 4.0;

  const std::size_t blocks = n / window;
  std::vector<double> centers, modes;
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t start = b * window;
    const std::size_t end = b + 1 == blocks ? n : start + window;
    std::span<const double> block(trace.samples.data() + start, end - start);
    centers.push_back(0.5 * static_cast<double>(start + end - 1));
    modes.push_back(block_mode(block, bin));
  }

  std::vector<double> baseline(n);
  std::size_t b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i);
    if (blocks == 1 || x <= centers.front()) {
      baseline[i] = modes.front();
    } else if (x >= centers.back()) {
      baseline[i] = modes.back();
    } else {
      while (centers[b + 1] < x) ++b;
      const double w = (x - centers[b]) / (centers[b + 1] - centers[b]);
      baseline[i] = modes[b] + w * (modes[b + 1] - modes[b]);
    }
  }
  return baseline;
}

EventRecord detect_events(const TimeTrace& trace, const DetectionSettings& settings) {
  settings.validate();
  if (trace.samples.empty()) throw std::invalid_argument("empty trace");
  const auto [lo, hi] = std::minmax_element(trace.samples.begin(), trace.samples.end());
  if (*lo == *hi) throw std::invalid_argument("degenerate trace: no variation");
  const auto baseline = rolling_baseline(trace, settings);

  const double dt = trace.dt_us();
  const double release_level = settings.threshold_v - settings.hysteresis_v;
  const auto depth = [&](std::size_t i) { return baseline[i] - trace.samples[i]; };
  const auto crossing = [&](std::size_t i, double level) {
    if (i == 0) return 0.0;
    const double d0 = depth(i - 1);
    const double d1 = depth(i);
    const double frac = d1 == d0 ? 0.0 : (level - d0) / (d1 - d0);
    return (static_cast<double>(i - 1) + std::clamp(frac, 0.0, 1.0)) * dt;
  };

  EventRecord rec;
  bool open = false;
  double start = 0.0;
  for (std::size_t i = 0; i < trace.samples.size(); ++i) {
    const double d = depth(i);
    if (!open && d >= settings.threshold_v) {
      open = true;
      start = crossing(i, settings.threshold_v);
    } else if (open && d < release_level) {
      open = false;
      const double end = crossing(i, release_level);
      if (end - start >= settings.min_width_us) {
        rec.captures_us.push_back(start);
        rec.origins.push_back(detsim::Origin::dark);
        rec.releases_us.push_back(end);
        rec.release_of.push_back(rec.captures_us.size() - 1);
      }
    }
  }
  if (open && trace.duration_s() * 1e6 - start >= settings.min_width_us) {
    rec.captures_us.push_back(start);
    rec.origins.push_back(detsim::Origin::dark);
  }
  return rec;
}

OccupationHistogram occupation_histogram(const TimeTrace& trace, double bin_width_v,
                                         double prominence_fraction) {
  if (!(bin_width_v > 0.0)) throw std::invalid_argument("bin width must be positive");
  if (trace.samples.empty()) throw std::invalid_argument("empty trace");
  const auto [lo_it, hi_it] = std::minmax_element(trace.samples.begin(), trace.samples.end());
  OccupationHistogram h;
  h.bin_width_v = bin_width_v;
  h.origin_v = std::floor(*lo_it / bin_width_v) * bin_width_v;
  const double span_bins = std::floor((*hi_it - h.origin_v) / bin_width_v) + 1.0;
  if (span_bins > 1e7) throw std::invalid_argument("bin width too small for the trace range");
  const auto nbins = static_cast<std::size_t>(span_bins);
  h.counts.assign(nbins, 0);
  for (double v : trace.samples) {
    const auto b = static_cast<std::size_t>(std::floor((v - h.origin_v) / bin_width_v));
    ++h.counts[std::min(b, nbins - 1)];
  }

  const auto count_at = [&](std::ptrdiff_t i) -> double {
    if (i < 0 || i >= static_cast<std::ptrdiff_t>(nbins)) return 0.0;
    return static_cast<double>(h.counts[static_cast<std::size_t>(i)]);
  };
  const double tallest = static_cast<double>(*std::max_element(h.counts.begin(), h.counts.end()));
  const auto n = static_cast<std::ptrdiff_t>(nbins);

  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double c = count_at(i);
    if (!(c > count_at(i - 1))) continue;
    // Plateau of equal counts: treat it as one peak at its middle.
    std::ptrdiff_t j = i;
    while (j + 1 < n && count_at(j + 1) == c) ++j;
    if (!(c > count_at(j + 1))) {
      i = j;
      continue;
    }
    double left_min = c;
    for (std::ptrdiff_t k = i - 1; k >= -1; --k) {
      left_min = std::min(left_min, count_at(k));
      if (count_at(k) > c) break;
    }
    double right_min = c;
    for (std::ptrdiff_t k = j + 1; k <= n; ++k) {
      right_min = std::min(right_min, count_at(k));
      if (count_at(k) > c) break;
    }
    const double prominence = c - std::max(left_min, right_min);
    if (prominence >= prominence_fraction * tallest) {
      double wsum = 0.0, vsum = 0.0;
      for (std::ptrdiff_t k = i - 1; k <= j + 1; ++k) {
        if (k < 0 || k >= n) continue;
        wsum += count_at(k);
        vsum += count_at(k) * h.bin_center(static_cast<std::size_t>(k));
      }
      h.peak_levels_v.push_back(vsum / wsum);
    }
    i = j;
  }
  std::sort(h.peak_levels_v.begin(), h.peak_levels_v.end(), std::greater<>());
  return h;
}

RateEstimate count_rate(std::size_t count, double duration_s) {
  if (!(duration_s > 0.0)) throw std::invalid_argument("duration must be positive");
  RateEstimate r;
  r.count = count;
  const double n = static_cast<double>(count);
  r.rate_hz = n / duration_s;
  r.sigma_hz = std::sqrt(n) / duration_s;
  r.upper_95_hz = count == 0 ? std::log(20.0) / duration_s : r.rate_hz + 1.6448536269514722 * r.sigma_hz;
  return r;
}

RateEstimate count_rate(const EventRecord& events, double duration_s) {
  return count_rate(events.capture_count(), duration_s);
}

WindowedRates windowed_rates(const EventRecord& events, double duration_s, double window_s) {
  if (!(duration_s > 0.0) || !(window_s > 0.0)) {
    throw std::invalid_argument("duration and window must be positive");
  }
  WindowedRates w;
  w.window_s = window_s;
  const auto windows = static_cast<std::size_t>(std::floor(duration_s / window_s + 1e-9));
  if (windows < 2) throw std::invalid_argument("need at least two windows");
  w.counts.assign(windows, 0);
  for (double t : events.captures_us) {
    const auto k = static_cast<std::size_t>(std::floor(t * 1e-6 / window_s));
    if (k < windows) ++w.counts[k];
  }
  double total = 0.0;
  for (auto c : w.counts) total += static_cast<double>(c);
  const double mean = total / static_cast<double>(windows);
  w.dof = static_cast<double>(windows - 1);
  if (mean == 0.0) return w;
  for (auto c : w.counts) {
    const double d = static_cast<double>(c) - mean;
    w.chi_square += d * d / mean;
  }
  w.p_value = boost::math::gamma_q(0.5 * w.dof, 0.5 * w.chi_square);
  return w;
}

CountingResult estimate_eqe(long long counts_light, long long counts_dark, double mean_photons,
                            double rep_rate_hz, double duration_s, double calibration_uncertainty) {
  if (!(duration_s > 0.0)) throw std::invalid_argument("duration must be positive");
  if (!(mean_photons > 0.0) || !(rep_rate_hz > 0.0)) {
    throw std::invalid_argument("photon flux must be positive");
  }
  if (counts_light < 0 || counts_dark < 0) throw std::invalid_argument("counts must be >= 0");
  CountingResult r;
  r.counts_light = counts_light;
  r.counts_dark = counts_dark;
  r.duration_s = duration_s;
  r.photon_flux_hz = mean_photons * rep_rate_hz;
  const double photons = r.photon_flux_hz * duration_s;
  r.eqe = static_cast<double>(counts_light - counts_dark) / photons;
  r.eqe_poisson_sigma = std::sqrt(static_cast<double>(counts_light + counts_dark)) / photons;
  r.eqe_sigma = std::hypot(r.eqe_poisson_sigma, calibration_uncertainty * std::abs(r.eqe));
  r.negative = counts_light < counts_dark;
  return r;
}

FitResult eqe_from_frequency_sweep(std::span<const SweepPoint> points, double mean_photons,
                                   double duration_s) {
  if (!(mean_photons > 0.0) || !(duration_s > 0.0)) {
    throw std::invalid_argument("mean photon number and duration must be positive");
  }
  std::set<double> distinct;
  for (const auto& p : points) distinct.insert(p.rep_rate_hz);
  if (distinct.size() < 2) throw std::invalid_argument("rank-deficient design: all rates equal");
  if (distinct.size() < 3) throw std::invalid_argument("need at least 3 distinct repetition rates");

  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += p.rep_rate_hz;
    my += p.counts;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& p : points) {
    sxx += (p.rep_rate_hz - mx) * (p.rep_rate_hz - mx);
    sxy += (p.rep_rate_hz - mx) * (p.counts - my);
  }
  FitResult fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0.0;
  for (const auto& p : points) {
    const double r = p.counts - (fit.slope * p.rep_rate_hz + fit.intercept);
    fit.residuals.push_back(r);
    ssr += r * r;
  }
  const double s2 = points.size() > 2 ? ssr / (n - 2.0) : 0.0;
  fit.slope_sigma = std::sqrt(s2 / sxx);
  fit.intercept_sigma = std::sqrt(s2 * (1.0 / n + mx * mx / sxx));
  fit.eqe_from_slope = fit.slope / (mean_photons * duration_s);
  fit.eqe_sigma = fit.slope_sigma / (mean_photons * duration_s);
  return fit;
}

namespace {

struct EdgeContext {
  std::span<const double> raw;
  std::vector<double> smoothed;
  double dt;
  double end_us;
};

EdgeContext edge_context(const TimeTrace& trace, const EdgeOptions& options) {
  if (trace.samples.empty()) throw std::invalid_argument("empty trace");
  return {trace.samples, smooth(trace.samples, options.smooth_samples), trace.dt_us(),
          static_cast<double>(trace.samples.size()) * trace.dt_us()};
}

void check_resolved(double edge_us, double dt, const EdgeOptions& options) {
  if (options.require_resolved && edge_us < 2.0 * dt) {
    throw std::runtime_error("edge not resolved at current sample rate");
  }
}

double measure_fall(const TimeTrace& trace, const EdgeContext& c, double capture_us,
                    double plateau_end_us, const EdgeOptions& options, double* depth) {
  if (capture_us - options.guard_us - options.pre_window_us < 0.0 || plateau_end_us > c.end_us ||
      !(plateau_end_us > capture_us)) {
    throw std::invalid_argument("capture edge not fully inside the trace");
  }
  const std::size_t pre_b = index_at(trace, capture_us - options.guard_us);
  const std::size_t pre_a = index_at(trace, capture_us - options.guard_us - options.pre_window_us);
  const double before = mean_over(c.raw, pre_a, std::max(pre_b, pre_a + 1));
  const auto bottom = deepest(c.raw, c.smoothed, index_at(trace, capture_us),
                              std::min(c.raw.size(), index_at(trace, plateau_end_us) + 1),
                              options.smooth_samples);
  const double d = before - bottom.level;
  if (!(d > 0.0)) throw std::runtime_error("event has no depth");
  if (depth != nullptr) *depth = d;
  const double t10 = first_crossing(c.smoothed, pre_b, bottom.index + 1, before - 0.1 * d, -1, c.dt);
  const double t90 = first_crossing(c.smoothed, static_cast<std::size_t>(t10 / c.dt), bottom.index + 1,
                                    before - 0.9 * d, -1, c.dt);
  return t90 - t10;
}

double measure_rise(const TimeTrace& trace, const EdgeContext& c, double release_us,
                    double plateau_start_us, const EdgeOptions& options) {
  const double post_a_us = release_us + options.post_guard_us;
  const double post_b_us = post_a_us + options.pre_window_us;
  if (post_b_us > c.end_us || plateau_start_us < 0.0 || !(release_us > plateau_start_us)) {
    throw std::invalid_argument("release edge not fully inside the trace");
  }
  const std::size_t post_a = index_at(trace, post_a_us);
  const double after = mean_over(c.raw, post_a, std::max(index_at(trace, post_b_us), post_a + 1));
  const auto bottom = deepest(c.raw, c.smoothed, index_at(trace, plateau_start_us),
                              index_at(trace, release_us) + 1, options.smooth_samples);
  const double d = after - bottom.level;
  if (!(d > 0.0)) throw std::runtime_error("event has no depth");
  const std::size_t stop = std::min(c.raw.size(), post_a + 1);
  const double t10 = first_crossing(c.smoothed, bottom.index, stop, bottom.level + 0.1 * d, +1, c.dt);
  const double t90 = first_crossing(c.smoothed, static_cast<std::size_t>(t10 / c.dt), stop,
                                    bottom.level + 0.9 * d, +1, c.dt);
  return t90 - t10;
}

}  // namespace

double fall_time(const TimeTrace& trace, double capture_us, double plateau_end_us,
                 const EdgeOptions& options) {
  const auto c = edge_context(trace, options);
  const double t = measure_fall(trace, c, capture_us, plateau_end_us, options, nullptr);
  check_resolved(t, c.dt, options);
  return t;
}

double rise_time(const TimeTrace& trace, double release_us, double plateau_start_us,
                 const EdgeOptions& options) {
  const auto c = edge_context(trace, options);
  const double t = measure_rise(trace, c, release_us, plateau_start_us, options);
  check_resolved(t, c.dt, options);
  return t;
}

EdgeTimes edge_times(const TimeTrace& trace, double capture_us, double release_us,
                     const EdgeOptions& options) {
  if (!(capture_us < release_us)) throw std::invalid_argument("capture must precede release");
  const auto c = edge_context(trace, options);
  EdgeTimes e;
  e.fall_us = measure_fall(trace, c, capture_us, release_us, options, &e.depth_v);
  e.rise_us = measure_rise(trace, c, release_us, capture_us, options);
  check_resolved(e.fall_us, c.dt, options);
  check_resolved(e.rise_us, c.dt, options);
  return e;
}

TimeTrace average_event_shape(const TimeTrace& trace, const EventRecord& events, Align align,
                              double pre_us, double post_us) {
  const double dt = trace.dt_us();
  const auto pre = static_cast<std::ptrdiff_t>(std::llround(pre_us / dt));
  const auto post = static_cast<std::ptrdiff_t>(std::llround(post_us / dt));
  const auto width = static_cast<std::size_t>(pre + post);
  const auto& marks = align == Align::capture ? events.captures_us : events.releases_us;

  TimeTrace avg;
  avg.sample_rate_hz = trace.sample_rate_hz;
  avg.baseline_v = trace.baseline_v;
  avg.samples.assign(width, 0.0);
  std::size_t used = 0;
  const auto n = static_cast<std::ptrdiff_t>(trace.samples.size());
  for (double mark : marks) {
    const auto center = static_cast<std::ptrdiff_t>(std::llround(mark / dt));
    if (center - pre < 0 || center + post > n) continue;
    for (std::size_t k = 0; k < width; ++k) {
      avg.samples[k] += trace.samples[static_cast<std::size_t>(center - pre) + k];
    }
    ++used;
  }
  if (used == 0) throw std::runtime_error("no event fits the averaging window");
  for (auto& v : avg.samples) v /= static_cast<double>(used);
  return avg;
}

}  // namespace spd::analysis
