#include "spd/tmm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace spd::tmm {

namespace {

// Optical admittance in free-space units, N = n - ik.
cplx admittance(const MaterialDispersion& m, double wavelength_nm, Axis axis) {
  const cplx nk = m.index_at(wavelength_nm, axis);
  return {nk.real(), -nk.imag()};
}

double set_thickness(LayerStack& stack, std::size_t index, double value) {
  stack.layers[index].thickness_nm = value;
  return value;
}

}  // namespace

std::size_t LayerStack::index_of(const std::string& label) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].label == label) return i;
  }
  throw std::out_of_range("stack has no layer labelled '" + label + "'");
}

void LayerStack::validate() const {
  if (!incident || !exit) throw std::invalid_argument("stack needs incident and exit media");
  if (layers.empty()) throw std::invalid_argument("stack needs at least one layer");
  for (const auto& layer : layers) {
    if (!layer.material) throw std::invalid_argument("layer '" + layer.label + "' has no material");
    if (!(layer.thickness_nm >= 0.0) || !std::isfinite(layer.thickness_nm)) {
      throw std::invalid_argument("layer '" + layer.label + "' has invalid thickness");
    }
  }
}

LayerStack device_stack(const MaterialLibrary& lib, double top_hbn_nm, double bottom_hbn_nm) {
  LayerStack s;
  s.incident = lib.get("air");
  s.exit = lib.get("si");
  s.layers = {
      {"top_hbn", lib.get("hbn"), top_hbn_nm},
      {"bp", lib.get("bp"), 25.0},
      {"mos2", lib.get("mos2"), 5.0},
      {"wse2", lib.get("wse2"), 5.0},
      {"bottom_hbn", lib.get("hbn"), bottom_hbn_nm},
      {"au", lib.get("au"), 40.0},
      {"ti", lib.get("ti"), 30.0},
      {"sio2", lib.get("sio2"), 285.0},
  };
  return s;
}

double OpticalResponse::total_absorptance() const {
  return std::accumulate(absorptance.begin(), absorptance.end(), 0.0);
}

Matrix2 characteristic_matrix(const Layer& layer, double wavelength_nm, Axis axis) {
  if (layer.thickness_nm == 0.0) return Matrix2::identity();
  const cplx eta = admittance(*layer.material, wavelength_nm, axis);
  const cplx delta = 2.0 * std::numbers::pi * eta * layer.thickness_nm / wavelength_nm;
  const cplx i{0.0, 1.0};
  const cplx c = std::cos(delta);
  const cplx s = std::sin(delta);
  return {c, i * s / eta, i * eta * s, c};
}

OpticalResponse stack_response(const LayerStack& stack, double wavelength_nm, Axis axis) {
  stack.validate();
  if (axis == Axis::unpolarized) {
    throw std::invalid_argument("stack_response needs a single axis; use response()");
  }
  const cplx n0 = stack.incident->index_at(wavelength_nm, axis);
  if (n0.imag() != 0.0) throw std::invalid_argument("incident medium must be lossless");
  const double eta0 = n0.real();
  const cplx eta_exit = admittance(*stack.exit, wavelength_nm, axis);

  // Tangential (E, H) walked from the exit boundary upward, normalised to
  // E = 1 at the exit. log_scale tracks rescaling so thick absorbers cannot overflow.
  const std::size_t count = stack.layers.size();
  std::vector<double> flux(count + 1);
  std::vector<double> log_scale(count + 1, 0.0);
  cplx e{1.0, 0.0};
  cplx h = eta_exit;
  double scale = 0.0;
  flux[count] = (e * std::conj(h)).real();
  for (std::size_t j = count; j-- > 0;) {
    // cos and sin of the phase grow as exp|Im d|; slice thick absorbers so
    // each slice stays far from overflow.
    Layer slice = stack.layers[j];
    const double growth = 2.0 * std::numbers::pi * std::abs(slice.material->index_at(wavelength_nm, axis).imag()) *
                          slice.thickness_nm / wavelength_nm;
    const auto slices = static_cast<std::size_t>(std::max(1.0, std::ceil(growth / 100.0)));
    slice.thickness_nm /= static_cast<double>(slices);
    const Matrix2 m = characteristic_matrix(slice, wavelength_nm, axis);
    for (std::size_t k = 0; k < slices; ++k) {
      const cplx e_top = m.m11 * e + m.m12 * h;
      const cplx h_top = m.m21 * e + m.m22 * h;
      e = e_top;
      h = h_top;
      const double mag = std::abs(e) + std::abs(h);
      if (mag > 1e100) {
        e /= mag;
        h /= mag;
        scale += std::log(mag);
      }
    }
    flux[j] = (e * std::conj(h)).real();
    log_scale[j] = scale;
  }

  const cplx sum = eta0 * e + h;
  const double denom = std::norm(sum);
  const auto true_ratio = [&](std::size_t j) {
    return flux[j] * std::exp(2.0 * (log_scale[j] - scale));
  };

  OpticalResponse r;
  r.reflectance = std::norm((eta0 * e - h) / sum);
  r.transmittance = 4.0 * eta0 * true_ratio(count) / denom;
  r.absorptance.resize(count);
  for (std::size_t j = 0; j < count; ++j) {
    r.absorptance[j] = 4.0 * eta0 * (true_ratio(j) - true_ratio(j + 1)) / denom;
  }
  return r;
}

OpticalResponse unpolarized_absorption(const LayerStack& stack, double wavelength_nm) {
  const auto ac = stack_response(stack, wavelength_nm, Axis::armchair);
  const auto zz = stack_response(stack, wavelength_nm, Axis::zigzag);
  OpticalResponse r;
  r.reflectance = 0.5 * (ac.reflectance + zz.reflectance);
  r.transmittance = 0.5 * (ac.transmittance + zz.transmittance);
  r.absorptance.resize(ac.absorptance.size());
  for (std::size_t j = 0; j < r.absorptance.size(); ++j) {
    r.absorptance[j] = 0.5 * (ac.absorptance[j] + zz.absorptance[j]);
  }
  return r;
}

OpticalResponse response(const LayerStack& stack, double wavelength_nm, Axis axis) {
  if (axis == Axis::unpolarized) return unpolarized_absorption(stack, wavelength_nm);
  return stack_response(stack, wavelength_nm, axis);
}

std::vector<double> thickness_grid(double lo, double hi, double step) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || lo < 0.0 || hi < lo) {
    throw std::invalid_argument("thickness bounds must be finite with 0 <= lo <= hi");
  }
  if (lo == hi) return {lo};
  if (!(step > 0.0)) throw std::invalid_argument("grid step must be positive");
  std::vector<double> grid;
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) grid.push_back(lo + static_cast<double>(i) * step);
  if (hi - grid.back() > 1e-9 * step) grid.push_back(hi);
  grid.back() = std::min(grid.back(), hi);
  return grid;
}

AbsorptionMap absorption_map(const LayerStack& stack_template, std::span<const double> top_nm,
                             std::span<const double> bottom_nm, double wavelength_nm, Axis axis,
                             const SweepLayers& layers) {
  const auto check = [](std::span<const double> g, const char* what) {
    if (g.empty()) throw std::invalid_argument(std::string(what) + " grid is empty");
    for (std::size_t i = 1; i < g.size(); ++i) {
      if (!(g[i] > g[i - 1])) {
        throw std::invalid_argument(std::string(what) + " grid not strictly increasing");
      }
    }
  };
  check(top_nm, "top");
  check(bottom_nm, "bottom");

  LayerStack stack = stack_template;
  const auto it = stack.index_of(layers.top);
  const auto ib = stack.index_of(layers.bottom);
  const auto ia = stack.index_of(layers.absorber);

  AbsorptionMap map;
  map.top_nm.assign(top_nm.begin(), top_nm.end());
  map.bottom_nm.assign(bottom_nm.begin(), bottom_nm.end());
  map.values.resize(top_nm.size() * bottom_nm.size());
  for (std::size_t i = 0; i < top_nm.size(); ++i) {
    set_thickness(stack, it, top_nm[i]);
    for (std::size_t j = 0; j < bottom_nm.size(); ++j) {
      set_thickness(stack, ib, bottom_nm[j]);
      map.values[i * bottom_nm.size() + j] = response(stack, wavelength_nm, axis).absorptance[ia];
    }
  }
  return map;
}

Optimum optimize_thicknesses(const LayerStack& stack_template, Bounds top, Bounds bottom,
                             double wavelength_nm, Axis axis, const OptimizeOptions& options,
                             const SweepLayers& layers) {
  const auto top_grid = thickness_grid(top.lo, top.hi, options.grid_step_nm);
  const auto bottom_grid = thickness_grid(bottom.lo, bottom.hi, options.grid_step_nm);
  const auto map = absorption_map(stack_template, top_grid, bottom_grid, wavelength_nm, axis, layers);

  Optimum best;
  std::size_t best_index = 0;
  for (std::size_t k = 0; k < map.values.size(); ++k) {
    if (map.values[k] > map.values[best_index]) best_index = k;
  }
  best.top_nm = top_grid[best_index / bottom_grid.size()];
  best.bottom_nm = bottom_grid[best_index % bottom_grid.size()];
  best.absorptance = map.values[best_index];
  best.grid_best = best.absorptance;

  LayerStack stack = stack_template;
  const auto it = stack.index_of(layers.top);
  const auto ib = stack.index_of(layers.bottom);
  const auto ia = stack.index_of(layers.absorber);
  set_thickness(stack, it, best.top_nm);
  set_thickness(stack, ib, best.bottom_nm);

  const auto evaluate = [&](std::size_t index, double value) {
    set_thickness(stack, index, value);
    return response(stack, wavelength_nm, axis).absorptance[ia];
  };

  // Golden-section maximisation of one coordinate within one grid step of the
  // incumbent; returns the improved point or leaves the incumbent unchanged.
  const auto refine = [&](std::size_t index, double& coord, Bounds b) {
    double a = std::max(b.lo, coord - options.grid_step_nm);
    double c = std::min(b.hi, coord + options.grid_step_nm);
    if (!(c > a)) return false;
    constexpr double inv_phi = 0.6180339887498949;
    double x1 = c - inv_phi * (c - a);
    double x2 = a + inv_phi * (c - a);
    double f1 = evaluate(index, x1);
    double f2 = evaluate(index, x2);
    while (c - a > options.tolerance_nm) {
      if (f1 < f2) {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + inv_phi * (c - a);
        f2 = evaluate(index, x2);
      } else {
        c = x2;
        x2 = x1;
        f2 = f1;
        x1 = c - inv_phi * (c - a);
        f1 = evaluate(index, x1);
      }
    }
    const double x = f1 > f2 ? x1 : x2;
    const double fx = std::max(f1, f2);
    if (fx > best.absorptance) {
      coord = x;
      best.absorptance = fx;
      set_thickness(stack, index, x);
      return true;
    }
    set_thickness(stack, index, coord);
    return false;
  };

  for (int pass = 0; pass < options.max_passes; ++pass) {
    const double before = best.absorptance;
    refine(it, best.top_nm, top);
    refine(ib, best.bottom_nm, bottom);
    if (best.absorptance - before < 1e-12) break;
  }
  return best;
}

}  // namespace spd::tmm
