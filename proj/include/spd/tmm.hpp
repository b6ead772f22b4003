#pragma once

#include <array>
#include <complex>
#include <span>
#include <string>
#include <vector>

#include "spd/materials.hpp"

namespace spd::tmm {

using cplx = std::complex<double>;

/// 2x2 complex matrix, row-major.
struct Matrix2 {
  cplx m11{1.0}, m12{0.0}, m21{0.0}, m22{1.0};

  static Matrix2 identity() { return {}; }
  cplx det() const { return m11 * m22 - m12 * m21; }
  friend Matrix2 operator*(const Matrix2& a, const Matrix2& b) {
    return {a.m11 * b.m11 + a.m12 * b.m21, a.m11 * b.m12 + a.m12 * b.m22,
            a.m21 * b.m11 + a.m22 * b.m21, a.m21 * b.m12 + a.m22 * b.m22};
  }
};

struct Layer {
  std::string label;
  MaterialPtr material;
  double thickness_nm = 0.0;
};

/// Planar stack, top to bottom, between a lossless incident half-space and a
/// semi-infinite exit medium.
struct LayerStack {
  MaterialPtr incident;
  std::vector<Layer> layers;
  MaterialPtr exit;

  /// Index of the first layer labelled `label`; throws if absent.
  std::size_t index_of(const std::string& label) const;
  void validate() const;
};

/// Default device cross-section: air / top hBN / BP(25) / MoS2(5) / WSe2(5) /
/// bottom hBN / Au(40) / Ti(30) / SiO2(285) / Si.
LayerStack device_stack(const MaterialLibrary& lib, double top_hbn_nm, double bottom_hbn_nm);

struct OpticalResponse {
  double reflectance = 0.0;
  double transmittance = 0.0;
  std::vector<double> absorptance;  ///< one entry per layer, same order

  double total_absorptance() const;
  /// R + T + sum(A); unity for a passive stack.
  double energy_sum() const { return reflectance + transmittance + total_absorptance(); }
};

/// Characteristic matrix of one layer at normal incidence:
///   [[cos d, i sin d / eta], [i eta sin d, cos d]],  d = 2 pi N t / lambda,
/// with N = n - ik and the admittance eta = N in free-space units.
Matrix2 characteristic_matrix(const Layer& layer, double wavelength_nm, Axis axis);

/// Reflectance, transmittance and per-layer absorptance. Per-layer values are
/// the drop in net power flux across each layer. `axis` must be armchair or
/// zigzag when the stack contains anisotropic materials.
OpticalResponse stack_response(const LayerStack& stack, double wavelength_nm, Axis axis);

/// Component-wise mean of the armchair and zigzag responses.
OpticalResponse unpolarized_absorption(const LayerStack& stack, double wavelength_nm);

/// stack_response for `Axis::unpolarized`, dispatching to the mean.
OpticalResponse response(const LayerStack& stack, double wavelength_nm, Axis axis);

/// Which layers a thickness sweep varies and which layer's absorptance it reports.
struct SweepLayers {
  std::string top = "top_hbn";
  std::string bottom = "bottom_hbn";
  std::string absorber = "bp";
};

struct AbsorptionMap {
  std::vector<double> top_nm;
  std::vector<double> bottom_nm;
  std::vector<double> values;  ///< row-major, rows follow top_nm

  double at(std::size_t i_top, std::size_t j_bottom) const {
    return values[i_top * bottom_nm.size() + j_bottom];
  }
};

/// Inclusive grid lo, lo+step, ..., with hi always included as the last node.
std::vector<double> thickness_grid(double lo, double hi, double step);

AbsorptionMap absorption_map(const LayerStack& stack_template, std::span<const double> top_nm,
                             std::span<const double> bottom_nm, double wavelength_nm, Axis axis,
                             const SweepLayers& layers = {});

struct Bounds {
  double lo = 0.0;
  double hi = 0.0;
};

struct OptimizeOptions {
  double grid_step_nm = 2.0;
  double tolerance_nm = 1e-3;
  int max_passes = 8;
};

struct Optimum {
  double top_nm = 0.0;
  double bottom_nm = 0.0;
  double absorptance = 0.0;
  double grid_best = 0.0;  ///< best value on the coarse grid before refinement
};

/// Coarse grid search followed by alternating golden-section refinement on
/// each coordinate around the best cell. Never returns less than the grid best.
Optimum optimize_thicknesses(const LayerStack& stack_template, Bounds top, Bounds bottom,
                             double wavelength_nm, Axis axis, const OptimizeOptions& options = {},
                             const SweepLayers& layers = {});

}  // namespace spd::tmm
