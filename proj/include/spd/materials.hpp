#pragma once

#include <complex>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace spd {

/// In-plane axis of the absorber that a response refers to. `unpolarized`
/// responses are the arithmetic mean of the armchair and zigzag responses.
enum class Axis { armchair, zigzag, unpolarized };

const char* to_string(Axis axis);
Axis axis_from_string(const std::string& name);

struct NkSample {
  double wavelength_nm;
  double n;
  double k;
};

/// Raised for malformed dispersion files. `row()` is the 1-based line number.
class DispersionError : public std::runtime_error {
 public:
  DispersionError(const std::string& what, std::size_t row)
      : std::runtime_error(what + " (line " + std::to_string(row) + ")"), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

/// Tabulated complex refractive index n + ik versus vacuum wavelength.
///
/// Isotropic tables hold one axis; anisotropic ones hold armchair and zigzag
/// samples on a shared wavelength grid. Values between nodes are linearly
/// interpolated in n and k separately. Queries outside the tabulated range
/// throw rather than extrapolate.
class MaterialDispersion {
 public:
  MaterialDispersion(std::string name, std::vector<NkSample> samples,
                     std::vector<std::string> header = {});
  MaterialDispersion(std::string name, std::vector<NkSample> armchair,
                     std::vector<NkSample> zigzag, std::vector<std::string> header = {});

  /// Wavelength-independent medium, valid over (0, 1e9] nm.
  static MaterialDispersion uniform(std::string name, double n, double k = 0.0);

  const std::string& name() const { return name_; }
  bool anisotropic() const { return zigzag_.has_value(); }
  const std::vector<NkSample>& samples(Axis axis = Axis::armchair) const;
  const std::vector<std::string>& header() const { return header_; }
  double min_wavelength() const { return primary_.front().wavelength_nm; }
  double max_wavelength() const { return primary_.back().wavelength_nm; }

  /// n + ik at `wavelength_nm`. Anisotropic materials need an explicit axis;
  /// isotropic ones resolve every axis to their single table.
  std::complex<double> index_at(double wavelength_nm, Axis axis = Axis::armchair) const;

 private:
  std::string name_;
  std::vector<NkSample> primary_;
  std::optional<std::vector<NkSample>> zigzag_;
  std::vector<std::string> header_;
};

using MaterialPtr = std::shared_ptr<const MaterialDispersion>;

MaterialDispersion parse_dispersion(std::istream& in, const std::string& name);
MaterialDispersion load_dispersion(const std::filesystem::path& path);
void save_dispersion(const MaterialDispersion& material, std::ostream& out);

/// Name-indexed set of dispersion tables. `air` and `vacuum` are always present.
class MaterialLibrary {
 public:
  MaterialLibrary();

  /// Loads every `*.csv` in `dir`; the file stem becomes the material name.
  static MaterialLibrary load_directory(const std::filesystem::path& dir);
  /// The tables shipped with the toolkit.
  static const MaterialLibrary& bundled();

  void add(MaterialDispersion material);
  MaterialPtr get(const std::string& name) const;
  bool contains(const std::string& name) const { return materials_.count(name) != 0; }
  std::vector<std::string> names() const;

 private:
  std::map<std::string, MaterialPtr> materials_;
};

std::filesystem::path bundled_data_dir();

}  // namespace spd
