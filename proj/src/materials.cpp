#include "spd/materials.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

namespace spd {

namespace {

void validate_axis(const std::vector<NkSample>& samples, const std::string& name) {
  if (samples.empty()) {
    throw std::invalid_argument(name + ": dispersion table is empty");
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (!(s.wavelength_nm > 0.0)) {
      throw DispersionError(name + ": nonpositive wavelength", i + 1);
    }
    if (s.n < 0.0) {
      throw DispersionError(name + ": negative refractive index", i + 1);
    }
    if (s.k < 0.0) {
      throw DispersionError(name + ": negative extinction", i + 1);
    }
    if (i > 0 && !(s.wavelength_nm > samples[i - 1].wavelength_nm)) {
      throw DispersionError(name + ": wavelengths not strictly increasing", i + 1);
    }
  }
}

std::complex<double> interpolate(const std::vector<NkSample>& samples, double wavelength_nm,
                                 const std::string& name) {
  if (!(wavelength_nm >= samples.front().wavelength_nm &&
        wavelength_nm <= samples.back().wavelength_nm)) {
    throw std::out_of_range(fmt::format("{}: wavelength {} nm outside tabulated range [{}, {}] nm",
                                        name, wavelength_nm, samples.front().wavelength_nm,
                                        samples.back().wavelength_nm));
  }
  auto upper = std::lower_bound(
      samples.begin(), samples.end(), wavelength_nm,
      [](const NkSample& s, double wl) { return s.wavelength_nm < wl; });
  if (upper->wavelength_nm == wavelength_nm) {
    return {upper->n, upper->k};
  }
  const auto& hi = *upper;
  const auto& lo = *(upper - 1);
  const double w = (wavelength_nm - lo.wavelength_nm) / (hi.wavelength_nm - lo.wavelength_nm);
  return {lo.n + w * (hi.n - lo.n), lo.k + w * (hi.k - lo.k)};
}

double parse_number(std::string_view field, std::size_t row, const std::string& name) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw DispersionError(fmt::format("{}: cannot parse '{}' as a number", name, field), row);
  }
  return value;
}

}  // namespace

const char* to_string(Axis axis) {
  switch (axis) {
    case Axis::armchair:
      return "armchair";
    case Axis::zigzag:
      return "zigzag";
    case Axis::unpolarized:
      return "unpolarized";
  }
  return "?";
}

Axis axis_from_string(const std::string& name) {
  if (name == "armchair") return Axis::armchair;
  if (name == "zigzag") return Axis::zigzag;
  if (name == "unpolarized") return Axis::unpolarized;
  throw std::invalid_argument("unknown axis '" + name + "'");
}

MaterialDispersion::MaterialDispersion(std::string name, std::vector<NkSample> samples,
                                       std::vector<std::string> header)
    : name_(std::move(name)), primary_(std::move(samples)), header_(std::move(header)) {
  validate_axis(primary_, name_);
}

MaterialDispersion::MaterialDispersion(std::string name, std::vector<NkSample> armchair,
                                       std::vector<NkSample> zigzag,
                                       std::vector<std::string> header)
    : name_(std::move(name)),
      primary_(std::move(armchair)),
      zigzag_(std::move(zigzag)),
      header_(std::move(header)) {
  validate_axis(primary_, name_);
  validate_axis(*zigzag_, name_);
  if (zigzag_->size() != primary_.size()) {
    throw std::invalid_argument(name_ + ": armchair and zigzag tables differ in length");
  }
  for (std::size_t i = 0; i < primary_.size(); ++i) {
    if (primary_[i].wavelength_nm != (*zigzag_)[i].wavelength_nm) {
      throw DispersionError(name_ + ": armchair and zigzag wavelengths differ", i + 1);
    }
  }
}

MaterialDispersion MaterialDispersion::uniform(std::string name, double n, double k) {
  std::vector<std::string> header{"uniform medium, n = " + fmt::format("{}", n) +
                                  ", k = " + fmt::format("{}", k)};
  return MaterialDispersion(std::move(name), {{1e-9, n, k}, {1e9, n, k}}, std::move(header));
}

const std::vector<NkSample>& MaterialDispersion::samples(Axis axis) const {
  if (axis == Axis::zigzag && zigzag_) return *zigzag_;
  return primary_;
}

std::complex<double> MaterialDispersion::index_at(double wavelength_nm, Axis axis) const {
  if (!zigzag_) return interpolate(primary_, wavelength_nm, name_);
  switch (axis) {
    case Axis::armchair:
      return interpolate(primary_, wavelength_nm, name_);
    case Axis::zigzag:
      return interpolate(*zigzag_, wavelength_nm, name_);
    case Axis::unpolarized:
      break;
  }
  throw std::invalid_argument(name_ + ": anisotropic material needs the armchair or zigzag axis");
}

MaterialDispersion parse_dispersion(std::istream& in, const std::string& name) {
  std::vector<std::string> header;
  std::vector<NkSample> armchair;
  std::vector<NkSample> zigzag;
  std::size_t columns = 0;
  std::string line;
  std::size_t row = 0;

  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (line.front() == '#') {
      if (!armchair.empty()) {
        throw DispersionError(name + ": comment after data rows", row);
      }
      auto text = line.substr(1);
      if (!text.empty() && text.front() == ' ') text.erase(0, 1);
      header.push_back(text);
      continue;
    }
    if (header.empty()) {
      throw DispersionError(name + ": missing provenance header", row);
    }

    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 3 && fields.size() != 5) {
      throw DispersionError(
          fmt::format("{}: expected 3 or 5 columns, found {}", name, fields.size()), row);
    }
    if (columns == 0) columns = fields.size();
    if (fields.size() != columns) {
      throw DispersionError(name + ": inconsistent column count", row);
    }

    std::vector<double> v;
    for (auto f : fields) v.push_back(parse_number(f, row, name));
    if (!(v[0] > 0.0)) throw DispersionError(name + ": nonpositive wavelength", row);
    if (v[1] < 0.0 || (columns == 5 && v[3] < 0.0)) {
      throw DispersionError(name + ": negative refractive index", row);
    }
    if (v[2] < 0.0 || (columns == 5 && v[4] < 0.0)) {
      throw DispersionError(name + ": negative extinction", row);
    }
    if (!armchair.empty() && !(v[0] > armchair.back().wavelength_nm)) {
      throw DispersionError(name + ": wavelengths not strictly increasing", row);
    }
    armchair.push_back({v[0], v[1], v[2]});
    if (columns == 5) zigzag.push_back({v[0], v[3], v[4]});
  }

  if (header.empty()) throw DispersionError(name + ": missing provenance header", row);
  if (armchair.empty()) throw DispersionError(name + ": no data rows", row);
  if (columns == 5) {
    return MaterialDispersion(name, std::move(armchair), std::move(zigzag), std::move(header));
  }
  return MaterialDispersion(name, std::move(armchair), std::move(header));
}

MaterialDispersion load_dispersion(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dispersion file " + path.string());
  return parse_dispersion(in, path.stem().string());
}

void save_dispersion(const MaterialDispersion& material, std::ostream& out) {
  for (const auto& line : material.header()) out << "# " << line << '\n';
  const auto& ac = material.samples(Axis::armchair);
  const auto& zz = material.samples(Axis::zigzag);
  for (std::size_t i = 0; i < ac.size(); ++i) {
    out << fmt::format("{},{},{}", ac[i].wavelength_nm, ac[i].n, ac[i].k);
    if (material.anisotropic()) out << fmt::format(",{},{}", zz[i].n, zz[i].k);
    out << '\n';
  }
}

MaterialLibrary::MaterialLibrary() {
  add(MaterialDispersion::uniform("air", 1.0));
  add(MaterialDispersion::uniform("vacuum", 1.0));
}

MaterialLibrary MaterialLibrary::load_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("material directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  MaterialLibrary lib;
  for (const auto& f : files) lib.add(load_dispersion(f));
  return lib;
}

const MaterialLibrary& MaterialLibrary::bundled() {
  static const MaterialLibrary lib = load_directory(bundled_data_dir());
  return lib;
}

void MaterialLibrary::add(MaterialDispersion material) {
  auto name = material.name();
  materials_[name] = std::make_shared<const MaterialDispersion>(std::move(material));
}

MaterialPtr MaterialLibrary::get(const std::string& name) const {
  auto it = materials_.find(name);
  if (it == materials_.end()) throw std::out_of_range("unknown material '" + name + "'");
  return it->second;
}

std::vector<std::string> MaterialLibrary::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : materials_) out.push_back(name);
  return out;
}

std::filesystem::path bundled_data_dir() {
  if (const char* env = std::getenv("SPD_DATA_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return SPD_DATA_DIR;
}

}  // namespace spd
