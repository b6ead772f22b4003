#include "spd/io.hpp"

#include <bit>
#include <cstring>
#include <deque>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

namespace spd::io {

using detsim::EventRecord;
using detsim::Origin;
using detsim::TimeTrace;

namespace {

const char* origin_name(Origin o) { return o == Origin::photon ? "photon" : "dark"; }

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffULL) << (8 * (7 - i));
    return r;
  }
  return v;
}

std::filesystem::path sidecar_for(std::filesystem::path p) { return p.replace_extension(".json"); }

}  // namespace

void write_events_csv(const EventRecord& events, std::ostream& out) {
  out << "timestamp_us,kind,origin\n";
  std::vector<std::size_t> order(events.captures_us.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return events.captures_us[a] < events.captures_us[b];
  });
  std::size_t i = 0, j = 0;
  while (i < order.size() || j < events.releases_us.size()) {
    const bool release_next =
        j < events.releases_us.size() &&
        (i == order.size() || events.releases_us[j] <= events.captures_us[order[i]]);
    if (release_next) {
      out << fmt::format("{:.6f},release,{}\n", events.releases_us[j],
                         origin_name(events.origins[events.release_of[j]]));
      ++j;
    } else {
      const auto c = order[i++];
      out << fmt::format("{:.6f},capture,{}\n", events.captures_us[c], origin_name(events.origins[c]));
    }
  }
}

void write_events_csv(const EventRecord& events, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_events_csv(events, out);
}

EventRecord read_events_csv(std::istream& in) {
  EventRecord rec;
  std::deque<std::size_t> open[2];
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (row == 1) {
      if (line != "timestamp_us,kind,origin") throw std::runtime_error("events CSV: bad header");
      continue;
    }
    std::istringstream fields(line);
    std::string ts, kind, origin;
    std::getline(fields, ts, ',');
    std::getline(fields, kind, ',');
    std::getline(fields, origin, ',');
    double t = 0.0;
    try {
      std::size_t used = 0;
      t = std::stod(ts, &used);
      if (used != ts.size()) throw std::invalid_argument(ts);
    } catch (const std::exception&) {
      throw std::runtime_error(fmt::format("events CSV line {}: bad timestamp '{}'", row, ts));
    }
    Origin o;
    if (origin == "photon") {
      o = Origin::photon;
    } else if (origin == "dark") {
      o = Origin::dark;
    } else {
      throw std::runtime_error(fmt::format("events CSV line {}: bad origin '{}'", row, origin));
    }
    const int slot = o == Origin::photon ? 0 : 1;
    if (kind == "capture") {
      rec.captures_us.push_back(t);
      rec.origins.push_back(o);
      open[slot].push_back(rec.captures_us.size() - 1);
    } else if (kind == "release") {
      auto* queue = !open[slot].empty() ? &open[slot] : &open[1 - slot];
      if (queue->empty()) {
        throw std::runtime_error(fmt::format("events CSV line {}: release without capture", row));
      }
      rec.releases_us.push_back(t);
      rec.release_of.push_back(queue->front());
      queue->pop_front();
    } else {
      throw std::runtime_error(fmt::format("events CSV line {}: bad kind '{}'", row, kind));
    }
  }
  return rec;
}

EventRecord read_events_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_events_csv(in);
}

void write_trace(const TimeTrace& trace, const std::filesystem::path& bin_path) {
  std::ofstream out(bin_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + bin_path.string());
  for (double v : trace.samples) {
    const auto bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    out.write(bytes, 8);
  }
  nlohmann::ordered_json meta;
  meta["sample_rate"] = trace.sample_rate_hz;
  meta["baseline"] = trace.baseline_v;
  meta["duration"] = trace.duration_s();
  meta["samples"] = trace.samples.size();
  meta["format"] = "float64-le";
  meta["data"] = bin_path.filename().string();
  std::ofstream side(sidecar_for(bin_path), std::ios::binary);
  side << meta.dump(2) << '\n';
}

TimeTrace read_trace(const std::filesystem::path& path) {
  auto side_path = path.extension() == ".json" ? path : sidecar_for(path);
  std::ifstream side(side_path);
  if (!side) throw std::runtime_error("cannot open trace sidecar " + side_path.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(side);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed trace sidecar: " + std::string(e.what()));
  }
  TimeTrace trace;
  trace.sample_rate_hz = meta.at("sample_rate").get<double>();
  trace.baseline_v = meta.value("baseline", 0.0);
  auto bin_path = side_path.parent_path() / meta.value("data", side_path.stem().string() + ".bin");

  std::ifstream in(bin_path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open trace data " + bin_path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % 8 != 0) throw std::runtime_error("trace data is not a whole number of float64");
  in.seekg(0);
  trace.samples.resize(bytes / 8);
  for (auto& v : trace.samples) {
    char raw[8];
    in.read(raw, 8);
    std::uint64_t bits = 0;
    std::memcpy(&bits, raw, 8);
    v = std::bit_cast<double>(to_little_endian(bits));
  }
  if (meta.contains("samples") && meta["samples"].get<std::size_t>() != trace.samples.size()) {
    throw std::runtime_error("trace sidecar sample count does not match data");
  }
  return trace;
}

}  // namespace spd::io
