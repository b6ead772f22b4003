#pragma once

#include <filesystem>
#include <iosfwd>

#include "spd/detsim.hpp"

namespace spd::io {

/// CSV with header `timestamp_us,kind,origin`; rows in time order, kind is
/// capture|release, origin photon|dark (a release carries its capture's origin).
void write_events_csv(const detsim::EventRecord& events, std::ostream& out);
void write_events_csv(const detsim::EventRecord& events, const std::filesystem::path& path);

/// Inverse of write_events_csv. Releases are paired first-in first-out with
/// the open captures of the same origin, falling back to any open capture.
detsim::EventRecord read_events_csv(std::istream& in);
detsim::EventRecord read_events_csv(const std::filesystem::path& path);

/// Raw little-endian float64 samples at `bin_path` plus a JSON sidecar
/// {sample_rate, baseline, duration} at `bin_path` with extension `.json`.
void write_trace(const detsim::TimeTrace& trace, const std::filesystem::path& bin_path);
/// Accepts either the binary or the sidecar path.
detsim::TimeTrace read_trace(const std::filesystem::path& path);

}  // namespace spd::io
