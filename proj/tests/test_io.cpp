#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "spd/detsim.hpp"
#include "spd/io.hpp"

using namespace spd;
using namespace spd::detsim;
namespace fs = std::filesystem;

namespace {

fs::path workdir(const std::string& name) {
  auto p = fs::path(SPD_TEST_WORKDIR) / "io" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("events CSV round trip keeps timestamps, origins and pairing") {
  DetectorParams p;
  p.dark_rate_hz = 5e3;
  p.max_occupancy = 3;
  p.dead_time_us = 0.0;
  p.hold_time_mean_us = 300.0;
  const auto ev = simulate(p, {1550.0, 1e5, 0.3, source::Polarization::none()}, 0.2, 12);
  std::stringstream buf;
  io::write_events_csv(ev, buf);
  const auto back = io::read_events_csv(buf);
  REQUIRE(back.capture_count() == ev.capture_count());
  REQUIRE(back.releases_us.size() == ev.releases_us.size());
  for (std::size_t i = 0; i < ev.capture_count(); ++i) {
    CHECK(std::abs(back.captures_us[i] - ev.captures_us[i]) <= 5e-7);
    CHECK(back.origins[i] == ev.origins[i]);
  }
  for (std::size_t j = 0; j < ev.releases_us.size(); ++j) {
    CHECK(std::abs(back.releases_us[j] - ev.releases_us[j]) <= 5e-7);
    CHECK(back.origins[back.release_of[j]] == ev.origins[ev.release_of[j]]);
  }
  CHECK_NOTHROW(back.check_ledger(3));
  CHECK(back.count(Origin::photon) == ev.count(Origin::photon));
}

TEST_CASE("events CSV rows are in time order") {
  EventRecord ev;
  ev.captures_us = {1.0, 2.0};
  ev.origins = {Origin::photon, Origin::dark};
  ev.releases_us = {2.0, 5.0};
  ev.release_of = {0, 1};
  std::stringstream buf;
  io::write_events_csv(ev, buf);
  CHECK(buf.str() ==
        "timestamp_us,kind,origin\n"
        "1.000000,capture,photon\n"
        "2.000000,release,photon\n"
        "2.000000,capture,dark\n"
        "5.000000,release,dark\n");
}

TEST_CASE("malformed event files report the line") {
  const auto fails_with = [](const std::string& text, const std::string& needle) {
    std::istringstream in(text);
    try {
      io::read_events_csv(in);
    } catch (const std::runtime_error& e) {
      return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
  };
  CHECK(fails_with("time,kind\n", "bad header"));
  CHECK(fails_with("timestamp_us,kind,origin\n1.0,capture,photon\nabc,release,photon\n", "line 3"));
  CHECK(fails_with("timestamp_us,kind,origin\n1.0,jump,photon\n", "bad kind"));
  CHECK(fails_with("timestamp_us,kind,origin\n1.0,capture,ghost\n", "bad origin"));
  CHECK(fails_with("timestamp_us,kind,origin\n1.0,release,dark\n", "release without capture"));
}

TEST_CASE("trace binary and sidecar round trip bit for bit") {
  const auto dir = workdir("trace");
  DetectorParams p;
  EventRecord ev;
  ev.captures_us = {10.0};
  ev.origins = {Origin::dark};
  ev.releases_us = {30.0};
  ev.release_of = {0};
  const auto tr = synthesize_trace(ev, p, 50e-6, 5e7, 3);
  io::write_trace(tr, dir / "trace.bin");
  CHECK(fs::file_size(dir / "trace.bin") == tr.samples.size() * 8);

  std::ifstream side(dir / "trace.json");
  const auto meta = nlohmann::json::parse(side);
  CHECK(meta["sample_rate"].get<double>() == 5e7);
  CHECK(meta["baseline"].get<double>() == 0.0);
  CHECK(meta["duration"].get<double>() == doctest::Approx(50e-6));
  CHECK(meta["data"].get<std::string>() == "trace.bin");

  for (const auto& path : {dir / "trace.bin", dir / "trace.json"}) {
    const auto back = io::read_trace(path);
    CHECK(back.sample_rate_hz == tr.sample_rate_hz);
    CHECK(back.samples == tr.samples);
  }
}

TEST_CASE("damaged trace files are rejected") {
  const auto dir = workdir("damaged");
  TimeTrace tr;
  tr.sample_rate_hz = 1e6;
  tr.samples = {0.0, 1.0, 2.0};
  io::write_trace(tr, dir / "t.bin");
  {
    std::ofstream extra(dir / "t.bin", std::ios::binary | std::ios::app);
    extra << "xyz";
  }
  CHECK_THROWS(io::read_trace(dir / "t.bin"));
  {
    std::ofstream extra(dir / "t.bin", std::ios::binary | std::ios::app);
    extra << "12345";  // whole float64 again, but one more than recorded
  }
  CHECK_THROWS(io::read_trace(dir / "t.bin"));
  CHECK_THROWS(io::read_trace(dir / "missing.bin"));
  {
    std::ofstream bad(dir / "bad.json");
    bad << "{ not json";
  }
  CHECK_THROWS(io::read_trace(dir / "bad.json"));
}
