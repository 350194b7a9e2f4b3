#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dropfleet/hex.hpp"
#include "dropfleet/rng.hpp"

namespace dropfleet::demand {

struct TripRecord {
  int request_tick = 0;
  HexCoord origin;
  HexCoord destination;
};

/// Counters reported by the loader (written out as JSON next to run outputs).
struct LoadReport {
  std::size_t accepted = 0;
  std::size_t clamped = 0;   // out-of-bounds coordinates snapped in-bounds
  std::size_t rejected = 0;  // rows outside the episode horizon
};

/// Planar-meters to grid mapping used when trip files carry x/y coordinates
/// instead of axial ids.
struct Projection {
  double x0 = 0.0;
  double y0 = 0.0;
  double scale = 1.0;
};

/// Parse a trip CSV with header `request_time,origin_x,origin_y,dest_x,dest_y`.
/// Times are ticks (plain integers) or HH:MM:SS converted at `tick_seconds`
/// per tick. Coordinates are either a single axial `q:r` field or a planar
/// x,y pair in meters mapped to the nearest centroid. Malformed rows throw
/// with the offending line number; out-of-bounds cells are clamped and
/// counted. Records come back sorted by request tick.
std::vector<TripRecord> load_trips(std::istream& in, const GridSpec& grid,
                                   const Projection& projection,
                                   int episode_ticks, int tick_seconds,
                                   LoadReport* report = nullptr);
std::vector<TripRecord> load_trips_file(const std::string& path,
                                        const GridSpec& grid,
                                        const Projection& projection,
                                        int episode_ticks, int tick_seconds,
                                        LoadReport* report = nullptr);

/// Per-hour, per-origin arrival rates (requests per tick) plus empirical
/// destination distributions. Immutable once built.
struct DemandProfile {
  int hours = 24;
  int cells = 0;
  int ticks_per_hour = 60;
  std::vector<std::vector<double>> rate;  // [hour][cell]
  // [hour][cell] -> probability over destination cells; empty when the
  // (hour, cell) pair generated no trips.
  std::vector<std::vector<std::vector<double>>> destinations;

  double rate_at(int hour, int cell) const { return rate.at(hour).at(cell); }
};

DemandProfile build_profile(const std::vector<TripRecord>& trips,
                            const CellIndexer& cells, int ticks_per_hour = 60,
                            int episode_ticks = 1440);

struct RequestSpawn {
  HexCoord origin;
  HexCoord destination;
};

/// Poisson draws for one tick: per origin cell, count ~ Poisson(rate), with
/// destinations i.i.d. from that cell's distribution.
std::vector<RequestSpawn> sample_requests(const DemandProfile& profile,
                                          const CellIndexer& cells, int tick,
                                          Rng& rng);

struct Hotspot {
  HexCoord cell;
  double peak_rate = 0.0;   // requests per tick at the peak hour
  double peak_hour = 12.0;
  double width_hours = 3.0;
};

/// Synthetic profile: base rate everywhere plus Gaussian-in-time bumps at
/// hotspot cells. Destinations are uniform over the grid unless weights are
/// supplied (one non-negative weight per cell).
DemandProfile synth_scenario(const std::vector<Hotspot>& hotspots,
                             double base_rate, const CellIndexer& cells,
                             int hours = 24, int ticks_per_hour = 60,
                             const std::vector<double>* dest_weights = nullptr);

/// Where a tick's requests come from: historical replay or Poisson sampling.
class DemandSource {
 public:
  static DemandSource replay(std::vector<TripRecord> trips);
  static DemandSource poisson(DemandProfile profile, const GridSpec& grid);
  static DemandSource none();

  std::vector<RequestSpawn> spawns_at(int tick, Rng& rng) const;

 private:
  std::vector<TripRecord> trips_;                    // sorted by tick
  std::optional<DemandProfile> profile_;
  std::shared_ptr<const CellIndexer> cells_;
};

}  // namespace dropfleet::demand
