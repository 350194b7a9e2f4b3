#include "dropfleet/demand.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <memory>
#include <stdexcept>

namespace dropfleet::demand {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

[[noreturn]] void fail_row(std::size_t line_no, const std::string& why) {
  throw std::runtime_error("trip CSV line " + std::to_string(line_no) + ": " + why);
}

int parse_time(const std::string& s, int tick_seconds, std::size_t line_no) {
  if (s.find(':') == std::string::npos) {
    try {
      std::size_t pos = 0;
      const int t = std::stoi(s, &pos);
      if (pos != s.size()) fail_row(line_no, "bad tick value '" + s + "'");
      return t;
    } catch (const std::exception&) {
      fail_row(line_no, "bad tick value '" + s + "'");
    }
  }
  int h = 0, m = 0, sec = 0;
  char c1 = 0, c2 = 0;
  std::stringstream ss(s);
  ss >> h >> c1 >> m >> c2 >> sec;
  if (!ss || c1 != ':' || c2 != ':' || m < 0 || m > 59 || sec < 0 || sec > 59)
    fail_row(line_no, "bad HH:MM:SS time '" + s + "'");
  return (h * 3600 + m * 60 + sec) / tick_seconds;
}

// Consume one endpoint: either "q:r" (one field) or planar "x","y" (two).
HexCoord parse_cell(const std::vector<std::string>& fields, std::size_t& pos,
                    const GridSpec& grid, const Projection& pr,
                    const CellIndexer& cells, bool* clamped,
                    std::size_t line_no) {
  if (pos >= fields.size()) fail_row(line_no, "missing coordinate fields");
  const std::string& first = fields[pos];
  if (first.find(':') != std::string::npos) {
    int q = 0, r = 0;
    char sep = 0;
    std::stringstream ss(first);
    ss >> q >> sep >> r;
    if (!ss || sep != ':') fail_row(line_no, "bad axial id '" + first + "'");
    pos += 1;
    HexCoord h{q, r};
    if (!cells.contains(h)) {
      *clamped = true;
      h = cells.clamp(h);
    }
    return h;
  }
  if (pos + 1 >= fields.size()) fail_row(line_no, "missing y coordinate");
  double x = 0, y = 0;
  try {
    x = std::stod(fields[pos]);
    y = std::stod(fields[pos + 1]);
  } catch (const std::exception&) {
    fail_row(line_no, "bad planar coordinate");
  }
  pos += 2;
  // Affine projection into grid meters, then nearest centroid in axial space
  // (pointy-top: x = pitch*(q + r/2), y = pitch*sqrt(3)/2*r).
  const double gx = (x - pr.x0) * pr.scale;
  const double gy = (y - pr.y0) * pr.scale;
  const double rf = gy / (grid.pitch_m * std::sqrt(3.0) / 2.0);
  const double qf = gx / grid.pitch_m - rf / 2.0;
  const double sf = -qf - rf;
  double rq = std::round(qf), rr = std::round(rf), rs = std::round(sf);
  const double dq = std::abs(rq - qf), dr = std::abs(rr - rf), ds = std::abs(rs - sf);
  if (dq > dr && dq > ds)
    rq = -rr - rs;
  else if (dr > ds)
    rr = -rq - rs;
  HexCoord h{static_cast<int>(rq), static_cast<int>(rr)};
  if (!cells.contains(h)) {
    *clamped = true;
    h = cells.clamp(h);
  }
  return h;
}

}  // namespace

std::vector<TripRecord> load_trips(std::istream& in, const GridSpec& grid,
                                   const Projection& projection,
                                   int episode_ticks, int tick_seconds,
                                   LoadReport* report) {
  grid.validate();
  if (tick_seconds <= 0) throw std::invalid_argument("tick_seconds must be > 0");
  const CellIndexer cells(grid);
  LoadReport local;
  std::vector<TripRecord> trips;
  std::string line;
  std::size_t line_no = 0;
  bool header_done = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_done) {
      header_done = true;  // first non-empty line is the header
      continue;
    }
    const auto fields = split_csv(line);
    if (fields.empty()) continue;
    const int tick = parse_time(fields[0], tick_seconds, line_no);
    bool clamped = false;
    std::size_t pos = 1;
    const HexCoord origin =
        parse_cell(fields, pos, grid, projection, cells, &clamped, line_no);
    const HexCoord dest =
        parse_cell(fields, pos, grid, projection, cells, &clamped, line_no);
    if (pos != fields.size()) fail_row(line_no, "trailing fields");
    if (tick < 0 || tick >= episode_ticks) {
      local.rejected += 1;
      continue;
    }
    if (clamped) local.clamped += 1;
    local.accepted += 1;
    trips.push_back({tick, origin, dest});
  }
  std::stable_sort(trips.begin(), trips.end(),
                   [](const TripRecord& a, const TripRecord& b) {
                     return a.request_tick < b.request_tick;
                   });
  if (report) *report = local;
  return trips;
}

std::vector<TripRecord> load_trips_file(const std::string& path,
                                        const GridSpec& grid,
                                        const Projection& projection,
                                        int episode_ticks, int tick_seconds,
                                        LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trip file " + path);
  return load_trips(in, grid, projection, episode_ticks, tick_seconds, report);
}

DemandProfile build_profile(const std::vector<TripRecord>& trips,
                            const CellIndexer& cells, int ticks_per_hour,
                            int episode_ticks) {
  if (ticks_per_hour <= 0) throw std::invalid_argument("ticks_per_hour must be > 0");
  DemandProfile p;
  p.ticks_per_hour = ticks_per_hour;
  p.cells = cells.count();
  p.hours = (episode_ticks + ticks_per_hour - 1) / ticks_per_hour;
  p.rate.assign(p.hours, std::vector<double>(p.cells, 0.0));
  std::vector<std::vector<std::vector<double>>> counts(
      p.hours, std::vector<std::vector<double>>(p.cells));
  for (const TripRecord& t : trips) {
    const int hour = t.request_tick / ticks_per_hour;
    if (hour < 0 || hour >= p.hours) continue;
    const int oc = cells.index_of(t.origin);
    p.rate[hour][oc] += 1.0;
    auto& dest = counts[hour][oc];
    if (dest.empty()) dest.assign(p.cells, 0.0);
    dest[cells.index_of(t.destination)] += 1.0;
  }
  p.destinations.assign(p.hours, std::vector<std::vector<double>>(p.cells));
  for (int h = 0; h < p.hours; ++h) {
    for (int c = 0; c < p.cells; ++c) {
      const double n = p.rate[h][c];
      p.rate[h][c] = n / ticks_per_hour;
      if (n > 0) {
        auto dist = counts[h][c];
        for (double& v : dist) v /= n;
        p.destinations[h][c] = std::move(dist);
      }
    }
  }
  return p;
}

std::vector<RequestSpawn> sample_requests(const DemandProfile& profile,
                                          const CellIndexer& cells, int tick,
                                          Rng& rng) {
  const int hour = std::min(tick / profile.ticks_per_hour, profile.hours - 1);
  if (hour < 0) throw std::invalid_argument("sample_requests: negative tick");
  std::vector<RequestSpawn> out;
  for (int c = 0; c < profile.cells; ++c) {
    const double rate = profile.rate[hour][c];
    if (rate <= 0) continue;
    const int n = rng.poisson(rate);
    if (n == 0) continue;
    const auto& dist = profile.destinations[hour][c];
    for (int k = 0; k < n; ++k) {
      int dest_index;
      if (dist.empty())
        dest_index = rng.uniform_int(profile.cells);
      else
        dest_index = rng.categorical(dist);
      out.push_back({cells.at(c), cells.at(dest_index)});
    }
  }
  return out;
}

DemandProfile synth_scenario(const std::vector<Hotspot>& hotspots,
                             double base_rate, const CellIndexer& cells,
                             int hours, int ticks_per_hour,
                             const std::vector<double>* dest_weights) {
  if (base_rate < 0) throw std::invalid_argument("synth_scenario: base rate < 0");
  DemandProfile p;
  p.hours = hours;
  p.cells = cells.count();
  p.ticks_per_hour = ticks_per_hour;
  p.rate.assign(hours, std::vector<double>(p.cells, base_rate));
  for (const Hotspot& h : hotspots) {
    if (h.peak_rate < 0) throw std::invalid_argument("synth_scenario: peak rate < 0");
    const int c = cells.index_of(h.cell);
    for (int hour = 0; hour < hours; ++hour) {
      const double d = hour - h.peak_hour;
      p.rate[hour][c] +=
          h.peak_rate * std::exp(-d * d / (2 * h.width_hours * h.width_hours));
    }
  }
  std::vector<double> dist;
  if (dest_weights) {
    if (static_cast<int>(dest_weights->size()) != p.cells)
      throw std::invalid_argument("synth_scenario: dest weight length mismatch");
    double total = 0;
    for (double w : *dest_weights) {
      if (w < 0) throw std::invalid_argument("synth_scenario: negative dest weight");
      total += w;
    }
    if (total <= 0) throw std::invalid_argument("synth_scenario: all dest weights zero");
    dist = *dest_weights;
    for (double& w : dist) w /= total;
  } else {
    dist.assign(static_cast<std::size_t>(p.cells), 1.0 / p.cells);
  }
  p.destinations.assign(hours, std::vector<std::vector<double>>(
                                   p.cells, dist));
  return p;
}

DemandSource DemandSource::replay(std::vector<TripRecord> trips) {
  std::stable_sort(trips.begin(), trips.end(),
                   [](const TripRecord& a, const TripRecord& b) {
                     return a.request_tick < b.request_tick;
                   });
  DemandSource s;
  s.trips_ = std::move(trips);
  return s;
}

DemandSource DemandSource::poisson(DemandProfile profile,
                                   const GridSpec& grid) {
  DemandSource s;
  s.profile_ = std::move(profile);
  s.cells_ = std::make_shared<CellIndexer>(grid);
  return s;
}

DemandSource DemandSource::none() { return DemandSource(); }

std::vector<RequestSpawn> DemandSource::spawns_at(int tick, Rng& rng) const {
  if (profile_) return sample_requests(*profile_, *cells_, tick, rng);
  std::vector<RequestSpawn> out;
  // trips_ is sorted; binary search the tick's slice.
  auto lo = std::lower_bound(trips_.begin(), trips_.end(), tick,
                             [](const TripRecord& t, int v) {
                               return t.request_tick < v;
                             });
  for (auto it = lo; it != trips_.end() && it->request_tick == tick; ++it)
    out.push_back({it->origin, it->destination});
  return out;
}

}  // namespace dropfleet::demand
