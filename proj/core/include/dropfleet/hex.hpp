#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

namespace dropfleet {

/// Axial hexagon coordinate (pointy-top layout).
struct HexCoord {
  int q = 0;
  int r = 0;

  friend auto operator<=>(const HexCoord&, const HexCoord&) = default;
};

/// The 7-way move set: stay plus the six neighbor directions in the fixed
/// axial order E, NE, NW, W, SW, SE. The order is frozen so replays and
/// recorded trajectories are byte-stable.
enum class Action : int {
  kStay = 0,
  kEast = 1,
  kNorthEast = 2,
  kNorthWest = 3,
  kWest = 4,
  kSouthWest = 5,
  kSouthEast = 6,
};

inline constexpr int kActionCount = 7;

/// Axial offsets for actions 1..6, indexed by code - 1.
inline constexpr std::array<HexCoord, 6> kHexDirections = {{
    {1, 0},    // E
    {1, -1},   // NE
    {0, -1},   // NW
    {-1, 0},   // W
    {-1, 1},   // SW
    {0, 1},    // SE
}};

Action action_from_code(int code);

/// Hexagonal-disk grid: all cells within `radius` steps of the origin,
/// with centroids `pitch_m` meters apart and a single fleet speed.
struct GridSpec {
  int radius = 5;
  double pitch_m = 600.0;
  double speed_m_per_tick = 600.0;

  void validate() const {
    if (radius < 1) throw std::invalid_argument("GridSpec: radius must be >= 1");
    if (pitch_m <= 0) throw std::invalid_argument("GridSpec: pitch must be > 0");
    if (speed_m_per_tick <= 0)
      throw std::invalid_argument("GridSpec: speed must be > 0");
  }

  int cell_count() const { return 1 + 3 * radius * (radius + 1); }
  bool in_bounds(HexCoord h) const;
};

/// Steps between two cells under the axial hex metric.
int hex_distance(HexCoord a, HexCoord b);

/// Ring of `h` around `origin` (ring 0 = the origin itself).
int ring_index(HexCoord origin, HexCoord h);

/// One move in direction `a`; off-grid moves clamp to the current cell so the
/// action space stays 7-way everywhere.
HexCoord apply_action(HexCoord h, Action a, const GridSpec& g);

/// Whole ticks to cover the centroid distance, zero only for a == b.
int travel_time(HexCoord a, HexCoord b, const GridSpec& g);

/// Cells of the straight hex line from a to b inclusive (length dist+1).
/// Used to interpolate a vehicle's position along a leg.
std::vector<HexCoord> hex_line(HexCoord a, HexCoord b);

/// Canonical dense indexing of a grid's cells. Cells are enumerated row by
/// row (r ascending, then q ascending), which fixes the one-hot layout of
/// observations and every per-cell array in the project.
class CellIndexer {
 public:
  explicit CellIndexer(const GridSpec& g);

  int count() const { return static_cast<int>(cells_.size()); }
  HexCoord at(int index) const { return cells_.at(static_cast<std::size_t>(index)); }
  int index_of(HexCoord h) const;
  bool contains(HexCoord h) const;
  const std::vector<HexCoord>& cells() const { return cells_; }

  /// Nearest in-bounds cell to `h` (ties broken by canonical index order).
  HexCoord clamp(HexCoord h) const;

 private:
  int radius_;
  int side_;  // 2*radius + 1
  std::vector<HexCoord> cells_;
  std::vector<int> index_;  // (q+R) * side + (r+R) -> dense index or -1
};

}  // namespace dropfleet

template <>
struct std::hash<dropfleet::HexCoord> {
  std::size_t operator()(const dropfleet::HexCoord& h) const noexcept {
    return std::hash<std::int64_t>()((static_cast<std::int64_t>(h.q) << 32) ^
                                     static_cast<std::uint32_t>(h.r));
  }
};
