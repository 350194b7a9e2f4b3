#include "dropfleet/hex.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>

namespace dropfleet {

Action action_from_code(int code) {
  if (code < 0 || code >= kActionCount)
    throw std::invalid_argument("action code out of range 0..6");
  return static_cast<Action>(code);
}

int hex_distance(HexCoord a, HexCoord b) {
  const int dq = a.q - b.q;
  const int dr = a.r - b.r;
  return (std::abs(dq) + std::abs(dr) + std::abs(dq + dr)) / 2;
}

int ring_index(HexCoord origin, HexCoord h) { return hex_distance(origin, h); }

bool GridSpec::in_bounds(HexCoord h) const {
  return hex_distance({0, 0}, h) <= radius;
}

HexCoord apply_action(HexCoord h, Action a, const GridSpec& g) {
  if (a == Action::kStay) return h;
  const HexCoord d = kHexDirections[static_cast<std::size_t>(a) - 1];
  const HexCoord next{h.q + d.q, h.r + d.r};
  return g.in_bounds(next) ? next : h;
}

int travel_time(HexCoord a, HexCoord b, const GridSpec& g) {
  const int dist = hex_distance(a, b);
  if (dist == 0) return 0;
  return static_cast<int>(std::ceil(dist * g.pitch_m / g.speed_m_per_tick -
                                    1e-9));
}

namespace {

// Cube rounding of fractional axial coordinates.
HexCoord hex_round(double q, double r) {
  const double s = -q - r;
  double rq = std::round(q), rr = std::round(r), rs = std::round(s);
  const double dq = std::abs(rq - q), dr = std::abs(rr - r), ds = std::abs(rs - s);
  if (dq > dr && dq > ds) {
    rq = -rr - rs;
  } else if (dr > ds) {
    rr = -rq - rs;
  }
  return {static_cast<int>(rq), static_cast<int>(rr)};
}

}  // namespace

std::vector<HexCoord> hex_line(HexCoord a, HexCoord b) {
  const int n = hex_distance(a, b);
  std::vector<HexCoord> line;
  line.reserve(static_cast<std::size_t>(n) + 1);
  if (n == 0) {
    line.push_back(a);
    return line;
  }
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    // Nudge off exact midpoints so rounding is direction-independent.
    const double q = a.q + (b.q - a.q) * t + 1e-6 * (1 - 2 * t);
    const double r = a.r + (b.r - a.r) * t + 1e-6 * (1 - 2 * t);
    line.push_back(hex_round(q, r));
  }
  return line;
}

CellIndexer::CellIndexer(const GridSpec& g) : radius_(g.radius) {
  g.validate();
  side_ = 2 * radius_ + 1;
  index_.assign(static_cast<std::size_t>(side_) * side_, -1);
  for (int r = -radius_; r <= radius_; ++r) {
    const int q_lo = std::max(-radius_, -r - radius_);
    const int q_hi = std::min(radius_, -r + radius_);
    for (int q = q_lo; q <= q_hi; ++q) {
      const HexCoord h{q, r};
      index_[static_cast<std::size_t>(q + radius_) * side_ + (r + radius_)] =
          static_cast<int>(cells_.size());
      cells_.push_back(h);
    }
  }
}

int CellIndexer::index_of(HexCoord h) const {
  if (!contains(h)) throw std::out_of_range("CellIndexer: cell out of bounds");
  return index_[static_cast<std::size_t>(h.q + radius_) * side_ + (h.r + radius_)];
}

bool CellIndexer::contains(HexCoord h) const {
  if (std::abs(h.q) > radius_ || std::abs(h.r) > radius_) return false;
  return index_[static_cast<std::size_t>(h.q + radius_) * side_ + (h.r + radius_)] >= 0;
}

HexCoord CellIndexer::clamp(HexCoord h) const {
  if (contains(h)) return h;
  int best = std::numeric_limits<int>::max();
  HexCoord best_cell = cells_.front();
  for (const HexCoord& c : cells_) {
    const int d = hex_distance(c, h);
    if (d < best) {
      best = d;
      best_cell = c;
    }
  }
  return best_cell;
}

}  // namespace dropfleet
