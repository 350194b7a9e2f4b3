#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dropfleet/demand.hpp"
#include "dropfleet/hex.hpp"
#include "dropfleet/rng.hpp"

namespace dropfleet::sim {

enum class VehicleStatus { kDormant, kIdle, kEnroutePickup, kOccupied, kCruising };
enum class RequestStatus { kOpen, kAssigned, kPickedUp, kCompleted, kRejected };

struct FareParams {
  double base = 2.5;
  double per_km = 1.5;
  double per_tick = 0.35;
  double wait_penalty_per_tick = 0.1;
};

struct SimConfig {
  GridSpec grid;
  int fleet_size = 20;
  int episode_ticks = 1440;
  int entry_window_ticks = 30;  // fleet enters uniformly over this window
  int max_wait_ticks = 5;
  int max_pickup_eta = 8;
  bool unlimited_pickup_radius = false;
  bool longest_wait_priority = true;  // false: shortest-wait-first matching
  double beta1 = 1.0;                 // order payment weight
  double beta2 = 0.1;                 // time cost per tick
  double beta3_per_meter = 0.0002;    // distance cost
  FareParams fare;
  /// Deterministic (enter_tick, cell) placement, mainly for tests; empty
  /// means uniform entry over the window and the grid.
  std::vector<std::pair<int, HexCoord>> fixed_entries;

  void validate() const;
};

struct Vehicle {
  int id = 0;
  VehicleStatus status = VehicleStatus::kDormant;
  HexCoord location;
  int enter_tick = 0;
  int ticks_remaining = 0;      // on the current leg
  int active_option = -1;       // option driving the current cycle, -1 if none
  int option_steps_done = 0;
  double earnings = 0.0;        // sum of per-tick rewards this episode
};

struct Request {
  int id = 0;
  HexCoord origin;
  HexCoord destination;
  int request_tick = 0;
  RequestStatus status = RequestStatus::kOpen;
  int wait_ticks = 0;           // frozen at assignment
  int assigned_vehicle = -1;
};

/// Per-cell counts of one tick's decision state: matchable supply (idle and
/// cruising vehicles), open requests, and committed vehicles (heading to a
/// pickup or occupied). Shared immutably by every observation of the tick.
struct GlobalFrame {
  int tick = 0;
  std::vector<int> idle;
  std::vector<int> requests;
  std::vector<int> busy;
};

/// Agent view: the tick's global frame plus the agent's own cell. Feature
/// layout is [idle/N..., requests/N..., busy/N..., t/T, one-hot cell].
struct Observation {
  std::shared_ptr<const GlobalFrame> global;
  int tick = 0;
  int episode_ticks = 1;
  int cell_index = 0;
  int fleet_size = 1;

  static int feature_dim(int cell_count) { return 4 * cell_count + 1; }
  void append_features(std::vector<double>& out) const;
  std::vector<double> features() const;
};

/// One executed relocation step (stay steps have from == to).
struct Leg {
  HexCoord from;
  HexCoord to;
  Action action = Action::kStay;
  int start_tick = 0;
  int end_tick = 0;
  bool matched_at_end = false;  // a dispatch assignment ended this step
};

/// The unit of learning: one serving or relocating cycle.
struct Transition {
  int agent = 0;
  int option = 0;
  Observation start;
  Observation end;
  int start_tick = 0;
  int end_tick = 0;
  std::vector<double> rewards;   // one entry per elapsed tick
  bool is_relocation = false;
  bool matched_at_end = false;   // trip indicator for relocation cycles
  bool done = false;             // closed by episode end
  std::vector<Leg> legs;         // relocation cycles only

  int dt() const { return end_tick - start_tick; }
  double total_reward() const;
};

enum class EventKind {
  kVehicleEnter,
  kRequestOpen,
  kRequestExpire,
  kAssign,
  kPickup,
  kComplete,
  kCycleClose,
};

const char* to_string(EventKind kind);

struct Event {
  int tick = 0;
  EventKind kind = EventKind::kVehicleEnter;
  int agent = -1;
  int request = -1;
  int cell = -1;
  double value = 0.0;
};

/// A fresh cycle for a decision-ready vehicle: which option slot was chosen,
/// the first primitive action, and how many steps the option runs (1 for
/// primitive actions).
struct Decision {
  int option = 0;
  Action first_action = Action::kStay;
  int horizon = 1;
};

/// Called at the in-tick decision point for decision-ready vehicles without a
/// pre-assigned Decision. Returning nullopt leaves the vehicle idle.
using DecideFn =
    std::function<std::optional<Decision>(int agent, const Observation&)>;

/// Called for the next step of a multi-step option already in progress.
using OptionStepFn =
    std::function<Action(int agent, int option, const Observation&)>;

struct TickResult {
  std::vector<Event> events;
  std::vector<Transition> transitions;
};

/// Trip payment: distance- and time-based fare minus a waiting-time
/// disutility, floored at zero.
double fare(const FareParams& p, int wait_ticks, double trip_distance_m,
            int trip_ticks);

/// Discounted per-tick-averaged option return
///   R (gamma^dt - 1) / (dt (gamma - 1)),
/// exactly the geometric sum of dt equal per-tick shares.
double discounted_option_reward(double total_reward, int dt, double gamma);

/// The tick-driven multi-agent environment. One World runs one episode and
/// is owned by a single runner; parallel episodes use separate Worlds.
class World {
 public:
  World(SimConfig cfg, demand::DemandSource source, std::uint64_t seed);

  /// Execute one tick. Phases: advance legs and complete trips; inject new
  /// requests; expire over-waited requests; start relocation legs (from
  /// `assignments`, then `decide` for the remaining decision-ready vehicles);
  /// match open requests to available vehicles; close finished cycles.
  TickResult tick(const std::map<int, Decision>& assignments = {},
                  const DecideFn& decide = nullptr,
                  const OptionStepFn& option_step = nullptr);

  /// Fresh observation of the current world state for one agent.
  Observation observe(int agent) const;

  /// Vehicles that may receive a Decision this tick (entered, idle, not in a
  /// cycle). Valid between ticks for building the assignments map.
  std::vector<int> decision_ready() const;

  int clock() const { return clock_; }
  bool done() const { return clock_ >= cfg_.episode_ticks; }
  const SimConfig& config() const { return cfg_; }
  const CellIndexer& cells() const { return cells_; }
  const std::vector<Vehicle>& vehicles() const { return vehicles_; }
  const std::vector<Request>& requests() const { return requests_; }

  std::size_t arrivals() const { return requests_.size(); }
  std::size_t served() const { return served_; }
  std::size_t rejected() const { return rejected_; }

  /// Rolling FNV-1a hash of every event emitted so far; equal seeds, configs
  /// and policies give equal hashes.
  std::uint64_t event_hash() const { return event_hash_; }

  /// Decision frames of completed ticks, for gap grids and diagnostics.
  const std::vector<std::shared_ptr<const GlobalFrame>>& frames() const {
    return frames_;
  }

  /// Fleet-wide reward accrued at each tick (costs and fares).
  const std::vector<double>& reward_by_tick() const { return reward_by_tick_; }

 private:
  struct LegState {
    HexCoord from;
    HexCoord to;
    Action action = Action::kStay;
    std::vector<HexCoord> path;
    int total = 0;
    int elapsed = 0;
    int start_tick = 0;
  };

  enum class CycleKind { kRelocation, kServing };

  struct CycleState {
    CycleKind kind = CycleKind::kRelocation;
    int option = 0;
    int horizon = 1;
    int steps_done = 0;
    int start_tick = 0;
    Observation start_obs;
    std::vector<double> rewards;
    std::vector<Leg> legs;
    int serving_request = -1;
    bool wants_continuation = false;
    bool arrived = false;  // final leg landed this tick
  };

  void enter_vehicles(std::vector<Event>& events);
  void advance_legs(std::vector<Event>& events);
  void inject_requests(std::vector<Event>& events);
  void expire_requests(std::vector<Event>& events);
  std::shared_ptr<const GlobalFrame> build_frame() const;
  void start_cycles(const std::map<int, Decision>& assignments,
                    const DecideFn& decide, const OptionStepFn& option_step,
                    std::vector<Event>& events);
  void run_match(std::vector<Event>& events);
  void close_cycles(TickResult& result);
  void begin_pickup(Vehicle& v, Request& r, std::vector<Event>& events);
  void begin_serving(Vehicle& v, Request& r, std::vector<Event>& events);
  void start_relocation_leg(Vehicle& v, Action a);
  void accrue(int agent, double delta_cells);
  Observation make_observation(const std::shared_ptr<const GlobalFrame>& frame,
                               int agent) const;
  void record_event(std::vector<Event>& events, Event e);

  SimConfig cfg_;
  CellIndexer cells_;
  demand::DemandSource source_;
  Rng demand_rng_;
  int clock_ = 0;
  std::vector<Vehicle> vehicles_;
  std::vector<Request> requests_;
  std::vector<std::optional<LegState>> legs_;
  std::vector<std::optional<CycleState>> cycles_;
  std::vector<Transition> pending_transitions_;
  std::shared_ptr<const GlobalFrame> current_frame_;
  std::vector<std::shared_ptr<const GlobalFrame>> frames_;
  std::vector<double> reward_by_tick_;
  std::size_t served_ = 0;
  std::size_t rejected_ = 0;
  std::uint64_t event_hash_ = 1469598103934665603ULL;  // FNV offset basis
};

}  // namespace dropfleet::sim
