#include "dropfleet/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace dropfleet::sim {

void SimConfig::validate() const {
  grid.validate();
  if (fleet_size < 0) throw std::invalid_argument("fleet_size must be >= 0");
  if (episode_ticks < 1) throw std::invalid_argument("episode_ticks must be >= 1");
  if (entry_window_ticks < 1 || entry_window_ticks > episode_ticks)
    throw std::invalid_argument("entry_window_ticks out of range");
  if (max_wait_ticks < 0 || max_pickup_eta < 0)
    throw std::invalid_argument("matching limits must be >= 0");
  if (!fixed_entries.empty() &&
      fixed_entries.size() != static_cast<std::size_t>(fleet_size))
    throw std::invalid_argument("fixed_entries must cover the whole fleet");
  for (const auto& [tick, cell] : fixed_entries) {
    if (tick < 0 || tick >= episode_ticks)
      throw std::invalid_argument("fixed_entries: tick out of range");
    if (!grid.in_bounds(cell))
      throw std::invalid_argument("fixed_entries: cell out of bounds");
  }
}

void Observation::append_features(std::vector<double>& out) const {
  const auto& f = *global;
  const int n = static_cast<int>(f.idle.size());
  const double inv = 1.0 / std::max(1, fleet_size);
  out.reserve(out.size() + static_cast<std::size_t>(feature_dim(n)));
  for (int c = 0; c < n; ++c) out.push_back(f.idle[c] * inv);
  for (int c = 0; c < n; ++c) out.push_back(f.requests[c] * inv);
  for (int c = 0; c < n; ++c) out.push_back(f.busy[c] * inv);
  out.push_back(static_cast<double>(tick) / std::max(1, episode_ticks));
  for (int c = 0; c < n; ++c) out.push_back(c == cell_index ? 1.0 : 0.0);
}

std::vector<double> Observation::features() const {
  std::vector<double> out;
  append_features(out);
  return out;
}

double Transition::total_reward() const {
  double total = 0;
  for (double r : rewards) total += r;
  return total;
}

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kVehicleEnter: return "enter";
    case EventKind::kRequestOpen: return "request";
    case EventKind::kRequestExpire: return "expire";
    case EventKind::kAssign: return "assign";
    case EventKind::kPickup: return "pickup";
    case EventKind::kComplete: return "complete";
    case EventKind::kCycleClose: return "cycle";
  }
  return "?";
}

double fare(const FareParams& p, int wait_ticks, double trip_distance_m,
            int trip_ticks) {
  const double f = p.base + p.per_km * trip_distance_m / 1000.0 +
                   p.per_tick * trip_ticks -
                   p.wait_penalty_per_tick * wait_ticks;
  return f > 0 ? f : 0.0;
}

double discounted_option_reward(double total_reward, int dt, double gamma) {
  if (dt < 1) throw std::invalid_argument("discounted_option_reward: dt >= 1");
  if (gamma == 1.0) return total_reward;
  return total_reward * (std::pow(gamma, dt) - 1.0) / (dt * (gamma - 1.0));
}

namespace {

HexCoord position_at(const std::vector<HexCoord>& path, int elapsed, int total) {
  if (path.size() <= 1 || total <= 0) return path.front();
  const double frac = static_cast<double>(elapsed) / total;
  const auto idx = static_cast<std::size_t>(
      std::llround(frac * static_cast<double>(path.size() - 1)));
  return path[std::min(idx, path.size() - 1)];
}

}  // namespace

World::World(SimConfig cfg, demand::DemandSource source, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      cells_(cfg_.grid),
      source_(std::move(source)),
      demand_rng_(mix_seed(seed, 0xDEAAull)) {
  cfg_.validate();
  reward_by_tick_.assign(static_cast<std::size_t>(cfg_.episode_ticks), 0.0);
  Rng init_rng(mix_seed(seed, 0xF1EE7ull));
  vehicles_.resize(static_cast<std::size_t>(cfg_.fleet_size));
  legs_.resize(vehicles_.size());
  cycles_.resize(vehicles_.size());
  for (int i = 0; i < cfg_.fleet_size; ++i) {
    Vehicle& v = vehicles_[static_cast<std::size_t>(i)];
    v.id = i;
    if (cfg_.fixed_entries.empty()) {
      v.enter_tick = init_rng.uniform_int(cfg_.entry_window_ticks);
      v.location = cells_.at(init_rng.uniform_int(cells_.count()));
    } else {
      v.enter_tick = cfg_.fixed_entries[static_cast<std::size_t>(i)].first;
      v.location = cfg_.fixed_entries[static_cast<std::size_t>(i)].second;
    }
    v.status = VehicleStatus::kDormant;
  }
}

void World::record_event(std::vector<Event>& events, Event e) {
  // FNV-1a over the event's integer fields and the value's bit pattern.
  auto mix = [this](std::uint64_t word) {
    for (int i = 0; i < 8; ++i) {
      event_hash_ ^= (word >> (8 * i)) & 0xff;
      event_hash_ *= 1099511628211ULL;
    }
  };
  mix(static_cast<std::uint64_t>(e.tick));
  mix(static_cast<std::uint64_t>(e.kind));
  mix(static_cast<std::uint64_t>(static_cast<std::int64_t>(e.agent)));
  mix(static_cast<std::uint64_t>(static_cast<std::int64_t>(e.request)));
  mix(static_cast<std::uint64_t>(static_cast<std::int64_t>(e.cell)));
  std::uint64_t bits;
  std::memcpy(&bits, &e.value, 8);
  mix(bits);
  events.push_back(e);
}

void World::enter_vehicles(std::vector<Event>& events) {
  for (Vehicle& v : vehicles_) {
    if (v.status == VehicleStatus::kDormant && v.enter_tick == clock_) {
      v.status = VehicleStatus::kIdle;
      record_event(events, {clock_, EventKind::kVehicleEnter, v.id, -1,
                            cells_.index_of(v.location), 0.0});
    }
  }
}

void World::accrue(int agent, double moved_cells) {
  auto& cycle = cycles_[static_cast<std::size_t>(agent)];
  const double r = -cfg_.beta2 - cfg_.beta3_per_meter * moved_cells * cfg_.grid.pitch_m;
  cycle->rewards.push_back(r);
  vehicles_[static_cast<std::size_t>(agent)].earnings += r;
  reward_by_tick_[static_cast<std::size_t>(clock_)] += r;
}

void World::advance_legs(std::vector<Event>& events) {
  for (Vehicle& v : vehicles_) {
    auto& leg_opt = legs_[static_cast<std::size_t>(v.id)];
    if (!leg_opt) continue;
    LegState& leg = *leg_opt;
    const HexCoord before = position_at(leg.path, leg.elapsed, leg.total);
    leg.elapsed += 1;
    const HexCoord after = position_at(leg.path, leg.elapsed, leg.total);
    v.location = after;
    v.ticks_remaining = leg.total - leg.elapsed;
    accrue(v.id, hex_distance(before, after));
    if (leg.elapsed < leg.total) continue;

    auto& cycle = cycles_[static_cast<std::size_t>(v.id)];
    if (cycle->kind == CycleKind::kRelocation) {
      cycle->legs.push_back(
          {leg.from, leg.to, leg.action, leg.start_tick, clock_, false});
      cycle->steps_done += 1;
      v.option_steps_done = cycle->steps_done;
      leg_opt.reset();
      v.status = VehicleStatus::kIdle;
      v.ticks_remaining = 0;
      if (cycle->steps_done < cycle->horizon)
        cycle->wants_continuation = true;
      else
        cycle->arrived = true;
    } else if (v.status == VehicleStatus::kEnroutePickup) {
      Request& r = requests_[static_cast<std::size_t>(cycle->serving_request)];
      leg_opt.reset();
      r.status = RequestStatus::kPickedUp;
      record_event(events, {clock_, EventKind::kPickup, v.id, r.id,
                            cells_.index_of(r.origin), 0.0});
      begin_serving(v, r, events);
    } else {  // occupied: delivery
      Request& r = requests_[static_cast<std::size_t>(cycle->serving_request)];
      const double pay =
          fare(cfg_.fare, r.wait_ticks,
               hex_distance(r.origin, r.destination) * cfg_.grid.pitch_m,
               travel_time(r.origin, r.destination, cfg_.grid));
      cycle->rewards.back() += cfg_.beta1 * pay;
      v.earnings += cfg_.beta1 * pay;
      reward_by_tick_[static_cast<std::size_t>(clock_)] += cfg_.beta1 * pay;
      r.status = RequestStatus::kCompleted;
      served_ += 1;
      record_event(events, {clock_, EventKind::kComplete, v.id, r.id,
                            cells_.index_of(r.destination), pay});
      leg_opt.reset();
      v.status = VehicleStatus::kIdle;
      v.ticks_remaining = 0;
      cycle->arrived = true;
    }
  }
}

void World::inject_requests(std::vector<Event>& events) {
  for (const auto& spawn : source_.spawns_at(clock_, demand_rng_)) {
    Request r;
    r.id = static_cast<int>(requests_.size());
    r.origin = spawn.origin;
    r.destination = spawn.destination;
    r.request_tick = clock_;
    requests_.push_back(r);
    record_event(events, {clock_, EventKind::kRequestOpen, -1, r.id,
                          cells_.index_of(r.origin), 0.0});
  }
}

void World::expire_requests(std::vector<Event>& events) {
  for (Request& r : requests_) {
    if (r.status != RequestStatus::kOpen) continue;
    r.wait_ticks = clock_ - r.request_tick;
    if (r.wait_ticks > cfg_.max_wait_ticks) {
      r.status = RequestStatus::kRejected;
      rejected_ += 1;
      record_event(events, {clock_, EventKind::kRequestExpire, -1, r.id,
                            cells_.index_of(r.origin), 0.0});
    }
  }
}

std::shared_ptr<const GlobalFrame> World::build_frame() const {
  auto frame = std::make_shared<GlobalFrame>();
  frame->tick = clock_;
  frame->idle.assign(static_cast<std::size_t>(cells_.count()), 0);
  frame->requests.assign(static_cast<std::size_t>(cells_.count()), 0);
  frame->busy.assign(static_cast<std::size_t>(cells_.count()), 0);
  for (const Vehicle& v : vehicles_) {
    const int c = cells_.index_of(v.location);
    if (v.status == VehicleStatus::kIdle || v.status == VehicleStatus::kCruising)
      frame->idle[static_cast<std::size_t>(c)] += 1;
    else if (v.status == VehicleStatus::kEnroutePickup ||
             v.status == VehicleStatus::kOccupied)
      frame->busy[static_cast<std::size_t>(c)] += 1;
  }
  for (const Request& r : requests_)
    if (r.status == RequestStatus::kOpen)
      frame->requests[static_cast<std::size_t>(cells_.index_of(r.origin))] += 1;
  return frame;
}

Observation World::make_observation(
    const std::shared_ptr<const GlobalFrame>& frame, int agent) const {
  Observation obs;
  obs.global = frame;
  obs.tick = frame->tick;
  obs.episode_ticks = cfg_.episode_ticks;
  obs.cell_index = cells_.index_of(vehicles_[static_cast<std::size_t>(agent)].location);
  obs.fleet_size = cfg_.fleet_size;
  return obs;
}

Observation World::observe(int agent) const {
  if (agent < 0 || agent >= cfg_.fleet_size)
    throw std::invalid_argument("observe: unknown agent");
  return make_observation(build_frame(), agent);
}

std::vector<int> World::decision_ready() const {
  std::vector<int> out;
  for (const Vehicle& v : vehicles_)
    if (v.status == VehicleStatus::kIdle &&
        !cycles_[static_cast<std::size_t>(v.id)] &&
        !legs_[static_cast<std::size_t>(v.id)])
      out.push_back(v.id);
  return out;
}

void World::start_relocation_leg(Vehicle& v, Action a) {
  LegState leg;
  leg.from = v.location;
  leg.to = apply_action(v.location, a, cfg_.grid);
  leg.action = a;
  leg.path = hex_line(leg.from, leg.to);
  leg.total = leg.from == leg.to ? 1 : travel_time(leg.from, leg.to, cfg_.grid);
  leg.start_tick = clock_;
  v.status = leg.from == leg.to ? VehicleStatus::kIdle : VehicleStatus::kCruising;
  v.ticks_remaining = leg.total;
  legs_[static_cast<std::size_t>(v.id)] = std::move(leg);
}

void World::start_cycles(const std::map<int, Decision>& assignments,
                         const DecideFn& decide, const OptionStepFn& option_step,
                         std::vector<Event>& events) {
  (void)events;
  // Continuations of multi-step options first.
  for (Vehicle& v : vehicles_) {
    auto& cycle = cycles_[static_cast<std::size_t>(v.id)];
    if (!cycle || !cycle->wants_continuation) continue;
    cycle->wants_continuation = false;
    if (!option_step)
      throw std::logic_error("option in progress but no option_step callback");
    const Action a =
        option_step(v.id, cycle->option, make_observation(current_frame_, v.id));
    start_relocation_leg(v, a);
  }
  // Fresh cycles: explicit assignments, then the decide callback.
  auto begin_cycle = [&](Vehicle& v, const Decision& d) {
    if (d.horizon < 1) throw std::invalid_argument("Decision: horizon must be >= 1");
    CycleState cycle;
    cycle.kind = CycleKind::kRelocation;
    cycle.option = d.option;
    cycle.horizon = d.horizon;
    cycle.start_tick = clock_;
    cycle.start_obs = make_observation(current_frame_, v.id);
    cycles_[static_cast<std::size_t>(v.id)] = std::move(cycle);
    v.active_option = d.option;
    v.option_steps_done = 0;
    start_relocation_leg(v, d.first_action);
  };
  for (const auto& [agent, decision] : assignments) {
    if (agent < 0 || agent >= cfg_.fleet_size)
      throw std::invalid_argument("assignment to unknown vehicle");
    Vehicle& v = vehicles_[static_cast<std::size_t>(agent)];
    if (v.status != VehicleStatus::kIdle ||
        cycles_[static_cast<std::size_t>(agent)] ||
        legs_[static_cast<std::size_t>(agent)])
      throw std::invalid_argument("assignment to non-idle vehicle");
    begin_cycle(v, decision);
  }
  if (decide) {
    for (Vehicle& v : vehicles_) {
      if (v.status != VehicleStatus::kIdle) continue;
      if (cycles_[static_cast<std::size_t>(v.id)] ||
          legs_[static_cast<std::size_t>(v.id)])
        continue;
      if (assignments.count(v.id)) continue;
      if (auto d = decide(v.id, make_observation(current_frame_, v.id)))
        begin_cycle(v, *d);
    }
  }
}

void World::begin_pickup(Vehicle& v, Request& r, std::vector<Event>& events) {
  auto& cycle = cycles_[static_cast<std::size_t>(v.id)];
  auto& leg_opt = legs_[static_cast<std::size_t>(v.id)];
  int carried_option = 0;
  if (cycle && cycle->kind == CycleKind::kRelocation) {
    carried_option = cycle->option;
    if (leg_opt) {
      // Interrupted mid-leg: keep the truncated step if any time elapsed;
      // otherwise the dispatch belongs to the step that brought the vehicle
      // here.
      if (leg_opt->elapsed > 0)
        cycle->legs.push_back({leg_opt->from, v.location, leg_opt->action,
                               leg_opt->start_tick, clock_, true});
      else if (!cycle->legs.empty())
        cycle->legs.back().matched_at_end = true;
      leg_opt.reset();
    } else if (!cycle->legs.empty()) {
      cycle->legs.back().matched_at_end = true;
    }
    if (clock_ > cycle->start_tick) {
      Transition tr;
      tr.agent = v.id;
      tr.option = cycle->option;
      tr.start = cycle->start_obs;
      tr.end = make_observation(current_frame_, v.id);
      tr.start_tick = cycle->start_tick;
      tr.end_tick = clock_;
      tr.rewards = std::move(cycle->rewards);
      tr.is_relocation = true;
      tr.matched_at_end = true;
      tr.legs = std::move(cycle->legs);
      pending_transitions_.push_back(std::move(tr));
    }
    cycle.reset();
  }
  CycleState serving;
  serving.kind = CycleKind::kServing;
  serving.option = carried_option;
  serving.start_tick = clock_;
  serving.start_obs = make_observation(current_frame_, v.id);
  serving.serving_request = r.id;
  cycle = std::move(serving);
  v.active_option = carried_option;

  r.status = RequestStatus::kAssigned;
  r.assigned_vehicle = v.id;
  const int eta = travel_time(v.location, r.origin, cfg_.grid);
  record_event(events, {clock_, EventKind::kAssign, v.id, r.id,
                        cells_.index_of(r.origin), static_cast<double>(eta)});
  if (eta == 0) {
    v.status = VehicleStatus::kEnroutePickup;
    r.status = RequestStatus::kPickedUp;
    record_event(events, {clock_, EventKind::kPickup, v.id, r.id,
                          cells_.index_of(r.origin), 0.0});
    begin_serving(v, r, events);
    return;
  }
  LegState leg;
  leg.from = v.location;
  leg.to = r.origin;
  leg.path = hex_line(leg.from, leg.to);
  leg.total = eta;
  leg.start_tick = clock_;
  v.status = VehicleStatus::kEnroutePickup;
  v.ticks_remaining = eta;
  legs_[static_cast<std::size_t>(v.id)] = std::move(leg);
}

void World::begin_serving(Vehicle& v, Request& r, std::vector<Event>& events) {
  (void)events;
  LegState leg;
  leg.from = r.origin;
  leg.to = r.destination;
  leg.path = hex_line(leg.from, leg.to);
  // Same-cell trips still occupy the vehicle for one tick.
  leg.total = std::max(1, travel_time(r.origin, r.destination, cfg_.grid));
  leg.start_tick = clock_;
  v.status = VehicleStatus::kOccupied;
  v.ticks_remaining = leg.total;
  legs_[static_cast<std::size_t>(v.id)] = std::move(leg);
}

void World::run_match(std::vector<Event>& events) {
  std::vector<int> open;
  for (const Request& r : requests_)
    if (r.status == RequestStatus::kOpen) open.push_back(r.id);
  std::sort(open.begin(), open.end(), [this](int a, int b) {
    const Request& ra = requests_[static_cast<std::size_t>(a)];
    const Request& rb = requests_[static_cast<std::size_t>(b)];
    if (ra.wait_ticks != rb.wait_ticks)
      return cfg_.longest_wait_priority ? ra.wait_ticks > rb.wait_ticks
                                        : ra.wait_ticks < rb.wait_ticks;
    return ra.id < rb.id;
  });
  std::vector<bool> used(vehicles_.size(), false);
  for (int rid : open) {
    Request& r = requests_[static_cast<std::size_t>(rid)];
    int best = -1, best_eta = 0;
    for (const Vehicle& v : vehicles_) {
      if (used[static_cast<std::size_t>(v.id)]) continue;
      if (v.status != VehicleStatus::kIdle && v.status != VehicleStatus::kCruising)
        continue;
      const int eta = travel_time(v.location, r.origin, cfg_.grid);
      if (!cfg_.unlimited_pickup_radius && eta > cfg_.max_pickup_eta) continue;
      if (best < 0 || eta < best_eta) {
        best = v.id;
        best_eta = eta;
      }
    }
    if (best < 0) continue;
    if (r.wait_ticks > cfg_.max_wait_ticks)
      throw std::logic_error("match: request waited past the limit");
    if (!cfg_.unlimited_pickup_radius && best_eta > cfg_.max_pickup_eta)
      throw std::logic_error("match: pickup ETA past the limit");
    used[static_cast<std::size_t>(best)] = true;
    begin_pickup(vehicles_[static_cast<std::size_t>(best)], r, events);
  }
}

void World::close_cycles(TickResult& result) {
  for (Transition& tr : pending_transitions_)
    result.transitions.push_back(std::move(tr));
  pending_transitions_.clear();
  for (Vehicle& v : vehicles_) {
    auto& cycle = cycles_[static_cast<std::size_t>(v.id)];
    if (!cycle || !cycle->arrived) continue;
    Transition tr;
    tr.agent = v.id;
    tr.option = cycle->option;
    tr.start = cycle->start_obs;
    tr.end = make_observation(current_frame_, v.id);
    tr.start_tick = cycle->start_tick;
    tr.end_tick = clock_;
    tr.rewards = std::move(cycle->rewards);
    tr.is_relocation = cycle->kind == CycleKind::kRelocation;
    tr.legs = std::move(cycle->legs);
    record_event(result.events,
                 {clock_, EventKind::kCycleClose, v.id, -1,
                  cells_.index_of(v.location), static_cast<double>(tr.option)});
    result.transitions.push_back(std::move(tr));
    cycle.reset();
    v.active_option = -1;
    v.option_steps_done = 0;
  }
}

TickResult World::tick(const std::map<int, Decision>& assignments,
                       const DecideFn& decide, const OptionStepFn& option_step) {
  if (done()) throw std::logic_error("tick: episode already finished");
  TickResult result;
  enter_vehicles(result.events);
  advance_legs(result.events);
  inject_requests(result.events);
  expire_requests(result.events);
  current_frame_ = build_frame();
  frames_.push_back(current_frame_);
  start_cycles(assignments, decide, option_step, result.events);
  run_match(result.events);
  close_cycles(result);
  clock_ += 1;
  if (done()) {
    // Force-close whatever is still open; these transitions are terminal.
    for (Vehicle& v : vehicles_) {
      auto& cycle = cycles_[static_cast<std::size_t>(v.id)];
      if (!cycle) continue;
      auto& leg_opt = legs_[static_cast<std::size_t>(v.id)];
      if (cycle->kind == CycleKind::kRelocation && leg_opt &&
          leg_opt->elapsed > 0)
        cycle->legs.push_back({leg_opt->from, v.location, leg_opt->action,
                               leg_opt->start_tick, clock_ - 1, false});
      leg_opt.reset();
      if (!cycle->rewards.empty()) {
        Transition tr;
        tr.agent = v.id;
        tr.option = cycle->option;
        tr.start = cycle->start_obs;
        tr.end = make_observation(current_frame_, v.id);
        tr.start_tick = cycle->start_tick;
        tr.end_tick = clock_ - 1;  // the last simulated tick
        tr.rewards = std::move(cycle->rewards);
        tr.is_relocation = cycle->kind == CycleKind::kRelocation;
        tr.done = true;
        tr.legs = std::move(cycle->legs);
        result.transitions.push_back(std::move(tr));
      }
      cycle.reset();
    }
  }
  return result;
}

}  // namespace dropfleet::sim
