// Command-line front end: simulate rule policies, train and evaluate learned
// relocation policies, inspect embeddings, and assemble comparison reports.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dropfleet/config.hpp"
#include "dropfleet/harness.hpp"
#include "dropfleet/laplace.hpp"
#include "dropfleet/policy.hpp"
#include "dropfleet/terg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dropfleet;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> model;
};

config::RunConfig load_config(const CommonArgs& args) {
  config::RunConfig cfg = args.config_path.empty()
                              ? config::RunConfig{}
                              : config::load_run_config(args.config_path);
  if (args.seed) {
    cfg.seed = *args.seed;
    cfg.training.seed = *args.seed;
  }
  if (args.model) cfg.model = policy::parse_model_kind(*args.model);
  return cfg;
}

void write_run_meta(const config::RunConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  json j;
  j["model"] = policy::to_string(cfg.model);
  j["seed"] = cfg.seed;
  std::ofstream out(fs::path(out_dir) / "run.json");
  out << j.dump(2) << '\n';
}

void write_load_report(const demand::LoadReport& report, const std::string& out_dir) {
  json j = {{"accepted", report.accepted},
            {"clamped", report.clamped},
            {"rejected", report.rejected}};
  std::ofstream out(fs::path(out_dir) / "load_report.json");
  out << j.dump(2) << '\n';
}

/// Run episodes with a rule policy, logging events of the first one.
int run_simulate(const CommonArgs& args, int episodes) {
  config::RunConfig cfg = load_config(args);
  if (policy::is_learned(cfg.model))
    throw std::runtime_error("simulate runs rule policies; use train/evaluate for " +
                             std::string(policy::to_string(cfg.model)));
  demand::LoadReport report;
  const demand::DemandSource source = config::make_demand_source(cfg, &report);
  fs::create_directories(args.out_dir);
  write_run_meta(cfg, args.out_dir);
  if (cfg.demand.mode != config::DemandMode::kSynthetic)
    write_load_report(report, args.out_dir);

  std::ofstream event_out(fs::path(args.out_dir) / "events.jsonl");
  std::vector<harness::EpisodeStats> stats;
  for (int ep = 0; ep < episodes; ++ep) {
    sim::World world(cfg.sim, source, mix_seed(cfg.seed, static_cast<std::uint64_t>(ep)));
    Rng rng(mix_seed(cfg.seed, 0xBA5Eull + static_cast<std::uint64_t>(ep)));
    policy::DeciderBundle bundle = policy::make_rule_decider(cfg.model, rng);
    while (!world.done()) {
      sim::TickResult r = world.tick({}, bundle.decide, bundle.option_step);
      if (ep == 0) harness::write_event_log(r.events, event_out);
    }
    stats.push_back(harness::episode_stats(world));
    if (ep == 0) {
      std::ofstream hash_out(fs::path(args.out_dir) / "event_hash.txt");
      hash_out << std::hex << world.event_hash() << '\n';
      std::vector<int> ticks;
      for (int t = 0; t < cfg.sim.episode_ticks; t += cfg.sim.episode_ticks / 8)
        ticks.push_back(t);
      const harness::GapGrid grid = harness::gap_grid(world.frames(), ticks);
      std::ofstream gap_out(fs::path(args.out_dir) / "gap_grid.csv");
      harness::dump_gap_csv(grid, world.cells(), gap_out);
    }
  }
  const harness::Metrics metrics =
      harness::aggregate_metrics(stats, harness::default_periods());
  harness::write_metrics_json(metrics, (fs::path(args.out_dir) / "metrics.json").string());
  std::cout << "simulate: " << policy::to_string(cfg.model) << " served "
            << metrics.served_rate_pct << "% of " << metrics.arrivals
            << " requests\n";
  return 0;
}

int run_train(const CommonArgs& args) {
  config::RunConfig cfg = load_config(args);
  if (!policy::is_learned(cfg.model))
    throw std::runtime_error("train expects a learned model kind");
  const demand::DemandSource source = config::make_demand_source(cfg);
  write_run_meta(cfg, args.out_dir);
  policy::TrainedPolicy trained =
      policy::train_high_level(cfg.sim, source, cfg.model, cfg.training);
  policy::save_policy(trained, (fs::path(args.out_dir) / "checkpoint").string());
  {
    std::ofstream log_out(fs::path(args.out_dir) / "training_log.csv");
    harness::write_training_log_csv(trained.log, log_out);
    std::ofstream graph_out(fs::path(args.out_dir) / "terg.csv");
    trained.graph.dump_csv(graph_out);
  }
  const harness::Metrics metrics =
      harness::evaluate(&trained, cfg.model, cfg.sim, source,
                        cfg.evaluation.days, cfg.evaluation.seeds);
  harness::write_metrics_json(metrics, (fs::path(args.out_dir) / "metrics.json").string());
  std::cout << "train: " << policy::to_string(cfg.model) << " options "
            << trained.options.size() << " served " << metrics.served_rate_pct
            << "%\n";
  return 0;
}

int run_evaluate(const CommonArgs& args, const std::string& checkpoint) {
  config::RunConfig cfg = load_config(args);
  const demand::DemandSource source = config::make_demand_source(cfg);
  write_run_meta(cfg, args.out_dir);
  harness::Metrics metrics;
  if (!checkpoint.empty()) {
    const policy::TrainedPolicy trained = policy::load_policy(checkpoint);
    metrics = harness::evaluate(&trained, trained.kind, cfg.sim, source,
                                cfg.evaluation.days, cfg.evaluation.seeds);
  } else if (policy::is_learned(cfg.model)) {
    throw std::runtime_error("evaluate needs --checkpoint for learned models");
  } else {
    metrics = harness::evaluate(nullptr, cfg.model, cfg.sim, source,
                                cfg.evaluation.days, cfg.evaluation.seeds);
  }
  harness::write_metrics_json(metrics, (fs::path(args.out_dir) / "metrics.json").string());
  std::cout << "evaluate: served " << metrics.served_rate_pct << "% rejection "
            << metrics.periods.at("overall").rejection_rate_pct << "%\n";
  return 0;
}

/// Record a TERG under the configured rule policy, train the neural
/// embedding on it, and dump both representations.
int run_embed(const CommonArgs& args, int episodes) {
  config::RunConfig cfg = load_config(args);
  const demand::DemandSource source = config::make_demand_source(cfg);
  write_run_meta(cfg, args.out_dir);
  const CellIndexer cells(cfg.sim.grid);
  const int input_dim = sim::Observation::feature_dim(cells.count());

  terg::RelocationGraph graph(cfg.training.terg_bucket_ticks);
  std::vector<opt::LegRecord> legs;
  const policy::ModelKind rule =
      policy::is_learned(cfg.model) ? policy::ModelKind::kRandom : cfg.model;
  for (int ep = 0; ep < episodes; ++ep) {
    sim::World world(cfg.sim, source, mix_seed(cfg.seed, 0x3E0ULL + ep));
    Rng rng(mix_seed(cfg.seed, 0x3E1ULL + ep));
    policy::DeciderBundle bundle = policy::make_rule_decider(rule, rng);
    while (!world.done()) {
      sim::TickResult result = world.tick({}, bundle.decide, bundle.option_step);
      for (const sim::Transition& tr : result.transitions) {
        if (!tr.is_relocation) continue;
        graph.record_transition(tr);
        for (const sim::Leg& leg : tr.legs) {
          opt::LegRecord rec;
          rec.from = {world.frames().at(leg.start_tick), leg.start_tick,
                      cfg.sim.episode_ticks, cells.index_of(leg.from),
                      cfg.sim.fleet_size};
          rec.to = {world.frames().at(leg.end_tick), leg.end_tick,
                    cfg.sim.episode_ticks, cells.index_of(leg.to),
                    cfg.sim.fleet_size};
          rec.action = leg.action;
          rec.matched = leg.matched_at_end;
          legs.push_back(std::move(rec));
        }
      }
    }
  }
  if (legs.empty()) throw std::runtime_error("embed: no relocation data recorded");

  laplace::PairDataset data;
  for (const opt::LegRecord& leg : legs) {
    const int a = static_cast<int>(data.states.size());
    data.states.push_back(leg.from.features());
    data.states.push_back(leg.to.features());
    data.connected.emplace_back(a, a + 1);
  }
  laplace::EmbedConfig embed_cfg = cfg.training.option_gen.embed;
  embed_cfg.seed = mix_seed(cfg.seed, 0x3E2ULL);
  embed_cfg.batch_size =
      std::min<int>(embed_cfg.batch_size, static_cast<int>(data.connected.size()));
  const laplace::TrainedEmbedding trained =
      laplace::train_embedding(data, input_dim, embed_cfg);

  {
    std::ofstream graph_out(fs::path(args.out_dir) / "terg.csv");
    graph.dump_csv(graph_out);
  }
  // Canonical node features: empty global channels, bucket midpoint time.
  auto node_features = [&](int node) {
    const terg::TergNode& n = graph.nodes()[static_cast<std::size_t>(node)];
    sim::Observation obs;
    auto frame = std::make_shared<sim::GlobalFrame>();
    frame->idle.assign(static_cast<std::size_t>(cells.count()), 0);
    frame->requests.assign(static_cast<std::size_t>(cells.count()), 0);
    frame->busy.assign(static_cast<std::size_t>(cells.count()), 0);
    obs.global = frame;
    obs.tick = n.bucket * graph.bucket_width() + graph.bucket_width() / 2;
    obs.episode_ticks = cfg.sim.episode_ticks;
    obs.cell_index = cells.index_of(n.cell);
    obs.fleet_size = cfg.sim.fleet_size;
    return obs.features();
  };
  {
    std::ofstream norm_out(fs::path(args.out_dir) / "embedding_phi.csv");
    norm_out << "cell_q,cell_r,bucket,norm\n";
    for (int i = 0; i < graph.node_count(); ++i) {
      const terg::TergNode& n = graph.nodes()[static_cast<std::size_t>(i)];
      const std::vector<double> f = trained.phi.embed(node_features(i));
      double norm = 0;
      for (double x : f) norm += x * x;
      norm_out << n.cell.q << ',' << n.cell.r << ',' << n.bucket << ','
               << std::sqrt(norm) << '\n';
    }
  }
  json summary;
  summary["nodes"] = graph.node_count();
  summary["legs"] = legs.size();
  if (graph.node_count() <= 400 && graph.node_count() > trained.phi.embed_dim + 1) {
    const terg::Embedding exact = terg::exact_embedding(graph, trained.phi.embed_dim);
    std::ofstream exact_out(fs::path(args.out_dir) / "embedding_exact.csv");
    terg::dump_embedding_csv(graph, exact, exact_out);
    const laplace::ExactComparison comparison =
        laplace::compare_exact(trained.phi, node_features, graph);
    summary["rank_correlation"] = comparison.rank_correlation;
    summary["degenerate"] = comparison.degenerate;
  }
  std::ofstream summary_out(fs::path(args.out_dir) / "embed_summary.json");
  summary_out << summary.dump(2) << '\n';
  std::cout << "embed: " << graph.node_count() << " nodes, " << legs.size()
            << " relocation steps\n";
  return 0;
}

int run_dithering(const CommonArgs& args, int max_ring, int trials) {
  config::RunConfig cfg = load_config(args);
  GridSpec grid = cfg.sim.grid;
  if (grid.radius < max_ring) grid.radius = max_ring;
  write_run_meta(cfg, args.out_dir);
  Rng rng(mix_seed(cfg.seed, 0xD17ULL));
  const std::vector<double> curve = harness::dithering_curve(
      harness::uniform_walk(), grid, {0, 0}, max_ring, trials, rng);
  std::ofstream out(fs::path(args.out_dir) / "dithering.csv");
  out << "ring,probability\n";
  for (std::size_t n = 0; n < curve.size(); ++n)
    out << (n + 1) << ',' << curve[n] << '\n';
  std::cout << "dithering:";
  for (double p : curve) std::cout << ' ' << p;
  std::cout << '\n';
  return 0;
}

int run_compare(const std::vector<std::string>& runs, const std::string& out_dir) {
  const harness::CompareReport report = harness::compare(runs);
  fs::create_directories(out_dir);
  {
    std::ofstream md(fs::path(out_dir) / "compare.md");
    md << report.markdown;
    std::ofstream csv(fs::path(out_dir) / "compare.csv");
    csv << report.csv;
  }
  std::cout << report.markdown;
  if (!report.missing.empty()) {
    std::cerr << json({{"error", "missing runs"}, {"runs", report.missing}}).dump()
              << '\n';
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hexagonal-grid ride-hailing relocation laboratory"};
  app.require_subcommand(1);

  CommonArgs args;
  int episodes = 1;
  int max_ring = 6;
  int trials = 100000;
  std::string checkpoint;
  std::vector<std::string> runs;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", args.config_path, "run config JSON");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "override the config seed");
    cmd->add_option("--model", args.model, "override the config model kind");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "run a rule policy");
  add_common(simulate);
  simulate->add_option("--episodes", episodes, "episodes to run");

  CLI::App* train = app.add_subcommand("train", "train a relocation policy");
  add_common(train);

  CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a policy");
  add_common(evaluate);
  evaluate->add_option("--checkpoint", checkpoint, "trained policy directory");

  CLI::App* embed = app.add_subcommand("embed", "record a TERG and train the embedding");
  add_common(embed);
  embed->add_option("--episodes", episodes, "episodes to record");

  CLI::App* diag = app.add_subcommand("diag", "diagnostics");
  CLI::App* dithering = diag->add_subcommand("dithering", "ring-reach probabilities");
  add_common(dithering);
  dithering->add_option("--rings", max_ring, "largest ring");
  dithering->add_option("--trials", trials, "Monte Carlo trials");

  CLI::App* report = app.add_subcommand("report", "reports");
  CLI::App* compare = report->add_subcommand("compare", "side-by-side run table");
  compare->add_option("--runs", runs, "run directories")->required();
  compare->add_option("--out", args.out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return run_simulate(args, episodes);
    if (train->parsed()) return run_train(args);
    if (evaluate->parsed()) return run_evaluate(args, checkpoint);
    if (embed->parsed()) return run_embed(args, episodes);
    if (diag->parsed() && dithering->parsed()) return run_dithering(args, max_ring, trials);
    if (report->parsed() && compare->parsed()) return run_compare(runs, args.out_dir);
    std::cerr << json({{"error", "no subcommand"}}).dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json({{"error", e.what()}}).dump() << '\n';
    return 1;
  }
}
