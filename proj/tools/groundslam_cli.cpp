#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "groundslam/data.hpp"
#include "groundslam/error.hpp"
#include "groundslam/eval.hpp"
#include "groundslam/pipeline.hpp"

namespace fs = std::filesystem;
namespace gs = groundslam;
using nlohmann::json;

namespace {

// Input is either a dataset directory or a seed for an in-memory world.
struct Source {
  std::string dataset;
  std::optional<std::uint64_t> seed;
  int sessions = 5;
  int poses = 50;

  void add_to(CLI::App* app) {
    auto* d = app->add_option("--dataset", dataset, "dataset directory (session_<k>/poses.csv)");
    auto* s = app->add_option("--seed", seed, "synthesize the default world with this seed");
    d->excludes(s);
    app->add_option("--sessions", sessions, "sessions when synthesizing")->check(CLI::PositiveNumber);
    app->add_option("--poses", poses, "poses per session when synthesizing")
        ->check(CLI::PositiveNumber);
  }
};

gs::WorldParams world_params(int sessions) {
  gs::WorldParams params;
  if (sessions != static_cast<int>(params.coverage_schedule.size())) {
    params.coverage_schedule.clear();
    for (int s = 0; s < sessions; ++s) {
      params.coverage_schedule.push_back(sessions == 1 ? 0.0 : 0.8 * s / (sessions - 1));
    }
  }
  return params;
}

gs::CameraModel dataset_camera(const fs::path& root) {
  const fs::path cfg = root / "camera.cfg";
  return fs::exists(cfg) ? gs::read_camera(cfg) : gs::default_synthetic_camera();
}

struct Loaded {
  gs::MultiSessionData data;
  gs::CameraModel cam;
};

Loaded load(const Source& src) {
  if (src.seed) {
    gs::CameraModel cam = gs::default_synthetic_camera();
    const gs::SyntheticWorld world = gs::generate_world(*src.seed, world_params(src.sessions));
    gs::PlanParams plan_params;
    plan_params.sessions = src.sessions;
    plan_params.poses_per_session = src.poses;
    const gs::TrajectoryPlan plan = gs::generate_plan(world, cam, *src.seed, plan_params);
    return {gs::synthesize(world, cam, plan), cam};
  }
  if (src.dataset.empty()) throw gs::Error(gs::ErrorCode::kConfig, "need --dataset or --seed");
  return {gs::load_multi_session(src.dataset), dataset_camera(src.dataset)};
}

gs::PipelineConfig load_config(const std::string& path, const std::string& strategy) {
  gs::PipelineConfig cfg = path.empty() ? gs::PipelineConfig{} : gs::PipelineConfig::from_file(path);
  if (!strategy.empty()) cfg.strategy = gs::parse_strategy(strategy);
  cfg.validate();
  return cfg;
}

const std::vector<std::string> kAllVariants = {"original_many", "original",  "odometry_only",
                                               "kld_color",     "kld_gray",  "visual_overlap",
                                               "jih"};

std::vector<std::string> split_list(const std::string& s) {
  if (s == "all") return kAllVariants;
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

gs::VariantRun run_named(const std::string& name, const Loaded& in, gs::PipelineConfig cfg) {
  if (name == "original_many") return gs::run_original_many(in.data, cfg, in.cam);
  cfg.strategy = gs::parse_strategy(name);
  return gs::run_variant(in.data, cfg, in.cam);
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw gs::Error(gs::ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

template <typename F>
void write_with(const fs::path& path, F&& body) {
  std::ostringstream ss;
  body(ss);
  write_file(path, ss.str());
}

json rmse_json(const gs::Rmse& r) {
  return {{"position_m", r.position_m}, {"orientation_deg", r.orientation_deg}};
}

json confusion_json(const gs::Confusion& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

json quartiles_json(const gs::Quartiles& q) {
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  return {{"count", q.count}, {"q1", num(q.q1)}, {"median", num(q.median)}, {"q3", num(q.q3)}};
}

json matrix_json(const Eigen::MatrixXi& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

// Everything eval and compare report for one trajectory + decision set.
json evaluate(const gs::SessionPoses& estimated, const std::vector<gs::LoopDecisionRecord>* decisions,
              const gs::SessionPoses& truth, const gs::CameraModel& cam) {
  if (estimated.size() != truth.size()) {
    throw gs::Error(gs::ErrorCode::kEval, "trajectory has " + std::to_string(estimated.size()) +
                                              " sessions, truth has " +
                                              std::to_string(truth.size()));
  }
  json j;
  j["rmse"] = rmse_json(gs::rmse(gs::flatten(estimated), gs::flatten(truth)));
  json per = json::array();
  for (std::size_t s = 0; s < truth.size(); ++s) per.push_back(rmse_json(gs::rmse(estimated[s], truth[s])));
  j["rmse_per_session"] = per;
  if (decisions) {
    const auto conf = gs::loop_confusion(*decisions, truth, cam);
    const auto split = gs::inclusion_error_split(*decisions, truth, cam);
    const auto matrix = gs::session_loop_matrix(*decisions, static_cast<int>(truth.size()));
    j["confusion"] = confusion_json(conf);
    j["kept_error_m"] = quartiles_json(split.kept_stats);
    j["excluded_error_m"] = quartiles_json(split.excluded_stats);
    j["session_loop_matrix"] = matrix_json(matrix);
    j["loops_by_session_gap"] = gs::loops_by_session_gap(matrix);
  }
  return j;
}

std::string matrix_csv(const Eigen::MatrixXi& m) {
  std::ostringstream ss;
  ss << "session";
  for (int j = 0; j < m.cols(); ++j) ss << ",s" << j;
  ss << '\n';
  for (int i = 0; i < m.rows(); ++i) {
    ss << i;
    for (int j = 0; j < m.cols(); ++j) ss << ',' << m(i, j);
    ss << '\n';
  }
  return ss.str();
}

// --- subcommands -------------------------------------------------------------

struct RunArgs {
  Source src;
  std::string config, strategy, out;
};

void cmd_run(const RunArgs& a) {
  const Loaded in = load(a.src);
  const gs::PipelineConfig cfg = load_config(a.config, a.strategy);
  const gs::VariantRun run = gs::run_variant(in.data, cfg, in.cam);
  const fs::path out = a.out;
  write_with(out / "trajectories.csv", [&](std::ostream& o) { gs::write_trajectories_csv(o, run.estimated); });
  write_with(out / "decisions.csv", [&](std::ostream& o) { gs::write_decisions_csv(o, run.decisions); });
  write_with(out / "observations.csv",
             [&](std::ostream& o) { gs::write_observations_csv(o, run.observations); });
  write_with(out / "graph.g2o", [&](std::ostream& o) { run.graph.write_g2o(o); });
  write_file(out / "config.cfg", cfg.to_text());
  std::size_t accepted = std::count_if(run.decisions.begin(), run.decisions.end(),
                                       [](const auto& d) { return d.accepted; });
  std::cout << run.name << ": " << in.data.observation_count() << " observations, "
            << run.decisions.size() << " candidates, " << accepted << " loops accepted\n";
}

struct SynthArgs {
  std::uint64_t seed = 1;
  int sessions = 5;
  int poses = 50;
  double size = 4.0;
  std::string out;
};

void cmd_synth(const SynthArgs& a) {
  gs::WorldParams params = world_params(a.sessions);
  params.size_m = a.size;
  const gs::CameraModel cam = gs::default_synthetic_camera();
  const gs::SyntheticWorld world = gs::generate_world(a.seed, params);
  gs::PlanParams plan_params;
  plan_params.sessions = a.sessions;
  plan_params.poses_per_session = a.poses;
  const gs::TrajectoryPlan plan = gs::generate_plan(world, cam, a.seed, plan_params);
  gs::generate_sessions(world, cam, plan, a.out);
  std::cout << "wrote " << a.sessions << " sessions x " << a.poses << " poses to " << a.out
            << " (world checksum " << std::hex << world.checksum() << std::dec << ")\n";
}

struct EvalArgs {
  std::string trajectories, decisions, dataset, out;
};

void cmd_eval(const EvalArgs& a) {
  gs::MultiSessionData truth_only;
  for (const gs::SessionRecord& rec : gs::load_dataset(a.dataset)) {
    std::vector<gs::Pose2> poses;
    for (const gs::Frame& f : rec.frames) poses.push_back(f.pose);
    truth_only.truth.push_back(std::move(poses));
  }
  const gs::CameraModel cam = dataset_camera(a.dataset);
  const gs::SessionPoses estimated = gs::read_trajectories_csv(a.trajectories);
  std::optional<std::vector<gs::LoopDecisionRecord>> decisions;
  if (!a.decisions.empty()) decisions = gs::read_decisions_csv(a.decisions);
  const json report = evaluate(estimated, decisions ? &*decisions : nullptr, truth_only.truth, cam);
  const fs::path out = a.out;
  write_file(out / "report.json", report.dump(2) + "\n");
  if (decisions) {
    const auto matrix = gs::session_loop_matrix(*decisions, static_cast<int>(truth_only.truth.size()));
    write_file(out / "session_matrix.csv", matrix_csv(matrix));
    const auto split = gs::inclusion_error_split(*decisions, truth_only.truth, cam);
    write_with(out / "error_split.csv", [&](std::ostream& o) {
      o << "group,error_m\n" << std::setprecision(9);
      for (double e : split.kept) o << "kept," << e << '\n';
      for (double e : split.excluded) o << "excluded," << e << '\n';
    });
  }
  std::cout << report.dump(2) << '\n';
}

struct HeatmapArgs {
  std::string run_dir, dataset, out;
  bool truth_poses = false;
};

void cmd_heatmap(const HeatmapArgs& a) {
  const fs::path run_dir = a.run_dir;
  const auto observations = gs::read_observations_csv(run_dir / "observations.csv");
  gs::SessionPoses poses;
  gs::CameraModel cam = gs::default_synthetic_camera();
  if (!a.dataset.empty()) cam = dataset_camera(a.dataset);
  if (a.truth_poses) {
    if (a.dataset.empty()) throw gs::Error(gs::ErrorCode::kConfig, "--truth needs --dataset");
    for (const gs::SessionRecord& rec : gs::load_dataset(a.dataset)) {
      std::vector<gs::Pose2> p;
      for (const gs::Frame& f : rec.frames) p.push_back(f.pose);
      poses.push_back(std::move(p));
    }
  } else {
    poses = gs::read_trajectories_csv(run_dir / "trajectories.csv");
  }
  std::vector<double> scores;
  std::vector<gs::Pose2> at;
  for (const gs::ObservationRecord& r : observations) {
    if (std::isnan(r.kld)) continue;
    scores.push_back(r.kld);
    at.push_back(gs::truth_pose(poses, r.node));
  }
  if (scores.empty()) {
    throw gs::Error(gs::ErrorCode::kEval, "no KLD scores in the run (use a kld_* strategy)");
  }
  const auto points = gs::wear_heatmap(scores, at, cam);
  const fs::path out = a.out;
  write_with(out / "heatmap.csv", [&](std::ostream& o) { gs::write_heatmap_csv(o, points); });
  write_with(out / "heatmap.svg", [&](std::ostream& o) { gs::write_heatmap_svg(o, points); });
  std::cout << "heat map with " << points.size() << " points written to " << a.out << '\n';
}

struct TimingArgs {
  Source src;
  std::string config, variants = "original,kld_color", out;
  int instances = 10;
};

void cmd_timing(const TimingArgs& a) {
  const Loaded in = load(a.src);
  const gs::PipelineConfig base = load_config(a.config, "");
  std::vector<std::string> names = split_list(a.variants);
  std::erase(names, "original_many");
  std::vector<gs::TimingProfile> profiles;
  json summary = json::object();
  for (const std::string& name : names) {
    gs::PipelineConfig cfg = base;
    cfg.strategy = gs::parse_strategy(name);
    profiles.push_back(gs::timing_profile(in.data, cfg, in.cam, a.instances));
    const auto& p = profiles.back();
    double mean = 0.0;
    for (double v : p.mean_seconds) mean += v;
    mean /= static_cast<double>(std::max<std::size_t>(1, p.mean_seconds.size()));
    json entry = {{"mean_seconds_per_observation", mean}};
    if (gs::uses_kld(cfg.strategy)) {
      // Session-0 observations do no KLD scoring.
      const std::size_t skip = in.data.images.empty() ? 0 : in.data.images[0].size();
      std::vector<double> kld(p.kld_seconds.begin() + static_cast<std::ptrdiff_t>(
                                                          std::min(skip, p.kld_seconds.size())),
                              p.kld_seconds.end());
      const gs::SlopeTest t = gs::regression_slope_test(kld);
      entry["kld_step_slope"] = {{"slope", t.slope}, {"t", t.t}, {"p_value", t.p_value}};
    }
    summary[name] = entry;
  }
  write_with(a.out, [&](std::ostream& o) { gs::write_timing_csv(o, names, profiles); });
  std::cout << summary.dump(2) << '\n';
}

struct CompareArgs {
  Source src;
  std::string config, variants = "all", out;
};

void cmd_compare(const CompareArgs& a) {
  const Loaded in = load(a.src);
  const gs::PipelineConfig base = load_config(a.config, "");
  json report = json::object();
  std::ostringstream table;
  table << std::left << std::setw(16) << "variant" << std::right << std::setw(12) << "pos_rmse_m"
        << std::setw(12) << "ori_rmse_deg" << std::setw(8) << "TP" << std::setw(8) << "FP"
        << std::setw(8) << "TN" << std::setw(8) << "FN" << '\n';
  for (const std::string& name : split_list(a.variants)) {
    const gs::VariantRun run = run_named(name, in, base);
    const json j = evaluate(run.estimated, &run.decisions, in.data.truth, in.cam);
    report[name] = j;
    const auto& c = j["confusion"];
    table << std::left << std::setw(16) << name << std::right << std::fixed << std::setprecision(4)
          << std::setw(12) << j["rmse"]["position_m"].get<double>() << std::setprecision(3)
          << std::setw(12) << j["rmse"]["orientation_deg"].get<double>() << std::setw(8)
          << c["tp"].get<std::size_t>() << std::setw(8) << c["fp"].get<std::size_t>()
          << std::setw(8) << c["tn"].get<std::size_t>() << std::setw(8)
          << c["fn"].get<std::size_t>() << '\n';
    if (!a.out.empty()) {
      const fs::path dir = fs::path(a.out) / name;
      write_with(dir / "trajectories.csv", [&](std::ostream& o) { gs::write_trajectories_csv(o, run.estimated); });
      write_with(dir / "decisions.csv", [&](std::ostream& o) { gs::write_decisions_csv(o, run.decisions); });
      write_with(dir / "observations.csv",
                 [&](std::ostream& o) { gs::write_observations_csv(o, run.observations); });
    }
  }
  if (!a.out.empty()) {
    write_file(fs::path(a.out) / "summary.json", report.dump(2) + "\n");
    write_file(fs::path(a.out) / "summary.txt", table.str());
  }
  std::cout << table.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-session ground-texture SLAM: run, synthesize and evaluate"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "run one strategy over a dataset");
  run_args.src.add_to(run);
  run->add_option("--config", run_args.config, "pipeline config file")->check(CLI::ExistingFile);
  run->add_option("--strategy", run_args.strategy, "override the config strategy");
  run->add_option("--out", run_args.out, "output directory")->required();

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "write a synthetic multi-session dataset");
  synth->add_option("--seed", synth_args.seed, "world and trajectory seed");
  synth->add_option("--sessions", synth_args.sessions)->check(CLI::PositiveNumber);
  synth->add_option("--poses", synth_args.poses, "poses per session")->check(CLI::PositiveNumber);
  synth->add_option("--size", synth_args.size, "world edge length, metres")->check(CLI::PositiveNumber);
  synth->add_option("--out", synth_args.out, "dataset directory")->required();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "score trajectories and decisions against ground truth");
  eval->add_option("--trajectories", eval_args.trajectories)->required()->check(CLI::ExistingFile);
  eval->add_option("--decisions", eval_args.decisions)->check(CLI::ExistingFile);
  eval->add_option("--dataset", eval_args.dataset, "dataset with the true poses")->required();
  eval->add_option("--out", eval_args.out, "output directory")->required();

  HeatmapArgs heat_args;
  auto* heat = app.add_subcommand("heatmap", "wear heat map from a run's KLD scores");
  heat->add_option("--run", heat_args.run_dir, "output directory of `run`")->required();
  heat->add_option("--dataset", heat_args.dataset, "dataset (camera and true poses)");
  heat->add_flag("--truth", heat_args.truth_poses, "place points at the true poses");
  heat->add_option("--out", heat_args.out, "output directory")->required();

  TimingArgs timing_args;
  auto* timing = app.add_subcommand("timing", "ten-instance per-observation timing");
  timing_args.src.add_to(timing);
  timing->add_option("--config", timing_args.config)->check(CLI::ExistingFile);
  timing->add_option("--variants", timing_args.variants, "comma-separated strategies");
  timing->add_option("--instances", timing_args.instances)->check(CLI::PositiveNumber);
  timing->add_option("--out", timing_args.out, "CSV file")->required();

  CompareArgs cmp_args;
  auto* cmp = app.add_subcommand("compare", "run several variants and tabulate accuracy");
  cmp_args.src.add_to(cmp);
  cmp->add_option("--config", cmp_args.config)->check(CLI::ExistingFile);
  cmp->add_option("--variants", cmp_args.variants, "comma-separated list or `all`");
  cmp->add_option("--out", cmp_args.out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) cmd_run(run_args);
    if (*synth) cmd_synth(synth_args);
    if (*eval) cmd_eval(eval_args);
    if (*heat) cmd_heatmap(heat_args);
    if (*timing) cmd_timing(timing_args);
    if (*cmp) cmd_compare(cmp_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
