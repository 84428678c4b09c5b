#include "groundslam/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "groundslam/error.hpp"

namespace groundslam {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

Rmse rmse(std::span<const Pose2> estimated, std::span<const Pose2> truth) {
  if (estimated.size() != truth.size()) {
    throw Error(ErrorCode::kEval, "trajectory lengths differ: " + std::to_string(estimated.size()) +
                                      " vs " + std::to_string(truth.size()));
  }
  if (estimated.empty()) throw Error(ErrorCode::kEval, "empty trajectory");
  double pos = 0.0;
  double yaw = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    pos += (estimated[i].translation() - truth[i].translation()).squaredNorm();
    const double dyaw = wrap_angle(estimated[i].yaw - truth[i].yaw) * 180.0 / std::numbers::pi;
    yaw += dyaw * dyaw;
  }
  const double n = static_cast<double>(truth.size());
  return {std::sqrt(pos / n), std::sqrt(yaw / n)};
}

bool is_true_loop(const Pose2& a, const Pose2& b, const CameraModel& cam, double min_area) {
  return convex_intersection_area(fov_quad(cam, a), fov_quad(cam, b)) > min_area;
}

const Pose2& truth_pose(const SessionPoses& truth, const NodeId& node) {
  if (node.session < 0 || node.session >= static_cast<int>(truth.size()) || node.index < 0 ||
      node.index >= static_cast<int>(truth[static_cast<std::size_t>(node.session)].size())) {
    throw Error(ErrorCode::kEval, "no ground truth for node (" + std::to_string(node.session) + ", " +
                                      std::to_string(node.index) + ")");
  }
  return truth[static_cast<std::size_t>(node.session)][static_cast<std::size_t>(node.index)];
}

Confusion loop_confusion(std::span<const LoopDecisionRecord> records, const SessionPoses& truth,
                         const CameraModel& cam, double min_area) {
  Confusion c;
  for (const LoopDecisionRecord& r : records) {
    const bool real = is_true_loop(truth_pose(truth, r.current), truth_pose(truth, r.candidate),
                                   cam, min_area);
    if (r.accepted) {
      ++(real ? c.tp : c.fp);
    } else {
      ++(real ? c.fn : c.tn);
    }
  }
  return c;
}

Quartiles quartiles(std::vector<double> values) {
  Quartiles q;
  q.count = values.size();
  if (values.empty()) return q;
  std::sort(values.begin(), values.end());
  // Linear interpolation between order statistics.
  auto at = [&values](double p) {
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  q.q1 = at(0.25);
  q.median = at(0.5);
  q.q3 = at(0.75);
  return q;
}

ErrorSplit inclusion_error_split(std::span<const LoopDecisionRecord> records,
                                 const SessionPoses& truth, const CameraModel& cam) {
  ErrorSplit split;
  for (const LoopDecisionRecord& r : records) {
    if (!r.relative) continue;
    const Pose2& cur = truth_pose(truth, r.current);
    const Pose2& cand = truth_pose(truth, r.candidate);
    if (!is_true_loop(cur, cand, cam)) continue;
    const Pose2 expected = cand.inverse() * cur;
    const double err = (r.relative->translation() - expected.translation()).norm();
    (r.accepted ? split.kept : split.excluded).push_back(err);
  }
  split.kept_stats = quartiles(split.kept);
  split.excluded_stats = quartiles(split.excluded);
  return split;
}

Eigen::MatrixXi session_loop_matrix(std::span<const LoopDecisionRecord> records, int sessions) {
  Eigen::MatrixXi m = Eigen::MatrixXi::Zero(sessions, sessions);
  for (const LoopDecisionRecord& r : records) {
    if (!r.accepted) continue;
    const int k = r.current.session;
    const int k2 = r.candidate.session;
    if (k < 0 || k2 < 0 || k >= sessions || k2 >= sessions) {
      throw Error(ErrorCode::kEval, "loop record outside the session range");
    }
    ++m(k, k2);
  }
  return m;
}

std::vector<int> loops_by_session_gap(const Eigen::MatrixXi& matrix) {
  std::vector<int> gaps(static_cast<std::size_t>(matrix.rows()), 0);
  for (int k = 0; k < matrix.rows(); ++k) {
    for (int k2 = 0; k2 <= k && k2 < matrix.cols(); ++k2) {
      gaps[static_cast<std::size_t>(k - k2)] += matrix(k, k2);
    }
  }
  return gaps;
}

std::vector<HeatPoint> wear_heatmap(std::span<const double> scores, std::span<const Pose2> poses,
                                    const CameraModel& cam) {
  if (scores.size() != poses.size()) {
    throw Error(ErrorCode::kEval, "one score per pose required");
  }
  const GroundPoint centre =
      cam.pixel_to_ground(Eigen::Vector2d(cam.width() / 2.0, cam.height() / 2.0));
  std::vector<HeatPoint> out;
  out.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const GroundPoint g = poses[i] * centre;
    out.push_back({g.x(), g.y(), scores[i]});
  }
  return out;
}

void write_heatmap_csv(std::ostream& out, std::span<const HeatPoint> points) {
  out << "x_m,y_m,kld\n";
  for (const HeatPoint& p : points) out << fmt(p.x) << ',' << fmt(p.y) << ',' << fmt(p.score) << '\n';
}

void write_heatmap_svg(std::ostream& out, std::span<const HeatPoint> points) {
  constexpr double kSize = 600.0;
  constexpr double kPad = 40.0;
  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  double smin = 0.0, smax = 0.0;
  bool first = true;
  for (const HeatPoint& p : points) {
    if (!std::isfinite(p.score)) continue;
    if (first) {
      xmin = xmax = p.x;
      ymin = ymax = p.y;
      smin = smax = p.score;
      first = false;
    }
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
    smin = std::min(smin, p.score);
    smax = std::max(smax, p.score);
  }
  const double span = std::max({xmax - xmin, ymax - ymin, 1e-9});
  auto sx = [&](double x) { return kPad + (x - xmin) / span * (kSize - 2 * kPad); };
  auto sy = [&](double y) { return kSize - kPad - (y - ymin) / span * (kSize - 2 * kPad); };
  auto colour = [&](double s) {
    const double t = smax > smin ? (s - smin) / (smax - smin) : 0.0;
    const int r = static_cast<int>(std::lround(255.0 * t));
    const int b = static_cast<int>(std::lround(255.0 * (1.0 - t)));
    char buf[16];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, 40, b);
    return std::string(buf);
  };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\""
      << kSize + 30 << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const HeatPoint& p : points) {
    if (!std::isfinite(p.score)) continue;
    out << "<circle cx=\"" << fmt(sx(p.x)) << "\" cy=\"" << fmt(sy(p.y)) << "\" r=\"5\" fill=\""
        << colour(p.score) << "\"/>\n";
  }
  out << "<text x=\"" << kPad << "\" y=\"" << kSize + 15 << "\" font-size=\"14\">KLD min "
      << fmt(smin) << " (blue), max " << fmt(smax) << " (red)</text>\n</svg>\n";
}

// --- end-to-end runs ---------------------------------------------------------

std::size_t MultiSessionData::observation_count() const {
  std::size_t n = 0;
  for (const auto& s : images) n += s.size();
  return n;
}

MultiSessionData load_multi_session(const std::filesystem::path& root) {
  MultiSessionData data;
  for (const SessionRecord& rec : load_dataset(root)) {
    std::vector<Image> images;
    std::vector<Pose2> poses;
    for (const Frame& f : rec.frames) {
      images.push_back(read_png(f.image_path));
      poses.push_back(f.pose);
    }
    data.images.push_back(std::move(images));
    data.truth.push_back(std::move(poses));
  }
  return data;
}

MultiSessionData synthesize(const SyntheticWorld& world, const CameraModel& cam,
                            const TrajectoryPlan& plan) {
  return {render_sessions(world, cam, plan), plan.sessions};
}

namespace {

void collect(Pipeline& p, VariantRun& run, int session_offset) {
  auto shift = [session_offset](NodeId n) {
    n.session += session_offset;
    return n;
  };
  for (LoopDecisionRecord r : p.decisions()) {
    r.current = shift(r.current);
    r.candidate = shift(r.candidate);
    run.decisions.push_back(std::move(r));
  }
  for (ObservationRecord o : p.observations()) {
    o.node = shift(o.node);
    run.observations.push_back(o);
  }
  run.reports.insert(run.reports.end(), p.optimization_reports().begin(),
                     p.optimization_reports().end());
}

}  // namespace

VariantRun run_variant(const MultiSessionData& data, const PipelineConfig& config,
                       const CameraModel& cam, const Anchor& anchor_template) {
  Pipeline p(config, cam);
  VariantRun run;
  run.name = std::string(to_string(config.strategy));
  for (std::size_t s = 0; s < data.images.size(); ++s) {
    p.start_session();
    for (std::size_t t = 0; t < data.images[s].size(); ++t) {
      std::optional<Anchor> anchor;
      if (s == 0 && t == 0) {
        anchor = anchor_template;
        anchor->pose = data.truth[0][0];
      }
      p.process_observation(data.images[s][t], anchor);
    }
    run.summaries.push_back(p.finalize_session());
  }
  for (std::size_t s = 0; s < data.images.size(); ++s) {
    run.estimated.push_back(p.recorded_trajectories().at(static_cast<int>(s)));
  }
  collect(p, run, 0);
  run.graph = p.graph();
  return run;
}

VariantRun run_original_many(const MultiSessionData& data, PipelineConfig config,
                             const CameraModel& cam, const Anchor& anchor_template) {
  config.strategy = Strategy::kOriginal;
  VariantRun run;
  run.name = "original_many";
  for (std::size_t s = 0; s < data.images.size(); ++s) {
    Pipeline p(config, cam);
    p.start_session();
    for (std::size_t t = 0; t < data.images[s].size(); ++t) {
      std::optional<Anchor> anchor;
      if (t == 0) {
        anchor = anchor_template;
        anchor->pose = data.truth[s][0];
      }
      p.process_observation(data.images[s][t], anchor);
    }
    SessionSummary summary = p.finalize_session();
    summary.session = static_cast<int>(s);
    for (auto& d : summary.decisions) {
      d.current.session += static_cast<int>(s);
      d.candidate.session += static_cast<int>(s);
    }
    run.summaries.push_back(std::move(summary));
    run.estimated.push_back(p.recorded_trajectories().at(0));
    collect(p, run, static_cast<int>(s));
    run.graph = p.graph();
  }
  return run;
}

std::vector<Pose2> flatten(const SessionPoses& poses) {
  std::vector<Pose2> out;
  for (const auto& s : poses) out.insert(out.end(), s.begin(), s.end());
  return out;
}

TimingProfile timing_profile(const MultiSessionData& data, const PipelineConfig& config,
                             const CameraModel& cam, int instances) {
  if (instances < 1) throw Error(ErrorCode::kEval, "timing needs at least one instance");
  std::vector<Pipeline> pipelines;
  pipelines.reserve(static_cast<std::size_t>(instances));
  for (int i = 0; i < instances; ++i) pipelines.emplace_back(config, cam);
  TimingProfile profile;
  std::vector<double> per_instance(static_cast<std::size_t>(instances));
  for (std::size_t s = 0; s < data.images.size(); ++s) {
    for (Pipeline& p : pipelines) p.start_session();
    for (std::size_t t = 0; t < data.images[s].size(); ++t) {
      std::optional<Anchor> anchor;
      if (s == 0 && t == 0) anchor = Anchor{data.truth[0][0]};
      double kld = 0.0;
      for (int i = 0; i < instances; ++i) {
        Pipeline& p = pipelines[static_cast<std::size_t>(i)];
        const auto t0 = std::chrono::steady_clock::now();
        p.process_observation(data.images[s][t], anchor);
        const auto t1 = std::chrono::steady_clock::now();
        per_instance[static_cast<std::size_t>(i)] = std::chrono::duration<double>(t1 - t0).count();
        kld += p.observations().back().kld_seconds;
      }
      const double total = std::accumulate(per_instance.begin(), per_instance.end(), 0.0);
      profile.mean_seconds.push_back(total / instances);
      profile.median_seconds.push_back(quartiles(per_instance).median);
      profile.kld_seconds.push_back(kld / instances);
    }
    for (Pipeline& p : pipelines) p.finalize_session();
  }
  return profile;
}

void write_timing_csv(std::ostream& out, std::span<const std::string> names,
                      std::span<const TimingProfile> profiles) {
  out << "observation";
  for (const std::string& n : names) out << ',' << n << "_mean_s," << n << "_median_s," << n << "_kld_s";
  out << '\n';
  std::size_t rows = 0;
  for (const auto& p : profiles) rows = std::max(rows, p.mean_seconds.size());
  for (std::size_t i = 0; i < rows; ++i) {
    out << i;
    for (const auto& p : profiles) {
      const bool has = i < p.mean_seconds.size();
      out << ',' << (has ? fmt(p.mean_seconds[i]) : "") << ','
          << (has ? fmt(p.median_seconds[i]) : "") << ',' << (has ? fmt(p.kld_seconds[i]) : "");
    }
    out << '\n';
  }
}

SlopeTest regression_slope_test(std::span<const double> y) {
  SlopeTest r;
  const std::size_t n = y.size();
  if (n < 3) throw Error(ErrorCode::kEval, "slope test needs at least 3 samples");
  const double xbar = (static_cast<double>(n) - 1.0) / 2.0;
  const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (i - xbar) * (i - xbar);
    sxy += (i - xbar) * (y[i] - ybar);
  }
  r.slope = sxy / sxx;
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - ybar - r.slope * (i - xbar);
    sse += e * e;
  }
  const double dof = static_cast<double>(n) - 2.0;
  r.stderr_slope = std::sqrt(sse / dof / sxx);
  if (r.stderr_slope == 0.0) {
    r.t = r.slope == 0.0 ? 0.0 : std::copysign(INFINITY, r.slope);
    r.p_value = r.slope == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = r.slope / r.stderr_slope;
  const boost::math::students_t dist(dof);
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

void write_trajectories_csv(std::ostream& out, const SessionPoses& poses) {
  out << "session,index,x_m,y_m,yaw_rad\n";
  for (std::size_t s = 0; s < poses.size(); ++s) {
    for (std::size_t i = 0; i < poses[s].size(); ++i) {
      const Pose2& p = poses[s][i];
      out << s << ',' << i << ',' << fmt(p.x) << ',' << fmt(p.y) << ',' << fmt(p.yaw) << '\n';
    }
  }
}

SessionPoses read_trajectories_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  SessionPoses out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 5) {
      throw Error(ErrorCode::kFormat,
                  path.string() + ":" + std::to_string(line_no) + ": expected 5 columns");
    }
    const auto s = static_cast<std::size_t>(std::stoi(cells[0]));
    const auto i = static_cast<std::size_t>(std::stoi(cells[1]));
    if (out.size() <= s) out.resize(s + 1);
    if (out[s].size() != i) {
      throw Error(ErrorCode::kFormat,
                  path.string() + ":" + std::to_string(line_no) + ": indices must be consecutive");
    }
    out[s].emplace_back(std::stod(cells[2]), std::stod(cells[3]), std::stod(cells[4]));
  }
  return out;
}

}  // namespace groundslam
