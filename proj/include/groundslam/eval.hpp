#pragma once

#include <cstddef>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "groundslam/data.hpp"
#include "groundslam/geometry.hpp"
#include "groundslam/pipeline.hpp"

namespace groundslam {

/// truth[session][index]
using SessionPoses = std::vector<std::vector<Pose2>>;

struct Rmse {
  double position_m = 0.0;
  double orientation_deg = 0.0;
};

/// No alignment: the anchored first pose fixes the gauge. Yaw differences are
/// wrapped to (-180, 180] degrees.
Rmse rmse(std::span<const Pose2> estimated, std::span<const Pose2> truth);

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
};

/// True loop: the footprints at the true poses overlap by more than
/// `min_area` square metres (0 by default).
bool is_true_loop(const Pose2& a, const Pose2& b, const CameraModel& cam, double min_area = 0.0);
const Pose2& truth_pose(const SessionPoses& truth, const NodeId& node);

Confusion loop_confusion(std::span<const LoopDecisionRecord> records, const SessionPoses& truth,
                         const CameraModel& cam, double min_area = 0.0);

struct Quartiles {
  std::size_t count = 0;
  double q1 = kNaN;
  double median = kNaN;
  double q3 = kNaN;
};
Quartiles quartiles(std::vector<double> values);

struct ErrorSplit {
  std::vector<double> kept;      // metres, accepted true closures
  std::vector<double> excluded;  // metres, rejected true closures with an estimate
  Quartiles kept_stats;
  Quartiles excluded_stats;
};

ErrorSplit inclusion_error_split(std::span<const LoopDecisionRecord> records,
                                 const SessionPoses& truth, const CameraModel& cam);

/// counts(k, k') = accepted loops from a node of session k to one of session k'.
Eigen::MatrixXi session_loop_matrix(std::span<const LoopDecisionRecord> records, int sessions);
/// Accepted-loop totals indexed by session gap k - k'.
std::vector<int> loops_by_session_gap(const Eigen::MatrixXi& matrix);

struct HeatPoint {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;
};

/// Projects the image centre of every observation through its pose.
std::vector<HeatPoint> wear_heatmap(std::span<const double> scores, std::span<const Pose2> poses,
                                    const CameraModel& cam);
void write_heatmap_csv(std::ostream& out, std::span<const HeatPoint> points);
/// Scatter plot on a linear blue-to-red ramp, min and max annotated.
void write_heatmap_svg(std::ostream& out, std::span<const HeatPoint> points);

// --- end-to-end runs ---------------------------------------------------------

struct MultiSessionData {
  std::vector<std::vector<Image>> images;  // images[session][index]
  SessionPoses truth;
  std::size_t observation_count() const;
};

MultiSessionData load_multi_session(const std::filesystem::path& root);
MultiSessionData synthesize(const SyntheticWorld& world, const CameraModel& cam,
                            const TrajectoryPlan& plan);

struct VariantRun {
  std::string name;
  SessionPoses estimated;  // as recorded at each session's end
  std::vector<LoopDecisionRecord> decisions;
  std::vector<ObservationRecord> observations;
  std::vector<OptimizationReport> reports;
  std::vector<SessionSummary> summaries;
  PoseGraph graph;  // final graph (the last instance for original_many)
};

/// Anchors the first observation of session 0 at its true pose.
VariantRun run_variant(const MultiSessionData& data, const PipelineConfig& config,
                       const CameraModel& cam, const Anchor& anchor_template = {});
/// Original strategy with a fresh instance per session, each anchored at that
/// session's first true pose.
VariantRun run_original_many(const MultiSessionData& data, PipelineConfig config,
                             const CameraModel& cam, const Anchor& anchor_template = {});

std::vector<Pose2> flatten(const SessionPoses& poses);

struct TimingProfile {
  std::vector<double> mean_seconds;    // per observation, total / instances
  std::vector<double> median_seconds;  // per observation, across instances
  std::vector<double> kld_seconds;     // mean wall time of the KLD step
};

/// Feeds each observation to every instance in turn, timing process_observation
/// only (session finalisation is excluded).
TimingProfile timing_profile(const MultiSessionData& data, const PipelineConfig& config,
                             const CameraModel& cam, int instances = 10);
void write_timing_csv(std::ostream& out, std::span<const std::string> names,
                      std::span<const TimingProfile> profiles);

struct SlopeTest {
  double slope = 0.0;
  double stderr_slope = 0.0;
  double t = 0.0;
  double p_value = 1.0;  // two-sided
};
/// Ordinary least squares of y on index with a two-sided t test on the slope.
SlopeTest regression_slope_test(std::span<const double> y);

void write_trajectories_csv(std::ostream& out, const SessionPoses& poses);
SessionPoses read_trajectories_csv(const std::filesystem::path& path);

}  // namespace groundslam
