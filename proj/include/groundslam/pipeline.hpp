#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "groundslam/config.hpp"
#include "groundslam/estimation.hpp"
#include "groundslam/features.hpp"
#include "groundslam/geometry.hpp"
#include "groundslam/imaging.hpp"
#include "groundslam/posegraph.hpp"

namespace groundslam {

enum class Strategy { kOriginal, kKldColor, kKldGray, kVisualOverlap, kJih, kOdometryOnly };

std::string_view to_string(Strategy s);
/// Accepts the config spellings: original, kld_color, kld_gray, visual_overlap, jih,
/// odometry_only.
Strategy parse_strategy(std::string_view name);
bool uses_kld(Strategy s);

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct PipelineConfig {
  Strategy strategy = Strategy::kOriginal;

  // Loop-closure validation.
  double bow_min_score = 0.15;
  int min_matches = 15;
  /// Matches that must agree with the estimated transform.
  int min_inliers = 15;
  /// Upper bound on the trace of the loop covariance after strategy biasing.
  double max_covariance_trace = 1e-7;
  double min_overlap_fraction = 0.0;
  double epsilon = kDefaultEpsilon;
  int candidates = 5;       // N best candidates per observation
  int recency_window = 10;  // M most recent keyframes of the session are skipped

  int max_keypoints = 500;
  DetectorOptions detector;
  MatcherOptions matcher;
  RobustOptions estimator;

  int vocabulary_size = 1024;
  std::uint64_t vocabulary_seed = 7;
  int vocabulary_iterations = 6;

  int optimize_every = 25;
  OptimizerOptions optimizer;

  int odometry_min_matches = 8;
  double gap_sigma_xy = 0.05;
  double gap_sigma_yaw_deg = 5.0;
  /// Weak prior tying the first pose of every later session to the first
  /// pose of session 0 (the robot starts each session at its dock).
  double session_start_sigma_xy = 0.25;
  double session_start_sigma_yaw_deg = 15.0;

  Eigen::Matrix3d gap_covariance() const;
  Eigen::Matrix3d session_start_covariance() const;

  /// Throws kConfig for out-of-range values.
  void validate() const;

  /// Reads `strategy` plus the [loop], [features], [matcher], [estimator],
  /// [vocabulary], [optimizer], [odometry] and [session] sections; unknown
  /// keys are rejected.
  static PipelineConfig from_key_values(const KeyValues& kv);
  static PipelineConfig from_file(const std::filesystem::path& path);
  std::string to_text() const;
};

struct Keyframe {
  NodeId node;
  Image gray;
  Features features;
  std::vector<GroundPoint> ground;  // pixel_to_ground of every keypoint
  BowVector bow;
  std::vector<IntensityDistribution> distributions;  // per channel of the input image
};

/// Session-0 intensity statistics (streamed counts, normalised on freeze).
class BaselineModel {
 public:
  void add(const Image& img);
  void freeze();
  bool frozen() const { return frozen_; }
  std::uint64_t image_count() const { return images_; }

  /// Per-channel distributions of the input images (3 for colour input).
  std::span<const IntensityDistribution> color() const { return color_; }
  /// Single distribution of the BT.601 grayscale images.
  std::span<const IntensityDistribution> gray() const { return gray_; }

  std::uint64_t checksum() const;

 private:
  int channels_ = 0;
  std::uint64_t images_ = 0;
  std::vector<ChannelCounts> color_counts_;
  ChannelCounts gray_counts_;
  std::vector<IntensityDistribution> color_;
  std::vector<IntensityDistribution> gray_;
  bool frozen_ = false;
};

struct LoopDecisionRecord {
  NodeId current;
  NodeId candidate;
  double bow_score = kNaN;  // NaN while no vocabulary exists
  int match_count = 0;
  double covariance_trace = kNaN;  // estimator covariance, before biasing
  double biased_trace = kNaN;
  double strategy_score = kNaN;  // KLD, overlap fraction or JIH
  bool accepted = false;
  /// Pose of `current` in the frame of `candidate`, when estimated.
  std::optional<Pose2> relative;
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d biased_covariance = Eigen::Matrix3d::Zero();
  std::string reason;  // "accepted" or the first failed check
};

struct ObservationRecord {
  NodeId node;
  double kld = kNaN;  // only for KLD strategies from session 1 on
  bool odometry_gap = false;
  int keypoints = 0;
  double kld_seconds = 0.0;  // wall time of the KLD scoring step
};

struct SessionSummary {
  int session = 0;
  std::size_t nodes = 0;
  std::size_t odometry_factors = 0;
  std::size_t loop_factors = 0;
  std::size_t odometry_gaps = 0;
  std::vector<LoopDecisionRecord> decisions;
};

struct Anchor {
  Pose2 pose;
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity() * 1e-8;
};

BetweenFactor apply_kld_bias(const BetweenFactor& factor, double kld);
BetweenFactor apply_kld_bias(const BetweenFactor& factor, const Image& img,
                             std::span<const IntensityDistribution> baseline,
                             double epsilon = kDefaultEpsilon);
/// Overlap of the two estimated footprints, as a fraction of one footprint.
/// Fails closed on degenerate projections.
bool apply_overlap_gate(const Pose2& current, const Pose2& candidate, const CameraModel& cam,
                        double min_overlap_fraction);
double overlap_fraction(const Pose2& a, const Pose2& b, const CameraModel& cam);
/// JIH of the grayscale versions of the two images.
double image_pair_jih(const Image& current, const Image& candidate);
BetweenFactor apply_jih_bias(const BetweenFactor& factor, double jih,
                             double epsilon = kDefaultEpsilon);
BetweenFactor apply_jih_bias(const BetweenFactor& factor, const Image& current,
                             const Image& candidate, double epsilon = kDefaultEpsilon);

class Pipeline {
 public:
  Pipeline(PipelineConfig config, CameraModel camera);

  int start_session();
  NodeId process_observation(const Image& img, const std::optional<Anchor>& anchor = std::nullopt);
  SessionSummary finalize_session();

  /// Top-N keyframes by BoW similarity (match count before the vocabulary
  /// exists), skipping the M most recent keyframes of the current session.
  std::vector<const Keyframe*> find_candidates(const Keyframe& current) const;
  /// Runs the checks in order overlap gate, BoW, matches, estimate, inliers,
  /// bias, covariance trace; the first failure names the record's reason.
  LoopDecisionRecord validate_candidate(const Keyframe& current, const Keyframe& candidate,
                                        double current_kld) const;

  const PipelineConfig& config() const { return config_; }
  const CameraModel& camera() const { return camera_; }
  const PoseGraph& graph() const { return graph_; }
  const BaselineModel& baseline() const { return baseline_; }
  const std::optional<Vocabulary>& vocabulary() const { return vocabulary_; }
  const std::vector<Keyframe>& keyframes() const { return keyframes_; }
  const std::vector<LoopDecisionRecord>& decisions() const { return decisions_; }
  const std::vector<ObservationRecord>& observations() const { return observations_; }
  const std::vector<OptimizationReport>& optimization_reports() const { return reports_; }
  /// Poses of each session as recorded when that session was finalised.
  const std::map<int, std::vector<Pose2>>& recorded_trajectories() const { return recorded_; }
  std::optional<int> active_session() const { return active_; }

  /// Builds the keyframe data (features, ground points, distributions) for an
  /// image without adding it to the map.
  Keyframe make_keyframe(const Image& img, const NodeId& node) const;

 private:
  void optimize();

  PipelineConfig config_;
  CameraModel camera_;
  PoseGraph graph_;
  BaselineModel baseline_;
  std::optional<Vocabulary> vocabulary_;
  std::vector<Keyframe> keyframes_;
  std::vector<LoopDecisionRecord> decisions_;
  std::vector<ObservationRecord> observations_;
  std::vector<OptimizationReport> reports_;
  std::map<int, std::vector<Pose2>> recorded_;
  std::optional<int> active_;
  int next_session_ = 0;
  int session_observations_ = 0;
  std::size_t session_decision_start_ = 0;
  std::size_t since_optimization_ = 0;
};

/// One row per decision record: sessions, indices, bow, matches, cov_trace,
/// strategy_score, accepted, rel_x, rel_y, rel_yaw, reason.
void write_decisions_csv(std::ostream& out, std::span<const LoopDecisionRecord> records);
std::vector<LoopDecisionRecord> read_decisions_csv(const std::filesystem::path& path);

/// session,index,kld,odometry_gap,keypoints,kld_seconds
void write_observations_csv(std::ostream& out, std::span<const ObservationRecord> records);
std::vector<ObservationRecord> read_observations_csv(const std::filesystem::path& path);

}  // namespace groundslam
