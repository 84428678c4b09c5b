#include "groundslam/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "groundslam/error.hpp"

namespace groundslam {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Eigen::Matrix3d diagonal_covariance(double sigma_xy, double sigma_yaw_rad) {
  return Eigen::Vector3d(sigma_xy * sigma_xy, sigma_xy * sigma_xy, sigma_yaw_rad * sigma_yaw_rad)
      .asDiagonal();
}

std::vector<PointPair> matched_pairs(const Keyframe& source, const Keyframe& target,
                                     std::span<const Match> matches) {
  std::vector<PointPair> pairs;
  pairs.reserve(matches.size());
  for (const Match& m : matches) {
    pairs.push_back({source.ground[static_cast<std::size_t>(m.index_a)],
                     target.ground[static_cast<std::size_t>(m.index_b)]});
  }
  return pairs;
}

BetweenFactor scaled(const BetweenFactor& factor, double s) {
  BetweenFactor out = factor;
  out.covariance = factor.covariance * s;
  return out;
}

}  // namespace

// --- strategies --------------------------------------------------------------

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kOriginal: return "original";
    case Strategy::kKldColor: return "kld_color";
    case Strategy::kKldGray: return "kld_gray";
    case Strategy::kVisualOverlap: return "visual_overlap";
    case Strategy::kJih: return "jih";
    case Strategy::kOdometryOnly: return "odometry_only";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::kOriginal, Strategy::kKldColor, Strategy::kKldGray,
                     Strategy::kVisualOverlap, Strategy::kJih, Strategy::kOdometryOnly}) {
    if (to_string(s) == name) return s;
  }
  throw Error(ErrorCode::kConfig, "unknown strategy '" + std::string(name) + "'");
}

bool uses_kld(Strategy s) { return s == Strategy::kKldColor || s == Strategy::kKldGray; }

BetweenFactor apply_kld_bias(const BetweenFactor& factor, double kld) {
  return scaled(factor, kld + 1.0);
}

BetweenFactor apply_kld_bias(const BetweenFactor& factor, const Image& img,
                             std::span<const IntensityDistribution> baseline, double epsilon) {
  return apply_kld_bias(factor, kld_score(img, baseline, epsilon));
}

double overlap_fraction(const Pose2& a, const Pose2& b, const CameraModel& cam) {
  return convex_intersection_area(fov_quad(cam, a), fov_quad(cam, b)) / cam.footprint_area();
}

bool apply_overlap_gate(const Pose2& current, const Pose2& candidate, const CameraModel& cam,
                        double min_overlap_fraction) {
  double fraction = 0.0;
  try {
    fraction = overlap_fraction(current, candidate, cam);
  } catch (const Error&) {
    return false;
  }
  // Round-off slack so identical footprints pass a threshold of exactly 1.
  return fraction > 0.0 && fraction >= min_overlap_fraction - 1e-9;
}

double image_pair_jih(const Image& current, const Image& candidate) {
  const Image a = current.channels() == 1 ? current : to_grayscale(current);
  const Image b = candidate.channels() == 1 ? candidate : to_grayscale(candidate);
  return jih_symmetry_score(joint_intensity_histogram(a, b));
}

BetweenFactor apply_jih_bias(const BetweenFactor& factor, double jih, double epsilon) {
  return scaled(factor, 1.0 / (jih + epsilon));
}

BetweenFactor apply_jih_bias(const BetweenFactor& factor, const Image& current,
                             const Image& candidate, double epsilon) {
  return apply_jih_bias(factor, image_pair_jih(current, candidate), epsilon);
}

// --- configuration -----------------------------------------------------------

Eigen::Matrix3d PipelineConfig::gap_covariance() const {
  return diagonal_covariance(gap_sigma_xy, gap_sigma_yaw_deg * kDeg);
}

Eigen::Matrix3d PipelineConfig::session_start_covariance() const {
  return diagonal_covariance(session_start_sigma_xy, session_start_sigma_yaw_deg * kDeg);
}

void PipelineConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::kConfig, what);
  };
  require(bow_min_score >= 0.0 && bow_min_score <= 1.0, "loop.bow_min_score must be in [0, 1]");
  require(min_matches >= kMinEstimationPairs, "loop.min_matches must be at least 3");
  require(min_inliers >= kMinEstimationPairs, "loop.min_inliers must be at least 3");
  require(max_covariance_trace > 0.0, "loop.max_covariance_trace must be positive");
  require(min_overlap_fraction >= 0.0 && min_overlap_fraction <= 1.0,
          "loop.min_overlap_fraction must be in [0, 1]");
  require(epsilon > 0.0, "loop.epsilon must be positive");
  require(candidates >= 1, "loop.candidates must be at least 1");
  require(recency_window >= 0, "loop.recency_window must be non-negative");
  require(max_keypoints >= 1, "features.max_keypoints must be positive");
  require(matcher.max_distance >= 0 && matcher.max_distance <= 256,
          "matcher.max_distance must be in [0, 256]");
  require(matcher.ratio > 0.0 && matcher.ratio <= 1.0, "matcher.ratio must be in (0, 1]");
  require(estimator.huber_delta > 0.0, "estimator.huber_delta must be positive");
  require(estimator.cutoff_scale > 0.0, "estimator.cutoff_scale must be positive");
  require(vocabulary_size >= 2, "vocabulary.size must be at least 2");
  require(optimize_every >= 0, "optimizer.every must be non-negative");
  require(odometry_min_matches >= kMinEstimationPairs, "odometry.min_matches must be at least 3");
  require(gap_sigma_xy > 0.0 && gap_sigma_yaw_deg > 0.0, "odometry gap sigmas must be positive");
  require(session_start_sigma_xy > 0.0 && session_start_sigma_yaw_deg > 0.0,
          "session start sigmas must be positive");
}

PipelineConfig PipelineConfig::from_key_values(const KeyValues& kv) {
  static const std::set<std::string> kKnown = {
      "strategy",
      "loop.bow_min_score", "loop.min_matches", "loop.min_inliers", "loop.max_covariance_trace",
      "loop.min_overlap_fraction", "loop.epsilon", "loop.candidates", "loop.recency_window",
      "features.max_keypoints", "features.contrast_threshold", "features.min_contrast_pixels",
      "features.border", "features.harris_k",
      "matcher.max_distance", "matcher.ratio",
      "estimator.huber_delta", "estimator.max_iterations", "estimator.cutoff_scale",
      "estimator.covariance_floor",
      "vocabulary.size", "vocabulary.seed", "vocabulary.iterations",
      "optimizer.every", "optimizer.max_iterations", "optimizer.tolerance",
      "optimizer.initial_lambda",
      "odometry.min_matches", "odometry.gap_sigma_xy", "odometry.gap_sigma_yaw_deg",
      "session.start_sigma_xy", "session.start_sigma_yaw_deg"};
  for (const auto& [key, value] : kv.values()) {
    if (!kKnown.contains(key)) throw Error(ErrorCode::kConfig, "unknown key '" + key + "'");
  }
  PipelineConfig c;
  c.strategy = parse_strategy(kv.get_string("strategy", std::string(to_string(c.strategy))));
  c.bow_min_score = kv.get_double("loop.bow_min_score", c.bow_min_score);
  c.min_matches = kv.get_int("loop.min_matches", c.min_matches);
  c.min_inliers = kv.get_int("loop.min_inliers", c.min_inliers);
  c.max_covariance_trace = kv.get_double("loop.max_covariance_trace", c.max_covariance_trace);
  c.min_overlap_fraction = kv.get_double("loop.min_overlap_fraction", c.min_overlap_fraction);
  c.epsilon = kv.get_double("loop.epsilon", c.epsilon);
  c.candidates = kv.get_int("loop.candidates", c.candidates);
  c.recency_window = kv.get_int("loop.recency_window", c.recency_window);
  c.max_keypoints = kv.get_int("features.max_keypoints", c.max_keypoints);
  c.detector.contrast_threshold =
      kv.get_int("features.contrast_threshold", c.detector.contrast_threshold);
  c.detector.min_contrast_pixels =
      kv.get_int("features.min_contrast_pixels", c.detector.min_contrast_pixels);
  c.detector.border = kv.get_int("features.border", c.detector.border);
  c.detector.harris_k = kv.get_double("features.harris_k", c.detector.harris_k);
  c.matcher.max_distance = kv.get_int("matcher.max_distance", c.matcher.max_distance);
  c.matcher.ratio = kv.get_double("matcher.ratio", c.matcher.ratio);
  c.estimator.huber_delta = kv.get_double("estimator.huber_delta", c.estimator.huber_delta);
  c.estimator.max_iterations = kv.get_int("estimator.max_iterations", c.estimator.max_iterations);
  c.estimator.cutoff_scale = kv.get_double("estimator.cutoff_scale", c.estimator.cutoff_scale);
  c.estimator.covariance_floor =
      kv.get_double("estimator.covariance_floor", c.estimator.covariance_floor);
  c.vocabulary_size = kv.get_int("vocabulary.size", c.vocabulary_size);
  c.vocabulary_seed =
      static_cast<std::uint64_t>(kv.get_int("vocabulary.seed", static_cast<int>(c.vocabulary_seed)));
  c.vocabulary_iterations = kv.get_int("vocabulary.iterations", c.vocabulary_iterations);
  c.optimize_every = kv.get_int("optimizer.every", c.optimize_every);
  c.optimizer.max_iterations = kv.get_int("optimizer.max_iterations", c.optimizer.max_iterations);
  c.optimizer.tolerance = kv.get_double("optimizer.tolerance", c.optimizer.tolerance);
  c.optimizer.initial_lambda = kv.get_double("optimizer.initial_lambda", c.optimizer.initial_lambda);
  c.odometry_min_matches = kv.get_int("odometry.min_matches", c.odometry_min_matches);
  c.gap_sigma_xy = kv.get_double("odometry.gap_sigma_xy", c.gap_sigma_xy);
  c.gap_sigma_yaw_deg = kv.get_double("odometry.gap_sigma_yaw_deg", c.gap_sigma_yaw_deg);
  c.session_start_sigma_xy = kv.get_double("session.start_sigma_xy", c.session_start_sigma_xy);
  c.session_start_sigma_yaw_deg =
      kv.get_double("session.start_sigma_yaw_deg", c.session_start_sigma_yaw_deg);
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::from_file(const std::filesystem::path& path) {
  return from_key_values(KeyValues::from_file(path));
}

std::string PipelineConfig::to_text() const {
  std::ostringstream o;
  o.precision(17);
  o << "strategy = " << to_string(strategy) << "\n\n[loop]\n"
    << "bow_min_score = " << bow_min_score << "\nmin_matches = " << min_matches
    << "\nmin_inliers = " << min_inliers << "\nmax_covariance_trace = " << max_covariance_trace
    << "\nmin_overlap_fraction = " << min_overlap_fraction << "\nepsilon = " << epsilon
    << "\ncandidates = " << candidates << "\nrecency_window = " << recency_window
    << "\n\n[features]\nmax_keypoints = " << max_keypoints
    << "\ncontrast_threshold = " << detector.contrast_threshold
    << "\nmin_contrast_pixels = " << detector.min_contrast_pixels
    << "\nborder = " << detector.border << "\nharris_k = " << detector.harris_k
    << "\n\n[matcher]\nmax_distance = " << matcher.max_distance << "\nratio = " << matcher.ratio
    << "\n\n[estimator]\nhuber_delta = " << estimator.huber_delta
    << "\nmax_iterations = " << estimator.max_iterations
    << "\ncutoff_scale = " << estimator.cutoff_scale
    << "\ncovariance_floor = " << estimator.covariance_floor
    << "\n\n[vocabulary]\nsize = " << vocabulary_size << "\nseed = " << vocabulary_seed
    << "\niterations = " << vocabulary_iterations
    << "\n\n[optimizer]\nevery = " << optimize_every
    << "\nmax_iterations = " << optimizer.max_iterations
    << "\ntolerance = " << optimizer.tolerance << "\ninitial_lambda = " << optimizer.initial_lambda
    << "\n\n[odometry]\nmin_matches = " << odometry_min_matches
    << "\ngap_sigma_xy = " << gap_sigma_xy << "\ngap_sigma_yaw_deg = " << gap_sigma_yaw_deg
    << "\n\n[session]\nstart_sigma_xy = " << session_start_sigma_xy
    << "\nstart_sigma_yaw_deg = " << session_start_sigma_yaw_deg << "\n";
  return o.str();
}

// --- baseline ----------------------------------------------------------------

void BaselineModel::add(const Image& img) {
  if (frozen_) throw Error(ErrorCode::kSessionState, "baseline is frozen after session 0");
  if (img.empty()) throw Error(ErrorCode::kInvalidImage, "empty image");
  if (channels_ == 0) {
    channels_ = img.channels();
    color_counts_.assign(static_cast<std::size_t>(channels_), ChannelCounts{});
  } else if (img.channels() != channels_) {
    throw Error(ErrorCode::kInvalidImage, "baseline images must share a channel count");
  }
  for (int c = 0; c < channels_; ++c) color_counts_[static_cast<std::size_t>(c)].add(img, c);
  gray_counts_.add(channels_ == 1 ? img : to_grayscale(img), 0);
  ++images_;
}

void BaselineModel::freeze() {
  if (frozen_) return;
  frozen_ = true;
  if (images_ == 0) return;
  for (const auto& counts : color_counts_) color_.push_back(counts.normalized());
  gray_.push_back(gray_counts_.normalized());
}

std::uint64_t BaselineModel::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const IntensityDistribution& d) {
    for (double v : d.bins) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xFF;
        h *= 1099511628211ULL;
      }
    }
  };
  for (const auto& d : color_) mix(d);
  for (const auto& d : gray_) mix(d);
  return h;
}

// --- pipeline ----------------------------------------------------------------

Pipeline::Pipeline(PipelineConfig config, CameraModel camera)
    : config_(std::move(config)), camera_(std::move(camera)) {
  config_.validate();
}

int Pipeline::start_session() {
  if (active_) throw Error(ErrorCode::kSessionState, "previous session not finalized");
  active_ = next_session_++;
  session_observations_ = 0;
  session_decision_start_ = decisions_.size();
  return *active_;
}

Keyframe Pipeline::make_keyframe(const Image& img, const NodeId& node) const {
  if (img.empty() || (img.channels() != 1 && img.channels() != 3)) {
    throw Error(ErrorCode::kInvalidImage, "observation must be a grayscale or RGB image");
  }
  Keyframe kf;
  kf.node = node;
  kf.gray = img.channels() == 1 ? img : to_grayscale(img);
  kf.features = detect_and_describe(kf.gray, config_.max_keypoints, config_.detector);
  kf.ground.reserve(kf.features.keypoints.size());
  for (const Keypoint& k : kf.features.keypoints) {
    kf.ground.push_back(camera_.pixel_to_ground(Eigen::Vector2d(k.px, k.py)));
  }
  kf.distributions = image_distributions(img);
  if (vocabulary_) kf.bow = vocabulary_->transform(kf.features.descriptors);
  return kf;
}

NodeId Pipeline::process_observation(const Image& img, const std::optional<Anchor>& anchor) {
  if (!active_) throw Error(ErrorCode::kSessionState, "no active session");
  const int session = *active_;
  if (anchor && (session != 0 || session_observations_ != 0)) {
    throw Error(ErrorCode::kSessionState,
                "an anchor is only accepted for the first observation of session 0");
  }
  const NodeId id{session, session_observations_};
  Keyframe kf = make_keyframe(img, id);

  ObservationRecord obs;
  obs.node = id;
  obs.keypoints = static_cast<int>(kf.features.keypoints.size());
  if (session == 0) baseline_.add(img);

  double kld = kNaN;
  if (uses_kld(config_.strategy) && baseline_.frozen() && baseline_.image_count() > 0) {
    const auto t0 = std::chrono::steady_clock::now();
    kld = config_.strategy == Strategy::kKldColor
              ? kld_score(img, baseline_.color(), config_.epsilon)
              : kld_score(kf.gray, baseline_.gray(), config_.epsilon);
    obs.kld_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    obs.kld = kld;
  }

  if (session_observations_ == 0) {
    if (session == 0) {
      const Anchor a = anchor.value_or(Anchor{});
      graph_.add_node(session, a.pose);
      graph_.add_prior({id, a.pose, a.covariance});
    } else {
      const NodeId dock{0, 0};
      const Pose2 start = graph_.has_node(dock) ? graph_.estimate(dock) : Pose2::identity();
      graph_.add_node(session, start);
      graph_.add_prior({id, start, config_.session_start_covariance()});
    }
  } else {
    const Keyframe& prev = keyframes_.back();
    Pose2 relative = Pose2::identity();
    Eigen::Matrix3d covariance = config_.gap_covariance();
    const auto matches = match_descriptors(kf.features.descriptors, prev.features.descriptors,
                                           config_.matcher);
    bool gap = static_cast<int>(matches.size()) < config_.odometry_min_matches;
    if (!gap) {
      try {
        const auto pairs = matched_pairs(kf, prev, matches);
        const TransformEstimate est = robust_rigid_estimate(pairs, config_.estimator);
        relative = est.transform;
        covariance = est.covariance;
      } catch (const Error&) {
        gap = true;
      }
    }
    obs.odometry_gap = gap;
    graph_.add_node(session, graph_.estimate(prev.node) * relative);
    graph_.add_between({prev.node, id, relative, covariance, FactorKind::kOdometry});
  }

  if (config_.strategy != Strategy::kOdometryOnly) {
    for (const Keyframe* candidate : find_candidates(kf)) {
      LoopDecisionRecord rec = validate_candidate(kf, *candidate, kld);
      if (rec.accepted) {
        graph_.add_between(
            {candidate->node, id, *rec.relative, rec.biased_covariance, FactorKind::kLoopClosure});
      }
      decisions_.push_back(std::move(rec));
    }
  }

  keyframes_.push_back(std::move(kf));
  observations_.push_back(obs);
  ++session_observations_;
  if (config_.optimize_every > 0 &&
      ++since_optimization_ >= static_cast<std::size_t>(config_.optimize_every)) {
    optimize();
  }
  return id;
}

std::vector<const Keyframe*> Pipeline::find_candidates(const Keyframe& current) const {
  std::vector<const Keyframe*> out;
  if (keyframes_.empty() || current.features.descriptors.empty()) return out;
  const int session = current.node.session;
  int session_count = 0;
  for (const Keyframe& k : keyframes_) session_count += k.node.session == session ? 1 : 0;
  const int recent_from = session_count - config_.recency_window;

  const bool use_bow = vocabulary_.has_value() && !current.bow.empty();
  std::vector<std::pair<double, const Keyframe*>> scored;
  for (const Keyframe& k : keyframes_) {
    if (k.node == current.node) continue;
    if (k.node.session == session && k.node.index >= recent_from) continue;
    if (k.features.descriptors.empty()) continue;
    double score = 0.0;
    if (use_bow) {
      if (k.bow.empty()) continue;
      score = bow_similarity(current.bow, k.bow);
    } else {
      score = static_cast<double>(
          match_descriptors(current.features.descriptors, k.features.descriptors, config_.matcher)
              .size());
    }
    scored.emplace_back(score, &k);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  const std::size_t n = std::min(scored.size(), static_cast<std::size_t>(config_.candidates));
  for (std::size_t i = 0; i < n; ++i) out.push_back(scored[i].second);
  return out;
}

LoopDecisionRecord Pipeline::validate_candidate(const Keyframe& current, const Keyframe& candidate,
                                                double current_kld) const {
  LoopDecisionRecord rec;
  rec.current = current.node;
  rec.candidate = candidate.node;
  const bool later_session = current.node.session >= 1;

  if (config_.strategy == Strategy::kVisualOverlap) {
    const Pose2 a = graph_.estimate(current.node);
    const Pose2 b = graph_.estimate(candidate.node);
    try {
      rec.strategy_score = overlap_fraction(a, b, camera_);
    } catch (const Error&) {
      rec.strategy_score = 0.0;
    }
    if (!apply_overlap_gate(a, b, camera_, config_.min_overlap_fraction)) {
      rec.reason = "overlap";
      return rec;
    }
  }

  if (vocabulary_ && !current.bow.empty() && !candidate.bow.empty()) {
    rec.bow_score = bow_similarity(current.bow, candidate.bow);
    if (rec.bow_score < config_.bow_min_score) {
      rec.reason = "bow";
      return rec;
    }
  }

  const auto matches = match_descriptors(current.features.descriptors,
                                         candidate.features.descriptors, config_.matcher);
  rec.match_count = static_cast<int>(matches.size());
  if (rec.match_count < config_.min_matches) {
    rec.reason = "matches";
    return rec;
  }

  TransformEstimate est;
  try {
    const auto pairs = matched_pairs(current, candidate, matches);
    est = robust_rigid_estimate(pairs, config_.estimator);
  } catch (const Error& e) {
    rec.reason = "estimator";
    return rec;
  }
  rec.relative = est.transform;
  rec.covariance = est.covariance;
  rec.covariance_trace = est.covariance.trace();
  if (est.inlier_count < config_.min_inliers) {
    rec.reason = "inliers";
    return rec;
  }

  BetweenFactor factor{candidate.node, current.node, est.transform, est.covariance,
                       FactorKind::kLoopClosure};
  if (uses_kld(config_.strategy) && !std::isnan(current_kld)) {
    rec.strategy_score = current_kld;
    factor = apply_kld_bias(factor, current_kld);
  } else if (config_.strategy == Strategy::kJih && later_session) {
    rec.strategy_score = image_pair_jih(current.gray, candidate.gray);
    factor = apply_jih_bias(factor, rec.strategy_score, config_.epsilon);
  }
  rec.biased_covariance = factor.covariance;
  rec.biased_trace = factor.covariance.trace();
  if (!(rec.biased_trace <= config_.max_covariance_trace)) {
    rec.reason = "covariance";
    return rec;
  }
  rec.accepted = true;
  rec.reason = "accepted";
  return rec;
}

void Pipeline::optimize() {
  since_optimization_ = 0;
  if (graph_.node_count() == 0) return;
  reports_.push_back(graph_.optimize(config_.optimizer));
}

SessionSummary Pipeline::finalize_session() {
  if (!active_) throw Error(ErrorCode::kSessionState, "no active session to finalize");
  const int session = *active_;
  optimize();

  if (session == 0) {
    baseline_.freeze();
    // Session-0 scores against the finished baseline, for the wear map only;
    // no session-0 factor is biased.
    if (uses_kld(config_.strategy) && baseline_.image_count() > 0) {
      for (std::size_t i = 0; i < observations_.size(); ++i) {
        const Keyframe& kf = keyframes_[i];
        const bool color = config_.strategy == Strategy::kKldColor;
        const auto dists = color ? kf.distributions : image_distributions(kf.gray);
        const auto base = color ? baseline_.color() : baseline_.gray();
        std::vector<double> per_channel;
        for (std::size_t c = 0; c < dists.size(); ++c) {
          per_channel.push_back(kld_channel(dists[c], base[c], config_.epsilon));
        }
        observations_[i].kld = mean_channel_kld(per_channel);
      }
    }
    std::vector<std::vector<Descriptor>> sets;
    std::size_t pool = 0;
    for (const Keyframe& k : keyframes_) {
      if (k.node.session != 0) continue;
      sets.push_back(k.features.descriptors);
      pool += k.features.descriptors.size();
    }
    const int k = static_cast<int>(std::min<std::size_t>(config_.vocabulary_size, pool));
    if (k >= 2) {
      vocabulary_ = build_vocabulary(sets, k, config_.vocabulary_seed, config_.vocabulary_iterations);
      for (Keyframe& kf : keyframes_) kf.bow = vocabulary_->transform(kf.features.descriptors);
    }
  }

  SessionSummary summary;
  summary.session = session;
  summary.nodes = graph_.session_node_count(session);
  for (const BetweenFactor& f : graph_.betweens()) {
    if (f.to.session != session) continue;
    if (f.kind == FactorKind::kOdometry) {
      ++summary.odometry_factors;
    } else {
      ++summary.loop_factors;
    }
  }
  for (const ObservationRecord& o : observations_) {
    if (o.node.session == session && o.odometry_gap) ++summary.odometry_gaps;
  }
  summary.decisions.assign(decisions_.begin() + static_cast<std::ptrdiff_t>(session_decision_start_),
                           decisions_.end());
  recorded_[session] = graph_.has_session(session) ? graph_.trajectory(session)
                                                   : std::vector<Pose2>{};
  active_.reset();
  return summary;
}

// --- decision log ------------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void write_decisions_csv(std::ostream& out, std::span<const LoopDecisionRecord> records) {
  out << "current_session,current_index,candidate_session,candidate_index,bow,matches,cov_trace,"
         "strategy_score,accepted,rel_x,rel_y,rel_yaw,reason\n";
  for (const LoopDecisionRecord& r : records) {
    const Pose2 rel = r.relative.value_or(Pose2{});
    const bool has = r.relative.has_value();
    out << r.current.session << ',' << r.current.index << ',' << r.candidate.session << ','
        << r.candidate.index << ',' << fmt(r.bow_score) << ',' << r.match_count << ','
        << fmt(r.covariance_trace) << ',' << fmt(r.strategy_score) << ',' << (r.accepted ? 1 : 0)
        << ',' << fmt(has ? rel.x : kNaN) << ',' << fmt(has ? rel.y : kNaN) << ','
        << fmt(has ? rel.yaw : kNaN) << ',' << r.reason << '\n';
  }
}

std::vector<LoopDecisionRecord> read_decisions_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<LoopDecisionRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 13) {
      throw Error(ErrorCode::kFormat,
                  path.string() + ":" + std::to_string(line_no) + ": expected 13 columns");
    }
    auto num = [&](int i) { return std::strtod(cells[static_cast<std::size_t>(i)].c_str(), nullptr); };
    LoopDecisionRecord r;
    r.current = {std::stoi(cells[0]), std::stoi(cells[1])};
    r.candidate = {std::stoi(cells[2]), std::stoi(cells[3])};
    r.bow_score = num(4);
    r.match_count = std::stoi(cells[5]);
    r.covariance_trace = num(6);
    r.strategy_score = num(7);
    r.accepted = cells[8] == "1";
    if (!std::isnan(num(9))) r.relative = Pose2(num(9), num(10), num(11));
    r.reason = cells[12];
    out.push_back(std::move(r));
  }
  return out;
}

void write_observations_csv(std::ostream& out, std::span<const ObservationRecord> records) {
  out << "session,index,kld,odometry_gap,keypoints,kld_seconds\n";
  for (const ObservationRecord& r : records) {
    out << r.node.session << ',' << r.node.index << ',' << fmt(r.kld) << ','
        << (r.odometry_gap ? 1 : 0) << ',' << r.keypoints << ',' << fmt(r.kld_seconds) << '\n';
  }
}

std::vector<ObservationRecord> read_observations_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<ObservationRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 6) {
      throw Error(ErrorCode::kFormat,
                  path.string() + ":" + std::to_string(line_no) + ": expected 6 columns");
    }
    ObservationRecord r;
    r.node = {std::stoi(cells[0]), std::stoi(cells[1])};
    r.kld = std::strtod(cells[2].c_str(), nullptr);
    r.odometry_gap = cells[3] == "1";
    r.keypoints = std::stoi(cells[4]);
    r.kld_seconds = std::strtod(cells[5].c_str(), nullptr);
    out.push_back(r);
  }
  return out;
}

}  // namespace groundslam
