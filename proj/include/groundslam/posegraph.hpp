#pragma once

#include <compare>
#include <map>
#include <ostream>
#include <vector>

#include <Eigen/Core>

#include "groundslam/geometry.hpp"

namespace groundslam {

struct NodeId {
  int session = 0;
  int index = 0;

  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

struct PriorFactor {
  NodeId node;
  Pose2 pose;
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity();
};

enum class FactorKind { kOdometry, kLoopClosure };

struct BetweenFactor {
  NodeId from;
  NodeId to;
  Pose2 relative;  // pose of `to` expressed in the frame of `from`
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity();
  FactorKind kind = FactorKind::kOdometry;
};

/// True if `cov` is finite, symmetric (relative 1e-9) and positive definite.
bool is_spd(const Eigen::Matrix3d& cov);

struct OptimizationReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  /// Cost after every accepted step, starting with the initial cost.
  std::vector<double> accepted_costs;

  bool monotone() const;
};

struct OptimizerOptions {
  int max_iterations = 100;
  double tolerance = 1e-10;  // relative cost decrease
  double initial_lambda = 1e-4;
};

/// SE(2) pose graph over all sessions, optimised by Levenberg-Marquardt on
/// sum ||Log(predicted^-1 * measured)||^2_{Sigma^-1} with right-multiplied
/// exponential updates.
class PoseGraph {
 public:
  NodeId add_node(int session, const Pose2& initial_guess);
  void add_prior(const PriorFactor& factor);
  void add_between(const BetweenFactor& factor);

  OptimizationReport optimize(const OptimizerOptions& options = {});

  bool has_node(const NodeId& id) const { return index_.contains(id); }
  bool has_session(int session) const { return sessions_.contains(session); }
  Pose2 estimate(const NodeId& id) const;
  std::vector<Pose2> trajectory(int session) const;
  std::vector<int> sessions() const;

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t session_node_count(int session) const;
  const std::vector<PriorFactor>& priors() const { return priors_; }
  const std::vector<BetweenFactor>& betweens() const { return betweens_; }

  double cost() const;

  /// VERTEX_SE2 / EDGE_SE2 / EDGE_SE2_PRIOR lines, information upper triangle.
  void write_g2o(std::ostream& out) const;

 private:
  struct Node {
    NodeId id;
    Pose2 estimate;
  };

  std::size_t dense(const NodeId& id) const;
  double cost_of(const std::vector<Pose2>& states) const;
  void check_gauge() const;

  std::vector<Node> nodes_;
  std::map<NodeId, std::size_t> index_;
  std::map<int, std::vector<std::size_t>> sessions_;
  std::vector<PriorFactor> priors_;
  std::vector<BetweenFactor> betweens_;
  std::vector<Eigen::Matrix3d> prior_info_;
  std::vector<Eigen::Matrix3d> between_info_;
};

}  // namespace groundslam
