#include "groundslam/posegraph.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "groundslam/error.hpp"

namespace groundslam {

namespace {

std::string node_name(const NodeId& id) {
  return "(" + std::to_string(id.session) + ", " + std::to_string(id.index) + ")";
}

Eigen::Vector3d prior_residual(const Pose2& measured, const Pose2& x) {
  return se2_log(measured.inverse() * x);
}

Eigen::Vector3d between_residual(const Pose2& measured, const Pose2& xi, const Pose2& xj) {
  const Pose2 predicted = xi.inverse() * xj;
  return se2_log(predicted.inverse() * measured);
}

Pose2 retract(const Pose2& x, const Eigen::Vector3d& delta) { return x * se2_exp(delta); }

constexpr double kJacobianStep = 1e-6;

template <typename F>
Eigen::Matrix3d numeric_jacobian(const Pose2& x, F&& residual_at) {
  Eigen::Matrix3d j;
  for (int k = 0; k < 3; ++k) {
    Eigen::Vector3d d = Eigen::Vector3d::Zero();
    d[k] = kJacobianStep;
    const Eigen::Vector3d plus = residual_at(retract(x, d));
    const Eigen::Vector3d minus = residual_at(retract(x, -d));
    Eigen::Vector3d diff = plus - minus;
    diff.z() = wrap_angle(diff.z());
    j.col(k) = diff / (2.0 * kJacobianStep);
  }
  return j;
}

Eigen::Matrix3d information_of(const Eigen::Matrix3d& cov) {
  Eigen::Matrix3d info = cov.inverse();
  return 0.5 * (info + info.transpose());
}

}  // namespace

bool is_spd(const Eigen::Matrix3d& cov) {
  if (!cov.allFinite()) return false;
  const double scale = cov.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) return false;
  if (!(cov - cov.transpose()).isZero(1e-9 * scale)) return false;
  Eigen::LLT<Eigen::Matrix3d> llt(0.5 * (cov + cov.transpose()));
  return llt.info() == Eigen::Success;
}

bool OptimizationReport::monotone() const {
  for (std::size_t i = 1; i < accepted_costs.size(); ++i) {
    if (accepted_costs[i] > accepted_costs[i - 1]) return false;
  }
  return true;
}

NodeId PoseGraph::add_node(int session, const Pose2& initial_guess) {
  auto& members = sessions_[session];
  const NodeId id{session, static_cast<int>(members.size())};
  members.push_back(nodes_.size());
  index_.emplace(id, nodes_.size());
  nodes_.push_back({id, initial_guess});
  return id;
}

std::size_t PoseGraph::dense(const NodeId& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorCode::kMissingNode, "unknown node " + node_name(id));
  return it->second;
}

void PoseGraph::add_prior(const PriorFactor& factor) {
  dense(factor.node);
  if (!is_spd(factor.covariance)) {
    throw Error(ErrorCode::kInvalidCovariance, "prior covariance is not SPD");
  }
  priors_.push_back(factor);
  prior_info_.push_back(information_of(factor.covariance));
}

void PoseGraph::add_between(const BetweenFactor& factor) {
  dense(factor.from);
  dense(factor.to);
  if (factor.from == factor.to) {
    throw Error(ErrorCode::kMissingNode, "between factor connects a node to itself");
  }
  if (!is_spd(factor.covariance)) {
    throw Error(ErrorCode::kInvalidCovariance, "between covariance is not SPD");
  }
  betweens_.push_back(factor);
  between_info_.push_back(information_of(factor.covariance));
}

Pose2 PoseGraph::estimate(const NodeId& id) const { return nodes_[dense(id)].estimate; }

std::vector<Pose2> PoseGraph::trajectory(int session) const {
  const auto it = sessions_.find(session);
  if (it == sessions_.end()) {
    throw Error(ErrorCode::kMissingSession, "unknown session " + std::to_string(session));
  }
  std::vector<Pose2> out;
  out.reserve(it->second.size());
  for (std::size_t i : it->second) out.push_back(nodes_[i].estimate);
  return out;
}

std::vector<int> PoseGraph::sessions() const {
  std::vector<int> out;
  for (const auto& [k, _] : sessions_) out.push_back(k);
  return out;
}

std::size_t PoseGraph::session_node_count(int session) const {
  const auto it = sessions_.find(session);
  return it == sessions_.end() ? 0 : it->second.size();
}

double PoseGraph::cost_of(const std::vector<Pose2>& states) const {
  double cost = 0.0;
  for (std::size_t f = 0; f < priors_.size(); ++f) {
    const Eigen::Vector3d e = prior_residual(priors_[f].pose, states[dense(priors_[f].node)]);
    cost += e.dot(prior_info_[f] * e);
  }
  for (std::size_t f = 0; f < betweens_.size(); ++f) {
    const auto& b = betweens_[f];
    const Eigen::Vector3d e =
        between_residual(b.relative, states[dense(b.from)], states[dense(b.to)]);
    cost += e.dot(between_info_[f] * e);
  }
  return cost;
}

double PoseGraph::cost() const {
  std::vector<Pose2> states;
  states.reserve(nodes_.size());
  for (const Node& n : nodes_) states.push_back(n.estimate);
  return cost_of(states);
}

void PoseGraph::check_gauge() const {
  std::vector<std::size_t> parent(nodes_.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&parent](std::size_t i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  };
  for (const auto& b : betweens_) parent[find(dense(b.from))] = find(dense(b.to));
  std::vector<bool> anchored(nodes_.size(), false);
  for (const auto& p : priors_) anchored[find(dense(p.node))] = true;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!anchored[find(i)]) {
      throw Error(ErrorCode::kUnconstrainedGauge,
                  "node " + node_name(nodes_[i].id) + " is not connected to any prior");
    }
  }
}

OptimizationReport PoseGraph::optimize(const OptimizerOptions& options) {
  OptimizationReport report;
  if (nodes_.empty()) return report;
  check_gauge();

  const std::size_t n = nodes_.size();
  std::vector<Pose2> states;
  states.reserve(n);
  for (const Node& node : nodes_) states.push_back(node.estimate);

  double cost = cost_of(states);
  report.initial_cost = cost;
  report.accepted_costs.push_back(cost);
  double lambda = options.initial_lambda;

  using Triplet = Eigen::Triplet<double>;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  bool pattern_analyzed = false;

  auto add_block = [](std::vector<Triplet>& t, std::size_t r, std::size_t c,
                      const Eigen::Matrix3d& m) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        t.emplace_back(static_cast<int>(3 * r + i), static_cast<int>(3 * c + j), m(i, j));
      }
    }
  };

  while (report.iterations < options.max_iterations && cost > 0.0) {
    std::vector<Triplet> triplets;
    triplets.reserve(9 * (n + priors_.size() + 4 * betweens_.size()));
    Eigen::VectorXd gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 * n));

    for (std::size_t f = 0; f < priors_.size(); ++f) {
      const auto& p = priors_[f];
      const std::size_t i = dense(p.node);
      const Eigen::Vector3d e = prior_residual(p.pose, states[i]);
      const Eigen::Matrix3d j =
          numeric_jacobian(states[i], [&](const Pose2& x) { return prior_residual(p.pose, x); });
      const Eigen::Matrix3d& info = prior_info_[f];
      add_block(triplets, i, i, j.transpose() * info * j);
      gradient.segment<3>(static_cast<Eigen::Index>(3 * i)) += j.transpose() * info * e;
    }
    for (std::size_t f = 0; f < betweens_.size(); ++f) {
      const auto& b = betweens_[f];
      const std::size_t i = dense(b.from);
      const std::size_t k = dense(b.to);
      const Eigen::Vector3d e = between_residual(b.relative, states[i], states[k]);
      const Eigen::Matrix3d ji = numeric_jacobian(
          states[i], [&](const Pose2& x) { return between_residual(b.relative, x, states[k]); });
      const Eigen::Matrix3d jk = numeric_jacobian(
          states[k], [&](const Pose2& x) { return between_residual(b.relative, states[i], x); });
      const Eigen::Matrix3d& info = between_info_[f];
      add_block(triplets, i, i, ji.transpose() * info * ji);
      add_block(triplets, k, k, jk.transpose() * info * jk);
      add_block(triplets, i, k, ji.transpose() * info * jk);
      add_block(triplets, k, i, jk.transpose() * info * ji);
      gradient.segment<3>(static_cast<Eigen::Index>(3 * i)) += ji.transpose() * info * e;
      gradient.segment<3>(static_cast<Eigen::Index>(3 * k)) += jk.transpose() * info * e;
    }
    Eigen::SparseMatrix<double> hessian(static_cast<Eigen::Index>(3 * n),
                                        static_cast<Eigen::Index>(3 * n));
    hessian.setFromTriplets(triplets.begin(), triplets.end());
    const Eigen::VectorXd diagonal = hessian.diagonal();

    bool accepted = false;
    while (!accepted && report.iterations < options.max_iterations) {
      ++report.iterations;
      Eigen::SparseMatrix<double> damped = hessian;
      for (Eigen::Index d = 0; d < damped.rows(); ++d) {
        damped.coeffRef(d, d) += lambda * std::max(diagonal[d], 1e-12);
      }
      if (!pattern_analyzed) {
        solver.analyzePattern(damped);
        pattern_analyzed = true;
      }
      solver.factorize(damped);
      if (solver.info() != Eigen::Success) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd step = solver.solve(-gradient);
      std::vector<Pose2> candidate(states);
      for (std::size_t i = 0; i < n; ++i) {
        candidate[i] = retract(states[i], step.segment<3>(static_cast<Eigen::Index>(3 * i)));
      }
      const double candidate_cost = cost_of(candidate);
      if (std::isfinite(candidate_cost) && candidate_cost <= cost) {
        const double decrease = cost - candidate_cost;
        states.swap(candidate);
        cost = candidate_cost;
        report.accepted_costs.push_back(cost);
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (decrease <= options.tolerance * std::max(cost, 1e-300) || cost == 0.0) {
          report.final_cost = cost;
          for (std::size_t i = 0; i < n; ++i) nodes_[i].estimate = states[i];
          return report;
        }
      } else {
        lambda *= 10.0;
        if (lambda > 1e12) break;
      }
    }
    if (!accepted) break;
  }
  report.final_cost = cost;
  for (std::size_t i = 0; i < n; ++i) nodes_[i].estimate = states[i];
  return report;
}

void PoseGraph::write_g2o(std::ostream& out) const {
  const auto old_precision = out.precision();
  out << std::setprecision(17);
  auto write_info = [&out](const Eigen::Matrix3d& info) {
    out << ' ' << info(0, 0) << ' ' << info(0, 1) << ' ' << info(0, 2) << ' ' << info(1, 1) << ' '
        << info(1, 2) << ' ' << info(2, 2);
  };
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Pose2& p = nodes_[i].estimate;
    out << "VERTEX_SE2 " << i << ' ' << p.x << ' ' << p.y << ' ' << p.yaw << '\n';
  }
  for (std::size_t f = 0; f < priors_.size(); ++f) {
    const auto& p = priors_[f];
    out << "EDGE_SE2_PRIOR " << dense(p.node) << ' ' << p.pose.x << ' ' << p.pose.y << ' '
        << p.pose.yaw;
    write_info(prior_info_[f]);
    out << '\n';
  }
  for (std::size_t f = 0; f < betweens_.size(); ++f) {
    const auto& b = betweens_[f];
    out << "EDGE_SE2 " << dense(b.from) << ' ' << dense(b.to) << ' ' << b.relative.x << ' '
        << b.relative.y << ' ' << b.relative.yaw;
    write_info(between_info_[f]);
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace groundslam
