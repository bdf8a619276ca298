#pragma once

#include "coupler/elasticity.hpp"
#include "coupler/mesh.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace coupler {

struct Handle {
  int vertex = 0;
  bool active = true;
  friend bool operator==(const Handle&, const Handle&) = default;
};

// Bounded biharmonic weights, one column per handle: each column minimizes
// w^T L M^-1 L w (cotangent Laplacian L, lumped mass M) over [0, 1] with
// w = 1 at its own handle and 0 at the others; rows are then normalized.
// Throws Error on an empty or duplicated handle list.
Eigen::MatrixXd compute_bbw(const Mesh& mesh, const std::vector<Handle>& handles);

// Blend matrix with rows [w_i1 x_i, w_i1 y_i, w_i1, w_i2 x_i, ...]
// (n x 3m), so X' = M_LBS T for T stacking [A_j^T; b_j^T] per handle.
Eigen::MatrixXd lbs_matrix(const Mesh& mesh, const Eigen::MatrixXd& weights);

struct HandleSet {
  std::vector<Handle> handles;
  Eigen::MatrixXd weights;  // n x m
  Eigen::MatrixXd blend;    // n x 3m

  int size() const { return static_cast<int>(handles.size()); }
  std::vector<int> active_indices() const;
};

HandleSet make_handle_set(const Mesh& mesh, std::vector<Handle> handles);

// Axis-aligned scale about the handle vertex followed by a translation.
struct HandleTransform {
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();
  Eigen::Vector2d scale = Eigen::Vector2d::Ones();
};

// One transform per handle of the set; inactive entries are ignored.
using HandleTransforms = std::vector<HandleTransform>;

// Stacked 3m x 2 matrix T of the affine handle maps.
Eigen::MatrixXd stack_transforms(const Mesh& mesh, const HandleSet& set, const HandleTransforms& t);

// X' = X + M_LBS (T - T_identity). Identity transforms give X' == X exactly,
// and inactive handles always act as the identity.
Eigen::MatrixXd apply_handles(const Mesh& mesh, const HandleSet& set, const HandleTransforms& t);

// Affinity propagation on a dense similarity matrix whose diagonal holds
// the preferences. Returns the exemplar index of every point.
struct AffinitySettings {
  int max_iterations = 400;
  int convergence_iterations = 30;
  double damping = 0.5;  // raised toward 1 on retries when a run oscillates
  std::uint64_t seed = 0;
};
std::vector<int> affinity_propagation(Eigen::MatrixXd similarity, const AffinitySettings& settings = {});

struct Placement {
  std::vector<Handle> handles;
  std::vector<int> labels;  // cluster id per vertex
};

// Clusters vertices by their maximum displacement over a baseline insertion.
// Similarity of two vertices is minus the cheapest mesh-graph path between
// them with edge cost |d_a - d_b|; preference is the median similarity.
// Clusters holding displacement-constrained vertices get no active handle;
// those vertices become inactive handles instead.
Placement place_handles_displacement(const Mesh& mesh, const Eigen::VectorXd& max_displacement,
                                     const std::vector<FixedDof>& fixed, const AffinitySettings& settings = {});

// k-medoids on vertex coordinates with a seeded k-means++ start.
Placement place_handles_spatial(const Mesh& mesh, int k, std::uint64_t seed = 0);

nlohmann::json handles_to_json(const std::vector<Handle>& handles);
std::vector<Handle> handles_from_json(const nlohmann::json& j);

}  // namespace coupler
