#pragma once

#include "coupler/contact.hpp"
#include "coupler/optimize.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace coupler {

enum class HandlePlacement { kDisplacement, kSpatial, kFile };

struct HandleOptions {
  HandlePlacement placement = HandlePlacement::kDisplacement;
  int count = 5;  // spatial only
  std::filesystem::path file;
};

// A single JSON document describing one run. Relative paths are resolved
// against the directory of the config file; unknown keys are rejected.
struct RunConfig {
  std::filesystem::path mesh;
  std::filesystem::path object;

  Material material;
  double thickness = 1.0;

  double surface_spacing = 0.2;
  std::optional<double> surface_sigma;

  Eigen::Vector2d start = Eigen::Vector2d::Zero();
  double start_rotation = 0.0;
  Eigen::Vector2d direction = Eigen::Vector2d(-1.0, 0.0);
  std::optional<double> length;  // auto when absent
  std::optional<double> h_in;    // default length / 40
  double total_rotation = 0.0;

  std::vector<int> fixed_vertices;
  std::optional<Eigen::AlignedBox2d> fixed_box;
  ConstraintMode fixed_mode = ConstraintMode::kInsertionAxis;

  SolverSettings solver;
  TargetSpec target;
  AnnealSettings anneal;
  HandleOptions handles;

  std::filesystem::path output = "out";
  std::uint64_t seed = 0;
  bool write_meshes = false;

  void validate() const;
  // Normalized document with absolute paths and every field explicit;
  // parsing it back yields an identical configuration.
  nlohmann::json to_json() const;
};

RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

// Loads the mesh and object and assembles the insertion problem.
InsertionProblem build_problem(const RunConfig& config);

// Uniform step count for the requested h_in: ceil(length / h_in).
int path_increments(double length, double h_in);

}  // namespace coupler
