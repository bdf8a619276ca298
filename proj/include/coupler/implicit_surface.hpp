#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

namespace coupler {

// Rigid transform p -> R(rotation) p + translation.
struct RigidPose {
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();
  double rotation = 0.0;  // radians, counter-clockwise

  Eigen::Matrix2d rotation_matrix() const;
  Eigen::Vector2d apply(const Eigen::Vector2d& p) const;
  Eigen::Vector2d apply_inverse(const Eigen::Vector2d& p) const;
  // (this * other)(p) = this(other(p)).
  RigidPose compose(const RigidPose& other) const;
};

// Closed 2D polyline bounding the rigid object, counter-clockwise so that
// edge normals (dy, -dx) point out of the object.
struct Polyline {
  std::vector<Eigen::Vector2d> points;

  double signed_area() const;
  Eigen::Vector2d centroid() const;
  double perimeter() const;
};

// One "x y" pair per line; blank lines and '#' comments are skipped. A
// repeated closing point is dropped.
Polyline read_polyline(std::istream& in);
Polyline load_polyline(const std::filesystem::path& path);

// Throws ParseError for fewer than 3 distinct points, zero enclosed area,
// repeated consecutive points or self-intersection. Clockwise input is
// reversed with a warning.
Polyline validated_polyline(Polyline polyline);

// Gaussian-weighted implicit moving least squares field over oriented
// samples of the rigid object:
//   psi(x) = -sum n_i.(x - v_i) phi_i(x) / sum phi_i(x),
//   phi_i(x) = exp(-|x - v_i|^2 / sigma^2).
// Negative outside the object, positive inside. Samples live in the object
// frame; evaluation applies the current pose.
class ImplicitSurface {
 public:
  ImplicitSurface(Eigen::Matrix2Xd samples, Eigen::Matrix2Xd normals, double sigma);

  const Eigen::Matrix2Xd& samples() const { return samples_; }
  const Eigen::Matrix2Xd& normals() const { return normals_; }
  int sample_count() const { return static_cast<int>(samples_.cols()); }
  double sigma() const { return sigma_; }

  const RigidPose& pose() const { return pose_; }
  void set_pose(const RigidPose& pose) { pose_ = pose; }

  double psi(const Eigen::Vector2d& x) const;
  Eigen::Vector2d psi_gradient(const Eigen::Vector2d& x) const;
  double psi_and_gradient(const Eigen::Vector2d& x, Eigen::Vector2d* gradient) const;

  // Samples and normals mapped to the world frame by the current pose.
  Eigen::Matrix2Xd world_samples() const;

 private:
  double eval_object_frame(const Eigen::Vector2d& x, Eigen::Vector2d* gradient) const;

  Eigen::Matrix2Xd samples_;
  Eigen::Matrix2Xd normals_;
  double sigma_;
  RigidPose pose_;
};

// Samples the polyline at edge sub-segment midpoints with spacing <= `spacing`
// and edge normals. sigma defaults to twice the mean sample spacing.
ImplicitSurface build_surface(const Polyline& polyline, double spacing, std::optional<double> sigma = std::nullopt);

}  // namespace coupler
