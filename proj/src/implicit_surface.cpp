#include "coupler/implicit_surface.hpp"

#include "coupler/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

namespace coupler {

namespace {

// Squared distance above which every unshifted Gaussian weight underflows.
constexpr double kUnderflowExponent = 700.0;

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

bool segments_intersect(const Eigen::Vector2d& p1, const Eigen::Vector2d& p2, const Eigen::Vector2d& q1,
                        const Eigen::Vector2d& q2) {
  const double d1 = cross2(q2 - q1, p1 - q1);
  const double d2 = cross2(q2 - q1, p2 - q1);
  const double d3 = cross2(p2 - p1, q1 - p1);
  const double d4 = cross2(p2 - p1, q2 - p1);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  auto on_segment = [](const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
    return std::min(a.x(), b.x()) <= c.x() && c.x() <= std::max(a.x(), b.x()) && std::min(a.y(), b.y()) <= c.y() &&
           c.y() <= std::max(a.y(), b.y());
  };
  if (d1 == 0 && on_segment(q1, q2, p1)) return true;
  if (d2 == 0 && on_segment(q1, q2, p2)) return true;
  if (d3 == 0 && on_segment(p1, p2, q1)) return true;
  if (d4 == 0 && on_segment(p1, p2, q2)) return true;
  return false;
}

}  // namespace

Eigen::Matrix2d RigidPose::rotation_matrix() const {
  const double c = std::cos(rotation);
  const double s = std::sin(rotation);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

Eigen::Vector2d RigidPose::apply(const Eigen::Vector2d& p) const { return rotation_matrix() * p + translation; }

Eigen::Vector2d RigidPose::apply_inverse(const Eigen::Vector2d& p) const {
  return rotation_matrix().transpose() * (p - translation);
}

RigidPose RigidPose::compose(const RigidPose& other) const {
  RigidPose out;
  out.rotation = rotation + other.rotation;
  out.translation = rotation_matrix() * other.translation + translation;
  return out;
}

double Polyline::signed_area() const {
  double twice = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) twice += cross2(points[i], points[(i + 1) % points.size()]);
  return 0.5 * twice;
}

Eigen::Vector2d Polyline::centroid() const {
  const double area = signed_area();
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& a = points[i];
    const auto& b = points[(i + 1) % points.size()];
    c += (a + b) * cross2(a, b);
  }
  return c / (6.0 * area);
}

double Polyline::perimeter() const {
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) total += (points[(i + 1) % points.size()] - points[i]).norm();
  return total;
}

Polyline read_polyline(std::istream& in) {
  Polyline poly;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    double x = 0, y = 0;
    if (!(row >> x >> y)) throw ParseError("polyline: malformed point on line " + std::to_string(line_no));
    poly.points.emplace_back(x, y);
  }
  if (poly.points.size() > 1 && poly.points.front() == poly.points.back()) poly.points.pop_back();
  return poly;
}

Polyline load_polyline(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open polyline file " + path.string());
  try {
    return validated_polyline(read_polyline(in));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

Polyline validated_polyline(Polyline poly) {
  const auto n = poly.points.size();
  if (n < 3) throw ParseError("polyline needs at least 3 points, got " + std::to_string(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (poly.points[i] == poly.points[(i + 1) % n]) {
      throw ParseError("polyline has a repeated point at index " + std::to_string(i));
    }
  }
  double extent = 0.0;
  for (const auto& p : poly.points) extent = std::max(extent, (p - poly.points.front()).norm());
  if (std::abs(poly.signed_area()) <= 1e-12 * extent * extent) {
    throw ParseError("polyline encloses no area (open or collinear)");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (segments_intersect(poly.points[i], poly.points[(i + 1) % n], poly.points[j], poly.points[(j + 1) % n])) {
        throw ParseError("polyline self-intersects: edges " + std::to_string(i) + " and " + std::to_string(j));
      }
    }
  }
  if (poly.signed_area() < 0) {
    spdlog::warn("polyline: clockwise input reversed to counter-clockwise");
    std::reverse(poly.points.begin(), poly.points.end());
  }
  return poly;
}

ImplicitSurface::ImplicitSurface(Eigen::Matrix2Xd samples, Eigen::Matrix2Xd normals, double sigma)
    : samples_(std::move(samples)), normals_(std::move(normals)), sigma_(sigma) {
  if (samples_.cols() < 1) throw Error("implicit surface needs at least one sample");
  if (normals_.cols() != samples_.cols()) throw Error("implicit surface: sample/normal count mismatch");
  if (!(sigma_ > 0.0)) throw Error("implicit surface: sigma must be > 0");
  for (Eigen::Index i = 0; i < normals_.cols(); ++i) {
    if (std::abs(normals_.col(i).norm() - 1.0) > 1e-9) {
      throw Error("implicit surface: normal " + std::to_string(i) + " is not unit length");
    }
  }
}

double ImplicitSurface::eval_object_frame(const Eigen::Vector2d& x, Eigen::Vector2d* gradient) const {
  const Eigen::Index n = samples_.cols();
  const double inv_s2 = 1.0 / (sigma_ * sigma_);
  double d2_min = std::numeric_limits<double>::infinity();
  Eigen::Index nearest = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d2 = (x - samples_.col(i)).squaredNorm();
    if (d2 < d2_min) {
      d2_min = d2;
      nearest = i;
    }
  }
  if (d2_min * inv_s2 > kUnderflowExponent) {
    // Every Gaussian underflows: signed distance to the nearest sample plane.
    if (gradient) *gradient = -normals_.col(nearest);
    return -normals_.col(nearest).dot(x - samples_.col(nearest));
  }

  // Weights shifted by the nearest sample; the common factor cancels.
  double num = 0.0;
  double den = 0.0;
  Eigen::Vector2d d_num = Eigen::Vector2d::Zero();
  Eigen::Vector2d d_den = Eigen::Vector2d::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector2d r = x - samples_.col(i);
    const double w = std::exp(-(r.squaredNorm() - d2_min) * inv_s2);
    const double offset = normals_.col(i).dot(r);
    num += w * offset;
    den += w;
    if (gradient) {
      const Eigen::Vector2d dw = (-2.0 * w * inv_s2) * r;
      d_num += w * normals_.col(i) + offset * dw;
      d_den += dw;
    }
  }
  if (gradient) *gradient = -(d_num * den - num * d_den) / (den * den);
  return -num / den;
}

double ImplicitSurface::psi_and_gradient(const Eigen::Vector2d& x, Eigen::Vector2d* gradient) const {
  const Eigen::Vector2d local = pose_.apply_inverse(x);
  if (!gradient) return eval_object_frame(local, nullptr);
  Eigen::Vector2d g_local;
  const double value = eval_object_frame(local, &g_local);
  *gradient = pose_.rotation_matrix() * g_local;
  return value;
}

double ImplicitSurface::psi(const Eigen::Vector2d& x) const { return psi_and_gradient(x, nullptr); }

Eigen::Vector2d ImplicitSurface::psi_gradient(const Eigen::Vector2d& x) const {
  Eigen::Vector2d g;
  psi_and_gradient(x, &g);
  return g;
}

Eigen::Matrix2Xd ImplicitSurface::world_samples() const {
  Eigen::Matrix2Xd out(2, samples_.cols());
  for (Eigen::Index i = 0; i < samples_.cols(); ++i) out.col(i) = pose_.apply(samples_.col(i));
  return out;
}

ImplicitSurface build_surface(const Polyline& input, double spacing, std::optional<double> sigma) {
  if (!(spacing > 0.0)) throw Error("surface sample spacing must be > 0");
  const Polyline poly = validated_polyline(input);
  const auto n = poly.points.size();
  std::vector<Eigen::Vector2d> samples;
  std::vector<Eigen::Vector2d> normals;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d a = poly.points[i];
    const Eigen::Vector2d b = poly.points[(i + 1) % n];
    const Eigen::Vector2d edge = b - a;
    const double length = edge.norm();
    const int pieces = std::max(1, static_cast<int>(std::ceil(length / spacing - 1e-9)));
    const Eigen::Vector2d normal = Eigen::Vector2d(edge.y(), -edge.x()) / length;
    for (int k = 0; k < pieces; ++k) {
      samples.push_back(a + edge * ((k + 0.5) / pieces));
      normals.push_back(normal);
    }
  }
  Eigen::Matrix2Xd s(2, samples.size());
  Eigen::Matrix2Xd nn(2, normals.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    s.col(static_cast<Eigen::Index>(i)) = samples[i];
    nn.col(static_cast<Eigen::Index>(i)) = normals[i];
  }
  const double mean_spacing = poly.perimeter() / static_cast<double>(samples.size());
  return ImplicitSurface(std::move(s), std::move(nn), sigma.value_or(2.0 * mean_spacing));
}

}  // namespace coupler
