#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cstddef>
#include <functional>

namespace morphgrasp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Transform = Eigen::Isometry3d;

/// URDF convention: R = Rz(yaw) * Ry(pitch) * Rx(roll).
Mat3 rpy_to_matrix(const Vec3& rpy);

/// Rotation about a unit axis (Rodrigues).
Mat3 axis_rotation(const Vec3& axis, double angle);

/// Origin as written in a URDF file. Kept in xyz/rpy form so a tree
/// serializes back to the exact text values it was parsed from.
struct Origin {
  Vec3 xyz = Vec3::Zero();
  Vec3 rpy = Vec3::Zero();

  Transform transform() const;
  bool operator==(const Origin&) const = default;
};

/// Closest point on triangle (a, b, c) to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Signed solid angle subtended by triangle (a, b, c) seen from p.
double triangle_solid_angle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Number of worker threads: MORPHGRASP_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Runs body(i) for i in [0, n). Each index is written by exactly one worker,
/// so results stored by index come out identical for any thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace morphgrasp
