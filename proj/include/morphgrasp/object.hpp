#pragma once

#include "morphgrasp/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

namespace morphgrasp {

using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;

struct TriangleMesh {
  PointMatrix vertices;
  Eigen::Matrix<int, Eigen::Dynamic, 3> triangles;
};

/// Every undirected edge is shared by exactly two triangles.
bool is_watertight(const TriangleMesh& mesh);

/// Nearest-triangle queries over a bounding-volume hierarchy plus a
/// generalized winding number for the inside test. Immutable once built.
class MeshSdf {
 public:
  explicit MeshSdf(TriangleMesh mesh);

  /// Unsigned distance; writes the closest surface point when requested.
  double distance(const Vec3& p, Vec3* closest = nullptr, int* triangle = nullptr) const;
  double winding_number(const Vec3& p) const;
  /// Negative inside. `gradient` receives d(sdf)/dp.
  double signed_distance(const Vec3& p, Vec3* gradient = nullptr) const;

  const TriangleMesh& mesh() const { return mesh_; }

 private:
  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1, right = -1;  // children, or -1 for a leaf
    int begin = 0, end = 0;     // range into order_ for leaves
  };
  int build(int begin, int end);
  Vec3 vertex(int tri, int corner) const;
  Vec3 face_normal(int tri) const;

  TriangleMesh mesh_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

class ObjectModel {
 public:
  /// Validates invariants: at least one point, unit normals. A mesh that is not
  /// watertight is kept out of SDF queries, which then raise ValidationError.
  static ObjectModel create(PointMatrix points, std::optional<PointMatrix> normals = std::nullopt,
                            std::optional<TriangleMesh> mesh = std::nullopt);

  const PointMatrix& points() const { return points_; }
  const std::optional<PointMatrix>& normals() const { return normals_; }
  bool has_mesh() const { return static_cast<bool>(sdf_) || mesh_rejected_; }
  bool mesh_rejected() const { return mesh_rejected_; }
  const MeshSdf* sdf() const { return sdf_.get(); }

  /// Applies p -> R p + t to points, normals and mesh.
  ObjectModel transformed(const Mat3& r, const Vec3& t) const;

 private:
  PointMatrix points_;
  std::optional<PointMatrix> normals_;
  std::shared_ptr<const MeshSdf> sdf_;
  bool mesh_rejected_ = false;
};

/// Signed distances in query order; fills d(sdf)/dp rows when `gradients` is non-null.
Eigen::VectorXd signed_distance(const ObjectModel& object, const PointMatrix& queries,
                                PointMatrix* gradients = nullptr);

/// Index of the nearest stored point and its distance, by exhaustive search.
std::pair<int, double> nearest_point(const PointMatrix& points, const Vec3& q);

/// Index of the point closest to the centroid (lowest index on ties).
int centroid_start_index(const PointMatrix& points);
std::vector<int> farthest_point_sampling(const PointMatrix& points, int k, int start);
/// m nearest neighbours per center, ties broken by lower index.
std::vector<std::vector<int>> group_points(const PointMatrix& points, const std::vector<int>& centers, int m);

// ---- primitives and IO ------------------------------------------------------

TriangleMesh make_icosphere(double radius, int subdivisions);
TriangleMesh make_box_mesh(const Vec3& extents);
/// Area-uniform surface samples; outward face normals written to `normals`.
PointMatrix sample_mesh_surface(const TriangleMesh& mesh, int n, std::uint64_t seed, PointMatrix* normals = nullptr);
/// Largest chord deviation of a mesh inscribed in a sphere of `radius`.
double icosphere_chord_error(double radius, int subdivisions);

/// ASCII "x y z [nx ny nz]" lines.
ObjectModel load_xyz(const std::filesystem::path& path);
/// ASCII or binary little-endian PLY with optional normals and triangle faces.
ObjectModel load_ply(const std::filesystem::path& path);
void save_ply(const std::filesystem::path& path, const PointMatrix& points, const PointMatrix* normals = nullptr,
              const TriangleMesh* mesh = nullptr);
/// Dispatches on extension (.xyz or .ply).
ObjectModel load_object(const std::filesystem::path& path);

}  // namespace morphgrasp
