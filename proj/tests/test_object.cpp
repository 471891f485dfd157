#include "morphgrasp/errors.hpp"
#include "morphgrasp/object.hpp"
#include "morphgrasp/point_encoder.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

using namespace morphgrasp;
namespace mt = morphgrasp::testing;

namespace {

PointMatrix random_cloud(int n, std::uint64_t seed, double scale = 0.05) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  PointMatrix p(n, 3);
  for (Eigen::Index k = 0; k < p.size(); ++k) p.data()[k] = d(rng);
  return p;
}

std::vector<std::vector<int>> brute_knn(const PointMatrix& pts, const std::vector<int>& centers, int m) {
  std::vector<std::vector<int>> out;
  for (int c : centers) {
    std::vector<int> idx(static_cast<std::size_t>(pts.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      return (pts.row(a) - pts.row(c)).squaredNorm() < (pts.row(b) - pts.row(c)).squaredNorm();
    });
    idx.resize(static_cast<std::size_t>(m));
    out.push_back(idx);
  }
  return out;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("morphgrasp_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(FarthestPointSampling, HandExamples) {
  PointMatrix line(10, 3);
  for (int i = 0; i < 10; ++i) line.row(i) << i, 0, 0;
  auto two = farthest_point_sampling(line, 2, 0);
  EXPECT_EQ(two, (std::vector<int>{0, 9}));
  auto all = farthest_point_sampling(line, 10, 3);
  std::sort(all.begin(), all.end());
  std::vector<int> expect(10);
  std::iota(expect.begin(), expect.end(), 0);
  EXPECT_EQ(all, expect);
  EXPECT_EQ(farthest_point_sampling(line, 1, 4), std::vector<int>{4});
  EXPECT_THROW(farthest_point_sampling(line, 11, 0), ArityError);
}

TEST(FarthestPointSampling, IndependentOfStorageOrder) {
  const PointMatrix pts = random_cloud(300, 1);
  std::vector<int> perm(300);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(2);
  std::shuffle(perm.begin(), perm.end(), rng);
  PointMatrix shuffled(300, 3);
  for (int i = 0; i < 300; ++i) shuffled.row(i) = pts.row(perm[static_cast<std::size_t>(i)]);
  const auto a = farthest_point_sampling(pts, 20, centroid_start_index(pts));
  const auto b = farthest_point_sampling(shuffled, 20, centroid_start_index(shuffled));
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(perm[static_cast<std::size_t>(b[k])], a[k]);
}

TEST(GroupPoints, SingleNeighbourIsCenter) {
  const PointMatrix pts = random_cloud(50, 3);
  const std::vector<int> centers{4, 17, 33};
  const auto groups = group_points(pts, centers, 1);
  for (std::size_t k = 0; k < centers.size(); ++k) EXPECT_EQ(groups[k], std::vector<int>{centers[k]});
}

TEST(GroupPoints, GridMatchesBruteForce) {
  PointMatrix grid(125, 3);
  int r = 0;
  for (int x = 0; x < 5; ++x)
    for (int y = 0; y < 5; ++y)
      for (int z = 0; z < 5; ++z) grid.row(r++) << x, y, z;
  const std::vector<int> centers{0, 62, 124, 7};
  EXPECT_EQ(group_points(grid, centers, 9), brute_knn(grid, centers, 9));
}

TEST(GroupPoints, DuplicatesTieBreakByIndex) {
  PointMatrix pts(5, 3);
  pts << 0, 0, 0, 1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0;
  const auto groups = group_points(pts, {2}, 3);
  EXPECT_EQ(groups[0], (std::vector<int>{0, 2, 4}));
}

TEST(PointEncoder, TranslationInvariantFeatures) {
  ParamStore params;
  std::mt19937_64 rng(4);
  PointEncoder enc({16, 8, 8}, params, rng);
  const PointMatrix pts = random_cloud(100, 5);
  const ObjectModel a = ObjectModel::create(pts);
  const ObjectModel b = a.transformed(Mat3::Identity(), Vec3(0.3, -0.1, 2.0));
  const auto fa = enc.encode_points(a);
  const auto fb = enc.encode_points(b);
  EXPECT_LT((fa.P - fb.P).cwiseAbs().maxCoeff(), 1e-9);
  for (Eigen::Index i = 0; i < fa.centers.rows(); ++i)
    EXPECT_TRUE((fb.centers.row(i) - fa.centers.row(i)).transpose().isApprox(Vec3(0.3, -0.1, 2.0), 1e-9));
}

TEST(PointEncoder, PermutationInvariantWithCentroidStart) {
  ParamStore params;
  std::mt19937_64 rng(6);
  PointEncoder enc({16, 8, 6}, params, rng);
  const PointMatrix pts = random_cloud(120, 7);
  std::vector<int> perm(120);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  PointMatrix shuffled(120, 3);
  for (int i = 0; i < 120; ++i) shuffled.row(i) = pts.row(perm[static_cast<std::size_t>(i)]);
  const auto fa = enc.encode_points(ObjectModel::create(pts));
  const auto fb = enc.encode_points(ObjectModel::create(shuffled));
  EXPECT_LT((fa.P - fb.P).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PointEncoder, ShapeIndependentOfCloudSize) {
  ParamStore params;
  std::mt19937_64 rng(8);
  PointEncoder enc({16, 8, 4}, params, rng);
  for (int n : {8, 9, 64, 500}) {
    const auto f = enc.encode_points(ObjectModel::create(random_cloud(n, static_cast<std::uint64_t>(n))));
    EXPECT_EQ(f.P.rows(), 8);
    EXPECT_EQ(f.P.cols(), 16);
    EXPECT_TRUE(f.P.allFinite());
  }
  EXPECT_THROW(enc.encode_points(ObjectModel::create(random_cloud(7, 1))), ArityError);
}

TEST(PointEncoder, GradientMatchesFiniteDifferences) {
  ParamStore params;
  std::mt19937_64 rng(9);
  PointEncoder enc({16, 8, 8}, params, rng);
  const PointGrouping grouping = group_cloud(random_cloud(64, 10), enc.config());
  std::vector<ad::Var> leaves;
  for (const auto& [name, v] : params.items()) leaves.push_back(v);
  const auto res = mt::gradcheck([&] { return mt::random_projection(enc.encode(grouping), 11); }, leaves);
  EXPECT_LT(res.relative_error, 1e-3);
}

TEST(SignedDistance, UnitSphereOracles) {
  const int subdiv = 3;
  const ObjectModel sphere = ObjectModel::create(random_cloud(10, 1), std::nullopt, make_icosphere(1.0, subdiv));
  const double chord = icosphere_chord_error(1.0, subdiv);
  PointMatrix q(3, 3);
  q << 0.5, 0, 0, 0, 2.0, 0, 0, 0, 1.0;
  const Eigen::VectorXd d = signed_distance(sphere, q);
  EXPECT_NEAR(d[0], -0.5, 2 * chord);
  EXPECT_NEAR(d[1], 1.0, 2 * chord);
  EXPECT_NEAR(d[2], 0.0, 2 * chord);
  // Random directions at both radii.
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    const Vec3 u = Vec3(n(rng), n(rng), n(rng)).normalized();
    PointMatrix two(2, 3);
    two.row(0) = 0.5 * u.transpose();
    two.row(1) = 2.0 * u.transpose();
    const Eigen::VectorXd s = signed_distance(sphere, two);
    EXPECT_LT(s[0], 0.0);
    EXPECT_GT(s[1], 0.0);
    EXPECT_NEAR(s[0], -0.5, 2 * chord);
    EXPECT_NEAR(s[1], 1.0, 2 * chord);
  }
}

TEST(SignedDistance, MatchesBruteForceOnBox) {
  const TriangleMesh box = make_box_mesh(Vec3(0.04, 0.06, 0.05));
  const ObjectModel obj = ObjectModel::create(random_cloud(10, 2), std::nullopt, box);
  const PointMatrix q = random_cloud(200, 13, 0.04);
  const Eigen::VectorXd d = signed_distance(obj, q);
  for (Eigen::Index i = 0; i < q.rows(); ++i) EXPECT_NEAR(d[i], mt::brute_sdf(box, q.row(i).transpose()), 1e-12);
}

TEST(SignedDistance, OneLipschitzAlongSegments) {
  const int subdiv = 3;
  const ObjectModel sphere = ObjectModel::create(random_cloud(10, 1), std::nullopt, make_icosphere(1.0, subdiv));
  const double chord = icosphere_chord_error(1.0, subdiv);
  const PointMatrix a = random_cloud(200, 14, 1.0), b = random_cloud(200, 15, 1.0);
  const Eigen::VectorXd da = signed_distance(sphere, a), db = signed_distance(sphere, b);
  for (Eigen::Index i = 0; i < a.rows(); ++i) EXPECT_LE(std::abs(da[i] - db[i]), (a.row(i) - b.row(i)).norm() + 2 * chord);
}

TEST(SignedDistance, GradientPointsOutward) {
  const ObjectModel sphere = ObjectModel::create(random_cloud(10, 1), std::nullopt, make_icosphere(1.0, 3));
  PointMatrix q(2, 3), g;
  q << 0.3, 0.2, 0.1, 1.5, -0.4, 0.2;
  signed_distance(sphere, q, &g);
  for (Eigen::Index i = 0; i < 2; ++i) EXPECT_GT(g.row(i).dot(q.row(i).normalized()), 0.95);
}

TEST(SignedDistance, CapabilityAndWatertightErrors) {
  const ObjectModel bare = ObjectModel::create(random_cloud(10, 1));
  EXPECT_THROW(signed_distance(bare, random_cloud(2, 2)), CapabilityError);
  TriangleMesh open = make_box_mesh(Vec3(1, 1, 1));
  open.triangles.conservativeResize(open.triangles.rows() - 1, 3);
  EXPECT_FALSE(is_watertight(open));
  EXPECT_TRUE(is_watertight(make_icosphere(1.0, 2)));
  const ObjectModel leaky = ObjectModel::create(random_cloud(10, 1), std::nullopt, open);
  EXPECT_TRUE(leaky.mesh_rejected());
  EXPECT_THROW(signed_distance(leaky, random_cloud(2, 2)), ValidationError);
}

TEST(SignedDistance, NormalFallbackProjectsOntoNearestNormal) {
  PointMatrix pts(2, 3), normals(2, 3);
  pts << 0, 0, 0, 1, 0, 0;
  normals << 0, 0, 1, 0, 0, 1;
  const ObjectModel plane = ObjectModel::create(pts, normals);
  PointMatrix q(2, 3);
  q << 0.1, 0, 0.3, 0.9, 0, -0.2;
  const Eigen::VectorXd d = signed_distance(plane, q);
  EXPECT_NEAR(d[0], 0.3, 1e-12);
  EXPECT_NEAR(d[1], -0.2, 1e-12);
}

TEST(ObjectModel, RejectsEmptyAndNonUnitNormals) {
  EXPECT_THROW(ObjectModel::create(PointMatrix(0, 3)), ValidationError);
  PointMatrix n(1, 3);
  n << 0, 0, 2;
  EXPECT_THROW(ObjectModel::create(random_cloud(1, 1), n), ValidationError);
}

TEST(ObjectIo, PlyAndXyzRoundTrip) {
  const auto dir = temp_dir("object_io");
  PointMatrix normals;
  const TriangleMesh mesh = make_icosphere(0.03, 2);
  const PointMatrix pts = sample_mesh_surface(mesh, 100, 3, &normals);
  save_ply(dir / "s.ply", pts, &normals, &mesh);
  const ObjectModel back = load_object(dir / "s.ply");
  EXPECT_LT((back.points() - pts).cwiseAbs().maxCoeff(), 1e-12);
  ASSERT_TRUE(back.normals().has_value());
  EXPECT_TRUE(back.has_mesh());

  {
    std::ofstream out(dir / "c.xyz");
    out << "0 0 0 0 0 1\n1 2 3 1 0 0\n";
  }
  const ObjectModel xyz = load_object(dir / "c.xyz");
  EXPECT_EQ(xyz.points().rows(), 2);
  EXPECT_EQ(xyz.points().row(1), Eigen::RowVector3d(1, 2, 3));
  EXPECT_THROW(load_object(dir / "missing.ply"), IoError);
}
