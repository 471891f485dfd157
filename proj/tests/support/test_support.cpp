#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <stdexcept>

namespace morphgrasp::testing {

std::filesystem::path data_dir() { return MORPHGRASP_DATA_DIR; }

Hand load_hand(const std::string& name) {
  const auto dir = data_dir() / "hands";
  KinematicTree tree = load_urdf(dir / (name + ".urdf"));
  CanonicalMapping mapping = load_mapping(dir / (name + ".mapping.json"), tree);
  return {std::move(tree), std::move(mapping)};
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do v = Vec3(n(rng), n(rng), n(rng));
  while (v.norm() < 1e-3);
  return v.normalized();
}

LinkSpec box_link(const std::string& name, const Vec3& extents) {
  LinkSpec l;
  l.name = name;
  l.has_bounds = true;
  l.bbox_extents = extents;
  return l;
}

Eigen::Matrix4d translation(const Vec3& t) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.block<3, 1>(0, 3) = t;
  return m;
}

Eigen::Matrix4d rot_x(double a) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m(1, 1) = std::cos(a);
  m(1, 2) = -std::sin(a);
  m(2, 1) = std::sin(a);
  m(2, 2) = std::cos(a);
  return m;
}

Eigen::Matrix4d rot_y(double a) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m(0, 0) = std::cos(a);
  m(0, 2) = std::sin(a);
  m(2, 0) = -std::sin(a);
  m(2, 2) = std::cos(a);
  return m;
}

Eigen::Matrix4d rot_z(double a) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m(0, 0) = std::cos(a);
  m(0, 1) = -std::sin(a);
  m(1, 0) = std::sin(a);
  m(1, 1) = std::cos(a);
  return m;
}

Eigen::Matrix4d about_axis(const Vec3& axis, double a) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.block<3, 3>(0, 0) = Eigen::AngleAxisd(a, axis.normalized()).toRotationMatrix();
  return m;
}

}  // namespace

KinematicTree random_tree(std::mt19937_64& rng, int joints, int max_depth) {
  std::vector<LinkSpec> links;
  std::vector<JointSpec> specs;
  std::vector<int> depth;
  auto extents = [&] { return Vec3(uniform(rng, 0.01, 0.05), uniform(rng, 0.01, 0.05), uniform(rng, 0.01, 0.05)); };
  links.push_back(box_link("base", extents()));
  depth.push_back(0);
  for (int j = 0; j < joints; ++j) {
    std::vector<int> open;
    for (std::size_t l = 0; l < links.size(); ++l)
      if (depth[l] < max_depth) open.push_back(static_cast<int>(l));
    const int parent = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
    LinkSpec child = box_link("link" + std::to_string(j), extents());
    child.bbox_offset.xyz = Vec3(uniform(rng, -0.02, 0.02), uniform(rng, -0.02, 0.02), uniform(rng, -0.02, 0.02));
    JointSpec js;
    js.name = "joint" + std::to_string(j);
    js.kind = JointKind::Revolute;
    js.parent_link = links[static_cast<std::size_t>(parent)].name;
    js.child_link = child.name;
    js.origin.xyz = Vec3(uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1));
    js.origin.rpy = Vec3(uniform(rng, -3, 3), uniform(rng, -1.5, 1.5), uniform(rng, -3, 3));
    js.axis = random_unit(rng);
    js.limit_lower = -std::numbers::pi;
    js.limit_upper = std::numbers::pi;
    specs.push_back(js);
    links.push_back(child);
    depth.push_back(depth[static_cast<std::size_t>(parent)] + 1);
  }
  return KinematicTree::build("random", std::move(links), std::move(specs));
}

KinematicTree serial_chain(int joints, double offset, const Vec3& axis) {
  std::vector<LinkSpec> links{box_link("l0", Vec3(0.02, 0.02, 0.02))};
  std::vector<JointSpec> specs;
  for (int j = 0; j < joints; ++j) {
    links.push_back(box_link("l" + std::to_string(j + 1), Vec3(0.02, 0.02, 0.02)));
    JointSpec js;
    js.name = "j" + std::to_string(j);
    js.kind = JointKind::Revolute;
    js.parent_link = "l" + std::to_string(j);
    js.child_link = "l" + std::to_string(j + 1);
    js.origin.xyz = Vec3(j == 0 ? 0.0 : offset, 0, 0);
    js.axis = axis;
    js.limit_lower = -std::numbers::pi;
    js.limit_upper = std::numbers::pi;
    specs.push_back(js);
  }
  return KinematicTree::build("chain", std::move(links), std::move(specs));
}

std::vector<Eigen::Matrix4d> naive_fk(const KinematicTree& tree, const std::vector<double>& angles) {
  // Angle index of each independent joint in storage order.
  std::vector<int> angle_of(tree.joints().size(), -1);
  int next = 0;
  for (std::size_t j = 0; j < tree.joints().size(); ++j)
    if (tree.joints()[j].independent()) angle_of[j] = next++;
  if (next != static_cast<int>(angles.size())) throw std::invalid_argument("naive_fk: angle count");

  std::vector<Eigen::Matrix4d> out;
  for (const LinkSpec& link : tree.links()) {
    Eigen::Matrix4d acc = Eigen::Matrix4d::Identity();
    std::string name = link.name;
    for (;;) {
      const auto it = std::find_if(tree.joints().begin(), tree.joints().end(),
                                   [&](const JointSpec& j) { return j.child_link == name; });
      if (it == tree.joints().end()) break;
      const auto j = static_cast<std::size_t>(it - tree.joints().begin());
      const JointSpec& js = *it;
      Eigen::Matrix4d local = translation(js.origin.xyz) * rot_z(js.origin.rpy.z()) * rot_y(js.origin.rpy.y()) *
                              rot_x(js.origin.rpy.x());
      if (js.kind == JointKind::Revolute) local = local * about_axis(js.axis, angles[static_cast<std::size_t>(angle_of[j])]);
      if (js.kind == JointKind::Prismatic)
        local = local * translation(js.axis * angles[static_cast<std::size_t>(angle_of[j])]);
      acc = local * acc;
      name = js.parent_link;
    }
    out.push_back(acc);
  }
  return out;
}

std::vector<double> random_angles(const KinematicTree& tree, std::mt19937_64& rng) {
  std::vector<double> a;
  for (int d = 0; d < tree.dof_count(); ++d) {
    const JointSpec& js = tree.joints()[static_cast<std::size_t>(tree.joint_of_dof(d))];
    a.push_back(uniform(rng, js.limit_lower, js.limit_upper));
  }
  return a;
}

GradCheckResult gradcheck(const std::function<ad::Var()>& f, const std::vector<ad::Var>& leaves, double step,
                          std::size_t max_entries, std::uint64_t seed) {
  std::vector<ad::Var> ls = leaves;
  for (auto& l : ls) l.zero_grad();
  ad::backward(f());
  std::vector<ad::Matrix> analytic;
  for (const auto& l : ls) analytic.push_back(l.grad());
  for (auto& l : ls) l.zero_grad();

  std::mt19937_64 rng(seed);
  std::vector<double> a, n;
  for (std::size_t i = 0; i < ls.size(); ++i) {
    ad::Matrix& v = ls[i].mutable_value();
    const auto size = static_cast<std::size_t>(v.size());
    std::vector<std::size_t> idx(size);
    for (std::size_t k = 0; k < size; ++k) idx[k] = k;
    if (max_entries > 0 && size > max_entries) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_entries);
    }
    for (std::size_t k : idx) {
      double& x = v.data()[k];
      const double saved = x;
      x = saved + step;
      const double up = f().value()(0, 0);
      x = saved - step;
      const double down = f().value()(0, 0);
      x = saved;
      a.push_back(analytic[i].data()[k]);
      n.push_back((up - down) / (2.0 * step));
    }
  }
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff += (a[k] - n[k]) * (a[k] - n[k]);
    na += a[k] * a[k];
    nn += n[k] * n[k];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  return {std::sqrt(diff) / scale, a.size()};
}

ad::Var random_projection(const ad::Var& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  ad::Matrix w(x.rows(), x.cols());
  for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = n(rng);
  return ad::sum(ad::mul(x, ad::constant(w)));
}

double spf_oracle(const PointMatrix& points, const PointMatrix& cloud, double tau, double eps_guard) {
  double sum = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < cloud.rows(); ++k) best = std::min(best, (points.row(i) - cloud.row(k)).norm());
    if (best < tau) {
      sum += std::sqrt(best);
      ++count;
    }
  }
  return sum / (count + eps_guard);
}

namespace {

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double s = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + s * ab)).norm();
}

double triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 n = (b - a).cross(c - a);
  const Vec3 q = p - n * (p - a).dot(n) / n.squaredNorm();
  // Inside test via same-side signs of the three edge normals.
  const double s0 = (b - a).cross(q - a).dot(n);
  const double s1 = (c - b).cross(q - b).dot(n);
  const double s2 = (a - c).cross(q - c).dot(n);
  if (s0 >= 0 && s1 >= 0 && s2 >= 0) return (p - q).norm();
  return std::min({segment_distance(p, a, b), segment_distance(p, b, c), segment_distance(p, c, a)});
}

bool ray_hits(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 h = d.cross(e2);
  const double det = e1.dot(h);
  if (std::abs(det) < 1e-14) return false;
  const Vec3 s = o - a;
  const double u = s.dot(h) / det;
  if (u < 0 || u > 1) return false;
  const Vec3 q = s.cross(e1);
  const double v = d.dot(q) / det;
  if (v < 0 || u + v > 1) return false;
  return e2.dot(q) / det > 0;
}

}  // namespace

double brute_sdf(const TriangleMesh& mesh, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  int hits = 0;
  // An irrational-ish direction avoids grazing edges of axis-aligned meshes.
  const Vec3 dir = Vec3(0.5377, 0.3137, 0.7833).normalized();
  for (Eigen::Index t = 0; t < mesh.triangles.rows(); ++t) {
    const Vec3 a = mesh.vertices.row(mesh.triangles(t, 0)).transpose();
    const Vec3 b = mesh.vertices.row(mesh.triangles(t, 1)).transpose();
    const Vec3 c = mesh.vertices.row(mesh.triangles(t, 2)).transpose();
    best = std::min(best, triangle_distance(p, a, b, c));
    if (ray_hits(p, dir, a, b, c)) ++hits;
  }
  return hits % 2 == 1 ? -best : best;
}

double erf_oracle(const PointMatrix& points, const TriangleMesh& mesh) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) sum += std::max(0.0, -brute_sdf(mesh, points.row(i).transpose()));
  return sum / static_cast<double>(points.rows());
}

double srf_oracle(const PointMatrix& points, const std::vector<int>& links, const KinematicTree* tree, double d_th) {
  auto adjacent = [&](int a, int b) {
    if (!tree) return false;
    const std::string& na = tree->links()[static_cast<std::size_t>(a)].name;
    const std::string& nb = tree->links()[static_cast<std::size_t>(b)].name;
    for (const JointSpec& j : tree->joints())
      if ((j.parent_link == na && j.child_link == nb) || (j.parent_link == nb && j.child_link == na)) return true;
    return false;
  };
  const std::set<int> present(links.begin(), links.end());
  if (present.size() < 2) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    for (Eigen::Index j = i + 1; j < points.rows(); ++j) {
      const int li = links[static_cast<std::size_t>(i)], lj = links[static_cast<std::size_t>(j)];
      if (li == lj || adjacent(li, lj)) continue;
      sum += std::max(0.0, d_th - (points.row(i) - points.row(j)).norm());
    }
  return sum / static_cast<double>(present.size());
}

}  // namespace morphgrasp::testing
