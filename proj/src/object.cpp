#include "morphgrasp/object.hpp"

#include "morphgrasp/binary_io.hpp"
#include "morphgrasp/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

namespace morphgrasp {

bool is_watertight(const TriangleMesh& mesh) {
  if (mesh.triangles.rows() == 0) return false;
  std::map<std::pair<int, int>, int> edges;
  for (Eigen::Index t = 0; t < mesh.triangles.rows(); ++t) {
    for (int e = 0; e < 3; ++e) {
      int a = mesh.triangles(t, e), b = mesh.triangles(t, (e + 1) % 3);
      if (a > b) std::swap(a, b);
      ++edges[{a, b}];
    }
  }
  for (const auto& [edge, count] : edges)
    if (count != 2) return false;
  return true;
}

// ---- MeshSdf ----------------------------------------------------------------

MeshSdf::MeshSdf(TriangleMesh mesh) : mesh_(std::move(mesh)) {
  const int n = static_cast<int>(mesh_.triangles.rows());
  if (n == 0) throw GeometryError("mesh has no triangles");
  order_.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order_[static_cast<std::size_t>(i)] = i;
  nodes_.reserve(static_cast<std::size_t>(2 * n));
  build(0, n);
}

Vec3 MeshSdf::vertex(int tri, int corner) const { return mesh_.vertices.row(mesh_.triangles(tri, corner)).transpose(); }

Vec3 MeshSdf::face_normal(int tri) const {
  const Vec3 n = (vertex(tri, 1) - vertex(tri, 0)).cross(vertex(tri, 2) - vertex(tri, 0));
  const double len = n.norm();
  return len > 0 ? Vec3(n / len) : Vec3::UnitZ();
}

int MeshSdf::build(int begin, int end) {
  const int index = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Eigen::AlignedBox3d box;
  Eigen::AlignedBox3d centroids;
  for (int i = begin; i < end; ++i) {
    const int t = order_[static_cast<std::size_t>(i)];
    for (int c = 0; c < 3; ++c) box.extend(vertex(t, c));
    centroids.extend((vertex(t, 0) + vertex(t, 1) + vertex(t, 2)) / 3.0);
  }
  nodes_[static_cast<std::size_t>(index)].box = box;
  if (end - begin <= 4) {
    nodes_[static_cast<std::size_t>(index)].begin = begin;
    nodes_[static_cast<std::size_t>(index)].end = end;
    return index;
  }
  int axis = 0;
  centroids.sizes().maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  auto key = [&](int t) { return vertex(t, 0)(axis) + vertex(t, 1)(axis) + vertex(t, 2)(axis); };
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return key(a) < key(b) || (key(a) == key(b) && a < b); });
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[static_cast<std::size_t>(index)].left = left;
  nodes_[static_cast<std::size_t>(index)].right = right;
  return index;
}

double MeshSdf::distance(const Vec3& p, Vec3* closest, int* triangle) const {
  double best = std::numeric_limits<double>::infinity();
  Vec3 best_point = Vec3::Zero();
  int best_tri = -1;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    if (node.box.squaredExteriorDistance(p) >= best * best) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int t = order_[static_cast<std::size_t>(i)];
        const Vec3 c = closest_point_on_triangle(p, vertex(t, 0), vertex(t, 1), vertex(t, 2));
        const double d = (p - c).norm();
        if (d < best || (d == best && t < best_tri)) {
          best = d;
          best_point = c;
          best_tri = t;
        }
      }
      continue;
    }
    const Node& l = nodes_[static_cast<std::size_t>(node.left)];
    const Node& r = nodes_[static_cast<std::size_t>(node.right)];
    // Visit the nearer child first.
    if (l.box.squaredExteriorDistance(p) < r.box.squaredExteriorDistance(p)) {
      stack.push_back(node.right);
      stack.push_back(node.left);
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  if (closest) *closest = best_point;
  if (triangle) *triangle = best_tri;
  return best;
}

double MeshSdf::winding_number(const Vec3& p) const {
  // A closed surface has winding number zero outside its bounding box.
  if (nodes_[0].box.squaredExteriorDistance(p) > 0.0) return 0.0;
  double total = 0.0;
  for (Eigen::Index t = 0; t < mesh_.triangles.rows(); ++t) {
    const int ti = static_cast<int>(t);
    total += triangle_solid_angle(p, vertex(ti, 0), vertex(ti, 1), vertex(ti, 2));
  }
  return total / (4.0 * std::numbers::pi);
}

double MeshSdf::signed_distance(const Vec3& p, Vec3* gradient) const {
  Vec3 c;
  int tri = -1;
  const double d = distance(p, &c, &tri);
  const double sign = std::abs(winding_number(p)) >= 0.5 ? -1.0 : 1.0;
  if (gradient) *gradient = d > 1e-12 ? Vec3(sign * (p - c) / d) : face_normal(tri);
  return sign * d;
}

// ---- ObjectModel ------------------------------------------------------------

ObjectModel ObjectModel::create(PointMatrix points, std::optional<PointMatrix> normals,
                                std::optional<TriangleMesh> mesh) {
  if (points.rows() < 1) throw ValidationError("object has no points");
  if (!points.allFinite()) throw ValidationError("object points must be finite");
  if (normals) {
    if (normals->rows() != points.rows()) throw ArityError("object normals count differs from point count");
    for (Eigen::Index i = 0; i < normals->rows(); ++i) {
      if (std::abs(normals->row(i).norm() - 1.0) > 1e-4) {
        throw ValidationError("object normal " + std::to_string(i) + " is not unit length");
      }
    }
  }
  ObjectModel o;
  o.points_ = std::move(points);
  o.normals_ = std::move(normals);
  if (mesh) {
    if (is_watertight(*mesh)) {
      o.sdf_ = std::make_shared<const MeshSdf>(std::move(*mesh));
    } else {
      o.mesh_rejected_ = true;
    }
  }
  return o;
}

ObjectModel ObjectModel::transformed(const Mat3& r, const Vec3& t) const {
  ObjectModel o = *this;
  o.points_ = (points_ * r.transpose()).rowwise() + t.transpose();
  if (normals_) o.normals_ = PointMatrix(*normals_ * r.transpose());
  if (sdf_) {
    TriangleMesh m = sdf_->mesh();
    m.vertices = (m.vertices * r.transpose()).rowwise() + t.transpose();
    o.sdf_ = std::make_shared<const MeshSdf>(std::move(m));
  }
  return o;
}

std::pair<int, double> nearest_point(const PointMatrix& points, const Vec3& q) {
  int best = -1;
  double best_sq = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const double d = (points.row(i).transpose() - q).squaredNorm();
    if (d < best_sq) {
      best_sq = d;
      best = static_cast<int>(i);
    }
  }
  return {best, std::sqrt(best_sq)};
}

Eigen::VectorXd signed_distance(const ObjectModel& object, const PointMatrix& queries, PointMatrix* gradients) {
  if (object.mesh_rejected()) throw ValidationError("signed_distance: object mesh is not watertight");
  const MeshSdf* sdf = object.sdf();
  if (!sdf && !object.normals()) throw CapabilityError("signed_distance: object has neither mesh nor normals");
  const auto n = static_cast<std::size_t>(queries.rows());
  Eigen::VectorXd out(queries.rows());
  if (gradients) gradients->resize(queries.rows(), 3);
  parallel_for(n, [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    const Vec3 q = queries.row(row).transpose();
    Vec3 g;
    if (sdf) {
      out(row) = sdf->signed_distance(q, &g);
    } else {
      const auto [k, dist] = nearest_point(object.points(), q);
      g = object.normals()->row(k).transpose();
      out(row) = g.dot(q - object.points().row(k).transpose());
    }
    if (gradients) gradients->row(row) = g.transpose();
  });
  return out;
}

int centroid_start_index(const PointMatrix& points) {
  if (points.rows() == 0) throw ArityError("centroid_start_index: empty cloud");
  const Vec3 c = points.colwise().mean().transpose();
  return nearest_point(points, c).first;
}

std::vector<int> farthest_point_sampling(const PointMatrix& points, int k, int start) {
  const int n = static_cast<int>(points.rows());
  if (k < 1 || k > n) throw ArityError("farthest_point_sampling: k=" + std::to_string(k) + " with n=" + std::to_string(n));
  if (start < 0 || start >= n) throw RangeError("farthest_point_sampling: start index out of range");
  std::vector<int> chosen{start};
  Eigen::VectorXd min_d = (points.rowwise() - points.row(start)).rowwise().squaredNorm();
  while (static_cast<int>(chosen.size()) < k) {
    int next = 0;
    min_d.maxCoeff(&next);  // first maximum wins
    chosen.push_back(next);
    min_d = min_d.cwiseMin((points.rowwise() - points.row(next)).rowwise().squaredNorm());
  }
  return chosen;
}

std::vector<std::vector<int>> group_points(const PointMatrix& points, const std::vector<int>& centers, int m) {
  const int n = static_cast<int>(points.rows());
  if (m < 1 || m > n) throw ArityError("group_points: m=" + std::to_string(m) + " with n=" + std::to_string(n));
  std::vector<std::vector<int>> groups(centers.size());
  parallel_for(centers.size(), [&](std::size_t g) {
    const Eigen::VectorXd d = (points.rowwise() - points.row(centers[g])).rowwise().squaredNorm();
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    std::partial_sort(idx.begin(), idx.begin() + m, idx.end(),
                      [&](int a, int b) { return d(a) < d(b) || (d(a) == d(b) && a < b); });
    idx.resize(static_cast<std::size_t>(m));
    groups[g] = std::move(idx);
  });
  return groups;
}

// ---- primitives -------------------------------------------------------------

TriangleMesh make_icosphere(double radius, int subdivisions) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0}, {0, -1, phi}, {0, 1, phi},
                         {0, -1, -phi}, {0, 1, -phi}, {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
  std::vector<std::array<int, 3>> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                       {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                       {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                       {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (auto& p : v) p.normalize();
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const std::pair<int, int> key{std::min(a, b), std::max(a, b)};
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      v.push_back(((v[static_cast<std::size_t>(a)] + v[static_cast<std::size_t>(b)]) / 2.0).normalized());
      const int idx = static_cast<int>(v.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    for (const auto& t : f) {
      const int a = mid(t[0], t[1]), b = mid(t[1], t[2]), c = mid(t[2], t[0]);
      next.push_back({t[0], a, c});
      next.push_back({t[1], b, a});
      next.push_back({t[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  TriangleMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = radius * v[i].transpose();
  mesh.triangles.resize(static_cast<Eigen::Index>(f.size()), 3);
  for (std::size_t i = 0; i < f.size(); ++i)
    for (int c = 0; c < 3; ++c) mesh.triangles(static_cast<Eigen::Index>(i), c) = f[i][static_cast<std::size_t>(c)];
  return mesh;
}

double icosphere_chord_error(double radius, int subdivisions) {
  const TriangleMesh m = make_icosphere(radius, subdivisions);
  double min_d = radius;
  for (Eigen::Index t = 0; t < m.triangles.rows(); ++t) {
    const Vec3 c = closest_point_on_triangle(Vec3::Zero(), m.vertices.row(m.triangles(t, 0)).transpose(),
                                             m.vertices.row(m.triangles(t, 1)).transpose(),
                                             m.vertices.row(m.triangles(t, 2)).transpose());
    min_d = std::min(min_d, c.norm());
  }
  return radius - min_d;
}

TriangleMesh make_box_mesh(const Vec3& extents) {
  const Vec3 h = extents / 2.0;
  TriangleMesh m;
  m.vertices.resize(8, 3);
  for (int i = 0; i < 8; ++i) {
    m.vertices.row(i) << ((i & 1) ? h.x() : -h.x()), ((i & 2) ? h.y() : -h.y()), ((i & 4) ? h.z() : -h.z());
  }
  // Counter-clockwise seen from outside.
  m.triangles.resize(12, 3);
  m.triangles << 0, 4, 6, 0, 6, 2,  // -x
      1, 3, 7, 1, 7, 5,             // +x
      0, 1, 5, 0, 5, 4,             // -y
      2, 6, 7, 2, 7, 3,             // +y
      0, 2, 3, 0, 3, 1,             // -z
      4, 5, 7, 4, 7, 6;             // +z
  return m;
}

PointMatrix sample_mesh_surface(const TriangleMesh& mesh, int n, std::uint64_t seed, PointMatrix* normals) {
  if (n < 1) throw ArityError("sample_mesh_surface: n must be positive");
  const Eigen::Index nt = mesh.triangles.rows();
  std::vector<double> area(static_cast<std::size_t>(nt));
  for (Eigen::Index t = 0; t < nt; ++t) {
    const Vec3 a = mesh.vertices.row(mesh.triangles(t, 0)).transpose();
    const Vec3 b = mesh.vertices.row(mesh.triangles(t, 1)).transpose();
    const Vec3 c = mesh.vertices.row(mesh.triangles(t, 2)).transpose();
    area[static_cast<std::size_t>(t)] = 0.5 * (b - a).cross(c - a).norm();
  }
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> pick(area.begin(), area.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointMatrix out(n, 3);
  if (normals) normals->resize(n, 3);
  for (int i = 0; i < n; ++i) {
    const int t = pick(rng);
    const double r1 = std::sqrt(unit(rng)), r2 = unit(rng);
    const Vec3 a = mesh.vertices.row(mesh.triangles(t, 0)).transpose();
    const Vec3 b = mesh.vertices.row(mesh.triangles(t, 1)).transpose();
    const Vec3 c = mesh.vertices.row(mesh.triangles(t, 2)).transpose();
    out.row(i) = ((1 - r1) * a + r1 * (1 - r2) * b + r1 * r2 * c).transpose();
    if (normals) normals->row(i) = (b - a).cross(c - a).normalized().transpose();
  }
  return out;
}

// ---- IO ---------------------------------------------------------------------

namespace {

std::string read_file(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::optional<PointMatrix> normalized_normals(const std::vector<Vec3>& normals, std::size_t count) {
  if (normals.empty()) return std::nullopt;
  if (normals.size() != count) throw ParseError("normals present on some points only", 0);
  PointMatrix n(static_cast<Eigen::Index>(count), 3);
  for (std::size_t i = 0; i < count; ++i) {
    const double len = normals[i].norm();
    if (len == 0) throw ValidationError("zero normal at point " + std::to_string(i));
    n.row(static_cast<Eigen::Index>(i)) = (normals[i] / len).transpose();
  }
  return n;
}

PointMatrix to_matrix(const std::vector<Vec3>& pts) {
  PointMatrix m(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return m;
}

}  // namespace

ObjectModel load_xyz(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<Vec3> pts, normals;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<double> v;
    double x;
    while (ls >> x) v.push_back(x);
    if (!ls.eof()) throw ParseError("xyz: non-numeric token", line_no);
    if (v.empty()) continue;
    if (v.size() != 3 && v.size() != 6) throw ParseError("xyz: expected 3 or 6 values", line_no);
    pts.emplace_back(v[0], v[1], v[2]);
    if (v.size() == 6) normals.emplace_back(v[3], v[4], v[5]);
  }
  return ObjectModel::create(to_matrix(pts), normalized_normals(normals, pts.size()));
}

ObjectModel load_ply(const std::filesystem::path& path) {
  const std::string data = read_file(path, std::ios::in | std::ios::binary);
  const auto header_end = data.find("end_header");
  if (data.rfind("ply", 0) != 0 || header_end == std::string::npos) throw ParseError("ply: missing header", 1);
  std::size_t body = data.find('\n', header_end);
  if (body == std::string::npos) throw ParseError("ply: truncated header", 0);
  ++body;

  struct Property {
    std::string name, type, count_type;
    bool list = false;
  };
  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<Property> props;
  };
  std::vector<Element> elements;
  bool binary = false;
  std::istringstream hs(data.substr(0, header_end));
  std::string line;
  int line_no = 0;
  while (std::getline(hs, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") binary = true;
      else if (fmt != "ascii") throw ParseError("ply: unsupported format '" + fmt + "'", line_no);
    } else if (kw == "element") {
      Element e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty()) throw ParseError("ply: property before element", line_no);
      Property p;
      ls >> p.type;
      if (p.type == "list") {
        p.list = true;
        ls >> p.count_type >> p.type;
      }
      ls >> p.name;
      elements.back().props.push_back(p);
    }
  }

  auto type_size = [](const std::string& t) -> std::size_t {
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
    if (t == "double" || t == "float64") return 8;
    throw ParseError("ply: unknown type '" + t + "'", 0);
  };
  std::size_t pos = body;
  std::istringstream text(binary ? std::string() : data.substr(body));
  auto read_value = [&](const std::string& t) -> double {
    if (!binary) {
      double v;
      if (!(text >> v)) throw ParseError("ply: truncated ascii body", 0);
      return v;
    }
    const std::size_t sz = type_size(t);
    if (pos + sz > data.size()) throw ParseError("ply: truncated binary body", 0);
    const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos);
    pos += sz;
    if (t == "float" || t == "float32") return binary::get_f32(p);
    if (t == "double" || t == "float64") return binary::get_f64(p);
    if (t == "char" || t == "int8") return static_cast<std::int8_t>(p[0]);
    if (t == "uchar" || t == "uint8") return p[0];
    if (t == "short" || t == "int16") return static_cast<std::int16_t>(binary::get_le<std::uint16_t>(p));
    if (t == "ushort" || t == "uint16") return binary::get_le<std::uint16_t>(p);
    if (t == "int" || t == "int32") return static_cast<std::int32_t>(binary::get_u32(p));
    return binary::get_u32(p);
  };

  std::vector<Vec3> pts, normals, samples, sample_normals;
  std::vector<std::array<int, 3>> tris;
  for (const Element& e : elements) {
    for (std::size_t i = 0; i < e.count; ++i) {
      Vec3 p = Vec3::Zero(), n = Vec3::Zero();
      bool has_n = false;
      for (const Property& prop : e.props) {
        if (prop.list) {
          const auto count = static_cast<std::size_t>(read_value(prop.count_type));
          std::vector<int> idx(count);
          for (auto& k : idx) k = static_cast<int>(read_value(prop.type));
          if (e.name == "face" && count >= 3) {
            for (std::size_t k = 1; k + 1 < count; ++k) tris.push_back({idx[0], idx[k], idx[k + 1]});
          }
          continue;
        }
        const double v = read_value(prop.type);
        if (e.name != "vertex" && e.name != "sample") continue;
        if (prop.name == "x") p.x() = v;
        else if (prop.name == "y") p.y() = v;
        else if (prop.name == "z") p.z() = v;
        else if (prop.name == "nx") n.x() = v, has_n = true;
        else if (prop.name == "ny") n.y() = v, has_n = true;
        else if (prop.name == "nz") n.z() = v, has_n = true;
      }
      if (e.name == "vertex") {
        pts.push_back(p);
        if (has_n) normals.push_back(n);
      } else if (e.name == "sample") {
        samples.push_back(p);
        if (has_n) sample_normals.push_back(n);
      }
    }
  }
  std::optional<TriangleMesh> mesh;
  if (!tris.empty()) {
    TriangleMesh m;
    m.vertices = to_matrix(pts);
    m.triangles.resize(static_cast<Eigen::Index>(tris.size()), 3);
    for (std::size_t t = 0; t < tris.size(); ++t) {
      for (int c = 0; c < 3; ++c) {
        const int k = tris[t][static_cast<std::size_t>(c)];
        if (k < 0 || static_cast<std::size_t>(k) >= pts.size()) throw ParseError("ply: face index out of range", 0);
        m.triangles(static_cast<Eigen::Index>(t), c) = k;
      }
    }
    mesh = std::move(m);
  }
  if (!samples.empty()) {
    return ObjectModel::create(to_matrix(samples), normalized_normals(sample_normals, samples.size()),
                               std::move(mesh));
  }
  return ObjectModel::create(to_matrix(pts), normalized_normals(normals, pts.size()), std::move(mesh));
}

void save_ply(const std::filesystem::path& path, const PointMatrix& points, const PointMatrix* normals,
              const TriangleMesh* mesh) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  if (normals && normals->rows() != points.rows()) throw ValidationError("save_ply: normals/points row mismatch");
  // With a mesh, vertex/face hold the mesh and the sampled cloud goes in a separate "sample" element.
  const PointMatrix& verts = mesh ? mesh->vertices : points;
  const bool vertex_normals = normals && !mesh;
  out << "ply\nformat ascii 1.0\nelement vertex " << verts.rows() << "\n"
      << "property double x\nproperty double y\nproperty double z\n";
  if (vertex_normals) out << "property double nx\nproperty double ny\nproperty double nz\n";
  if (mesh) {
    out << "element face " << mesh->triangles.rows() << "\nproperty list uchar int vertex_indices\n";
    out << "element sample " << points.rows() << "\nproperty double x\nproperty double y\nproperty double z\n";
    if (normals) out << "property double nx\nproperty double ny\nproperty double nz\n";
  }
  out << "end_header\n";
  out.precision(17);
  auto write_rows = [&out](const PointMatrix& p, const PointMatrix* n) {
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      out << p(i, 0) << ' ' << p(i, 1) << ' ' << p(i, 2);
      if (n) out << ' ' << (*n)(i, 0) << ' ' << (*n)(i, 1) << ' ' << (*n)(i, 2);
      out << '\n';
    }
  };
  write_rows(verts, vertex_normals ? normals : nullptr);
  if (mesh) {
    for (Eigen::Index t = 0; t < mesh->triangles.rows(); ++t)
      out << "3 " << mesh->triangles(t, 0) << ' ' << mesh->triangles(t, 1) << ' ' << mesh->triangles(t, 2) << '\n';
    write_rows(points, normals);
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

ObjectModel load_object(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".xyz" || ext == ".txt") return load_xyz(path);
  if (ext == ".ply") return load_ply(path);
  throw IoError("unsupported object format '" + ext + "'");
}

}  // namespace morphgrasp
