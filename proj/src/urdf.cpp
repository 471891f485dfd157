#include "morphgrasp/urdf.hpp"

#include "morphgrasp/errors.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace morphgrasp {

namespace pt = boost::property_tree;
using json = nlohmann::ordered_json;

const char* to_string(JointKind kind) {
  switch (kind) {
    case JointKind::Revolute: return "revolute";
    case JointKind::Prismatic: return "prismatic";
    case JointKind::Fixed: return "fixed";
    case JointKind::Mimic: return "mimic";
  }
  return "?";
}

namespace {

constexpr double kAxisTolerance = 1e-6;

std::vector<double> parse_numbers(const std::string& text, std::size_t expected, const std::string& where) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string token;
  while (in >> token) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') throw ValidationError(where + ": not a number '" + token + "'");
    out.push_back(v);
  }
  if (out.size() != expected) {
    throw ValidationError(where + ": expected " + std::to_string(expected) + " numbers, got " +
                          std::to_string(out.size()));
  }
  return out;
}

double parse_scalar(const std::string& text, const std::string& where) {
  return parse_numbers(text, 1, where)[0];
}

Vec3 parse_vec3(const std::string& text, const std::string& where) {
  const auto v = parse_numbers(text, 3, where);
  return {v[0], v[1], v[2]};
}

std::optional<std::string> attr(const pt::ptree& node, const char* name) {
  if (auto a = node.get_child_optional("<xmlattr>")) {
    if (auto v = a->get_optional<std::string>(name)) return *v;
  }
  return std::nullopt;
}

std::string require_attr(const pt::ptree& node, const char* name, const std::string& where) {
  auto v = attr(node, name);
  if (!v) throw ValidationError(where + ": missing attribute '" + name + "'");
  return *v;
}

Origin parse_origin(const pt::ptree& parent, const std::string& where) {
  Origin o;
  if (auto node = parent.get_child_optional("origin")) {
    if (auto xyz = attr(*node, "xyz")) o.xyz = parse_vec3(*xyz, where + " origin xyz");
    if (auto rpy = attr(*node, "rpy")) o.rpy = parse_vec3(*rpy, where + " origin rpy");
  }
  return o;
}

LinkSpec parse_link(const pt::ptree& node, const BoundsSidecar* sidecar) {
  LinkSpec link;
  link.name = require_attr(node, "name", "link");
  const std::string where = "link '" + link.name + "'";
  auto collision = node.get_child_optional("collision");
  if (!collision) return link;

  const Origin offset = parse_origin(*collision, where + " collision");
  auto geometry = collision->get_child_optional("geometry");
  if (!geometry) throw ValidationError(where + ": collision without geometry");

  if (auto box = geometry->get_child_optional("box")) {
    link.bbox_extents = parse_vec3(require_attr(*box, "size", where + " box"), where + " box size");
    link.bbox_offset = offset;
  } else if (auto cyl = geometry->get_child_optional("cylinder")) {
    const double r = parse_scalar(require_attr(*cyl, "radius", where + " cylinder"), where);
    const double l = parse_scalar(require_attr(*cyl, "length", where + " cylinder"), where);
    link.bbox_extents = Vec3(2 * r, 2 * r, l);
    link.bbox_offset = offset;
  } else if (auto sph = geometry->get_child_optional("sphere")) {
    const double r = parse_scalar(require_attr(*sph, "radius", where + " sphere"), where);
    link.bbox_extents = Vec3::Constant(2 * r);
    link.bbox_offset = offset;
  } else if (geometry->get_child_optional("mesh")) {
    if (!sidecar) throw ValidationError(where + ": mesh collision requires a bounds sidecar");
    auto it = sidecar->find(link.name);
    if (it == sidecar->end()) throw ValidationError(where + ": mesh collision has no sidecar bounds entry");
    link.bbox_extents = it->second.extents;
    link.bbox_offset = it->second.offset;
  } else {
    throw ValidationError(where + ": unsupported collision geometry");
  }
  if ((link.bbox_extents.array() < 0).any()) throw ValidationError(where + ": negative box extents");
  link.has_bounds = true;
  return link;
}

JointSpec parse_joint(const pt::ptree& node) {
  JointSpec j;
  j.name = require_attr(node, "name", "joint");
  const std::string where = "joint '" + j.name + "'";
  const std::string type = require_attr(node, "type", where);

  bool needs_limit = false;
  bool continuous = false;
  if (type == "revolute") {
    j.kind = JointKind::Revolute;
    needs_limit = true;
  } else if (type == "continuous") {
    j.kind = JointKind::Revolute;
    continuous = true;
  } else if (type == "prismatic") {
    j.kind = JointKind::Prismatic;
    needs_limit = true;
    j.prismatic_motion = false;
  } else if (type == "fixed") {
    j.kind = JointKind::Fixed;
  } else {
    throw ValidationError(where + ": unsupported joint type '" + type + "'");
  }
  const bool prismatic = type == "prismatic";

  auto parent = node.get_child_optional("parent");
  auto child = node.get_child_optional("child");
  if (!parent || !child) throw ValidationError(where + ": missing parent or child");
  j.parent_link = require_attr(*parent, "link", where + " parent");
  j.child_link = require_attr(*child, "link", where + " child");
  j.origin = parse_origin(node, where);

  if (auto axis = node.get_child_optional("axis")) {
    if (auto xyz = attr(*axis, "xyz")) j.axis = parse_vec3(*xyz, where + " axis");
  }

  if (auto mimic = node.get_child_optional("mimic")) {
    if (j.kind == JointKind::Fixed) throw ValidationError(where + ": fixed joint cannot mimic");
    MimicSource src;
    src.joint = require_attr(*mimic, "joint", where + " mimic");
    if (auto m = attr(*mimic, "multiplier")) src.multiplier = parse_scalar(*m, where + " mimic");
    if (auto o = attr(*mimic, "offset")) src.offset = parse_scalar(*o, where + " mimic");
    j.mimic = src;
    j.kind = JointKind::Mimic;
    j.prismatic_motion = prismatic;
    needs_limit = false;
  }

  if (auto limit = node.get_child_optional("limit")) {
    auto lo = attr(*limit, "lower");
    auto hi = attr(*limit, "upper");
    if (needs_limit && (!lo || !hi)) throw ValidationError(where + ": limit lacks lower/upper");
    if (lo) j.limit_lower = parse_scalar(*lo, where + " limit");
    if (hi) j.limit_upper = parse_scalar(*hi, where + " limit");
    if (continuous && !lo && !hi) {
      j.limit_lower = -std::numbers::pi;
      j.limit_upper = std::numbers::pi;
    }
  } else if (needs_limit) {
    throw ValidationError(where + ": missing limits");
  } else if (continuous) {
    j.limit_lower = -std::numbers::pi;
    j.limit_upper = std::numbers::pi;
  }
  return j;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_vec(const Vec3& v) { return fmt_double(v.x()) + " " + fmt_double(v.y()) + " " + fmt_double(v.z()); }

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json origin_json(const Origin& o) {
  json j;
  j["xyz"] = vec_json(o.xyz);
  j["rpy"] = vec_json(o.rpy);
  return j;
}

Origin origin_from_json(const json& j) {
  Origin o;
  if (j.contains("xyz")) o.xyz = vec_from_json(j["xyz"]);
  if (j.contains("rpy")) o.rpy = vec_from_json(j["rpy"]);
  return o;
}

}  // namespace

BoundsSidecar parse_bounds_sidecar(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("bounds sidecar: ") + e.what(), 0);
  }
  if (!j.is_object()) throw ValidationError("bounds sidecar must be a JSON object");
  BoundsSidecar out;
  for (const auto& [name, entry] : j.items()) {
    LinkBounds b;
    if (!entry.contains("extents")) throw ValidationError("bounds sidecar entry '" + name + "' lacks extents");
    b.extents = vec_from_json(entry["extents"]);
    if (entry.contains("offset")) b.offset = origin_from_json(entry["offset"]);
    if ((b.extents.array() < 0).any()) throw ValidationError("bounds sidecar entry '" + name + "' has negative extents");
    out.emplace(name, b);
  }
  return out;
}

KinematicTree KinematicTree::build(std::string name, std::vector<LinkSpec> links, std::vector<JointSpec> joints) {
  KinematicTree tree;
  tree.name_ = std::move(name);

  std::unordered_map<std::string, int> link_idx;
  for (std::size_t i = 0; i < links.size(); ++i) {
    if (!link_idx.emplace(links[i].name, static_cast<int>(i)).second) {
      throw ValidationError("duplicate link '" + links[i].name + "'");
    }
    if ((links[i].bbox_extents.array() < 0).any()) {
      throw ValidationError("link '" + links[i].name + "' has negative box extents");
    }
  }
  if (links.empty()) throw StructureError("tree has no links");

  std::set<std::string> joint_names;
  std::vector<int> parent_of_link(links.size(), -1);  // joint index in `joints`
  for (std::size_t j = 0; j < joints.size(); ++j) {
    auto& js = joints[j];
    if (!joint_names.insert(js.name).second) throw ValidationError("duplicate joint '" + js.name + "'");
    auto p = link_idx.find(js.parent_link);
    auto c = link_idx.find(js.child_link);
    if (p == link_idx.end() || c == link_idx.end()) {
      throw StructureError("joint '" + js.name + "' references an unknown link");
    }
    if (parent_of_link[static_cast<std::size_t>(c->second)] != -1) {
      throw StructureError("link '" + js.child_link + "' has more than one parent joint");
    }
    parent_of_link[static_cast<std::size_t>(c->second)] = static_cast<int>(j);

    const double n = js.axis.norm();
    if (js.moves()) {
      if (n < 1e-12) throw ValidationError("joint '" + js.name + "' has a zero axis");
      if (std::abs(n - 1.0) > kAxisTolerance) js.axis /= n;
    }
    if (js.limit_lower > js.limit_upper) {
      throw ValidationError("joint '" + js.name + "' has lower limit above upper limit");
    }
  }

  // Cycle check: walking parent links from any link must terminate.
  for (std::size_t start = 0; start < links.size(); ++start) {
    std::vector<bool> on_path(links.size(), false);
    int link = static_cast<int>(start);
    while (link != -1) {
      if (on_path[static_cast<std::size_t>(link)]) {
        throw StructureError("cycle in link graph through link '" + links[static_cast<std::size_t>(link)].name + "'");
      }
      on_path[static_cast<std::size_t>(link)] = true;
      const int pj = parent_of_link[static_cast<std::size_t>(link)];
      link = pj == -1 ? -1 : link_idx.at(joints[static_cast<std::size_t>(pj)].parent_link);
    }
  }

  std::vector<int> roots;
  for (std::size_t i = 0; i < links.size(); ++i)
    if (parent_of_link[i] == -1) roots.push_back(static_cast<int>(i));
  if (roots.size() != 1) {
    throw StructureError("expected exactly one root link, found " + std::to_string(roots.size()));
  }

  // Children per link in document order.
  std::vector<std::vector<int>> children(links.size());
  for (std::size_t j = 0; j < joints.size(); ++j) {
    children[static_cast<std::size_t>(link_idx.at(joints[j].parent_link))].push_back(static_cast<int>(j));
  }

  // Pre-order DFS; children pushed in reverse so they pop in document order.
  std::vector<int> order;
  std::vector<int> stack(children[static_cast<std::size_t>(roots[0])].rbegin(),
                         children[static_cast<std::size_t>(roots[0])].rend());
  while (!stack.empty()) {
    const int j = stack.back();
    stack.pop_back();
    order.push_back(j);
    const auto& cc = children[static_cast<std::size_t>(link_idx.at(joints[static_cast<std::size_t>(j)].child_link))];
    stack.insert(stack.end(), cc.rbegin(), cc.rend());
  }

  tree.links_ = std::move(links);
  tree.root_ = roots[0];
  tree.joints_.reserve(order.size());
  for (int j : order) tree.joints_.push_back(joints[static_cast<std::size_t>(j)]);

  const std::size_t nj = tree.joints_.size();
  tree.parent_link_.resize(nj);
  tree.child_link_.resize(nj);
  tree.parent_joint_.assign(nj, -1);
  tree.link_parent_joint_.assign(tree.links_.size(), -1);
  tree.dof_index_.assign(nj, -1);
  for (std::size_t j = 0; j < nj; ++j) {
    tree.parent_link_[j] = link_idx.at(tree.joints_[j].parent_link);
    tree.child_link_[j] = link_idx.at(tree.joints_[j].child_link);
    tree.link_parent_joint_[static_cast<std::size_t>(tree.child_link_[j])] = static_cast<int>(j);
  }
  for (std::size_t j = 0; j < nj; ++j) {
    tree.parent_joint_[j] = tree.link_parent_joint_[static_cast<std::size_t>(tree.parent_link_[j])];
    if (tree.joints_[j].independent()) {
      tree.dof_index_[j] = static_cast<int>(tree.dof_joint_.size());
      tree.dof_joint_.push_back(static_cast<int>(j));
    }
  }
  for (const auto& js : tree.joints_) {
    if (js.kind != JointKind::Mimic) continue;
    const int src = tree.joint_index(js.mimic->joint);
    if (src < 0 || !tree.joints_[static_cast<std::size_t>(src)].independent()) {
      throw ValidationError("joint '" + js.name + "' mimics '" + js.mimic->joint +
                            "', which is not an independent joint");
    }
  }
  return tree;
}

int KinematicTree::driver_dof(int joint) const {
  const auto& js = joints_[static_cast<std::size_t>(joint)];
  if (js.independent()) return dof_index(joint);
  if (js.kind == JointKind::Mimic) return dof_index(joint_index(js.mimic->joint));
  return -1;
}

int KinematicTree::joint_index(std::string_view name) const {
  for (std::size_t i = 0; i < joints_.size(); ++i)
    if (joints_[i].name == name) return static_cast<int>(i);
  return -1;
}

int KinematicTree::link_index(std::string_view name) const {
  for (std::size_t i = 0; i < links_.size(); ++i)
    if (links_[i].name == name) return static_cast<int>(i);
  return -1;
}

std::vector<std::string> KinematicTree::dof_names() const {
  std::vector<std::string> out;
  for (int j : dof_joint_) out.push_back(joints_[static_cast<std::size_t>(j)].name);
  return out;
}

bool KinematicTree::links_adjacent(int a, int b) const {
  auto parent_link_of = [this](int l) {
    const int j = link_parent_joint(l);
    return j < 0 ? -1 : parent_link_index(j);
  };
  return parent_link_of(a) == b || parent_link_of(b) == a;
}

KinematicTree parse_urdf(std::string_view xml_text, const BoundsSidecar* sidecar) {
  pt::ptree doc;
  try {
    std::istringstream in{std::string(xml_text)};
    pt::read_xml(in, doc);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError("malformed XML: " + e.message(), static_cast<int>(e.line()));
  }
  auto robot = doc.get_child_optional("robot");
  if (!robot) throw ParseError("missing <robot> element", 0);
  std::string name = attr(*robot, "name").value_or("robot");

  std::vector<LinkSpec> links;
  std::vector<JointSpec> joints;
  for (const auto& [tag, node] : *robot) {
    if (tag == "link") links.push_back(parse_link(node, sidecar));
    else if (tag == "joint") joints.push_back(parse_joint(node));
  }
  return KinematicTree::build(std::move(name), std::move(links), std::move(joints));
}

KinematicTree load_urdf(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open URDF '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();

  std::optional<BoundsSidecar> sidecar;
  auto side_path = path.parent_path() / (path.stem().string() + ".bounds.json");
  if (std::filesystem::exists(side_path)) {
    std::ifstream sin(side_path);
    std::stringstream sss;
    sss << sin.rdbuf();
    sidecar = parse_bounds_sidecar(sss.str());
  }
  return parse_urdf(ss.str(), sidecar ? &*sidecar : nullptr);
}

std::string to_urdf(const KinematicTree& tree) {
  std::ostringstream out;
  out << "<?xml version=\"1.0\"?>\n";
  out << "<robot name=\"" << xml_escape(tree.name()) << "\">\n";
  for (const auto& l : tree.links()) {
    out << "  <link name=\"" << xml_escape(l.name) << "\"";
    if (!l.has_bounds) {
      out << "/>\n";
      continue;
    }
    out << ">\n    <collision>\n";
    out << "      <origin xyz=\"" << fmt_vec(l.bbox_offset.xyz) << "\" rpy=\"" << fmt_vec(l.bbox_offset.rpy) << "\"/>\n";
    out << "      <geometry><box size=\"" << fmt_vec(l.bbox_extents) << "\"/></geometry>\n";
    out << "    </collision>\n  </link>\n";
  }
  for (const auto& j : tree.joints()) {
    std::string type;
    switch (j.kind) {
      case JointKind::Revolute: type = "revolute"; break;
      case JointKind::Prismatic: type = "prismatic"; break;
      case JointKind::Fixed: type = "fixed"; break;
      case JointKind::Mimic: type = j.prismatic_motion ? "prismatic" : "revolute"; break;
    }
    out << "  <joint name=\"" << xml_escape(j.name) << "\" type=\"" << type << "\">\n";
    out << "    <parent link=\"" << xml_escape(j.parent_link) << "\"/>\n";
    out << "    <child link=\"" << xml_escape(j.child_link) << "\"/>\n";
    out << "    <origin xyz=\"" << fmt_vec(j.origin.xyz) << "\" rpy=\"" << fmt_vec(j.origin.rpy) << "\"/>\n";
    if (j.moves()) {
      out << "    <axis xyz=\"" << fmt_vec(j.axis) << "\"/>\n";
      out << "    <limit lower=\"" << fmt_double(j.limit_lower) << "\" upper=\"" << fmt_double(j.limit_upper)
          << "\"/>\n";
    }
    if (j.mimic) {
      out << "    <mimic joint=\"" << xml_escape(j.mimic->joint) << "\" multiplier=\""
          << fmt_double(j.mimic->multiplier) << "\" offset=\"" << fmt_double(j.mimic->offset) << "\"/>\n";
    }
    out << "  </joint>\n";
  }
  out << "</robot>\n";
  return out.str();
}

json tree_to_json(const KinematicTree& tree) {
  json j;
  j["name"] = tree.name();
  j["root"] = tree.root_link();
  j["dof"] = tree.dof_count();
  json links = json::array();
  for (const auto& l : tree.links()) {
    json e;
    e["name"] = l.name;
    e["has_bounds"] = l.has_bounds;
    e["extents"] = vec_json(l.bbox_extents);
    e["offset"] = origin_json(l.bbox_offset);
    links.push_back(e);
  }
  json joints = json::array();
  for (const auto& js : tree.joints()) {
    json e;
    e["name"] = js.name;
    e["type"] = to_string(js.kind);
    e["prismatic_motion"] = js.prismatic_motion;
    e["parent"] = js.parent_link;
    e["child"] = js.child_link;
    e["origin"] = origin_json(js.origin);
    e["axis"] = vec_json(js.axis);
    e["limit"] = json::array({js.limit_lower, js.limit_upper});
    if (js.mimic) {
      e["mimic"] = {{"joint", js.mimic->joint}, {"multiplier", js.mimic->multiplier}, {"offset", js.mimic->offset}};
    }
    joints.push_back(e);
  }
  j["links"] = links;
  j["joints"] = joints;
  return j;
}

KinematicTree tree_from_json(const json& j) {
  try {
    std::vector<LinkSpec> links;
    for (const auto& e : j.at("links")) {
      LinkSpec l;
      l.name = e.at("name").get<std::string>();
      l.has_bounds = e.at("has_bounds").get<bool>();
      l.bbox_extents = vec_from_json(e.at("extents"));
      l.bbox_offset = origin_from_json(e.at("offset"));
      links.push_back(l);
    }
    std::vector<JointSpec> joints;
    for (const auto& e : j.at("joints")) {
      JointSpec js;
      js.name = e.at("name").get<std::string>();
      const auto type = e.at("type").get<std::string>();
      if (type == "revolute") js.kind = JointKind::Revolute;
      else if (type == "prismatic") js.kind = JointKind::Prismatic;
      else if (type == "fixed") js.kind = JointKind::Fixed;
      else if (type == "mimic") js.kind = JointKind::Mimic;
      else throw ValidationError("unknown joint type '" + type + "'");
      js.prismatic_motion = e.value("prismatic_motion", false);
      js.parent_link = e.at("parent").get<std::string>();
      js.child_link = e.at("child").get<std::string>();
      js.origin = origin_from_json(e.at("origin"));
      js.axis = vec_from_json(e.at("axis"));
      js.limit_lower = e.at("limit")[0].get<double>();
      js.limit_upper = e.at("limit")[1].get<double>();
      if (e.contains("mimic")) {
        const auto& m = e["mimic"];
        js.mimic = MimicSource{m.at("joint").get<std::string>(), m.at("multiplier").get<double>(),
                               m.at("offset").get<double>()};
      }
      joints.push_back(js);
    }
    return KinematicTree::build(j.at("name").get<std::string>(), std::move(links), std::move(joints));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("tree JSON: ") + e.what());
  }
}

LinkTransforms forward_kinematics(const KinematicTree& tree, std::span<const double> angles, LimitMode mode) {
  if (static_cast<int>(angles.size()) != tree.dof_count()) {
    throw ArityError("forward_kinematics: expected " + std::to_string(tree.dof_count()) + " angles, got " +
                     std::to_string(angles.size()));
  }
  std::vector<double> q(angles.begin(), angles.end());
  for (int d = 0; d < tree.dof_count(); ++d) {
    const auto& js = tree.joints()[static_cast<std::size_t>(tree.joint_of_dof(d))];
    double& v = q[static_cast<std::size_t>(d)];
    if (!std::isfinite(v)) throw NumericError("forward_kinematics: non-finite value for joint '" + js.name + "'");
    if (mode == LimitMode::Strict && (v < js.limit_lower || v > js.limit_upper)) {
      throw LimitError("joint '" + js.name + "' value " + std::to_string(v) + " outside [" +
                       std::to_string(js.limit_lower) + ", " + std::to_string(js.limit_upper) + "]");
    }
    if (mode == LimitMode::Clamp) v = std::clamp(v, js.limit_lower, js.limit_upper);
  }

  LinkTransforms out;
  out.link.assign(tree.links().size(), Transform::Identity());
  out.joint_frame.resize(tree.joints().size());
  out.joint_value.assign(tree.joints().size(), 0.0);
  for (std::size_t j = 0; j < tree.joints().size(); ++j) {
    const auto& js = tree.joints()[j];
    const Transform frame = out.link[static_cast<std::size_t>(tree.parent_link_index(static_cast<int>(j)))] *
                            js.origin.transform();
    out.joint_frame[j] = frame;

    double value = 0.0;
    if (js.independent()) {
      value = q[static_cast<std::size_t>(tree.dof_index(static_cast<int>(j)))];
    } else if (js.kind == JointKind::Mimic) {
      const int d = tree.driver_dof(static_cast<int>(j));
      value = js.mimic->multiplier * q[static_cast<std::size_t>(d)] + js.mimic->offset;
    }
    out.joint_value[j] = value;

    Transform motion = Transform::Identity();
    if (js.moves()) {
      if (js.is_prismatic()) motion.translation() = js.axis * value;
      else motion.linear() = axis_rotation(js.axis, value);
    }
    out.link[static_cast<std::size_t>(tree.child_link_index(static_cast<int>(j)))] = frame * motion;
  }
  return out;
}

std::vector<int> descendant_counts(const KinematicTree& tree) {
  const auto nj = tree.joints().size();
  std::vector<int> below(nj, 0);
  for (std::size_t k = nj; k-- > 0;) {
    const int p = tree.parent_joint(static_cast<int>(k));
    if (p >= 0) below[static_cast<std::size_t>(p)] += below[k] + (tree.joints()[k].independent() ? 1 : 0);
  }
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(tree.dof_count()));
  for (int d = 0; d < tree.dof_count(); ++d) out.push_back(below[static_cast<std::size_t>(tree.joint_of_dof(d))]);
  return out;
}

std::vector<SurfaceSample> sample_surface_template(const KinematicTree& tree, int n_points, std::uint64_t seed) {
  if (n_points < 1) throw ArityError("sample_hand_surface: n_points must be at least 1");
  const auto& links = tree.links();
  std::vector<std::array<double, 6>> face_area(links.size());
  std::vector<double> area(links.size(), 0.0);
  double total = 0.0;
  for (std::size_t l = 0; l < links.size(); ++l) {
    if (!links[l].has_bounds) continue;
    const Vec3& e = links[l].bbox_extents;
    const double ax = e.y() * e.z(), ay = e.x() * e.z(), az = e.x() * e.y();
    face_area[l] = {ax, ax, ay, ay, az, az};
    area[l] = 2 * (ax + ay + az);
    total += area[l];
  }
  if (!(total > 0)) throw GeometryError("sample_hand_surface: every link box has zero surface area");

  // Largest-remainder apportionment, ties to the lower link index.
  std::vector<int> count(links.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainder;
  int assigned = 0;
  for (std::size_t l = 0; l < links.size(); ++l) {
    const double quota = n_points * area[l] / total;
    count[l] = static_cast<int>(std::floor(quota));
    assigned += count[l];
    remainder.emplace_back(quota - count[l], l);
  }
  std::stable_sort(remainder.begin(), remainder.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int k = 0; assigned < n_points; ++k, ++assigned) count[remainder[static_cast<std::size_t>(k)].second] += 1;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<SurfaceSample> out;
  out.reserve(static_cast<std::size_t>(n_points));
  for (std::size_t l = 0; l < links.size(); ++l) {
    if (count[l] == 0) continue;
    const Vec3 half = links[l].bbox_extents / 2;
    const Transform box = links[l].bbox_offset.transform();
    for (int k = 0; k < count[l]; ++k) {
      double pick = uni(rng) * area[l];
      int face = 0;
      while (face < 5 && pick >= face_area[l][static_cast<std::size_t>(face)]) {
        pick -= face_area[l][static_cast<std::size_t>(face)];
        ++face;
      }
      const int axis = face / 2;
      Vec3 p;
      for (int a = 0; a < 3; ++a) {
        p[a] = a == axis ? (face % 2 == 0 ? -half[a] : half[a]) : (2 * uni(rng) - 1) * half[a];
      }
      out.push_back({static_cast<int>(l), face, box * p});
    }
  }
  return out;
}

LabeledPoints place_surface(std::span<const SurfaceSample> samples, const LinkTransforms& transforms) {
  LabeledPoints out;
  out.points.resize(static_cast<Eigen::Index>(samples.size()), 3);
  out.link.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    out.points.row(static_cast<Eigen::Index>(i)) =
        (transforms.link[static_cast<std::size_t>(s.link)] * s.local).transpose();
    out.link.push_back(s.link);
  }
  return out;
}

LabeledPoints sample_hand_surface(const KinematicTree& tree, const LinkTransforms& transforms, int n_points,
                                  std::uint64_t seed) {
  const auto samples = sample_surface_template(tree, n_points, seed);
  return place_surface(samples, transforms);
}

}  // namespace morphgrasp
