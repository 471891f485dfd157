#include "morphgrasp/mutate.hpp"

#include "morphgrasp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace morphgrasp {

namespace {

constexpr Finger kFingers[] = {Finger::Thumb, Finger::Index, Finger::Middle, Finger::Ring, Finger::Pinky};

using Entries = std::vector<std::pair<std::string, std::string>>;

Entries mapping_entries(const CanonicalMapping& mapping) {
  const auto& layout = CanonicalLayout::standard();
  Entries out;
  for (std::size_t d = 0; d < mapping.slot_of.size(); ++d) {
    out.emplace_back(mapping.joint_names[d], layout.slot_name(mapping.slot_of[d]));
  }
  return out;
}

HandDescription rebuild(const KinematicTree& base, std::vector<LinkSpec> links, std::vector<JointSpec> joints,
                        const std::string& embodiment, const Entries& entries) {
  try {
    KinematicTree tree = KinematicTree::build(base.name(), std::move(links), std::move(joints));
    CanonicalMapping mapping = resolve_mapping(embodiment, entries, tree);
    return {std::move(tree), std::move(mapping)};
  } catch (const MutationError&) {
    throw;
  } catch (const Error& e) {
    throw MutationError(std::string("mutated hand fails validation: ") + e.what());
  }
}

struct Split {
  std::vector<JointSpec> kept_joints;
  std::vector<LinkSpec> kept_links;
  std::set<std::string> removed_joints;
  int insert_at = 0;  // position of the removed root among kept joints
};

Split split_out(const KinematicTree& tree, const std::vector<int>& subtree) {
  Split s;
  std::set<int> drop(subtree.begin(), subtree.end());
  std::set<std::string> drop_links;
  for (int j : subtree) {
    s.removed_joints.insert(tree.joints()[static_cast<std::size_t>(j)].name);
    drop_links.insert(tree.joints()[static_cast<std::size_t>(j)].child_link);
  }
  for (std::size_t j = 0; j < tree.joints().size(); ++j) {
    if (static_cast<int>(j) == subtree.front()) s.insert_at = static_cast<int>(s.kept_joints.size());
    if (!drop.count(static_cast<int>(j))) s.kept_joints.push_back(tree.joints()[j]);
  }
  for (const auto& l : tree.links())
    if (!drop_links.count(l.name)) s.kept_links.push_back(l);
  for (const auto& j : s.kept_joints) {
    if (j.mimic && s.removed_joints.count(j.mimic->joint)) {
      throw MutationError("joint '" + j.name + "' mimics removed joint '" + j.mimic->joint + "'");
    }
  }
  return s;
}

Entries surviving_entries(const CanonicalMapping& mapping, const std::set<std::string>& removed) {
  Entries out;
  for (const auto& e : mapping_entries(mapping))
    if (!removed.count(e.first)) out.push_back(e);
  return out;
}

MutationResult remove_finger(const HandDescription& hand, const MorphologyVariation& v) {
  if (v.finger == Finger::Thumb && !v.allow_thumb_removal) {
    throw MutationError("refusing to remove the thumb without an explicit override");
  }
  const auto subtree = finger_subtree(hand.tree, hand.mapping, v.finger);
  Split s = split_out(hand.tree, subtree);
  return {rebuild(hand.tree, std::move(s.kept_links), std::move(s.kept_joints), hand.mapping.embodiment,
                  surviving_entries(hand.mapping, s.removed_joints)),
          {}};
}

MutationResult scale_finger(const HandDescription& hand, const MorphologyVariation& v) {
  if (!(v.factor > 0) || !std::isfinite(v.factor)) throw MutationError("scale factor must be positive and finite");
  const auto subtree = finger_subtree(hand.tree, hand.mapping, v.finger);
  std::vector<JointSpec> joints = hand.tree.joints();
  std::vector<LinkSpec> links = hand.tree.links();
  const std::set<int> members(subtree.begin(), subtree.end());

  for (int j : subtree) {
    const auto& js = hand.tree.joints()[static_cast<std::size_t>(j)];
    const int link = hand.tree.link_index(js.child_link);
    LinkSpec& ls = links[static_cast<std::size_t>(link)];
    if (!ls.has_bounds) continue;
    // Proximal-to-distal direction in the link frame: towards the first child joint, else the box center.
    Vec3 dir = ls.bbox_offset.xyz;
    for (std::size_t k = 0; k < joints.size(); ++k) {
      if (members.count(static_cast<int>(k)) && hand.tree.joints()[k].parent_link == ls.name) {
        dir = hand.tree.joints()[k].origin.xyz;
        break;
      }
    }
    ls.bbox_offset.xyz *= v.factor;
    if (dir.norm() > 1e-12) {
      const Vec3 in_box = rpy_to_matrix(ls.bbox_offset.rpy).transpose() * dir.normalized();
      for (int c = 0; c < 3; ++c) ls.bbox_extents(c) *= 1.0 + (v.factor - 1.0) * std::abs(in_box(c));
    }
  }
  for (int j : subtree) {
    if (j == subtree.front()) continue;
    joints[static_cast<std::size_t>(j)].origin.xyz *= v.factor;
  }
  return {rebuild(hand.tree, std::move(links), std::move(joints), hand.mapping.embodiment,
                  mapping_entries(hand.mapping)),
          {}};
}

MutationResult swap_finger(const HandDescription& hand, const MorphologyVariation& v, const HandDescription* donor) {
  if (!donor) throw MutationError("swap requires a donor hand");
  std::vector<Finger> candidates{v.finger};
  if (v.finger != Finger::Thumb) {
    for (int f = static_cast<int>(v.finger) - 1; f >= static_cast<int>(Finger::Index); --f)
      candidates.push_back(static_cast<Finger>(f));
    for (int f = static_cast<int>(v.finger) + 1; f <= static_cast<int>(Finger::Pinky); ++f)
      candidates.push_back(static_cast<Finger>(f));
  }
  std::optional<Finger> source;
  for (Finger f : candidates) {
    if (!donor->mapping.chain_sources(f).empty()) {
      source = f;
      break;
    }
  }
  if (!source) throw MutationError(std::string("donor has no finger to replace the ") + to_string(v.finger));
  MutationResult result;
  if (*source != v.finger) {
    result.notes.push_back(std::string(to_string(v.finger)) + ": donor has none, using donor " + to_string(*source));
  }

  const auto& layout = CanonicalLayout::standard();
  const auto host_subtree = finger_subtree(hand.tree, hand.mapping, v.finger);
  const auto donor_subtree = finger_subtree(donor->tree, donor->mapping, *source);
  const JointSpec& mount = hand.tree.joints()[static_cast<std::size_t>(host_subtree.front())];
  Split s = split_out(hand.tree, host_subtree);

  const std::string prefix = std::string(to_string(v.finger)) + "_" + donor->tree.name() + "_";
  std::vector<JointSpec> grafted;
  for (int j : donor_subtree) {
    JointSpec js = donor->tree.joints()[static_cast<std::size_t>(j)];
    js.name = prefix + js.name;
    js.child_link = prefix + js.child_link;
    if (j == donor_subtree.front()) {
      js.parent_link = mount.parent_link;
      js.origin = mount.origin;
    } else {
      js.parent_link = prefix + js.parent_link;
    }
    if (js.mimic) js.mimic->joint = prefix + js.mimic->joint;
    grafted.push_back(std::move(js));
    LinkSpec ls = donor->tree.links()[static_cast<std::size_t>(
        donor->tree.link_index(donor->tree.joints()[static_cast<std::size_t>(j)].child_link))];
    ls.name = prefix + ls.name;
    s.kept_links.push_back(std::move(ls));
  }
  s.kept_joints.insert(s.kept_joints.begin() + s.insert_at, grafted.begin(), grafted.end());

  Entries entries = surviving_entries(hand.mapping, s.removed_joints);
  const int host_start = layout.chain_start(v.finger);
  const int host_size = layout.chain_size(v.finger);
  for (int d : donor->mapping.chain_sources(*source)) {
    const int pos = layout.position_in_chain(donor->mapping.slot_of[static_cast<std::size_t>(d)]);
    if (pos >= host_size) {
      throw MutationError(std::string("donor finger is longer than the host ") + to_string(v.finger) + " chain");
    }
    entries.emplace_back(prefix + donor->mapping.joint_names[static_cast<std::size_t>(d)],
                         layout.slot_name(host_start + pos));
  }
  result.hand = rebuild(hand.tree, std::move(s.kept_links), std::move(s.kept_joints), hand.mapping.embodiment, entries);
  return result;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::vector<int> finger_subtree(const KinematicTree& tree, const CanonicalMapping& mapping, Finger finger) {
  if (finger == Finger::Wrist) throw MutationError("the wrist chain cannot be mutated");
  const auto sources = mapping.chain_sources(finger);
  if (sources.empty()) throw MutationError(std::string("hand has no ") + to_string(finger) + " in its mapping");
  const std::string& root_name = mapping.joint_names[static_cast<std::size_t>(sources.front())];
  const int root = tree.joint_index(root_name);
  if (root < 0) throw MutationError("mapped joint '" + root_name + "' is not in the tree");
  std::vector<int> out{root};
  std::vector<char> in(tree.joints().size(), 0);
  in[static_cast<std::size_t>(root)] = 1;
  for (std::size_t j = static_cast<std::size_t>(root) + 1; j < tree.joints().size(); ++j) {
    const int p = tree.parent_joint(static_cast<int>(j));
    if (p >= 0 && in[static_cast<std::size_t>(p)]) {
      in[j] = 1;
      out.push_back(static_cast<int>(j));
    }
  }
  std::set<std::string> own;
  for (int d : sources) own.insert(mapping.joint_names[static_cast<std::size_t>(d)]);
  for (int j : out) {
    if (tree.dof_index(j) >= 0 && !own.count(tree.joints()[static_cast<std::size_t>(j)].name)) {
      throw MutationError(std::string("the ") + to_string(finger) + " subtree contains joint '" +
                          tree.joints()[static_cast<std::size_t>(j)].name + "' mapped to another chain");
    }
  }
  return out;
}

MutationResult mutate_morphology(const HandDescription& hand, const MorphologyVariation& variation,
                                 const HandDescription* donor) {
  switch (variation.kind) {
    case VariationKind::Remove: return remove_finger(hand, variation);
    case VariationKind::Scale: return scale_finger(hand, variation);
    case VariationKind::Swap: return swap_finger(hand, variation, donor);
  }
  throw MutationError("unknown variation kind");
}

MutationResult apply_variations(const HandDescription& hand, const std::vector<MorphologyVariation>& variations,
                                const HandDescription* donor) {
  MutationResult result{hand, {}};
  for (const auto& v : variations) {
    MutationResult step = mutate_morphology(result.hand, v, donor);
    result.hand = std::move(step.hand);
    result.notes.insert(result.notes.end(), step.notes.begin(), step.notes.end());
  }
  return result;
}

std::vector<MorphologyVariation> parse_variation_spec(std::string_view spec) {
  const std::string s = trim(spec);
  if (s == "none" || s.empty()) return {};
  const auto parts = split(s, ':');
  MorphologyVariation base;
  std::size_t expected = 2;
  if (parts[0] == "remove") {
    base.kind = VariationKind::Remove;
    if (parts.size() == 3 && parts[2] == "force") {
      base.allow_thumb_removal = true;
      expected = 3;
    }
  } else if (parts[0] == "scale") {
    base.kind = VariationKind::Scale;
    expected = 3;
    if (parts.size() == 3) {
      try {
        std::size_t used = 0;
        base.factor = std::stod(parts[2], &used);
        if (used != parts[2].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw MutationError("invalid scale factor '" + parts[2] + "'");
      }
    }
  } else if (parts[0] == "swap") {
    base.kind = VariationKind::Swap;
  } else {
    throw MutationError("unknown variation kind '" + parts[0] + "'");
  }
  if (parts.size() != expected) throw MutationError("malformed variation spec '" + s + "'");

  std::vector<MorphologyVariation> out;
  for (const auto& name : split(parts[1], ',')) {
    if (name == "all") {
      for (Finger f : kFingers) {
        if (f == Finger::Thumb && base.kind == VariationKind::Remove && !base.allow_thumb_removal) continue;
        MorphologyVariation v = base;
        v.finger = f;
        out.push_back(v);
      }
      continue;
    }
    MorphologyVariation v = base;
    try {
      v.finger = finger_from_string(name);
    } catch (const Error&) {
      throw MutationError("unknown finger '" + name + "'");
    }
    if (v.finger == Finger::Wrist) throw MutationError("the wrist chain cannot be mutated");
    out.push_back(v);
  }
  return out;
}

const std::vector<VariationRow>& variation_grid() {
  static const std::vector<VariationRow> rows = {
      {"topological", "remove:index", 20},        {"topological", "remove:middle", 20},
      {"topological", "remove:ring", 20},         {"topological", "remove:pinky", 19},
      {"topological", "remove:index,ring", 16},   {"topological", "remove:middle,pinky", 15},
      {"geometric", "scale:thumb:1.5", 24},       {"geometric", "scale:thumb:0.8", 24},
      {"geometric", "scale:index,ring:1.5", 24},  {"geometric", "scale:index,ring:0.8", 24},
      {"geometric", "scale:all:1.5", 24},         {"geometric", "scale:all:0.8", 24},
      {"embodiment", "none", 24},                 {"embodiment", "swap:thumb", 23},
      {"embodiment", "swap:index,ring", 24},      {"embodiment", "swap:all", 22},
  };
  return rows;
}

}  // namespace morphgrasp
