#pragma once

#include "morphgrasp/canonical.hpp"
#include "morphgrasp/urdf.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace morphgrasp {

struct HandDescription {
  KinematicTree tree;
  CanonicalMapping mapping;
};

enum class VariationKind { Remove, Scale, Swap };

struct MorphologyVariation {
  VariationKind kind = VariationKind::Remove;
  Finger finger = Finger::Index;
  double factor = 1.0;               // scale only
  bool allow_thumb_removal = false;  // remove only
};

struct MutationResult {
  HandDescription hand;
  std::vector<std::string> notes;  // e.g. donor fallbacks
};

/// The joints of a finger: the most proximal mapped joint and everything below it.
std::vector<int> finger_subtree(const KinematicTree& tree, const CanonicalMapping& mapping, Finger finger);

/// remove: deletes the finger subtree and its mapping entries.
/// scale: multiplies joint-origin translations below the mount joint, and link box
///   offsets and extents along the proximal-to-distal direction, by `factor`.
/// swap: grafts the donor's finger subtree at the host finger's mount frame. A donor
///   without that finger lends its next finger towards the thumb (pinky -> ring -> ...).
/// The result is rebuilt and re-validated. Throws MutationError.
MutationResult mutate_morphology(const HandDescription& hand, const MorphologyVariation& variation,
                                 const HandDescription* donor = nullptr);

MutationResult apply_variations(const HandDescription& hand, const std::vector<MorphologyVariation>& variations,
                                const HandDescription* donor = nullptr);

/// "remove:index,ring", "scale:thumb:1.5", "scale:all:0.8", "swap:all", "none".
/// A trailing ":force" on a remove allows removing the thumb.
std::vector<MorphologyVariation> parse_variation_spec(std::string_view spec);

struct VariationRow {
  std::string group;  // topological, geometric, embodiment
  std::string spec;
  int expected_active = 0;
};

/// The sixteen altered-finger rows evaluated on the Shadow hand with an Allegro donor.
const std::vector<VariationRow>& variation_grid();

}  // namespace morphgrasp
