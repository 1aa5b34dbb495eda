#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nsplat/core/linalg.hpp"
#include "nsplat/splat/types.hpp"

namespace nsplat::layout {

// Oriented object box. World frame is y-up, right-handed; yaw rotates about
// +y. size = (l, w, h) maps to local extents x=l, z=w, y=h.
struct BoundingBox {
  Vec3 center;
  Vec3 size{1.0, 1.0, 1.0};
  double yaw = 0.0;
};

// Normalize an angle to (-pi, pi].
double normalize_yaw(double yaw);

void validate_box(const BoundingBox& box);

struct LayoutObject {
  std::string name;
  std::string prompt;
  BoundingBox box;
};

struct SceneLayout {
  std::vector<LayoutObject> objects;
};

void validate_layout(const SceneLayout& layout);

// Pairwise world-AABB overlap warnings; overlaps are allowed, only surfaced.
std::vector<std::string> layout_warnings(const SceneLayout& layout);

// Schema: {"objects":[{"name","prompt","center":[x,y,z],"size":[l,w,h],
// "yaw":theta}]}. Missing yaw defaults to 0; yaw is stored normalized.
SceneLayout parse_layout_json(const std::string& doc);
std::string serialize_layout(const SceneLayout& layout);

// Lexicon file: one "noun l w h" entry per line; '#' comments allowed.
struct LexiconEntry {
  std::string noun;
  Vec3 size;  // (l, w, h)
};
using Lexicon = std::vector<LexiconEntry>;

Lexicon parse_lexicon(const std::string& text);
Lexicon load_lexicon(const std::string& path);
// Copy of data/lexicon.txt embedded at build time.
const Lexicon& builtin_lexicon();

// Deterministic layout without a language model: lowercase-tokenize the
// description, keep tokens found in the lexicon (in description order), and
// place object i resting on the ground plane at x = 1.5 * i. Repeated nouns
// get _2, _3, ... name suffixes.
SceneLayout fallback_layout(const std::string& description, const Lexicon& lexicon);
SceneLayout fallback_layout(const std::string& description);

// n Gaussians with means uniform in the box (rotated by yaw about its
// center), per-axis scale size/20, opacity 0.5, mid-gray color.
std::vector<splat::Gaussian3D> init_gaussians_in_box(const BoundingBox& box,
                                                     std::size_t n,
                                                     std::uint64_t seed);

}  // namespace nsplat::layout
