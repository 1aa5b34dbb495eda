#include "nsplat/layout/layout.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "builtin_lexicon.hpp"
#include "nsplat/core/error.hpp"
#include "nsplat/core/rng.hpp"
#include "nsplat/metrics/metrics.hpp"

namespace nsplat::layout {

using json = nlohmann::json;

double normalize_yaw(double yaw) {
  const double two_pi = 2.0 * std::numbers::pi;
  double y = std::fmod(yaw, two_pi);
  if (y <= -std::numbers::pi) y += two_pi;
  if (y > std::numbers::pi) y -= two_pi;
  return y;
}

void validate_box(const BoundingBox& box) {
  const double values[] = {box.center.x, box.center.y, box.center.z,
                           box.size.x,   box.size.y,   box.size.z, box.yaw};
  for (const double v : values)
    if (!std::isfinite(v)) throw_validation("box has non-finite fields");
  if (!(box.size.x > 0.0) || !(box.size.y > 0.0) || !(box.size.z > 0.0))
    throw_validation("box size components must be positive");
}

void validate_layout(const SceneLayout& layout) {
  if (layout.objects.empty())
    throw_validation("layout must contain at least one object");
  std::set<std::string> names;
  for (const LayoutObject& obj : layout.objects) {
    if (obj.name.empty()) throw_validation("layout object has an empty name");
    if (!names.insert(obj.name).second)
      throw_validation("duplicate object name '" + obj.name + "'");
    validate_box(obj.box);
  }
}

namespace {

// Half extents along local axes: x=l, y=h, z=w.
Vec3 half_extents(const BoundingBox& box) {
  return {box.size.x / 2.0, box.size.z / 2.0, box.size.y / 2.0};
}

struct Aabb {
  Vec3 lo, hi;
};

Aabb world_aabb(const BoundingBox& box) {
  const Mat3 rot = rotation_matrix(Quat::from_axis_angle({0, 1, 0}, box.yaw));
  const Vec3 h = half_extents(box);
  Aabb out{box.center, box.center};
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {-1, 1}) {
        const Vec3 corner =
            box.center + rot * Vec3{sx * h.x, sy * h.y, sz * h.z};
        out.lo = {std::min(out.lo.x, corner.x), std::min(out.lo.y, corner.y),
                  std::min(out.lo.z, corner.z)};
        out.hi = {std::max(out.hi.x, corner.x), std::max(out.hi.y, corner.y),
                  std::max(out.hi.z, corner.z)};
      }
  return out;
}

}  // namespace

std::vector<std::string> layout_warnings(const SceneLayout& layout) {
  std::vector<std::string> warnings;
  std::vector<Aabb> boxes;
  boxes.reserve(layout.objects.size());
  for (const LayoutObject& obj : layout.objects)
    boxes.push_back(world_aabb(obj.box));
  for (std::size_t i = 0; i < boxes.size(); ++i)
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      const bool disjoint =
          boxes[i].hi.x < boxes[j].lo.x || boxes[j].hi.x < boxes[i].lo.x ||
          boxes[i].hi.y < boxes[j].lo.y || boxes[j].hi.y < boxes[i].lo.y ||
          boxes[i].hi.z < boxes[j].lo.z || boxes[j].hi.z < boxes[i].lo.z;
      if (!disjoint)
        warnings.push_back("boxes of '" + layout.objects[i].name + "' and '" +
                           layout.objects[j].name + "' overlap");
    }
  return warnings;
}

SceneLayout parse_layout_json(const std::string& doc) {
  json parsed;
  try {
    parsed = json::parse(doc);
  } catch (const json::exception& e) {
    throw_validation(std::string("layout is not valid JSON: ") + e.what());
  }

  std::vector<std::string> problems;
  SceneLayout layout;
  if (!parsed.contains("objects") || !parsed["objects"].is_array() ||
      parsed["objects"].empty()) {
    problems.emplace_back("objects: must be a non-empty array");
  } else {
    std::set<std::string> names;
    std::size_t idx = 0;
    for (const json& oj : parsed["objects"]) {
      const std::string where = "objects[" + std::to_string(idx++) + "]";
      LayoutObject obj;
      try {
        obj.name = oj.at("name").get<std::string>();
        obj.prompt = oj.value("prompt", obj.name);
        const auto center = oj.at("center").get<std::vector<double>>();
        const auto size = oj.at("size").get<std::vector<double>>();
        if (center.size() != 3) {
          problems.push_back(where + ".center: needs exactly 3 numbers");
          continue;
        }
        if (size.size() != 3) {
          problems.push_back(where + ".size: needs exactly 3 numbers");
          continue;
        }
        obj.box.center = {center[0], center[1], center[2]};
        obj.box.size = {size[0], size[1], size[2]};
        obj.box.yaw = normalize_yaw(oj.value("yaw", 0.0));
      } catch (const json::exception& e) {
        problems.push_back(where + ": " + e.what());
        continue;
      }
      if (obj.name.empty()) problems.push_back(where + ".name: empty");
      if (!names.insert(obj.name).second)
        problems.push_back(where + ".name: duplicate '" + obj.name + "'");
      if (!(obj.box.size.x > 0.0) || !(obj.box.size.y > 0.0) ||
          !(obj.box.size.z > 0.0))
        problems.push_back(where + ".size: components must be positive");
      for (const double v :
           {obj.box.center.x, obj.box.center.y, obj.box.center.z,
            obj.box.size.x, obj.box.size.y, obj.box.size.z, obj.box.yaw})
        if (!std::isfinite(v)) {
          problems.push_back(where + ": non-finite number");
          break;
        }
      layout.objects.push_back(std::move(obj));
    }
  }
  if (!problems.empty()) {
    std::string msg = "layout validation failed:";
    for (const std::string& p : problems) msg += "\n  " + p;
    throw_validation(msg);
  }
  return layout;
}

std::string serialize_layout(const SceneLayout& layout) {
  validate_layout(layout);
  json doc;
  doc["objects"] = json::array();
  for (const LayoutObject& obj : layout.objects) {
    json oj;
    oj["name"] = obj.name;
    oj["prompt"] = obj.prompt;
    oj["center"] = {obj.box.center.x, obj.box.center.y, obj.box.center.z};
    oj["size"] = {obj.box.size.x, obj.box.size.y, obj.box.size.z};
    oj["yaw"] = normalize_yaw(obj.box.yaw);
    doc["objects"].push_back(std::move(oj));
  }
  return doc.dump(2) + "\n";
}

Lexicon parse_lexicon(const std::string& text) {
  Lexicon lex;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    LexiconEntry e;
    if (!(ls >> e.noun >> e.size.x >> e.size.y >> e.size.z))
      throw_validation("lexicon line '" + line + "' is not 'noun l w h'");
    if (!(e.size.x > 0.0) || !(e.size.y > 0.0) || !(e.size.z > 0.0))
      throw_validation("lexicon entry '" + e.noun + "' has non-positive size");
    lex.push_back(std::move(e));
  }
  if (lex.empty()) throw_validation("lexicon holds no entries");
  return lex;
}

Lexicon load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_validation("cannot open lexicon '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_lexicon(ss.str());
}

const Lexicon& builtin_lexicon() {
  static const Lexicon lex = parse_lexicon(kBuiltinLexiconText);
  return lex;
}

SceneLayout fallback_layout(const std::string& description,
                            const Lexicon& lexicon) {
  if (description.empty()) throw_validation("description must be non-empty");
  const metrics::TokenSequence tokens = metrics::tokenize(description);

  SceneLayout layout;
  std::size_t placed = 0;
  std::vector<std::string> used;
  for (const std::string& tok : tokens) {
    const auto it =
        std::find_if(lexicon.begin(), lexicon.end(),
                     [&](const LexiconEntry& e) { return e.noun == tok; });
    if (it == lexicon.end()) continue;
    LayoutObject obj;
    const std::size_t repeats =
        std::count(used.begin(), used.end(), tok);
    used.push_back(tok);
    obj.name = repeats == 0 ? tok : tok + "_" + std::to_string(repeats + 1);
    obj.prompt = tok;
    obj.box.size = it->size;
    obj.box.center = {1.5 * static_cast<double>(placed), it->size.z / 2.0, 0.0};
    obj.box.yaw = 0.0;
    layout.objects.push_back(std::move(obj));
    ++placed;
  }
  if (layout.objects.empty())
    throw_validation("no objects recognized in description '" + description +
                     "'");
  return layout;
}

SceneLayout fallback_layout(const std::string& description) {
  return fallback_layout(description, builtin_lexicon());
}

std::vector<splat::Gaussian3D> init_gaussians_in_box(const BoundingBox& box,
                                                     std::size_t n,
                                                     std::uint64_t seed) {
  validate_box(box);
  Rng rng(seed);
  const Vec3 h = half_extents(box);
  const Mat3 rot = rotation_matrix(Quat::from_axis_angle({0, 1, 0}, box.yaw));
  const Quat rot_q = Quat::from_axis_angle({0, 1, 0}, box.yaw);

  std::vector<splat::Gaussian3D> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    splat::Gaussian3D g;
    const Vec3 local{rng.uniform(-h.x, h.x), rng.uniform(-h.y, h.y),
                     rng.uniform(-h.z, h.z)};
    g.mu = box.center + rot * local;
    g.rotation = rot_q;
    g.scale = {box.size.x / 20.0, box.size.z / 20.0, box.size.y / 20.0};
    g.color = {0.5, 0.5, 0.5};
    g.opacity = 0.5;
    out.push_back(g);
  }
  return out;
}

}  // namespace nsplat::layout
