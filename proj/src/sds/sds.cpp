#include "nsplat/sds/sds.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "nsplat/core/error.hpp"
#include "nsplat/kernels/kernels.hpp"
#include "nsplat/splat/image.hpp"

namespace nsplat::sds {

using json = nlohmann::json;

std::vector<double> ZeroGuidance::residual(const splat::RenderedImage& rendered,
                                           const GuidanceCondition&) {
  return std::vector<double>(rendered.rgb.size(), 0.0);
}

PhotometricGuidance::PhotometricGuidance(
    std::vector<splat::RenderedImage> targets)
    : targets_(std::move(targets)) {
  if (targets_.empty())
    throw_validation("photometric guidance needs at least one target view");
}

std::vector<double> PhotometricGuidance::residual(
    const splat::RenderedImage& rendered, const GuidanceCondition& cond) {
  if (cond.view_index >= targets_.size())
    throw_validation("photometric guidance has no target for view " +
                     std::to_string(cond.view_index));
  const splat::RenderedImage& target = targets_[cond.view_index];
  if (target.width != rendered.width || target.height != rendered.height)
    throw_validation("photometric target resolution does not match the render");
  std::vector<double> out(rendered.rgb.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = rendered.rgb[i] - target.rgb[i];
  last_loss_ = 0.5 * kernels::sum_sq(out.data(), out.size());
  return out;
}

splat::Camera ring_camera(const CameraRing& ring, double azimuth_rad) {
  const double elev = ring.elevation_deg * std::numbers::pi / 180.0;
  const Vec3 eye = ring.target + Vec3{std::cos(elev) * std::cos(azimuth_rad),
                                      std::sin(elev),
                                      std::cos(elev) * std::sin(azimuth_rad)} *
                                     ring.radius;
  return splat::look_at_camera(eye, ring.target, {0.0, 1.0, 0.0}, ring.fov_deg,
                               ring.width, ring.height, ring.near);
}

std::vector<splat::Camera> make_camera_ring(const CameraRing& ring) {
  if (ring.views < 1) throw_validation("camera ring needs at least one view");
  std::vector<splat::Camera> cams;
  cams.reserve(ring.views);
  for (int k = 0; k < ring.views; ++k)
    cams.push_back(
        ring_camera(ring, 2.0 * std::numbers::pi * k / ring.views));
  return cams;
}

void validate_config(const OptConfig& cfg) {
  if (cfg.steps_object < 0 || cfg.steps_scene < 0)
    throw_validation("step counts must be nonnegative");
  for (const double lr : {cfg.lr.mu, cfg.lr.color, cfg.lr.opacity,
                          cfg.lr.scale, cfg.lr.rotation})
    if (!(lr > 0.0)) throw_validation("learning rates must be positive");
  if (cfg.lambda_weight < 0.0)
    throw_validation("lambda_weight must be nonnegative");
  if (!(cfg.rms_beta >= 0.0) || !(cfg.rms_beta < 1.0))
    throw_validation("rms_beta must lie in [0, 1)");
  if (!(cfg.rms_eps > 0.0)) throw_validation("rms_eps must be positive");
  if (cfg.lr_decay < 0.0) throw_validation("lr_decay must be nonnegative");
  if (cfg.init_per_object == 0)
    throw_validation("init_per_object must be at least 1");
}

OptConfig load_opt_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_validation("cannot open config '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw_validation(std::string("config is not valid JSON: ") + e.what());
  }
  OptConfig cfg;
  try {
    cfg.steps_object = doc.value("steps_object", cfg.steps_object);
    cfg.steps_scene = doc.value("steps_scene", cfg.steps_scene);
    cfg.lambda_weight = doc.value("lambda_weight", cfg.lambda_weight);
    cfg.guidance_scale_object =
        doc.value("guidance_scale_object", cfg.guidance_scale_object);
    cfg.guidance_scale_scene =
        doc.value("guidance_scale_scene", cfg.guidance_scale_scene);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.init_per_object = doc.value("init_per_object", cfg.init_per_object);
    cfg.rms_beta = doc.value("rms_beta", cfg.rms_beta);
    cfg.rms_eps = doc.value("rms_eps", cfg.rms_eps);
    cfg.lr_decay = doc.value("lr_decay", cfg.lr_decay);
    if (doc.contains("lr")) {
      const json& lr = doc["lr"];
      cfg.lr.mu = lr.value("mu", cfg.lr.mu);
      cfg.lr.color = lr.value("color", cfg.lr.color);
      cfg.lr.opacity = lr.value("opacity", cfg.lr.opacity);
      cfg.lr.scale = lr.value("scale", cfg.lr.scale);
      cfg.lr.rotation = lr.value("rotation", cfg.lr.rotation);
    }
    if (doc.contains("ring")) {
      const json& r = doc["ring"];
      cfg.ring.views = r.value("views", cfg.ring.views);
      cfg.ring.radius = r.value("radius", cfg.ring.radius);
      cfg.ring.elevation_deg = r.value("elevation_deg", cfg.ring.elevation_deg);
      cfg.ring.fov_deg = r.value("fov_deg", cfg.ring.fov_deg);
      cfg.ring.width = r.value("width", cfg.ring.width);
      cfg.ring.height = r.value("height", cfg.ring.height);
      cfg.ring.near = r.value("near", cfg.ring.near);
      if (r.contains("target")) {
        const auto t = r["target"].get<std::vector<double>>();
        if (t.size() != 3) throw_validation("ring.target needs 3 numbers");
        cfg.ring.target = {t[0], t[1], t[2]};
      }
    }
    if (doc.contains("background")) {
      const auto b = doc["background"].get<std::vector<double>>();
      if (b.size() != 3) throw_validation("background needs 3 numbers");
      cfg.background = {b[0], b[1], b[2]};
    }
  } catch (const json::exception& e) {
    throw_validation(std::string("config field error: ") + e.what());
  }
  validate_config(cfg);
  return cfg;
}

std::vector<splat::Gaussian3D> SceneState::flatten() const {
  std::vector<splat::Gaussian3D> all;
  for (const SceneObject& obj : objects)
    all.insert(all.end(), obj.gaussians.begin(), obj.gaussians.end());
  return all;
}

namespace {

constexpr std::size_t kParamsPerGaussian = 14;

// RMS-scaled update followed by the range projections. Rotations are only
// renormalized when their components actually moved, so a zero gradient is
// a byte-exact fixed point.
void apply_update(std::vector<splat::Gaussian3D>& gaussians,
                  const std::vector<splat::GaussianGrads>& grads,
                  const OptConfig& cfg, OptState& state, int step) {
  const std::size_t n_params = gaussians.size() * kParamsPerGaussian;
  if (state.v.size() != n_params) state.ensure(n_params);
  const double decay = 1.0 / (1.0 + cfg.lr_decay * static_cast<double>(step));

  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    splat::Gaussian3D& g = gaussians[i];
    const splat::GaussianGrads& gr = grads[i];
    double* v = state.v.data() + i * kParamsPerGaussian;

    const double grad_values[kParamsPerGaussian] = {
        gr.mu.x,       gr.mu.y,       gr.mu.z,      gr.color.x,
        gr.color.y,    gr.color.z,    gr.opacity,   gr.scale.x,
        gr.scale.y,    gr.scale.z,    gr.rotation[0], gr.rotation[1],
        gr.rotation[2], gr.rotation[3]};
    const double lrs[kParamsPerGaussian] = {
        cfg.lr.mu,      cfg.lr.mu,      cfg.lr.mu,      cfg.lr.color,
        cfg.lr.color,   cfg.lr.color,   cfg.lr.opacity, cfg.lr.scale,
        cfg.lr.scale,   cfg.lr.scale,   cfg.lr.rotation, cfg.lr.rotation,
        cfg.lr.rotation, cfg.lr.rotation};
    double* params[kParamsPerGaussian] = {
        &g.mu.x,       &g.mu.y,       &g.mu.z,      &g.color.x,
        &g.color.y,    &g.color.z,    &g.opacity,   &g.scale.x,
        &g.scale.y,    &g.scale.z,    &g.rotation.w, &g.rotation.x,
        &g.rotation.y, &g.rotation.z};

    bool rotation_moved = false;
    for (std::size_t p = 0; p < kParamsPerGaussian; ++p) {
      const double grad = grad_values[p];
      v[p] = cfg.rms_beta * v[p] + (1.0 - cfg.rms_beta) * grad * grad;
      const double delta =
          decay * lrs[p] * grad / (std::sqrt(v[p]) + cfg.rms_eps);
      if (delta != 0.0) {
        *params[p] -= delta;
        if (p >= 10) rotation_moved = true;
      }
    }

    g.opacity = std::clamp(g.opacity, 0.0, 1.0);
    g.color.x = std::clamp(g.color.x, 0.0, 1.0);
    g.color.y = std::clamp(g.color.y, 0.0, 1.0);
    g.color.z = std::clamp(g.color.z, 0.0, 1.0);
    g.scale.x = std::max(g.scale.x, 1e-6);
    g.scale.y = std::max(g.scale.y, 1e-6);
    g.scale.z = std::max(g.scale.z, 1e-6);
    if (rotation_moved) g.rotation = g.rotation.normalized();
  }
}

StepResult sds_step(std::vector<splat::Gaussian3D>& gaussians,
                    const std::vector<splat::Camera>& cams,
                    GuidanceProvider& guidance, const OptConfig& cfg, int step,
                    OptState& state, GuidanceCondition cond) {
  if (gaussians.empty()) throw_validation("cannot optimize an empty object");
  if (cams.empty()) throw_validation("camera set must be non-empty");
  const std::size_t view = static_cast<std::size_t>(step) % cams.size();
  const splat::Camera& cam = cams[view];
  cond.step = step;
  cond.view_index = view;
  cond.camera = &cam;

  const splat::RenderedImage rendered = splat::render(gaussians, cam, cfg.background);
  std::vector<double> res = guidance.residual(rendered, cond);
  if (res.size() != rendered.rgb.size())
    throw_validation("guidance residual shape mismatch: expected " +
                     std::to_string(rendered.rgb.size()) + " values, got " +
                     std::to_string(res.size()));
  for (const double r : res)
    if (!std::isfinite(r))
      throw_numeric("guidance residual contains non-finite values");

  for (double& r : res) r *= cfg.lambda_weight;
  const std::vector<splat::GaussianGrads> grads =
      splat::render_backward(gaussians, cam, cfg.background, res);
  apply_update(gaussians, grads, cfg, state, step);

  StepResult out;
  out.loss = guidance.last_loss();
  return out;
}

// Mean provider loss over every view at the current parameters; nullopt as
// soon as the provider exposes no scalar. Used for the optimize() loss log so
// consecutive entries track one objective instead of the sampled view. Scene
// probes carry the per-view box rasterization, same as the update steps.
std::optional<double> ring_mean_loss(const std::vector<splat::Gaussian3D>& flat,
                                     const std::vector<splat::Camera>& cams,
                                     GuidanceProvider& guidance,
                                     const OptConfig& cfg,
                                     GuidanceCondition cond,
                                     const std::vector<layout::BoundingBox>* boxes) {
  double sum = 0.0;
  for (std::size_t v = 0; v < cams.size(); ++v) {
    cond.view_index = v;
    cond.camera = &cams[v];
    std::vector<int> ids;
    if (boxes) {
      ids = rasterize_box_ids(*boxes, cams[v]);
      cond.box_ids = &ids;
    }
    const splat::RenderedImage img = splat::render(flat, cams[v], cfg.background);
    guidance.residual(img, cond);
    const std::optional<double> loss = guidance.last_loss();
    if (!loss) return std::nullopt;
    sum += *loss;
  }
  return sum / static_cast<double>(cams.size());
}

}  // namespace

StepResult object_step(std::vector<splat::Gaussian3D>& object_gaussians,
                       const std::vector<splat::Camera>& cams,
                       GuidanceProvider& guidance, const OptConfig& cfg,
                       int step, OptState& state, const std::string& prompt) {
  validate_config(cfg);
  GuidanceCondition cond;
  cond.stage = "object";
  cond.guidance_scale = cfg.guidance_scale_object;
  cond.prompt = prompt;
  return sds_step(object_gaussians, cams, guidance, cfg, step, state, cond);
}

StepResult scene_step(SceneState& state, const std::vector<splat::Camera>& cams,
                      GuidanceProvider& guidance, const OptConfig& cfg,
                      int step, OptState& opt_state) {
  validate_config(cfg);
  if (state.objects.empty()) throw_validation("scene state has no objects");

  std::vector<layout::BoundingBox> boxes;
  std::string prompt;
  for (const SceneObject& obj : state.objects) {
    boxes.push_back(obj.box);
    if (!prompt.empty()) prompt += ", ";
    prompt += obj.prompt;
  }
  std::vector<splat::Gaussian3D> flat = state.flatten();

  GuidanceCondition cond;
  cond.stage = "scene";
  cond.guidance_scale = cfg.guidance_scale_scene;
  cond.prompt = prompt;
  const std::size_t view = static_cast<std::size_t>(step) % cams.size();
  const std::vector<int> ids = rasterize_box_ids(boxes, cams[view]);
  cond.box_ids = &ids;

  const StepResult result =
      sds_step(flat, cams, guidance, cfg, step, opt_state, cond);

  std::size_t at = 0;
  for (SceneObject& obj : state.objects) {
    std::copy(flat.begin() + at, flat.begin() + at + obj.gaussians.size(),
              obj.gaussians.begin());
    at += obj.gaussians.size();
  }
  return result;
}

OptimizeResult optimize(const layout::SceneLayout& layout,
                        GuidanceProvider& guidance_object,
                        GuidanceProvider& guidance_scene, const OptConfig& cfg,
                        const std::vector<splat::Camera>& cams) {
  validate_config(cfg);
  layout::validate_layout(layout);
  const std::vector<splat::Camera> views =
      cams.empty() ? make_camera_ring(cfg.ring) : cams;

  OptimizeResult result;
  for (std::size_t i = 0; i < layout.objects.size(); ++i) {
    const layout::LayoutObject& src = layout.objects[i];
    SceneObject obj;
    obj.name = src.name;
    obj.prompt = src.prompt;
    obj.box = src.box;
    obj.gaussians = layout::init_gaussians_in_box(
        src.box, cfg.init_per_object, cfg.seed + i);
    result.state.objects.push_back(std::move(obj));
  }

  for (std::size_t i = 0; i < result.state.objects.size(); ++i) {
    SceneObject& obj = result.state.objects[i];
    OptState opt_state;
    GuidanceCondition log_cond;
    log_cond.stage = "object";
    log_cond.guidance_scale = cfg.guidance_scale_object;
    log_cond.prompt = obj.prompt;
    for (int step = 0; step < cfg.steps_object; ++step) {
      log_cond.step = step;
      const std::optional<double> pre_loss = ring_mean_loss(
          obj.gaussians, views, guidance_object, cfg, log_cond, nullptr);
      object_step(obj.gaussians, views, guidance_object, cfg, step, opt_state,
                  obj.prompt);
      if (pre_loss)
        result.loss_log.push_back(
            {"object" + std::to_string(i), step, *pre_loss});
    }
  }
  result.object_stage_state = result.state;

  OptState scene_opt_state;
  GuidanceCondition scene_log_cond;
  scene_log_cond.stage = "scene";
  scene_log_cond.guidance_scale = cfg.guidance_scale_scene;
  std::vector<layout::BoundingBox> scene_boxes;
  for (const SceneObject& obj : result.state.objects) {
    scene_boxes.push_back(obj.box);
    if (!scene_log_cond.prompt.empty()) scene_log_cond.prompt += ", ";
    scene_log_cond.prompt += obj.prompt;
  }
  for (int step = 0; step < cfg.steps_scene; ++step) {
    // The global index keeps the step-size decay annealing across the stage
    // boundary instead of restarting it.
    const int global_step = cfg.steps_object + step;
    scene_log_cond.step = global_step;
    const std::optional<double> pre_loss =
        ring_mean_loss(result.state.flatten(), views, guidance_scene, cfg,
                       scene_log_cond, &scene_boxes);
    scene_step(result.state, views, guidance_scene, cfg, global_step,
               scene_opt_state);
    if (pre_loss) result.loss_log.push_back({"scene", step, *pre_loss});
  }
  return result;
}

std::vector<int> rasterize_box_ids(const std::vector<layout::BoundingBox>& boxes,
                                   const splat::Camera& cam) {
  splat::validate_camera(cam);
  const Mat3 rot_t = cam.world_to_camera.rotation().transposed();
  const Vec3 origin = rot_t * (cam.world_to_camera.translation() * -1.0);

  struct LocalBox {
    Mat3 world_to_box;
    Vec3 center;
    Vec3 half;
  };
  std::vector<LocalBox> locals;
  locals.reserve(boxes.size());
  for (const layout::BoundingBox& b : boxes) {
    layout::validate_box(b);
    LocalBox lb;
    lb.world_to_box =
        rotation_matrix(Quat::from_axis_angle({0, 1, 0}, -b.yaw));
    lb.center = b.center;
    lb.half = {b.size.x / 2.0, b.size.z / 2.0, b.size.y / 2.0};
    locals.push_back(lb);
  }

  std::vector<int> ids(static_cast<std::size_t>(cam.width) * cam.height, -1);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Vec3 dir_cam{((x + 0.5) - cam.cx) / cam.fx,
                         ((y + 0.5) - cam.cy) / cam.fy, 1.0};
      const Vec3 dir = rot_t * dir_cam;
      double best_t = std::numeric_limits<double>::infinity();
      int best = -1;
      for (std::size_t b = 0; b < locals.size(); ++b) {
        const LocalBox& lb = locals[b];
        const Vec3 o = lb.world_to_box * (origin - lb.center);
        const Vec3 d = lb.world_to_box * dir;
        double tmin = -std::numeric_limits<double>::infinity();
        double tmax = std::numeric_limits<double>::infinity();
        bool miss = false;
        const double os[3] = {o.x, o.y, o.z};
        const double ds[3] = {d.x, d.y, d.z};
        const double hs[3] = {lb.half.x, lb.half.y, lb.half.z};
        for (int axis = 0; axis < 3 && !miss; ++axis) {
          if (std::abs(ds[axis]) < 1e-12) {
            if (std::abs(os[axis]) > hs[axis]) miss = true;
            continue;
          }
          double t0 = (-hs[axis] - os[axis]) / ds[axis];
          double t1 = (hs[axis] - os[axis]) / ds[axis];
          if (t0 > t1) std::swap(t0, t1);
          tmin = std::max(tmin, t0);
          tmax = std::min(tmax, t1);
          if (tmin > tmax) miss = true;
        }
        if (miss) continue;
        const double t_enter = std::max(tmin, 0.0);
        if (t_enter > tmax) continue;
        if (t_enter < best_t) {
          best_t = t_enter;
          best = static_cast<int>(b);
        }
      }
      ids[static_cast<std::size_t>(y) * cam.width + x] = best;
    }
  }
  return ids;
}

void write_loss_csv(const std::vector<LossRecord>& log,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw_validation("cannot write '" + path + "'");
  out << "stage,step,loss\n";
  char buf[64];
  for (const LossRecord& r : log) {
    std::snprintf(buf, sizeof buf, "%.17g", r.loss);
    out << r.stage << "," << r.step << "," << buf << "\n";
  }
}

splat::Camera camera_from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw_validation(std::string("camera is not valid JSON: ") + e.what());
  }
  try {
    if (doc.contains("lookat")) {
      const json& la = doc["lookat"];
      const auto eye = la.at("eye").get<std::vector<double>>();
      const auto target = la.at("target").get<std::vector<double>>();
      std::vector<double> up{0.0, 1.0, 0.0};
      if (la.contains("up")) up = la["up"].get<std::vector<double>>();
      if (eye.size() != 3 || target.size() != 3 || up.size() != 3)
        throw_validation("lookat vectors need 3 numbers each");
      return splat::look_at_camera(
          {eye[0], eye[1], eye[2]}, {target[0], target[1], target[2]},
          {up[0], up[1], up[2]}, la.value("fov_deg", 45.0),
          la.value("width", 64), la.value("height", 64), la.value("near", 0.01));
    }
    splat::Camera cam;
    const auto w2c = doc.at("world_to_camera").get<std::vector<double>>();
    if (w2c.size() != 16)
      throw_validation("world_to_camera needs 16 row-major numbers");
    std::copy(w2c.begin(), w2c.end(), cam.world_to_camera.m.begin());
    cam.fx = doc.at("fx").get<double>();
    cam.fy = doc.at("fy").get<double>();
    cam.cx = doc.at("cx").get<double>();
    cam.cy = doc.at("cy").get<double>();
    cam.width = doc.at("width").get<int>();
    cam.height = doc.at("height").get<int>();
    cam.near = doc.value("near", 0.01);
    splat::validate_camera(cam);
    return cam;
  } catch (const json::exception& e) {
    throw_validation(std::string("camera field error: ") + e.what());
  }
}

std::string camera_to_json_text(const splat::Camera& cam) {
  json doc;
  doc["world_to_camera"] = cam.world_to_camera.m;
  doc["fx"] = cam.fx;
  doc["fy"] = cam.fy;
  doc["cx"] = cam.cx;
  doc["cy"] = cam.cy;
  doc["width"] = cam.width;
  doc["height"] = cam.height;
  doc["near"] = cam.near;
  return doc.dump(2) + "\n";
}

namespace {

std::string view_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "view_%03zu.f32", i);
  return buf;
}

}  // namespace

void save_targets(const std::string& dir,
                  const std::vector<splat::Camera>& cams,
                  const std::vector<splat::RenderedImage>& images) {
  if (cams.size() != images.size() || cams.empty())
    throw_validation("target set needs matching, non-empty cameras and images");
  std::filesystem::create_directories(dir);
  json doc;
  doc["cameras"] = json::array();
  for (const splat::Camera& cam : cams)
    doc["cameras"].push_back(json::parse(camera_to_json_text(cam)));
  std::ofstream out(dir + "/cameras.json");
  if (!out) throw_validation("cannot write '" + dir + "/cameras.json'");
  out << doc.dump(2) << "\n";
  for (std::size_t i = 0; i < images.size(); ++i)
    splat::write_f32_image(images[i], dir + "/" + view_name(i));
}

std::pair<std::vector<splat::Camera>, std::vector<splat::RenderedImage>>
load_targets(const std::string& dir) {
  std::ifstream in(dir + "/cameras.json");
  if (!in) throw_validation("cannot open '" + dir + "/cameras.json'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw_validation(std::string("cameras.json is not valid JSON: ") + e.what());
  }
  if (!doc.contains("cameras") || !doc["cameras"].is_array() ||
      doc["cameras"].empty())
    throw_validation("cameras.json must hold a non-empty cameras array");

  std::vector<splat::Camera> cams;
  std::vector<splat::RenderedImage> images;
  for (std::size_t i = 0; i < doc["cameras"].size(); ++i) {
    cams.push_back(camera_from_json_text(doc["cameras"][i].dump()));
    images.push_back(splat::read_f32_image(dir + "/" + view_name(i)));
    if (images.back().width != cams.back().width ||
        images.back().height != cams.back().height)
      throw_validation("target view " + std::to_string(i) +
                       " resolution does not match its camera");
  }
  return {std::move(cams), std::move(images)};
}

}  // namespace nsplat::sds
