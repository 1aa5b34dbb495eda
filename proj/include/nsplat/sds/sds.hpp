#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nsplat/layout/layout.hpp"
#include "nsplat/splat/render.hpp"
#include "nsplat/splat/types.hpp"

namespace nsplat::sds {

// Opaque condition record handed to the guidance provider alongside the
// rendered image (stage, step, camera, guidance scale, prompt; the scene
// stage also attaches a per-pixel box-id rasterization of the layout).
struct GuidanceCondition {
  std::string stage;  // "object" or "scene"
  int step = 0;
  std::size_t view_index = 0;
  const splat::Camera* camera = nullptr;
  double guidance_scale = 0.0;
  std::string prompt;
  const std::vector<int>* box_ids = nullptr;  // height*width, -1 = background
};

// Contract for the abstracted denoiser: maps a rendered image and condition
// to a residual image of identical shape, read as (eps_theta(I, xi) - eps).
class GuidanceProvider {
 public:
  virtual ~GuidanceProvider() = default;
  virtual std::vector<double> residual(const splat::RenderedImage& rendered,
                                       const GuidanceCondition& cond) = 0;
  // Scalar diagnostic for the most recent residual, when the provider
  // defines one (the photometric provider does).
  virtual std::optional<double> last_loss() const { return std::nullopt; }
};

class ZeroGuidance : public GuidanceProvider {
 public:
  std::vector<double> residual(const splat::RenderedImage& rendered,
                               const GuidanceCondition& cond) override;
};

// Multi-view photometric oracle: residual = rendered - target(view), so the
// SDS update equals the gradient of 1/2 ||render - target||^2 (times the
// lambda weight). Target count must match the camera set in use.
class PhotometricGuidance : public GuidanceProvider {
 public:
  explicit PhotometricGuidance(std::vector<splat::RenderedImage> targets);
  std::vector<double> residual(const splat::RenderedImage& rendered,
                               const GuidanceCondition& cond) override;
  std::optional<double> last_loss() const override { return last_loss_; }
  std::size_t view_count() const { return targets_.size(); }

 private:
  std::vector<splat::RenderedImage> targets_;
  std::optional<double> last_loss_;
};

struct LearningRates {
  double mu = 1e-3;
  double color = 5e-2;
  double opacity = 2e-2;
  double scale = 5e-3;
  double rotation = 1e-3;
};

// Fixed azimuth ring of inward-looking cameras.
struct CameraRing {
  int views = 8;
  double radius = 4.0;
  double elevation_deg = 15.0;
  double fov_deg = 45.0;
  int width = 64;
  int height = 64;
  Vec3 target;
  double near = 0.01;
};

splat::Camera ring_camera(const CameraRing& ring, double azimuth_rad);
std::vector<splat::Camera> make_camera_ring(const CameraRing& ring);

struct OptConfig {
  int steps_object = 400;
  int steps_scene = 400;
  LearningRates lr;
  double lambda_weight = 1.0;
  double guidance_scale_object = 50.0;
  double guidance_scale_scene = 100.0;
  std::uint64_t seed = 0;
  std::size_t init_per_object = 16;
  CameraRing ring;
  Vec3 background;
  double rms_beta = 0.9;
  double rms_eps = 1e-8;
  // Inverse-time step-size decay: lr_t = lr / (1 + lr_decay * step). The
  // plain RMS update never settles (it limit-cycles at roughly the learning
  // rate); the decay restores convergence.
  double lr_decay = 0.01;
};

void validate_config(const OptConfig& cfg);
OptConfig load_opt_config(const std::string& path);  // JSON, defaults applied

struct SceneObject {
  std::string name;
  std::string prompt;
  layout::BoundingBox box;
  std::vector<splat::Gaussian3D> gaussians;
};

struct SceneState {
  std::vector<SceneObject> objects;
  std::vector<splat::Gaussian3D> flatten() const;
};

// Momentum-free adaptive per-parameter scaling (RMS accumulator), 14 slots
// per Gaussian in (mu, color, opacity, scale, rotation) order.
struct OptState {
  std::vector<double> v;
  void ensure(std::size_t n_params) { v.assign(n_params, 0.0); }
};

struct StepResult {
  std::optional<double> loss;
};

// One SDS update on an isolated object from the round-robin camera
// cams[step % cams.size()].
StepResult object_step(std::vector<splat::Gaussian3D>& object_gaussians,
                       const std::vector<splat::Camera>& cams,
                       GuidanceProvider& guidance, const OptConfig& cfg,
                       int step, OptState& state,
                       const std::string& prompt = {});

// One SDS update on the full flattened scene; boxes stay fixed and the
// condition carries their rasterization.
StepResult scene_step(SceneState& state, const std::vector<splat::Camera>& cams,
                      GuidanceProvider& guidance, const OptConfig& cfg,
                      int step, OptState& opt_state);

struct LossRecord {
  std::string stage;
  int step = 0;
  double loss = 0.0;
};

struct OptimizeResult {
  SceneState object_stage_state;  // checkpoint at the stage boundary
  SceneState state;
  std::vector<LossRecord> loss_log;
};

// Full two-stage run: per-object initialization from the layout, then
// steps_object of object_step per object, then steps_scene of scene_step.
// When cams is empty the ring from cfg is used.
OptimizeResult optimize(const layout::SceneLayout& layout,
                        GuidanceProvider& guidance_object,
                        GuidanceProvider& guidance_scene, const OptConfig& cfg,
                        const std::vector<splat::Camera>& cams = {});

// Nearest-box id per pixel (-1 where no box is hit) by ray/box intersection.
std::vector<int> rasterize_box_ids(const std::vector<layout::BoundingBox>& boxes,
                                   const splat::Camera& cam);

void write_loss_csv(const std::vector<LossRecord>& log, const std::string& path);

// Camera JSON: either explicit intrinsics+extrinsics or a look-at form.
splat::Camera camera_from_json_text(const std::string& text);
std::string camera_to_json_text(const splat::Camera& cam);

// Target view set on disk: <dir>/cameras.json plus view_NNN.f32 dumps.
void save_targets(const std::string& dir,
                  const std::vector<splat::Camera>& cams,
                  const std::vector<splat::RenderedImage>& images);
std::pair<std::vector<splat::Camera>, std::vector<splat::RenderedImage>>
load_targets(const std::string& dir);

}  // namespace nsplat::sds
