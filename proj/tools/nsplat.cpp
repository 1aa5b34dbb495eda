// Command-line front end: ingest -> layout -> optimize -> render -> eval,
// all artifacts on disk, all randomness from --seed.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "nsplat/core/error.hpp"
#include "nsplat/eeg/eeg.hpp"
#include "nsplat/layout/client.hpp"
#include "nsplat/layout/layout.hpp"
#include "nsplat/metrics/metrics.hpp"
#include "nsplat/sds/sds.hpp"
#include "nsplat/splat/image.hpp"
#include "nsplat/splat/ply.hpp"
#include "nsplat/splat/render.hpp"

namespace {

using namespace nsplat;
using nlohmann::json;

eeg::SegmentFormat format_for(const std::string& path,
                              const std::string& explicit_format) {
  if (explicit_format == "csv") return eeg::SegmentFormat::csv;
  if (explicit_format == "f32") return eeg::SegmentFormat::raw_f32le;
  if (!explicit_format.empty())
    throw_validation("unknown segment format '" + explicit_format + "'");
  return path.size() >= 4 && path.substr(path.size() - 4) == ".csv"
             ? eeg::SegmentFormat::csv
             : eeg::SegmentFormat::raw_f32le;
}

std::string slurp_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_validation("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_ingest(const std::string& in_path, const std::string& in_format,
               const std::vector<double>& band,
               const std::vector<double>& window, const std::string& out_path,
               const std::string& out_format) {
  eeg::EegSegment seg = eeg::load_segment(in_path, format_for(in_path, in_format));
  if (!window.empty()) seg = eeg::crop_window(seg, window[0], window[1]);
  if (!band.empty()) seg = eeg::bandpass_filter(seg, band[0], band[1]);
  eeg::save_segment(seg, out_path, format_for(out_path, out_format));
  std::printf("wrote %s (%zu channels x %zu samples @ %g Hz)\n",
              out_path.c_str(), seg.n_channels, seg.n_samples,
              seg.sample_rate_hz);
  return 0;
}

int cmd_layout(const std::string& text, const std::string& endpoint,
               bool use_fallback, int timeout_ms,
               const std::string& lexicon_path, const std::string& out_path) {
  layout::SceneLayout scene;
  if (!endpoint.empty()) {
    const layout::LayoutFetch fetched = layout::request_layout(
        endpoint, text, std::chrono::milliseconds(timeout_ms));
    if (fetched.ok()) {
      scene = fetched.layout;
    } else if (use_fallback) {
      std::fprintf(stderr, "endpoint failed (%s); using the fallback layout\n",
                   fetched.message.c_str());
      scene = lexicon_path.empty()
                  ? layout::fallback_layout(text)
                  : layout::fallback_layout(text, layout::load_lexicon(lexicon_path));
    } else if (fetched.status == layout::FetchStatus::transport_error) {
      throw_transport(fetched.message);
    } else {
      throw_validation(fetched.message);
    }
  } else {
    scene = lexicon_path.empty()
                ? layout::fallback_layout(text)
                : layout::fallback_layout(text, layout::load_lexicon(lexicon_path));
  }

  for (const std::string& warning : layout::layout_warnings(scene))
    std::fprintf(stderr, "warning: %s\n", warning.c_str());

  std::ofstream out(out_path);
  if (!out) throw_validation("cannot write '" + out_path + "'");
  out << layout::serialize_layout(scene);
  std::printf("wrote %s (%zu objects)\n", out_path.c_str(), scene.objects.size());
  return 0;
}

int cmd_optimize(const std::string& layout_path, const std::string& config_path,
                 const std::string& targets_dir, long long seed_flag,
                 const std::string& out_dir) {
  const layout::SceneLayout scene_layout =
      layout::parse_layout_json(slurp_text(layout_path));
  sds::OptConfig cfg =
      config_path.empty() ? sds::OptConfig{} : sds::load_opt_config(config_path);
  if (seed_flag >= 0) cfg.seed = static_cast<std::uint64_t>(seed_flag);

  std::vector<splat::Camera> cams;
  std::unique_ptr<sds::GuidanceProvider> guidance;
  if (!targets_dir.empty()) {
    auto [target_cams, target_images] = sds::load_targets(targets_dir);
    cams = std::move(target_cams);
    guidance = std::make_unique<sds::PhotometricGuidance>(std::move(target_images));
  } else if (cfg.steps_object > 0 || cfg.steps_scene > 0) {
    throw_validation(
        "optimization with steps > 0 needs --targets (the shipped guidance "
        "provider is photometric)");
  } else {
    guidance = std::make_unique<sds::ZeroGuidance>();
  }

  const sds::OptimizeResult result =
      sds::optimize(scene_layout, *guidance, *guidance, cfg, cams);

  std::filesystem::create_directories(out_dir);
  splat::write_ply(result.object_stage_state.flatten(),
                   out_dir + "/object_stage.ply");
  splat::write_ply(result.state.flatten(), out_dir + "/scene.ply");
  sds::write_loss_csv(result.loss_log, out_dir + "/loss.csv");
  std::printf("wrote %s/scene.ply (%zu gaussians), %s/loss.csv (%zu rows)\n",
              out_dir.c_str(), result.state.flatten().size(), out_dir.c_str(),
              result.loss_log.size());
  return 0;
}

int cmd_render(const std::string& scene_path, const std::string& camera_path,
               int ring_views, double radius, double elevation, double fov,
               const std::string& size, const std::vector<double>& target,
               const std::vector<double>& bg, const std::string& out_png,
               const std::string& out_raw, const std::string& out_dir) {
  const std::vector<splat::Gaussian3D> scene = splat::read_ply(scene_path);
  const Vec3 background =
      bg.empty() ? Vec3{0, 0, 0} : Vec3{bg[0], bg[1], bg[2]};

  if (!camera_path.empty()) {
    const splat::Camera cam = sds::camera_from_json_text(slurp_text(camera_path));
    const splat::RenderedImage img = splat::render(scene, cam, background);
    if (!out_png.empty()) splat::write_png(img, out_png);
    if (!out_raw.empty()) splat::write_f32_image(img, out_raw);
    std::printf("rendered %dx%d view\n", cam.width, cam.height);
    return 0;
  }

  if (ring_views <= 0)
    throw_validation("render needs either --camera or --ring");
  if (out_dir.empty()) throw_validation("--ring requires --out-dir");
  sds::CameraRing ring;
  ring.views = ring_views;
  ring.radius = radius;
  ring.elevation_deg = elevation;
  ring.fov_deg = fov;
  if (!target.empty()) ring.target = {target[0], target[1], target[2]};
  if (std::sscanf(size.c_str(), "%dx%d", &ring.width, &ring.height) != 2)
    throw_validation("--size must look like 64x64");

  const std::vector<splat::Camera> cams = sds::make_camera_ring(ring);
  std::vector<splat::RenderedImage> images;
  images.reserve(cams.size());
  for (const splat::Camera& cam : cams)
    images.push_back(splat::render(scene, cam, background));
  sds::save_targets(out_dir, cams, images);
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "/view_%03zu.png", i);
    splat::write_png(images[i], out_dir + name);
  }
  std::printf("rendered %zu ring views into %s\n", cams.size(), out_dir.c_str());
  return 0;
}

// Evenly spaced deterministic subsample to exactly n points.
metrics::PointSet subsample(const std::vector<Vec3>& points, std::size_t n) {
  metrics::PointSet out;
  const std::size_t total = points.size();
  for (std::size_t i = 0; i < n; ++i)
    out.points.push_back(points[i * total / n]);
  return out;
}

int cmd_eval(const std::string& mode, const std::string& hyp_path,
             const std::string& ref_path, const std::string& a_path,
             const std::string& b_path, int max_points,
             const std::string& out_path) {
  json report;
  if (mode == "text") {
    if (hyp_path.empty() || ref_path.empty())
      throw_validation("--mode text needs --hyp and --ref");
    const metrics::TokenSequence hyp = metrics::tokenize(slurp_text(hyp_path));
    const metrics::TokenSequence ref = metrics::tokenize(slurp_text(ref_path));
    const metrics::RougeScore rouge = metrics::rouge1(hyp, ref);
    const std::vector<double> bleu = metrics::bleu(hyp, ref, 4);
    report["rouge1"] = {{"recall", rouge.recall},
                        {"precision", rouge.precision},
                        {"f1", rouge.f1}};
    report["bleu"] = {{"b1", bleu[0]}, {"b2", bleu[1]}, {"b3", bleu[2]},
                      {"b4", bleu[3]}};
  } else if (mode == "3d") {
    if (a_path.empty() || b_path.empty())
      throw_validation("--mode 3d needs --a and --b");
    metrics::PointSet a{splat::read_ply_positions(a_path)};
    metrics::PointSet b{splat::read_ply_positions(b_path)};
    report["chamfer"] = metrics::chamfer(a, b);
    const std::size_t n = std::min({a.points.size(), b.points.size(),
                                    static_cast<std::size_t>(max_points)});
    report["emd"] = metrics::emd(subsample(a.points, n), subsample(b.points, n));
    report["emd_points"] = n;
  } else {
    throw_validation("--mode must be text or 3d");
  }

  const std::string text = report.dump(2) + "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw_validation("cannot write '" + out_path + "'");
    out << text;
  }
  std::fputs(text.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG-to-3D numerical pipeline"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "window and band-pass a segment");
  std::string in_path, in_format, out_path, out_format;
  std::vector<double> band, window;
  ingest->add_option("--in", in_path)->required();
  ingest->add_option("--format", in_format);
  ingest->add_option("--band", band)->expected(2);
  ingest->add_option("--window", window)->expected(2);
  ingest->add_option("--out", out_path)->required();
  ingest->add_option("--out-format", out_format);

  // layout
  auto* layout_cmd = app.add_subcommand("layout", "layout from text");
  std::string text, endpoint, lexicon_path, layout_out;
  bool use_fallback = false;
  int timeout_ms = 5000;
  layout_cmd->add_option("--text", text)->required();
  layout_cmd->add_option("--endpoint", endpoint);
  layout_cmd->add_flag("--fallback", use_fallback);
  layout_cmd->add_option("--timeout-ms", timeout_ms);
  layout_cmd->add_option("--lexicon", lexicon_path);
  layout_cmd->add_option("--out", layout_out)->required();

  // optimize
  auto* optimize = app.add_subcommand("optimize", "two-stage SDS optimization");
  std::string layout_path, config_path, targets_dir, opt_out;
  long long seed_flag = -1;
  optimize->add_option("--layout", layout_path)->required();
  optimize->add_option("--config", config_path);
  optimize->add_option("--targets", targets_dir);
  optimize->add_option("--seed", seed_flag);
  optimize->add_option("--out", opt_out)->required();

  // render
  auto* render = app.add_subcommand("render", "render a scene ply");
  std::string scene_path, camera_path, size = "64x64", out_png, out_raw, out_dir;
  int ring_views = 0;
  double radius = 4.0, elevation = 15.0, fov = 45.0;
  std::vector<double> target, bg;
  render->add_option("--scene", scene_path)->required();
  render->add_option("--camera", camera_path);
  render->add_option("--ring", ring_views);
  render->add_option("--radius", radius);
  render->add_option("--elev", elevation);
  render->add_option("--fov", fov);
  render->add_option("--size", size);
  render->add_option("--target", target)->expected(3);
  render->add_option("--bg", bg)->expected(3);
  render->add_option("--out", out_png);
  render->add_option("--raw", out_raw);
  render->add_option("--out-dir", out_dir);

  // eval
  auto* eval = app.add_subcommand("eval", "text or 3d metric reports");
  std::string mode, hyp_path, ref_path, a_path, b_path, eval_out;
  int max_points = 256;
  eval->add_option("--mode", mode)->required();
  eval->add_option("--hyp", hyp_path);
  eval->add_option("--ref", ref_path);
  eval->add_option("--a", a_path);
  eval->add_option("--b", b_path);
  eval->add_option("--max-points", max_points);
  eval->add_option("--out", eval_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (ingest->parsed())
      return cmd_ingest(in_path, in_format, band, window, out_path, out_format);
    if (layout_cmd->parsed())
      return cmd_layout(text, endpoint, use_fallback, timeout_ms, lexicon_path,
                        layout_out);
    if (optimize->parsed())
      return cmd_optimize(layout_path, config_path, targets_dir, seed_flag,
                          opt_out);
    if (render->parsed())
      return cmd_render(scene_path, camera_path, ring_views, radius, elevation,
                        fov, size, target, bg, out_png, out_raw, out_dir);
    if (eval->parsed())
      return cmd_eval(mode, hyp_path, ref_path, a_path, b_path, max_points,
                      eval_out);
  } catch (const nsplat::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 4;
  }
  return 2;
}
