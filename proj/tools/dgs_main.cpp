// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

// dgs: decoupled Gaussian-splatting renderer, inverse renderer and editor.
//
// Subcommands: train, render, relight, precompute-ibl, extract-mesh,
// edit-geometry, edit-texture, eval, gradcheck. Exit codes: 0 success,
// 1 usage error, 2 runtime error. Progress goes to stderr; results are
// files under --out.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "dgs/core/image_io.hpp"
#include "dgs/edit/arap.hpp"
#include "dgs/edit/binding.hpp"
#include "dgs/edit/relight.hpp"
#include "dgs/edit/texture_edit.hpp"
#include "dgs/metrics/metrics.hpp"
#include "dgs/scene/dataset.hpp"
#include "dgs/scene/scene_io.hpp"
#include "dgs/sdf/marching_cubes.hpp"
#include "dgs/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace dgs;

namespace {

int log_level() {
  const char* env = std::getenv("DGS_LOG");
  return env ? std::atoi(env) : 1;
}

void log_line(const std::string& msg) {
  if (log_level() > 0) std::cerr << msg << "\n";
}

Camera camera_from_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open camera file: " + path);
  nlohmann::json doc;
  in >> doc;
  const int width = doc.at("width").get<int>();
  const int height = doc.at("height").get<int>();
  const double angle_x = doc.at("camera_angle_x").get<double>();
  const auto& m = doc.at("transform_matrix");
  Mat3 r_c2w;
  Vec3 center;
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) r_c2w(row, col) = m.at(row).at(col).get<double>();
    center[row] = m.at(row).at(3).get<double>();
  }
  r_c2w.col(1) *= -1.0;
  r_c2w.col(2) *= -1.0;
  Camera cam;
  cam.rotation = r_c2w.transpose();
  cam.translation = -(cam.rotation * center);
  cam.width = width;
  cam.height = height;
  cam.fx = cam.fy = 0.5 * width / std::tan(0.5 * angle_x);
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  return cam;
}

/// Environment file: equirectangular PFM (default) or a 6-face PFM set
/// given as a directory holding face0.pfm .. face5.pfm.
CubeMap load_environment(const std::string& path, int face_res) {
  if (fs::is_directory(path)) {
    CubeMap env;
    for (int face = 0; face < 6; ++face) {
      const Image img = read_pfm((fs::path(path) / ("face" + std::to_string(face) + ".pfm")).string());
      if (face == 0) env = CubeMap(img.width());
      if (img.width() != env.face_res() || img.height() != env.face_res())
        throw ConsistencyError("cube faces disagree on resolution");
      for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) env.texel(face, x, y) = img.rgb(x, y);
    }
    return env;
  }
  return equirect_to_cubemap(read_pfm(path), face_res);
}

void save_environment(const CubeMap& env, const std::string& path, bool faces) {
  if (faces) {
    fs::create_directories(path);
    for (int face = 0; face < 6; ++face) {
      Image img(env.face_res(), env.face_res(), 3);
      for (int y = 0; y < env.face_res(); ++y)
        for (int x = 0; x < env.face_res(); ++x) img.set_rgb(x, y, env.texel(face, x, y));
      write_pfm((fs::path(path) / ("face" + std::to_string(face) + ".pfm")).string(), img);
    }
  } else {
    write_pfm(path, cubemap_to_equirect(env, 2 * env.face_res()));
  }
}

RenderQuality quality_for(int threads, uint64_t seed) {
  RenderQuality quality;
  quality.precompute.threads = threads;
  quality.precompute.seed = seed;
  quality.shade.threads = threads;
  quality.raster.threads = threads;
  return quality;
}

int run_train(const std::string& data, const std::string& config_path, const std::string& out,
              uint64_t seed, int threads, double bound) {
  TrainConfig config;
  if (!config_path.empty()) config = load_train_config(config_path);
  config.seed = seed;
  config.threads = threads;

  log_line("loading dataset from " + data);
  const std::vector<TrainView> views = load_dataset(data, Split::kTrain);
  if (views.empty()) throw ConsistencyError("dataset has no training views");

  TrainState state = make_train_state(config, Vec3::Constant(-bound), Vec3::Constant(bound));
  Pcg32 view_picker(seed, 23);
  for (int iter = 0; iter < config.iterations; ++iter) {
    const TrainView& view = views[view_picker.next_below(static_cast<uint32_t>(views.size()))];
    const LossReport report = train_step(state, view);
    if (iter % 50 == 0)
      log_line("iter " + std::to_string(iter) + " total " + std::to_string(report.total) +
               " l1 " + std::to_string(report.l_l1) + " splats " +
               std::to_string(state.cloud.count()));
    if (config.image_dump_interval > 0 && (iter + 1) % config.image_dump_interval == 0) {
      const fs::path dump = fs::path(out) / ("iter_" + std::to_string(iter + 1));
      fs::create_directories(dump);
      EnvironmentLight light = state.light;
      auto render = render_scene(state.cloud, light, views[0].camera,
                                 quality_for(threads, seed));
      Image ldr = render.image;
      for (double& v : ldr.data()) v = clamp01(v);
      write_png((dump / "render.png").string(), ldr);
    }
  }
  save_checkpoint(state, out);
  log_line("checkpoint written to " + out);
  return 0;
}

int run_render(const std::string& scene_path, const std::string& camera_path,
               const std::string& out, uint64_t seed, int threads) {
  LoadedScene scene = load_scene(scene_path);
  const Camera cam = camera_from_json(camera_path);
  const RenderOutput render = render_scene(scene.cloud, scene.light, cam,
                                           quality_for(threads, seed));
  fs::create_directories(out);
  Image ldr = render.image;
  for (double& v : ldr.data()) v = clamp01(v);
  write_png((fs::path(out) / "render.png").string(), ldr);
  write_pfm((fs::path(out) / "render.pfm").string(), render.image);
  dump_gbuffer(render.gbuffer, out);
  return 0;
}

int run_relight(const std::string& scene_path, const std::string& env_path,
                const std::string& camera_path, const std::string& out, uint64_t seed,
                int threads) {
  LoadedScene scene = load_scene(scene_path);
  const Camera cam = camera_from_json(camera_path);
  const CubeMap new_env = load_environment(env_path, scene.light.base.face_res());
  const RenderOutput render =
      relight(scene.cloud, scene.light, new_env, cam, quality_for(threads, seed));
  fs::create_directories(out);
  Image ldr = render.image;
  for (double& v : ldr.data()) v = clamp01(v);
  write_png((fs::path(out) / "relight.png").string(), ldr);
  write_pfm((fs::path(out) / "relight.pfm").string(), render.image);
  dump_gbuffer(render.gbuffer, out);
  return 0;
}

int run_precompute(const std::string& env_path, const std::string& out, int face_res,
                   bool faces_layout, uint64_t seed, int threads) {
  const CubeMap env = load_environment(env_path, face_res);
  PrecomputeOptions opts;
  opts.seed = seed;
  opts.threads = threads;
  fs::create_directories(out);

  const CubeMap irr = precompute_irradiance(env, opts);
  save_environment(irr, faces_layout ? (fs::path(out) / "irradiance").string()
                                     : (fs::path(out) / "irradiance.pfm").string(),
                   faces_layout);
  const auto chain = prefilter_specular(env, opts);
  for (size_t level = 0; level < chain.size(); ++level)
    save_environment(chain[level],
                     faces_layout
                         ? (fs::path(out) / ("prefiltered_" + std::to_string(level))).string()
                         : (fs::path(out) / ("prefiltered_" + std::to_string(level) + ".pfm"))
                               .string(),
                     faces_layout);
  const BrdfLut lut = precompute_brdf_lut();
  Image lut_img(lut.size(), lut.size(), 3);
  for (int j = 0; j < lut.size(); ++j)
    for (int i = 0; i < lut.size(); ++i) {
      lut_img.at(i, j, 0) = lut.entry(i, j).x();
      lut_img.at(i, j, 1) = lut.entry(i, j).y();
    }
  write_pfm((fs::path(out) / "brdf_lut.pfm").string(), lut_img);
  return 0;
}

int run_extract_mesh(const std::string& grid_path, const std::string& out, double iso) {
  const SdfGrid grid = load_grid(grid_path);
  const TriangleMesh mesh = extract_mesh(grid, iso);
  write_obj(out, mesh);
  log_line("mesh: " + std::to_string(mesh.vertex_count()) + " vertices, " +
           std::to_string(mesh.triangle_count()) + " triangles");
  return 0;
}

int run_edit_geometry(const std::string& scene_path, const std::string& mesh_path,
                      const std::string& handles_path, const std::string& out, int iterations,
                      uint64_t seed, int threads) {
  LoadedScene scene = load_scene(scene_path);
  const TriangleMesh mesh = read_obj(mesh_path);
  const DeformationHandleSet handles = read_handle_file(handles_path);
  const ArapResult arap = arap_deform(mesh, handles, iterations);
  const GaussianBinding binding = bind_gaussians(scene.cloud, mesh);
  const GaussianCloud deformed =
      apply_deformation(scene.cloud, binding, mesh, arap.rotations, arap.translations);
  fs::create_directories(out);
  save_scene(deformed, scene.light, (fs::path(out) / "scene.dgs").string());
  write_obj((fs::path(out) / "deformed.obj").string(), arap.mesh);
  (void)seed;
  (void)threads;
  return 0;
}

int run_edit_texture(const std::string& scene_path, const std::string& bundle,
                     const std::string& mesh_path, const std::string& out, int iterations,
                     uint64_t seed, int threads) {
  LoadedScene scene = load_scene(scene_path);
  const TriangleMesh mesh = read_obj(mesh_path);

  TextureEdit edit;
  edit.viewpoint = camera_from_json((fs::path(bundle) / "camera.json").string());
  edit.edited = read_png((fs::path(bundle) / "edit.png").string());
  const Image mask_raw = read_png((fs::path(bundle) / "mask.png").string());
  edit.mask = Image(mask_raw.width(), mask_raw.height(), 1);
  for (int y = 0; y < mask_raw.height(); ++y)
    for (int x = 0; x < mask_raw.width(); ++x)
      edit.mask.at(x, y) = mask_raw.at(x, y, 0) > 0.5 ? 1.0 : 0.0;
  std::ifstream attr_file(fs::path(bundle) / "attribute");
  std::string tag;
  attr_file >> tag;
  if (tag == "k_d") edit.attribute = TextureEdit::Attribute::kDiffuse;
  else if (tag == "r") edit.attribute = TextureEdit::Attribute::kRoughness;
  else if (tag == "k_s") edit.attribute = TextureEdit::Attribute::kSpecular;
  else throw FormatError("edit bundle attribute must be one of k_d, r, k_s");

  EditOptimizeOptions opts;
  opts.iterations = iterations;
  opts.seed = seed;
  opts.threads = threads;
  const EditResult result = optimize_texture_edit(scene.cloud, edit, mesh, opts);
  log_line("edited " + std::to_string(result.selected.size()) + " splats, loss " +
           std::to_string(result.initial_loss) + " -> " + std::to_string(result.final_loss));
  fs::create_directories(out);
  save_scene(result.cloud, scene.light, (fs::path(out) / "scene.dgs").string());
  return 0;
}

int run_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& out) {
  MetricReport report;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(pred_dir))
    if (entry.path().extension() == ".png") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConsistencyError("no PNG files in " + pred_dir);

  for (const fs::path& pred_path : files) {
    const fs::path gt_path = fs::path(gt_dir) / pred_path.filename();
    if (!fs::exists(gt_path)) throw ConsistencyError("missing ground truth for " +
                                                     pred_path.filename().string());
    const Image pred = read_png(pred_path.string());
    const Image gt = read_png(gt_path.string());
    MetricRow row;
    row.view = pred_path.stem().string();
    row.psnr = psnr(pred, gt);
    row.ssim = ssim(pred, gt);
    // Optional normal comparison when PFM pairs sit next to the images.
    const fs::path pred_n = pred_path.parent_path() / (pred_path.stem().string() + "_normal.pfm");
    const fs::path gt_n = gt_path.parent_path() / (gt_path.stem().string() + "_normal.pfm");
    if (fs::exists(pred_n) && fs::exists(gt_n)) {
      const Image pn = read_pfm(pred_n.string());
      const Image gn = read_pfm(gt_n.string());
      Image mask(pn.width(), pn.height(), 1);
      for (int y = 0; y < pn.height(); ++y)
        for (int x = 0; x < pn.width(); ++x)
          mask.at(x, y) = gn.rgb(x, y).norm() > 0.5 ? 1.0 : 0.0;
      row.normal_mse = normal_mse(pn, gn, mask);
    }
    report.rows.push_back(row);
  }
  fs::create_directories(out);
  write_report_csv(report, (fs::path(out) / "report.csv").string());
  const MetricRow mean = report.aggregate();
  std::cout << "psnr " << mean.psnr << " ssim " << mean.ssim << "\n";
  return 0;
}

Camera testcam(int res) {
  Camera cam;
  cam.fx = cam.fy = 1.4 * res;
  cam.cx = cam.cy = 0.5 * res;
  cam.width = cam.height = res;
  cam.near_z = 0.1;
  cam.far_z = 100.0;
  return cam;
}

int run_gradcheck(uint64_t seed, int threads) {
  TrainConfig config;
  config.iterations = 100;
  config.rays_per_batch = 32;
  config.samples_per_ray = 24;
  config.stratified_samples = 16;
  config.train_env_res = 8;
  config.train_precompute_samples = 64;
  config.grid_cells = 8;
  config.init_gaussians = 20;
  config.reseed_at_phase_b = false;
  config.seed = seed;
  config.threads = threads;

  TrainState state = make_train_state(config, Vec3::Constant(-1), Vec3::Constant(1));
  Pcg32 rng(seed, 41);
  for (Gaussian& g : state.cloud.gaussians) {
    const double angle = rng.uniform(0, 2 * kPi);
    const double radius = rng.uniform(0.0, 0.45);
    g.position = Vec3(radius * std::cos(angle), radius * std::sin(angle),
                      4.0 + rng.uniform(-0.3, 0.3));
    g.log_scale = Vec3::Constant(rng.uniform(-2.2, -1.6));
    g.opacity_logit = rng.uniform(0.5, 2.0);
    g.normal = Vec3(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(-1.0, -0.6))
                   .normalized();
    g.roughness = rng.uniform(0.3, 0.8);
  }
  TrainView view;
  view.camera = testcam(24);
  TrainState target = state;
  for (Gaussian& g : target.cloud.gaussians)
    g.diffuse_albedo = Vec3(rng.next_double(), rng.next_double(), rng.next_double());
  target.light.refresh(PrecomputeOptions{.irradiance_res = 8, .prefilter_samples = 64,
                                         .seed = 3, .threads = threads});
  const GBuffer gb = render_gbuffer(target.cloud, view.camera);
  view.image = deferred_shade(gb, view.camera, target.light, ShadeOptions{});
  view.mask = Image(gb.width, gb.height, 1);
  for (int y = 0; y < gb.height; ++y)
    for (int x = 0; x < gb.width; ++x)
      view.mask.at(x, y) = gb.alpha_map.at(x, y) > 0.5 ? 1.0 : 0.0;

  const std::pair<const char*, ParamGroup> groups[] = {
      {"k_d", ParamGroup::kDiffuse},      {"roughness", ParamGroup::kRoughness},
      {"k_s", ParamGroup::kSpecular},     {"normal", ParamGroup::kNormal},
      {"opacity", ParamGroup::kOpacity},  {"environment", ParamGroup::kEnvironment},
  };
  int failures = 0;
  for (const auto& [name, group] : groups) {
    const double err = gradient_check(state, view, group);
    const double tol = group == ParamGroup::kEnvironment ? 5e-3 : 1e-3;
    std::cout << name << " max rel err " << err << (err <= tol ? "  ok" : "  FAIL") << "\n";
    if (err > tol) ++failures;
  }
  return failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dgs: decoupled Gaussian splatting with deferred shading"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  uint64_t seed = 0;
  int threads = 1;
  app.add_option("--seed", seed, "Random seed (runs are reproducible per seed)");
  app.add_option("--threads", threads, "Worker threads for all parallel regions");

  std::string data, config_path, out = "out", scene_path, camera_path, env_path, grid_path,
              mesh_path, handles_path, bundle, pred_dir, gt_dir;
  double bound = 1.0, iso = 0.0;
  int face_res = 512, iterations = 20, edit_iterations = 200;
  bool faces_layout = false;

  CLI::App* train = app.add_subcommand("train", "Joint reconstruction from a dataset");
  train->add_option("--data", data, "Dataset root (transforms_train.json)")->required();
  train->add_option("--config", config_path, "TrainConfig key-value file");
  train->add_option("--out", out, "Checkpoint directory");
  train->add_option("--bound", bound, "Scene half-extent (bounds are +-bound)");

  CLI::App* render = app.add_subcommand("render", "Render a scene file");
  render->add_option("--scene", scene_path, "Scene .dgs file")->required();
  render->add_option("--camera", camera_path, "Camera JSON")->required();
  render->add_option("--out", out, "Output directory");

  CLI::App* relight_cmd = app.add_subcommand("relight", "Render under a new environment");
  relight_cmd->add_option("--scene", scene_path, "Scene .dgs file")->required();
  relight_cmd->add_option("--env", env_path, "Environment PFM (equirect) or face directory")
      ->required();
  relight_cmd->add_option("--camera", camera_path, "Camera JSON")->required();
  relight_cmd->add_option("--out", out, "Output directory");

  CLI::App* pre = app.add_subcommand("precompute-ibl", "Split-sum products for an environment");
  pre->add_option("--env", env_path, "Environment PFM (equirect) or face directory")->required();
  pre->add_option("--out", out, "Output directory");
  pre->add_option("--face-res", face_res, "Cube face resolution for equirect input");
  pre->add_flag("--faces", faces_layout, "Write six-face PFM sets instead of equirect");

  CLI::App* extract = app.add_subcommand("extract-mesh", "Marching cubes on an SDF checkpoint");
  extract->add_option("--sdf", grid_path, "sdf.grid checkpoint")->required();
  extract->add_option("--out", out, "Output OBJ path");
  extract->add_option("--iso", iso, "Iso value");

  CLI::App* geo = app.add_subcommand("edit-geometry", "ARAP deformation carried to the splats");
  geo->add_option("--scene", scene_path, "Scene .dgs file")->required();
  geo->add_option("--mesh", mesh_path, "Proxy mesh OBJ")->required();
  geo->add_option("--handles", handles_path, "Handle file (index x y z; negative = fixed)")
      ->required();
  geo->add_option("--out", out, "Output directory");
  geo->add_option("--iterations", iterations, "Local-global iterations");

  CLI::App* tex = app.add_subcommand("edit-texture", "Multi-view texture edit optimization");
  tex->add_option("--scene", scene_path, "Scene .dgs file")->required();
  tex->add_option("--edit", bundle, "Edit bundle directory (edit.png, mask.png, camera.json, attribute)")
      ->required();
  tex->add_option("--mesh", mesh_path, "Proxy mesh OBJ")->required();
  tex->add_option("--out", out, "Output directory");
  tex->add_option("--iterations", edit_iterations, "Optimization iterations");

  CLI::App* eval = app.add_subcommand("eval", "PSNR/SSIM (and normal MSE) over image pairs");
  eval->add_option("--pred", pred_dir, "Predicted image directory")->required();
  eval->add_option("--gt", gt_dir, "Ground-truth image directory")->required();
  eval->add_option("--out", out, "Report directory");

  app.add_subcommand("gradcheck", "Finite-difference check of the training gradients");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Exit contract: 0 for --help, 1 for any usage error.
    const int cli_code = app.exit(e);
    return cli_code == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) return run_train(data, config_path, out, seed, threads, bound);
    if (render->parsed()) return run_render(scene_path, camera_path, out, seed, threads);
    if (relight_cmd->parsed())
      return run_relight(scene_path, env_path, camera_path, out, seed, threads);
    if (pre->parsed())
      return run_precompute(env_path, out, face_res, faces_layout, seed, threads);
    if (extract->parsed()) return run_extract_mesh(grid_path, out, iso);
    if (geo->parsed())
      return run_edit_geometry(scene_path, mesh_path, handles_path, out, iterations, seed,
                               threads);
    if (tex->parsed())
      return run_edit_texture(scene_path, bundle, mesh_path, out, edit_iterations, seed,
                              threads);
    if (eval->parsed()) return run_eval(pred_dir, gt_dir, out);
    return run_gradcheck(seed, threads);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
