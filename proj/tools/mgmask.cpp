#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mgmask/errors.hpp"
#include "mgmask/flow.hpp"
#include "mgmask/image.hpp"
#include "mgmask/mae.hpp"
#include "mgmask/mask.hpp"
#include "mgmask/synth.hpp"
#include "mgmask/tensor.hpp"
#include "mgmask/vten.hpp"

namespace {

namespace fs = std::filesystem;
using namespace mgm;

struct ClipInput {
  std::string clip_path;
  std::string frames_dir;
};

void add_clip_flags(CLI::App* cmd, ClipInput& in) {
  cmd->add_option("--clip", in.clip_path, "input clip as a VTEN [T,3,H,W] file");
  cmd->add_option("--frames", in.frames_dir, "directory of PPM (P6) frames");
}

Tensor load_clip(const ClipInput& in) {
  if (!in.clip_path.empty() == !in.frames_dir.empty())
    throw ValidationError("exactly one of --clip or --frames is required");
  if (!in.clip_path.empty()) {
    if (!fs::exists(in.clip_path)) throw IoError("no such file: " + in.clip_path);
    Tensor clip = read_vten(in.clip_path);
    validate_clip(clip);
    return clip;
  }
  return image::clip_from_ppm_dir(in.frames_dir);
}

struct MaskFlags {
  std::string strategy = "motion_guided";
  double ratio = 0.9;
  std::string base = "middle";
  std::string init = "gmm";
  double sigma_x = 16.0, sigma_y = 16.0;
  std::string warp = "backward";
  std::string fill = "tube";
  std::string sample = "frame_level";
  double noise_std = 0.0;
  std::uint64_t seed = 0;
};

void add_mask_flags(CLI::App* cmd, MaskFlags& f, bool with_strategy = true) {
  if (with_strategy)
    cmd->add_option("--strategy", f.strategy, "masking strategy: motion_guided, tube, random")
        ->capture_default_str();
  cmd->add_option("--ratio", f.ratio, "masking ratio in (0,1)")->capture_default_str();
  cmd->add_option("--base", f.base, "base frame: first, middle, random")->capture_default_str();
  cmd->add_option("--init", f.init, "initial map: gmm, token_random, pixel_random")
      ->capture_default_str();
  cmd->add_option("--sigma-x", f.sigma_x, "Gaussian std in pixels, horizontal")
      ->capture_default_str();
  cmd->add_option("--sigma-y", f.sigma_y, "Gaussian std in pixels, vertical")
      ->capture_default_str();
  cmd->add_option("--warp", f.warp, "warp direction: backward, forward")->capture_default_str();
  cmd->add_option("--fill", f.fill,
                  "hole filling: tube, random, visible, invisible, previous_map")
      ->capture_default_str();
  cmd->add_option("--sample", f.sample, "token sampling: frame_level, clip_level")
      ->capture_default_str();
  cmd->add_option("--noise-std", f.noise_std, "Gaussian noise std added to one random slice")
      ->capture_default_str();
  cmd->add_option("--seed", f.seed, "RNG seed")->envname("MGMASK_SEED")->capture_default_str();
}

maskgen::MaskConfig to_mask_config(const MaskFlags& f) {
  maskgen::MaskConfig cfg;
  cfg.strategy = maskgen::strategy_from_string(f.strategy);
  cfg.ratio = f.ratio;
  if (f.base == "first") cfg.base_frame = maskgen::BaseMode::First;
  else if (f.base == "middle") cfg.base_frame = maskgen::BaseMode::Middle;
  else if (f.base == "random") cfg.base_frame = maskgen::BaseMode::Random;
  else throw ValidationError("unknown base mode '" + f.base + "'");
  if (f.init == "gmm") cfg.init = maskgen::InitMode::Gmm;
  else if (f.init == "token_random") cfg.init = maskgen::InitMode::TokenRandom;
  else if (f.init == "pixel_random") cfg.init = maskgen::InitMode::PixelRandom;
  else throw ValidationError("unknown init mode '" + f.init + "'");
  cfg.sigma_x = f.sigma_x;
  cfg.sigma_y = f.sigma_y;
  if (f.warp == "backward") cfg.warp = maskgen::WarpDir::Backward;
  else if (f.warp == "forward") cfg.warp = maskgen::WarpDir::Forward;
  else throw ValidationError("unknown warp direction '" + f.warp + "'");
  if (f.fill == "tube") cfg.fill = maskgen::FillMode::Tube;
  else if (f.fill == "random") cfg.fill = maskgen::FillMode::Random;
  else if (f.fill == "visible") cfg.fill = maskgen::FillMode::Visible;
  else if (f.fill == "invisible") cfg.fill = maskgen::FillMode::Invisible;
  else if (f.fill == "previous_map") cfg.fill = maskgen::FillMode::PreviousMap;
  else throw ValidationError("unknown fill mode '" + f.fill + "'");
  if (f.sample == "frame_level") cfg.sample = maskgen::SampleMode::FrameLevel;
  else if (f.sample == "clip_level") cfg.sample = maskgen::SampleMode::ClipLevel;
  else throw ValidationError("unknown sample mode '" + f.sample + "'");
  cfg.noise_std = f.noise_std;
  cfg.seed = f.seed;
  cfg.validate();
  return cfg;
}

struct FlowFlags {
  std::string flow_dir;
  bool estimate = false;
  flow::FlowConfig cfg;
};

void add_flow_source_flags(CLI::App* cmd, FlowFlags& f) {
  cmd->add_option("--flow-dir", f.flow_dir, "directory of precomputed flow_{i}_{j}.flo files");
  cmd->add_flag("--estimate", f.estimate, "estimate flows from the clip");
  cmd->add_option("--levels", f.cfg.levels, "pyramid levels")->capture_default_str();
  cmd->add_option("--iterations", f.cfg.iterations, "solver iterations per level")
      ->capture_default_str();
  cmd->add_option("--alpha", f.cfg.alpha, "smoothness weight")->capture_default_str();
}

flow::FlowSet acquire_flows(const FlowFlags& f, const Tensor& clip, int base) {
  if (!f.flow_dir.empty())
    return flow::load_flow_set(f.flow_dir, static_cast<int>(clip.dim(0)), base, clip.dim(2),
                               clip.dim(3));
  if (f.estimate) return flow::build_flow_set(clip, base, f.cfg);
  throw ValidationError("motion_guided requires --flow-dir or --estimate");
}

struct SceneFlags {
  std::string pattern = "translating_texture";
  double speed = 0.0, vy = 0.0;
  int frames = 16;
  std::size_t height = 64, width = 64;
  std::string background = "constant";
  std::uint64_t texture_seed = 7;
};

void add_scene_flags(CLI::App* cmd, SceneFlags& f) {
  cmd->add_option("--pattern", f.pattern,
                  "translating_texture, translating_square, two_objects, static")
      ->capture_default_str();
  cmd->add_option("--speed", f.speed, "horizontal velocity, pixels per frame")
      ->capture_default_str();
  cmd->add_option("--vy", f.vy, "vertical velocity, pixels per frame")->capture_default_str();
  cmd->add_option("--scene-frames", f.frames, "frame count T")->capture_default_str();
  cmd->add_option("--height", f.height, "frame height")->capture_default_str();
  cmd->add_option("--width", f.width, "frame width")->capture_default_str();
  cmd->add_option("--background", f.background, "constant or noise")->capture_default_str();
  cmd->add_option("--texture-seed", f.texture_seed, "texture RNG seed")->capture_default_str();
}

synth::SceneSpec to_scene_spec(const SceneFlags& f) {
  synth::SceneSpec spec;
  spec.pattern = synth::pattern_from_string(f.pattern);
  spec.vx = f.speed;
  spec.vy = f.vy;
  spec.frames = f.frames;
  spec.height = f.height;
  spec.width = f.width;
  spec.texture_seed = f.texture_seed;
  if (f.background == "constant") spec.background = synth::Background::Constant;
  else if (f.background == "noise") spec.background = synth::Background::Noise;
  else throw ValidationError("unknown background '" + f.background + "'");
  spec.validate();
  return spec;
}

int run_flow(const ClipInput& clip_in, const MaskFlags& mask_flags, const FlowFlags& flow_flags,
             const std::string& method, const std::string& out_dir) {
  const Tensor clip = load_clip(clip_in);
  const maskgen::MaskConfig cfg = to_mask_config(mask_flags);
  const int t = static_cast<int>(clip.dim(0));
  const int base = maskgen::choose_base_frame(t, cfg);

  flow::FlowSet set;
  if (method == "estimate") {
    set = flow::build_flow_set(clip, base, flow_flags.cfg);
    if (!out_dir.empty()) flow::save_flow_set(set, out_dir);
  } else if (method == "load") {
    if (flow_flags.flow_dir.empty()) throw ValidationError("--method load requires --flow-dir");
    set = flow::load_flow_set(flow_flags.flow_dir, t, base, clip.dim(2), clip.dim(3));
  } else {
    throw ValidationError("unknown flow method '" + method + "'");
  }

  for (int i = 1; i <= t; ++i) {
    if (i == base) continue;
    const flow::FlowField& f = set.from_frame(i);
    double acc = 0.0;
    for (std::size_t y = 0; y < f.height(); ++y)
      for (std::size_t x = 0; x < f.width(); ++x)
        acc += std::hypot(f.u(y, x), f.v(y, x));
    std::printf("flow %d->%d mean |flow| = %.6f\n", i, set.target_of(i),
                acc / static_cast<double>(f.height() * f.width()));
  }
  return 0;
}

int run_mask(const ClipInput& clip_in, const MaskFlags& mask_flags, const FlowFlags& flow_flags,
             const std::string& out, const std::string& volume_out,
             const std::string& render_dir) {
  const Tensor clip = load_clip(clip_in);
  const maskgen::MaskConfig cfg = to_mask_config(mask_flags);
  const std::size_t t = clip.dim(0), h = clip.dim(2), w = clip.dim(3);

  std::optional<flow::FlowSet> flows;
  if (cfg.strategy == maskgen::Strategy::MotionGuided) {
    const int base = maskgen::choose_base_frame(static_cast<int>(t), cfg);
    flows = acquire_flows(flow_flags, clip, base);
  }

  const maskgen::TokenMask mask =
      maskgen::generate(t, h, w, flows.has_value() ? &*flows : nullptr, cfg);
  write_vten(mask.to_tensor(), out);
  std::printf("mask: %zu/%zu tokens visible -> %s\n", mask.visible_count(), mask.token_count(),
              out.c_str());

  if (!volume_out.empty()) {
    if (!flows.has_value())
      throw ValidationError("--volume-out requires the motion_guided strategy");
    Rng rng(cfg.seed);
    write_vten(maskgen::build_mask_volume(h, w, *flows, cfg, rng), volume_out);
  }
  if (!render_dir.empty()) image::render_mask_overlays(clip, mask, render_dir);
  return 0;
}

int run_pretrain(const std::string& data_dir, const MaskFlags& mask_flags,
                 const FlowFlags& flow_flags, mae::MaeConfig mae_cfg,
                 const std::string& checkpoint_dir, const std::string& loss_csv) {
  const maskgen::MaskConfig cfg = to_mask_config(mask_flags);
  if (!fs::is_directory(data_dir)) throw IoError("not a directory: " + data_dir);

  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(data_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".vten")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("no .vten clips in " + data_dir);

  std::vector<mae::TrainItem> data;
  for (const std::string& file : files) {
    mae::TrainItem item;
    item.clip = read_vten(file);
    validate_clip(item.clip);
    if (cfg.strategy == maskgen::Strategy::MotionGuided) {
      const int base = maskgen::choose_base_frame(static_cast<int>(item.clip.dim(0)), cfg);
      if (!flow_flags.flow_dir.empty()) {
        const fs::path sub = fs::path(flow_flags.flow_dir) / fs::path(file).stem();
        item.flows = flow::load_flow_set(sub.string(), static_cast<int>(item.clip.dim(0)), base,
                                         item.clip.dim(2), item.clip.dim(3));
      } else if (flow_flags.estimate) {
        item.flows = flow::build_flow_set(item.clip, base, flow_flags.cfg);
      } else {
        throw ValidationError("motion_guided requires --flow-dir or --estimate");
      }
    }
    data.push_back(std::move(item));
  }

  const Tensor& first = data.front().clip;
  const std::size_t tokens = (first.dim(0) / maskgen::kTubeDepth) *
                             (first.dim(2) / maskgen::kTokenSize) *
                             (first.dim(3) / maskgen::kTokenSize);
  for (const mae::TrainItem& item : data)
    if (item.clip.dims() != first.dims())
      throw ValidationError("all training clips must share dims");

  mae_cfg.ratio = cfg.ratio;
  Rng model_rng = Rng(mae_cfg.seed).fork(0xF00D);
  mae::ToyMae model = mae::init_model(mae_cfg, tokens, model_rng);
  const std::vector<double> losses = mae::train(model, data, cfg, mae_cfg.steps);

  mae::save_checkpoint(model, checkpoint_dir);
  mae::write_loss_csv(losses, loss_csv);
  std::printf("pretrain: %zu steps, final loss %.6f -> %s, %s\n", losses.size(),
              losses.empty() ? 0.0 : losses.back(), checkpoint_dir.c_str(), loss_csv.c_str());
  return 0;
}

int run_bench(const SceneFlags& scene_flags, const MaskFlags& mask_flags,
              const synth::LeakageOptions& leak, bool train, std::size_t train_steps,
              mae::MaeConfig mae_cfg, std::size_t n_seeds, std::uint64_t seed0, int jobs,
              const std::string& out_json, const std::string& out_csv) {
  const synth::SceneSpec spec = to_scene_spec(scene_flags);

  std::vector<maskgen::MaskConfig> cfgs;
  for (const char* name : {"motion_guided", "tube", "random"}) {
    MaskFlags f = mask_flags;
    f.strategy = name;
    cfgs.push_back(to_mask_config(f));
  }
  std::vector<std::uint64_t> seeds(n_seeds);
  for (std::size_t i = 0; i < n_seeds; ++i) seeds[i] = seed0 + i;

  synth::CompareOptions opts;
  opts.leakage = leak;
  opts.train = train;
  opts.train_steps = train_steps;
  opts.mae = mae_cfg;
  opts.jobs = jobs;

  const synth::CompareReport report = synth::compare_strategies(spec, cfgs, seeds, opts);
  const std::string json = synth::report_to_json(report);
  write_file_bytes(out_json, std::vector<std::uint8_t>(json.begin(), json.end()));
  if (!out_csv.empty()) synth::write_report_csv(report, out_csv);

  for (const synth::StrategyStats& st : report.strategies)
    std::printf("bench %-14s median leakage %.4f (iqr %.4f)%s\n", st.name.c_str(),
                st.median_rate, st.iqr_rate,
                st.final_losses.empty()
                    ? ""
                    : (" median final loss " + std::to_string(st.median_final_loss)).c_str());
  return 0;
}

int run_synth(const SceneFlags& scene_flags, const MaskFlags& mask_flags,
              const std::string& out_dir, bool ppm) {
  const synth::SceneSpec spec = to_scene_spec(scene_flags);
  const maskgen::MaskConfig cfg = to_mask_config(mask_flags);
  const int base = maskgen::choose_base_frame(spec.frames, cfg);
  const synth::Scene scene = synth::generate_scene(spec, Rng(spec.texture_seed), base);

  fs::create_directories(out_dir);
  write_vten(scene.clip, (fs::path(out_dir) / "clip.vten").string());
  flow::save_flow_set(scene.flows, (fs::path(out_dir) / "flows").string());
  if (ppm) image::write_clip_ppm(scene.clip, (fs::path(out_dir) / "frames").string());
  std::printf("synth: %s scene, %d frames %zux%zu, base %d -> %s\n",
              synth::to_string(spec.pattern).c_str(), spec.frames, spec.width, spec.height, base,
              out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"motion-guided masking toolkit for video masked autoencoding"};
  app.require_subcommand(1);

  std::function<int()> action;

  // flow
  auto* flow_cmd = app.add_subcommand("flow", "estimate or validate per-pair optical flow");
  static ClipInput flow_clip;
  static MaskFlags flow_mask;
  static FlowFlags flow_flow;
  static std::string flow_method = "estimate";
  static std::string flow_out;
  add_clip_flags(flow_cmd, flow_clip);
  add_mask_flags(flow_cmd, flow_mask, false);
  add_flow_source_flags(flow_cmd, flow_flow);
  flow_cmd->add_option("--method", flow_method, "estimate or load")->capture_default_str();
  flow_cmd->add_option("--out", flow_out, "output directory for estimated .flo files");
  flow_cmd->callback(
      [&] { action = [] { return run_flow(flow_clip, flow_mask, flow_flow, flow_method, flow_out); }; });

  // mask
  auto* mask_cmd = app.add_subcommand("mask", "generate a token mask for a clip");
  static ClipInput mask_clip;
  static MaskFlags mask_mask;
  static FlowFlags mask_flow;
  static std::string mask_out = "mask.vten";
  static std::string mask_volume_out;
  static std::string mask_render;
  add_clip_flags(mask_cmd, mask_clip);
  add_mask_flags(mask_cmd, mask_mask);
  add_flow_source_flags(mask_cmd, mask_flow);
  mask_cmd->add_option("--out", mask_out, "output TokenMask VTEN path")->capture_default_str();
  mask_cmd->add_option("--volume-out", mask_volume_out, "also write the mask volume VTEN");
  mask_cmd->add_option("--render", mask_render, "directory for PPM overlays");
  mask_cmd->callback([&] {
    action = [] {
      return run_mask(mask_clip, mask_mask, mask_flow, mask_out, mask_volume_out, mask_render);
    };
  });

  // pretrain
  auto* pre_cmd = app.add_subcommand("pretrain", "toy masked-autoencoder pre-training");
  static std::string pre_data;
  static MaskFlags pre_mask;
  static FlowFlags pre_flow;
  static mae::MaeConfig pre_mae;
  static std::string pre_ckpt = "checkpoint";
  static std::string pre_csv = "loss.csv";
  pre_cmd->add_option("--data", pre_data, "directory of VTEN clips")->required();
  add_mask_flags(pre_cmd, pre_mask);
  add_flow_source_flags(pre_cmd, pre_flow);
  pre_cmd->add_option("--dim", pre_mae.embed_dim, "encoder width")->capture_default_str();
  pre_cmd->add_option("--depth", pre_mae.enc_depth, "encoder depth")->capture_default_str();
  pre_cmd->add_option("--heads", pre_mae.heads, "attention heads")->capture_default_str();
  pre_cmd->add_option("--dec-dim", pre_mae.dec_dim, "decoder width")->capture_default_str();
  pre_cmd->add_option("--dec-depth", pre_mae.dec_depth, "decoder depth")->capture_default_str();
  pre_cmd->add_option("--lr", pre_mae.lr, "learning rate")->capture_default_str();
  pre_cmd->add_option("--steps", pre_mae.steps, "SGD steps")->capture_default_str();
  pre_cmd->add_option("--batch", pre_mae.batch, "clips per step")->capture_default_str();
  pre_cmd->add_option("--checkpoint", pre_ckpt, "checkpoint output directory")
      ->capture_default_str();
  pre_cmd->add_option("--loss-csv", pre_csv, "loss curve CSV path")->capture_default_str();
  pre_cmd->callback([&] {
    action = [] {
      pre_mae.seed = pre_mask.seed;
      return run_pretrain(pre_data, pre_mask, pre_flow, pre_mae, pre_ckpt, pre_csv);
    };
  });

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "leakage benchmark across strategies");
  static SceneFlags bench_scene;
  static MaskFlags bench_mask;
  static synth::LeakageOptions bench_leak;
  static bool bench_train = false;
  static std::size_t bench_train_steps = 100;
  static mae::MaeConfig bench_mae;
  static std::size_t bench_seeds = 50;
  static std::uint64_t bench_seed0 = 1;
  static int bench_jobs = 1;
  static std::string bench_json = "report.json";
  static std::string bench_csv;
  add_scene_flags(bench_cmd, bench_scene);
  add_mask_flags(bench_cmd, bench_mask);
  bench_cmd->add_option("--horizon", bench_leak.horizon, "adjacent slices per side")
      ->capture_default_str();
  bench_cmd->add_option("--margin", bench_leak.margin, "border tokens excluded from leakage")
      ->capture_default_str();
  bench_cmd->add_flag("--train", bench_train, "also pre-train a toy model per strategy");
  bench_cmd->add_option("--train-steps", bench_train_steps, "SGD steps when training")
      ->capture_default_str();
  bench_cmd->add_option("--dim", bench_mae.embed_dim, "encoder width")->capture_default_str();
  bench_cmd->add_option("--depth", bench_mae.enc_depth, "encoder depth")->capture_default_str();
  bench_cmd->add_option("--heads", bench_mae.heads, "attention heads")->capture_default_str();
  bench_cmd->add_option("--dec-dim", bench_mae.dec_dim, "decoder width")->capture_default_str();
  bench_cmd->add_option("--dec-depth", bench_mae.dec_depth, "decoder depth")
      ->capture_default_str();
  bench_cmd->add_option("--lr", bench_mae.lr, "learning rate")->capture_default_str();
  bench_cmd->add_option("--seeds", bench_seeds, "number of seeds")->capture_default_str();
  bench_cmd->add_option("--first-seed", bench_seed0, "first seed value")->capture_default_str();
  bench_cmd->add_option("--jobs", bench_jobs, "parallel workers")->capture_default_str();
  bench_cmd->add_option("--out", bench_json, "report JSON path")->capture_default_str();
  bench_cmd->add_option("--csv", bench_csv, "per-seed CSV path");
  bench_cmd->callback([&] {
    action = [] {
      return run_bench(bench_scene, bench_mask, bench_leak, bench_train, bench_train_steps,
                       bench_mae, bench_seeds, bench_seed0, bench_jobs, bench_json, bench_csv);
    };
  });

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "export a synthetic scene with ground-truth flows");
  static SceneFlags synth_scene;
  static MaskFlags synth_mask;
  static std::string synth_out = "scene";
  static bool synth_ppm = false;
  add_scene_flags(synth_cmd, synth_scene);
  add_mask_flags(synth_cmd, synth_mask);
  synth_cmd->add_option("--out", synth_out, "output directory")->capture_default_str();
  synth_cmd->add_flag("--ppm", synth_ppm, "also dump frames as PPM");
  synth_cmd->callback(
      [&] { action = [] { return run_synth(synth_scene, synth_mask, synth_out, synth_ppm); }; });

  try {
    app.parse(argc, argv);
    if (action) return action();
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
