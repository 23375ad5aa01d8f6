// Acceptance suite: runs every criterion end to end and prints one
// [PASS]/[FAIL] line each. Exit status is the number of failed criteria.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "mgmask/errors.hpp"
#include "mgmask/flow.hpp"
#include "mgmask/mae.hpp"
#include "mgmask/mask.hpp"
#include "mgmask/rng.hpp"
#include "mgmask/synth.hpp"
#include "mgmask/tensor.hpp"
#include "mgmask/vten.hpp"
#include "oracles.hpp"

using namespace mgm;

namespace {

flow::FlowSet physical_constant_flows(int frames, int base, std::size_t h, std::size_t w,
                                      double vx, double vy) {
  flow::FlowSet set = flow::make_empty_flow_set(frames, base);
  for (int i = 1; i <= frames; ++i) {
    if (i == base) continue;
    const double sign = i > base ? -1.0 : 1.0;
    flow::FlowField f = flow::FlowField::zeros(h, w);
    for (std::size_t p = 0; p < h * w; ++p) {
      f.uv[p] = sign * vx;
      f.uv[h * w + p] = sign * vy;
    }
    set.fields[static_cast<std::size_t>(i)] = std::move(f);
  }
  return set;
}

std::set<std::size_t> slice_set(const maskgen::TokenMask& m, std::size_t s) {
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < m.rows * m.cols; ++i)
    if (m.visible[s * m.rows * m.cols + i]) out.insert(i);
  return out;
}

// --- criteria ---------------------------------------------------------

bool zero_flow_collapse(std::string& detail) {
  const auto flows = physical_constant_flows(16, 8, 224, 224, 0, 0);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    maskgen::MaskConfig cfg;  // GMM init, tube fill, frame-level defaults
    cfg.seed = seed;
    const maskgen::TokenMask mask = maskgen::generate(16, 224, 224, &flows, cfg);
    const auto first = slice_set(mask, 0);
    for (std::size_t s = 1; s < mask.slices; ++s)
      if (slice_set(mask, s) != first) {
        detail = "seed " + std::to_string(seed) + ": slice " + std::to_string(s) +
                 " differs from slice 0";
        return false;
      }
  }
  detail = "100 seeds, visible set constant across all 8 slices";
  return true;
}

bool eq2_equivariance(std::string& detail) {
  const int frames = 16, base = 8;
  const std::size_t h = 224, w = 224;
  const long vx = 16;
  const auto flows = physical_constant_flows(frames, base, h, w, vx, 0);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    maskgen::MaskConfig cfg;
    cfg.seed = seed;

    // Pipeline volume vs the exact integer-shift construction.
    Rng rng(cfg.seed);
    const Tensor volume = maskgen::build_mask_volume(h, w, flows, cfg, rng);
    const Tensor base_map = maskgen::initial_map(h, w, cfg);
    const Tensor oracle_volume = oracle::shift_volume(base_map, frames, base, vx, 0);
    if (!(volume == oracle_volume)) {
      detail = "seed " + std::to_string(seed) + ": volume differs from shift oracle";
      return false;
    }

    // Interior of every map equals the base map shifted by (i-b) tokens,
    // bit-exactly (fill regions excluded).
    for (int i = 1; i <= frames; ++i) {
      const long shift = (i - base) * vx;
      for (std::size_t y = 0; y < h; ++y)
        for (long x = 0; x < static_cast<long>(w); ++x) {
          const long sx = x - shift;
          if (sx < 0 || sx >= static_cast<long>(w)) continue;
          if (volume.at(static_cast<std::size_t>(i - 1), y, static_cast<std::size_t>(x)) !=
              base_map.at(y, static_cast<std::size_t>(sx))) {
            detail = "seed " + std::to_string(seed) + ": frame " + std::to_string(i) +
                     " interior shift mismatch";
            return false;
          }
        }
    }

    // Token mask equals the oracle's pool + top-k of the same volume.
    const maskgen::TokenMask mask = maskgen::generate(frames, h, w, &flows, cfg);
    const auto want = oracle::mask_sets_from_volume(oracle_volume, 19);
    for (std::size_t s = 0; s < mask.slices; ++s) {
      const auto got = slice_set(mask, s);
      if (std::vector<std::size_t>(got.begin(), got.end()) != want[s]) {
        detail = "seed " + std::to_string(seed) + ": token set mismatch at slice " +
                 std::to_string(s);
        return false;
      }
    }
  }
  detail = "20 seeds, volume and token sets match the integer-shift oracle exactly";
  return true;
}

bool cardinality(std::string& detail) {
  const auto flows = physical_constant_flows(16, 8, 224, 224, 8, 4);
  for (double ratio : {0.75, 0.8, 0.85, 0.9, 0.95}) {
    const std::size_t want = maskgen::visible_per_slice(224, 224, ratio);
    for (maskgen::Strategy strategy :
         {maskgen::Strategy::MotionGuided, maskgen::Strategy::Tube, maskgen::Strategy::Random}) {
      maskgen::MaskConfig cfg;
      cfg.strategy = strategy;
      cfg.ratio = ratio;
      cfg.seed = 42;
      const maskgen::TokenMask mask = maskgen::generate(16, 224, 224, &flows, cfg);
      for (std::size_t s = 0; s < mask.slices; ++s)
        if (mask.visible_in_slice(s) != want) {
          detail = maskgen::to_string(strategy) + " at ratio " + std::to_string(ratio) +
                   ": slice " + std::to_string(s) + " has " +
                   std::to_string(mask.visible_in_slice(s)) + " visible, want " +
                   std::to_string(want);
          return false;
        }
    }
  }
  detail = "exact per-slice counts for all strategies and ratios {0.75..0.95}";
  return true;
}

bool flow_accuracy(std::string& detail) {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng vel_rng(seed);
    double vx = 0, vy = 0;
    while (vx == 0 && vy == 0) {
      vx = static_cast<double>(vel_rng.uniform_below(17)) - 8.0;
      vy = static_cast<double>(vel_rng.uniform_below(17)) - 8.0;
    }
    synth::SceneSpec spec;
    spec.pattern = synth::Pattern::TranslatingTexture;
    spec.vx = vx;
    spec.vy = vy;
    spec.frames = 2;
    spec.height = 112;
    spec.width = 112;
    spec.texture_seed = seed;
    const synth::Scene scene = synth::generate_scene(spec, Rng(seed), 1);
    const std::size_t elems = 3 * 112 * 112;
    std::vector<double> p1(scene.clip.data(), scene.clip.data() + elems);
    std::vector<double> p2(scene.clip.data() + elems, scene.clip.data() + 2 * elems);
    const flow::FlowField est = flow::estimate_flow(Tensor({3, 112, 112}, std::move(p2)),
                                                    Tensor({3, 112, 112}, std::move(p1)));
    const double epe = oracle::interior_epe(est, -vx, -vy, 16);
    worst = std::max(worst, epe);
    if (epe >= 0.5) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "seed %llu v=(%+.0f,%+.0f): interior EPE %.3f >= 0.5",
                    static_cast<unsigned long long>(seed), vx, vy, epe);
      detail = buf;
      return false;
    }
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "20 textured seeds, worst interior EPE %.3f px", worst);
  detail = buf;
  return true;
}

bool gradient_check(std::string& detail) {
  mae::MaeConfig cfg;
  cfg.embed_dim = 8;
  cfg.enc_depth = 1;
  cfg.heads = 2;
  cfg.dec_dim = 8;
  cfg.dec_depth = 1;
  cfg.ratio = 0.5;
  Rng rng(11);
  mae::ToyMae model = mae::init_model(cfg, 8, rng);
  Tensor clip({2, 3, 32, 64});
  for (std::size_t i = 0; i < clip.numel(); ++i) clip[i] = rng.next_double();
  maskgen::MaskConfig mask_cfg;
  mask_cfg.strategy = maskgen::Strategy::Random;
  mask_cfg.ratio = 0.5;
  mask_cfg.seed = 12;
  const maskgen::TokenMask mask = maskgen::generate(2, 32, 64, nullptr, mask_cfg);

  mae::ToyMae grads = mae::zeros_like(model);
  mae::forward_backward(model, clip, mask, grads);

  std::vector<std::vector<double>*> pvecs, gvecs;
  mae::visit_params(model, [&](const std::string&, std::vector<double>& v,
                               const std::vector<std::size_t>&) { pvecs.push_back(&v); });
  mae::visit_params(grads, [&](const std::string&, std::vector<double>& v,
                               const std::vector<std::size_t>&) { gvecs.push_back(&v); });

  const double h = 1e-5;
  double max_rel = 0.0;
  std::size_t checked = 0;
  for (std::size_t k = 0; k < pvecs.size(); ++k) {
    std::vector<double>& vec = *pvecs[k];
    for (std::size_t i = 0; i < vec.size(); ++i, ++checked) {
      const double keep = vec[i];
      vec[i] = keep + h;
      const double up = mae::forward(model, clip, mask).loss;
      vec[i] = keep - h;
      const double down = mae::forward(model, clip, mask).loss;
      vec[i] = keep;
      const double fd = (up - down) / (2 * h);
      const double an = (*gvecs[k])[i];
      max_rel =
          std::max(max_rel, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-5}));
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%zu parameters, max relative error %.2e", checked, max_rel);
  detail = buf;
  return max_rel < 1e-4;
}

bool leakage_ordering(std::string& detail) {
  synth::SceneSpec spec;
  spec.pattern = synth::Pattern::TranslatingTexture;
  spec.frames = 16;
  spec.height = 224;
  spec.width = 224;
  spec.texture_seed = 7;

  std::vector<maskgen::MaskConfig> cfgs(2);
  cfgs[0].strategy = maskgen::Strategy::MotionGuided;
  cfgs[1].strategy = maskgen::Strategy::Tube;
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 50; ++s) seeds.push_back(s);

  synth::CompareOptions opts;
  opts.jobs = 2;

  spec.vx = 16;
  const synth::CompareReport fast = synth::compare_strategies(spec, cfgs, seeds, opts);
  const double mg_fast = fast.strategies[0].median_rate;
  const double tube_fast = fast.strategies[1].median_rate;

  spec.vx = 0;
  const synth::CompareReport still = synth::compare_strategies(spec, cfgs, seeds, opts);
  const double mg_still = still.strategies[0].median_rate;
  const double tube_still = still.strategies[1].median_rate;

  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "speed 16: motion_guided %.4f vs tube %.4f; speed 0: %.4f == %.4f", mg_fast,
                tube_fast, mg_still, tube_still);
  detail = buf;
  return mg_fast < tube_fast && mg_still == tube_still;
}

bool codec_conformance(std::string& detail) {
  Rng rng(2718);
  for (int iter = 0; iter < 1000; ++iter) {
    std::vector<std::size_t> dims;
    const std::size_t nd = 1 + rng.uniform_below(4);
    for (std::size_t i = 0; i < nd; ++i) dims.push_back(1 + rng.uniform_below(8));
    Tensor t(dims);
    for (std::size_t i = 0; i < t.numel(); ++i)
      t[i] = static_cast<double>(static_cast<float>((rng.next_double() - 0.5) *
                                                    std::pow(10.0, rng.uniform_below(7))));
    const auto bytes = encode_vten(t);
    const Tensor back = decode_vten(bytes);
    if (!(back == t) || encode_vten(back) != bytes) {
      detail = "vten round trip mismatch at iteration " + std::to_string(iter);
      return false;
    }
  }
  const std::string flo_path = "acceptance_fuzz.flo";
  for (int iter = 0; iter < 1000; ++iter) {
    const std::size_t h = 1 + rng.uniform_below(8), w = 1 + rng.uniform_below(8);
    flow::FlowField f = flow::FlowField::zeros(h, w);
    for (std::size_t i = 0; i < f.uv.numel(); ++i)
      f.uv[i] = static_cast<double>(static_cast<float>(rng.next_normal() * 50));
    flow::write_flo(f, flo_path);
    const flow::FlowField back = flow::read_flo(flo_path);
    if (!(back.uv == f.uv)) {
      detail = "flo round trip mismatch at iteration " + std::to_string(iter);
      return false;
    }
  }
  std::remove(flo_path.c_str());
  detail = "1000 fuzzed tensors and 1000 fuzzed fields, bit-exact";
  return true;
}

bool oracle_equivalence(std::string& detail) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    mae::MaeConfig cfg;
    cfg.embed_dim = 8;
    cfg.enc_depth = 1;
    cfg.heads = 2;
    cfg.dec_dim = 8;
    cfg.dec_depth = 1;
    cfg.ratio = 0.5;
    Rng rng(seed * 31 + 1);
    const mae::ToyMae model = mae::init_model(cfg, 8, rng);
    Tensor clip({2, 3, 32, 64});
    Rng clip_rng(seed * 17 + 3);
    for (std::size_t i = 0; i < clip.numel(); ++i) clip[i] = clip_rng.next_double();
    maskgen::MaskConfig mask_cfg;
    mask_cfg.strategy = maskgen::Strategy::Random;
    mask_cfg.ratio = 0.5;
    mask_cfg.seed = seed;
    const maskgen::TokenMask mask = maskgen::generate(2, 32, 64, nullptr, mask_cfg);

    const double got = mae::forward(model, clip, mask).loss;
    const double want = oracle::mae_loss_reference(model, clip, mask);
    const double rel = std::abs(got - want) / std::max(1.0, std::abs(want));
    worst = std::max(worst, rel);
    if (rel > 1e-10) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "seed %llu: relative gap %.3e exceeds 1e-10",
                    static_cast<unsigned long long>(seed), rel);
      detail = buf;
      return false;
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "10 instances, worst relative gap %.2e", worst);
  detail = buf;
  return true;
}

bool harder_task_direction(std::string& detail) {
  // Desk-scale reproduction of the pre-train loss ordering: masks that track
  // motion make reconstruction strictly harder than tube masks.
  synth::SceneSpec spec;
  spec.pattern = synth::Pattern::TranslatingTexture;
  spec.vx = 16;
  spec.vy = 0;
  spec.frames = 8;
  spec.height = 64;
  spec.width = 128;
  spec.texture_seed = 77;

  mae::MaeConfig mc;
  mc.embed_dim = 32;
  mc.enc_depth = 1;
  mc.heads = 4;
  mc.dec_dim = 16;
  mc.dec_depth = 1;
  mc.lr = 0.2;
  mc.ratio = 0.9;
  mc.batch = 1;
  const std::size_t steps = 500;
  const std::size_t n_seeds = 50;

  const auto run_one = [&](maskgen::Strategy strategy, std::uint64_t seed) {
    maskgen::MaskConfig cfg;
    cfg.strategy = strategy;
    cfg.ratio = mc.ratio;
    cfg.seed = seed;
    const int base = maskgen::choose_base_frame(spec.frames, cfg);
    const synth::Scene scene = synth::generate_scene(spec, Rng(spec.texture_seed).fork(seed), base);
    mae::MaeConfig run_cfg = mc;
    run_cfg.seed = seed;
    Rng rng = Rng(seed).fork(0xF00D);
    const std::size_t tokens =
        (spec.frames / 2) * (spec.height / 16) * (spec.width / 16);
    mae::ToyMae model = mae::init_model(run_cfg, tokens, rng);
    std::vector<mae::TrainItem> data{mae::TrainItem{scene.clip, scene.flows}};
    const std::vector<double> losses = mae::train(model, data, cfg, steps);
    const std::size_t window = steps / 5;
    double acc = 0.0;
    for (std::size_t i = losses.size() - window; i < losses.size(); ++i) acc += losses[i];
    return acc / static_cast<double>(window);
  };

  std::vector<int> wins(n_seeds, 0);
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  for (unsigned t = 0; t < workers; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n_seeds) return;
        const std::uint64_t seed = i + 1;
        const double mg = run_one(maskgen::Strategy::MotionGuided, seed);
        const double tube = run_one(maskgen::Strategy::Tube, seed);
        wins[i] = mg > tube ? 1 : 0;
      }
    });
  for (std::thread& th : pool) th.join();

  int total = 0;
  for (int w : wins) total += w;
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "loss(motion_guided) > loss(tube) in %d/50 matched-seed runs (need >= 45)",
                total);
  detail = buf;
  return total >= 45;
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    const char* name;
    std::function<bool(std::string&)> run;
  };
  const std::vector<Criterion> criteria = {
      {"zero-flow collapse", zero_flow_collapse},
      {"warp-equation equivariance", eq2_equivariance},
      {"per-slice cardinality", cardinality},
      {"flow estimator accuracy", flow_accuracy},
      {"gradient check", gradient_check},
      {"harder-task direction", harder_task_direction},
      {"leakage ordering", leakage_ordering},
      {"codec conformance", codec_conformance},
      {"forward-pass oracle equivalence", oracle_equivalence},
  };

  // Optional substring filter: `acceptance codec` runs matching criteria only.
  const std::string filter = argc > 1 ? argv[1] : "";

  int failures = 0;
  int ran = 0;
  for (const Criterion& c : criteria) {
    if (!filter.empty() && std::string(c.name).find(filter) == std::string::npos) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %-32s (%6.1f s)  %s\n", ok ? "PASS" : "FAIL", c.name, secs,
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  std::printf("%d/%d criteria passed\n", ran - failures, ran);
  return failures;
}
