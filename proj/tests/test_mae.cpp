#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "mgmask/errors.hpp"
#include "mgmask/mae.hpp"
#include "mgmask/synth.hpp"
#include "oracles.hpp"

using namespace mgm;
using namespace mgm::mae;

namespace {

// N = 8 tokens: T=2, H=32, W=64 -> 1 slice x 2 rows x 4 cols.
MaeConfig tiny_config() {
  MaeConfig cfg;
  cfg.embed_dim = 8;
  cfg.enc_depth = 1;
  cfg.heads = 2;
  cfg.dec_dim = 8;
  cfg.dec_depth = 1;
  cfg.ratio = 0.5;
  return cfg;
}

Tensor random_clip(std::size_t t, std::size_t h, std::size_t w, Rng& rng) {
  Tensor clip({t, 3, h, w});
  for (std::size_t i = 0; i < clip.numel(); ++i) clip[i] = rng.next_double();
  return clip;
}

maskgen::TokenMask half_mask(std::size_t slices, std::size_t rows, std::size_t cols,
                             std::uint64_t seed) {
  maskgen::MaskConfig cfg;
  cfg.strategy = maskgen::Strategy::Random;
  cfg.ratio = 0.5;
  cfg.seed = seed;
  return maskgen::generate(slices * 2, rows * 16, cols * 16, nullptr, cfg);
}

}  // namespace

TEST_CASE("cubify counts and round trip") {
  CHECK(cubify(Tensor({16, 3, 224, 224})).dim(0) == 1568);
  CHECK(cubify(Tensor({16, 3, 64, 64})).dim(0) == 128);
  CHECK(cubify(Tensor({16, 3, 224, 224})).dim(1) == 1536);

  Rng rng(1);
  const Tensor clip = random_clip(4, 32, 48, rng);
  const Tensor back = decubify(cubify(clip), 4, 32, 48);
  CHECK(back == clip);
}

TEST_CASE("zeroed head with constant cubes gives zero loss") {
  const MaeConfig cfg = tiny_config();
  Rng rng(2);
  ToyMae model = init_model(cfg, 8, rng);
  for (double& v : model.head.w) v = 0.0;
  for (double& v : model.head.b) v = 0.0;

  const Tensor clip = Tensor::full({2, 3, 32, 64}, 0.25);
  const maskgen::TokenMask mask = half_mask(1, 2, 4, 3);
  const ForwardResult res = forward(model, clip, mask);
  CHECK(res.loss == 0.0);  // normalized constant cube is the zero vector
}

TEST_CASE("loss reads only masked positions") {
  const MaeConfig cfg = tiny_config();
  Rng rng(4);
  ToyMae model = init_model(cfg, 8, rng);
  const Tensor clip = random_clip(2, 32, 64, rng);
  const maskgen::TokenMask mask = half_mask(1, 2, 4, 5);
  const ForwardResult res = forward(model, clip, mask);

  // Recompute from the returned reconstruction; perturbing visible rows
  // must not change the sum.
  const Tensor cubes = cubify(clip);
  const auto manual_loss = [&](const Tensor& recon) {
    double loss = 0.0;
    std::size_t masked = 0;
    for (std::size_t i = 0; i < 8; ++i) {
      if (mask.visible[i]) continue;
      ++masked;
      double mean = 0.0, var = 0.0;
      for (std::size_t j = 0; j < kCubeDim; ++j) mean += cubes.at(i, j);
      mean /= kCubeDim;
      for (std::size_t j = 0; j < kCubeDim; ++j)
        var += (cubes.at(i, j) - mean) * (cubes.at(i, j) - mean);
      var /= kCubeDim;
      const double r = 1.0 / std::sqrt(var + cfg.norm_eps);
      for (std::size_t j = 0; j < kCubeDim; ++j) {
        const double e = recon.at(i, j) - (cubes.at(i, j) - mean) * r;
        loss += e * e;
      }
    }
    return loss / (static_cast<double>(masked) * kCubeDim);
  };
  CHECK(manual_loss(res.recon) == doctest::Approx(res.loss).epsilon(1e-12));

  Tensor perturbed = res.recon;
  for (std::size_t i = 0; i < 8; ++i)
    if (mask.visible[i])
      for (std::size_t j = 0; j < kCubeDim; ++j) perturbed.at(i, j) += 123.0;
  CHECK(manual_loss(perturbed) == manual_loss(res.recon));
}

TEST_CASE("degenerate masks are rejected") {
  const MaeConfig cfg = tiny_config();
  Rng rng(6);
  ToyMae model = init_model(cfg, 8, rng);
  const Tensor clip = random_clip(2, 32, 64, rng);

  maskgen::TokenMask all_visible;
  all_visible.slices = 1;
  all_visible.rows = 2;
  all_visible.cols = 4;
  all_visible.visible.assign(8, 1);
  CHECK_THROWS_AS(forward(model, clip, all_visible), ValidationError);
  maskgen::TokenMask all_masked = all_visible;
  std::fill(all_masked.visible.begin(), all_masked.visible.end(), 0);
  CHECK_THROWS_AS(forward(model, clip, all_masked), ValidationError);
}

TEST_CASE("permuting the visible feed order leaves the loss unchanged") {
  const MaeConfig cfg = tiny_config();
  Rng rng(7);
  ToyMae model = init_model(cfg, 8, rng);
  const Tensor clip = random_clip(2, 32, 64, rng);
  const maskgen::TokenMask mask = half_mask(1, 2, 4, 8);

  const ForwardResult base = forward(model, clip, mask);
  std::vector<std::size_t> order = mask.visible_indices;
  Rng shuffle(9);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[shuffle.uniform_below(i)]);
  const ForwardResult permuted = forward(model, clip, mask, &order);
  CHECK(std::abs(base.loss - permuted.loss) <= 1e-10 * std::max(1.0, std::abs(base.loss)));
}

TEST_CASE("forward matches the straight-line reference on random instances") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    MaeConfig cfg = tiny_config();
    Rng rng(seed * 31 + 1);
    ToyMae model = init_model(cfg, 8, rng);
    const Tensor clip = random_clip(2, 32, 64, rng);
    const maskgen::TokenMask mask = half_mask(1, 2, 4, seed);
    const double got = forward(model, clip, mask).loss;
    const double want = oracle::mae_loss_reference(model, clip, mask);
    CHECK(std::abs(got - want) <= 1e-10 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  const MaeConfig cfg = tiny_config();
  Rng rng(11);
  ToyMae model = init_model(cfg, 8, rng);
  const Tensor clip = random_clip(2, 32, 64, rng);
  const maskgen::TokenMask mask = half_mask(1, 2, 4, 12);

  ToyMae grads = zeros_like(model);
  forward_backward(model, clip, mask, grads);

  std::vector<std::vector<double>*> pvecs, gvecs;
  visit_params(model, [&](const std::string&, std::vector<double>& v,
                          const std::vector<std::size_t>&) { pvecs.push_back(&v); });
  visit_params(grads, [&](const std::string&, std::vector<double>& v,
                          const std::vector<std::size_t>&) { gvecs.push_back(&v); });

  const double h = 1e-5;
  double max_rel = 0.0;
  Rng pick(13);
  for (std::size_t k = 0; k < pvecs.size(); ++k) {
    std::vector<double>& vec = *pvecs[k];
    // Spot-check a handful of coordinates per parameter; the acceptance
    // suite sweeps every coordinate.
    std::vector<std::size_t> idxs;
    for (std::size_t i = 0; i < std::min<std::size_t>(3, vec.size()); ++i) idxs.push_back(i);
    for (int extra = 0; extra < 3; ++extra) idxs.push_back(pick.uniform_below(vec.size()));
    for (std::size_t i : idxs) {
      const double keep = vec[i];
      vec[i] = keep + h;
      const double up = forward(model, clip, mask).loss;
      vec[i] = keep - h;
      const double down = forward(model, clip, mask).loss;
      vec[i] = keep;
      const double fd = (up - down) / (2 * h);
      const double an = (*gvecs[k])[i];
      // Floor keeps finite-difference noise on near-zero gradients from
      // dominating the comparison.
      max_rel = std::max(max_rel, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-5}));
    }
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("zero loss means zero gradients") {
  const MaeConfig cfg = tiny_config();
  Rng rng(14);
  ToyMae model = init_model(cfg, 8, rng);
  for (double& v : model.head.w) v = 0.0;
  for (double& v : model.head.b) v = 0.0;
  const Tensor clip = Tensor::full({2, 3, 32, 64}, 0.5);
  const maskgen::TokenMask mask = half_mask(1, 2, 4, 15);

  ToyMae grads = zeros_like(model);
  const double loss = forward_backward(model, clip, mask, grads);
  CHECK(loss == 0.0);
  visit_params(grads, [&](const std::string&, const std::vector<double>& v,
                          const std::vector<std::size_t>&) {
    for (double g : v) CHECK(g == 0.0);
  });
}

TEST_CASE("gradients are deterministic") {
  const MaeConfig cfg = tiny_config();
  Rng rng(16);
  ToyMae model = init_model(cfg, 8, rng);
  const Tensor clip = random_clip(2, 32, 64, rng);
  const maskgen::TokenMask mask = half_mask(1, 2, 4, 17);

  ToyMae g1 = zeros_like(model), g2 = zeros_like(model);
  const double l1 = forward_backward(model, clip, mask, g1);
  const double l2 = forward_backward(model, clip, mask, g2);
  CHECK(l1 == l2);
  std::vector<const std::vector<double>*> v1, v2;
  visit_params(g1, [&](const std::string&, const std::vector<double>& v,
                       const std::vector<std::size_t>&) { v1.push_back(&v); });
  visit_params(g2, [&](const std::string&, const std::vector<double>& v,
                       const std::vector<std::size_t>&) { v2.push_back(&v); });
  for (std::size_t i = 0; i < v1.size(); ++i) CHECK(*v1[i] == *v2[i]);
}

TEST_CASE("one small sgd step descends on the same batch") {
  const MaeConfig cfg = tiny_config();
  Rng rng(18);
  ToyMae model = init_model(cfg, 8, rng);
  const Tensor clip = random_clip(2, 32, 64, rng);
  const maskgen::TokenMask mask = half_mask(1, 2, 4, 19);

  ToyMae grads = zeros_like(model);
  const double before = forward_backward(model, clip, mask, grads);
  sgd_step(model, grads, 1e-3);
  const double after = forward(model, clip, mask).loss;
  CHECK(after < before);
}

TEST_CASE("training runs deterministically") {
  MaeConfig cfg = tiny_config();
  cfg.lr = 0.05;
  cfg.seed = 20;
  Rng rng(cfg.seed);
  ToyMae model = init_model(cfg, 8, rng);
  ToyMae model2 = model;

  maskgen::MaskConfig mask_cfg;
  mask_cfg.strategy = maskgen::Strategy::Tube;
  mask_cfg.ratio = 0.5;
  mask_cfg.seed = 21;

  std::vector<TrainItem> data;
  Rng clip_rng(22);
  data.push_back(TrainItem{random_clip(2, 32, 64, clip_rng), std::nullopt});
  data.push_back(TrainItem{random_clip(2, 32, 64, clip_rng), std::nullopt});

  const auto losses = train(model, data, mask_cfg, 10);
  CHECK(losses.size() == 10);
  for (double l : losses) CHECK(std::isfinite(l));
  const auto losses2 = train(model2, data, mask_cfg, 10);
  CHECK(losses == losses2);
}

TEST_CASE("training divergence raises a numeric error") {
  MaeConfig cfg = tiny_config();
  cfg.lr = 1e9;
  cfg.seed = 23;
  Rng rng(cfg.seed);
  ToyMae model = init_model(cfg, 8, rng);
  maskgen::MaskConfig mask_cfg;
  mask_cfg.strategy = maskgen::Strategy::Tube;
  mask_cfg.ratio = 0.5;
  std::vector<TrainItem> data;
  Rng clip_rng(24);
  data.push_back(TrainItem{random_clip(2, 32, 64, clip_rng), std::nullopt});
  CHECK_THROWS_AS(train(model, data, mask_cfg, 100), NumericError);
}

TEST_CASE("checkpoint round trip") {
  const MaeConfig cfg = tiny_config();
  Rng rng(25);
  ToyMae model = init_model(cfg, 8, rng);
  const std::string dir =
      (std::filesystem::temp_directory_path() / "mgmask_ckpt_test").string();
  std::filesystem::remove_all(dir);
  save_checkpoint(model, dir);
  const ToyMae loaded = load_checkpoint(dir);
  CHECK(loaded.tokens == model.tokens);

  // First reload narrows f64 params to f32 precision.
  std::vector<const std::vector<double>*> a, b;
  visit_params(model, [&](const std::string&, const std::vector<double>& v,
                          const std::vector<std::size_t>&) { a.push_back(&v); });
  visit_params(loaded, [&](const std::string&, const std::vector<double>& v,
                           const std::vector<std::size_t>&) { b.push_back(&v); });
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k]->size(); ++i)
      CHECK(std::abs((*a[k])[i] - (*b[k])[i]) <=
            1e-6 * std::max(1.0, std::abs((*a[k])[i])));

  // A second round trip is exact.
  save_checkpoint(loaded, dir);
  const ToyMae again = load_checkpoint(dir);
  std::vector<const std::vector<double>*> c;
  visit_params(again, [&](const std::string&, const std::vector<double>& v,
                          const std::vector<std::size_t>&) { c.push_back(&v); });
  for (std::size_t k = 0; k < b.size(); ++k) CHECK(*b[k] == *c[k]);
  std::filesystem::remove_all(dir);
}

TEST_CASE("loss csv format") {
  const std::string path =
      (std::filesystem::temp_directory_path() / "mgmask_loss_test.csv").string();
  write_loss_csv({0.5, 0.25}, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,loss");
  std::getline(in, line);
  CHECK(line == "0,0.5");
  std::getline(in, line);
  CHECK(line == "1,0.25");
  std::filesystem::remove(path);
}

TEST_CASE("static scene: tube and motion-guided losses agree within 2%") {
  synth::SceneSpec spec;
  spec.pattern = synth::Pattern::Static;
  spec.background = synth::Background::Noise;
  spec.frames = 4;
  spec.height = 64;
  spec.width = 64;

  MaeConfig cfg;
  cfg.embed_dim = 16;
  cfg.enc_depth = 1;
  cfg.heads = 2;
  cfg.dec_dim = 8;
  cfg.dec_depth = 1;
  cfg.lr = 0.3;
  cfg.ratio = 0.875;

  double mean_tube = 0.0, mean_mg = 0.0;
  const int n_seeds = 3;
  for (std::uint64_t seed = 1; seed <= n_seeds; ++seed) {
    spec.texture_seed = seed;
    for (const maskgen::Strategy strategy :
         {maskgen::Strategy::Tube, maskgen::Strategy::MotionGuided}) {
      const synth::Scene scene = synth::generate_scene(spec, Rng(seed));
      maskgen::MaskConfig mask_cfg;
      mask_cfg.strategy = strategy;
      mask_cfg.ratio = cfg.ratio;
      mask_cfg.seed = seed;
      MaeConfig run_cfg = cfg;
      run_cfg.seed = seed;
      Rng rng = Rng(seed).fork(0xF00D);
      ToyMae model = init_model(run_cfg, 32, rng);
      std::vector<TrainItem> data;
      data.push_back(TrainItem{scene.clip, scene.flows});
      const auto losses = train(model, data, mask_cfg, 200);
      double tail = 0.0;
      for (std::size_t i = losses.size() - 40; i < losses.size(); ++i) tail += losses[i];
      tail /= 40.0;
      (strategy == maskgen::Strategy::Tube ? mean_tube : mean_mg) += tail / n_seeds;
    }
  }
  CHECK(std::abs(mean_mg - mean_tube) / mean_tube < 0.02);
}
