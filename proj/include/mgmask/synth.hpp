#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgmask/flow.hpp"
#include "mgmask/mae.hpp"
#include "mgmask/mask.hpp"
#include "mgmask/rng.hpp"
#include "mgmask/tensor.hpp"

namespace mgm::synth {

enum class Pattern { TranslatingTexture, TranslatingSquare, TwoObjects, Static };
enum class Background { Constant, Noise };

struct SceneSpec {
  Pattern pattern = Pattern::TranslatingTexture;
  double vx = 0.0, vy = 0.0;  // pixels per frame; TwoObjects uses +/- this velocity
  std::uint64_t texture_seed = 0;
  int frames = 16;
  std::size_t height = 64, width = 64;
  Background background = Background::Constant;

  void validate() const;
};

struct Scene {
  Tensor clip;          // [T,3,H,W]
  flow::FlowSet flows;  // exact per-step fields for the requested base
};

// Deterministic given (spec, rng state). base_index <= 0 selects the middle
// frame. Throws ValidationError when an object cannot stay on canvas for
// all frames.
Scene generate_scene(const SceneSpec& spec, Rng rng, int base_index = 0);

struct LeakageOptions {
  int horizon = 1;         // adjacent slices inspected on each side
  std::size_t margin = 0;  // masked tokens this close to the spatial border are skipped
};

struct LeakageEntry {
  std::string strategy;
  double rate = 0.0;                // leaked / masked, in [0,1]
  std::vector<double> per_slice;    // per temporal slice
  std::size_t masked_count = 0;
  std::size_t leaked_count = 0;
};

// Token-center leakage proxy: each masked token's two frame centers are
// propagated along the flow chain to the matching frames of the adjacent
// slices; landing inside a visible token there counts as a leak.
LeakageEntry leakage_rate(const maskgen::TokenMask& mask, const flow::FlowSet& flows,
                          std::size_t height, std::size_t width,
                          const LeakageOptions& opts = {});

struct StrategyStats {
  std::string name;
  std::vector<double> rates;         // per seed, seed order
  double median_rate = 0.0;
  double iqr_rate = 0.0;
  std::vector<double> final_losses;  // per seed when training was requested
  double median_final_loss = 0.0;
  double iqr_final_loss = 0.0;
};

struct CompareOptions {
  LeakageOptions leakage;
  bool train = false;       // additionally pre-train a toy model per strategy
  mae::MaeConfig mae;       // used when train is set
  std::size_t train_steps = 100;
  int jobs = 1;
};

struct CompareReport {
  SceneSpec spec;
  std::vector<std::uint64_t> seeds;
  std::vector<StrategyStats> strategies;
};

// Runs every masking config on identical per-seed scenes. Deterministic for
// a fixed seed list regardless of jobs.
CompareReport compare_strategies(const SceneSpec& spec,
                                 const std::vector<maskgen::MaskConfig>& cfgs,
                                 const std::vector<std::uint64_t>& seeds,
                                 const CompareOptions& opts = {});

std::string report_to_json(const CompareReport& report);
void write_report_csv(const CompareReport& report, const std::string& path);

double median(std::vector<double> values);
double interquartile_range(std::vector<double> values);

std::string to_string(Pattern p);
Pattern pattern_from_string(const std::string& s);

}  // namespace mgm::synth
