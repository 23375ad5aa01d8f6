#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgmask/flow.hpp"
#include "mgmask/rng.hpp"
#include "mgmask/tensor.hpp"

namespace mgm::maskgen {

// A token is a 2x16x16 spatiotemporal cube: 16x16 pixels over two
// consecutive frames. A temporal slice is one of the T/2 frame pairs.
constexpr std::size_t kTokenSize = 16;
constexpr std::size_t kTubeDepth = 2;

// Floor applied to every mask-map value so that exact zero only appears
// where warping sampled out of bounds.
constexpr double kHoleMarker = 1e-8;

enum class BaseMode { First, Middle, Random };
enum class InitMode { Gmm, TokenRandom, PixelRandom };
enum class WarpDir { Backward, Forward };
enum class FillMode { Tube, Random, Visible, Invisible, PreviousMap };
enum class SampleMode { FrameLevel, ClipLevel };
enum class Strategy { MotionGuided, Tube, Random };

struct MaskConfig {
  Strategy strategy = Strategy::MotionGuided;
  double ratio = 0.9;
  BaseMode base_frame = BaseMode::Middle;
  InitMode init = InitMode::Gmm;
  double sigma_x = 16.0;  // Gaussian std in pixels, horizontal
  double sigma_y = 16.0;
  WarpDir warp = WarpDir::Backward;
  FillMode fill = FillMode::Tube;
  SampleMode sample = SampleMode::FrameLevel;
  double noise_std = 0.0;  // if > 0, Gaussian noise added to one random slice's map
  std::uint64_t seed = 0;

  void validate() const;
};

// Visible tokens per temporal slice: floor((1-ratio) * (H/16) * (W/16)).
// Throws ValidationError when the result is zero.
std::size_t visible_per_slice(std::size_t height, std::size_t width, double ratio);

// Token visibility decisions, dims [T/2, H/16, W/16]; true = visible.
struct TokenMask {
  std::size_t slices = 0, rows = 0, cols = 0;
  std::vector<std::uint8_t> visible;
  std::vector<std::size_t> visible_indices;  // row-major flat indices, ascending

  std::size_t index(std::size_t s, std::size_t r, std::size_t c) const {
    return (s * rows + r) * cols + c;
  }
  bool is_visible(std::size_t s, std::size_t r, std::size_t c) const {
    return visible[index(s, r, c)] != 0;
  }
  std::size_t token_count() const { return slices * rows * cols; }
  std::size_t visible_count() const { return visible_indices.size(); }
  std::size_t visible_in_slice(std::size_t s) const;

  Tensor to_tensor() const;  // 0/1 values, dims [slices, rows, cols]
  static TokenMask from_tensor(const Tensor& t);
};

// 1-based base frame index: First -> 1, Middle -> floor(T/2), Random ->
// uniform in [1, T].
int choose_base_frame(int frame_count, BaseMode mode, Rng& rng);

// Same, drawing from the config's dedicated seed stream.
int choose_base_frame(int frame_count, const MaskConfig& cfg);

// Base-frame map from a mixture of per-token Gaussians at randomly chosen
// token midpoints, floored at kHoleMarker.
Tensor init_mask_gmm(std::size_t height, std::size_t width, double ratio, double sigma_x,
                     double sigma_y, Rng& rng);

// Binary initialization: token level sets whole 16x16 blocks to 1, pixel
// level sets floor((1-ratio)*H*W) individual pixels to 1; the rest is
// kHoleMarker.
Tensor init_mask_binary(std::size_t height, std::size_t width, double ratio, bool token_level,
                        Rng& rng);

// The exact base-frame map build_mask_volume would start from for this
// config (same seed stream).
Tensor initial_map(std::size_t height, std::size_t width, const MaskConfig& cfg);

struct WarpResult {
  Tensor map;                       // [H, W]
  std::vector<std::uint8_t> holes;  // 1 where no sample landed
  bool has_holes = false;
};

// out(p) = bilinear sample of map at p + flow(p); out-of-bounds neighbor
// contributions are zero, and a pixel is a hole exactly when its sampled
// value is zero.
WarpResult backward_warp(const Tensor& map, const flow::FlowField& f);

// Scatters each source value to the bilinear neighborhood of p + flow(p);
// collisions resolve to the weight-averaged value, untouched pixels are
// holes.
WarpResult forward_warp(const Tensor& map, const flow::FlowField& f);

// Replaces hole pixels in place. previous may be null (first warp step), in
// which case PreviousMap falls back to the base map.
void fill_holes(Tensor& warped, const std::vector<std::uint8_t>& holes, FillMode mode,
                const Tensor& base, const Tensor* previous, double ratio, Rng& rng);

// Progressive construction of the [T,H,W] visibility-score volume outward
// from flows.base_index; slice base_index-1 (0-based) is the initial map
// verbatim.
Tensor build_mask_volume(std::size_t height, std::size_t width, const flow::FlowSet& flows,
                         const MaskConfig& cfg, Rng& rng);

// Average-pools the volume with kernel 2x16x16 and keeps the top-scoring
// tokens: per slice for FrameLevel, globally for ClipLevel. Ties break
// toward the lowest row-major index.
TokenMask sample_tokens(const Tensor& volume, double ratio, SampleMode mode);

// Strategy dispatch. flows may be null for Tube and Random; MotionGuided
// requires it.
TokenMask generate(std::size_t frame_count, std::size_t height, std::size_t width,
                   const flow::FlowSet* flows, const MaskConfig& cfg);

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

}  // namespace mgm::maskgen
