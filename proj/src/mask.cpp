#include "mgmask/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mgmask/errors.hpp"

namespace mgm::maskgen {

namespace {

// Fork tags keep the random streams of independent pipeline stages apart,
// so e.g. changing the fill strategy never shifts the initial token pick.
constexpr std::uint64_t kStreamBase = 1;
constexpr std::uint64_t kStreamInit = 2;
constexpr std::uint64_t kStreamFill = 3;
constexpr std::uint64_t kStreamNoise = 4;
constexpr std::uint64_t kStreamTube = 5;
constexpr std::uint64_t kStreamRandom = 6;

void check_grid(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0 || height % kTokenSize != 0 || width % kTokenSize != 0)
    throw ValidationError("mask dims must be positive multiples of 16");
}

TokenMask mask_from_sets(std::size_t slices, std::size_t rows, std::size_t cols,
                         const std::vector<std::vector<std::size_t>>& per_slice) {
  TokenMask m;
  m.slices = slices;
  m.rows = rows;
  m.cols = cols;
  m.visible.assign(slices * rows * cols, 0);
  for (std::size_t s = 0; s < slices; ++s)
    for (std::size_t idx : per_slice[s]) m.visible[s * rows * cols + idx] = 1;
  for (std::size_t i = 0; i < m.visible.size(); ++i)
    if (m.visible[i]) m.visible_indices.push_back(i);
  return m;
}

}  // namespace

void MaskConfig::validate() const {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw ValidationError("masking ratio must lie strictly between 0 and 1");
  if (!(sigma_x > 0.0 && sigma_y > 0.0))
    throw ValidationError("sigma components must be positive");
  if (noise_std < 0.0) throw ValidationError("noise std must be non-negative");
}

std::size_t visible_per_slice(std::size_t height, std::size_t width, double ratio) {
  check_grid(height, width);
  const double tokens = static_cast<double>((height / kTokenSize) * (width / kTokenSize));
  const auto n = static_cast<std::size_t>(std::floor((1.0 - ratio) * tokens));
  if (n == 0)
    throw ValidationError("masking ratio leaves no visible token on a " +
                          std::to_string(height / kTokenSize) + "x" +
                          std::to_string(width / kTokenSize) + " grid");
  return n;
}

std::size_t TokenMask::visible_in_slice(std::size_t s) const {
  std::size_t n = 0;
  for (std::size_t i = s * rows * cols; i < (s + 1) * rows * cols; ++i) n += visible[i];
  return n;
}

Tensor TokenMask::to_tensor() const {
  Tensor t({slices, rows, cols});
  for (std::size_t i = 0; i < visible.size(); ++i) t[i] = visible[i] ? 1.0 : 0.0;
  return t;
}

TokenMask TokenMask::from_tensor(const Tensor& t) {
  if (t.ndim() != 3) throw ValidationError("token mask tensor must be [S,R,C]");
  TokenMask m;
  m.slices = t.dim(0);
  m.rows = t.dim(1);
  m.cols = t.dim(2);
  m.visible.resize(t.numel());
  for (std::size_t i = 0; i < t.numel(); ++i) {
    m.visible[i] = t[i] != 0.0 ? 1 : 0;
    if (m.visible[i]) m.visible_indices.push_back(i);
  }
  return m;
}

int choose_base_frame(int frame_count, BaseMode mode, Rng& rng) {
  if (frame_count < 2) throw ValidationError("frame count must be >= 2");
  switch (mode) {
    case BaseMode::First: return 1;
    case BaseMode::Middle: return frame_count / 2;
    case BaseMode::Random:
      return 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(frame_count)));
  }
  throw ValidationError("unknown base mode");
}

int choose_base_frame(int frame_count, const MaskConfig& cfg) {
  Rng rng = Rng(cfg.seed).fork(kStreamBase);
  return choose_base_frame(frame_count, cfg.base_frame, rng);
}

Tensor init_mask_gmm(std::size_t height, std::size_t width, double ratio, double sigma_x,
                     double sigma_y, Rng& rng) {
  check_grid(height, width);
  if (!(sigma_x > 0.0 && sigma_y > 0.0)) throw ValidationError("sigma must be positive");
  const std::size_t rows = height / kTokenSize, cols = width / kTokenSize;
  const std::size_t n_vis = visible_per_slice(height, width, ratio);
  const auto picks = rng.distinct_indices(rows * cols, n_vis);

  // Token midpoints in pixel-center coordinates.
  std::vector<double> cx(n_vis), cy(n_vis);
  for (std::size_t i = 0; i < n_vis; ++i) {
    cx[i] = static_cast<double>(picks[i] % cols) * kTokenSize + 7.5;
    cy[i] = static_cast<double>(picks[i] / cols) * kTokenSize + 7.5;
  }

  const double inv2sx = 1.0 / (2.0 * sigma_x * sigma_x);
  const double inv2sy = 1.0 / (2.0 * sigma_y * sigma_y);
  Tensor map({height, width});
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n_vis; ++i) {
        const double dx = static_cast<double>(x) - cx[i];
        const double dy = static_cast<double>(y) - cy[i];
        acc += std::exp(-(dx * dx * inv2sx + dy * dy * inv2sy));
      }
      map.at(y, x) = std::max(acc, kHoleMarker);
    }
  return map;
}

Tensor init_mask_binary(std::size_t height, std::size_t width, double ratio, bool token_level,
                        Rng& rng) {
  check_grid(height, width);
  Tensor map = Tensor::full({height, width}, kHoleMarker);
  if (token_level) {
    const std::size_t rows = height / kTokenSize, cols = width / kTokenSize;
    const std::size_t n_vis = visible_per_slice(height, width, ratio);
    for (std::size_t idx : rng.distinct_indices(rows * cols, n_vis)) {
      const std::size_t r = idx / cols, c = idx % cols;
      for (std::size_t y = r * kTokenSize; y < (r + 1) * kTokenSize; ++y)
        for (std::size_t x = c * kTokenSize; x < (c + 1) * kTokenSize; ++x) map.at(y, x) = 1.0;
    }
  } else {
    const auto n_vis = static_cast<std::size_t>(
        std::floor((1.0 - ratio) * static_cast<double>(height * width)));
    for (std::size_t idx : rng.distinct_indices(height * width, n_vis)) map[idx] = 1.0;
  }
  return map;
}

WarpResult backward_warp(const Tensor& map, const flow::FlowField& f) {
  if (map.ndim() != 2) throw ValidationError("mask map must be [H,W]");
  const std::size_t h = map.dim(0), w = map.dim(1);
  if (f.height() != h || f.width() != w)
    throw ValidationError("flow dims do not match mask map");

  WarpResult res;
  res.map = Tensor({h, w});
  res.holes.assign(h * w, 0);
  const auto lh = static_cast<long>(h), lw = static_cast<long>(w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double sx = static_cast<double>(x) + f.u(y, x);
      const double sy = static_cast<double>(y) + f.v(y, x);
      const double fx0 = std::floor(sx), fy0 = std::floor(sy);
      const long x0 = static_cast<long>(fx0), y0 = static_cast<long>(fy0);
      const double ax = sx - fx0, ay = sy - fy0;
      double acc = 0.0;
      const auto tap = [&](long yy, long xx, double wgt) {
        if (yy >= 0 && yy < lh && xx >= 0 && xx < lw)
          acc += wgt * map.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
      };
      tap(y0, x0, (1 - ay) * (1 - ax));
      tap(y0, x0 + 1, (1 - ay) * ax);
      tap(y0 + 1, x0, ay * (1 - ax));
      tap(y0 + 1, x0 + 1, ay * ax);
      res.map.at(y, x) = acc;
      if (acc == 0.0) {
        res.holes[y * w + x] = 1;
        res.has_holes = true;
      }
    }
  return res;
}

WarpResult forward_warp(const Tensor& map, const flow::FlowField& f) {
  if (map.ndim() != 2) throw ValidationError("mask map must be [H,W]");
  const std::size_t h = map.dim(0), w = map.dim(1);
  if (f.height() != h || f.width() != w)
    throw ValidationError("flow dims do not match mask map");

  Tensor num({h, w}), den({h, w});
  const auto lh = static_cast<long>(h), lw = static_cast<long>(w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double tx = static_cast<double>(x) + f.u(y, x);
      const double ty = static_cast<double>(y) + f.v(y, x);
      const double fx0 = std::floor(tx), fy0 = std::floor(ty);
      const long x0 = static_cast<long>(fx0), y0 = static_cast<long>(fy0);
      const double ax = tx - fx0, ay = ty - fy0;
      const double value = map.at(y, x);
      const auto splat = [&](long yy, long xx, double wgt) {
        if (yy >= 0 && yy < lh && xx >= 0 && xx < lw && wgt > 0.0) {
          num.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)) += wgt * value;
          den.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)) += wgt;
        }
      };
      splat(y0, x0, (1 - ay) * (1 - ax));
      splat(y0, x0 + 1, (1 - ay) * ax);
      splat(y0 + 1, x0, ay * (1 - ax));
      splat(y0 + 1, x0 + 1, ay * ax);
    }

  WarpResult res;
  res.map = Tensor({h, w});
  res.holes.assign(h * w, 0);
  for (std::size_t i = 0; i < h * w; ++i) {
    if (den[i] == 0.0) {
      res.holes[i] = 1;
      res.has_holes = true;
    } else {
      res.map[i] = num[i] / den[i];
    }
  }
  return res;
}

void fill_holes(Tensor& warped, const std::vector<std::uint8_t>& holes, FillMode mode,
                const Tensor& base, const Tensor* previous, double ratio, Rng& rng) {
  if (warped.numel() != holes.size()) throw ValidationError("hole mask size mismatch");
  const Tensor* source = &base;
  if (mode == FillMode::PreviousMap && previous != nullptr) source = previous;
  for (std::size_t i = 0; i < holes.size(); ++i) {
    if (!holes[i]) continue;
    switch (mode) {
      case FillMode::Tube: warped[i] = base[i]; break;
      case FillMode::PreviousMap: warped[i] = (*source)[i]; break;
      case FillMode::Visible: warped[i] = 1.0; break;
      case FillMode::Invisible: warped[i] = kHoleMarker; break;
      case FillMode::Random:
        warped[i] = rng.next_double() < 1.0 - ratio ? 1.0 : kHoleMarker;
        break;
    }
  }
}

namespace {

Tensor initial_map_from(std::size_t height, std::size_t width, const MaskConfig& cfg,
                        Rng init_rng) {
  switch (cfg.init) {
    case InitMode::Gmm:
      return init_mask_gmm(height, width, cfg.ratio, cfg.sigma_x, cfg.sigma_y, init_rng);
    case InitMode::TokenRandom:
      return init_mask_binary(height, width, cfg.ratio, true, init_rng);
    case InitMode::PixelRandom:
      return init_mask_binary(height, width, cfg.ratio, false, init_rng);
  }
  throw ValidationError("unknown init mode");
}

}  // namespace

Tensor initial_map(std::size_t height, std::size_t width, const MaskConfig& cfg) {
  cfg.validate();
  return initial_map_from(height, width, cfg, Rng(cfg.seed).fork(kStreamInit));
}

Tensor build_mask_volume(std::size_t height, std::size_t width, const flow::FlowSet& flows,
                         const MaskConfig& cfg, Rng& rng) {
  cfg.validate();
  check_grid(height, width);
  const int t = flows.frame_count, b = flows.base_index;
  if (t < 2 || b < 1 || b > t) throw ValidationError("invalid flow set indices");

  Tensor base = initial_map_from(height, width, cfg, rng.fork(kStreamInit));

  Tensor volume({static_cast<std::size_t>(t), height, width});
  const auto slice = [&](int frame) {  // 1-based frame -> plane pointer
    return volume.data() + static_cast<std::size_t>(frame - 1) * height * width;
  };
  const auto store = [&](int frame, const Tensor& map) {
    std::copy(map.values().begin(), map.values().end(), slice(frame));
  };
  const auto fetch = [&](int frame) {
    std::vector<double> px(slice(frame), slice(frame) + height * width);
    return Tensor({height, width}, std::move(px));
  };

  store(b, base);
  Rng fill_rng = rng.fork(kStreamFill);

  const auto step = [&](int frame, const Tensor& src, const Tensor* previous) {
    const flow::FlowField& field = flows.from_frame(frame);
    if (field.height() != height || field.width() != width)
      throw ValidationError("flow field dims do not match clip");
    WarpResult wr;
    if (cfg.warp == WarpDir::Backward) {
      wr = backward_warp(src, field);
    } else {
      // The stored field lives on this frame's grid and points toward the
      // source frame; scattering the source needs the reverse displacement.
      flow::FlowField neg = field;
      for (double& v : neg.uv.values()) v = -v;
      wr = forward_warp(src, neg);
    }
    fill_holes(wr.map, wr.holes, cfg.fill, base, previous, cfg.ratio, fill_rng);
    store(frame, wr.map);
  };

  // The warp source doubles as the previously generated map; on the first
  // step it is the base map, which makes PreviousMap fall back to Tube.
  Tensor prev = base;
  for (int i = b - 1; i >= 1; --i) {
    step(i, prev, &prev);
    prev = fetch(i);
  }
  prev = base;
  for (int i = b + 1; i <= t; ++i) {
    step(i, prev, &prev);
    prev = fetch(i);
  }

  if (cfg.noise_std > 0.0) {
    Rng noise_rng = rng.fork(kStreamNoise);
    const auto pick = static_cast<int>(noise_rng.uniform_below(static_cast<std::uint64_t>(t)));
    double* plane = slice(pick + 1);
    for (std::size_t i = 0; i < height * width; ++i)
      plane[i] = std::max(plane[i] + cfg.noise_std * noise_rng.next_normal(), kHoleMarker);
  }
  return volume;
}

TokenMask sample_tokens(const Tensor& volume, double ratio, SampleMode mode) {
  if (volume.ndim() != 3) throw ValidationError("mask volume must be [T,H,W]");
  const std::size_t t = volume.dim(0), h = volume.dim(1), w = volume.dim(2);
  if (t % kTubeDepth != 0 || h % kTokenSize != 0 || w % kTokenSize != 0)
    throw ValidationError("mask volume dims must be divisible by (2,16,16)");
  const std::size_t slices = t / kTubeDepth, rows = h / kTokenSize, cols = w / kTokenSize;
  const std::size_t n_vis = visible_per_slice(h, w, ratio);

  // Token scores: joint average over the two frames and the 16x16 window.
  std::vector<double> score(slices * rows * cols, 0.0);
  for (std::size_t s = 0; s < slices; ++s)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        double acc = 0.0;
        for (std::size_t dt = 0; dt < kTubeDepth; ++dt)
          for (std::size_t y = r * kTokenSize; y < (r + 1) * kTokenSize; ++y)
            for (std::size_t x = c * kTokenSize; x < (c + 1) * kTokenSize; ++x)
              acc += volume.at(s * kTubeDepth + dt, y, x);
        score[(s * rows + r) * cols + c] =
            acc / static_cast<double>(kTubeDepth * kTokenSize * kTokenSize);
      }

  const auto top_k = [&](std::size_t begin, std::size_t count, std::size_t k) {
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (score[begin + a] != score[begin + b]) return score[begin + a] > score[begin + b];
      return a < b;
    });
    order.resize(k);
    return order;
  };

  std::vector<std::vector<std::size_t>> per_slice(slices);
  if (mode == SampleMode::FrameLevel) {
    for (std::size_t s = 0; s < slices; ++s)
      per_slice[s] = top_k(s * rows * cols, rows * cols, n_vis);
  } else {
    for (std::size_t flat : top_k(0, slices * rows * cols, slices * n_vis))
      per_slice[flat / (rows * cols)].push_back(flat % (rows * cols));
  }
  return mask_from_sets(slices, rows, cols, per_slice);
}

TokenMask generate(std::size_t frame_count, std::size_t height, std::size_t width,
                   const flow::FlowSet* flows, const MaskConfig& cfg) {
  cfg.validate();
  check_grid(height, width);
  if (frame_count < 2 || frame_count % kTubeDepth != 0)
    throw ValidationError("frame count must be even and >= 2");
  const std::size_t slices = frame_count / kTubeDepth;
  const std::size_t rows = height / kTokenSize, cols = width / kTokenSize;
  const std::size_t n_vis = visible_per_slice(height, width, cfg.ratio);
  Rng rng(cfg.seed);

  switch (cfg.strategy) {
    case Strategy::Tube: {
      Rng pick_rng = rng.fork(kStreamTube);
      const auto picks = pick_rng.distinct_indices(rows * cols, n_vis);
      std::vector<std::vector<std::size_t>> per_slice(slices, picks);
      return mask_from_sets(slices, rows, cols, per_slice);
    }
    case Strategy::Random: {
      Rng pick_rng = rng.fork(kStreamRandom);
      std::vector<std::vector<std::size_t>> per_slice(slices);
      if (cfg.sample == SampleMode::FrameLevel) {
        for (std::size_t s = 0; s < slices; ++s)
          per_slice[s] = pick_rng.distinct_indices(rows * cols, n_vis);
      } else {
        for (std::size_t flat : pick_rng.distinct_indices(slices * rows * cols, slices * n_vis))
          per_slice[flat / (rows * cols)].push_back(flat % (rows * cols));
      }
      return mask_from_sets(slices, rows, cols, per_slice);
    }
    case Strategy::MotionGuided: {
      if (flows == nullptr)
        throw ValidationError("motion_guided masking requires a flow set");
      if (flows->frame_count != static_cast<int>(frame_count))
        throw ValidationError("flow set frame count does not match clip");
      const Tensor volume = build_mask_volume(height, width, *flows, cfg, rng);
      return sample_tokens(volume, cfg.ratio, cfg.sample);
    }
  }
  throw ValidationError("unknown masking strategy");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::MotionGuided: return "motion_guided";
    case Strategy::Tube: return "tube";
    case Strategy::Random: return "random";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "motion_guided") return Strategy::MotionGuided;
  if (s == "tube") return Strategy::Tube;
  if (s == "random") return Strategy::Random;
  throw ValidationError("unknown strategy '" + s + "'");
}

}  // namespace mgm::maskgen
