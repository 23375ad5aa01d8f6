#include "mgmask/flow.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>

#include "mgmask/errors.hpp"
#include "mgmask/vten.hpp"

namespace mgm::flow {

namespace {

constexpr float kFloMagic = 202021.25f;
constexpr double kPresmoothSigma = 0.8;
constexpr int kMinCoarseSize = 8;
constexpr int kWarpsPerLevel = 3;  // re-linearizations per level, full iteration budget each

// Plain [H,W] image helpers on raw double buffers.

struct Image {
  std::size_t h = 0, w = 0;
  std::vector<double> px;

  Image() = default;
  Image(std::size_t height, std::size_t width) : h(height), w(width), px(height * width, 0.0) {}
  double at(std::size_t y, std::size_t x) const { return px[y * w + x]; }
  double& at(std::size_t y, std::size_t x) { return px[y * w + x]; }
};

double sample_replicate(const Image& img, double y, double x) {
  // Bilinear with replicate-edge handling.
  x = std::clamp(x, 0.0, static_cast<double>(img.w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.h - 1));
  const std::size_t x0 = static_cast<std::size_t>(x);
  const std::size_t y0 = static_cast<std::size_t>(y);
  const std::size_t x1 = std::min(x0 + 1, img.w - 1);
  const std::size_t y1 = std::min(y0 + 1, img.h - 1);
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  return (1 - fy) * ((1 - fx) * img.at(y0, x0) + fx * img.at(y0, x1)) +
         fy * ((1 - fx) * img.at(y1, x0) + fx * img.at(y1, x1));
}

Image gaussian_blur(const Image& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(2.5 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const auto reflect = [](long i, long n) { return std::clamp(i, 0L, n - 1); };
  Image tmp(img.h, img.w), out(img.h, img.w);
  for (std::size_t y = 0; y < img.h; ++y)
    for (std::size_t x = 0; x < img.w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] *
               img.at(y, static_cast<std::size_t>(reflect(static_cast<long>(x) + i,
                                                          static_cast<long>(img.w))));
      tmp.at(y, x) = acc;
    }
  for (std::size_t y = 0; y < img.h; ++y)
    for (std::size_t x = 0; x < img.w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] *
               tmp.at(static_cast<std::size_t>(reflect(static_cast<long>(y) + i,
                                                       static_cast<long>(img.h))),
                      x);
      out.at(y, x) = acc;
    }
  return out;
}

Image downsample_half(const Image& img) {
  const Image smooth = gaussian_blur(img, 1.0);
  const std::size_t nh = (img.h + 1) / 2, nw = (img.w + 1) / 2;
  Image out(nh, nw);
  for (std::size_t y = 0; y < nh; ++y)
    for (std::size_t x = 0; x < nw; ++x)
      out.at(y, x) = smooth.at(std::min(2 * y, img.h - 1), std::min(2 * x, img.w - 1));
  return out;
}

Image upsample_to(const Image& img, std::size_t nh, std::size_t nw, double gain) {
  Image out(nh, nw);
  const double sy = nh > 1 ? static_cast<double>(img.h - 1) / static_cast<double>(nh - 1) : 0.0;
  const double sx = nw > 1 ? static_cast<double>(img.w - 1) / static_cast<double>(nw - 1) : 0.0;
  for (std::size_t y = 0; y < nh; ++y)
    for (std::size_t x = 0; x < nw; ++x)
      out.at(y, x) = gain * sample_replicate(img, y * sy, x * sx);
  return out;
}

Image to_grayscale(const Tensor& frame) {
  if (frame.ndim() == 2) {
    Image img(frame.dim(0), frame.dim(1));
    img.px.assign(frame.values().begin(), frame.values().end());
    return img;
  }
  if (frame.ndim() != 3 || frame.dim(0) != 3)
    throw ValidationError("estimate_flow frames must be [3,H,W] or [H,W]");
  Image img(frame.dim(1), frame.dim(2));
  const std::size_t plane = img.h * img.w;
  for (std::size_t i = 0; i < plane; ++i)
    img.px[i] = (frame.data()[i] + frame.data()[plane + i] + frame.data()[2 * plane + i]) / 3.0;
  return img;
}

void gradients(const Image& img, Image& gx, Image& gy) {
  const long h = static_cast<long>(img.h), w = static_cast<long>(img.w);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      const long xm = std::max(x - 1, 0L), xp = std::min(x + 1, w - 1);
      const long ym = std::max(y - 1, 0L), yp = std::min(y + 1, h - 1);
      gx.at(y, x) = 0.5 * (img.at(y, xp) - img.at(y, xm));
      gy.at(y, x) = 0.5 * (img.at(yp, x) - img.at(ym, x));
    }
}

// One linearization pass: total-flow Horn-Schunck linearized at the incoming
// estimate, Jacobi (double-buffered) sweeps with the 1/6, 1/12 neighbor
// stencil.
void hs_pass(const Image& i1, const Image& i2, Image& u, Image& v, int iterations,
             double alpha) {
  const std::size_t h = i1.h, w = i1.w;
  const double alpha2 = alpha * alpha;

  // Warp i2 and its gradients by the incoming flow (replicate-edge
  // sampling). Pixels whose sample position leaves the frame have no valid
  // correspondence; their data term is disabled so smoothness fills them.
  Image i2w(h, w);
  std::vector<std::uint8_t> valid(h * w, 1);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double sx = x + u.at(y, x), sy = y + v.at(y, x);
      i2w.at(y, x) = sample_replicate(i2, sy, sx);
      if (sx < 0.0 || sy < 0.0 || sx > static_cast<double>(w - 1) ||
          sy > static_cast<double>(h - 1))
        valid[y * w + x] = 0;
    }

  Image ix(h, w), iy(h, w), i1x(h, w), i1y(h, w);
  gradients(i2w, ix, iy);
  gradients(i1, i1x, i1y);
  for (std::size_t i = 0; i < h * w; ++i) {
    ix.px[i] = 0.5 * (ix.px[i] + i1x.px[i]);
    iy.px[i] = 0.5 * (iy.px[i] + i1y.px[i]);
  }

  // Constant term so the data residual Ix*u + Iy*v + c vanishes at the
  // linearization point when brightness matches.
  Image c(h, w);
  for (std::size_t i = 0; i < h * w; ++i) {
    if (!valid[i]) {
      ix.px[i] = 0.0;
      iy.px[i] = 0.0;
      c.px[i] = 0.0;
      continue;
    }
    c.px[i] = i2w.px[i] - i1.px[i] - ix.px[i] * u.px[i] - iy.px[i] * v.px[i];
  }

  Image un(h, w), vn(h, w);
  const auto cl = [](long i, long n) { return std::clamp(i, 0L, n - 1); };
  const long lh = static_cast<long>(h), lw = static_cast<long>(w);
  for (int it = 0; it < iterations; ++it) {
    for (long y = 0; y < lh; ++y)
      for (long x = 0; x < lw; ++x) {
        const long ym = cl(y - 1, lh), yp = cl(y + 1, lh);
        const long xm = cl(x - 1, lw), xp = cl(x + 1, lw);
        const double ubar = (u.at(ym, x) + u.at(yp, x) + u.at(y, xm) + u.at(y, xp)) / 6.0 +
                            (u.at(ym, xm) + u.at(ym, xp) + u.at(yp, xm) + u.at(yp, xp)) / 12.0;
        const double vbar = (v.at(ym, x) + v.at(yp, x) + v.at(y, xm) + v.at(y, xp)) / 6.0 +
                            (v.at(ym, xm) + v.at(ym, xp) + v.at(yp, xm) + v.at(yp, xp)) / 12.0;
        const double gx = ix.at(y, x), gy = iy.at(y, x);
        const double r = (gx * ubar + gy * vbar + c.at(y, x)) / (alpha2 + gx * gx + gy * gy);
        un.at(y, x) = ubar - gx * r;
        vn.at(y, x) = vbar - gy * r;
      }
    std::swap(u.px, un.px);
    std::swap(v.px, vn.px);
  }
}

void hs_level(const Image& i1, const Image& i2, Image& u, Image& v, int iterations,
              double alpha) {
  for (int warp = 0; warp < kWarpsPerLevel; ++warp) hs_pass(i1, i2, u, v, iterations, alpha);
}

}  // namespace

FlowField::FlowField(Tensor t) : uv(std::move(t)) {
  if (uv.ndim() != 3 || uv.dim(0) != 2) throw ValidationError("flow field must be [2,H,W]");
}

FlowField FlowField::zeros(std::size_t height, std::size_t width) {
  return FlowField(Tensor({2, height, width}));
}

FlowField estimate_flow(const Tensor& src, const Tensor& dst, const FlowConfig& cfg) {
  if (src.dims() != dst.dims()) throw ValidationError("estimate_flow: frame dims differ");
  if (cfg.levels < 1) throw ValidationError("estimate_flow: pyramid levels must be >= 1");
  if (cfg.iterations < 1) throw ValidationError("estimate_flow: iterations must be >= 1");

  Image a = to_grayscale(src);
  Image b = to_grayscale(dst);
  const std::size_t h = a.h, w = a.w;
  if (h < kMinCoarseSize || w < kMinCoarseSize)
    throw ValidationError("estimate_flow: frames smaller than the coarsest level");

  // Joint normalization to a 0-255 working range; constant pair -> zero flow.
  double lo = a.px[0], hi = a.px[0];
  for (double p : a.px) { lo = std::min(lo, p); hi = std::max(hi, p); }
  for (double p : b.px) { lo = std::min(lo, p); hi = std::max(hi, p); }
  if (hi - lo < 1e-12) return FlowField::zeros(h, w);
  const double scale = 255.0 / (hi - lo);
  for (double& p : a.px) p = (p - lo) * scale;
  for (double& p : b.px) p = (p - lo) * scale;

  a = gaussian_blur(a, kPresmoothSigma);
  b = gaussian_blur(b, kPresmoothSigma);

  std::vector<Image> pa{std::move(a)}, pb{std::move(b)};
  while (static_cast<int>(pa.size()) < cfg.levels) {
    const Image& prev = pa.back();
    if ((prev.h + 1) / 2 < kMinCoarseSize || (prev.w + 1) / 2 < kMinCoarseSize) break;
    pa.push_back(downsample_half(pa.back()));
    pb.push_back(downsample_half(pb.back()));
  }

  Image u(pa.back().h, pa.back().w), v(pa.back().h, pa.back().w);
  for (std::size_t level = pa.size(); level-- > 0;) {
    if (level + 1 < pa.size()) {
      const double gx = static_cast<double>(pa[level].w) / static_cast<double>(pa[level + 1].w);
      const double gy = static_cast<double>(pa[level].h) / static_cast<double>(pa[level + 1].h);
      u = upsample_to(u, pa[level].h, pa[level].w, gx);
      v = upsample_to(v, pa[level].h, pa[level].w, gy);
    }
    hs_level(pa[level], pb[level], u, v, cfg.iterations, cfg.alpha);
  }

  FlowField out = FlowField::zeros(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      out.u(y, x) = u.at(y, x);
      out.v(y, x) = v.at(y, x);
    }
  if (!out.uv.all_finite()) throw NumericError("estimate_flow produced non-finite values");
  return out;
}

FlowField read_flo(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 12) throw SizeMismatchError("flo: truncated header");
  const auto u32 = [&](std::size_t off) {
    return static_cast<std::uint32_t>(bytes[off]) | static_cast<std::uint32_t>(bytes[off + 1]) << 8 |
           static_cast<std::uint32_t>(bytes[off + 2]) << 16 |
           static_cast<std::uint32_t>(bytes[off + 3]) << 24;
  };
  if (std::bit_cast<float>(u32(0)) != kFloMagic) throw BadMagicError("flo: bad magic");
  const std::int32_t w = static_cast<std::int32_t>(u32(4));
  const std::int32_t h = static_cast<std::int32_t>(u32(8));
  if (w <= 0 || h <= 0) throw FormatError("flo: non-positive dims");
  const std::size_t expected = 12 + 8ull * w * h;
  if (bytes.size() != expected)
    throw SizeMismatchError("flo: file is " + std::to_string(bytes.size()) + " bytes, expected " +
                            std::to_string(expected));
  FlowField f = FlowField::zeros(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
  std::size_t off = 12;
  for (std::int32_t y = 0; y < h; ++y)
    for (std::int32_t x = 0; x < w; ++x) {
      const float fu = std::bit_cast<float>(u32(off));
      const float fv = std::bit_cast<float>(u32(off + 4));
      off += 8;
      if (!std::isfinite(fu) || !std::isfinite(fv))
        throw NonFiniteError("flo: non-finite flow value");
      f.u(y, x) = fu;
      f.v(y, x) = fv;
    }
  return f;
}

void write_flo(const FlowField& f, const std::string& path) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(12 + 8 * f.height() * f.width());
  const auto put = [&](std::uint32_t v) {
    bytes.push_back(static_cast<std::uint8_t>(v));
    bytes.push_back(static_cast<std::uint8_t>(v >> 8));
    bytes.push_back(static_cast<std::uint8_t>(v >> 16));
    bytes.push_back(static_cast<std::uint8_t>(v >> 24));
  };
  put(std::bit_cast<std::uint32_t>(kFloMagic));
  put(static_cast<std::uint32_t>(f.width()));
  put(static_cast<std::uint32_t>(f.height()));
  for (std::size_t y = 0; y < f.height(); ++y)
    for (std::size_t x = 0; x < f.width(); ++x) {
      put(std::bit_cast<std::uint32_t>(static_cast<float>(f.u(y, x))));
      put(std::bit_cast<std::uint32_t>(static_cast<float>(f.v(y, x))));
    }
  write_file_bytes(path, bytes);
}

bool FlowSet::has(int frame) const {
  return frame >= 1 && frame <= frame_count && frame != base_index &&
         !fields[static_cast<std::size_t>(frame)].empty();
}

const FlowField& FlowSet::from_frame(int frame) const {
  if (frame < 1 || frame > frame_count || frame == base_index)
    throw ValidationError("flow set has no field for frame " + std::to_string(frame));
  const FlowField& f = fields[static_cast<std::size_t>(frame)];
  if (f.empty()) throw ValidationError("flow set field missing for frame " + std::to_string(frame));
  return f;
}

FlowField& FlowSet::from_frame(int frame) {
  return const_cast<FlowField&>(static_cast<const FlowSet&>(*this).from_frame(frame));
}

FlowSet make_empty_flow_set(int frame_count, int base_index) {
  if (frame_count < 2) throw ValidationError("flow set needs at least 2 frames");
  if (base_index < 1 || base_index > frame_count)
    throw ValidationError("base index out of range");
  FlowSet set;
  set.base_index = base_index;
  set.frame_count = frame_count;
  set.fields.resize(static_cast<std::size_t>(frame_count) + 1);
  return set;
}

FlowSet zero_flow_set(int frame_count, int base_index, std::size_t height, std::size_t width) {
  FlowSet set = make_empty_flow_set(frame_count, base_index);
  for (int i = 1; i <= frame_count; ++i)
    if (i != base_index) set.fields[static_cast<std::size_t>(i)] = FlowField::zeros(height, width);
  return set;
}

FlowSet build_flow_set(const Tensor& clip, int base_index, const FlowConfig& cfg) {
  if (clip.ndim() != 4 || clip.dim(1) != 3) throw ValidationError("clip must be [T,3,H,W]");
  const int t = static_cast<int>(clip.dim(0));
  FlowSet set = make_empty_flow_set(t, base_index);
  const std::size_t frame_elems = 3 * clip.dim(2) * clip.dim(3);
  const auto frame = [&](int i) {
    std::vector<double> px(clip.data() + static_cast<std::size_t>(i - 1) * frame_elems,
                           clip.data() + static_cast<std::size_t>(i) * frame_elems);
    return Tensor({3, clip.dim(2), clip.dim(3)}, std::move(px));
  };
  for (int i = 1; i <= t; ++i) {
    if (i == base_index) continue;
    set.fields[static_cast<std::size_t>(i)] = estimate_flow(frame(i), frame(set.target_of(i)), cfg);
  }
  return set;
}

std::string flow_pair_filename(int from, int to) {
  return "flow_" + std::to_string(from) + "_" + std::to_string(to) + ".flo";
}

FlowSet load_flow_set(const std::string& dir, int frame_count, int base_index,
                      std::size_t height, std::size_t width) {
  FlowSet set = make_empty_flow_set(frame_count, base_index);
  for (int i = 1; i <= frame_count; ++i) {
    if (i == base_index) continue;
    const std::string name = flow_pair_filename(i, set.target_of(i));
    const std::filesystem::path path = std::filesystem::path(dir) / name;
    if (!std::filesystem::exists(path))
      throw ValidationError("missing flow file for pair " + std::to_string(i) + "->" +
                            std::to_string(set.target_of(i)) + " (" + name + ")");
    FlowField f = read_flo(path.string());
    if (f.height() != height || f.width() != width)
      throw ValidationError(name + ": dims " + std::to_string(f.width()) + "x" +
                            std::to_string(f.height()) + " do not match clip");
    set.fields[static_cast<std::size_t>(i)] = std::move(f);
  }
  return set;
}

void save_flow_set(const FlowSet& set, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (int i = 1; i <= set.frame_count; ++i) {
    if (i == set.base_index) continue;
    const std::filesystem::path path =
        std::filesystem::path(dir) / flow_pair_filename(i, set.target_of(i));
    write_flo(set.from_frame(i), path.string());
  }
}

}  // namespace mgm::flow
