#include "mgmask/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include <json.hpp>

#include "mgmask/errors.hpp"
#include "mgmask/vten.hpp"

namespace mgm::synth {

namespace {

using maskgen::kTokenSize;
using maskgen::kTubeDepth;

// Axis-aligned rectangle with a per-frame offset; used for squares and for
// the piecewise ground-truth flow.
struct MovingRect {
  double x0 = 0, y0 = 0, side = 0;
  double vx = 0, vy = 0;
  double value = 0.9;

  double x_at(int frame) const { return x0 + vx * (frame - 1); }  // 1-based frames
  double y_at(int frame) const { return y0 + vy * (frame - 1); }
};

struct Geometry {
  std::vector<MovingRect> rects;
  double bg_vx = 0, bg_vy = 0;  // texture velocity (whole-frame motion)
};

std::vector<double> smooth_noise(std::size_t h, std::size_t w, Rng& rng) {
  std::vector<double> img(h * w);
  for (double& v : img) v = rng.next_double();

  // Separable Gaussian, sigma 1.5.
  const double sigma = 1.5;
  const int radius = 4;
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const auto cl = [](long i, long n) { return std::clamp(i, 0L, n - 1); };
  std::vector<double> tmp(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] *
               img[y * w + static_cast<std::size_t>(cl(static_cast<long>(x) + i,
                                                       static_cast<long>(w)))];
      tmp[y * w + x] = acc;
    }
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] *
               tmp[static_cast<std::size_t>(cl(static_cast<long>(y) + i, static_cast<long>(h))) *
                       w +
                   x];
      img[y * w + x] = acc;
    }

  double lo = img[0], hi = img[0];
  for (double v : img) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi - lo;
  for (double& v : img) v = span > 0 ? 0.05 + 0.9 * (v - lo) / span : 0.5;
  return img;
}

// Fractional-coverage rasterization of [x, x+side) x [y, y+side).
void paint_rect(double* plane, std::size_t h, std::size_t w, double rx, double ry, double side,
                double value) {
  const long x_lo = static_cast<long>(std::floor(rx));
  const long x_hi = static_cast<long>(std::ceil(rx + side));
  const long y_lo = static_cast<long>(std::floor(ry));
  const long y_hi = static_cast<long>(std::ceil(ry + side));
  for (long y = std::max(y_lo, 0L); y < std::min(y_hi, static_cast<long>(h)); ++y)
    for (long x = std::max(x_lo, 0L); x < std::min(x_hi, static_cast<long>(w)); ++x) {
      const double cov_x =
          std::clamp(rx + side - x, 0.0, 1.0) - std::clamp(rx - x, 0.0, 1.0);
      const double cov_y =
          std::clamp(ry + side - y, 0.0, 1.0) - std::clamp(ry - y, 0.0, 1.0);
      const double cov = cov_x * cov_y;
      double& px = plane[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
      px = px * (1.0 - cov) + value * cov;
    }
}

bool rect_inside(const MovingRect& r, int frames, std::size_t h, std::size_t w) {
  for (int t = 1; t <= frames; ++t) {
    const double x = r.x_at(t), y = r.y_at(t);
    if (x < 0 || y < 0 || x + r.side > static_cast<double>(w) ||
        y + r.side > static_cast<double>(h))
      return false;
  }
  return true;
}

// Finds an integer start position whose whole trajectory stays on canvas.
MovingRect place_rect(double side, double vx, double vy, int frames, std::size_t h,
                      std::size_t w, double y_min, double y_max, Rng& rng) {
  const double span_x = vx * (frames - 1);
  const double span_y = vy * (frames - 1);
  const double x_lo = std::max(0.0, -span_x);
  const double x_hi = static_cast<double>(w) - side - std::max(0.0, span_x);
  const double band_lo = std::max(y_min, std::max(0.0, -span_y));
  const double band_hi = std::min(y_max - side, static_cast<double>(h) - side -
                                                    std::max(0.0, span_y));
  if (x_hi < x_lo || band_hi < band_lo)
    throw ValidationError("object cannot stay on canvas for the requested velocity");
  MovingRect r;
  r.side = side;
  r.vx = vx;
  r.vy = vy;
  r.x0 = std::floor(x_lo) +
         static_cast<double>(rng.uniform_below(
             static_cast<std::uint64_t>(std::floor(x_hi - x_lo)) + 1));
  r.y0 = std::floor(band_lo) +
         static_cast<double>(rng.uniform_below(
             static_cast<std::uint64_t>(std::floor(band_hi - band_lo)) + 1));
  return r;
}

// Ground-truth field from frame i toward its stored target: the texture (or
// background) velocity everywhere, overridden inside each rect's footprint
// in frame i.
flow::FlowField truth_field(const Geometry& geo, int frame, int target, std::size_t h,
                            std::size_t w) {
  const double dir = target > frame ? 1.0 : -1.0;
  flow::FlowField f = flow::FlowField::zeros(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      f.u(y, x) = dir * geo.bg_vx;
      f.v(y, x) = dir * geo.bg_vy;
    }
  for (const MovingRect& r : geo.rects) {
    const double rx = r.x_at(frame), ry = r.y_at(frame);
    for (long y = static_cast<long>(std::floor(ry));
         y < static_cast<long>(std::ceil(ry + r.side)); ++y)
      for (long x = static_cast<long>(std::floor(rx));
           x < static_cast<long>(std::ceil(rx + r.side)); ++x) {
        if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) continue;
        f.u(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = dir * r.vx;
        f.v(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = dir * r.vy;
      }
  }
  return f;
}

double clamp_sample(const flow::FlowField& f, double y, double x, bool horizontal) {
  const std::size_t h = f.height(), w = f.width();
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const std::size_t x0 = static_cast<std::size_t>(x), y0 = static_cast<std::size_t>(y);
  const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double ax = x - static_cast<double>(x0), ay = y - static_cast<double>(y0);
  const auto g = [&](std::size_t yy, std::size_t xx) {
    return horizontal ? f.u(yy, xx) : f.v(yy, xx);
  };
  return (1 - ay) * ((1 - ax) * g(y0, x0) + ax * g(y0, x1)) +
         ay * ((1 - ax) * g(y1, x0) + ax * g(y1, x1));
}

// One frame step along the chain. Stored fields are used directly when they
// point the right way and inverted (negated, sampled at the current point)
// otherwise; exact for the piecewise-constant ground-truth fields.
void chain_step(const flow::FlowSet& flows, int frame, int next, double& x, double& y) {
  const int b = flows.base_index;
  double u, v;
  if (next == frame + 1) {
    if (frame < b) {
      const flow::FlowField& f = flows.from_frame(frame);  // frame -> frame+1
      u = clamp_sample(f, y, x, true);
      v = clamp_sample(f, y, x, false);
    } else {
      const flow::FlowField& f = flows.from_frame(frame + 1);  // frame+1 -> frame
      u = -clamp_sample(f, y, x, true);
      v = -clamp_sample(f, y, x, false);
    }
  } else {
    if (frame > b) {
      const flow::FlowField& f = flows.from_frame(frame);  // frame -> frame-1
      u = clamp_sample(f, y, x, true);
      v = clamp_sample(f, y, x, false);
    } else {
      const flow::FlowField& f = flows.from_frame(frame - 1);  // frame-1 -> frame
      u = -clamp_sample(f, y, x, true);
      v = -clamp_sample(f, y, x, false);
    }
  }
  x += u;
  y += v;
}

double quantile(std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

void SceneSpec::validate() const {
  if (frames < 2 || frames % 2 != 0)
    throw ValidationError("scene frame count must be even and >= 2");
  if (height == 0 || width == 0 || height % kTokenSize != 0 || width % kTokenSize != 0)
    throw ValidationError("scene dims must be positive multiples of 16");
  if (!std::isfinite(vx) || !std::isfinite(vy))
    throw ValidationError("scene velocity must be finite");
}

Scene generate_scene(const SceneSpec& spec, Rng rng, int base_index) {
  spec.validate();
  const int t = spec.frames;
  const std::size_t h = spec.height, w = spec.width;
  const int b = base_index <= 0 ? t / 2 : base_index;
  if (b < 1 || b > t) throw ValidationError("base index out of range");

  Geometry geo;
  Tensor clip({static_cast<std::size_t>(t), 3, h, w});

  // Background planes, one per channel.
  std::vector<std::vector<double>> bg(3);
  Rng bg_rng = rng.fork(1);
  for (int ch = 0; ch < 3; ++ch) {
    if (spec.background == Background::Noise)
      bg[ch] = smooth_noise(h, w, bg_rng);
    else
      bg[ch].assign(h * w, 0.25);
  }

  const auto fill_bg = [&](int frame) {
    for (int ch = 0; ch < 3; ++ch)
      std::copy(bg[ch].begin(), bg[ch].end(),
                clip.data() + ((static_cast<std::size_t>(frame - 1) * 3 + ch) * h * w));
  };

  switch (spec.pattern) {
    case Pattern::Static: {
      for (int f = 1; f <= t; ++f) fill_bg(f);
      break;
    }
    case Pattern::TranslatingTexture: {
      geo.bg_vx = spec.vx;
      geo.bg_vy = spec.vy;
      const std::size_t span_x = static_cast<std::size_t>(std::ceil(std::abs(spec.vx))) *
                                     static_cast<std::size_t>(t - 1) + 2;
      const std::size_t span_y = static_cast<std::size_t>(std::ceil(std::abs(spec.vy))) *
                                     static_cast<std::size_t>(t - 1) + 2;
      const std::size_t cw = w + span_x, chh = h + span_y;
      Rng tex_rng = rng.fork(2);
      std::vector<std::vector<double>> canvas(3);
      for (int ch = 0; ch < 3; ++ch) canvas[ch] = smooth_noise(chh, cw, tex_rng);

      const double ax0 = std::max(0.0, spec.vx * (t - 1)) + 1.0;
      const double ay0 = std::max(0.0, spec.vy * (t - 1)) + 1.0;
      for (int f = 1; f <= t; ++f) {
        const double ax = ax0 - spec.vx * (f - 1);
        const double ay = ay0 - spec.vy * (f - 1);
        for (int ch = 0; ch < 3; ++ch) {
          double* dst = clip.data() + ((static_cast<std::size_t>(f - 1) * 3 + ch) * h * w);
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
              const double sx = static_cast<double>(x) + ax;
              const double sy = static_cast<double>(y) + ay;
              const std::size_t x0 = static_cast<std::size_t>(sx);
              const std::size_t y0 = static_cast<std::size_t>(sy);
              const std::size_t x1 = std::min(x0 + 1, cw - 1);
              const std::size_t y1 = std::min(y0 + 1, chh - 1);
              const double fx = sx - static_cast<double>(x0);
              const double fy = sy - static_cast<double>(y0);
              const std::vector<double>& cv = canvas[ch];
              dst[y * w + x] = (1 - fy) * ((1 - fx) * cv[y0 * cw + x0] + fx * cv[y0 * cw + x1]) +
                               fy * ((1 - fx) * cv[y1 * cw + x0] + fx * cv[y1 * cw + x1]);
            }
        }
      }
      break;
    }
    case Pattern::TranslatingSquare: {
      const double side = static_cast<double>(std::min(h, w)) / 4.0;
      Rng place_rng = rng.fork(3);
      MovingRect r = place_rect(side, spec.vx, spec.vy, t, h, w, 0.0,
                                static_cast<double>(h), place_rng);
      if (!rect_inside(r, t, h, w))
        throw ValidationError("object cannot stay on canvas for the requested velocity");
      geo.rects.push_back(r);
      for (int f = 1; f <= t; ++f) {
        fill_bg(f);
        for (int ch = 0; ch < 3; ++ch)
          paint_rect(clip.data() + ((static_cast<std::size_t>(f - 1) * 3 + ch) * h * w), h, w,
                     r.x_at(f), r.y_at(f), r.side, r.value);
      }
      break;
    }
    case Pattern::TwoObjects: {
      const double side = static_cast<double>(std::min(h, w)) / 5.0;
      Rng place_rng = rng.fork(3);
      MovingRect a = place_rect(side, spec.vx, spec.vy, t, h, w, 0.0,
                                static_cast<double>(h) / 2.0, place_rng);
      MovingRect br = place_rect(side, -spec.vx, -spec.vy, t, h, w,
                                 static_cast<double>(h) / 2.0, static_cast<double>(h),
                                 place_rng);
      a.value = 0.9;
      br.value = 0.75;
      geo.rects.push_back(a);
      geo.rects.push_back(br);
      for (int f = 1; f <= t; ++f) {
        fill_bg(f);
        for (const MovingRect& r : geo.rects)
          for (int ch = 0; ch < 3; ++ch)
            paint_rect(clip.data() + ((static_cast<std::size_t>(f - 1) * 3 + ch) * h * w), h, w,
                       r.x_at(f), r.y_at(f), r.side, r.value);
      }
      break;
    }
  }

  Scene scene;
  scene.clip = std::move(clip);
  scene.flows = flow::make_empty_flow_set(t, b);
  for (int i = 1; i <= t; ++i) {
    if (i == b) continue;
    scene.flows.fields[static_cast<std::size_t>(i)] =
        truth_field(geo, i, scene.flows.target_of(i), h, w);
  }
  return scene;
}

LeakageEntry leakage_rate(const maskgen::TokenMask& mask, const flow::FlowSet& flows,
                          std::size_t height, std::size_t width, const LeakageOptions& opts) {
  if (mask.slices * kTubeDepth != static_cast<std::size_t>(flows.frame_count))
    throw ValidationError("token mask and flow set disagree on frame count");
  if (mask.rows != height / kTokenSize || mask.cols != width / kTokenSize)
    throw ValidationError("token mask does not match clip dims");
  if (opts.horizon < 1) throw ValidationError("leakage horizon must be >= 1");

  LeakageEntry entry;
  entry.per_slice.assign(mask.slices, 0.0);
  std::vector<std::size_t> slice_masked(mask.slices, 0), slice_leaked(mask.slices, 0);

  const double max_x = static_cast<double>(width - 1);
  const double max_y = static_cast<double>(height - 1);

  for (std::size_t s = 0; s < mask.slices; ++s) {
    for (std::size_t r = opts.margin; r + opts.margin < mask.rows; ++r)
      for (std::size_t c = opts.margin; c + opts.margin < mask.cols; ++c) {
        if (mask.is_visible(s, r, c)) continue;
        ++entry.masked_count;
        ++slice_masked[s];
        bool leaked = false;
        for (int d = -opts.horizon; d <= opts.horizon && !leaked; ++d) {
          if (d == 0) continue;
          const long target_slice = static_cast<long>(s) + d;
          if (target_slice < 0 || target_slice >= static_cast<long>(mask.slices)) continue;
          for (int parity = 0; parity < 2 && !leaked; ++parity) {
            // 1-based frame walk from this slice's frame to the matching
            // frame of the target slice.
            int frame = static_cast<int>(2 * s + 1) + parity;
            const int goal = static_cast<int>(2 * target_slice + 1) + parity;
            double x = static_cast<double>(c * kTokenSize) + 7.5;
            double y = static_cast<double>(r * kTokenSize) + 7.5;
            bool alive = true;
            while (frame != goal) {
              const int next = frame + (d > 0 ? 1 : -1);
              chain_step(flows, frame, next, x, y);
              if (x < 0.0 || y < 0.0 || x > max_x || y > max_y) {
                alive = false;  // content left the canvas, no leak via this path
                break;
              }
              frame = next;
            }
            if (!alive) continue;
            const std::size_t tc = static_cast<std::size_t>(x) / kTokenSize;
            const std::size_t tr = static_cast<std::size_t>(y) / kTokenSize;
            if (tr < mask.rows && tc < mask.cols &&
                mask.is_visible(static_cast<std::size_t>(target_slice), tr, tc))
              leaked = true;
          }
        }
        if (leaked) {
          ++entry.leaked_count;
          ++slice_leaked[s];
        }
      }
    entry.per_slice[s] = slice_masked[s] == 0
                             ? 0.0
                             : static_cast<double>(slice_leaked[s]) /
                                   static_cast<double>(slice_masked[s]);
  }
  entry.rate = entry.masked_count == 0
                   ? 0.0
                   : static_cast<double>(entry.leaked_count) /
                         static_cast<double>(entry.masked_count);
  return entry;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double interquartile_range(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  return quantile(values, 0.75) - quantile(values, 0.25);
}

CompareReport compare_strategies(const SceneSpec& spec,
                                 const std::vector<maskgen::MaskConfig>& cfgs,
                                 const std::vector<std::uint64_t>& seeds,
                                 const CompareOptions& opts) {
  spec.validate();
  if (cfgs.empty()) throw ValidationError("no strategies to compare");
  if (seeds.empty()) throw ValidationError("at least one seed is required");

  CompareReport report;
  report.spec = spec;
  report.seeds = seeds;
  report.strategies.resize(cfgs.size());
  for (std::size_t k = 0; k < cfgs.size(); ++k) {
    report.strategies[k].name = maskgen::to_string(cfgs[k].strategy);
    report.strategies[k].rates.assign(seeds.size(), 0.0);
    if (opts.train) report.strategies[k].final_losses.assign(seeds.size(), 0.0);
  }

  const auto run_seed = [&](std::size_t si) {
    const std::uint64_t seed = seeds[si];
    const Rng scene_rng = Rng(spec.texture_seed).fork(seed);
    for (std::size_t k = 0; k < cfgs.size(); ++k) {
      maskgen::MaskConfig cfg = cfgs[k];
      cfg.seed = seed;
      const int base = maskgen::choose_base_frame(spec.frames, cfg);
      const Scene scene = generate_scene(spec, scene_rng, base);
      const maskgen::TokenMask mask = maskgen::generate(
          static_cast<std::size_t>(spec.frames), spec.height, spec.width, &scene.flows, cfg);
      report.strategies[k].rates[si] =
          leakage_rate(mask, scene.flows, spec.height, spec.width, opts.leakage).rate;

      if (opts.train) {
        mae::MaeConfig mc = opts.mae;
        mc.ratio = cfg.ratio;
        mc.seed = seed;
        Rng model_rng = Rng(mc.seed).fork(0xF00D);
        const std::size_t tokens = (static_cast<std::size_t>(spec.frames) / kTubeDepth) *
                                   (spec.height / kTokenSize) * (spec.width / kTokenSize);
        mae::ToyMae model = mae::init_model(mc, tokens, model_rng);
        std::vector<mae::TrainItem> data;
        data.push_back(mae::TrainItem{scene.clip, scene.flows});
        const std::vector<double> losses = mae::train(model, data, cfg, opts.train_steps);
        const std::size_t window = std::max<std::size_t>(1, losses.size() / 5);
        double acc = 0.0;
        for (std::size_t i = losses.size() - window; i < losses.size(); ++i) acc += losses[i];
        report.strategies[k].final_losses[si] = acc / static_cast<double>(window);
      }
    }
  };

  const int jobs = std::max(1, opts.jobs);
  if (jobs == 1) {
    for (std::size_t si = 0; si < seeds.size(); ++si) run_seed(si);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (int j = 0; j < jobs; ++j)
      pool.emplace_back([&]() {
        for (;;) {
          const std::size_t si = next.fetch_add(1);
          if (si >= seeds.size()) return;
          run_seed(si);
        }
      });
    for (std::thread& th : pool) th.join();
  }

  for (StrategyStats& st : report.strategies) {
    st.median_rate = median(st.rates);
    st.iqr_rate = interquartile_range(st.rates);
    if (opts.train) {
      st.median_final_loss = median(st.final_losses);
      st.iqr_final_loss = interquartile_range(st.final_losses);
    }
  }
  return report;
}

std::string report_to_json(const CompareReport& report) {
  nlohmann::json doc;
  doc["spec"] = {
      {"pattern", to_string(report.spec.pattern)},
      {"vx", report.spec.vx},
      {"vy", report.spec.vy},
      {"frames", report.spec.frames},
      {"height", report.spec.height},
      {"width", report.spec.width},
      {"texture_seed", report.spec.texture_seed},
      {"background", report.spec.background == Background::Noise ? "noise" : "constant"},
  };
  doc["n_seeds"] = report.seeds.size();
  doc["strategies"] = nlohmann::json::array();
  for (const StrategyStats& st : report.strategies) {
    nlohmann::json entry = {
        {"strategy", st.name},
        {"median_rate", st.median_rate},
        {"iqr", st.iqr_rate},
        {"n_seeds", report.seeds.size()},
        {"rates", st.rates},
    };
    if (!st.final_losses.empty()) {
      entry["median_final_loss"] = st.median_final_loss;
      entry["iqr_final_loss"] = st.iqr_final_loss;
      entry["final_losses"] = st.final_losses;
    }
    doc["strategies"].push_back(entry);
  }
  return doc.dump(2) + "\n";
}

void write_report_csv(const CompareReport& report, const std::string& path) {
  std::string body = "strategy,seed,leakage_rate";
  const bool with_loss = !report.strategies.empty() &&
                         !report.strategies.front().final_losses.empty();
  if (with_loss) body += ",final_loss";
  body += "\n";
  char buf[128];
  for (const StrategyStats& st : report.strategies)
    for (std::size_t i = 0; i < st.rates.size(); ++i) {
      if (with_loss)
        std::snprintf(buf, sizeof(buf), "%s,%llu,%.17g,%.17g\n", st.name.c_str(),
                      static_cast<unsigned long long>(report.seeds[i]), st.rates[i],
                      st.final_losses[i]);
      else
        std::snprintf(buf, sizeof(buf), "%s,%llu,%.17g\n", st.name.c_str(),
                      static_cast<unsigned long long>(report.seeds[i]), st.rates[i]);
      body += buf;
    }
  std::vector<std::uint8_t> bytes(body.begin(), body.end());
  write_file_bytes(path, bytes);
}

std::string to_string(Pattern p) {
  switch (p) {
    case Pattern::TranslatingTexture: return "translating_texture";
    case Pattern::TranslatingSquare: return "translating_square";
    case Pattern::TwoObjects: return "two_objects";
    case Pattern::Static: return "static";
  }
  return "?";
}

Pattern pattern_from_string(const std::string& s) {
  if (s == "translating_texture") return Pattern::TranslatingTexture;
  if (s == "translating_square") return Pattern::TranslatingSquare;
  if (s == "two_objects") return Pattern::TwoObjects;
  if (s == "static") return Pattern::Static;
  throw ValidationError("unknown pattern '" + s + "'");
}

}  // namespace mgm::synth
