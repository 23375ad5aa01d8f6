#pragma once

#include <string>
#include <vector>

#include "mgmask/tensor.hpp"

namespace mgm::flow {

// Per-pixel displacement field between two frames, in pixels. For a field
// from frame i to frame j, the content at pixel p in frame i sits at
// p + (u(p), v(p)) in frame j. Stored planar: channel 0 = u (horizontal),
// channel 1 = v (vertical).
struct FlowField {
  Tensor uv;  // [2, H, W]

  FlowField() = default;
  explicit FlowField(Tensor t);
  static FlowField zeros(std::size_t height, std::size_t width);

  std::size_t height() const { return uv.dim(1); }
  std::size_t width() const { return uv.dim(2); }
  double u(std::size_t y, std::size_t x) const { return uv.at(0, y, x); }
  double v(std::size_t y, std::size_t x) const { return uv.at(1, y, x); }
  double& u(std::size_t y, std::size_t x) { return uv.at(0, y, x); }
  double& v(std::size_t y, std::size_t x) { return uv.at(1, y, x); }

  bool empty() const { return uv.ndim() == 0; }
};

struct FlowConfig {
  int levels = 4;         // pyramid levels; clamped so the coarsest stays >= 8x8
  int iterations = 100;   // Jacobi sweeps per level
  double alpha = 15.0;    // smoothness weight
};

// Pyramidal Horn-Schunck. src and dst are [3,H,W] or [H,W] frames with equal
// dims; returns the field such that sampling dst at p + flow(p) approximates
// src(p). Constant images yield zero flow.
FlowField estimate_flow(const Tensor& src, const Tensor& dst, const FlowConfig& cfg = {});

// Middlebury .flo codec: f32 LE magic 202021.25, i32 LE width, i32 LE height,
// then height*width interleaved (u,v) f32 LE pairs, row-major.
FlowField read_flo(const std::string& path);
void write_flo(const FlowField& f, const std::string& path);

// The per-clip flow bundle: fields pointing toward the base frame's side,
// flow_from(i) = field from frame i to i+1 for i < b, from i to i-1 for
// i > b. Frame indices are 1-based; exactly T-1 fields.
struct FlowSet {
  int base_index = 0;
  int frame_count = 0;
  std::vector<FlowField> fields;  // indexed by source frame, slots 0 and base unused

  bool has(int frame) const;
  const FlowField& from_frame(int frame) const;
  FlowField& from_frame(int frame);

  // Destination frame of the stored field for a given source frame.
  int target_of(int frame) const { return frame < base_index ? frame + 1 : frame - 1; }
};

FlowSet make_empty_flow_set(int frame_count, int base_index);
FlowSet zero_flow_set(int frame_count, int base_index, std::size_t height, std::size_t width);

// Estimates all T-1 fields of Eq.-style bundle from a [T,3,H,W] clip.
FlowSet build_flow_set(const Tensor& clip, int base_index, const FlowConfig& cfg = {});

// Loads flow_{i}_{j}.flo files from a directory; every required pair must be
// present with matching dims.
FlowSet load_flow_set(const std::string& dir, int frame_count, int base_index,
                      std::size_t height, std::size_t width);
void save_flow_set(const FlowSet& set, const std::string& dir);

std::string flow_pair_filename(int from, int to);

}  // namespace mgm::flow
