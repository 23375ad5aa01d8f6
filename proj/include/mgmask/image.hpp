#pragma once

#include <string>
#include <vector>

#include "mgmask/mask.hpp"
#include "mgmask/tensor.hpp"

namespace mgm::image {

// Binary PPM (P6, maxval 255). Frames are [3,H,W] with values in [0,1].
Tensor read_ppm(const std::string& path);
void write_ppm(const Tensor& frame, const std::string& path);

// Stacks the PPM files of a directory (lexicographic order) into a
// [T,3,H,W] clip; all frames must share dims.
Tensor clip_from_ppm_dir(const std::string& dir);

// Writes clip frames as frame_000.ppm, frame_001.ppm, ...
void write_clip_ppm(const Tensor& clip, const std::string& dir);

// Per-frame overlays with masked tokens darkened by 70%, written as
// overlay_000.ppm ... to dir.
void render_mask_overlays(const Tensor& clip, const maskgen::TokenMask& mask,
                          const std::string& dir);

}  // namespace mgm::image
