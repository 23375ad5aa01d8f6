#include "mgmask/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "mgmask/errors.hpp"
#include "mgmask/vten.hpp"

namespace mgm::image {

namespace {

// Skips whitespace and '#' comments, then parses a decimal integer.
std::size_t next_int(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw FormatError("ppm: expected integer");
  std::size_t value = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    value = value * 10 + (bytes[pos] - '0');
    ++pos;
  }
  return value;
}

std::string frame_name(const char* prefix, std::size_t index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03zu.ppm", prefix, index);
  return buf;
}

}  // namespace

Tensor read_ppm(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    throw BadMagicError("ppm: not a P6 file: " + path);
  std::size_t pos = 2;
  const std::size_t w = next_int(bytes, pos);
  const std::size_t h = next_int(bytes, pos);
  const std::size_t maxval = next_int(bytes, pos);
  if (w == 0 || h == 0) throw FormatError("ppm: zero dims");
  if (maxval == 0 || maxval > 255) throw FormatError("ppm: unsupported maxval");
  ++pos;  // single whitespace byte before the raster
  if (bytes.size() - pos != 3 * w * h)
    throw SizeMismatchError("ppm: raster is " + std::to_string(bytes.size() - pos) +
                            " bytes, expected " + std::to_string(3 * w * h));
  Tensor frame({3, h, w});
  const double inv = 1.0 / static_cast<double>(maxval);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < 3; ++ch)
        frame.at(ch, y, x) = static_cast<double>(bytes[pos + (y * w + x) * 3 + ch]) * inv;
  return frame;
}

void write_ppm(const Tensor& frame, const std::string& path) {
  if (frame.ndim() != 3 || frame.dim(0) != 3) throw ValidationError("ppm frame must be [3,H,W]");
  const std::size_t h = frame.dim(1), w = frame.dim(2);
  std::vector<std::uint8_t> bytes;
  const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  bytes.insert(bytes.end(), header.begin(), header.end());
  bytes.reserve(bytes.size() + 3 * w * h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = std::clamp(frame.at(ch, y, x), 0.0, 1.0);
        bytes.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
      }
  write_file_bytes(path, bytes);
}

Tensor clip_from_ppm_dir(const std::string& dir) {
  std::vector<std::string> names;
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir);
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".ppm")
      names.push_back(entry.path().string());
  if (names.empty()) throw ValidationError("no .ppm frames in " + dir);
  std::sort(names.begin(), names.end());

  Tensor first = read_ppm(names[0]);
  const std::size_t h = first.dim(1), w = first.dim(2);
  Tensor clip({names.size(), 3, h, w});
  const std::size_t frame_elems = 3 * h * w;
  std::copy(first.values().begin(), first.values().end(), clip.data());
  for (std::size_t i = 1; i < names.size(); ++i) {
    Tensor frame = read_ppm(names[i]);
    if (frame.dim(1) != h || frame.dim(2) != w)
      throw ValidationError("frame dims differ: " + names[i]);
    std::copy(frame.values().begin(), frame.values().end(), clip.data() + i * frame_elems);
  }
  validate_clip(clip);
  return clip;
}

void write_clip_ppm(const Tensor& clip, const std::string& dir) {
  if (clip.ndim() != 4 || clip.dim(1) != 3) throw ValidationError("clip must be [T,3,H,W]");
  std::filesystem::create_directories(dir);
  const std::size_t h = clip.dim(2), w = clip.dim(3), frame_elems = 3 * h * w;
  for (std::size_t t = 0; t < clip.dim(0); ++t) {
    std::vector<double> px(clip.data() + t * frame_elems, clip.data() + (t + 1) * frame_elems);
    write_ppm(Tensor({3, h, w}, std::move(px)),
              (std::filesystem::path(dir) / frame_name("frame", t)).string());
  }
}

void render_mask_overlays(const Tensor& clip, const maskgen::TokenMask& mask,
                          const std::string& dir) {
  if (clip.ndim() != 4 || clip.dim(1) != 3) throw ValidationError("clip must be [T,3,H,W]");
  const std::size_t t = clip.dim(0), h = clip.dim(2), w = clip.dim(3);
  if (mask.slices != t / maskgen::kTubeDepth || mask.rows != h / maskgen::kTokenSize ||
      mask.cols != w / maskgen::kTokenSize)
    throw ValidationError("token mask dims do not match clip");

  std::filesystem::create_directories(dir);
  for (std::size_t frame = 0; frame < t; ++frame) {
    const std::size_t s = frame / maskgen::kTubeDepth;
    Tensor out({3, h, w});
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double v = clip.at(frame, ch, y, x);
          const bool masked =
              !mask.is_visible(s, y / maskgen::kTokenSize, x / maskgen::kTokenSize);
          out.at(ch, y, x) = masked ? v * 0.3 : v;
        }
    write_ppm(out, (std::filesystem::path(dir) / frame_name("overlay", frame)).string());
  }
}

}  // namespace mgm::image
