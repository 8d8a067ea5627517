#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vidstereo/tensor.hpp"

namespace vidstereo {

// Parse/format failure; message carries the byte offset where known.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Middlebury PFM, grayscale "Pf". Negative scale marks little-endian payload,
// rows are stored bottom-up; in memory we keep top-down (H,W).
void write_pfm(const std::string& path, const Tensor& disp);
Tensor read_pfm(const std::string& path);

// Middlebury .flo: float magic 202021.25, int32 W, int32 H, interleaved
// (u,v) float32 pairs, little-endian. In memory (2,H,W).
void write_flo(const std::string& path, const Tensor& flow);
Tensor read_flo(const std::string& path);

// 16-bit grayscale PNG disparity, value = code/256, code 0 = invalid.
// Returns the disparity plus a validity mask (1 = valid).
void write_disp_png16(const std::string& path, const Tensor& disp);
std::pair<Tensor, Tensor> read_disp_png16(const std::string& path);

// 8-bit RGB in [0,1] <-> (3,H,W); 8-bit grayscale masks <-> (H,W) in {0,1}.
void write_png_rgb8(const std::string& path, const Tensor& img);
Tensor read_png_rgb8(const std::string& path);
void write_png_mask(const std::string& path, const Tensor& mask);
Tensor read_png_mask(const std::string& path);

// Named-array container for parameters and optimizer state. Bit-exact
// roundtrip; doubles stored little-endian with a format-version header.
struct ArrayContainer {
  static constexpr std::uint32_t kVersion = 1;
  std::map<std::string, Tensor> arrays;
  std::map<std::string, std::int64_t> ints;     // scalar metadata (step counters etc.)
  std::map<std::string, std::string> strings;   // embedded config snapshots etc.

  void save(const std::string& path) const;
  static ArrayContainer load(const std::string& path);
};

// FNV-1a 64-bit content hash, hex-encoded; used as the checkpoint identity.
std::string fnv1a_hex(const std::string& path);
std::string fnv1a_hex_bytes(const void* data, std::size_t n);

}  // namespace vidstereo
