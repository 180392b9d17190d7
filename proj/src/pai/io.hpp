#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pai {

// Raw little-endian float64 array files with a JSON text sidecar
// (`<path>.meta.json`) recording dtype, shape, and element order. The
// payload bytes round-trip exactly.
void write_f64(const std::filesystem::path& path,
               const std::vector<double>& values,
               const std::vector<int>& shape);

struct ArrayF64 {
  std::vector<double> values;
  std::vector<int> shape;
};

ArrayF64 read_f64(const std::filesystem::path& path);

// FNV-1a 64-bit over a file's bytes, rendered as 16 hex digits.
std::string file_checksum(const std::filesystem::path& path);

// Writes `text` to `path` via a temp file + rename in the same directory.
void atomic_write_text(const std::filesystem::path& path,
                       const std::string& text);

std::string read_text(const std::filesystem::path& path);

// 2D grayscale image in row-major order.
struct Image {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const {
    return values[static_cast<std::size_t>(r) * cols + c];
  }
};

enum class PgmNormalization { minmax, fixed };

// 16-bit binary PGM (P5), big-endian samples. minmax rescales the image to
// [0, 1] (a constant image maps to all zeros); fixed divides by `peak` and
// clamps to [0, 1]. Quantization is round-half-up to 0..65535. The chosen
// normalization is recorded in a one-line `<path>.norm.txt` sidecar.
void export_pgm(const Image& img, const std::filesystem::path& path,
                PgmNormalization norm, double peak = 1.0);

struct PgmImage {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint16_t> samples;  // row-major
};

PgmImage read_pgm(const std::filesystem::path& path);

}  // namespace pai
