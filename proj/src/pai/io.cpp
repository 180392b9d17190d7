#include "pai/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "pai/errors.hpp"

namespace pai {

namespace {

using nlohmann::json;

void atomic_write_bytes(const std::filesystem::path& path,
                        const char* data, std::size_t size) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      fail(ErrorCode::io, "cannot open for writing: " + tmp.string());
    }
    out.write(data, static_cast<std::streamsize>(size));
    if (!out) fail(ErrorCode::io, "short write: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    fail(ErrorCode::io,
         "rename failed: " + tmp.string() + " -> " + path.string());
  }
}

std::vector<char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open: " + path.string());
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<char> buf(static_cast<std::size_t>(size));
  if (size > 0) in.read(buf.data(), size);
  if (!in) fail(ErrorCode::io, "short read: " + path.string());
  return buf;
}

std::uint64_t byteswap64(std::uint64_t v) {
  v = ((v & 0x00000000FFFFFFFFULL) << 32) | (v >> 32);
  v = ((v & 0x0000FFFF0000FFFFULL) << 16) | ((v >> 16) & 0x0000FFFF0000FFFFULL);
  v = ((v & 0x00FF00FF00FF00FFULL) << 8) | ((v >> 8) & 0x00FF00FF00FF00FFULL);
  return v;
}

std::filesystem::path meta_path(const std::filesystem::path& path) {
  return path.string() + ".meta.json";
}

}  // namespace

void write_f64(const std::filesystem::path& path,
               const std::vector<double>& values,
               const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) fail(ErrorCode::check, "array shape entries must be positive");
    n *= static_cast<std::size_t>(d);
  }
  if (n != values.size()) {
    fail(ErrorCode::check, "array shape does not match value count");
  }

  std::vector<char> payload(values.size() * 8);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(payload.data(), values.data(), payload.size());
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, &values[i], 8);
      bits = byteswap64(bits);
      std::memcpy(payload.data() + i * 8, &bits, 8);
    }
  }
  atomic_write_bytes(path, payload.data(), payload.size());

  json meta;
  meta["dtype"] = "float64";
  meta["shape"] = shape;
  meta["order"] = "row_major";
  atomic_write_text(meta_path(path), meta.dump(2) + "\n");
}

ArrayF64 read_f64(const std::filesystem::path& path) {
  json meta;
  try {
    meta = json::parse(read_text(meta_path(path)));
  } catch (const json::exception& e) {
    fail(ErrorCode::io,
         "bad array sidecar " + meta_path(path).string() + ": " + e.what());
  }
  if (meta.value("dtype", "") != "float64" ||
      meta.value("order", "") != "row_major" || !meta.contains("shape")) {
    fail(ErrorCode::io, "unsupported array layout in " + meta_path(path).string());
  }
  ArrayF64 arr;
  arr.shape = meta["shape"].get<std::vector<int>>();
  std::size_t n = 1;
  for (int d : arr.shape) {
    if (d <= 0) fail(ErrorCode::io, "bad shape in " + meta_path(path).string());
    n *= static_cast<std::size_t>(d);
  }
  const std::vector<char> payload = read_bytes(path);
  if (payload.size() != n * 8) {
    fail(ErrorCode::io, "payload size mismatch for " + path.string());
  }
  arr.values.resize(n);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(arr.values.data(), payload.data(), payload.size());
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, payload.data() + i * 8, 8);
      bits = byteswap64(bits);
      std::memcpy(&arr.values[i], &bits, 8);
    }
  }
  return arr;
}

std::string file_checksum(const std::filesystem::path& path) {
  const std::vector<char> buf = read_bytes(path);
  std::uint64_t h = 14695981039346656037ULL;
  for (char c : buf) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(out);
}

void atomic_write_text(const std::filesystem::path& path,
                       const std::string& text) {
  atomic_write_bytes(path, text.data(), text.size());
}

std::string read_text(const std::filesystem::path& path) {
  const std::vector<char> buf = read_bytes(path);
  return std::string(buf.begin(), buf.end());
}

void export_pgm(const Image& img, const std::filesystem::path& path,
                PgmNormalization norm, double peak) {
  if (img.rows <= 0 || img.cols <= 0 ||
      img.values.size() !=
          static_cast<std::size_t>(img.rows) * static_cast<std::size_t>(img.cols)) {
    fail(ErrorCode::check, "malformed image");
  }
  for (double v : img.values) {
    if (!std::isfinite(v)) fail(ErrorCode::check, "non-finite image value");
  }

  double lo = 0.0, scale = 0.0;
  std::string sidecar;
  if (norm == PgmNormalization::minmax) {
    double mn = img.values[0], mx = img.values[0];
    for (double v : img.values) {
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    lo = mn;
    scale = mx > mn ? 1.0 / (mx - mn) : 0.0;  // constant image -> all zeros
    char line[128];
    std::snprintf(line, sizeof line, "minmax min=%.17g max=%.17g\n", mn, mx);
    sidecar = line;
  } else {
    if (!(peak > 0)) fail(ErrorCode::config, "fixed normalization needs peak > 0");
    lo = 0.0;
    scale = 1.0 / peak;
    char line[64];
    std::snprintf(line, sizeof line, "fixed peak=%.17g\n", peak);
    sidecar = line;
  }

  std::string bytes;
  {
    char header[64];
    std::snprintf(header, sizeof header, "P5\n%d %d\n65535\n", img.cols,
                  img.rows);
    bytes = header;
  }
  bytes.reserve(bytes.size() + img.values.size() * 2);
  for (double v : img.values) {
    double x = (v - lo) * scale;
    x = std::min(1.0, std::max(0.0, x));
    const auto q =
        static_cast<std::uint32_t>(std::floor(x * 65535.0 + 0.5));
    const auto s = static_cast<std::uint16_t>(std::min(q, 65535u));
    bytes.push_back(static_cast<char>(s >> 8));
    bytes.push_back(static_cast<char>(s & 0xFF));
  }
  atomic_write_bytes(path, bytes.data(), bytes.size());
  atomic_write_text(path.string() + ".norm.txt", sidecar);
}

PgmImage read_pgm(const std::filesystem::path& path) {
  const std::vector<char> buf = read_bytes(path);
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < buf.size()) {
      if (buf[pos] == '#') {  // comment to end of line
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> long {
    skip_ws();
    long v = 0;
    bool any = false;
    while (pos < buf.size() &&
           std::isdigit(static_cast<unsigned char>(buf[pos]))) {
      v = v * 10 + (buf[pos++] - '0');
      any = true;
    }
    if (!any) fail(ErrorCode::io, "malformed PGM header: " + path.string());
    return v;
  };

  if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5') {
    fail(ErrorCode::io, "not a binary PGM: " + path.string());
  }
  pos = 2;
  const long cols = read_int();
  const long rows = read_int();
  const long maxval = read_int();
  if (maxval != 65535) {
    fail(ErrorCode::io, "expected 16-bit PGM: " + path.string());
  }
  ++pos;  // single whitespace byte after maxval
  const std::size_t count = static_cast<std::size_t>(rows) * cols;
  if (buf.size() - pos < count * 2) {
    fail(ErrorCode::io, "truncated PGM payload: " + path.string());
  }
  PgmImage img;
  img.rows = static_cast<int>(rows);
  img.cols = static_cast<int>(cols);
  img.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto hi = static_cast<unsigned char>(buf[pos + 2 * i]);
    const auto lo2 = static_cast<unsigned char>(buf[pos + 2 * i + 1]);
    img.samples[i] = static_cast<std::uint16_t>((hi << 8) | lo2);
  }
  return img;
}

}  // namespace pai
