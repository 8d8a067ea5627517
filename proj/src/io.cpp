#include "vidstereo/io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace vidstereo {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_or_throw(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError(path + ": cannot open for " + (mode[0] == 'r' ? "reading" : "writing"));
  return f;
}

void put_f32(std::string& buf, float v) {
  char b[4];
  std::memcpy(b, &v, 4);
  buf.append(b, 4);
}

void put_i32(std::string& buf, std::int32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  buf.append(b, 4);
}

void write_all(const std::string& path, const std::string& buf) {
  FilePtr f = open_or_throw(path, "wb");
  if (std::fwrite(buf.data(), 1, buf.size(), f.get()) != buf.size()) throw IoError(path + ": short write");
}

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return buf;
}

// Cursor with offset-bearing errors for binary parsing.
struct Cursor {
  const std::string& buf;
  std::size_t pos = 0;
  std::string path;

  void need(std::size_t n, const char* what) const {
    if (pos + n > buf.size())
      throw IoError(path + ": truncated " + what + " at byte offset " + std::to_string(pos));
  }
  float f32(const char* what) {
    need(4, what);
    float v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  std::int32_t i32(const char* what) {
    need(4, what);
    std::int32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
};

constexpr float kFloMagic = 202021.25f;

}  // namespace

void write_pfm(const std::string& path, const Tensor& disp) {
  if (disp.ndim() != 2) throw IoError("write_pfm: expected (H,W) tensor, got " + disp.shape().str());
  int h = disp.dim(0), w = disp.dim(1);
  std::string buf;
  char header[64];
  std::snprintf(header, sizeof(header), "Pf\n%d %d\n-1.0\n", w, h);
  buf += header;
  for (int y = h - 1; y >= 0; --y)  // bottom-up rows
    for (int x = 0; x < w; ++x) put_f32(buf, static_cast<float>(disp.at(y, x)));
  write_all(path, buf);
}

Tensor read_pfm(const std::string& path) {
  std::string buf = read_all(path);
  std::size_t pos = 0;
  auto token = [&]() -> std::string {
    while (pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    std::size_t start = pos;
    while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    if (start == pos) throw IoError(path + ": truncated PFM header at byte offset " + std::to_string(start));
    return buf.substr(start, pos - start);
  };
  std::string magic = token();
  if (magic != "Pf")
    throw IoError(path + ": bad PFM magic '" + magic + "' at byte offset 0 (only grayscale 'Pf' supported)");
  int w = 0, h = 0;
  double scale = 0.0;
  try {
    std::size_t at = pos;
    w = std::stoi(token());
    h = std::stoi(token());
    at = pos;
    scale = std::stod(token());
    (void)at;
  } catch (const std::exception&) {
    throw IoError(path + ": malformed PFM dims/scale near byte offset " + std::to_string(pos));
  }
  if (w <= 0 || h <= 0)
    throw IoError(path + ": bad PFM dims " + std::to_string(w) + "x" + std::to_string(h) +
                  " at byte offset " + std::to_string(pos));
  if (scale >= 0.0) throw IoError(path + ": big-endian PFM (scale >= 0) not supported");
  pos += 1;  // single whitespace after the scale line
  std::size_t expect = static_cast<std::size_t>(w) * h * 4;
  if (pos + expect > buf.size())
    throw IoError(path + ": truncated PFM payload at byte offset " + std::to_string(buf.size()) + ", need " +
                  std::to_string(pos + expect));
  Tensor out({h, w});
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x) {
      float v;
      std::memcpy(&v, buf.data() + pos, 4);
      pos += 4;
      out.at(y, x) = v;
    }
  }
  return out;
}

void write_flo(const std::string& path, const Tensor& flow) {
  if (flow.ndim() != 3 || flow.dim(0) != 2)
    throw IoError("write_flo: expected (2,H,W) tensor, got " + flow.shape().str());
  int h = flow.dim(1), w = flow.dim(2);
  std::string buf;
  put_f32(buf, kFloMagic);
  put_i32(buf, w);
  put_i32(buf, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      put_f32(buf, static_cast<float>(flow.at(0, y, x)));
      put_f32(buf, static_cast<float>(flow.at(1, y, x)));
    }
  write_all(path, buf);
}

Tensor read_flo(const std::string& path) {
  std::string buf = read_all(path);
  Cursor c{buf, 0, path};
  float magic = c.f32("flo magic");
  if (magic != kFloMagic)
    throw IoError(path + ": bad flo magic at byte offset 0, got " + std::to_string(magic));
  std::int32_t w = c.i32("flo width");
  std::int32_t h = c.i32("flo height");
  if (w <= 0 || h <= 0 || w > 1 << 20 || h > 1 << 20)
    throw IoError(path + ": bad flo dims " + std::to_string(w) + "x" + std::to_string(h) +
                  " at byte offset 4");
  std::size_t expect = static_cast<std::size_t>(w) * h * 2 * 4;
  if (c.pos + expect != buf.size())
    throw IoError(path + ": flo payload length mismatch at byte offset " + std::to_string(c.pos) + ": header wants " +
                  std::to_string(expect) + " bytes, file has " + std::to_string(buf.size() - c.pos));
  Tensor out({2, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      out.at(0, y, x) = c.f32("flo u");
      out.at(1, y, x) = c.f32("flo v");
    }
  return out;
}

namespace {

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FilePtr file;

  PngWriter(const std::string& path, int w, int h, int bit_depth, int color_type)
      : file(open_or_throw(path, "wb")) {
    png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) throw IoError(path + ": libpng write failure");
    png_init_io(png, file.get());
    png_set_IHDR(png, info, w, h, bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
  }
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, &info);
  }
};

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FilePtr file;
  int w = 0, h = 0, bit_depth = 0, color_type = 0;

  explicit PngReader(const std::string& path) : file(open_or_throw(path, "rb")) {
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8))
      throw IoError(path + ": not a PNG file");
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) throw IoError(path + ": libpng read failure");
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    w = static_cast<int>(png_get_image_width(png, info));
    h = static_cast<int>(png_get_image_height(png, info));
    bit_depth = png_get_bit_depth(png, info);
    color_type = png_get_color_type(png, info);
  }
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
  }
};

}  // namespace

void write_png_rgb8(const std::string& path, const Tensor& img) {
  if (img.ndim() != 3 || img.dim(0) != 3) throw IoError("write_png_rgb8: expected (3,H,W)");
  int h = img.dim(1), w = img.dim(2);
  PngWriter pw(path, w, h, 8, PNG_COLOR_TYPE_RGB);
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = img.at(c, y, x);
        v = v < 0 ? 0 : (v > 1 ? 1 : v);
        row[x * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    png_write_row(pw.png, row.data());
  }
  png_write_end(pw.png, nullptr);
}

Tensor read_png_rgb8(const std::string& path) {
  PngReader pr(path);
  if (pr.bit_depth != 8 || pr.color_type != PNG_COLOR_TYPE_RGB)
    throw IoError(path + ": expected 8-bit RGB PNG");
  Tensor out({3, pr.h, pr.w});
  std::vector<unsigned char> row(static_cast<std::size_t>(pr.w) * 3);
  for (int y = 0; y < pr.h; ++y) {
    png_read_row(pr.png, row.data(), nullptr);
    for (int x = 0; x < pr.w; ++x)
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = row[x * 3 + c] / 255.0;
  }
  return out;
}

void write_disp_png16(const std::string& path, const Tensor& disp) {
  if (disp.ndim() != 2) throw IoError("write_disp_png16: expected (H,W)");
  int h = disp.dim(0), w = disp.dim(1);
  PngWriter pw(path, w, h, 16, PNG_COLOR_TYPE_GRAY);
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = disp.at(y, x);
      long code = std::lround(v * 256.0);
      if (code < 0) code = 0;  // 0 encodes invalid; sub-1/512 disparities are not representable
      if (code > 65535) code = 65535;
      if (!std::isfinite(v)) code = 0;
      row[x * 2] = static_cast<unsigned char>(code >> 8);  // PNG is big-endian
      row[x * 2 + 1] = static_cast<unsigned char>(code & 0xff);
    }
    png_write_row(pw.png, row.data());
  }
  png_write_end(pw.png, nullptr);
}

std::pair<Tensor, Tensor> read_disp_png16(const std::string& path) {
  PngReader pr(path);
  if (pr.bit_depth != 16 || pr.color_type != PNG_COLOR_TYPE_GRAY)
    throw IoError(path + ": expected 16-bit grayscale PNG");
  Tensor disp({pr.h, pr.w});
  Tensor valid({pr.h, pr.w});
  std::vector<unsigned char> row(static_cast<std::size_t>(pr.w) * 2);
  for (int y = 0; y < pr.h; ++y) {
    png_read_row(pr.png, row.data(), nullptr);
    for (int x = 0; x < pr.w; ++x) {
      unsigned code = (static_cast<unsigned>(row[x * 2]) << 8) | row[x * 2 + 1];
      disp.at(y, x) = code / 256.0;
      valid.at(y, x) = code == 0 ? 0.0 : 1.0;
    }
  }
  return {std::move(disp), std::move(valid)};
}

void write_png_mask(const std::string& path, const Tensor& mask) {
  if (mask.ndim() != 2) throw IoError("write_png_mask: expected (H,W)");
  int h = mask.dim(0), w = mask.dim(1);
  PngWriter pw(path, w, h, 8, PNG_COLOR_TYPE_GRAY);
  std::vector<unsigned char> row(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) row[x] = mask.at(y, x) > 0.5 ? 255 : 0;
    png_write_row(pw.png, row.data());
  }
  png_write_end(pw.png, nullptr);
}

Tensor read_png_mask(const std::string& path) {
  PngReader pr(path);
  if (pr.bit_depth != 8 || pr.color_type != PNG_COLOR_TYPE_GRAY)
    throw IoError(path + ": expected 8-bit grayscale PNG");
  Tensor out({pr.h, pr.w});
  std::vector<unsigned char> row(static_cast<std::size_t>(pr.w));
  for (int y = 0; y < pr.h; ++y) {
    png_read_row(pr.png, row.data(), nullptr);
    for (int x = 0; x < pr.w; ++x) out.at(y, x) = row[x] > 127 ? 1.0 : 0.0;
  }
  return out;
}

void ArrayContainer::save(const std::string& path) const {
  std::string buf;
  buf += "VSAC";
  put_i32(buf, static_cast<std::int32_t>(kVersion));
  put_i32(buf, static_cast<std::int32_t>(arrays.size()));
  put_i32(buf, static_cast<std::int32_t>(ints.size()));
  put_i32(buf, static_cast<std::int32_t>(strings.size()));
  auto put_str = [&](const std::string& s) {
    put_i32(buf, static_cast<std::int32_t>(s.size()));
    buf += s;
  };
  for (const auto& [name, val] : ints) {
    put_str(name);
    char b[8];
    std::memcpy(b, &val, 8);
    buf.append(b, 8);
  }
  for (const auto& [name, val] : strings) {
    put_str(name);
    put_str(val);
  }
  for (const auto& [name, t] : arrays) {
    put_str(name);
    put_i32(buf, t.ndim());
    for (int i = 0; i < t.ndim(); ++i) put_i32(buf, t.dim(i));
    buf.append(reinterpret_cast<const char*>(t.data()), static_cast<std::size_t>(t.numel()) * 8);
  }
  write_all(path, buf);
}

ArrayContainer ArrayContainer::load(const std::string& path) {
  std::string buf = read_all(path);
  Cursor c{buf, 0, path};
  c.need(4, "container magic");
  if (buf.compare(0, 4, "VSAC") != 0) throw IoError(path + ": bad container magic at byte offset 0");
  c.pos = 4;
  std::int32_t version = c.i32("container version");
  if (version != static_cast<std::int32_t>(kVersion))
    throw IoError(path + ": unsupported container version " + std::to_string(version));
  std::int32_t n_arrays = c.i32("array count");
  std::int32_t n_ints = c.i32("int count");
  std::int32_t n_strings = c.i32("string count");
  auto get_str = [&](std::int32_t max_len) {
    std::int32_t len = c.i32("string length");
    if (len < 0 || len > max_len)
      throw IoError(path + ": bad string length at byte offset " + std::to_string(c.pos - 4));
    c.need(static_cast<std::size_t>(len), "string");
    std::string s = buf.substr(c.pos, static_cast<std::size_t>(len));
    c.pos += static_cast<std::size_t>(len);
    return s;
  };
  ArrayContainer out;
  for (int i = 0; i < n_ints; ++i) {
    std::string name = get_str(4096);
    c.need(8, "int payload");
    std::int64_t v;
    std::memcpy(&v, buf.data() + c.pos, 8);
    c.pos += 8;
    out.ints[name] = v;
  }
  for (int i = 0; i < n_strings; ++i) {
    std::string name = get_str(4096);
    out.strings[name] = get_str(1 << 24);
  }
  for (int i = 0; i < n_arrays; ++i) {
    std::string name = get_str(4096);
    std::int32_t nd = c.i32("ndim");
    if (nd < 1 || nd > static_cast<std::int32_t>(Shape::kMaxDims))
      throw IoError(path + ": bad rank " + std::to_string(nd) + " at byte offset " + std::to_string(c.pos - 4));
    int dims[Shape::kMaxDims] = {0};
    std::int64_t numel = 1;
    for (int d = 0; d < nd; ++d) {
      dims[d] = c.i32("dim");
      if (dims[d] <= 0) throw IoError(path + ": bad dim at byte offset " + std::to_string(c.pos - 4));
      numel *= dims[d];
    }
    Shape s;
    switch (nd) {
      case 1: s = {dims[0]}; break;
      case 2: s = {dims[0], dims[1]}; break;
      case 3: s = {dims[0], dims[1], dims[2]}; break;
      case 4: s = {dims[0], dims[1], dims[2], dims[3]}; break;
      default: s = {dims[0], dims[1], dims[2], dims[3], dims[4]}; break;
    }
    c.need(static_cast<std::size_t>(numel) * 8, "array payload");
    Tensor t(s);
    std::memcpy(t.data(), buf.data() + c.pos, static_cast<std::size_t>(numel) * 8);
    c.pos += static_cast<std::size_t>(numel) * 8;
    out.arrays[name] = std::move(t);
  }
  if (c.pos != buf.size())
    throw IoError(path + ": trailing bytes at offset " + std::to_string(c.pos));
  return out;
}

std::string fnv1a_hex_bytes(const void* data, std::size_t n) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

std::string fnv1a_hex(const std::string& path) {
  std::string buf = read_all(path);
  return fnv1a_hex_bytes(buf.data(), buf.size());
}

}  // namespace vidstereo
