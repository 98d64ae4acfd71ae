#pragma once

// File formats: PNG/PNM images and masks (libpng), plus the little-endian
// FMAP (feature map) and SPXL (label map) containers.
//
//   FMAP: "FMAP" u32 height u32 width u32 dim, then height*width*dim f32
//   SPXL: "SPXL" u32 height u32 width u32 count, then height*width u32

#include <png.h>

#include <bit>
#include <cctype>
#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "spxr/error.hpp"
#include "spxr/raster.hpp"

namespace spxr {

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(Errc::io_error, "read failed: " + path);
  return bytes;
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_error, "cannot create " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::io_error, "write failed: " + path);
}

class ByteWriter {
 public:
  void magic(const char (&m)[5]) { bytes_.insert(bytes_.end(), m, m + 4); }
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) bytes_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& b) : b_(b) {}
  bool has(std::size_t n) const { return b_.size() - pos_ >= n; }
  std::size_t remaining() const { return b_.size() - pos_; }
  bool magic_is(const char* m) {
    if (!has(4)) return false;
    const bool ok = std::memcmp(b_.data() + pos_, m, 4) == 0;
    pos_ += 4;
    return ok;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int s = 0; s < 32; s += 8) v |= static_cast<std::uint32_t>(b_[pos_++]) << s;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

// Raw decoded samples: 1 (gray) or 3 (rgb) channels, 8- or 16-bit
// big-endian samples as stored by libpng.
struct DecodedRaster {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  int maxval = 0;
  std::vector<std::uint8_t> samples;
};

struct PngMemSource {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t offset;
};

extern "C" inline void spxr_png_read_mem(png_structp png, png_bytep out, png_size_t n) {
  auto* src = static_cast<PngMemSource*>(png_get_io_ptr(png));
  if (src->size - src->offset < n) png_error(png, "truncated");
  std::memcpy(out, src->data + src->offset, n);
  src->offset += n;
}

extern "C" inline void spxr_png_silent_warning(png_structp, png_const_charp) {}

enum class PngStatus { ok, corrupt, bad_depth };

// Only trivially-destructible locals live in this frame: libpng reports
// errors through longjmp back to the setjmp below.
inline PngStatus decode_png_frame(const std::uint8_t* data, std::size_t size, bool expand_low_depth,
                                  DecodedRaster* out) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, spxr_png_silent_warning);
  if (png == nullptr) return PngStatus::corrupt;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return PngStatus::corrupt;
  }
  PngMemSource src{data, size, 0};
  png_bytep* rows = nullptr;
  if (setjmp(png_jmpbuf(png))) {
    delete[] rows;
    png_destroy_read_struct(&png, &info, nullptr);
    return PngStatus::corrupt;
  }
  png_set_read_fn(png, &src, spxr_png_read_mem);
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (!expand_low_depth && depth != 8 && depth != 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    return PngStatus::bad_depth;
  }
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  out->width = static_cast<int>(png_get_image_width(png, info));
  out->height = static_cast<int>(png_get_image_height(png, info));
  out->channels = png_get_channels(png, info);
  out->bit_depth = png_get_bit_depth(png, info);
  out->maxval = out->bit_depth == 16 ? 65535 : 255;
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  out->samples.resize(rowbytes * static_cast<std::size_t>(out->height));
  rows = new png_bytep[static_cast<std::size_t>(out->height)];
  for (int y = 0; y < out->height; ++y) rows[y] = out->samples.data() + rowbytes * static_cast<std::size_t>(y);
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  delete[] rows;
  rows = nullptr;
  png_destroy_read_struct(&png, &info, nullptr);
  return PngStatus::ok;
}

inline DecodedRaster decode_png(const std::vector<std::uint8_t>& bytes, bool expand_low_depth) {
  DecodedRaster r;
  const auto status = decode_png_frame(bytes.data(), bytes.size(), expand_low_depth, &r);
  if (status == PngStatus::bad_depth) fail(Errc::unsupported_bit_depth, "unsupported bit depth");
  if (status != PngStatus::ok || (r.channels != 1 && r.channels != 3)) fail(Errc::corrupt_image, "corrupt image");
  return r;
}

// Binary (P5/P6) and ASCII (P2/P3) netpbm with maxval up to 65535.
inline DecodedRaster decode_pnm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 2;
  auto next_token = [&]() -> long {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) fail(Errc::corrupt_image, "corrupt image");
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > (1L << 30)) fail(Errc::corrupt_image, "corrupt image");
    }
    return v;
  };
  const char kind = static_cast<char>(bytes[1]);
  DecodedRaster r;
  r.channels = (kind == '3' || kind == '6') ? 3 : 1;
  r.width = static_cast<int>(next_token());
  r.height = static_cast<int>(next_token());
  r.maxval = static_cast<int>(next_token());
  if (r.width <= 0 || r.height <= 0 || r.maxval <= 0) fail(Errc::corrupt_image, "corrupt image");
  if (r.maxval > 65535) fail(Errc::unsupported_bit_depth, "unsupported bit depth");
  r.bit_depth = r.maxval > 255 ? 16 : 8;
  const std::size_t nsamples = static_cast<std::size_t>(r.width) * r.height * r.channels;
  const std::size_t bps = r.bit_depth / 8;
  r.samples.resize(nsamples * bps);
  if (kind == '5' || kind == '6') {
    ++pos;  // single whitespace after maxval
    if (bytes.size() < pos || bytes.size() - pos < nsamples * bps) fail(Errc::corrupt_image, "corrupt image");
    std::memcpy(r.samples.data(), bytes.data() + pos, nsamples * bps);
  } else {
    for (std::size_t i = 0; i < nsamples; ++i) {
      const long v = next_token();
      if (v > r.maxval) fail(Errc::corrupt_image, "corrupt image");
      if (bps == 2) {
        r.samples[2 * i] = static_cast<std::uint8_t>(v >> 8);
        r.samples[2 * i + 1] = static_cast<std::uint8_t>(v & 0xff);
      } else {
        r.samples[i] = static_cast<std::uint8_t>(v);
      }
    }
  }
  return r;
}

inline DecodedRaster decode_any(const std::string& path, bool expand_low_depth) {
  const auto bytes = read_file_bytes(path);
  static constexpr std::uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), png_sig, 8) == 0) return decode_png(bytes, expand_low_depth);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '2' || bytes[1] == '3' || bytes[1] == '5' || bytes[1] == '6'))
    return decode_pnm(bytes);
  if (bytes.size() < 8) fail(Errc::corrupt_image, "corrupt image");
  fail(Errc::unsupported_format, "unsupported image format: " + path);
}

inline unsigned sample_at(const DecodedRaster& r, std::size_t i) {
  if (r.bit_depth == 16) return (static_cast<unsigned>(r.samples[2 * i]) << 8) | r.samples[2 * i + 1];
  return r.samples[i];
}

inline void write_png_8bit(const std::string& path, int w, int h, int channels, const std::vector<std::uint8_t>& px) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, px.data(), 0, nullptr))
    fail(Errc::io_error, "cannot write png " + path + ": " + image.message);
}

}  // namespace detail

/// Loads an 8/16-bit RGB or grayscale PNG or PNM; channels scaled to [0,1].
inline RgbImage load_image(const std::string& path) {
  const auto r = detail::decode_any(path, false);
  RgbImage img(r.width, r.height);
  const double scale = 1.0 / r.maxval;
  const std::size_t n = img.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      const std::size_t s = r.channels == 3 ? 3 * i + c : i;
      img.data[3 * i + c] = static_cast<float>(detail::sample_at(r, s) * scale);
    }
  }
  return img;
}

/// Loads a mask image of any depth; nonzero (any channel) is foreground.
inline BinaryMask load_mask(const std::string& path) {
  const auto r = detail::decode_any(path, true);
  BinaryMask m(r.width, r.height);
  for (std::size_t i = 0; i < m.pixel_count(); ++i) {
    bool on = false;
    for (int c = 0; c < r.channels; ++c) on = on || detail::sample_at(r, i * r.channels + c) != 0;
    m.bits[i] = on ? 1 : 0;
  }
  return m;
}

inline void save_png(const RgbImage& img, const std::string& path) {
  std::vector<std::uint8_t> px(img.data.size());
  for (std::size_t i = 0; i < px.size(); ++i)
    px[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.data[i], 0.0f, 1.0f) * 255.0f));
  detail::write_png_8bit(path, img.width, img.height, 3, px);
}

inline void save_mask_png(const BinaryMask& mask, const std::string& path) {
  std::vector<std::uint8_t> px(mask.bits.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = mask.bits[i] ? 255 : 0;
  detail::write_png_8bit(path, mask.width, mask.height, 1, px);
}

inline void write_feature_map(const FeatureMap& fm, const std::string& path) {
  require(fm.dim >= 1 && fm.data.size() == fm.pixel_count() * fm.dim, Errc::dimension_mismatch,
          "write_feature_map: data length does not match dimensions");
  detail::ByteWriter w;
  w.magic("FMAP");
  w.u32(static_cast<std::uint32_t>(fm.height));
  w.u32(static_cast<std::uint32_t>(fm.width));
  w.u32(static_cast<std::uint32_t>(fm.dim));
  w.bytes().reserve(16 + 4 * fm.data.size());
  for (float v : fm.data) w.f32(v);
  detail::write_file_bytes(path, w.bytes());
}

inline FeatureMap read_feature_map(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes);
  if (!r.magic_is("FMAP")) fail(Errc::bad_magic, "bad magic");
  if (!r.has(12)) fail(Errc::payload_size_mismatch, "payload size mismatch");
  const std::uint64_t h = r.u32(), w = r.u32(), d = r.u32();
  if (d == 0) fail(Errc::invalid_argument, "feature map: dim must be >= 1");
  if (h * w > (1ULL << 40) / d) fail(Errc::payload_size_mismatch, "payload size mismatch");
  if (r.remaining() != h * w * d * 4) fail(Errc::payload_size_mismatch, "payload size mismatch");
  FeatureMap fm(static_cast<int>(w), static_cast<int>(h), static_cast<int>(d));
  for (auto& v : fm.data) v = r.f32();
  return fm;
}

inline void write_label_map(const LabelMap& lm, const std::string& path) {
  lm.validate();
  detail::ByteWriter w;
  w.magic("SPXL");
  w.u32(static_cast<std::uint32_t>(lm.height));
  w.u32(static_cast<std::uint32_t>(lm.width));
  w.u32(lm.count);
  w.bytes().reserve(16 + 4 * lm.labels.size());
  for (auto l : lm.labels) w.u32(l);
  detail::write_file_bytes(path, w.bytes());
}

inline LabelMap read_label_map(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes);
  if (!r.magic_is("SPXL")) fail(Errc::bad_magic, "bad magic");
  if (!r.has(12)) fail(Errc::payload_size_mismatch, "payload size mismatch");
  const std::uint64_t h = r.u32(), w = r.u32();
  LabelMap lm;
  lm.count = r.u32();
  if (h * w > (1ULL << 40) || r.remaining() != h * w * 4) fail(Errc::payload_size_mismatch, "payload size mismatch");
  lm.width = static_cast<int>(w);
  lm.height = static_cast<int>(h);
  lm.labels.resize(h * w);
  for (auto& l : lm.labels) l = r.u32();
  lm.validate();
  return lm;
}

}  // namespace spxr
