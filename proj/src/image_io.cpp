#include "ecpenet/image_io.h"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace ecpenet {

namespace fs = std::filesystem;

std::uint8_t quantize(double v) {
  const double scaled = std::floor(v * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

namespace {

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

Image from_interleaved(const std::uint8_t* data, std::int64_t height, std::int64_t width,
                       int channels) {
  Image img(Shape{1, 3, height, width});
  for (std::int64_t y = 0; y < height; ++y) {
    for (std::int64_t x = 0; x < width; ++x) {
      const std::uint8_t* px = data + (y * width + x) * channels;
      for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = px[channels == 1 ? 0 : c] / 255.0;
    }
  }
  return img;
}

std::vector<std::uint8_t> to_interleaved(const Image& image) {
  const Shape s = image.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) {
    throw ContractViolation("image writer expects (1, 1|3, H, W), got " + s.str());
  }
  std::vector<std::uint8_t> out(static_cast<std::size_t>(s.h * s.w * 3));
  for (std::int64_t y = 0; y < s.h; ++y) {
    for (std::int64_t x = 0; x < s.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        out[static_cast<std::size_t>((y * s.w + x) * 3 + c)] =
            quantize(image.at(0, s.c == 1 ? 0 : c, y, x));
      }
    }
  }
  return out;
}

// Netpbm header token, skipping whitespace and comments.
std::int64_t pnm_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos, const fs::path& path) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::int64_t v = 0;
  bool any = false;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    v = v * 10 + (bytes[pos++] - '0');
    any = true;
  }
  if (!any) throw DataError("malformed PNM header in " + path.string());
  return v;
}

Image read_pnm(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
  const int channels = bytes[1] == '6' ? 3 : 1;
  std::size_t pos = 2;
  const std::int64_t width = pnm_token(bytes, pos, path);
  const std::int64_t height = pnm_token(bytes, pos, path);
  const std::int64_t maxval = pnm_token(bytes, pos, path);
  if (maxval != 255) throw DataError("only 8-bit PNM is supported: " + path.string());
  ++pos;  // single whitespace after maxval
  const std::size_t need = static_cast<std::size_t>(width * height * channels);
  if (bytes.size() < pos + need) throw DataError("truncated PNM data in " + path.string());
  return from_interleaved(bytes.data() + pos, height, width, channels);
}

Image read_png(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw DataError("cannot decode PNG " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, pixels.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw DataError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return from_interleaved(pixels.data(), png.height, png.width, 3);
}

}  // namespace

Image read_image(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = read_bytes(path);
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return read_png(bytes, path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '6' || bytes[1] == '5')) {
    return read_pnm(bytes, path);
  }
  throw DataError("unsupported image format: " + path.string());
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  const std::vector<std::uint8_t> pixels = to_interleaved(image);
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.shape().w);
  png.height = static_cast<png_uint_32>(image.shape().h);
  png.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(png, size, 0, pixels.data(), 0, nullptr)) {
    throw DataError(std::string("PNG encoding failed: ") + png.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw DataError(std::string("PNG encoding failed: ") + png.message);
  }
  out.resize(size);
  return out;
}

void write_file_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  fs::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw DataError("write failed for " + path.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw DataError("cannot move " + tmp.string() + " into place: " + ec.message());
  }
}

void write_png(const fs::path& path, const Image& image) { write_file_atomic(path, encode_png(image)); }

void write_ppm(const fs::path& path, const Image& image) {
  const std::string header = "P6\n" + std::to_string(image.shape().w) + " " +
                             std::to_string(image.shape().h) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  const std::vector<std::uint8_t> pixels = to_interleaved(image);
  bytes.insert(bytes.end(), pixels.begin(), pixels.end());
  write_file_atomic(path, bytes);
}

void write_image(const fs::path& path, const Image& image) {
  if (path.extension() == ".ppm") {
    write_ppm(path, image);
  } else {
    write_png(path, image);
  }
}

}  // namespace ecpenet
