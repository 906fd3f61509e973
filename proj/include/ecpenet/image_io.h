#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "ecpenet/tensor.h"

namespace ecpenet {

/// Images are (1, C, H, W) tensors with values in [0, 1].
using Image = Tensor<double>;

/// Unreadable, malformed, or unwritable image/dataset files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// [0,1] real to 8-bit with round-half-up and clamping.
std::uint8_t quantize(double v);

/// Reads 8-bit PNG (gray, gray+alpha, RGB, RGBA) or binary PPM/PGM into a
/// 3-channel image; gray inputs are replicated, alpha is dropped.
Image read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Image& image);
void write_png(const std::filesystem::path& path, const Image& image);
void write_ppm(const std::filesystem::path& path, const Image& image);
/// Dispatches on the extension (.ppm writes PPM, anything else PNG).
void write_image(const std::filesystem::path& path, const Image& image);

/// Writes `bytes` via a temporary sibling and rename, so readers never see a
/// partial file.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace ecpenet
