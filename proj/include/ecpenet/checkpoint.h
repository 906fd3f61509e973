#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecpenet/tensor.h"

namespace ecpenet {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { kFloat32 = 0, kFloat64 = 1, kUInt8 = 2, kInt64 = 3 };

struct CheckpointEntry {
  std::string name;
  DType dtype = DType::kFloat32;
  std::vector<std::uint64_t> dims;
  std::vector<std::uint8_t> bytes;  // little-endian element data

  bool operator==(const CheckpointEntry&) const = default;
};

/// Named arrays in file order.
///
/// File layout (all integers little-endian):
///   "ECPN" | u32 version | u64 entry count |
///   per entry: u32 name length, name bytes, u8 dtype, u32 rank, u64 dims[rank], element bytes |
///   u64 FNV-1a checksum of every preceding byte.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const;
  const CheckpointEntry& at(const std::string& name) const;

  template <typename T>
  void put_tensor(const std::string& name, const Tensor<T>& tensor);
  /// Reads a float32/float64 entry of exactly `shape`, converting to T.
  template <typename T>
  Tensor<T> get_tensor(const std::string& name, const Shape& shape) const;

  void put_text(const std::string& name, const std::string& text);
  std::string get_text(const std::string& name) const;
  void put_int(const std::string& name, std::int64_t value);
  std::int64_t get_int(const std::string& name) const;

  bool operator==(const Checkpoint&) const = default;
};

std::vector<std::uint8_t> serialize(const Checkpoint& checkpoint);
/// Throws CheckpointError on bad magic, version mismatch, truncation, or
/// checksum failure; never returns partial state.
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ecpenet
