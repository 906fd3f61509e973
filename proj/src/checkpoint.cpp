#include "ecpenet/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ecpenet/image_io.h"

namespace ecpenet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O copies element bytes directly and assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'E', 'C', 'P', 'N'};

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t element_size(DType t) {
  switch (t) {
    case DType::kFloat32: return 4;
    case DType::kFloat64: return 8;
    case DType::kUInt8: return 1;
    case DType::kInt64: return 8;
  }
  throw CheckpointError("unknown dtype tag " + std::to_string(static_cast<int>(t)));
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > size_ - pos_) throw CheckpointError("checkpoint truncated");
    const std::uint8_t* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == size_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint64_t count_of(const std::vector<std::uint64_t>& dims) {
  std::uint64_t n = 1;
  for (std::uint64_t d : dims) n *= d;
  return n;
}

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const CheckpointEntry& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

const CheckpointEntry& Checkpoint::at(const std::string& name) const {
  const CheckpointEntry* e = find(name);
  if (e == nullptr) throw CheckpointError("checkpoint has no entry '" + name + "'");
  return *e;
}

template <typename T>
void Checkpoint::put_tensor(const std::string& name, const Tensor<T>& tensor) {
  CheckpointEntry e;
  e.name = name;
  e.dtype = sizeof(T) == 4 ? DType::kFloat32 : DType::kFloat64;
  const Shape s = tensor.shape();
  e.dims = {static_cast<std::uint64_t>(s.n), static_cast<std::uint64_t>(s.c),
            static_cast<std::uint64_t>(s.h), static_cast<std::uint64_t>(s.w)};
  e.bytes.resize(static_cast<std::size_t>(tensor.numel()) * sizeof(T));
  std::memcpy(e.bytes.data(), tensor.ptr(), e.bytes.size());
  entries.push_back(std::move(e));
}

template <typename T>
Tensor<T> Checkpoint::get_tensor(const std::string& name, const Shape& shape) const {
  const CheckpointEntry& e = at(name);
  const std::vector<std::uint64_t> want{static_cast<std::uint64_t>(shape.n), static_cast<std::uint64_t>(shape.c),
                                        static_cast<std::uint64_t>(shape.h), static_cast<std::uint64_t>(shape.w)};
  if (e.dims != want) throw CheckpointError("entry '" + name + "' does not have shape " + shape.str());
  Tensor<T> out(shape);
  if (e.dtype == DType::kFloat32) {
    for (std::int64_t i = 0; i < out.numel(); ++i) {
      float v;
      std::memcpy(&v, e.bytes.data() + i * 4, 4);
      out[i] = static_cast<T>(v);
    }
  } else if (e.dtype == DType::kFloat64) {
    for (std::int64_t i = 0; i < out.numel(); ++i) {
      double v;
      std::memcpy(&v, e.bytes.data() + i * 8, 8);
      out[i] = static_cast<T>(v);
    }
  } else {
    throw CheckpointError("entry '" + name + "' is not floating point");
  }
  return out;
}

void Checkpoint::put_text(const std::string& name, const std::string& text) {
  CheckpointEntry e;
  e.name = name;
  e.dtype = DType::kUInt8;
  e.dims = {text.size()};
  e.bytes.assign(text.begin(), text.end());
  entries.push_back(std::move(e));
}

std::string Checkpoint::get_text(const std::string& name) const {
  const CheckpointEntry& e = at(name);
  if (e.dtype != DType::kUInt8) throw CheckpointError("entry '" + name + "' is not text");
  return std::string(e.bytes.begin(), e.bytes.end());
}

void Checkpoint::put_int(const std::string& name, std::int64_t value) {
  CheckpointEntry e;
  e.name = name;
  e.dtype = DType::kInt64;
  e.dims = {1};
  put(e.bytes, value);
  entries.push_back(std::move(e));
}

std::int64_t Checkpoint::get_int(const std::string& name) const {
  const CheckpointEntry& e = at(name);
  if (e.dtype != DType::kInt64 || e.bytes.size() != 8) throw CheckpointError("entry '" + name + "' is not an integer");
  std::int64_t v;
  std::memcpy(&v, e.bytes.data(), 8);
  return v;
}

std::vector<std::uint8_t> serialize(const Checkpoint& checkpoint) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, checkpoint.version);
  put<std::uint64_t>(out, checkpoint.entries.size());
  for (const CheckpointEntry& e : checkpoint.entries) {
    if (e.bytes.size() != count_of(e.dims) * element_size(e.dtype)) {
      throw CheckpointError("entry '" + e.name + "' byte size does not match its dims");
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.dims.size()));
    for (std::uint64_t d : e.dims) put<std::uint64_t>(out, d);
    out.insert(out.end(), e.bytes.begin(), e.bytes.end());
  }
  put<std::uint64_t>(out, fnv1a(out.data(), out.size()));
  return out;
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) + 4 + 8 + 8) throw CheckpointError("checkpoint truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) throw CheckpointError("not a checkpoint (bad magic)");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, 8);

  Reader r(bytes.data(), body);
  r.take(sizeof(kMagic));
  Checkpoint ck;
  ck.version = r.get<std::uint32_t>();
  if (ck.version != Checkpoint::kVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(ck.version) + ", expected " +
                          std::to_string(Checkpoint::kVersion));
  }
  if (stored != fnv1a(bytes.data(), body)) throw CheckpointError("checkpoint checksum mismatch (truncated or corrupt)");
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto name_len = r.get<std::uint32_t>();
    const std::uint8_t* name = r.take(name_len);
    e.name.assign(name, name + name_len);
    e.dtype = static_cast<DType>(r.get<std::uint8_t>());
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) e.dims.push_back(r.get<std::uint64_t>());
    const std::size_t n = count_of(e.dims) * element_size(e.dtype);
    const std::uint8_t* data = r.take(n);
    e.bytes.assign(data, data + n);
    ck.entries.push_back(std::move(e));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint table");
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  try {
    write_file_atomic(path, serialize(checkpoint));
  } catch (const DataError& e) {
    throw CheckpointError(e.what());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes(std::istreambuf_iterator<char>(in), {});
  return deserialize(bytes);
}

template void Checkpoint::put_tensor(const std::string&, const Tensor<float>&);
template void Checkpoint::put_tensor(const std::string&, const Tensor<double>&);
template Tensor<float> Checkpoint::get_tensor(const std::string&, const Shape&) const;
template Tensor<double> Checkpoint::get_tensor(const std::string&, const Shape&) const;

}  // namespace ecpenet
