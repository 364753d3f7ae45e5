#include "vitas/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <unordered_map>

namespace vitas {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  template <typename U>
  void put(U v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(U));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t end) : b_(b), end_(end) {}
  template <typename U>
  U get(const char* what) {
    U v{};
    need(sizeof(U), what);
    std::memcpy(&v, b_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  void read(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, b_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (end_ - pos_ < n) {
      throw CheckpointError(std::string("checkpoint: truncated while reading ") + what + " at byte " +
                            std::to_string(pos_));
    }
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t end_, pos_ = 0;
};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries) {
  Writer w;
  w.bytes("VTAS", 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(entries.size());
  for (const auto& e : entries) {
    if (static_cast<std::int64_t>(e.data.size()) != shape_numel(e.dims)) {
      throw CheckpointError("checkpoint: entry " + e.name + " has " + std::to_string(e.data.size()) +
                            " values for dims " + shape_string(e.dims));
    }
    if (e.dims.size() > 255) throw CheckpointError("checkpoint: rank too large for " + e.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.dims.size()));
    for (auto d : e.dims) w.put<std::uint64_t>(static_cast<std::uint64_t>(d));
    w.bytes(e.data.data(), e.data.size() * sizeof(float));
  }
  w.put<std::uint32_t>(crc_of(w.out.data(), w.out.size()));
  return std::move(w.out);
}

std::vector<CheckpointEntry> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 20) throw CheckpointError("checkpoint: file too short (" + std::to_string(bytes.size()) + " bytes)");
  if (std::memcmp(bytes.data(), "VTAS", 4) != 0) throw CheckpointError("checkpoint: bad magic");
  const auto body = bytes.size() - 4;
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, 4);
  const auto actual = crc_of(bytes.data(), body);
  if (stored != actual) throw CheckpointError("checkpoint: CRC mismatch, file is corrupt");
  Reader r(bytes, body);
  r.get<std::uint32_t>("magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint64_t>("entry count");
  std::vector<CheckpointEntry> out;
  for (std::uint64_t k = 0; k < count; ++k) {
    CheckpointEntry e;
    const auto len = r.get<std::uint32_t>("name length");
    e.name.resize(len);
    r.read(e.name.data(), len, "name");
    const auto rank = r.get<std::uint8_t>("rank");
    std::uint64_t numel = 1;
    for (int i = 0; i < rank; ++i) {
      const auto d = r.get<std::uint64_t>("dims");
      if (d == 0 || d > (1ull << 32)) throw CheckpointError("checkpoint: bad dim in " + e.name);
      e.dims.push_back(static_cast<std::int64_t>(d));
      numel *= d;
      if (numel > bytes.size()) throw CheckpointError("checkpoint: entry " + e.name + " larger than the file");
    }
    e.data.resize(static_cast<std::size_t>(numel));
    r.read(e.data.data(), e.data.size() * sizeof(float), "payload");
    out.push_back(std::move(e));
  }
  if (r.pos() != body) throw CheckpointError("checkpoint: trailing bytes before CRC");
  return out;
}

void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
  const auto bytes = encode_checkpoint(entries);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

template <typename T>
std::vector<CheckpointEntry> entries_from(const ParameterSet<T>& ps) {
  std::vector<CheckpointEntry> out;
  out.reserve(ps.size());
  for (const auto& p : ps.all()) {
    const auto v = p.value().values();
    out.push_back({p.name(), p.value().shape(), std::vector<float>(v.begin(), v.end())});
  }
  return out;
}

template <typename T>
void load_into(ParameterSet<T>& ps, const std::vector<CheckpointEntry>& entries) {
  std::unordered_map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  for (auto& p : ps.all()) {
    auto it = by_name.find(p.name());
    if (it == by_name.end()) throw CheckpointError("checkpoint: missing parameter " + p.name());
    const auto& e = *it->second;
    if (e.dims != p.value().shape()) {
      throw CheckpointError("checkpoint: " + p.name() + " has dims " + shape_string(e.dims) + ", model expects " +
                            shape_string(p.value().shape()));
    }
    auto dst = p.value().mutable_values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(e.data[i]);
  }
}

const CheckpointEntry* find_entry(const std::vector<CheckpointEntry>& entries, const std::string& name) {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

template std::vector<CheckpointEntry> entries_from(const ParameterSet<float>&);
template std::vector<CheckpointEntry> entries_from(const ParameterSet<double>&);
template void load_into(ParameterSet<float>&, const std::vector<CheckpointEntry>&);
template void load_into(ParameterSet<double>&, const std::vector<CheckpointEntry>&);

}  // namespace vitas
