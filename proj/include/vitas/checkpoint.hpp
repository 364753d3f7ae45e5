#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vitas/nn.hpp"

namespace vitas {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape dims;
  std::vector<float> data;
  bool operator==(const CheckpointEntry&) const = default;
};

/// Layout (all integers little-endian):
///   "VTAS" | u32 version | u64 entry count
///   per entry: u32 name length | name bytes | u8 rank | rank x u64 dims | f32 payload
///   u32 CRC32 of every preceding byte
std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Writes to a temporary file and renames it over `path`.
void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

template <typename T>
std::vector<CheckpointEntry> entries_from(const ParameterSet<T>& ps);

/// Copies matching entries into parameters. Every parameter must be present
/// with identical dims; entries without a parameter are ignored.
template <typename T>
void load_into(ParameterSet<T>& ps, const std::vector<CheckpointEntry>& entries);

const CheckpointEntry* find_entry(const std::vector<CheckpointEntry>& entries, const std::string& name);

}  // namespace vitas
