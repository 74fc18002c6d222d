#pragma once

#include "tod/nn/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tod::nn {

// Binary layout, all integers little-endian:
//   8 bytes  magic "TODCKPT\0"
//   u32      format version
//   u32 len, bytes   config block (JSON text)
//   u32      record count
//   per record: u32 len, name bytes; u32 ndim; u64 dims[ndim]; f32 values
//   u32      CRC-32 of every preceding byte
inline constexpr char kCheckpointMagic[8] = {'T', 'O', 'D', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ParamRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::string config_json;
  std::vector<ParamRecord> params;
  std::uint32_t checksum = 0;  // filled by encode/decode
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode_checkpoint(Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <typename T>
std::vector<ParamRecord> snapshot_params(const ParamList<T>& params);

// Copies records into params by name; throws on missing names or shape
// mismatches.
template <typename T>
void restore_params(const std::vector<ParamRecord>& records, const ParamList<T>& params);

std::uint32_t crc32_of(std::string_view bytes);

}  // namespace tod::nn
