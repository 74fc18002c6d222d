#include "tod/nn/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace tod::nn {

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), uInt(bytes.size()));
  return std::uint32_t(crc);
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint: truncated file");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(Checkpoint& ckpt) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, std::uint32_t(ckpt.config_json.size()));
  out += ckpt.config_json;
  put_u32(out, std::uint32_t(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    if (Tensor<float>::count(p.shape) != p.values.size()) {
      throw CheckpointError("checkpoint: record " + p.name + " has inconsistent shape");
    }
    put_u32(out, std::uint32_t(p.name.size()));
    out += p.name;
    put_u32(out, std::uint32_t(p.shape.size()));
    for (auto dim : p.shape) put_u64(out, dim);
    for (float v : p.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  ckpt.checksum = crc32_of(out);
  put_u32(out, ckpt.checksum);
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) + 8 ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw CheckpointError("checkpoint: bad magic bytes");
  }
  const std::string_view body = bytes.substr(0, bytes.size() - 4);
  Reader tail(bytes.substr(bytes.size() - 4));
  const std::uint32_t stored = tail.u32();
  if (crc32_of(body) != stored) throw CheckpointError("checkpoint: checksum mismatch");

  Reader r(body);
  r.take(sizeof(kCheckpointMagic));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.config_json = std::string(r.take(r.u32()));
  const std::uint32_t count = r.u32();
  ckpt.params.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    ParamRecord p;
    p.name = std::string(r.take(r.u32()));
    const std::uint32_t ndim = r.u32();
    for (std::uint32_t d = 0; d < ndim; ++d) p.shape.push_back(std::size_t(r.u64()));
    p.values.resize(Tensor<float>::count(p.shape));
    for (auto& v : p.values) v = std::bit_cast<float>(r.u32());
    ckpt.params.push_back(std::move(p));
  }
  if (r.pos() != body.size()) throw CheckpointError("checkpoint: trailing bytes");
  ckpt.checksum = stored;
  return ckpt;
}

void save_checkpoint(Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot write " + path.string());
  out.write(bytes.data(), std::streamsize(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

template <typename T>
std::vector<ParamRecord> snapshot_params(const ParamList<T>& params) {
  std::vector<ParamRecord> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    ParamRecord rec;
    rec.name = p.name;
    rec.shape = p.tensor->shape();
    auto vals = p.tensor->values();
    rec.values.assign(vals.begin(), vals.end());
    out.push_back(std::move(rec));
  }
  return out;
}

template <typename T>
void restore_params(const std::vector<ParamRecord>& records, const ParamList<T>& params) {
  std::map<std::string, const ParamRecord*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  for (const auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw CheckpointError("checkpoint: missing parameter " + p.name);
    if (it->second->shape != p.tensor->shape()) {
      throw CheckpointError("checkpoint: shape mismatch for " + p.name);
    }
    auto dst = p.tensor->values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = T(it->second->values[i]);
  }
}

template std::vector<ParamRecord> snapshot_params<float>(const ParamList<float>&);
template std::vector<ParamRecord> snapshot_params<double>(const ParamList<double>&);
template void restore_params<float>(const std::vector<ParamRecord>&, const ParamList<float>&);
template void restore_params<double>(const std::vector<ParamRecord>&, const ParamList<double>&);

}  // namespace tod::nn
