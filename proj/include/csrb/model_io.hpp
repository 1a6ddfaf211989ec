#pragma once

#include <cstdint>
#include <string>

#include "csrb/model.hpp"

namespace csrb {

/// Training provenance carried inside the model file.
struct ModelMeta {
  double epsilon = 0.0;
  double alpha = 0.0;
  std::uint64_t seed = 0;
};

class ModelIoError : public std::runtime_error {
 public:
  enum class Kind { Io, Malformed, VersionMismatch, ChecksumMismatch };
  ModelIoError(Kind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Binary model format: magic "CSRB", u32 version, layer shape table,
/// metadata, u64 parameter count, CRC32 of header+payload, then parameters
/// as little-endian f64 (per layer: W row-major, then b). Round-trips are
/// bitwise exact.
void save_model(const Network& net, const ModelMeta& meta, const std::string& path);
Network load_model(const std::string& path, ModelMeta* meta = nullptr);

std::uint32_t crc32(const unsigned char* data, std::size_t n, std::uint32_t seed = 0);

}  // namespace csrb
