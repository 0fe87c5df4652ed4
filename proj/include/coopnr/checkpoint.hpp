#pragma once

// Flat versioned parameter container.
//
//   magic      8 bytes  "CNRCKPT\0"
//   version    u32
//   meta_len   u32, followed by meta_len bytes of UTF-8 metadata (JSON text)
//   count      u32
//   count x { name_len u32, name bytes, rank u32, dims u64[rank], f32[prod(dims)] }
//
// All integers and scalars are little-endian.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "coopnr/tensor.hpp"

namespace coopnr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

struct Checkpoint {
  std::string metadata;
  std::vector<NamedTensor> tensors;

  const Tensor<float>* find(const std::string& name) const;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace coopnr
