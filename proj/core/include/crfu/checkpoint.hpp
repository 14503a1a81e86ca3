#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "crfu/tensor.hpp"

namespace crfu {

/// Named-tensor checkpoint container.
///
/// Layout: magic "CRFU", format version u32 LE, tensor count u32 LE, then per
/// tensor: name length u16 LE, UTF-8 name, rank u8, dims u32 LE, payload f32 LE.
/// Tensors are written in name order, so equal maps give equal bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

}  // namespace crfu
