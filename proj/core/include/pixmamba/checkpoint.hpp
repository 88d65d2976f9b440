#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pixmamba/model.hpp"

// Checkpoint layout (little-endian):
//   "PXMB" | u16 version | u32 n + config text | u32 record count
//   per record: u32 n + path | u32 rank | u64 dims[rank] | f32 data[numel]
//   u64 FNV-1a hash of every preceding byte
namespace pixmamba {

inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const PixMamba<float>& model);
void save_checkpoint(const PixMamba<float>& model, const std::string& path);

// Reads the stored config, builds a model from it and fills its parameters.
PixMamba<float> load_checkpoint(const std::string& path);
// Fills an existing model; every stored record must match a parameter path
// and shape, and every parameter must be present.
void load_checkpoint_into(PixMamba<float>& model, const std::string& path);
ModelConfig read_checkpoint_config(const std::string& path);

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n);

}  // namespace pixmamba
