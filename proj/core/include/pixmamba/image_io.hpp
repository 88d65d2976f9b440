#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pixmamba/tensor.hpp"

// Binary NetPBM (P6, maxval 255) images as [3,H,W] tensors in [0, 1].
namespace pixmamba {

Tensor<float> read_ppm(const std::string& path);
// Values are clamped to [0, 1] and rounded to 8 bits.
void write_ppm(const std::string& path, const Tensor<float>& img);

std::vector<std::uint8_t> encode_ppm(const Tensor<float>& img);
Tensor<float> decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& name = "<memory>");

// Bilinear resize with half-pixel centers; non-differentiable.
Tensor<float> resize_bilinear(const Tensor<float>& img, std::int64_t H, std::int64_t W);

}  // namespace pixmamba
