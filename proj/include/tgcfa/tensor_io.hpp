#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tgcfa/common.hpp"

namespace tgcfa::tensor_io {

using ImageF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class DType : std::uint8_t { kF32 = 0, kU8 = 1 };

// Container layout: "TGTS", u32 version=1, u8 dtype, u32 rank, u32 dims[rank],
// little-endian payload in row-major order.
struct TensorFile {
  DType dtype = DType::kF32;
  std::vector<std::uint32_t> dims;
  std::vector<float> f32;
  std::vector<std::uint8_t> u8;

  std::size_t element_count() const;
};

std::vector<std::uint8_t> encode(const TensorFile& tensor);
TensorFile decode(std::vector<std::uint8_t> bytes, const std::string& source);

void save_tensor(const std::string& path, const TensorFile& tensor);
TensorFile load_tensor(const std::string& path);

// Single-channel image stored as f32 [1, H, W].
void save_image(const std::string& path, const ImageF& image);
ImageF load_image(const std::string& path);

// Label map stored as u8 [H, W].
void save_labels(const std::string& path, const LabelMap& labels);
LabelMap load_labels(const std::string& path);

}  // namespace tgcfa::tensor_io
