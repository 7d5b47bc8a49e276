#include "tgcfa/tensor_io.hpp"

#include <filesystem>
#include <fstream>

#include "binary_io.hpp"

namespace tgcfa {

namespace detail {

void write_file_atomic(const std::string& path, const void* data, std::size_t size) {
  const std::string partial = path + ".partial";
  {
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + partial);
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw Error("write failed: " + partial);
  }
  std::filesystem::rename(partial, path);
}

}  // namespace detail

namespace tensor_io {

namespace {
constexpr char kMagic[4] = {'T', 'G', 'T', 'S'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

std::size_t TensorFile::element_count() const {
  std::size_t count = 1;
  for (auto d : dims) count *= d;
  return count;
}

std::vector<std::uint8_t> encode(const TensorFile& tensor) {
  const std::size_t count = tensor.element_count();
  const std::size_t have = tensor.dtype == DType::kF32 ? tensor.f32.size() : tensor.u8.size();
  if (have != count) throw ValidationError("tensor payload does not match its dims");
  detail::ByteWriter w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  w.u8(static_cast<std::uint8_t>(tensor.dtype));
  w.u32(static_cast<std::uint32_t>(tensor.dims.size()));
  for (auto d : tensor.dims) w.u32(d);
  if (tensor.dtype == DType::kF32) {
    w.raw(tensor.f32.data(), count * sizeof(float));
  } else {
    w.raw(tensor.u8.data(), count);
  }
  return w.bytes();
}

TensorFile decode(std::vector<std::uint8_t> bytes, const std::string& source) {
  detail::ByteReader r(std::move(bytes), source);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(source + ": bad magic, not a TGTS tensor");
  if (const auto v = r.u32(); v != kVersion) {
    throw FormatError(source + ": unsupported tensor version " + std::to_string(v));
  }
  TensorFile t;
  const auto dtype = r.u8();
  if (dtype > 1) throw FormatError(source + ": unknown dtype " + std::to_string(dtype));
  t.dtype = static_cast<DType>(dtype);
  const auto rank = r.u32();
  if (rank > 8) throw FormatError(source + ": implausible rank " + std::to_string(rank));
  for (std::uint32_t i = 0; i < rank; ++i) t.dims.push_back(r.u32());
  const std::size_t count = t.element_count();
  const std::size_t elem = t.dtype == DType::kF32 ? sizeof(float) : 1;
  if (r.remaining() != count * elem) throw FormatError(source + ": payload size mismatch");
  if (t.dtype == DType::kF32) {
    t.f32.resize(count);
    r.raw(t.f32.data(), count * elem);
  } else {
    t.u8.resize(count);
    r.raw(t.u8.data(), count);
  }
  return t;
}

void save_tensor(const std::string& path, const TensorFile& tensor) {
  detail::write_file_atomic(path, encode(tensor));
}

TensorFile load_tensor(const std::string& path) {
  return decode(detail::read_file_bytes(path), path);
}

void save_image(const std::string& path, const ImageF& image) {
  TensorFile t;
  t.dtype = DType::kF32;
  t.dims = {1, static_cast<std::uint32_t>(image.rows()), static_cast<std::uint32_t>(image.cols())};
  t.f32.assign(image.data(), image.data() + image.size());
  save_tensor(path, t);
}

ImageF load_image(const std::string& path) {
  const auto t = load_tensor(path);
  if (t.dtype != DType::kF32 || t.dims.size() != 3 || t.dims[0] != 1) {
    throw FormatError(path + ": expected f32 [1, H, W] image");
  }
  ImageF img(t.dims[1], t.dims[2]);
  std::copy(t.f32.begin(), t.f32.end(), img.data());
  return img;
}

void save_labels(const std::string& path, const LabelMap& labels) {
  TensorFile t;
  t.dtype = DType::kU8;
  t.dims = {static_cast<std::uint32_t>(labels.rows()), static_cast<std::uint32_t>(labels.cols())};
  t.u8.resize(labels.size());
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const int v = labels.data()[i];
    if (v < 0 || v > 255) throw ValidationError("label value does not fit u8");
    t.u8[i] = static_cast<std::uint8_t>(v);
  }
  save_tensor(path, t);
}

LabelMap load_labels(const std::string& path) {
  const auto t = load_tensor(path);
  if (t.dtype != DType::kU8 || t.dims.size() != 2) throw FormatError(path + ": expected u8 [H, W] labels");
  LabelMap labels(t.dims[0], t.dims[1]);
  for (std::size_t i = 0; i < t.u8.size(); ++i) labels.data()[i] = t.u8[i];
  return labels;
}

}  // namespace tensor_io
}  // namespace tgcfa
