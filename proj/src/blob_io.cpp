#include "cloudmae/blob_io.hpp"

#include <bit>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "blob format is little-endian; byte-swapping I/O is not implemented");

namespace cloudmae {

namespace {

void write_raw(const std::filesystem::path& path, const torch::Tensor& t,
               torch::ScalarType dtype) {
  torch::Tensor c = t.to(dtype).contiguous();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(static_cast<const char*>(c.data_ptr()), c.numel() * c.element_size());
  if (!out) throw std::runtime_error("short write: " + path.string());
}

torch::Tensor read_raw(const std::filesystem::path& path,
                       const std::vector<int64_t>& shape, torch::ScalarType dtype) {
  torch::Tensor t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  const int64_t bytes = t.numel() * t.element_size();
  in.read(static_cast<char*>(t.data_ptr()), bytes);
  if (in.gcount() != bytes)
    throw std::runtime_error("short read (" + std::to_string(in.gcount()) + " of " +
                             std::to_string(bytes) + " bytes): " + path.string());
  return t;
}

}  // namespace

void write_f32_blob(const std::filesystem::path& path, const torch::Tensor& t) {
  write_raw(path, t, torch::kFloat32);
}

void write_i32_blob(const std::filesystem::path& path, const torch::Tensor& t) {
  write_raw(path, t, torch::kInt32);
}

torch::Tensor read_f32_blob(const std::filesystem::path& path,
                            const std::vector<int64_t>& shape) {
  return read_raw(path, shape, torch::kFloat32);
}

torch::Tensor read_i32_blob(const std::filesystem::path& path,
                            const std::vector<int64_t>& shape) {
  return read_raw(path, shape, torch::kInt32);
}

void append_tensor_bytes(std::ostream& out, const torch::Tensor& t) {
  torch::Tensor c = t.contiguous();
  out.write(static_cast<const char*>(c.data_ptr()), c.numel() * c.element_size());
  if (!out) throw std::runtime_error("short write while appending tensor bytes");
}

torch::Tensor read_tensor_bytes(std::istream& in, const std::vector<int64_t>& shape,
                                torch::ScalarType dtype) {
  torch::Tensor t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
  const int64_t bytes = t.numel() * t.element_size();
  in.read(static_cast<char*>(t.data_ptr()), bytes);
  if (in.gcount() != bytes) throw std::runtime_error("short read of tensor bytes");
  return t;
}

}  // namespace cloudmae
