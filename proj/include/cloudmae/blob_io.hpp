#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <vector>

namespace cloudmae {

// Raw little-endian array files: float32/int32, row-major, no header.
// Shapes travel separately (header.json / checkpoint header).

void write_f32_blob(const std::filesystem::path& path, const torch::Tensor& t);
void write_i32_blob(const std::filesystem::path& path, const torch::Tensor& t);

torch::Tensor read_f32_blob(const std::filesystem::path& path,
                            const std::vector<int64_t>& shape);
torch::Tensor read_i32_blob(const std::filesystem::path& path,
                            const std::vector<int64_t>& shape);

// append/read raw tensor bytes on an open stream (checkpoint files)
void append_tensor_bytes(std::ostream& out, const torch::Tensor& t);
torch::Tensor read_tensor_bytes(std::istream& in, const std::vector<int64_t>& shape,
                                torch::ScalarType dtype);

}  // namespace cloudmae
