#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "a3sim/attacknet.hpp"
#include "a3sim/netspec.hpp"

namespace a3 {

/// Binary tensor: little-endian u32 rank, u32 dims, then float32 values in row-major order.
/// A file may hold several tensors back to back.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const;
};

/// Reads one tensor; throws TensorFormatError on truncation or inconsistent sizes.
Tensor read_tensor(std::istream& in);
void write_tensor(std::ostream& out, const Tensor& tensor);

std::vector<Tensor> read_tensors(const std::filesystem::path& path);
void write_tensors(const std::filesystem::path& path, const std::vector<Tensor>& tensors);

/// One rank-2 tensor per layer, (kh*kw*cin) x cout.
WeightSet<double> weights_from_tensors(const NetworkSpec& net, const std::vector<Tensor>& tensors);
std::vector<Tensor> tensors_from_weights(const WeightSet<double>& weights);

/// Each tensor holds one or more images: its element count must be a multiple of the input size.
std::vector<Eigen::VectorXd> images_from_tensors(const NetworkSpec& net,
                                                 const std::vector<Tensor>& tensors);

}  // namespace a3
