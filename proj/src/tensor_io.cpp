#include "a3sim/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "a3sim/error.hpp"

namespace a3 {

namespace {

constexpr std::uint32_t kMaxRank = 8;

std::uint32_t read_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw TensorFormatError(fmt::format("tensor file truncated while reading {}", what));
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

Tensor read_tensor(std::istream& in) {
  Tensor t;
  const std::uint32_t rank = read_u32(in, "rank");
  if (rank == 0 || rank > kMaxRank)
    throw TensorFormatError(fmt::format("tensor rank {} outside [1, {}]", rank, kMaxRank));
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto d = read_u32(in, "dims");
    if (d == 0) throw TensorFormatError("tensor has a zero-length dimension");
    count *= d;
    if (count > (1ull << 32)) throw TensorFormatError("tensor too large");
    t.dims.push_back(d);
  }
  t.data.resize(static_cast<std::size_t>(count));
  for (auto& v : t.data) v = std::bit_cast<float>(read_u32(in, "values"));
  return t;
}

void write_tensor(std::ostream& out, const Tensor& t) {
  if (t.dims.empty() || t.element_count() != t.data.size())
    throw TensorFormatError("tensor dims do not match its data");
  write_u32(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) write_u32(out, d);
  for (float v : t.data) write_u32(out, std::bit_cast<std::uint32_t>(v));
}

std::vector<Tensor> read_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open tensor file: " + path.string());
  std::vector<Tensor> out;
  while (in.peek() != std::char_traits<char>::eof()) out.push_back(read_tensor(in));
  if (out.empty()) throw TensorFormatError("tensor file is empty: " + path.string());
  return out;
}

void write_tensors(const std::filesystem::path& path, const std::vector<Tensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot write tensor file: " + path.string());
  for (const auto& t : tensors) write_tensor(out, t);
}

WeightSet<double> weights_from_tensors(const NetworkSpec& net, const std::vector<Tensor>& tensors) {
  if (tensors.size() != net.depth())
    throw TensorFormatError(fmt::format("weights file holds {} tensors, network has {} layers",
                                        tensors.size(), net.depth()));
  std::vector<Eigen::MatrixXd> layers;
  for (std::size_t l = 0; l < tensors.size(); ++l) {
    const auto& t = tensors[l];
    const auto rows = net.layers[l].matrix_rows();
    const auto cols = net.layers[l].matrix_cols();
    if (t.dims.size() != 2 || t.dims[0] != rows || t.dims[1] != cols)
      throw TensorFormatError(fmt::format("weight tensor {} must be {}x{}", l + 1, rows, cols));
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        w(r, c) = t.data[static_cast<std::size_t>(r * cols + c)];
    layers.push_back(std::move(w));
  }
  return WeightSet<double>(std::move(layers));
}

std::vector<Tensor> tensors_from_weights(const WeightSet<double>& weights) {
  std::vector<Tensor> out;
  for (const auto& w : weights) {
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(w.rows()), static_cast<std::uint32_t>(w.cols())};
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) t.data.push_back(static_cast<float>(w(r, c)));
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Eigen::VectorXd> images_from_tensors(const NetworkSpec& net,
                                                 const std::vector<Tensor>& tensors) {
  const auto n = static_cast<std::size_t>(net.input.count());
  std::vector<Eigen::VectorXd> images;
  for (const auto& t : tensors) {
    if (t.data.size() % n != 0)
      throw TensorFormatError(fmt::format("input tensor of {} values is not a multiple of the "
                                          "input size {}", t.data.size(), n));
    for (std::size_t start = 0; start < t.data.size(); start += n) {
      Eigen::VectorXd img(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) img(static_cast<Eigen::Index>(i)) = t.data[start + i];
      images.push_back(std::move(img));
    }
  }
  return images;
}

}  // namespace a3
