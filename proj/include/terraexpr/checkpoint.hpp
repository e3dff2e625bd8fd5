#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "terraexpr/tensor.hpp"

// Binary tensor file, little-endian:
//   "TEXP" | u32 version | u32 rank | u64 extent * rank | u8 dtype | raw values
namespace terraexpr {

inline constexpr std::uint32_t kTensorFileVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TensorFileHeader {
  std::uint32_t version = kTensorFileVersion;
  Shape shape;
  DType dtype = DType::f64;
};

template <typename T>
void write_tensor(std::ostream& out, const BasicTensor<T>& tensor);
template <typename T>
void write_tensor(const std::filesystem::path& path, const BasicTensor<T>& tensor);

// The stored dtype must match T.
template <typename T>
BasicTensor<T> read_tensor(std::istream& in, bool requires_grad = false);
template <typename T>
BasicTensor<T> read_tensor(const std::filesystem::path& path, bool requires_grad = false);

TensorFileHeader read_tensor_header(std::istream& in);

}  // namespace terraexpr
