#include "terraexpr/checkpoint.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

namespace terraexpr {

namespace {

constexpr std::array<char, 4> kMagic{'T', 'E', 'X', 'P'};

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw CheckpointError("tensor file truncated");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

template <typename T>
using Bits = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;

}  // namespace

template <typename T>
void write_tensor(std::ostream& out, const BasicTensor<T>& tensor) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kTensorFileVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
  for (auto extent : tensor.shape()) put_le<std::uint64_t>(out, extent);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(dtype_traits<T>::code));
  for (T v : tensor.data()) put_le<Bits<T>>(out, std::bit_cast<Bits<T>>(v));
  if (!out) throw CheckpointError("failed writing tensor");
}

template <typename T>
void write_tensor(const std::filesystem::path& path, const BasicTensor<T>& tensor) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  write_tensor(out, tensor);
}

TensorFileHeader read_tensor_header(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw CheckpointError("not a tensor file (bad magic)");
  TensorFileHeader header;
  header.version = get_le<std::uint32_t>(in);
  if (header.version != kTensorFileVersion) {
    throw CheckpointError("unsupported tensor file version " + std::to_string(header.version));
  }
  const auto rank = get_le<std::uint32_t>(in);
  if (rank == 0) throw CheckpointError("tensor file with rank 0");
  for (std::uint32_t i = 0; i < rank; ++i) header.shape.push_back(get_le<std::uint64_t>(in));
  const auto code = get_le<std::uint8_t>(in);
  if (code > 1) throw CheckpointError("unknown dtype code " + std::to_string(code));
  header.dtype = static_cast<DType>(code);
  return header;
}

template <typename T>
BasicTensor<T> read_tensor(std::istream& in, bool requires_grad) {
  const auto header = read_tensor_header(in);
  if (header.dtype != dtype_traits<T>::code) {
    throw CheckpointError(std::string("tensor file dtype does not match requested ") +
                          dtype_traits<T>::name);
  }
  std::vector<T> values(shape_numel(header.shape));
  for (auto& v : values) v = std::bit_cast<T>(get_le<Bits<T>>(in));
  return BasicTensor<T>::from_data(header.shape, std::move(values), requires_grad);
}

template <typename T>
BasicTensor<T> read_tensor(const std::filesystem::path& path, bool requires_grad) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return read_tensor<T>(in, requires_grad);
}

template void write_tensor(std::ostream&, const BasicTensor<double>&);
template void write_tensor(std::ostream&, const BasicTensor<float>&);
template void write_tensor(const std::filesystem::path&, const BasicTensor<double>&);
template void write_tensor(const std::filesystem::path&, const BasicTensor<float>&);
template BasicTensor<double> read_tensor(std::istream&, bool);
template BasicTensor<float> read_tensor(std::istream&, bool);
template BasicTensor<double> read_tensor(const std::filesystem::path&, bool);
template BasicTensor<float> read_tensor(const std::filesystem::path&, bool);

}  // namespace terraexpr
