#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "terraexpr/checkpoint.hpp"

namespace testing_support {

inline std::filesystem::path golden_path(const std::string& name) {
  return std::filesystem::path(TERRAEXPR_GOLDEN_DIR) / name;
}

// With TERRAEXPR_REGEN_GOLDEN=1 the file is rewritten from `actual`.
template <typename T>
terraexpr::BasicTensor<T> golden_tensor(const std::string& name, const terraexpr::BasicTensor<T>& actual) {
  const auto path = golden_path(name);
  const char* regen = std::getenv("TERRAEXPR_REGEN_GOLDEN");
  if ((regen && std::string(regen) == "1") || !std::filesystem::exists(path)) {
    terraexpr::write_tensor(path, actual);
  }
  return terraexpr::read_tensor<T>(path);
}

// Text counterpart of golden_tensor.
inline std::string golden_text(const std::string& name, const std::string& actual) {
  const auto path = golden_path(name);
  const char* regen = std::getenv("TERRAEXPR_REGEN_GOLDEN");
  if ((regen && std::string(regen) == "1") || !std::filesystem::exists(path)) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream(path, std::ios::binary) << actual;
  }
  std::ifstream in(path, std::ios::binary);
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

}  // namespace testing_support
