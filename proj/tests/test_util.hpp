#pragma once

#include <filesystem>
#include <string>

namespace testutil {

// Fresh directory under the build tree.
inline std::string scratch(const std::string& name) {
  const auto dir = std::filesystem::path(TGCFA_TEST_WORK) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

inline std::string data_path(const std::string& rel) {
  return (std::filesystem::path(TGCFA_SOURCE_DIR) / "data" / rel).string();
}

}  // namespace testutil
