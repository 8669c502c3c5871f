#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "resp/keyframes.hpp"

namespace testing {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "resp") {
    static std::atomic<int> serial{0};
    path_ = fs::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(serial.fetch_add(1)));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline fs::path data_dir() { return RESP_TEST_DATA_DIR; }

/// A usable decoder binary, or empty when none is installed.
inline std::string find_decoder() {
  try {
    return resp::keyframes::resolve_decoder("").string();
  } catch (const std::exception&) {
  }
  const std::string hint = RESP_FFMPEG_HINT;
  if (!hint.empty() && fs::exists(hint)) return hint;
  return {};
}

}  // namespace testing
