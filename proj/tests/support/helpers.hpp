#pragma once

#include <cstdint>
#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include <doctest.h>

#include "mpa/error.hpp"
#include "mpa/types.hpp"

namespace mpa::test {

inline EmbeddingVector vec(std::vector<double> v) { return EmbeddingVector(std::move(v)); }

/// Runs `fn` and returns the ErrorKind it threw; fails the test if nothing or
/// something else was thrown.
template <typename Fn>
ErrorKind error_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  } catch (const std::exception& e) {
    FAIL("unexpected exception: " << e.what());
  }
  FAIL("no exception thrown");
  return ErrorKind::InvalidArgument;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mpa-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace mpa::test
