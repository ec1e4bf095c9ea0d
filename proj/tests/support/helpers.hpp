#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "lmscore/fixture.hpp"

namespace testing {

inline lmscore::LanguageModel fixture(lmscore::Architecture arch, std::uint64_t seed = 42,
                                      lmscore::FixtureInit init = lmscore::FixtureInit::random,
                                      std::size_t vocab_size = 32) {
  lmscore::FixtureOptions o;
  o.config.architecture = arch;
  o.config.vocab_size = vocab_size;
  o.seed = seed;
  o.init = init;
  return lmscore::make_fixture(o);
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("lmscore-" + tag + "-" + std::to_string(rd()));
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

}  // namespace testing
