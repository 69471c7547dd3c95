// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "codedst/corpus.hpp"
#include "codedst/schema.hpp"

namespace codedst::testing {

inline std::filesystem::path fixture_path(const std::string& name) {
  return std::filesystem::path(CODEDST_FIXTURE_DIR) / name;
}

inline const CanonicalSchema& fixture_schema() {
  static const CanonicalSchema schema = load_schema(fixture_path("schema.json"));
  return schema;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("codedst-test-" + std::to_string(rd()) + std::to_string(rd()));
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

}  // namespace codedst::testing
