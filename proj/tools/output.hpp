#pragma once

// Output helpers for the CLI: round-trip number formatting and atomic file
// writes (temp file + rename) performed only after every result is computed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dopt::cli {

inline std::string fmt17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Files staged in memory and committed together.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::string add(const std::string& name, std::string content) {
    const std::filesystem::path path = dir_ / name;
    files_.emplace_back(path, std::move(content));
    return path.string();
  }

  void commit() const {
    std::filesystem::create_directories(dir_);
    for (const auto& [path, content] : files_) {
      std::filesystem::path tmp = path;
      tmp += ".tmp";
      {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << content;
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
      }
      std::filesystem::rename(tmp, path);
    }
  }

  std::vector<std::string> paths() const {
    std::vector<std::string> out;
    for (const auto& f : files_) out.push_back(f.first.string());
    return out;
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::filesystem::path, std::string>> files_;
};

}  // namespace dopt::cli
