#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "xlp/embedding.hpp"

namespace xlp::test {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(XLP_FIXTURES) / name; }
inline std::filesystem::path support(const std::string& name) { return std::filesystem::path(XLP_SUPPORT) / name; }

inline std::string adapter_command(const std::string& args = "") {
  std::string cmd = std::string(XLP_PYTHON) + " " + support("fake_adapter.py").string();
  if (!args.empty()) cmd += " " + args;
  return cmd;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("xlp-test-" + std::to_string(rng()));
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

// Encoder with hand-placed vectors keyed by text.
class TableEncoder final : public Encoder {
 public:
  TableEncoder(std::string name, size_t dim) : name_(std::move(name)), dim_(dim) {}
  void set(const std::string& text, std::vector<float> v) { table_[text] = std::move(v); }

  std::string name() const override { return name_; }
  size_t dim() const override { return dim_; }
  EmbeddingVector encode(std::string_view text, std::string_view) const override {
    const auto it = table_.find(std::string(text));
    if (it == table_.end()) throw std::out_of_range("TableEncoder: " + std::string(text));
    return {it->second};
  }
  using Encoder::encode;

 private:
  std::string name_;
  size_t dim_;
  std::map<std::string, std::vector<float>> table_;
};

}  // namespace xlp::test
