#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace photoseq::nn {

struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;

  std::size_t numel() const { return value.size(); }
  /// Product of all dims but the first: the fan-in of a conv weight.
  std::size_t fan_in() const;
};

/// Ordered, named collection of trainable tensors.
class ParameterSet {
 public:
  /// Registers a zero-initialised parameter; names must be unique.
  std::size_t add(std::string name, std::vector<int> shape);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  const Parameter& at(const std::string& name) const;
  Parameter& at(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t total_numel() const;
  /// FNV-1a over names, shapes and raw float bytes.
  std::uint64_t content_hash() const;
  bool operator==(const ParameterSet& o) const;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Header of a weight container file.
struct ContainerHeader {
  std::uint32_t version = 1;
  std::uint64_t fingerprint = 0;
};

/// Binary container: magic "PSQW", version, fingerprint, then per parameter
/// its name, shape and little-endian float32 data.
void write_container(const std::filesystem::path& path, const ParameterSet& params,
                     const ContainerHeader& header);
ParameterSet read_container(const std::filesystem::path& path, ContainerHeader* header = nullptr);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace photoseq::nn
