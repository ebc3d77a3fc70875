#include "photoseq/nn/parameters.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include "photoseq/errors.hpp"

namespace photoseq::nn {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "weight containers are written in native little-endian order");

std::size_t Parameter::fan_in() const {
  if (shape.size() < 2) return 1;
  return std::accumulate(shape.begin() + 1, shape.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t ParameterSet::add(std::string name, std::vector<int> shape) {
  if (index_.count(name)) throw WeightError("duplicate parameter name '" + name + "'");
  std::size_t numel = 1;
  for (int d : shape) {
    if (d < 1) throw WeightError("parameter '" + name + "' has a non-positive dimension");
    numel *= static_cast<std::size_t>(d);
  }
  index_[name] = params_.size();
  params_.push_back(Parameter{std::move(name), std::move(shape), std::vector<float>(numel, 0.0f)});
  return params_.size() - 1;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw WeightError("no parameter named '" + name + "'");
  return it->second;
}

const Parameter& ParameterSet::at(const std::string& name) const { return params_[index_of(name)]; }
Parameter& ParameterSet::at(const std::string& name) { return params_[index_of(name)]; }

std::size_t ParameterSet::total_numel() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t ParameterSet::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params_) {
    h = fnv1a(p.name.data(), p.name.size(), h);
    h = fnv1a(p.shape.data(), p.shape.size() * sizeof(int), h);
    h = fnv1a(p.value.data(), p.value.size() * sizeof(float), h);
  }
  return h;
}

bool ParameterSet::operator==(const ParameterSet& o) const {
  if (params_.size() != o.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& a = params_[i];
    const auto& b = o.params_[i];
    if (a.name != b.name || a.shape != b.shape) return false;
    if (std::memcmp(a.value.data(), b.value.data(), a.value.size() * sizeof(float)) != 0) {
      return false;
    }
  }
  return true;
}

namespace {

constexpr char kMagic[4] = {'P', 'S', 'Q', 'W'};

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const fs::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw WeightError("truncated weight container '" + path.string() + "'");
  }
  return v;
}

}  // namespace

void write_container(const fs::path& path, const ParameterSet& params,
                     const ContainerHeader& header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write weight container '" + path.string() + "'");
  out.write(kMagic, 4);
  put(out, header.version);
  put(out, header.fingerprint);
  put(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put(out, static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) put(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing weight container '" + path.string() + "'");
}

ParameterSet read_container(const fs::path& path, ContainerHeader* header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open weight container '" + path.string() + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw WeightError("'" + path.string() + "' is not a weight container");
  }
  ContainerHeader h;
  h.version = get<std::uint32_t>(in, path);
  h.fingerprint = get<std::uint64_t>(in, path);
  const auto count = get<std::uint32_t>(in, path);
  ParameterSet params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(in, path);
    if (name_len > 4096) throw WeightError("corrupt parameter name in '" + path.string() + "'");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto ndim = get<std::uint32_t>(in, path);
    if (ndim > 8) throw WeightError("corrupt parameter rank in '" + path.string() + "'");
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(get<std::uint32_t>(in, path));
    auto& p = params[params.add(std::move(name), std::move(shape))];
    if (!in.read(reinterpret_cast<char*>(p.value.data()),
                 static_cast<std::streamsize>(p.value.size() * sizeof(float)))) {
      throw WeightError("truncated weight container '" + path.string() + "'");
    }
  }
  if (header) *header = h;
  return params;
}

}  // namespace photoseq::nn
