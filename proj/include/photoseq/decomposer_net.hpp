#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "photoseq/imaging_model.hpp"
#include "photoseq/nn/autograd.hpp"
#include "photoseq/nn/parameters.hpp"

namespace photoseq {

/// Channel plan of the blur-decomposition U-net.
///
/// Three input heads (one shared by both shorts) feed a 5-stage encoder of
/// dense residual blocks separated by stride-2 convs; the decoder mirrors it
/// with 4x4 stride-2 transpose convs and carry-on convs on every skip. The
/// default is the full-size network; `scaled(d)` divides every width
/// by d for desk-scale experiments.
struct NetworkConfig {
  int short_head_channels = 16;
  int long_head_channels = 32;
  std::array<int, 5> trunk_channels{64, 128, 256, 512, 1024};
  int resblock_convs = 4;
  int head_kernel = 7;
  int kernel = 3;
  int transpose_kernel = 4;
  double leaky_slope = 0.2;

  /// Input height/width must be a multiple of this.
  static constexpr int kSpatialMultiple = 16;

  void validate() const;
  /// Stable textual form; the fingerprint hashes it.
  std::string canonical() const;
  std::uint64_t fingerprint() const;
  static NetworkConfig scaled(int divisor);
  bool operator==(const NetworkConfig&) const = default;
};

enum class LayerKind { Conv, ResBlock, ConvTranspose };
enum class Activation { LeakyReLU, RescaledTanh };

/// One row of the architecture listing.
struct LayerInfo {
  std::string name;
  LayerKind kind;
  int channels_in;
  int channels_out;
  int kernel;
  int pad;
  int stride;
  Activation activation;
};

const char* to_string(LayerKind k);
const char* to_string(Activation a);

/// Named parameters plus the config they were built for.
struct Weights {
  static constexpr std::uint32_t kVersion = 1;

  NetworkConfig config;
  nn::ParameterSet params;
  std::uint32_t version = kVersion;
  std::uint64_t config_fingerprint = 0;
};

struct NetOutputs {
  nn::Var first_half;
  nn::Var mid_sharp;
  nn::Var second_half;
};

class DecomposerNet {
 public:
  explicit DecomposerNet(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }

  /// Top-level layers in table order (ip1, ip2, 1..25, op1, op2, 26..29).
  std::vector<LayerInfo> layers() const;
  /// Every convolution including the ones inside residual blocks.
  std::vector<LayerInfo> conv_layers() const;

  /// Fan-in-scaled uniform init: weights and biases ~ U(-1/sqrt(fan_in), +).
  Weights init_weights(std::uint64_t seed) const;
  /// Throws WeightError unless names, shapes and fingerprint match this net.
  void check_weights(const Weights& w) const;

  /// Batched forward on 3 x N x H x W inputs.
  NetOutputs forward(nn::Tape& tape, const Weights& w, const nn::Var& short_pre,
                     const nn::Var& long_exposure, const nn::Var& short_post) const;

 private:
  nn::Var conv(nn::Tape& tape, const Weights& w, const std::string& name, const nn::Var& x,
               int stride, int pad) const;
  nn::Var res_block(nn::Tape& tape, const Weights& w, const std::string& name,
                    const nn::Var& x) const;

  NetworkConfig config_;
};

/// Inference on one triplet. Outputs lie in [0,1]; n1 = n2 = (N-1)/2.
DecompositionTriple forward(const ExposureTriplet& triplet, const Weights& weights);

Weights init_weights(const NetworkConfig& config, std::uint64_t seed);

/// Container file at `path`, config sidecar at `path` + ".json".
void save_weights(const std::filesystem::path& path, const Weights& w);
/// Loads and verifies the fingerprint; with `expected`, also requires that config.
Weights load_weights(const std::filesystem::path& path,
                     const std::optional<NetworkConfig>& expected = std::nullopt);

/// Hash of parameter contents, for provenance manifests.
std::string weights_fingerprint_hex(const Weights& w);

}  // namespace photoseq
