#include "photoseq/decomposer_net.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "json_util.hpp"
#include "photoseq/errors.hpp"
#include "photoseq/tensor_image.hpp"

namespace photoseq {

namespace fs = std::filesystem;
using nn::Tape;
using nn::Var;

void NetworkConfig::validate() const {
  for (int c : trunk_channels) {
    if (c < 2 || c % 2 != 0) throw ConfigError("network: trunk widths must be even and >= 2");
  }
  if (short_head_channels < 1 || long_head_channels < 1 ||
      2 * short_head_channels + long_head_channels != trunk_channels[0]) {
    throw ConfigError("network: 2 * short_head_channels + long_head_channels must equal the "
                      "first trunk width");
  }
  if (resblock_convs < 1) throw ConfigError("network: resblock_convs must be >= 1");
  if (head_kernel < 1 || head_kernel % 2 == 0 || kernel < 1 || kernel % 2 == 0) {
    throw ConfigError("network: conv kernels must be odd");
  }
  if (transpose_kernel != 4) throw ConfigError("network: transpose_kernel must be 4 (stride 2, pad 1)");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) {
    throw ConfigError("network: leaky_slope must lie in [0, 1)");
  }
}

std::string NetworkConfig::canonical() const {
  std::ostringstream s;
  s << "photoseq-net/v1 short=" << short_head_channels << " long=" << long_head_channels
    << " trunk=";
  for (std::size_t i = 0; i < trunk_channels.size(); ++i) s << (i ? "," : "") << trunk_channels[i];
  char slope[32];
  std::snprintf(slope, sizeof(slope), "%.9g", leaky_slope);
  s << " resconvs=" << resblock_convs << " head_k=" << head_kernel << " k=" << kernel
    << " tk=" << transpose_kernel << " slope=" << slope;
  return s.str();
}

std::uint64_t NetworkConfig::fingerprint() const {
  const std::string c = canonical();
  return nn::fnv1a(c.data(), c.size());
}

NetworkConfig NetworkConfig::scaled(int divisor) {
  NetworkConfig c;
  if (divisor < 1 || 16 % divisor != 0) {
    throw ConfigError("network: width divisor must divide 16");
  }
  c.short_head_channels /= divisor;
  c.long_head_channels /= divisor;
  for (auto& t : c.trunk_channels) t /= divisor;
  return c;
}

const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv:
      return "Conv";
    case LayerKind::ResBlock:
      return "ResB";
    case LayerKind::ConvTranspose:
      return "ConvT";
  }
  return "?";
}

const char* to_string(Activation a) {
  return a == Activation::LeakyReLU ? "LeakyReLU" : "RescaledTanh";
}

DecomposerNet::DecomposerNet(NetworkConfig config) : config_(config) { config_.validate(); }

std::vector<LayerInfo> DecomposerNet::layers() const {
  const auto& t = config_.trunk_channels;
  const int k = config_.kernel, pad = k / 2;
  const int hk = config_.head_kernel, hpad = hk / 2;
  const int tk = config_.transpose_kernel;
  constexpr auto LR = Activation::LeakyReLU;
  std::vector<LayerInfo> L;
  L.push_back({"ip1", LayerKind::Conv, 3, config_.short_head_channels, hk, hpad, 1, LR});
  L.push_back({"ip2", LayerKind::Conv, 3, config_.long_head_channels, hk, hpad, 1, LR});
  int id = 1;
  auto name = [&id] { return std::to_string(id++); };
  for (int stage = 0; stage < 5; ++stage) {
    const int blocks = stage == 4 ? 1 : 2;
    for (int b = 0; b < blocks; ++b) L.push_back({name(), LayerKind::ResBlock, t[stage], t[stage], k, pad, 1, LR});
    if (stage < 4) L.push_back({name(), LayerKind::Conv, t[stage], t[stage + 1], k, pad, 2, LR});
  }
  for (int stage = 3; stage >= 0; --stage) {
    L.push_back({name(), LayerKind::ConvTranspose, t[stage + 1], t[stage] / 2, tk, 1, 2, LR});
    for (int b = 0; b < 2; ++b) L.push_back({name(), LayerKind::ResBlock, t[stage], t[stage], k, pad, 1, LR});
  }
  L.push_back({"op1", LayerKind::Conv, t[0], 3, k, pad, 1, Activation::RescaledTanh});
  L.push_back({"op2", LayerKind::Conv, t[0], 3, k, pad, 1, Activation::RescaledTanh});
  for (int stage = 3; stage >= 0; --stage) {
    L.push_back({name(), LayerKind::Conv, t[stage], t[stage] / 2, k, pad, 1, LR});
  }
  return L;
}

std::vector<LayerInfo> DecomposerNet::conv_layers() const {
  std::vector<LayerInfo> out;
  for (const auto& l : layers()) {
    if (l.kind != LayerKind::ResBlock) {
      out.push_back(l);
      continue;
    }
    for (int d = 1; d <= config_.resblock_convs; ++d) {
      out.push_back({l.name + ".d" + std::to_string(d), LayerKind::Conv, l.channels_in,
                     l.channels_in, l.kernel, l.pad, 1, Activation::LeakyReLU});
    }
  }
  return out;
}

Weights DecomposerNet::init_weights(std::uint64_t seed) const {
  Weights w;
  w.config = config_;
  w.config_fingerprint = config_.fingerprint();
  for (const auto& l : conv_layers()) {
    std::vector<int> shape = l.kind == LayerKind::ConvTranspose
                                 ? std::vector<int>{l.channels_in, l.channels_out, l.kernel, l.kernel}
                                 : std::vector<int>{l.channels_out, l.channels_in, l.kernel, l.kernel};
    w.params.add(l.name + ".weight", std::move(shape));
    w.params.add(l.name + ".bias", {l.channels_out});
  }
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < w.params.size(); i += 2) {
    auto& weight = w.params[i];
    auto& bias = w.params[i + 1];
    const float bound = 1.0f / std::sqrt(static_cast<float>(weight.fan_in()));
    std::uniform_real_distribution<float> u(-bound, bound);
    for (float& v : weight.value) v = u(rng);
    for (float& v : bias.value) v = u(rng);
  }
  return w;
}

void DecomposerNet::check_weights(const Weights& w) const {
  if (w.version != Weights::kVersion) {
    throw WeightError("weights version " + std::to_string(w.version) + " is not supported");
  }
  if (w.config_fingerprint != config_.fingerprint() || !(w.config == config_)) {
    throw WeightError("weights were built for a different network configuration");
  }
  const auto layer_list = conv_layers();
  if (w.params.size() != 2 * layer_list.size()) {
    throw WeightError("weights hold " + std::to_string(w.params.size()) + " tensors, expected " +
                      std::to_string(2 * layer_list.size()));
  }
  for (const auto& l : layer_list) {
    const auto& weight = w.params.at(l.name + ".weight");
    const auto& bias = w.params.at(l.name + ".bias");
    const std::vector<int> expect =
        l.kind == LayerKind::ConvTranspose
            ? std::vector<int>{l.channels_in, l.channels_out, l.kernel, l.kernel}
            : std::vector<int>{l.channels_out, l.channels_in, l.kernel, l.kernel};
    if (weight.shape != expect || bias.shape != std::vector<int>{l.channels_out}) {
      throw WeightError("parameter shapes of layer '" + l.name + "' do not match the config");
    }
  }
}

Var DecomposerNet::conv(Tape& tape, const Weights& w, const std::string& name, const Var& x,
                        int stride, int pad) const {
  const auto& weight = w.params.at(name + ".weight");
  const auto& bias = w.params.at(name + ".bias");
  return nn::leaky_relu(tape, nn::conv2d(tape, x, weight, &bias, stride, pad),
                        static_cast<float>(config_.leaky_slope));
}

// Dense residual block: conv k sees the block input plus every earlier conv
// output; the block returns input + last conv output.
Var DecomposerNet::res_block(Tape& tape, const Weights& w, const std::string& name,
                             const Var& x) const {
  const int pad = config_.kernel / 2;
  Var running = x;
  Var last;
  for (int d = 1; d <= config_.resblock_convs; ++d) {
    last = conv(tape, w, name + ".d" + std::to_string(d), running, 1, pad);
    if (d < config_.resblock_convs) running = nn::add(tape, running, last);
  }
  return nn::add(tape, x, last);
}

NetOutputs DecomposerNet::forward(Tape& tape, const Weights& w, const Var& short_pre,
                                  const Var& long_exposure, const Var& short_post) const {
  const Var* inputs[] = {&short_pre, &long_exposure, &short_post};
  for (const Var* v : inputs) {
    const auto& t = (*v)->value;
    if (t.channels() != 3 || !t.same_shape(long_exposure->value)) {
      throw ShapeError("decomposer: inputs must be three equally sized 3-channel batches");
    }
    if (t.height() % NetworkConfig::kSpatialMultiple != 0 ||
        t.width() % NetworkConfig::kSpatialMultiple != 0) {
      throw ShapeError("decomposer: input size " + std::to_string(t.height()) + "x" +
                       std::to_string(t.width()) + " is not divisible by 16");
    }
  }
  const int k = config_.kernel, pad = k / 2;
  const int hpad = config_.head_kernel / 2;

  // Both shorts go through the same head parameters.
  const Var pre = conv(tape, w, "ip1", short_pre, 1, hpad);
  const Var post = conv(tape, w, "ip1", short_post, 1, hpad);
  const Var lng = conv(tape, w, "ip2", long_exposure, 1, hpad);
  const Var heads = nn::concat_channels(tape, std::array<Var, 3>{pre, post, lng});

  // Encoder. Layer ids follow the table: ResB 1,2 | conv 3 | ResB 4,5 | ...
  Var x = res_block(tape, w, "1", heads);
  x = res_block(tape, w, "2", x);
  x = conv(tape, w, "3", x, 2, pad);
  x = res_block(tape, w, "4", x);
  const Var e2 = res_block(tape, w, "5", x);
  x = conv(tape, w, "6", e2, 2, pad);
  x = res_block(tape, w, "7", x);
  const Var e3 = res_block(tape, w, "8", x);
  x = conv(tape, w, "9", e3, 2, pad);
  x = res_block(tape, w, "10", x);
  const Var e4 = res_block(tape, w, "11", x);
  x = conv(tape, w, "12", e4, 2, pad);
  x = res_block(tape, w, "13", x);

  // Decoder: transpose conv, carry-on conv on the skip, concat, two ResBs.
  struct Stage {
    const char* up;
    const char* carry;
    const char* rb1;
    const char* rb2;
    Var skip;
  };
  const Stage stages[] = {{"14", "26", "15", "16", e4},
                          {"17", "27", "18", "19", e3},
                          {"20", "28", "21", "22", e2},
                          {"23", "29", "24", "25", heads}};
  for (const auto& s : stages) {
    const auto& wt = w.params.at(std::string(s.up) + ".weight");
    const auto& bt = w.params.at(std::string(s.up) + ".bias");
    const Var up = nn::leaky_relu(tape, nn::conv_transpose2d(tape, x, wt, &bt, 2, 1),
                                  static_cast<float>(config_.leaky_slope));
    const Var carried = conv(tape, w, s.carry, s.skip, 1, pad);
    x = nn::concat_channels(tape, std::array<Var, 2>{up, carried});
    x = res_block(tape, w, s.rb1, x);
    x = res_block(tape, w, s.rb2, x);
  }

  // op1 is shared by both halves: the second half sees the feature map with
  // its two channel halves exchanged.
  const int half = config_.trunk_channels[0] / 2;
  const Var swapped = nn::concat_channels(
      tape, std::array<Var, 2>{nn::slice_channels(tape, x, half, half),
                               nn::slice_channels(tape, x, 0, half)});
  auto out_layer = [&](const char* name, const Var& in) {
    const auto& wt = w.params.at(std::string(name) + ".weight");
    const auto& bt = w.params.at(std::string(name) + ".bias");
    return nn::rescaled_tanh(tape, nn::conv2d(tape, in, wt, &bt, 1, pad));
  };
  NetOutputs out;
  out.first_half = out_layer("op1", x);
  out.second_half = out_layer("op1", swapped);
  out.mid_sharp = out_layer("op2", x);
  return out;
}

DecompositionTriple forward(const ExposureTriplet& triplet, const Weights& weights) {
  triplet.validate();
  DecomposerNet net(weights.config);
  net.check_weights(weights);
  Tape tape(false);
  const auto out = net.forward(tape, weights, tape.constant(to_tensor(triplet.short_pre)),
                               tape.constant(to_tensor(triplet.long_exposure)),
                               tape.constant(to_tensor(triplet.short_post)));
  DecompositionTriple d;
  d.first_half = image_from_tensor(out.first_half->value, 0);
  d.mid_sharp = image_from_tensor(out.mid_sharp->value, 0);
  d.second_half = image_from_tensor(out.second_half->value, 0);
  d.n1 = d.n2 = (triplet.n_frames_long - 1) / 2;
  return d;
}

Weights init_weights(const NetworkConfig& config, std::uint64_t seed) {
  return DecomposerNet(config).init_weights(seed);
}

namespace detail {

nlohmann::ordered_json network_to_json(const NetworkConfig& c) {
  nlohmann::ordered_json j;
  j["short_head_channels"] = c.short_head_channels;
  j["long_head_channels"] = c.long_head_channels;
  j["trunk_channels"] = c.trunk_channels;
  j["resblock_convs"] = c.resblock_convs;
  j["head_kernel"] = c.head_kernel;
  j["kernel"] = c.kernel;
  j["transpose_kernel"] = c.transpose_kernel;
  j["leaky_slope"] = c.leaky_slope;
  return j;
}

NetworkConfig network_from_json(const nlohmann::json& j, NetworkConfig c, const std::string& section) {
  StrictObject o(j, section);
  o.get("short_head_channels", c.short_head_channels);
  o.get("long_head_channels", c.long_head_channels);
  o.get("trunk_channels", c.trunk_channels);
  o.get("resblock_convs", c.resblock_convs);
  o.get("head_kernel", c.head_kernel);
  o.get("kernel", c.kernel);
  o.get("transpose_kernel", c.transpose_kernel);
  o.get("leaky_slope", c.leaky_slope);
  o.finish();
  return c;
}

}  // namespace detail

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string weights_fingerprint_hex(const Weights& w) { return hex64(w.params.content_hash()); }

void save_weights(const fs::path& path, const Weights& w) {
  DecomposerNet(w.config).check_weights(w);
  nn::write_container(path, w.params, {w.version, w.config_fingerprint});
  nlohmann::ordered_json side;
  side["format"] = "photoseq-weights";
  side["version"] = w.version;
  side["config_fingerprint"] = hex64(w.config_fingerprint);
  side["config_canonical"] = w.config.canonical();
  side["network"] = detail::network_to_json(w.config);
  side["parameter_hash"] = weights_fingerprint_hex(w);
  std::ofstream out(path.string() + ".json");
  if (!out) throw DataError("cannot write weight sidecar for '" + path.string() + "'");
  out << side.dump(2) << "\n";
}

Weights load_weights(const fs::path& path, const std::optional<NetworkConfig>& expected) {
  const fs::path sidecar = path.string() + ".json";
  std::ifstream in(sidecar);
  if (!in) throw WeightError("weight sidecar '" + sidecar.string() + "' not found");
  Weights w;
  try {
    nlohmann::json side;
    in >> side;
    w.config = detail::network_from_json(side.at("network"));
    if (side.at("config_fingerprint").get<std::string>() != hex64(w.config.fingerprint())) {
      throw WeightError("sidecar '" + sidecar.string() + "' fingerprint does not match its config");
    }
  } catch (const nlohmann::json::exception& e) {
    throw WeightError("malformed weight sidecar '" + sidecar.string() + "': " + e.what());
  } catch (const ConfigError& e) {
    throw WeightError("malformed weight sidecar '" + sidecar.string() + "': " + e.what());
  }
  nn::ContainerHeader header;
  w.params = nn::read_container(path, &header);
  w.version = header.version;
  w.config_fingerprint = header.fingerprint;
  if (expected && !(*expected == w.config)) {
    throw WeightError("'" + path.string() + "' was trained for a different network config (" +
                      w.config.canonical() + ")");
  }
  DecomposerNet(w.config).check_weights(w);
  return w;
}

}  // namespace photoseq
