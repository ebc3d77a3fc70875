#include "photoseq/nn/adam.hpp"

#include <cmath>

#include "photoseq/errors.hpp"

namespace photoseq::nn {

Adam::Adam(const ParameterSet& params, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& p : params) {
    m_.add(p.name, p.shape);
    v_.add(p.name, p.shape);
  }
}

void Adam::step(ParameterSet& params, const Tape& tape, double lr) {
  if (params.size() != m_.size()) throw WeightError("optimizer state does not match parameters");
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  const auto b1 = static_cast<float>(cfg_.beta1);
  const auto b2 = static_cast<float>(cfg_.beta2);
  const auto step_size = static_cast<float>(lr / bc1);
  const auto inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const auto eps = static_cast<float>(cfg_.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::vector<float>* g = tape.grad_of(params[i]);
    if (!g) continue;
    float* p = params[i].value.data();
    float* m = m_[i].value.data();
    float* v = v_[i].value.data();
    for (std::size_t k = 0; k < g->size(); ++k) {
      const float gk = (*g)[k];
      m[k] = b1 * m[k] + (1.0f - b1) * gk;
      v[k] = b2 * v[k] + (1.0f - b2) * gk * gk;
      p[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_bc2 + eps);
    }
  }
}

void Adam::save(const std::filesystem::path& stem) const {
  const auto steps = static_cast<std::uint64_t>(steps_);
  write_container(stem.string() + ".adam_m", m_, {1, steps});
  write_container(stem.string() + ".adam_v", v_, {1, steps});
}

void Adam::load(const std::filesystem::path& stem) {
  ContainerHeader hm, hv;
  ParameterSet m = read_container(stem.string() + ".adam_m", &hm);
  ParameterSet v = read_container(stem.string() + ".adam_v", &hv);
  if (m.size() != m_.size() || v.size() != v_.size() || hm.fingerprint != hv.fingerprint) {
    throw WeightError("optimizer checkpoint '" + stem.string() + "' does not match parameters");
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].name != m_[i].name || m[i].shape != m_[i].shape) {
      throw WeightError("optimizer checkpoint '" + stem.string() + "' does not match parameters");
    }
  }
  m_ = std::move(m);
  v_ = std::move(v);
  steps_ = static_cast<std::int64_t>(hm.fingerprint);
}

}  // namespace photoseq::nn
