#pragma once

#include <cstdint>
#include <filesystem>

#include "photoseq/nn/autograd.hpp"
#include "photoseq/nn/parameters.hpp"

namespace photoseq::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are kept as parameter sets mirroring
/// the optimised parameters so they can be checkpointed with the same
/// container format.
class Adam {
 public:
  explicit Adam(const ParameterSet& params, AdamConfig cfg = {});

  /// Applies one update using the gradients accumulated on `tape`.
  /// Parameters without a gradient are left untouched.
  void step(ParameterSet& params, const Tape& tape, double lr);

  std::int64_t steps() const { return steps_; }
  const ParameterSet& first_moment() const { return m_; }
  const ParameterSet& second_moment() const { return v_; }

  void save(const std::filesystem::path& stem) const;
  void load(const std::filesystem::path& stem);

 private:
  AdamConfig cfg_;
  ParameterSet m_;
  ParameterSet v_;
  std::int64_t steps_ = 0;
};

}  // namespace photoseq::nn
