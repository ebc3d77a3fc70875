#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "photoseq/costs.hpp"
#include "photoseq/dataset_builder.hpp"
#include "photoseq/decomposer_net.hpp"
#include "photoseq/discriminator.hpp"
#include "photoseq/feature_extractor.hpp"

namespace photoseq {

struct LossWeights {
  double lambda_sum = 1e-2;
  double lambda_perc = 3e-4;
  double lambda_adv = 1e-4;
  double lambda_grad = 1e-4;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

/// Adam with a staircase learning rate:
/// lr(it) = initial_lr * lr_decay_factor ^ floor(it / lr_decay_every).
struct TrainSchedule {
  std::int64_t total_iterations = 100000;
  double initial_lr = 1e-4;
  double lr_decay_factor = 0.1;
  std::int64_t lr_decay_every = 25000;
  int batch_size = 8;
  std::uint64_t seed = 0;

  /// Zero iterations is allowed (returns the input weights).
  void validate() const;
  double lr_at(std::int64_t iteration) const;
  bool operator==(const TrainSchedule&) const = default;
};

/// Batch-mean cost terms, already multiplied by their weights; `total` is
/// their sum.
struct CostTerms {
  double supervised = 0.0;
  double sum = 0.0;
  double perceptual = 0.0;
  double tv = 0.0;
  double adversarial = 0.0;
  double total = 0.0;
};

struct IterationRecord {
  std::int64_t iteration = 0;
  double lr = 0.0;
  CostTerms costs;
  double discriminator_loss = 0.0;
};

/// Indexed training samples. The trainer asks for index it*batch + b, so a
/// source that is a pure function of the index makes runs reproducible.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual TrainingSample sample(std::uint64_t index) const = 0;
};

/// Draws from a SampleGenerator with seeds derived from (seed, index).
class GeneratorSource : public SampleSource {
 public:
  GeneratorSource(const SampleGenerator& gen, std::uint64_t seed) : gen_(gen), seed_(seed) {}
  TrainingSample sample(std::uint64_t index) const override;

 private:
  const SampleGenerator& gen_;
  std::uint64_t seed_;
};

/// Cycles through a fixed list.
class FixedSampleSource : public SampleSource {
 public:
  explicit FixedSampleSource(std::vector<TrainingSample> samples);
  TrainingSample sample(std::uint64_t index) const override;
  const std::vector<TrainingSample>& samples() const { return samples_; }

 private:
  std::vector<TrainingSample> samples_;
};

struct TrainOptions {
  LossWeights loss;
  TrainSchedule schedule;
  /// Required when loss.lambda_perc > 0.
  const FeatureExtractor* extractor = nullptr;
  DiscriminatorConfig discriminator;

  /// CSV log (appended); empty disables logging.
  std::filesystem::path log_path;
  std::int64_t log_every = 100;
  /// Checkpoint cadence in iterations; 0 disables periodic checkpoints.
  std::int64_t checkpoint_every = 0;
  /// Where checkpoints and NaN diagnostics go. Defaults to the log directory,
  /// then the working directory.
  std::filesystem::path checkpoint_dir;
  /// Checkpoint stem to resume from (weights, optimizer state, iteration).
  std::optional<std::filesystem::path> resume_from;
  /// Threads used to synthesize each batch.
  int workers = 1;
  /// Walk the schedule and write the log (zero costs) without drawing
  /// samples or touching the weights.
  bool dry_run = false;
  std::function<void(const IterationRecord&)> on_iteration;

  void validate() const;
};

/// Cost terms and their gradients for one batch of network outputs. Terms
/// with zero weight are skipped and contribute no gradient.
struct BatchCosts {
  CostTerms terms;
  std::vector<TripleGrad> grads;
};
BatchCosts compute_costs(const std::vector<DecompositionTriple>& preds,
                         const std::vector<TrainingSample>& batch, const LossWeights& weights,
                         const FeatureExtractor* extractor, Discriminator* discriminator,
                         double discriminator_lr, double* discriminator_loss);

/// Runs the optimisation loop from `initial` and returns the trained weights.
Weights train(const SampleSource& source, Weights initial, const TrainOptions& options);

/// Convenience: fresh weights from `config` (init seed derived from the
/// schedule seed) trained on samples of `gen`.
Weights train(const SampleGenerator& gen, const NetworkConfig& config, const TrainOptions& options);

/// Index in the model triple = number of noisy short inputs the model expects.
using ModelTriple = std::array<Weights, 3>;

/// Trains models for two, one and zero noisy shorts; result[k] expects k noisy
/// inputs. Log and checkpoint paths get a "-noisy<k>" suffix.
ModelTriple train_three_models(const SampleGenerator& gen, const NetworkConfig& config,
                               const TrainOptions& options);

/// File-name suffix used for the model expecting `noisy` noisy shorts.
std::string model_suffix(int noisy);

/// Reads the CSV log back as (iteration, lr) pairs.
std::vector<std::pair<std::int64_t, double>> read_lr_log(const std::filesystem::path& log_path);

}  // namespace photoseq
