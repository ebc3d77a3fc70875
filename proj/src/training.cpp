#include "photoseq/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <sstream>

#include <json.hpp>

#include "photoseq/costs.hpp"
#include "photoseq/errors.hpp"
#include "photoseq/nn/adam.hpp"
#include "photoseq/tensor_image.hpp"

namespace photoseq {

namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void axpy(Image& dst, const Image& src, double s) {
  if (dst.empty()) dst = Image(src.height(), src.width());
  auto d = dst.values();
  const auto v = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * v[i];
}

void axpy(TripleGrad& dst, const TripleGrad& src, double s) {
  if (!src.first_half.empty()) axpy(dst.first_half, src.first_half, s);
  if (!src.mid_sharp.empty()) axpy(dst.mid_sharp, src.mid_sharp, s);
  if (!src.second_half.empty()) axpy(dst.second_half, src.second_half, s);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

bool finite(const CostTerms& c) {
  return std::isfinite(c.supervised) && std::isfinite(c.sum) && std::isfinite(c.perceptual) &&
         std::isfinite(c.tv) && std::isfinite(c.adversarial) && std::isfinite(c.total);
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {lambda_sum, lambda_perc, lambda_adv, lambda_grad}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("loss weights must be finite and >= 0");
  }
}

void TrainSchedule::validate() const {
  if (total_iterations < 0) throw ConfigError("schedule: total_iterations must be >= 0");
  if (!(initial_lr > 0.0)) throw ConfigError("schedule: initial_lr must be positive");
  if (!(lr_decay_factor > 0.0)) throw ConfigError("schedule: lr_decay_factor must be positive");
  if (lr_decay_every < 1) throw ConfigError("schedule: lr_decay_every must be positive");
  if (total_iterations > 0 && lr_decay_every > total_iterations) {
    throw ConfigError("schedule: lr_decay_every exceeds total_iterations");
  }
  if (batch_size < 1) throw ConfigError("schedule: batch_size must be positive");
}

double TrainSchedule::lr_at(std::int64_t iteration) const {
  if (iteration < 0) throw ArgumentError("lr_at: negative iteration");
  return initial_lr * std::pow(lr_decay_factor, static_cast<double>(iteration / lr_decay_every));
}

void TrainOptions::validate() const {
  loss.validate();
  schedule.validate();
  if (loss.lambda_perc > 0.0 && extractor == nullptr) {
    throw ConfigError("lambda_perc > 0 needs feature extractor weights; set lambda_perc to 0 to "
                      "train without the perceptual cost");
  }
  if (log_every < 1) throw ConfigError("log_every must be positive");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

TrainingSample GeneratorSource::sample(std::uint64_t index) const {
  return gen_.generate(splitmix(seed_ ^ splitmix(index)));
}

FixedSampleSource::FixedSampleSource(std::vector<TrainingSample> samples)
    : samples_(std::move(samples)) {
  if (samples_.empty()) throw ArgumentError("fixed sample source needs at least one sample");
}

TrainingSample FixedSampleSource::sample(std::uint64_t index) const {
  return samples_[index % samples_.size()];
}

BatchCosts compute_costs(const std::vector<DecompositionTriple>& preds,
                         const std::vector<TrainingSample>& batch, const LossWeights& w,
                         const FeatureExtractor* extractor, Discriminator* discriminator,
                         double discriminator_lr, double* discriminator_loss) {
  if (preds.size() != batch.size() || preds.empty()) {
    throw ArgumentError("compute_costs: prediction/batch size mismatch");
  }
  const double inv_b = 1.0 / static_cast<double>(preds.size());
  BatchCosts out;
  out.grads.resize(preds.size());
  CostTerms& t = out.terms;

  for (std::size_t b = 0; b < preds.size(); ++b) {
    const auto& pred = preds[b];
    const auto& s = batch[b];
    TripleGrad g;
    t.supervised += inv_b * supervised_cost(pred, s.target, &g);
    axpy(out.grads[b], g, inv_b);
    if (w.lambda_sum > 0.0) {
      TripleGrad gs;
      t.sum += w.lambda_sum * inv_b *
               sum_cost(pred, s.triplet.long_exposure, s.target.n1, s.target.n2, &gs);
      axpy(out.grads[b], gs, w.lambda_sum * inv_b);
    }
    if (w.lambda_grad > 0.0) {
      Image gt;
      t.tv += w.lambda_grad * inv_b * tv_cost(pred.mid_sharp, &gt);
      axpy(out.grads[b].mid_sharp, gt, w.lambda_grad * inv_b);
    }
  }

  if (w.lambda_perc > 0.0 || w.lambda_adv > 0.0) {
    std::vector<const Image*> fake_ptrs, real_ptrs;
    for (std::size_t b = 0; b < preds.size(); ++b) {
      fake_ptrs.push_back(&preds[b].mid_sharp);
      real_ptrs.push_back(&batch[b].target.mid_sharp);
    }
    const nn::Tensor fake = to_tensor(fake_ptrs);
    const nn::Tensor real = to_tensor(real_ptrs);
    nn::Tensor g(fake.channels(), fake.batch(), fake.height(), fake.width());
    if (w.lambda_perc > 0.0) {
      if (!extractor) throw ConfigError("lambda_perc > 0 needs a feature extractor");
      nn::Tensor gp;
      t.perceptual = w.lambda_perc * perceptual_cost(fake, real, *extractor, &gp);
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += static_cast<float>(w.lambda_perc) * gp.data()[i];
    }
    if (w.lambda_adv > 0.0) {
      if (!discriminator) throw ConfigError("lambda_adv > 0 needs a discriminator");
      const double dl = discriminator->train_step(real, fake, discriminator_lr);
      if (discriminator_loss) *discriminator_loss = dl;
      nn::Tensor ga;
      t.adversarial = w.lambda_adv * discriminator->generator_cost(fake, &ga);
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += static_cast<float>(w.lambda_adv) * ga.data()[i];
    }
    for (std::size_t b = 0; b < preds.size(); ++b) {
      axpy(out.grads[b].mid_sharp, image_from_tensor(g, static_cast<int>(b)), 1.0);
    }
  }
  t.total = t.supervised + t.sum + t.perceptual + t.tv + t.adversarial;
  return out;
}

namespace {

class CsvLog {
 public:
  explicit CsvLog(const fs::path& path) {
    if (path.empty()) return;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
    out_.open(path, std::ios::app);
    if (!out_) throw DataError("cannot open training log '" + path.string() + "'");
    if (fresh) out_ << "iteration,lr,supervised,sum,perceptual,tv,adversarial,total,discriminator\n";
  }
  void write(const IterationRecord& r) {
    if (!out_.is_open()) return;
    const CostTerms& c = r.costs;
    out_ << r.iteration << ',' << fmt(r.lr) << ',' << fmt(c.supervised) << ',' << fmt(c.sum) << ','
         << fmt(c.perceptual) << ',' << fmt(c.tv) << ',' << fmt(c.adversarial) << ','
         << fmt(c.total) << ',' << fmt(r.discriminator_loss) << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

fs::path checkpoint_root(const TrainOptions& o) {
  if (!o.checkpoint_dir.empty()) return o.checkpoint_dir;
  if (o.log_path.has_parent_path()) return o.log_path.parent_path();
  return fs::current_path();
}

void write_checkpoint(const fs::path& stem, const Weights& w, const nn::Adam& adam,
                      const Discriminator* disc, std::int64_t iteration, const TrainOptions& o,
                      const std::string& reason) {
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  save_weights(stem.string() + ".weights", w);
  adam.save(stem);
  if (disc) disc->save(stem);
  nlohmann::ordered_json state;
  state["iteration"] = iteration;
  state["reason"] = reason;
  state["lr"] = o.schedule.lr_at(iteration);
  state["adam_steps"] = adam.steps();
  state["schedule_seed"] = o.schedule.seed;
  state["has_discriminator"] = disc != nullptr;
  std::ofstream out(stem.string() + ".state.json");
  if (!out) throw DataError("cannot write checkpoint state '" + stem.string() + "'");
  out << state.dump(2) << "\n";
}

std::string iteration_stem(const char* prefix, std::int64_t it) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s%08lld", prefix, static_cast<long long>(it));
  return buf;
}

std::vector<TrainingSample> draw_batch(const SampleSource& source, std::int64_t it, int batch,
                                       int workers) {
  std::vector<TrainingSample> out(static_cast<std::size_t>(batch));
  const auto base = static_cast<std::uint64_t>(it) * static_cast<std::uint64_t>(batch);
  if (workers <= 1 || batch == 1) {
    for (int b = 0; b < batch; ++b) out[b] = source.sample(base + b);
    return out;
  }
  std::vector<std::future<void>> jobs;
  for (int w = 0; w < workers; ++w) {
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (int b = w; b < batch; b += workers) out[b] = source.sample(base + b);
    }));
  }
  for (auto& j : jobs) j.get();
  return out;
}

}  // namespace

Weights train(const SampleSource& source, Weights initial, const TrainOptions& o) {
  o.validate();
  const DecomposerNet net(initial.config);
  net.check_weights(initial);
  const TrainSchedule& sch = o.schedule;

  Weights w = std::move(initial);
  nn::Adam adam(w.params);
  std::optional<Discriminator> disc;
  if (o.loss.lambda_adv > 0.0) disc.emplace(o.discriminator, splitmix(sch.seed ^ 0xd15cULL));

  std::int64_t start = 0;
  if (o.resume_from) {
    const std::string stem = o.resume_from->string();
    std::ifstream in(stem + ".state.json");
    if (!in) throw DataError("checkpoint state '" + stem + ".state.json' not found");
    nlohmann::json state;
    try {
      in >> state;
      start = state.at("iteration").get<std::int64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed checkpoint state '" + stem + "': " + e.what());
    }
    w = load_weights(stem + ".weights", w.config);
    adam = nn::Adam(w.params);
    adam.load(stem);
    if (disc) disc->load(stem);
  }

  CsvLog log(o.log_path);
  const fs::path ckpt_root = checkpoint_root(o);

  for (std::int64_t it = start; it < sch.total_iterations; ++it) {
    const double lr = sch.lr_at(it);
    if (o.dry_run) {
      const IterationRecord rec{it, lr, {}, 0.0};
      if (it % o.log_every == 0 || it + 1 == sch.total_iterations) log.write(rec);
      if (o.on_iteration) o.on_iteration(rec);
      continue;
    }
    const std::vector<TrainingSample> batch = draw_batch(source, it, sch.batch_size, o.workers);

    std::vector<const Image*> pre, lng, post;
    for (const auto& s : batch) {
      pre.push_back(&s.triplet.short_pre);
      lng.push_back(&s.triplet.long_exposure);
      post.push_back(&s.triplet.short_post);
    }
    nn::Tape tape;
    const NetOutputs out = net.forward(tape, w, tape.constant(to_tensor(pre)),
                                       tape.constant(to_tensor(lng)), tape.constant(to_tensor(post)));
    std::vector<DecompositionTriple> preds(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const int n = static_cast<int>(b);
      preds[b].first_half = image_from_tensor(out.first_half->value, n);
      preds[b].mid_sharp = image_from_tensor(out.mid_sharp->value, n);
      preds[b].second_half = image_from_tensor(out.second_half->value, n);
      preds[b].n1 = batch[b].target.n1;
      preds[b].n2 = batch[b].target.n2;
    }

    IterationRecord rec;
    rec.iteration = it;
    rec.lr = lr;
    BatchCosts costs = compute_costs(preds, batch, o.loss, o.extractor, disc ? &*disc : nullptr,
                                     lr, &rec.discriminator_loss);
    rec.costs = costs.terms;

    if (!finite(rec.costs)) {
      const fs::path stem = ckpt_root / iteration_stem("nan_iter", it);
      write_checkpoint(stem, w, adam, disc ? &*disc : nullptr, it, o, "non-finite cost");
      log.write(rec);
      throw NumericalError("non-finite training cost at iteration " + std::to_string(it) +
                           "; diagnostic checkpoint written to '" + stem.string() + "'");
    }

    nn::Tensor seed_a = out.first_half->value, seed_m = out.mid_sharp->value,
               seed_b = out.second_half->value;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const int n = static_cast<int>(b);
      store_image(seed_a, n, costs.grads[b].first_half);
      store_image(seed_m, n, costs.grads[b].mid_sharp);
      store_image(seed_b, n, costs.grads[b].second_half);
    }
    const std::pair<nn::Var, nn::Tensor> seeds[] = {{out.first_half, std::move(seed_a)},
                                                    {out.mid_sharp, std::move(seed_m)},
                                                    {out.second_half, std::move(seed_b)}};
    tape.backward(seeds);
    adam.step(w.params, tape, lr);

    if (it % o.log_every == 0 || it + 1 == sch.total_iterations) log.write(rec);
    if (o.on_iteration) o.on_iteration(rec);
    if (o.checkpoint_every > 0 && (it + 1) % o.checkpoint_every == 0) {
      write_checkpoint(ckpt_root / iteration_stem("ckpt_", it + 1), w, adam,
                       disc ? &*disc : nullptr, it + 1, o, "periodic");
    }
  }
  return w;
}

Weights train(const SampleGenerator& gen, const NetworkConfig& config, const TrainOptions& options) {
  options.validate();
  const GeneratorSource source(gen, options.schedule.seed);
  return train(source, init_weights(config, splitmix(options.schedule.seed)), options);
}

std::string model_suffix(int noisy) {
  if (noisy < 0 || noisy > 2) throw ArgumentError("noisy-input count must be 0, 1 or 2");
  return "-noisy" + std::to_string(noisy);
}

ModelTriple train_three_models(const SampleGenerator& gen, const NetworkConfig& config,
                               const TrainOptions& options) {
  options.validate();
  const NoisyShorts modes[3] = {NoisyShorts::None, NoisyShorts::One, NoisyShorts::Both};
  ModelTriple result;
  for (int noisy = 2; noisy >= 0; --noisy) {
    SampleGenerator g = gen;
    g.config().noisy_shorts = modes[noisy];
    TrainOptions o = options;
    const std::string suffix = model_suffix(noisy);
    if (!o.log_path.empty()) {
      o.log_path = o.log_path.parent_path() /
                   (o.log_path.stem().string() + suffix + o.log_path.extension().string());
    }
    o.checkpoint_dir = checkpoint_root(options) / ("checkpoints" + suffix);
    o.schedule.seed = splitmix(options.schedule.seed + static_cast<std::uint64_t>(noisy));
    const GeneratorSource source(g, o.schedule.seed);
    result[noisy] = train(source, init_weights(config, splitmix(o.schedule.seed)), o);
  }
  return result;
}

std::vector<std::pair<std::int64_t, double>> read_lr_log(const fs::path& log_path) {
  std::ifstream in(log_path);
  if (!in) throw DataError("cannot read training log '" + log_path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line.rfind("iteration,lr,", 0) != 0) throw DataError("unexpected training log header");
  std::vector<std::pair<std::int64_t, double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream s(line);
    std::string it, lr;
    std::getline(s, it, ',');
    std::getline(s, lr, ',');
    rows.emplace_back(std::stoll(it), std::stod(lr));
  }
  return rows;
}

}  // namespace photoseq
