#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include "photoseq/config.hpp"
#include "photoseq/errors.hpp"
#include "photoseq/evaluation.hpp"
#include "photoseq/feature_extractor.hpp"
#include "photoseq/sequencer.hpp"
#include "photoseq/training.hpp"

namespace photoseq::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr const char* kVideoNote =
    "Frames are written as frame_00001.png, frame_00002.png, ... in time order. To make a video,\n"
    "run an external encoder on the output directory, for example:\n"
    "  ffmpeg -framerate 30 -i OUT/frame_%05d.png -pix_fmt yuv420p OUT/sequence.mp4";

/// Flags shared by every command.
struct Common {
  std::string config_path;
  int workers = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON config file; flags override its values");
  cmd->add_option("--workers", c.workers, "Worker threads")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
}

/// Config file (or defaults) with every given flag applied, validated.
ToolkitConfig load_effective(const Common& c, const std::function<void(ToolkitConfig&)>& overrides) {
  ToolkitConfig cfg = c.config_path.empty() ? ToolkitConfig{} : load_config(c.config_path);
  overrides(cfg);
  cfg.validate();
  return cfg;
}

template <typename T>
void apply_if(const CLI::Option* opt, const T& value, T& target) {
  if (opt->count() > 0) target = value;
}

void write_json(const fs::path& path, const ordered_json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

std::vector<std::vector<FrameClip>> load_corpora(const std::vector<std::string>& dirs) {
  std::vector<std::vector<FrameClip>> corpora;
  for (const auto& d : dirs) corpora.push_back(load_corpus(d));
  return corpora;
}

std::vector<FrameClip> flatten(std::vector<std::vector<FrameClip>> corpora) {
  std::vector<FrameClip> all;
  for (auto& c : corpora) {
    for (auto& clip : c) all.push_back(std::move(clip));
  }
  return all;
}

/// "dir/model.bin" -> "dir/model-noisy1.bin".
fs::path suffixed(const fs::path& p, int noisy) {
  return p.parent_path() / (p.stem().string() + model_suffix(noisy) + p.extension().string());
}

/// Single-model weights in slot 2, or the three suffixed files.
struct ModelSet {
  std::array<Weights, 3> weights;
  bool three = false;

  std::array<const Weights*, 3> pointers() const {
    if (!three) return {&weights[2], &weights[2], &weights[2]};
    return {&weights[0], &weights[1], &weights[2]};
  }
  ordered_json fingerprints() const {
    ordered_json j = ordered_json::array();
    for (const Weights* w : pointers()) j.push_back(weights_fingerprint_hex(*w));
    return j;
  }
};

ModelSet load_models(const fs::path& path, bool three) {
  ModelSet m;
  m.three = three;
  if (three) {
    for (int k = 0; k < 3; ++k) m.weights[k] = load_weights(suffixed(path, k));
  } else {
    m.weights[2] = load_weights(path);
  }
  return m;
}

DecomposeFn decomposer(const ModelSet& models) {
  const auto ptrs = models.pointers();
  return [ptrs](const ExposureTriplet& t, int noisy) { return forward(t, *ptrs[noisy]); };
}

/// Runs fn(i) for i in [0, count) on `workers` threads; rethrows the first error.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
  std::exception_ptr error;
  std::mutex m;
  std::size_t next = 0;
  auto body = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(m);
        if (error || next >= count) return;
        i = next++;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(m);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::string sample_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%06zu", i);
  return buf;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  Common common;
  std::vector<std::string> corpora;
  std::string out;
  std::size_t count = 100;
  std::uint64_t seed = 0;
  int crop = BuilderConfig{}.crop_size;
  std::string noisy = to_string(BuilderConfig{}.noisy_shorts);
  std::string noise_file;
  CLI::Option* crop_opt = nullptr;
  CLI::Option* noisy_opt = nullptr;
};

int cmd_synth(const SynthArgs& a) {
  const ToolkitConfig cfg = load_effective(a.common, [&](ToolkitConfig& c) {
    apply_if(a.crop_opt, a.crop, c.builder.crop_size);
    if (a.noisy_opt->count() > 0) {
      try {
        c.builder.noisy_shorts = noisy_shorts_from_string(a.noisy);
      } catch (const Error& e) {
        throw ConfigError(std::string("--noisy-shorts: ") + e.what());
      }
    }
  });
  const NoiseParams noise = a.noise_file.empty() ? cfg.noise : load_noise_params(a.noise_file);
  const SampleGenerator gen(load_corpora(a.corpora), cfg.builder, noise);
  const GeneratorSource source(gen, a.seed);

  const fs::path out(a.out);
  fs::create_directories(out);
  std::vector<ordered_json> entries(a.count);
  parallel_for(a.count, a.common.workers, [&](std::size_t i) {
    const TrainingSample s = source.sample(i);
    const fs::path dir = out / sample_name(i);
    write_sample(dir, s);
    const TrainingSample back = read_sample(dir);
    const double residual = sum_identity_residual(back.triplet.long_exposure, back.target);
    if (!(residual <= kCachedSumTolerance)) {
      throw DataError("cached sample '" + dir.string() + "' fails the sum identity (residual " +
                      std::to_string(residual) + ")");
    }
    entries[i] = {{"dir", sample_name(i)},          {"source", s.source_id},  {"n", s.triplet.n_frames_long},
                  {"window_start", s.window_start}, {"crop_row", s.crop_row}, {"crop_col", s.crop_col}};
  });

  ordered_json manifest;
  manifest["command"] = "synth";
  manifest["corpora"] = a.corpora;
  manifest["seed"] = a.seed;
  manifest["count"] = a.count;
  manifest["noise"] = {{"alpha", noise.alpha}, {"beta", noise.beta}, {"gain_label", noise.gain_label}};
  manifest["samples"] = entries;
  manifest["config"] = config_to_json(cfg);
  write_json(out / "manifest.json", manifest);
  std::cout << "wrote " << a.count << " samples to " << out.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
  Common common;
  std::vector<std::string> bursts;
  std::string out;
  std::string gain_label = "calibrated";
};

int cmd_calibrate(const CalibrateArgs& a) {
  load_effective(a.common, [](ToolkitConfig&) {});
  std::vector<FrameClip> bursts;
  for (const auto& d : a.bursts) bursts.push_back(read_clip_dir(d));
  NoiseParams p = estimate_noise_params(bursts);
  p.gain_label = a.gain_label;
  save_noise_params(a.out, p);
  std::cout << "alpha " << p.alpha << " beta " << p.beta << " -> " << a.out << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::vector<std::string> corpora;
  std::string out;
  std::string log;
  std::string resume;
  std::string noise_file;
  bool three_models = false;
  bool dry_run = false;
  TrainSchedule schedule;
  std::int64_t checkpoint_every = ToolkitConfig{}.checkpoint_every;
  CLI::Option *iterations = nullptr, *batch = nullptr, *lr = nullptr, *decay_every = nullptr,
              *decay_factor = nullptr, *seed = nullptr, *ckpt = nullptr;
};

int cmd_train(const TrainArgs& a) {
  const ToolkitConfig cfg = load_effective(a.common, [&](ToolkitConfig& c) {
    apply_if(a.iterations, a.schedule.total_iterations, c.schedule.total_iterations);
    apply_if(a.batch, a.schedule.batch_size, c.schedule.batch_size);
    apply_if(a.lr, a.schedule.initial_lr, c.schedule.initial_lr);
    apply_if(a.decay_every, a.schedule.lr_decay_every, c.schedule.lr_decay_every);
    apply_if(a.decay_factor, a.schedule.lr_decay_factor, c.schedule.lr_decay_factor);
    apply_if(a.seed, a.schedule.seed, c.schedule.seed);
    apply_if(a.ckpt, a.checkpoint_every, c.checkpoint_every);
  });
  if (cfg.loss.lambda_perc > 0.0 && cfg.perceptual_weights.empty()) {
    throw ConfigError(
        "loss.lambda_perc > 0 needs loss.perceptual_weights (a VGG-19 weight container); "
        "set lambda_perc to 0 to train without the perceptual cost");
  }
  if (a.three_models && !a.resume.empty()) {
    throw ConfigError("--resume applies to single-model training only");
  }

  std::optional<VggFeatureExtractor> extractor;
  if (cfg.loss.lambda_perc > 0.0) {
    extractor.emplace(VggFeatureExtractor::load(cfg.perceptual_weights, vgg19_plan(cfg.perceptual_layer)));
  }
  const NoiseParams noise = a.noise_file.empty() ? cfg.noise : load_noise_params(a.noise_file);
  const SampleGenerator gen(load_corpora(a.corpora), cfg.builder, noise);

  const fs::path out(a.out);
  TrainOptions o;
  o.loss = cfg.loss;
  o.schedule = cfg.schedule;
  o.extractor = extractor ? &*extractor : nullptr;
  o.discriminator = cfg.discriminator;
  o.log_path = a.log.empty() ? out.parent_path() / (out.stem().string() + "_log.csv") : fs::path(a.log);
  o.log_every = cfg.log_every;
  o.checkpoint_every = cfg.checkpoint_every;
  o.workers = a.common.workers;
  o.dry_run = a.dry_run;
  if (!a.resume.empty()) o.resume_from = a.resume;
  o.on_iteration = [every = cfg.log_every](const IterationRecord& r) {
    if (r.iteration % (every * 10) == 0) {
      std::cout << "iter " << r.iteration << " lr " << r.lr << " total " << r.costs.total << '\n';
    }
  };
  o.validate();
  if (out.has_parent_path()) fs::create_directories(out.parent_path());

  ordered_json manifest;
  manifest["command"] = "train";
  manifest["dry_run"] = a.dry_run;
  manifest["corpora"] = a.corpora;
  manifest["noise"] = {{"alpha", noise.alpha}, {"beta", noise.beta}, {"gain_label", noise.gain_label}};
  manifest["config"] = config_to_json(cfg);
  if (a.three_models) {
    const ModelTriple models = train_three_models(gen, cfg.network, o);
    ordered_json files = ordered_json::array();
    for (int k = 0; k < 3; ++k) {
      save_weights(suffixed(out, k), models[k]);
      files.push_back({{"noisy_inputs", k},
                       {"path", suffixed(out, k).filename().string()},
                       {"fingerprint", weights_fingerprint_hex(models[k])}});
    }
    manifest["models"] = files;
  } else {
    const Weights w = train(gen, cfg.network, o);
    save_weights(out, w);
    manifest["models"] = {{{"noisy_inputs", 2},
                           {"path", out.filename().string()},
                           {"fingerprint", weights_fingerprint_hex(w)}}};
  }
  write_json(out.string() + ".manifest.json", manifest);
  std::cout << "wrote " << out.string() << (a.three_models ? " (three models)" : "") << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct SequenceArgs {
  Common common;
  std::string weights;
  bool three_models = false;
  int levels = SequencerSettings{}.levels;
  std::vector<std::string> triplet;
  std::string captures;
  std::string out;
  CLI::Option* levels_opt = nullptr;
  CLI::Option* three_opt = nullptr;
};

ordered_json plan_json(const RecursionPlan& plan) {
  ordered_json nodes = ordered_json::array();
  for (const PlanNode& n : plan.nodes) {
    nodes.push_back({{"level", n.level},
                     {"t", plan.midpoint(n)},
                     {"noisy_inputs", n.noisy_inputs},
                     {"left_flank", n.left_flank},
                     {"right_flank", n.right_flank}});
  }
  return {{"levels", plan.levels}, {"nodes", nodes}};
}

int cmd_sequence(const SequenceArgs& a) {
  const ToolkitConfig cfg = load_effective(a.common, [&](ToolkitConfig& c) {
    apply_if(a.levels_opt, a.levels, c.sequencer.levels);
    if (a.three_opt->count() > 0) c.sequencer.three_models = true;
  });
  if (a.triplet.empty() == a.captures.empty()) {
    throw ConfigError("give exactly one of --triplet SHORT LONG SHORT or --captures DIR");
  }
  const int levels = cfg.sequencer.levels;
  const ModelSet models = load_models(a.weights, cfg.sequencer.three_models);

  std::vector<PhotoSequence> sequences;
  if (!a.triplet.empty()) {
    ExposureTriplet t;
    t.short_pre = read_png(a.triplet[0]);
    t.long_exposure = read_png(a.triplet[1]);
    t.short_post = read_png(a.triplet[2]);
    t.n_frames_long = (1 << (levels + 1)) - 1;
    t.short_is_noisy = {true, true};
    sequences.push_back(sequence(t, decomposer(models), build_plan(levels)));
  } else {
    const auto captures = load_capture_dir(a.captures);
    try {
      check_alternation(captures);
    } catch (const ArgumentError& e) {
      throw DataError(std::string("capture stream must alternate short/long and start and end "
                                  "with a short: ") +
                      e.what());
    }
    sequences = sequence_stream(captures, decomposer(models), levels);
  }

  const fs::path out(a.out);
  ordered_json list = ordered_json::array();
  int index = 1;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& seq = sequences[i];
    ordered_json files = ordered_json::array();
    for (const auto& p : write_sequence_frames(out, seq, index)) files.push_back(p.filename().string());
    index += static_cast<int>(seq.frames.size());
    list.push_back({{"long_exposure", i}, {"timepoints", seq.timepoints}, {"frames", files}});
  }
  ordered_json manifest;
  manifest["command"] = "sequence";
  manifest["weights"] = a.weights;
  manifest["three_models"] = models.three;
  manifest["weight_fingerprints"] = models.fingerprints();
  manifest["plan"] = plan_json(build_plan(levels));
  manifest["sequences"] = list;
  manifest["config"] = config_to_json(cfg);
  write_json(out / "manifest.json", manifest);
  std::cout << "wrote " << index - 1 << " frames to " << out.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string weights;
  bool three_models = false;
  std::string against;
  bool against_three = false;
  std::vector<std::string> corpora;
  std::string protocol = "timepoints";
  bool self_test = false;
  std::string out;
  EvaluationSettings eval;
  CLI::Option *n = nullptr, *sweep = nullptr, *seed = nullptr, *examples = nullptr, *crop = nullptr;
};

SequencePredictor model_predictor(const ModelSet& models) {
  return [fn = decomposer(models)](const EvalExample& ex, const RecursionPlan& plan) {
    return sequence(ex.triplet, fn, plan);
  };
}

int cmd_eval(const EvalArgs& a) {
  const ToolkitConfig cfg = load_effective(a.common, [&](ToolkitConfig& c) {
    apply_if(a.n, a.eval.n, c.evaluation.n);
    apply_if(a.sweep, a.eval.sweep, c.evaluation.sweep);
    apply_if(a.seed, a.eval.seed, c.evaluation.seed);
    apply_if(a.examples, a.eval.examples_per_clip, c.evaluation.examples_per_clip);
    apply_if(a.crop, a.eval.crop_size, c.evaluation.crop_size);
  });
  if (!a.self_test && a.weights.empty())
    throw ConfigError("--weights is required unless --self-test is given");
  if (!a.self_test && a.protocol == "relative" && a.against.empty()) {
    throw ConfigError("--protocol relative needs --against");
  }

  std::optional<ModelSet> models, other;
  if (!a.self_test) models = load_models(a.weights, a.three_models);
  if (!a.self_test && a.protocol == "relative") other = load_models(a.against, a.against_three);
  const SequencePredictor predictor = a.self_test ? oracle_predictor() : model_predictor(*models);

  const std::vector<FrameClip> corpus = flatten(load_corpora(a.corpora));
  EvalSetup setup;
  setup.noise = cfg.noise;
  setup.seed = cfg.evaluation.seed;
  setup.examples_per_clip = cfg.evaluation.examples_per_clip;
  setup.crop_size = cfg.evaluation.crop_size;
  setup.workers = a.common.workers;

  EvalReport report;
  report.protocol = a.protocol;
  report.weights_fingerprint = a.self_test ? "ground-truth" : models->fingerprints()[2].get<std::string>();
  for (const auto& c : a.corpora) report.dataset_id += (report.dataset_id.empty() ? "" : ";") + c;
  report.n = cfg.evaluation.n;

  if (a.protocol == "timepoints") {
    report.levels = 2;
    report.timepoints = eval_timepoints(predictor, corpus, setup, cfg.evaluation.n);
    report.examples = report.timepoints.front().per_example.size();
  } else if (a.protocol == "blur-sweep") {
    report.levels = 1;
    report.sweep = eval_blur_sweep(predictor, corpus, setup, cfg.evaluation.sweep);
    report.examples = report.sweep.front().per_example.size();
  } else {
    report.levels = cfg.sequencer.levels;
    const RecursionPlan plan = build_plan(report.levels);
    const auto examples = build_eval_examples(corpus, cfg.evaluation.n, setup);
    if (examples.empty()) throw RangeError("evaluation corpus is empty");
    const SequencePredictor second = a.self_test ? oracle_predictor() : model_predictor(*other);
    report.relative.resize(examples.size());
    parallel_for(examples.size(), setup.workers, [&](std::size_t i) {
      report.relative[i] = {"example" + std::to_string(i) + ":" + examples[i].source_id,
                            relative_psnr(predictor(examples[i], plan), second(examples[i], plan))};
    });
    report.examples = examples.size();
  }

  const fs::path out(a.out);
  write_report(out, report);
  ordered_json manifest;
  manifest["command"] = "eval";
  manifest["protocol"] = a.protocol;
  manifest["self_test"] = a.self_test;
  manifest["weights"] = a.weights;
  if (models) manifest["weight_fingerprints"] = models->fingerprints();
  if (other) manifest["against_fingerprints"] = other->fingerprints();
  manifest["corpora"] = a.corpora;
  manifest["config"] = config_to_json(cfg);
  write_json(out / "manifest.json", manifest);
  std::cout << "report written to " << out.string() << '\n';
  return kOk;
}

int report_error(const char* kind, const std::exception& e, int code) {
  std::cerr << "photoseq: " << kind << ": " << e.what() << '\n';
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Recover a sequence of sharp frames from short-long-short exposure triplets."};
  app.name(args.empty() ? "photoseq" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);

  const ToolkitConfig defaults;
  std::function<int()> action;

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Synthesize a cache of training samples from clip corpora");
  add_common(s, synth.common);
  s->add_option("--corpus", synth.corpora, "Corpus directory (one subdirectory per clip); repeatable")
      ->required();
  s->add_option("--out", synth.out, "Output cache directory")->required();
  s->add_option("--count", synth.count, "Number of samples")->capture_default_str();
  s->add_option("--seed", synth.seed, "Sample seed")->capture_default_str();
  synth.crop_opt =
      s->add_option("--crop", synth.crop, "Crop side (builder.crop_size)")->capture_default_str();
  synth.noisy_opt = s->add_option("--noisy-shorts", synth.noisy, "Which shorts carry noise: both, one, none")
                        ->capture_default_str();
  s->add_option("--noise", synth.noise_file, "Noise parameter file overriding the config noise section");
  s->callback([&] { action = [&] { return cmd_synth(synth); }; });

  CalibrateArgs cal;
  auto* c = app.add_subcommand("calibrate-noise", "Fit the affine noise model to static-scene bursts");
  add_common(c, cal.common);
  c->add_option("--burst", cal.bursts, "Burst directory of frames of a static scene; repeatable")->required();
  c->add_option("--out", cal.out, "Output noise parameter file")->required();
  c->add_option("--gain-label", cal.gain_label, "Label stored with the parameters")->capture_default_str();
  c->callback([&] { action = [&] { return cmd_calibrate(cal); }; });

  TrainArgs train_args;
  train_args.schedule = defaults.schedule;
  auto* t = app.add_subcommand("train", "Train the decomposition network");
  add_common(t, train_args.common);
  t->add_option("--corpus", train_args.corpora, "Corpus directory; repeatable, mixed uniformly")->required();
  t->add_option("--out", train_args.out, "Output weight file")->required();
  t->add_flag("--three-models", train_args.three_models,
              "Train models for 2, 1 and 0 noisy shorts, written with -noisy<k> suffixes");
  train_args.iterations =
      t->add_option("--iterations", train_args.schedule.total_iterations, "Total iterations")
          ->capture_default_str();
  train_args.batch =
      t->add_option("--batch-size", train_args.schedule.batch_size, "Batch size")->capture_default_str();
  train_args.lr =
      t->add_option("--lr", train_args.schedule.initial_lr, "Initial learning rate")->capture_default_str();
  train_args.decay_every = t->add_option("--lr-decay-every", train_args.schedule.lr_decay_every,
                                         "Iterations between learning-rate drops")
                               ->capture_default_str();
  train_args.decay_factor = t->add_option("--lr-decay-factor", train_args.schedule.lr_decay_factor,
                                          "Learning-rate multiplier at each drop")
                                ->capture_default_str();
  train_args.seed = t->add_option("--seed", train_args.schedule.seed, "Training seed")->capture_default_str();
  train_args.ckpt = t->add_option("--checkpoint-every", train_args.checkpoint_every,
                                  "Checkpoint cadence in iterations (0 disables)")
                        ->capture_default_str();
  t->add_flag("--dry-run", train_args.dry_run,
              "Walk the schedule and write the log without updating the weights");
  t->add_option("--log", train_args.log, "CSV log path (default: <out stem>_log.csv next to --out)");
  t->add_option("--resume", train_args.resume, "Checkpoint stem to resume from");
  t->add_option("--noise", train_args.noise_file, "Noise parameter file overriding the config noise section");
  t->callback([&] { action = [&] { return cmd_train(train_args); }; });

  SequenceArgs seq;
  auto* q = app.add_subcommand("sequence", "Decompose exposure triplets into sharp frame sequences");
  add_common(q, seq.common);
  q->footer(kVideoNote);
  q->add_option("--weights", seq.weights, "Weight file (stem of the -noisy<k> files with --three-models)")
      ->required();
  seq.three_opt =
      q->add_flag("--three-models", seq.three_models, "Pick the model by noisy-input count per node");
  seq.levels_opt = q->add_option("--levels", seq.levels, "Recursion levels; 2^L - 1 frames per long exposure")
                       ->capture_default_str();
  q->add_option("--triplet", seq.triplet, "SHORT LONG SHORT image paths")->expected(3);
  q->add_option("--captures", seq.captures,
                "Directory of alternating captures whose names contain 'short' or 'long'");
  q->add_option("--out", seq.out, "Output directory")->required();
  q->callback([&] { action = [&] { return cmd_sequence(seq); }; });

  EvalArgs ev;
  ev.eval = defaults.evaluation;
  auto* e = app.add_subcommand("eval", "Measure PSNR on held-out clips");
  add_common(e, ev.common);
  e->add_option("--weights", ev.weights, "Weight file (stem with --three-models)");
  e->add_flag("--three-models", ev.three_models, "Treat --weights as a three-model stem");
  e->add_option("--against", ev.against, "Second weight file for --protocol relative");
  e->add_flag("--against-three-models", ev.against_three, "Treat --against as a three-model stem");
  e->add_option("--corpus", ev.corpora, "Test corpus directory; repeatable")->required();
  e->add_option("--protocol", ev.protocol, "timepoints, blur-sweep or relative")
      ->capture_default_str()
      ->check(CLI::IsMember({"timepoints", "blur-sweep", "relative"}));
  e->add_flag("--self-test", ev.self_test,
              "Use ground-truth frames as predictions (every PSNR hits the cap)");
  ev.n = e->add_option("--n", ev.eval.n, "Blur length for timepoints and relative")->capture_default_str();
  ev.sweep = e->add_option("--sweep", ev.eval.sweep, "Blur lengths for blur-sweep")->capture_default_str();
  ev.seed = e->add_option("--seed", ev.eval.seed, "Noise seed")->capture_default_str();
  ev.examples = e->add_option("--examples-per-clip", ev.eval.examples_per_clip, "Triplets per clip")
                    ->capture_default_str();
  ev.crop = e->add_option("--crop", ev.eval.crop_size, "Centre crop side (0 = largest multiple of 16)")
                ->capture_default_str();
  e->add_option("--out", ev.out, "Report directory")->required();
  e->callback([&] { action = [&] { return cmd_eval(ev); }; });

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    return action();
  } catch (const ConfigError& err) {
    return report_error("config error", err, kConfigError);
  } catch (const NumericalError& err) {
    return report_error("numerical failure", err, kNumericalError);
  } catch (const IllPosedError& err) {
    return report_error("ill-posed estimate", err, kDataError);
  } catch (const Error& err) {
    return report_error("data error", err, kDataError);
  } catch (const fs::filesystem_error& err) {
    return report_error("filesystem error", err, kDataError);
  }
}

}  // namespace photoseq::cli
