// Command line front end: data generation, training, evaluation,
// prediction, parameter counting, gradient checking.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uuconv/augment.hpp"
#include "uuconv/checkpoint.hpp"
#include "uuconv/data.hpp"
#include "uuconv/errors.hpp"
#include "uuconv/gradcheck_suite.hpp"
#include "uuconv/image_io.hpp"
#include "uuconv/model.hpp"
#include "uuconv/ops.hpp"
#include "uuconv/synthetic.hpp"
#include "uuconv/training.hpp"

namespace {

namespace fs = std::filesystem;
using namespace uuconv;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

struct GenDataArgs {
  std::string out;
  int n_seg = 8;
  int n_cls = 8;
  int size = 64;
  std::uint64_t seed = 0;
};

int run_gen_data(const GenDataArgs& args) {
  const SyntheticDataset ds =
      gen_synthetic(args.out, args.n_seg, args.n_cls, args.size, args.seed);
  std::cout << "samples\t" << ds.manifest.samples.size() << "\n"
            << "manifest\t" << (fs::path(args.out) / "manifest.json").string()
            << "\n";
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  bool no_prompts = false;
};

int run_train(const TrainArgs& args) {
  CombinedConfig cfg = load_combined_config(args.config);
  if (args.no_prompts) cfg.model.prompts_enabled = false;
  cfg.model.validate();
  cfg.train.validate();

  const DatasetManifest manifest =
      load_manifest(fs::path(args.data) / "manifest.json");
  const SplitResult splits = split_dataset(manifest, cfg.train.seed);

  fs::create_directories(args.out);
  std::ofstream log(fs::path(args.out) / "metrics.log", std::ios::app);
  if (!log) throw IoError("cannot open metrics log in " + args.out);
  auto emit = [&](std::uint64_t epoch, const std::string& task,
                  const std::string& metric, double value) {
    const std::string line = std::to_string(epoch) + "\t" + task + "\t" +
                             metric + "\t" + fmt(value);
    log << line << "\n";
    std::cout << line << "\n";
  };

  TrainState state = init_train_state(cfg.model, cfg.train);
  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    const EpochReport report =
        train_epoch(state, splits.train, splits.train, cfg.train);
    if (report.seg_batches) {
      emit(report.epoch, "seg", "train_loss", report.mean_seg_loss);
    }
    if (report.cls_batches) {
      emit(report.epoch, "cls", "train_loss", report.mean_cls_loss);
    }
    const bool eval_now = cfg.train.eval_every > 0 &&
                          (epoch + 1) % cfg.train.eval_every == 0 &&
                          !splits.val.samples.empty();
    if (eval_now) {
      for (const MetricRow& row : evaluate(state, splits.val, "val")) {
        emit(report.epoch, row.task, "val_" + row.metric, row.value);
      }
    }
  }
  const fs::path ckpt = fs::path(args.out) / "checkpoint.uuckpt";
  save_checkpoint(ckpt, state, cfg.train);
  std::cerr << "checkpoint written to " << ckpt.string() << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
};

int run_eval(const EvalArgs& args) {
  const LoadedCheckpoint ck = load_checkpoint(args.checkpoint);
  const DatasetManifest manifest =
      load_manifest(fs::path(args.data) / "manifest.json");
  const SplitResult splits = split_dataset(manifest, ck.train_config.seed);
  const DatasetManifest* part = nullptr;
  if (args.split == "train") {
    part = &splits.train;
  } else if (args.split == "val") {
    part = &splits.val;
  } else if (args.split == "test") {
    part = &splits.test;
  } else {
    throw ValidationError("unknown split '" + args.split +
                          "' (train|val|test)");
  }
  for (const MetricRow& row : evaluate(ck.state, *part, args.split)) {
    std::cout << format_metric_row(row) << "\n";
  }
  return 0;
}

struct PredictArgs {
  std::string checkpoint;
  std::string image;
  std::string prompts;
  std::string out = "mask.pgm";
};

PromptSet parse_prompts(const std::string& text,
                        const PromptCardinalities& cards) {
  PromptSet p;
  if (text.empty()) {
    std::cerr << "warning: no --prompts given; using all-zero prompt "
                 "indices\n";
    return p;
  }
  std::vector<int> vals;
  std::string tok;
  std::istringstream ss(text);
  while (std::getline(ss, tok, ',')) {
    try {
      vals.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw ValidationError("bad prompt index '" + tok + "'");
    }
  }
  if (vals.size() != 4) {
    throw ValidationError("--prompts expects four comma-separated indices "
                          "(nature,position,task,type)");
  }
  p.nature = vals[0];
  p.position = vals[1];
  p.task = vals[2];
  p.type = vals[3];
  (void)p.one_hot(cards);  // range check
  return p;
}

int run_predict(const PredictArgs& args) {
  const LoadedCheckpoint ck = load_checkpoint(args.checkpoint);
  const Model model(ck.state.model_config, ck.state.params);
  const ModelConfig& mc = model.config();

  int orig_h = 0, orig_w = 0;
  Tensor image = load_image_tensor(args.image, mc.input_size, mc.in_channels,
                                   &orig_h, &orig_w);
  image = reshape(nullptr, image,
                  {1, image.extent(0), image.extent(1), image.extent(2)});
  const PromptSet prompts =
      parse_prompts(args.prompts, mc.prompt_cardinalities);

  const ForwardResult fwd =
      model.forward(nullptr, image, {prompts}, TaskKind::kSeg);
  const std::size_t s = fwd.seg_logits.extent(2);
  const std::size_t k = fwd.seg_logits.extent(1);
  std::vector<int> mask(s * s);
  const double* v = fwd.seg_logits.values().data();
  for (std::size_t p = 0; p < s * s; ++p) {
    int best = 0;
    double best_v = v[p];
    for (std::size_t j = 1; j < k; ++j) {
      if (v[j * s * s + p] > best_v) {
        best_v = v[j * s * s + p];
        best = static_cast<int>(j);
      }
    }
    mask[p] = best;
  }
  const std::vector<int> resized = resize_nearest_labels(
      mask, static_cast<int>(s), static_cast<int>(s), orig_h, orig_w);

  ImageU8 out;
  out.width = orig_w;
  out.height = orig_h;
  out.channels = 1;
  out.pixels.resize(resized.size());
  for (std::size_t i = 0; i < resized.size(); ++i) {
    out.pixels[i] = static_cast<std::uint8_t>(resized[i]);
  }
  write_pnm(args.out, out);
  std::cout << "mask\t" << args.out << "\n";
  return 0;
}

struct CountParamsArgs {
  std::string config;
  bool no_prompts = false;
};

int run_count_params(const CountParamsArgs& args) {
  ModelConfig cfg = load_model_config(args.config);
  if (args.no_prompts) cfg.prompts_enabled = false;
  const ParamBreakdown b = planned_breakdown(cfg);
  std::cout << "encoder\t" << b.encoder << "\n"
            << "prompt\t" << b.prompt << "\n"
            << "decoder\t" << b.decoder << "\n"
            << "heads\t" << b.heads << "\n"
            << "total\t" << b.total << "\n";
  return 0;
}

int run_gradcheck(const std::string& scale) {
  if (scale != "toy") {
    throw ValidationError("gradcheck supports --scale toy only");
  }
  bool all_ok = true;
  for (const GradCheckResult& r : run_gradcheck_suite()) {
    const bool ok = r.passed();
    all_ok = all_ok && ok;
    std::cout << r.name << "\t" << fmt(r.max_rel_error) << "\t"
              << fmt(r.tolerance) << "\t" << (ok ? "pass" : "FAIL") << "\n";
  }
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UltraUPConvNet training and inference pipeline"};
  app.require_subcommand(1);

  GenDataArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-data",
                                     "Generate a synthetic dataset");
  gen->add_option("--out", gen_args.out, "Output directory")->required();
  gen->add_option("--n-seg", gen_args.n_seg, "Number of segmentation samples");
  gen->add_option("--n-cls", gen_args.n_cls,
                  "Number of classification samples");
  gen->add_option("--size", gen_args.size, "Image side (multiple of 32)");
  gen->add_option("--seed", gen_args.seed, "RNG seed");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", train_args.config, "Config JSON file")
      ->required();
  train->add_option("--data", train_args.data, "Dataset directory")
      ->required();
  train->add_option("--out", train_args.out, "Output directory")->required();
  train->add_flag("--no-prompts", train_args.no_prompts,
                  "Disable prompt conditioning");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")
      ->required();
  eval->add_option("--data", eval_args.data, "Dataset directory")->required();
  eval->add_option("--split", eval_args.split, "train|val|test");

  PredictArgs predict_args;
  CLI::App* predict = app.add_subcommand("predict",
                                         "Segment a single image");
  predict->add_option("--checkpoint", predict_args.checkpoint,
                      "Checkpoint file")
      ->required();
  predict->add_option("--image", predict_args.image, "Input image (PGM/PPM)")
      ->required();
  predict->add_option("--prompts", predict_args.prompts,
                      "nature,position,task,type indices");
  predict->add_option("--out", predict_args.out, "Output mask path");

  CountParamsArgs count_args;
  CLI::App* count = app.add_subcommand("count-params",
                                       "Report the parameter budget");
  count->add_option("--config", count_args.config, "Config JSON file")
      ->required();
  count->add_flag("--no-prompts", count_args.no_prompts,
                  "Disable prompt conditioning");

  std::string gradcheck_scale = "toy";
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "Run the finite-difference gradient suite");
  gradcheck->add_option("--scale", gradcheck_scale, "Suite scale (toy)");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return run_gen_data(gen_args);
    if (train->parsed()) return run_train(train_args);
    if (eval->parsed()) return run_eval(eval_args);
    if (predict->parsed()) return run_predict(predict_args);
    if (count->parsed()) return run_count_params(count_args);
    if (gradcheck->parsed()) return run_gradcheck(gradcheck_scale);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
