// Acceptance suite: runs each release criterion at its stated tolerance and
// prints one pass/fail line per criterion.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "uuconv/augment.hpp"
#include "uuconv/checkpoint.hpp"
#include "uuconv/data.hpp"
#include "uuconv/gradcheck_suite.hpp"
#include "uuconv/image_io.hpp"
#include "uuconv/losses.hpp"
#include "uuconv/metrics.hpp"
#include "uuconv/model.hpp"
#include "uuconv/ops.hpp"
#include "uuconv/synthetic.hpp"
#include "uuconv/tensor_io.hpp"
#include "uuconv/training.hpp"

using namespace uuconv;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void require(bool ok, const std::string& what, std::string& detail) {
  if (!ok) {
    detail += (detail.empty() ? "" : "; ") + what;
  }
}

void criterion(const std::string& name,
               const std::function<void(std::string&)>& body) {
  std::string detail;
  try {
    body(detail);
  } catch (const std::exception& e) {
    detail += (detail.empty() ? "" : "; ") + std::string("exception: ") +
              e.what();
  }
  if (detail.empty()) {
    std::cout << "[PASS] " << name << "\n";
  } else {
    std::cout << "[FAIL] " << name << " -- " << detail << "\n";
    ++g_failures;
  }
  std::cout.flush();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path("tmp_acceptance") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// --------------------------------------------------------------------------

void parameter_budget(std::string& detail) {
  const ModelConfig cfg = ModelConfig::full_scale();
  const std::size_t total = planned_param_count(cfg);
  const double target = 60.48e6;
  require(static_cast<double>(total) >= 0.85 * target &&
              static_cast<double>(total) <= 1.15 * target,
          "total " + std::to_string(total) + " outside +/-15% of 60.48M",
          detail);

  ModelConfig off = cfg;
  off.prompts_enabled = false;
  const std::size_t delta = total - planned_param_count(off);
  require(delta == 20160,
          "prompt delta " + std::to_string(delta) + " != 20160", detail);
  std::cout << "  params total=" << total << " prompt_delta=" << delta
            << "\n";
}

void gradient_oracle_suite(std::string& detail) {
  const auto results = run_gradcheck_suite();
  double worst = 0.0;
  for (const auto& r : results) {
    worst = std::max(worst, r.max_rel_error);
    require(r.passed(),
            r.name + " rel_err " + fmt(r.max_rel_error) + " >= tol " +
                fmt(r.tolerance),
            detail);
  }
  std::cout << "  " << results.size()
            << " gradient checks, worst rel err = " << fmt(worst) << "\n";
}

void loss_formula_oracles(std::string& detail) {
  Rng rng(201);
  Tensor z = Tensor::zeros({2, 2, 4, 4});
  for (double& v : z.values()) v = rng.normal();
  std::vector<int> t(32);
  for (auto& v : t) v = static_cast<int>(rng.below(2));
  const LossWeights w;

  const double ce = cross_entropy(nullptr, z, t).item();
  const double dice = soft_dice_loss(nullptr, z, t, w.dice_smooth).item();
  const double combined = seg_loss(nullptr, z, t, w).item();
  require(std::abs(combined - (0.4 * ce + 0.6 * dice)) < 1e-12,
          "seg_loss recomposition diff " +
              fmt(std::abs(combined - (0.4 * ce + 0.6 * dice))),
          detail);

  const double ln2 = cross_entropy(nullptr, Tensor::zeros({1, 2}), {0}).item();
  const double ln4 = cross_entropy(nullptr, Tensor::zeros({1, 4}), {1}).item();
  require(std::abs(ln2 - std::log(2.0)) < 1e-12, "uniform CE K=2 != ln 2",
          detail);
  require(std::abs(ln4 - std::log(4.0)) < 1e-12, "uniform CE K=4 != ln 4",
          detail);

  Tensor z2 = Tensor::zeros({3, 2});
  Tensor z4 = Tensor::zeros({3, 4});
  for (double& v : z2.values()) v = rng.normal();
  for (double& v : z4.values()) v = rng.normal();
  const std::vector<int> labels{1, 2, 0};
  const std::vector<int> ways{2, 4, 2};
  const double base = cls_loss(nullptr, z2, z4, labels, ways).item();
  const double scaled =
      final_loss(nullptr, TaskKind::kCls,
                 cls_loss(nullptr, z2, z4, labels, ways), w)
          .item();
  require(scaled == 10.0 * base, "final_loss(cls) != 10 * cls_loss exactly",
          detail);
}

void overfit_sanity(std::string& detail) {
  const fs::path dir = fresh_dir("overfit");
  const SyntheticDataset ds = gen_synthetic(dir, 8, 8, 64, 7);

  TrainConfig tc;
  tc.epochs = 50;
  tc.learning_rate = 4e-3;  // desk-scale from-scratch rate
  tc.weight_decay = 0.0;
  tc.batch_size_seg = 2;
  tc.batch_size_cls = 4;
  tc.seed = 7;
  tc.eval_every = 0;
  tc.augment_enabled = false;  // fit the raw training set

  TrainState state = init_train_state(ModelConfig::toy(), tc);
  EpochReport first{}, last{};
  for (int e = 0; e < tc.epochs; ++e) {
    const EpochReport r = train_epoch(state, ds.manifest, ds.manifest, tc);
    if (e == 0) first = r;
    last = r;
  }
  require(last.mean_seg_loss < 0.1 * first.mean_seg_loss,
          "seg loss " + fmt(last.mean_seg_loss) + " not < 10% of initial " +
              fmt(first.mean_seg_loss),
          detail);
  require(last.mean_cls_loss < 0.1 * first.mean_cls_loss,
          "cls loss " + fmt(last.mean_cls_loss) + " not < 10% of initial " +
              fmt(first.mean_cls_loss),
          detail);

  double dice = 0.0, acc2 = -1.0, acc4 = -1.0;
  for (const MetricRow& row : evaluate(state, ds.manifest, "train")) {
    if (row.metric == "dice_fg") dice = row.value;
    if (row.metric == "acc2") acc2 = row.value;
    if (row.metric == "acc4") acc4 = row.value;
  }
  require(dice > 0.90, "train foreground dice " + fmt(dice) + " <= 0.90",
          detail);
  require(acc2 == 1.0, "2-way train accuracy " + fmt(acc2) + " != 1.0",
          detail);
  require(acc4 == 1.0, "4-way train accuracy " + fmt(acc4) + " != 1.0",
          detail);
  std::cout << "  seg loss " << fmt(first.mean_seg_loss) << " -> "
            << fmt(last.mean_seg_loss) << ", cls loss "
            << fmt(first.mean_cls_loss) << " -> " << fmt(last.mean_cls_loss)
            << ", dice " << fmt(dice) << ", acc2 " << fmt(acc2) << ", acc4 "
            << fmt(acc4) << "\n";
}

void multi_task_isolation(std::string& detail) {
  const fs::path dir = fresh_dir("isolation");
  const SyntheticDataset ds = gen_synthetic(dir, 4, 0, 64, 11);
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.weight_decay = 0.0;  // criterion is stated at wd = 0
  tc.batch_size_seg = 2;
  tc.batch_size_cls = 2;
  tc.seed = 11;
  TrainState state = init_train_state(ModelConfig::toy(), tc);

  std::vector<std::pair<std::string, std::vector<double>>> heads;
  for (const auto& [name, p] : state.params.entries()) {
    if (name.rfind("head.cls", 0) == 0) heads.emplace_back(name, p.values());
  }
  train_epoch(state, ds.manifest, ds.manifest, tc);
  for (const auto& [name, before] : heads) {
    require(state.params.at(name).values() == before,
            name + " changed during a pure-seg epoch", detail);
  }

  // 4-way-only backward leaves 2-way head gradients at zero.
  Model model(state.model_config, state.params);
  state.params.zero_grad();
  Rng rng(12);
  Tensor image = Tensor::zeros({2, 3, 64, 64});
  for (double& v : image.values()) v = rng.uniform();
  Tape tape;
  const auto fwd = model.forward(&tape, image,
                                 {{0, 0, 1, 0}, {1, 1, 1, 1}}, TaskKind::kCls);
  tape.backward(cls_loss(&tape, fwd.cls.two_way, fwd.cls.four_way, {0, 3},
                         {4, 4}));
  require(!state.params.at("head.cls2.weight").grad_allocated() &&
              !state.params.at("head.cls2.bias").grad_allocated(),
          "2-way head received gradient from a 4-way-only loss", detail);
}

void determinism(std::string& detail) {
  // gen-data twice -> identical bytes.
  const fs::path d1 = fresh_dir("det_a");
  const fs::path d2 = fresh_dir("det_b");
  const SyntheticDataset a = gen_synthetic(d1, 4, 4, 64, 3);
  gen_synthetic(d2, 4, 4, 64, 3);
  bool same = file_bytes(d1 / "manifest.json") ==
              file_bytes(d2 / "manifest.json");
  for (const auto& rec : a.manifest.samples) {
    same = same &&
           file_bytes(d1 / rec.image_path) == file_bytes(d2 / rec.image_path);
    if (rec.has_mask()) {
      same = same &&
             file_bytes(d1 / rec.mask_path) == file_bytes(d2 / rec.mask_path);
    }
  }
  require(same, "gen-data outputs differ across identical runs", detail);

  // Trajectories bitwise reproducible; resume equals straight-through.
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.batch_size_seg = 2;
  tc.batch_size_cls = 2;
  tc.seed = 3;
  const ModelConfig mc = ModelConfig::toy();

  auto params_of = [](const TrainState& s) {
    std::vector<double> all;
    for (const auto& [n, p] : s.params.entries()) {
      (void)n;
      all.insert(all.end(), p.values().begin(), p.values().end());
    }
    return all;
  };

  TrainState s1 = init_train_state(mc, tc);
  TrainState s2 = init_train_state(mc, tc);
  for (int e = 0; e < 2; ++e) {
    train_epoch(s1, a.manifest, a.manifest, tc);
    train_epoch(s2, a.manifest, a.manifest, tc);
  }
  require(params_of(s1) == params_of(s2),
          "two identically seeded trainings diverged", detail);

  TrainState s3 = init_train_state(mc, tc);
  train_epoch(s3, a.manifest, a.manifest, tc);
  const fs::path ck = d1 / "mid.uuckpt";
  save_checkpoint(ck, s3, tc);
  LoadedCheckpoint resumed = load_checkpoint(ck);
  train_epoch(resumed.state, a.manifest, a.manifest, resumed.train_config);
  require(params_of(s1) == params_of(resumed.state),
          "checkpoint resume diverged from uninterrupted training", detail);

  const fs::path ck2 = d1 / "mid2.uuckpt";
  save_checkpoint(ck2, s3, tc);
  require(file_bytes(ck) == file_bytes(ck2),
          "checkpoint files not byte-identical", detail);
}

void data_pipeline(std::string& detail) {
  // Split sizes for the stated n.
  auto sizes_for = [](std::size_t n) {
    DatasetManifest m;
    m.image_size = 32;
    for (std::size_t i = 0; i < n; ++i) {
      SampleRecord r;
      r.id = "s" + std::to_string(i);
      r.image_path = "x.pgm";
      r.mask_path = "m.pgm";
      r.task = SampleTask::kSeg;
      m.samples.push_back(r);
    }
    const SplitResult s = split_dataset(m, 9);
    return std::array<std::size_t, 3>{s.train.samples.size(),
                                      s.val.samples.size(),
                                      s.test.samples.size()};
  };
  require(sizes_for(10) == std::array<std::size_t, 3>{7, 1, 2},
          "split sizes wrong for n=10", detail);
  require(sizes_for(100) == std::array<std::size_t, 3>{70, 10, 20},
          "split sizes wrong for n=100", detail);
  require(sizes_for(537) == std::array<std::size_t, 3>{375, 54, 108},
          "split sizes wrong for n=537", detail);

  // PGM/PPM and raw tensor round-trips are exact.
  const fs::path dir = fresh_dir("pipeline");
  Rng rng(31);
  for (int channels : {1, 3}) {
    ImageU8 img;
    img.width = 9;
    img.height = 7;
    img.channels = channels;
    img.pixels.resize(static_cast<std::size_t>(63) * channels);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
    const fs::path f = dir / ("rt" + std::to_string(channels) + ".pnm");
    write_pnm(f, img);
    const ImageU8 back = read_pnm(f);
    require(back.pixels == img.pixels && back.width == img.width &&
                back.height == img.height && back.channels == img.channels,
            "PNM round-trip mismatch", detail);
  }
  Tensor t = Tensor::zeros({2, 3, 4});
  for (double& v : t.values()) v = rng.normal() * 1e6;
  save_tensor(dir / "t.uut", t);
  const Tensor back = load_tensor(dir / "t.uut");
  require(back.shape() == t.shape() && back.values() == t.values(),
          "raw tensor round-trip mismatch", detail);

  // 1000 augmentation draws keep shapes and mask validity.
  AugmentConfig acfg;
  Rng arng(32);
  bool aug_ok = true;
  for (int draw = 0; draw < 1000; ++draw) {
    Tensor image = Tensor::zeros({1, 32, 32});
    for (double& v : image.values()) v = arng.uniform();
    std::vector<int> mask(1024);
    for (auto& v : mask) v = static_cast<int>(arng.below(2));
    augment(image, &mask, acfg, arng);
    aug_ok = aug_ok && image.shape() == Shape{1, 32, 32} &&
             mask.size() == 1024;
    for (double v : image.values()) aug_ok = aug_ok && std::isfinite(v);
    for (int v : mask) aug_ok = aug_ok && (v == 0 || v == 1);
    if (!aug_ok) break;
  }
  require(aug_ok, "augmentation violated shape/validity on random draws",
          detail);
}

}  // namespace

int main() {
  std::cout << "acceptance suite\n";
  criterion("parameter-budget", parameter_budget);
  criterion("gradient-oracle-suite", gradient_oracle_suite);
  criterion("loss-formula-oracles", loss_formula_oracles);
  criterion("overfit-sanity", overfit_sanity);
  criterion("multi-task-isolation", multi_task_isolation);
  criterion("determinism", determinism);
  criterion("data-pipeline", data_pipeline);
  if (g_failures == 0) {
    std::cout << "all acceptance criteria passed\n";
    return 0;
  }
  std::cout << g_failures << " acceptance criteria failed\n";
  return 1;
}
