#include "uuconv/data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "uuconv/augment.hpp"
#include "uuconv/errors.hpp"
#include "uuconv/image_io.hpp"
#include "uuconv/rng.hpp"
#include "uuconv/tensor_io.hpp"

namespace uuconv {

using nlohmann::json;

namespace {

std::string task_string(SampleTask t) {
  switch (t) {
    case SampleTask::kSeg: return "seg";
    case SampleTask::kCls: return "cls";
    case SampleTask::kBoth: return "both";
  }
  return "?";
}

SampleTask task_from_string(const std::string& s) {
  if (s == "seg") return SampleTask::kSeg;
  if (s == "cls") return SampleTask::kCls;
  if (s == "both") return SampleTask::kBoth;
  throw ValidationError("unknown sample task '" + s + "'");
}

}  // namespace

void SampleRecord::validate() const {
  if (id.empty()) throw ValidationError("sample with empty id");
  if (image_path.empty()) {
    throw ValidationError("sample '" + id + "' has no image path");
  }
  const bool needs_mask = task == SampleTask::kSeg || task == SampleTask::kBoth;
  const bool needs_label = task == SampleTask::kCls || task == SampleTask::kBoth;
  if (needs_mask && !has_mask()) {
    throw ValidationError("sample '" + id + "' is a segmentation sample "
                          "without a mask");
  }
  if (needs_label) {
    if (!label.has_value()) {
      throw ValidationError("sample '" + id + "' is a classification sample "
                            "without a label");
    }
    if (way != 2 && way != 4) {
      throw ValidationError("sample '" + id + "' has way " +
                            std::to_string(way) + ", expected 2 or 4");
    }
    if (*label < 0 || *label >= way) {
      throw ValidationError("sample '" + id + "' label " +
                            std::to_string(*label) + " out of range for " +
                            std::to_string(way) + "-way");
    }
  }
}

void DatasetManifest::validate(bool check_files) const {
  if (image_size < 1) {
    throw ValidationError("manifest image_size must be positive");
  }
  prompt_cardinalities.validate();
  std::unordered_set<std::string> ids;
  for (const auto& rec : samples) {
    rec.validate();
    if (!ids.insert(rec.id).second) {
      throw ValidationError("duplicate sample id '" + rec.id + "'");
    }
    // Prompt indices must fit the manifest cardinalities.
    (void)rec.prompts.one_hot(prompt_cardinalities);
    if (check_files) {
      if (!std::filesystem::exists(base_dir / rec.image_path)) {
        throw IoError("missing image file " +
                      (base_dir / rec.image_path).string());
      }
      if (rec.has_mask() && !std::filesystem::exists(base_dir / rec.mask_path)) {
        throw IoError("missing mask file " +
                      (base_dir / rec.mask_path).string());
      }
    }
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("manifest " + path.string() + ": invalid JSON: " + e.what());
  }
  DatasetManifest m;
  m.base_dir = path.parent_path();
  try {
    m.version = j.at("version").get<int>();
    if (m.version != 1) {
      throw ValidationError("unsupported manifest version " +
                            std::to_string(m.version));
    }
    m.image_size = j.at("image_size").get<int>();
    const json& pc = j.at("prompt_cardinalities");
    m.prompt_cardinalities.nature = pc.at("nature").get<int>();
    m.prompt_cardinalities.position = pc.at("position").get<int>();
    m.prompt_cardinalities.task = pc.at("task").get<int>();
    m.prompt_cardinalities.type = pc.at("type").get<int>();
    for (const json& js : j.at("samples")) {
      SampleRecord r;
      r.id = js.at("id").get<std::string>();
      r.image_path = js.at("image").get<std::string>();
      if (js.contains("mask") && !js.at("mask").is_null()) {
        r.mask_path = js.at("mask").get<std::string>();
      }
      if (js.contains("label") && !js.at("label").is_null()) {
        r.label = js.at("label").get<int>();
      }
      if (js.contains("way") && !js.at("way").is_null()) {
        r.way = js.at("way").get<int>();
      }
      const json& pr = js.at("prompts");
      r.prompts.nature = pr.at("nature").get<int>();
      r.prompts.position = pr.at("position").get<int>();
      r.prompts.task = pr.at("task").get<int>();
      r.prompts.type = pr.at("type").get<int>();
      r.task = task_from_string(js.at("task").get<std::string>());
      m.samples.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw IoError("manifest " + path.string() + ": " + e.what());
  }
  m.validate(/*check_files=*/true);
  return m;
}

void save_manifest(const DatasetManifest& m,
                   const std::filesystem::path& path) {
  m.validate(/*check_files=*/false);
  json j;
  j["version"] = m.version;
  j["image_size"] = m.image_size;
  j["prompt_cardinalities"] = {{"nature", m.prompt_cardinalities.nature},
                               {"position", m.prompt_cardinalities.position},
                               {"task", m.prompt_cardinalities.task},
                               {"type", m.prompt_cardinalities.type}};
  json samples = json::array();
  for (const auto& r : m.samples) {
    json js;
    js["id"] = r.id;
    js["image"] = r.image_path;
    if (r.has_mask()) js["mask"] = r.mask_path;
    if (r.label.has_value()) {
      js["label"] = *r.label;
      js["way"] = r.way;
    }
    js["prompts"] = {{"nature", r.prompts.nature},
                     {"position", r.prompts.position},
                     {"task", r.prompts.task},
                     {"type", r.prompts.type}};
    js["task"] = task_string(r.task);
    samples.push_back(std::move(js));
  }
  j["samples"] = std::move(samples);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create manifest " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing manifest " + path.string());
}

namespace {

Tensor decode_image(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".uut") {
    Tensor t = load_tensor(path);
    if (t.rank() == 2) {
      t = Tensor::from_values({1, t.extent(0), t.extent(1)}, t.values());
    }
    if (t.rank() != 3) {
      throw IoError("raw tensor image " + path.string() +
                    " must be [C,H,W] or [H,W], got " + shape_str(t.shape()));
    }
    return t;
  }
  const ImageU8 img = read_pnm(path);
  const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
  std::vector<double> values(plane * static_cast<std::size_t>(img.channels));
  const double inv = 1.0 / static_cast<double>(img.maxval);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<double>(img.pixels[i]) * inv;
  }
  return Tensor::from_values({static_cast<std::size_t>(img.channels),
                              static_cast<std::size_t>(img.height),
                              static_cast<std::size_t>(img.width)},
                             std::move(values));
}

}  // namespace

Tensor load_image_tensor(const std::filesystem::path& path, int target_size,
                         int target_channels, int* orig_h, int* orig_w) {
  Tensor image = decode_image(path);
  if (orig_h) *orig_h = static_cast<int>(image.extent(1));
  if (orig_w) *orig_w = static_cast<int>(image.extent(2));
  image = resize_bilinear_chw(image, target_size, target_size);
  const int c = static_cast<int>(image.extent(0));
  if (c == target_channels) return image;
  if (c != 1) {
    throw ValidationError("image " + path.string() + " has " +
                          std::to_string(c) + " channels, model expects " +
                          std::to_string(target_channels));
  }
  std::vector<double> rep;
  rep.reserve(image.size() * static_cast<std::size_t>(target_channels));
  for (int i = 0; i < target_channels; ++i) {
    rep.insert(rep.end(), image.values().begin(), image.values().end());
  }
  return Tensor::from_values({static_cast<std::size_t>(target_channels),
                              static_cast<std::size_t>(target_size),
                              static_cast<std::size_t>(target_size)},
                             std::move(rep));
}

LoadedSample load_sample(const DatasetManifest& manifest,
                         const SampleRecord& record, int target_size,
                         int target_channels, int seg_classes) {
  record.validate();
  LoadedSample out;
  out.image = load_image_tensor(manifest.base_dir / record.image_path,
                                target_size, target_channels);

  if (record.has_mask()) {
    const auto mask_file = manifest.base_dir / record.mask_path;
    const ImageU8 m = read_pnm(mask_file);
    if (m.channels != 1) {
      throw IoError("mask " + mask_file.string() + " must be single-channel");
    }
    std::vector<int> labels(m.pixels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const int v = m.pixels[i];
      if (v >= seg_classes) {
        throw ValidationError("mask " + mask_file.string() +
                              " contains class " + std::to_string(v) +
                              " >= seg_classes " +
                              std::to_string(seg_classes));
      }
      labels[i] = v;
    }
    out.mask = resize_nearest_labels(labels, m.height, m.width, target_size,
                                     target_size);
  }
  out.label = record.label;
  return out;
}

SplitResult split_dataset(const DatasetManifest& manifest,
                          std::uint64_t seed) {
  const std::size_t n = manifest.samples.size();
  if (n < 10) {
    throw ValidationError("split_dataset: need at least 10 samples, got " +
                          std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(Rng::mix(seed, 0x73706c6974ULL));  // "split" stream tag
  rng.shuffle(order);

  const std::size_t cut_train = (7 * n) / 10;  // floor(0.7 n)
  const std::size_t cut_val = (8 * n) / 10;    // floor(0.8 n)
  SplitResult result;
  auto fill = [&](DatasetManifest& part, std::size_t lo, std::size_t hi) {
    part.version = manifest.version;
    part.image_size = manifest.image_size;
    part.prompt_cardinalities = manifest.prompt_cardinalities;
    part.base_dir = manifest.base_dir;
    for (std::size_t i = lo; i < hi; ++i) {
      part.samples.push_back(manifest.samples[order[i]]);
    }
  };
  fill(result.train, 0, cut_train);
  fill(result.val, cut_train, cut_val);
  fill(result.test, cut_val, n);
  return result;
}

}  // namespace uuconv
