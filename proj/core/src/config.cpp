#include "uuconv/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "uuconv/errors.hpp"

namespace uuconv {

using nlohmann::json;

std::string task_name(TaskKind task) {
  return task == TaskKind::kSeg ? "seg" : "cls";
}

void PromptCardinalities::validate() const {
  auto check = [](int v, const char* name) {
    if (v < 1) {
      throw ValidationError(std::string("prompt cardinality '") + name +
                            "' must be >= 1, got " + std::to_string(v));
    }
  };
  check(nature, "nature");
  check(position, "position");
  check(task, "task");
  check(type, "type");
}

std::vector<double> PromptSet::one_hot(const PromptCardinalities& cards) const {
  cards.validate();
  auto check = [](int idx, int card, const char* name) {
    if (idx < 0 || idx >= card) {
      throw ValidationError(std::string("prompt index '") + name + "' = " +
                            std::to_string(idx) + " out of range [0, " +
                            std::to_string(card) + ")");
    }
  };
  check(nature, cards.nature, "nature");
  check(position, cards.position, "position");
  check(task, cards.task, "task");
  check(type, cards.type, "type");
  std::vector<double> v(static_cast<std::size_t>(cards.total()), 0.0);
  std::size_t off = 0;
  v[off + static_cast<std::size_t>(nature)] = 1.0;
  off += static_cast<std::size_t>(cards.nature);
  v[off + static_cast<std::size_t>(position)] = 1.0;
  off += static_cast<std::size_t>(cards.position);
  v[off + static_cast<std::size_t>(task)] = 1.0;
  off += static_cast<std::size_t>(cards.task);
  v[off + static_cast<std::size_t>(type)] = 1.0;
  return v;
}

ModelConfig ModelConfig::full_scale() { return ModelConfig{}; }

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.input_size = 64;
  c.stage_depths = {1, 1, 1, 1};
  c.stage_dims = {8, 16, 32, 64};
  c.decoder_channels = 32;
  // Deepest map is 2x2 at 64x64 input, so only bins up to 2 fit.
  c.ppm_bins = {1, 2};
  return c;
}

void ModelConfig::validate() const {
  if (in_channels < 1) {
    throw ValidationError("in_channels must be >= 1, got " +
                          std::to_string(in_channels));
  }
  if (input_size < 32 || input_size % 32 != 0) {
    throw ValidationError("input_size must be a positive multiple of 32 "
                          "(stem /4 plus three /2 downsamplings), got " +
                          std::to_string(input_size));
  }
  for (int d : stage_depths) {
    if (d < 1) {
      throw ValidationError("stage_depths entries must be >= 1, got " +
                            std::to_string(d));
    }
  }
  for (std::size_t i = 0; i + 1 < stage_dims.size(); ++i) {
    if (stage_dims[i] >= stage_dims[i + 1]) {
      throw ValidationError("stage_dims must be strictly increasing, got " +
                            std::to_string(stage_dims[i]) + " before " +
                            std::to_string(stage_dims[i + 1]));
    }
  }
  if (stage_dims[0] < 1) {
    throw ValidationError("stage_dims entries must be positive");
  }
  if (decoder_channels < 1) {
    throw ValidationError("decoder_channels must be >= 1, got " +
                          std::to_string(decoder_channels));
  }
  if (seg_classes < 2) {
    throw ValidationError("seg_classes must be >= 2, got " +
                          std::to_string(seg_classes));
  }
  if (ppm_bins.empty()) {
    throw ValidationError("ppm_bins must not be empty");
  }
  const int deepest = input_size / 32;
  int prev = 0;
  for (int b : ppm_bins) {
    if (b <= prev) {
      throw ValidationError("ppm_bins must be strictly increasing positives");
    }
    if (b > deepest) {
      throw ValidationError("ppm bin " + std::to_string(b) +
                            " exceeds the deepest feature size " +
                            std::to_string(deepest) + " (input_size/32)");
    }
    prev = b;
  }
  prompt_cardinalities.validate();
  if (drop_path != 0.0) {
    throw ValidationError("drop_path scheduling is not supported; set 0.0");
  }
  if (layer_scale_init < 0.0) {
    throw ValidationError("layer_scale_init must be >= 0");
  }
  if (ln_eps <= 0.0) {
    throw ValidationError("ln_eps must be positive");
  }
}

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<const char*> known,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool ok = false;
    for (const char* k : known) {
      if (key == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ValidationError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ModelConfig model_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model config: invalid JSON: ") +
                          e.what());
  }
  if (j.contains("model")) j = j.at("model");
  reject_unknown_keys(j,
                      {"in_channels", "input_size", "stage_depths",
                       "stage_dims", "decoder_channels", "ppm_bins",
                       "seg_classes", "prompt_cardinalities",
                       "prompts_enabled", "drop_path", "layer_scale_init",
                       "ln_eps"},
                      "model config");
  ModelConfig c;
  try {
    read_if(j, "in_channels", c.in_channels);
    read_if(j, "input_size", c.input_size);
    read_if(j, "stage_depths", c.stage_depths);
    read_if(j, "stage_dims", c.stage_dims);
    read_if(j, "decoder_channels", c.decoder_channels);
    read_if(j, "ppm_bins", c.ppm_bins);
    read_if(j, "seg_classes", c.seg_classes);
    if (j.contains("prompt_cardinalities")) {
      const json& p = j.at("prompt_cardinalities");
      reject_unknown_keys(p, {"nature", "position", "task", "type"},
                          "prompt_cardinalities");
      read_if(p, "nature", c.prompt_cardinalities.nature);
      read_if(p, "position", c.prompt_cardinalities.position);
      read_if(p, "task", c.prompt_cardinalities.task);
      read_if(p, "type", c.prompt_cardinalities.type);
    }
    read_if(j, "prompts_enabled", c.prompts_enabled);
    read_if(j, "drop_path", c.drop_path);
    read_if(j, "layer_scale_init", c.layer_scale_init);
    read_if(j, "ln_eps", c.ln_eps);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_config_from_json(ss.str());
}

std::string model_config_to_json(const ModelConfig& c) {
  json j;
  j["in_channels"] = c.in_channels;
  j["input_size"] = c.input_size;
  j["stage_depths"] = c.stage_depths;
  j["stage_dims"] = c.stage_dims;
  j["decoder_channels"] = c.decoder_channels;
  j["ppm_bins"] = c.ppm_bins;
  j["seg_classes"] = c.seg_classes;
  j["prompt_cardinalities"] = {{"nature", c.prompt_cardinalities.nature},
                               {"position", c.prompt_cardinalities.position},
                               {"task", c.prompt_cardinalities.task},
                               {"type", c.prompt_cardinalities.type}};
  j["prompts_enabled"] = c.prompts_enabled;
  j["drop_path"] = c.drop_path;
  j["layer_scale_init"] = c.layer_scale_init;
  j["ln_eps"] = c.ln_eps;
  return j.dump(2);
}

}  // namespace uuconv
