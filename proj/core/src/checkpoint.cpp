#include "uuconv/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "uuconv/errors.hpp"
#include "uuconv/tensor_io.hpp"

namespace uuconv {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& in, const std::string& where) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw IoError("truncated checkpoint " + where);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in, const std::string& where) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (in.gcount() != 8) throw IoError("truncated checkpoint " + where);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::string get_string(std::istream& in, const std::string& where) {
  const std::uint64_t len = get_u64(in, where);
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (static_cast<std::uint64_t>(in.gcount()) != len) {
    throw IoError("truncated checkpoint " + where);
  }
  return s;
}

constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const TrainState& state,
                     const TrainConfig& train_config) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create checkpoint " + path.string());

  out.write(kCheckpointMagic, 8);
  put_u32(out, kFormatVersion);
  put_string(out, model_config_to_json(state.model_config));
  put_string(out, train_config_to_json(train_config));

  const auto& entries = state.params.entries();
  const auto& m = state.optimizer.moment1();
  const auto& v = state.optimizer.moment2();
  const auto& t = state.optimizer.step_counts();
  if (m.size() != entries.size() || v.size() != entries.size() ||
      t.size() != entries.size()) {
    throw ValidationError("checkpoint: optimizer state does not match "
                          "parameter count");
  }
  put_u64(out, entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, p] = entries[i];
    put_string(out, name);
    write_tensor(out, p);
    write_tensor(out, Tensor::from_values(p.shape(), m[i]));
    write_tensor(out, Tensor::from_values(p.shape(), v[i]));
    put_u64(out, t[i]);
  }
  put_u64(out, state.epoch);
  put_u64(out, state.step_seg);
  put_u64(out, state.step_cls);
  put_u64(out, state.optimizer.global_step());
  put_string(out, state.rng.serialize());
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string where = path.string();

  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw IoError("bad checkpoint magic in " + where);
  }
  const std::uint32_t version = get_u32(in, where);
  if (version != kFormatVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) +
                  " in " + where);
  }

  LoadedCheckpoint ck;
  ck.state.model_config = model_config_from_json(get_string(in, where));
  ck.train_config = train_config_from_json(get_string(in, where));

  const std::uint64_t n = get_u64(in, where);
  std::vector<std::vector<double>> m, v;
  std::vector<std::uint64_t> t;
  m.reserve(n);
  v.reserve(n);
  t.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::string name = get_string(in, where);
    Tensor p = read_tensor(in, where);
    Tensor mi = read_tensor(in, where);
    Tensor vi = read_tensor(in, where);
    if (mi.shape() != p.shape() || vi.shape() != p.shape()) {
      throw IoError("checkpoint " + where + ": moment shape mismatch on '" +
                    name + "'");
    }
    p.set_requires_grad(true);
    ck.state.params.add(name, std::move(p));
    m.push_back(mi.values());
    v.push_back(vi.values());
    t.push_back(get_u64(in, where));
  }
  ck.state.epoch = get_u64(in, where);
  ck.state.step_seg = get_u64(in, where);
  ck.state.step_cls = get_u64(in, where);
  const std::uint64_t global_step = get_u64(in, where);
  ck.state.rng = Rng::deserialize(get_string(in, where));

  // Shape agreement with the embedded config (also catches missing/extra
  // or reordered parameters).
  Model validate_graph(ck.state.model_config, ck.state.params);
  (void)validate_graph;

  ck.state.optimizer = AdamW(ck.state.params, ck.train_config.adamw());
  ck.state.optimizer.restore_state(std::move(m), std::move(v), std::move(t),
                                   global_step, ck.state.params);
  return ck;
}

}  // namespace uuconv
