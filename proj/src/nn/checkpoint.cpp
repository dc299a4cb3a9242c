#include "morphopt/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace morphopt::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void floats(float* dst, std::size_t n) {
    need(n * sizeof(float));
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

nlohmann::json spec_to_json(const PolicySpec& spec) {
  return {{"obs_dim", spec.obs_dim},
          {"act_dim", spec.act_dim},
          {"hidden", spec.hidden},
          {"init_log_std", spec.init_log_std},
          {"activation", "tanh"}};
}

PolicySpec spec_from_json(const nlohmann::json& j) {
  PolicySpec s;
  s.obs_dim = j.at("obs_dim").get<int>();
  s.act_dim = j.at("act_dim").get<int>();
  s.hidden = j.at("hidden").get<std::vector<int>>();
  s.init_log_std = j.at("init_log_std").get<double>();
  return s;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const PolicyLayout layout(ckpt.spec);
  require(static_cast<std::size_t>(ckpt.params.size()) == layout.size(), "checkpoint parameter count");
  nlohmann::json manifest = {{"format", "morphopt-policy"},
                             {"version", kCheckpointVersion},
                             {"spec", spec_to_json(ckpt.spec)},
                             {"layout", "mean layers, log_std, value layers; weight (in x out) column-major then bias"},
                             {"param_count", layout.size()},
                             {"extra", ckpt.manifest}};
  std::vector<std::string> names{"params"};
  for (const auto& [name, t] : ckpt.extra_tensors) names.push_back(name);
  manifest["tensors"] = names;
  const std::string text = manifest.dump();

  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<uint32_t>(out, kCheckpointVersion);
  put<uint64_t>(out, text.size());
  out += text;
  put<uint64_t>(out, names.size());
  const auto tensor = [&](const Vector<float>& v) {
    put<uint64_t>(out, static_cast<uint64_t>(v.size()));
    out.append(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(float));
  };
  tensor(ckpt.params);
  for (const auto& [name, t] : ckpt.extra_tensors) tensor(t);
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(sizeof(kCheckpointMagic)) != std::string(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const auto version = in.get<uint32_t>();
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version");
  const auto text_len = in.get<uint64_t>();
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in.take(text_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint manifest: ") + e.what());
  }
  Checkpoint ckpt;
  std::vector<std::string> names;
  try {
    ckpt.spec = spec_from_json(manifest.at("spec"));
    ckpt.manifest = manifest.at("extra");
    names = manifest.at("tensors").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("incomplete checkpoint manifest: ") + e.what());
  }
  const auto count = in.get<uint64_t>();
  if (count != names.size() || count == 0) throw CheckpointError("checkpoint tensor count mismatch");
  for (std::size_t k = 0; k < count; ++k) {
    const auto n = in.get<uint64_t>();
    if (n > bytes.size()) throw CheckpointError("checkpoint tensor length out of range");
    Vector<float> v(static_cast<Eigen::Index>(n));
    in.floats(v.data(), n);
    if (k == 0) {
      ckpt.params = std::move(v);
    } else {
      ckpt.extra_tensors.emplace_back(names[k], std::move(v));
    }
  }
  if (!in.done()) throw CheckpointError("trailing bytes after checkpoint");
  try {
    if (static_cast<std::size_t>(ckpt.params.size()) != PolicyLayout(ckpt.spec).size()) {
      throw CheckpointError("parameter count does not match the network spec");
    }
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("invalid network spec in checkpoint: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write-then-rename so an interrupted save never leaves a torn file.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace morphopt::nn
