// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#include "c2f/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "json.hpp"

namespace c2f {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', '2', 'F', 'C', 'K', 'P', 'T', '\0'};
constexpr char kTrailer[4] = {'E', 'N', 'D', '\0'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& buf) : buf_(buf) {}

  const unsigned char* take(std::size_t n) {
    if (n > buf_.size() - pos_) throw Error("truncated checkpoint");
    const unsigned char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint8_t u8() { return *take(1); }
  std::uint32_t u32() {
    const auto* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const auto* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  const std::vector<unsigned char>& buf_;
  std::size_t pos_ = 0;
};

json config_to_json(const ModelConfig& cfg) {
  json blocks = json::array();
  for (const auto& b : cfg.blocks)
    blocks.push_back({{"repeats", b.repeats}, {"modules", b.modules}, {"kernel", b.kernel}, {"channels", b.channels}});
  return {{"preset", cfg.preset},
          {"n_features", cfg.n_features},
          {"c1", {{"kernel", cfg.c1.kernel}, {"channels", cfg.c1.channels}}},
          {"blocks", blocks},
          {"c2", {{"kernel", cfg.c2.kernel}, {"channels", cfg.c2.channels}}},
          {"c3_channels", cfg.c3_channels},
          {"n_labels", cfg.n_labels},
          {"bn_eps", cfg.bn_eps},
          {"bn_momentum", cfg.bn_momentum}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.preset = j.at("preset").get<std::string>();
  cfg.n_features = j.at("n_features").get<int>();
  cfg.c1 = {j.at("c1").at("kernel").get<int>(), j.at("c1").at("channels").get<int>()};
  for (const auto& b : j.at("blocks"))
    cfg.blocks.push_back({b.at("repeats").get<int>(), b.at("modules").get<int>(), b.at("kernel").get<int>(),
                          b.at("channels").get<int>()});
  cfg.c2 = {j.at("c2").at("kernel").get<int>(), j.at("c2").at("channels").get<int>()};
  cfg.c3_channels = j.at("c3_channels").get<int>();
  cfg.n_labels = j.at("n_labels").get<int>();
  cfg.bn_eps = j.at("bn_eps").get<double>();
  cfg.bn_momentum = j.at("bn_momentum").get<double>();
  return cfg;
}

json header_json(const ModelConfig& cfg, const Alphabet& alphabet, std::uint64_t step, const std::string& stage) {
  return {{"format_version", kCheckpointVersion},
          {"model_config", config_to_json(cfg)},
          {"alphabet", alphabet.symbols()},
          {"step", step},
          {"stage", stage}};
}

}  // namespace

void save_checkpoint(const Model& model, const OptimState* optimizer, const std::string& stage, const fs::path& path) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  const std::string header = header_json(model.config(), model.alphabet(), model.step, stage).dump();
  w.u64(header.size());
  w.bytes(header.data(), header.size());

  w.u32(static_cast<std::uint32_t>(model.tensors().size()));
  for (const auto& t : model.tensors()) {
    w.str(t.name);
    w.u8(t.trainable ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u64(d);
    for (float v : t.values) w.f32(v);
  }

  w.u8(optimizer ? 1 : 0);
  if (optimizer) {
    w.u64(optimizer->step);
    w.u32(static_cast<std::uint32_t>(optimizer->moments.size()));
    for (const auto& [name, mom] : optimizer->moments) {
      w.str(name);
      w.u8(mom.initialized ? 1 : 0);
      w.f64(mom.v);
      w.u64(mom.m.size());
      for (double v : mom.m) w.f64(v);
    }
  }
  w.bytes(kTrailer, sizeof kTrailer);

  // Write-then-rename so an interrupted save never leaves a torn file.
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write checkpoint " + path.string());
    f.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
    if (!f) throw Error("write failed for checkpoint " + path.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open checkpoint " + path.string());
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    Reader r(buf);
    if (std::memcmp(r.take(sizeof kMagic), kMagic, sizeof kMagic) != 0) throw Error("not a c2f checkpoint");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
      throw Error("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                  std::to_string(kCheckpointVersion) + ")");
    const std::uint64_t header_len = r.u64();
    const auto* hp = r.take(header_len);
    json header;
    try {
      header = json::parse(hp, hp + header_len);
    } catch (const json::exception& e) {
      throw Error(std::string("corrupt header: ") + e.what());
    }

    ModelConfig config;
    Alphabet alphabet;
    std::uint64_t step = 0;
    std::string stage;
    try {
      if (header.at("format_version").get<std::uint32_t>() != version) throw Error("header version mismatch");
      config = config_from_json(header.at("model_config"));
      alphabet = Alphabet::from_ordered(header.at("alphabet").get<std::vector<std::string>>());
      step = header.at("step").get<std::uint64_t>();
      stage = header.at("stage").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(std::string("corrupt header: ") + e.what());
    }

    Model model(config, alphabet);
    model.step = step;
    const std::uint32_t n = r.u32();
    std::set<std::string> seen;
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::string name = r.str();
      if (!model.has_tensor(name)) throw Error("unknown tensor '" + name + "'");
      if (!seen.insert(name).second) throw Error("duplicate tensor '" + name + "'");
      auto& t = model.tensor(name);
      t.trainable = r.u8() != 0;
      const std::uint32_t ndim = r.u32();
      std::vector<std::size_t> shape(ndim);
      for (auto& d : shape) d = r.u64();
      if (shape != t.shape) throw Error("shape mismatch for tensor '" + name + "'");
      for (float& v : t.values) v = r.f32();
    }
    if (seen.size() != model.tensors().size()) throw Error("checkpoint is missing tensors");

    std::optional<OptimState> optimizer;
    if (r.u8() != 0) {
      OptimState st;
      st.step = r.u64();
      const std::uint32_t count = r.u32();
      for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str();
        if (!model.has_tensor(name)) throw Error("optimizer state for unknown tensor '" + name + "'");
        TensorMoments mom;
        mom.initialized = r.u8() != 0;
        mom.v = r.f64();
        const std::uint64_t len = r.u64();
        if (len > buf.size()) throw Error("truncated checkpoint");
        mom.m.resize(len);
        for (double& v : mom.m) v = r.f64();
        st.moments.emplace(name, std::move(mom));
      }
      optimizer = std::move(st);
    }
    if (std::memcmp(r.take(sizeof kTrailer), kTrailer, sizeof kTrailer) != 0) throw Error("corrupt trailer");
    if (!r.done()) throw Error("trailing bytes after checkpoint");
    Checkpoint ck(std::move(model));
    ck.version = version;
    ck.stage = std::move(stage);
    ck.optimizer = std::move(optimizer);
    return ck;
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string checkpoint_header_json(const Checkpoint& ckpt) {
  json h = header_json(ckpt.config, ckpt.alphabet, ckpt.step, ckpt.stage);
  h["has_optimizer"] = ckpt.optimizer.has_value();
  h["parameters"] = ckpt.model.parameter_count();
  return h.dump(2);
}

TransferPolicy transfer_policy_from_name(std::string_view name) {
  if (name == "all") return TransferPolicy::kAll;
  if (name == "encoder_only" || name == "encoder-only") return TransferPolicy::kEncoderOnly;
  throw Error("unknown transfer policy '" + std::string(name) + "'");
}

std::string to_string(TransferPolicy policy) { return policy == TransferPolicy::kAll ? "all" : "encoder_only"; }

Model transfer_init(const ModelConfig& cfg, const Checkpoint& ckpt, TransferPolicy policy,
                    const Alphabet& new_alphabet, const CounterRng& rng) {
  ModelConfig target = cfg;
  target.n_labels = static_cast<int>(new_alphabet.num_labels());
  if (policy == TransferPolicy::kAll && !(ckpt.alphabet == new_alphabet))
    throw Error("policy 'all' requires the checkpoint alphabet to equal the stage alphabet");

  Model model = build_model(target, new_alphabet, rng);
  for (auto& t : model.tensors()) {
    if (policy == TransferPolicy::kEncoderOnly && t.partition != Partition::kEncoder) continue;
    if (!ckpt.model.has_tensor(t.name)) throw Error("checkpoint lacks tensor '" + t.name + "'");
    const auto& src = ckpt.model.tensor(t.name);
    if (src.shape != t.shape) throw Error("shape mismatch for tensor '" + t.name + "'");
    t.values = src.values;
  }
  model.step = ckpt.step;
  return model;
}

}  // namespace c2f
