// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#include "c2f/model.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

namespace c2f {

// ---------------------------------------------------------------------------
// Configuration

ModelConfig ModelConfig::quartznet15x5(int n_labels) {
  ModelConfig cfg;
  cfg.preset = "quartznet15x5";
  cfg.c1 = {33, 256};
  cfg.blocks = {{3, 5, 33, 256}, {3, 5, 39, 256}, {3, 5, 51, 512}, {3, 5, 63, 512}, {3, 5, 75, 512}};
  cfg.c2 = {87, 512};
  cfg.c3_channels = 1024;
  cfg.n_labels = n_labels;
  return cfg;
}

ModelConfig ModelConfig::micro(int n_labels) {
  ModelConfig cfg;
  cfg.preset = "micro";
  cfg.c1 = {9, 32};
  cfg.blocks = {{1, 2, 11, 32}, {1, 2, 13, 64}};
  cfg.c2 = {15, 64};
  cfg.c3_channels = 128;
  cfg.n_labels = n_labels;
  return cfg;
}

ModelConfig ModelConfig::from_preset(std::string_view name, int n_labels) {
  if (name == "quartznet15x5") return quartznet15x5(n_labels);
  if (name == "micro") return micro(n_labels);
  throw Error("unknown model preset '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  auto odd = [](int k) { return k > 0 && k % 2 == 1; };
  if (n_features <= 0) throw Error("n_features must be positive");
  if (!odd(c1.kernel) || !odd(c2.kernel)) throw Error("kernel sizes must be odd");
  if (c1.channels <= 0 || c2.channels <= 0 || c3_channels <= 0) throw Error("channel counts must be positive");
  for (const auto& b : blocks) {
    if (!odd(b.kernel)) throw Error("kernel sizes must be odd");
    if (b.repeats <= 0 || b.modules <= 0 || b.channels <= 0) throw Error("block dimensions must be positive");
  }
  if (n_labels < 2) throw Error("n_labels must be at least 2");
  if (!(bn_eps > 0) || bn_momentum < 0 || bn_momentum >= 1) throw Error("invalid normalization settings");
}

std::size_t output_length(std::size_t input_len, const ModelConfig&) { return (input_len + 1) / 2; }

// ---------------------------------------------------------------------------
// Topology

namespace {

// [depthwise] -> pointwise -> [batch norm]
struct ConvUnit {
  std::string prefix;
  int kernel = 0;  // 0: no depthwise stage
  int stride = 1;
  int cin = 0;
  int cout = 0;
  bool bn = true;
  Partition partition = Partition::kEncoder;
};

struct Topology {
  struct Block {
    std::vector<std::size_t> modules;
    std::size_t skip;
  };
  std::vector<ConvUnit> units;
  std::size_t c1 = 0;
  std::vector<Block> blocks;
  std::size_t c2 = 0, c3 = 0, c4 = 0;
};

Topology make_topology(const ModelConfig& cfg) {
  Topology topo;
  auto add = [&](ConvUnit u) {
    topo.units.push_back(std::move(u));
    return topo.units.size() - 1;
  };
  topo.c1 = add({"encoder.c1", cfg.c1.kernel, 2, cfg.n_features, cfg.c1.channels});
  int channels = cfg.c1.channels;
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    const auto& spec = cfg.blocks[i];
    for (int s = 0; s < spec.repeats; ++s) {
      const std::string name = "encoder.b" + std::to_string(i + 1) + ".s" + std::to_string(s + 1);
      Topology::Block block;
      int cin = channels;
      for (int r = 0; r < spec.modules; ++r) {
        block.modules.push_back(add({name + ".m" + std::to_string(r + 1), spec.kernel, 1, cin, spec.channels}));
        cin = spec.channels;
      }
      block.skip = add({name + ".skip", 0, 1, channels, spec.channels});
      topo.blocks.push_back(std::move(block));
      channels = spec.channels;
    }
  }
  topo.c2 = add({"encoder.c2", cfg.c2.kernel, 1, channels, cfg.c2.channels});
  topo.c3 = add({"encoder.c3", 0, 1, cfg.c2.channels, cfg.c3_channels});
  topo.c4 = add({"decoder.c4", 0, 1, cfg.c3_channels, cfg.n_labels, false, Partition::kDecoder});
  return topo;
}

template <typename T>
void add_tensor(std::vector<NamedTensor<T>>& out, const ConvUnit& u, const std::string& suffix,
                std::vector<std::size_t> shape, TensorRole role, T fill) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  NamedTensor<T> t;
  t.name = u.prefix + suffix;
  t.shape = std::move(shape);
  t.values.assign(n, fill);
  t.partition = u.partition;
  t.role = role;
  t.trainable = t.is_parameter();
  out.push_back(std::move(t));
}

// Tensor indices of one unit inside the model's tensor list.
struct UnitParams {
  std::size_t dw_w = 0, dw_b = 0, pw_w = 0, pw_b = 0, gamma = 0, beta = 0, mean = 0, var = 0;
};

template <typename T>
std::vector<UnitParams> resolve(const BasicModel<T>& model, const Topology& topo) {
  std::vector<UnitParams> out;
  for (const auto& u : topo.units) {
    UnitParams p;
    if (u.kernel > 0) {
      p.dw_w = model.index_of(u.prefix + ".dw.weight");
      p.dw_b = model.index_of(u.prefix + ".dw.bias");
    }
    p.pw_w = model.index_of(u.prefix + ".pw.weight");
    p.pw_b = model.index_of(u.prefix + ".pw.bias");
    if (u.bn) {
      p.gamma = model.index_of(u.prefix + ".bn.gamma");
      p.beta = model.index_of(u.prefix + ".bn.beta");
      p.mean = model.index_of(u.prefix + ".bn.running_mean");
      p.var = model.index_of(u.prefix + ".bn.running_var");
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model container

template <typename T>
BasicModel<T>::BasicModel(ModelConfig cfg, Alphabet alphabet) : config_(std::move(cfg)), alphabet_(std::move(alphabet)) {
  config_.validate();
  if (static_cast<std::size_t>(config_.n_labels) != alphabet_.num_labels())
    throw Error("model has " + std::to_string(config_.n_labels) + " labels but the alphabet needs " +
                std::to_string(alphabet_.num_labels()));
  const Topology topo = make_topology(config_);
  for (const auto& u : topo.units) {
    const auto cin = static_cast<std::size_t>(u.cin), cout = static_cast<std::size_t>(u.cout);
    if (u.kernel > 0) {
      add_tensor<T>(tensors_, u, ".dw.weight", {static_cast<std::size_t>(u.kernel), cin}, TensorRole::kWeight, T{0});
      add_tensor<T>(tensors_, u, ".dw.bias", {cin}, TensorRole::kBias, T{0});
    }
    add_tensor<T>(tensors_, u, ".pw.weight", {cin, cout}, TensorRole::kWeight, T{0});
    add_tensor<T>(tensors_, u, ".pw.bias", {cout}, TensorRole::kBias, T{0});
    if (u.bn) {
      add_tensor<T>(tensors_, u, ".bn.gamma", {cout}, TensorRole::kGain, T{1});
      add_tensor<T>(tensors_, u, ".bn.beta", {cout}, TensorRole::kShift, T{0});
      add_tensor<T>(tensors_, u, ".bn.running_mean", {cout}, TensorRole::kRunningMean, T{0});
      add_tensor<T>(tensors_, u, ".bn.running_var", {cout}, TensorRole::kRunningVar, T{1});
    }
  }
  for (std::size_t i = 0; i < tensors_.size(); ++i) index_.emplace(tensors_[i].name, i);
}

template <typename T>
std::size_t BasicModel<T>::index_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("no tensor named '" + std::string(name) + "'");
  return it->second;
}

template <typename T>
bool BasicModel<T>::has_tensor(std::string_view name) const {
  return index_.find(name) != index_.end();
}

template <typename T>
NamedTensor<T>& BasicModel<T>::tensor(std::string_view name) {
  return tensors_[index_of(name)];
}

template <typename T>
const NamedTensor<T>& BasicModel<T>::tensor(std::string_view name) const {
  return tensors_[index_of(name)];
}

template <typename T>
std::size_t BasicModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_)
    if (t.is_parameter()) n += t.values.size();
  return n;
}

template class BasicModel<float>;
template class BasicModel<double>;

// ---------------------------------------------------------------------------
// Initialization

double glorot_bound(const ModelConfig&, std::string_view name, const std::vector<std::size_t>& shape) {
  // Fans follow the framework convention for Conv1d weights: a depthwise
  // kernel [K x C] is stored as C filters of one input channel.
  double fan_in = 0, fan_out = 0;
  if (name.ends_with(".dw.weight")) {
    fan_in = static_cast<double>(shape[0]);
    fan_out = static_cast<double>(shape[0] * shape[1]);
  } else if (name.ends_with(".pw.weight")) {
    fan_in = static_cast<double>(shape[0]);
    fan_out = static_cast<double>(shape[1]);
  } else {
    throw Error("'" + std::string(name) + "' is not a kernel");
  }
  return std::sqrt(6.0 / (fan_in + fan_out));
}

double glorot_bound(const ModelConfig& cfg, const NamedTensor<float>& tensor) {
  return glorot_bound(cfg, tensor.name, tensor.shape);
}

namespace {

void glorot_fill(const ModelConfig& cfg, NamedTensor<float>& t, const CounterRng& rng) {
  const double a = glorot_bound(cfg, t);
  CounterRng stream = rng.split("glorot:" + t.name);
  for (float& v : t.values) {
    float w = static_cast<float>(stream.uniform(-a, a));
    // Rounding to float can land on the open bound; keep |w| <= a.
    if (std::abs(static_cast<double>(w)) > a) w = std::nextafter(w, 0.0f);
    v = w;
  }
}

void reset_tensor(const ModelConfig& cfg, NamedTensor<float>& t, const CounterRng& rng) {
  switch (t.role) {
    case TensorRole::kWeight:
      glorot_fill(cfg, t, rng);
      break;
    case TensorRole::kBias:
    case TensorRole::kShift:
    case TensorRole::kRunningMean:
      std::fill(t.values.begin(), t.values.end(), 0.0f);
      break;
    case TensorRole::kGain:
    case TensorRole::kRunningVar:
      std::fill(t.values.begin(), t.values.end(), 1.0f);
      break;
  }
}

}  // namespace

Model build_model(const ModelConfig& cfg, const Alphabet& alphabet, const CounterRng& rng) {
  Model model(cfg, alphabet);
  for (auto& t : model.tensors()) reset_tensor(cfg, t, rng);
  model.mode = Mode::kTrain;
  return model;
}

Model swap_decoder(const Model& model, const Alphabet& new_alphabet, const CounterRng& rng) {
  ModelConfig cfg = model.config();
  cfg.n_labels = static_cast<int>(new_alphabet.num_labels());
  Model out(cfg, new_alphabet);
  out.mode = model.mode;
  out.step = model.step;
  for (auto& t : out.tensors()) {
    if (t.partition == Partition::kEncoder) {
      const auto& src = model.tensor(t.name);
      t.values = src.values;
      t.trainable = src.trainable;
    } else {
      reset_tensor(cfg, t, rng);
    }
  }
  return out;
}

std::string partition_digest(const Model& model, Partition partition) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  for (const auto& t : model.tensors()) {
    if (t.partition != partition) continue;
    EVP_DigestUpdate(ctx.get(), t.name.data(), t.name.size() + 1);
    for (auto d : t.shape) {
      const auto d64 = static_cast<std::uint64_t>(d);
      EVP_DigestUpdate(ctx.get(), &d64, sizeof d64);
    }
    EVP_DigestUpdate(ctx.get(), t.values.data(), t.values.size() * sizeof(float));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward / backward

template <typename T>
struct ForwardCache<T>::Impl {
  struct Unit {
    SequenceBatch<T> input;
    SequenceBatch<T> dw_out;  // empty without a depthwise stage
    SequenceBatch<T> xhat;    // normalized pre-affine activations
    std::vector<T> inv_std;
    SequenceBatch<T> post;    // output after ReLU, when one follows
  };
  std::vector<Unit> units;
  bool encoder_trainable = false;
};

template <typename T>
ForwardCache<T>::ForwardCache() = default;
template <typename T>
ForwardCache<T>::~ForwardCache() = default;
template <typename T>
ForwardCache<T>::ForwardCache(ForwardCache&&) noexcept = default;
template <typename T>
ForwardCache<T>& ForwardCache<T>::operator=(ForwardCache&&) noexcept = default;
template <typename T>
bool ForwardCache<T>::empty() const {
  return !impl || impl->units.empty();
}
template <typename T>
void ForwardCache<T>::clear() {
  impl.reset();
}
template <typename T>
std::uint64_t ForwardCache<T>::activation_signature() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  if (!impl) return h;
  for (const auto& u : impl->units) {
    for (std::size_t b = 0; b < u.post.batch; ++b)
      for (std::size_t t = 0; t < u.post.lens[b]; ++t)
        for (std::size_t c = 0; c < u.post.channels; ++c) {
          h ^= u.post.frame(b, t)[c] > T{0} ? 1u : 2u;
          h *= 0x100000001b3ull;
        }
  }
  return h;
}

template class ForwardCache<float>;
template class ForwardCache<double>;

namespace {

template <typename T>
SequenceBatch<T> like(const SequenceBatch<T>& x, std::size_t steps, std::size_t channels) {
  SequenceBatch<T> out(x.batch, steps, channels);
  out.lens = x.lens;
  return out;
}

template <typename T>
SequenceBatch<T> depthwise_forward(const SequenceBatch<T>& x, const std::vector<T>& w, const std::vector<T>& bias,
                                   int kernel, int stride) {
  const std::size_t steps = stride == 2 ? (x.steps + 1) / 2 : x.steps;
  const std::size_t ch = x.channels;
  SequenceBatch<T> y = like(x, steps, ch);
  const long pad = (kernel - 1) / 2;
  for (std::size_t b = 0; b < x.batch; ++b) {
    const std::size_t len_in = x.lens[b];
    const std::size_t len_out = stride == 2 ? (len_in + 1) / 2 : len_in;
    y.lens[b] = len_out;
    for (std::size_t t = 0; t < len_out; ++t) {
      T* out = y.frame(b, t);
      for (std::size_t c = 0; c < ch; ++c) out[c] = bias[c];
      const long base = static_cast<long>(t) * stride - pad;
      const long k0 = std::max<long>(0, -base);
      const long k1 = std::min<long>(kernel, static_cast<long>(len_in) - base);
      for (long k = k0; k < k1; ++k) {
        const T* in = x.frame(b, static_cast<std::size_t>(base + k));
        const T* wk = w.data() + static_cast<std::size_t>(k) * ch;
        for (std::size_t c = 0; c < ch; ++c) out[c] += wk[c] * in[c];
      }
    }
  }
  return y;
}

template <typename T>
SequenceBatch<T> depthwise_backward(const SequenceBatch<T>& dy, const SequenceBatch<T>& x, const std::vector<T>& w,
                                    int kernel, int stride, std::vector<T>* dw, std::vector<T>* dbias,
                                    bool need_dx) {
  const std::size_t ch = x.channels;
  SequenceBatch<T> dx;
  if (need_dx) dx = like(x, x.steps, ch);
  const long pad = (kernel - 1) / 2;
  for (std::size_t b = 0; b < x.batch; ++b) {
    const std::size_t len_in = x.lens[b];
    for (std::size_t t = 0; t < dy.lens[b]; ++t) {
      const T* g = dy.frame(b, t);
      if (dbias)
        for (std::size_t c = 0; c < ch; ++c) (*dbias)[c] += g[c];
      const long base = static_cast<long>(t) * stride - pad;
      const long k0 = std::max<long>(0, -base);
      const long k1 = std::min<long>(kernel, static_cast<long>(len_in) - base);
      for (long k = k0; k < k1; ++k) {
        const auto src = static_cast<std::size_t>(base + k);
        const std::size_t off = static_cast<std::size_t>(k) * ch;
        if (dw) {
          const T* in = x.frame(b, src);
          T* dwk = dw->data() + off;
          for (std::size_t c = 0; c < ch; ++c) dwk[c] += g[c] * in[c];
        }
        if (need_dx) {
          T* d = dx.frame(b, src);
          const T* wk = w.data() + off;
          for (std::size_t c = 0; c < ch; ++c) d[c] += g[c] * wk[c];
        }
      }
    }
  }
  return dx;
}

template <typename T>
SequenceBatch<T> pointwise_forward(const SequenceBatch<T>& x, const std::vector<T>& w, const std::vector<T>& bias,
                                   std::size_t cout) {
  const std::size_t cin = x.channels;
  SequenceBatch<T> y = like(x, x.steps, cout);
  for (std::size_t b = 0; b < x.batch; ++b) {
    for (std::size_t t = 0; t < x.lens[b]; ++t) {
      const T* in = x.frame(b, t);
      T* out = y.frame(b, t);
      for (std::size_t j = 0; j < cout; ++j) out[j] = bias[j];
      for (std::size_t k = 0; k < cin; ++k) {
        const T v = in[k];
        if (v == T{0}) continue;
        const T* wk = w.data() + k * cout;
        for (std::size_t j = 0; j < cout; ++j) out[j] += v * wk[j];
      }
    }
  }
  return y;
}

template <typename T>
SequenceBatch<T> pointwise_backward(const SequenceBatch<T>& dy, const SequenceBatch<T>& x, const std::vector<T>& w,
                                    std::vector<T>* dw, std::vector<T>* dbias, bool need_dx) {
  const std::size_t cin = x.channels, cout = dy.channels;
  SequenceBatch<T> dx;
  std::vector<T> wt;
  if (need_dx) {
    dx = like(x, x.steps, cin);
    wt.resize(cin * cout);
    for (std::size_t k = 0; k < cin; ++k)
      for (std::size_t j = 0; j < cout; ++j) wt[j * cin + k] = w[k * cout + j];
  }
  for (std::size_t b = 0; b < x.batch; ++b) {
    for (std::size_t t = 0; t < x.lens[b]; ++t) {
      const T* g = dy.frame(b, t);
      const T* in = x.frame(b, t);
      if (dbias)
        for (std::size_t j = 0; j < cout; ++j) (*dbias)[j] += g[j];
      if (dw) {
        for (std::size_t k = 0; k < cin; ++k) {
          const T v = in[k];
          if (v == T{0}) continue;
          T* dwk = dw->data() + k * cout;
          for (std::size_t j = 0; j < cout; ++j) dwk[j] += v * g[j];
        }
      }
      if (need_dx) {
        T* d = dx.frame(b, t);
        for (std::size_t j = 0; j < cout; ++j) {
          const T gj = g[j];
          if (gj == T{0}) continue;
          const T* wj = wt.data() + j * cin;
          for (std::size_t k = 0; k < cin; ++k) d[k] += gj * wj[k];
        }
      }
    }
  }
  return dx;
}

std::size_t valid_frames(const std::vector<std::size_t>& lens) {
  std::size_t n = 0;
  for (auto l : lens) n += l;
  return n;
}

// Normalizes y in place. Batch statistics over valid frames when
// batch_stats, else the running statistics.
template <typename T>
void batchnorm_forward(SequenceBatch<T>& y, NamedTensor<T>& gamma, NamedTensor<T>& beta, NamedTensor<T>& mean,
                       NamedTensor<T>& var, const ModelConfig& cfg, bool batch_stats, bool update_stats,
                       typename ForwardCache<T>::Impl::Unit* cache) {
  const std::size_t ch = y.channels;
  std::vector<double> mu(ch, 0.0), sigma2(ch, 0.0);
  if (batch_stats) {
    const std::size_t n = valid_frames(y.lens);
    if (n == 0) throw Error("batch normalization over an empty batch");
    for (std::size_t b = 0; b < y.batch; ++b)
      for (std::size_t t = 0; t < y.lens[b]; ++t) {
        const T* r = y.frame(b, t);
        for (std::size_t c = 0; c < ch; ++c) mu[c] += r[c];
      }
    for (auto& m : mu) m /= static_cast<double>(n);
    for (std::size_t b = 0; b < y.batch; ++b)
      for (std::size_t t = 0; t < y.lens[b]; ++t) {
        const T* r = y.frame(b, t);
        for (std::size_t c = 0; c < ch; ++c) {
          const double d = r[c] - mu[c];
          sigma2[c] += d * d;
        }
      }
    for (auto& s : sigma2) s /= static_cast<double>(n);
    if (update_stats) {
      const double m = cfg.bn_momentum;
      for (std::size_t c = 0; c < ch; ++c) {
        mean.values[c] = static_cast<T>(m * mean.values[c] + (1.0 - m) * mu[c]);
        var.values[c] = static_cast<T>(m * var.values[c] + (1.0 - m) * sigma2[c]);
      }
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mu[c] = mean.values[c];
      sigma2[c] = var.values[c];
    }
  }
  std::vector<T> inv(ch), shift(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    inv[c] = static_cast<T>(1.0 / std::sqrt(sigma2[c] + cfg.bn_eps));
    shift[c] = static_cast<T>(mu[c]);
  }
  if (cache) {
    cache->xhat = like(y, y.steps, ch);
    cache->inv_std = inv;
  }
  const T* g = gamma.values.data();
  const T* be = beta.values.data();
  for (std::size_t b = 0; b < y.batch; ++b)
    for (std::size_t t = 0; t < y.lens[b]; ++t) {
      T* r = y.frame(b, t);
      T* xh = cache ? cache->xhat.frame(b, t) : nullptr;
      for (std::size_t c = 0; c < ch; ++c) {
        const T n = (r[c] - shift[c]) * inv[c];
        if (xh) xh[c] = n;
        r[c] = g[c] * n + be[c];
      }
    }
}

template <typename T>
SequenceBatch<T> batchnorm_backward(const SequenceBatch<T>& dy, const typename ForwardCache<T>::Impl::Unit& cache,
                                    const std::vector<T>& gamma, bool batch_stats, std::vector<T>* dgamma,
                                    std::vector<T>* dbeta) {
  const std::size_t ch = dy.channels;
  std::vector<double> sum_dy(ch, 0.0), sum_dy_xhat(ch, 0.0);
  for (std::size_t b = 0; b < dy.batch; ++b)
    for (std::size_t t = 0; t < dy.lens[b]; ++t) {
      const T* g = dy.frame(b, t);
      const T* xh = cache.xhat.frame(b, t);
      for (std::size_t c = 0; c < ch; ++c) {
        sum_dy[c] += g[c];
        sum_dy_xhat[c] += g[c] * xh[c];
      }
    }
  if (dbeta)
    for (std::size_t c = 0; c < ch; ++c) (*dbeta)[c] += static_cast<T>(sum_dy[c]);
  if (dgamma)
    for (std::size_t c = 0; c < ch; ++c) (*dgamma)[c] += static_cast<T>(sum_dy_xhat[c]);

  SequenceBatch<T> dx = like(dy, dy.steps, ch);
  const double n = static_cast<double>(valid_frames(dy.lens));
  std::vector<T> scale(ch), mean_dy(ch), mean_dy_xhat(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    scale[c] = gamma[c] * cache.inv_std[c];
    mean_dy[c] = batch_stats ? static_cast<T>(sum_dy[c] / n) : T{0};
    mean_dy_xhat[c] = batch_stats ? static_cast<T>(sum_dy_xhat[c] / n) : T{0};
  }
  for (std::size_t b = 0; b < dy.batch; ++b)
    for (std::size_t t = 0; t < dy.lens[b]; ++t) {
      const T* g = dy.frame(b, t);
      const T* xh = cache.xhat.frame(b, t);
      T* d = dx.frame(b, t);
      for (std::size_t c = 0; c < ch; ++c) d[c] = scale[c] * (g[c] - mean_dy[c] - xh[c] * mean_dy_xhat[c]);
    }
  return dx;
}

template <typename T>
void relu_inplace(SequenceBatch<T>& x) {
  for (auto& v : x.data) v = v > T{0} ? v : T{0};
}

template <typename T>
SequenceBatch<T> relu_backward(SequenceBatch<T> dy, const SequenceBatch<T>& post) {
  for (std::size_t i = 0; i < dy.data.size(); ++i)
    if (!(post.data[i] > T{0})) dy.data[i] = T{0};
  return dy;
}

template <typename T>
bool uses_batch_stats(const BasicModel<T>& model, const UnitParams& p) {
  return model.mode == Mode::kTrain && model.tensors()[p.gamma].trainable;
}

// Runs one unit up to (and including) normalization.
template <typename T>
SequenceBatch<T> unit_forward(BasicModel<T>& model, const ConvUnit& u, const UnitParams& p,
                              const SequenceBatch<T>& x, const ForwardOptions& opts,
                              typename ForwardCache<T>::Impl::Unit* cache) {
  auto& ts = model.tensors();
  const SequenceBatch<T>* pw_in = &x;
  SequenceBatch<T> dw_out;
  if (u.kernel > 0) {
    dw_out = depthwise_forward(x, ts[p.dw_w].values, ts[p.dw_b].values, u.kernel, u.stride);
    pw_in = &dw_out;
  }
  SequenceBatch<T> y = pointwise_forward(*pw_in, ts[p.pw_w].values, ts[p.pw_b].values, static_cast<std::size_t>(u.cout));
  if (u.bn) {
    const bool batch_stats = uses_batch_stats(model, p);
    batchnorm_forward(y, ts[p.gamma], ts[p.beta], ts[p.mean], ts[p.var], model.config(), batch_stats,
                      batch_stats && opts.update_running_stats, cache);
  }
  if (cache) {
    cache->input = x;
    cache->dw_out = std::move(dw_out);
  }
  return y;
}

template <typename T>
std::vector<T>* grad_slot(const BasicModel<T>& model, std::size_t idx, GradientBag<T>& grads) {
  const auto& t = model.tensors()[idx];
  if (!t.trainable) return nullptr;
  auto& g = grads[t.name];
  if (g.empty()) g.assign(t.values.size(), T{0});
  return &g;
}

template <typename T>
SequenceBatch<T> unit_backward(const BasicModel<T>& model, const ConvUnit& u, const UnitParams& p,
                               const typename ForwardCache<T>::Impl::Unit& cache, SequenceBatch<T> dy,
                               GradientBag<T>& grads, bool need_dx) {
  const auto& ts = model.tensors();
  if (u.bn)
    dy = batchnorm_backward(dy, cache, ts[p.gamma].values, uses_batch_stats(model, p), grad_slot(model, p.gamma, grads),
                            grad_slot(model, p.beta, grads));
  const SequenceBatch<T>& pw_in = u.kernel > 0 ? cache.dw_out : cache.input;
  SequenceBatch<T> d = pointwise_backward(dy, pw_in, ts[p.pw_w].values, grad_slot(model, p.pw_w, grads),
                                          grad_slot(model, p.pw_b, grads), need_dx || u.kernel > 0);
  if (u.kernel > 0)
    d = depthwise_backward(d, cache.input, ts[p.dw_w].values, u.kernel, u.stride, grad_slot(model, p.dw_w, grads),
                           grad_slot(model, p.dw_b, grads), need_dx);
  return d;
}

template <typename T>
void add_inplace(SequenceBatch<T>& a, const SequenceBatch<T>& b) {
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

}  // namespace

template <typename T>
SequenceBatch<T> forward(BasicModel<T>& model, const SequenceBatch<T>& input, ForwardCache<T>* cache,
                         ForwardOptions opts) {
  const ModelConfig& cfg = model.config();
  if (input.channels != static_cast<std::size_t>(cfg.n_features))
    throw Error("input has " + std::to_string(input.channels) + " features, model expects " +
                std::to_string(cfg.n_features));
  if (input.lens.size() != input.batch || input.data.size() != input.batch * input.steps * input.channels)
    throw Error("malformed input batch");
  for (auto l : input.lens) {
    if (l > input.steps) throw Error("sequence length exceeds padded length");
    if (l == 0) throw Error("empty sequence in batch");
  }
  if (cache && model.mode != Mode::kTrain) throw Error("caching forward requires train mode");

  const Topology topo = make_topology(cfg);
  const auto params = resolve(model, topo);
  using UnitCache = typename ForwardCache<T>::Impl::Unit;
  std::unique_ptr<typename ForwardCache<T>::Impl> impl;
  if (cache) {
    impl = std::make_unique<typename ForwardCache<T>::Impl>();
    impl->units.resize(topo.units.size());
  }
  auto slot = [&](std::size_t u) -> UnitCache* { return impl ? &impl->units[u] : nullptr; };
  auto run = [&](std::size_t u, const SequenceBatch<T>& x) {
    return unit_forward(model, topo.units[u], params[u], x, opts, slot(u));
  };
  auto keep_post = [&](std::size_t u, const SequenceBatch<T>& y) {
    if (impl) impl->units[u].post = y;
  };

  SequenceBatch<T> x = run(topo.c1, input);
  relu_inplace(x);
  keep_post(topo.c1, x);
  for (const auto& block : topo.blocks) {
    const SequenceBatch<T> block_in = x;
    for (std::size_t r = 0; r < block.modules.size(); ++r) {
      x = run(block.modules[r], x);
      if (r + 1 < block.modules.size()) {
        relu_inplace(x);
        keep_post(block.modules[r], x);
      }
    }
    add_inplace(x, run(block.skip, block_in));
    relu_inplace(x);
    keep_post(block.modules.back(), x);
  }
  for (std::size_t u : {topo.c2, topo.c3}) {
    x = run(u, x);
    relu_inplace(x);
    keep_post(u, x);
  }
  x = run(topo.c4, x);

  if (cache) {
    impl->encoder_trainable = std::any_of(model.tensors().begin(), model.tensors().end(), [](const auto& t) {
      return t.partition == Partition::kEncoder && t.trainable && t.is_parameter();
    });
    cache->impl = std::move(impl);
  }
  return x;
}

template <typename T>
GradientBag<T> backward(const BasicModel<T>& model, const ForwardCache<T>& cache, const SequenceBatch<T>& dlogits) {
  if (cache.empty()) throw Error("backward requires a cached forward pass");
  const Topology topo = make_topology(model.config());
  const auto params = resolve(model, topo);
  const auto& units = cache.impl->units;
  if (units.size() != topo.units.size()) throw Error("forward cache does not match the model");
  const auto& out_shape = units[topo.c4].input;
  if (dlogits.batch != out_shape.batch || dlogits.steps != out_shape.steps ||
      dlogits.channels != static_cast<std::size_t>(model.config().n_labels))
    throw Error("gradient shape does not match the logits");

  GradientBag<T> grads;
  const bool deep = cache.impl->encoder_trainable;
  auto back = [&](std::size_t u, SequenceBatch<T> dy, bool need_dx) {
    return unit_backward(model, topo.units[u], params[u], units[u], std::move(dy), grads, need_dx);
  };

  SequenceBatch<T> d = dlogits;
  d.lens = out_shape.lens;
  d = back(topo.c4, std::move(d), deep);
  if (deep) {
    for (std::size_t u : {topo.c3, topo.c2}) d = back(u, relu_backward(std::move(d), units[u].post), true);
    for (auto it = topo.blocks.rbegin(); it != topo.blocks.rend(); ++it) {
      const auto& block = *it;
      SequenceBatch<T> dpre = relu_backward(std::move(d), units[block.modules.back()].post);
      SequenceBatch<T> dskip = back(block.skip, dpre, true);
      d = std::move(dpre);
      for (std::size_t r = block.modules.size(); r-- > 0;) {
        if (r + 1 < block.modules.size()) d = relu_backward(std::move(d), units[block.modules[r]].post);
        d = back(block.modules[r], std::move(d), true);
      }
      add_inplace(d, dskip);
    }
    back(topo.c1, relu_backward(std::move(d), units[topo.c1].post), false);
  }
  return grads;
}

template SequenceBatch<float> forward<float>(BasicModel<float>&, const SequenceBatch<float>&, ForwardCache<float>*,
                                             ForwardOptions);
template SequenceBatch<double> forward<double>(BasicModel<double>&, const SequenceBatch<double>&,
                                               ForwardCache<double>*, ForwardOptions);
template GradientBag<float> backward<float>(const BasicModel<float>&, const ForwardCache<float>&,
                                            const SequenceBatch<float>&);
template GradientBag<double> backward<double>(const BasicModel<double>&, const ForwardCache<double>&,
                                              const SequenceBatch<double>&);

}  // namespace c2f
