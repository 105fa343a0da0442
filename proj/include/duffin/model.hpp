#pragma once

#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "duffin/ops.hpp"
#include "duffin/rng.hpp"

namespace duffin {

enum class FusionMode { nn, add, dot };

inline std::string fusion_name(FusionMode m) {
  switch (m) {
    case FusionMode::nn: return "nn";
    case FusionMode::add: return "add";
    case FusionMode::dot: return "dot";
  }
  return "nn";
}

inline FusionMode fusion_from_name(const std::string& s) {
  if (s == "nn") return FusionMode::nn;
  if (s == "add") return FusionMode::add;
  if (s == "dot") return FusionMode::dot;
  throw config_error("unknown fusion mode: " + s);
}

struct ModelConfig {
  int ns = 32;           // retained delay rows
  int nt = 32;           // transmit antennas
  int rho_num = 1;       // compression ratio as an exact rational
  int rho_den = 4;
  int t = 64;            // decoder feature channels
  int l = 3;             // ConvNet depth; kernels cycle 3x3, 1x9, 9x1
  int cascade = 2;       // decoder DuffinNet count
  double alpha = 0.3;    // LeakyReLU slope
  double zeta = 1e-5;    // batch-norm epsilon
  double omega_a_init = 1.0;
  double omega_v_init = 0.5;
  int decoder_fnet_channels = 64;
  FusionMode fusion = FusionMode::nn;

  int codeword_len() const {
    const long long total = 2LL * ns * nt * rho_num;
    return static_cast<int>(total / rho_den);
  }

  void validate() const {
    if (ns < 1 || nt < 1) throw config_error("model: ns and nt must be positive");
    if (rho_num < 1 || rho_den < 1) throw config_error("model: rho must be a positive rational");
    if (codeword_len() < 1) throw config_error("model: compression ratio yields an empty codeword");
    if (t < 2) throw config_error("model: decoder channels must be at least 2");
    if (l < 1) throw config_error("model: ConvNet depth must be at least 1");
    if (cascade < 1) throw config_error("model: at least one decoder DuffinNet is required");
    if (alpha <= 0 || alpha >= 1) throw config_error("model: alpha must be in (0,1)");
    if (zeta <= 0) throw config_error("model: zeta must be positive");
    if (decoder_fnet_channels < 1) throw config_error("model: fusion channels must be positive");
  }
};

// Nearest odd integer to (log2(T)+1)/2; exact ties round up.
inline int adaptive_kernel_size(int channels) {
  if (channels < 2) throw config_error("adaptive_kernel_size: channel count must be >= 2");
  const double x = (std::log2(static_cast<double>(channels)) + 1.0) / 2.0;
  int lo = static_cast<int>(std::floor(x));
  if (lo % 2 == 0) --lo;
  if (lo < 1) lo = 1;
  const int hi = lo + 2;
  return (x - lo) < (hi - x) ? lo : hi;
}

namespace detail {

struct KernelSpec {
  int kh, kw, ph, pw;
};

// Table-layout ConvNet kernels; depth beyond three repeats the cycle.
inline KernelSpec convnet_kernel(int layer) {
  static const KernelSpec specs[3] = {{3, 3, 1, 1}, {1, 9, 0, 4}, {9, 1, 4, 0}};
  return specs[layer % 3];
}

}  // namespace detail

enum class ActKind { leaky, sigmoid, none };

// conv -> batch norm -> activation
template <typename T>
struct CompositeConv {
  Var<T> w, b;
  BatchNormState<T> bn;
  detail::KernelSpec spec;
  ActKind act;

  Var<T> forward(const Var<T>& x, Mode mode, T alpha, T zeta) const {
    auto bn_mut = bn;  // state vars are shared handles; struct itself stays const
    auto h = batch_norm(conv2d(x, w, b, 1, 1, spec.ph, spec.pw), bn_mut, mode, zeta);
    switch (act) {
      case ActKind::leaky: return leaky_relu(h, alpha);
      case ActKind::sigmoid: return sigmoid(h);
      case ActKind::none: return h;
    }
    return h;
  }
};

template <typename T>
struct DenseLayer {
  Var<T> w, b;
};

// The two encoder attention FNNs: FC -> BN -> ReLU -> FC -> BN -> Sigmoid.
template <typename T>
struct AttentionFnn {
  DenseLayer<T> fc1, fc2;
  BatchNormState<T> bn1, bn2;

  Var<T> forward(const Var<T>& pooled, Mode mode, T zeta) const {
    const int B = pooled.shape()[0];
    const int c = pooled.shape()[3];
    auto bn1m = bn1;
    auto bn2m = bn2;
    auto h = dense(reshape(pooled, {B, c}), fc1.w, fc1.b);
    const int mid = fc1.w.shape()[0];
    h = relu(batch_norm(reshape(h, {B, 1, 1, mid}), bn1m, mode, zeta));
    h = dense(reshape(h, {B, mid}), fc2.w, fc2.b);
    const int out = fc2.w.shape()[0];
    return sigmoid(batch_norm(reshape(h, {B, 1, 1, out}), bn2m, mode, zeta));
  }
};

template <typename T>
struct FusionNet {
  Var<T> w, b;  // undefined in add/dot modes
};

template <typename T>
struct EncoderNet {
  std::vector<CompositeConv<T>> convnet;
  AttentionFnn<T> fnn_avg, fnn_max;
  Var<T> omega_a, omega_v;
  FusionNet<T> fnet;
  DenseLayer<T> comnet;
};

template <typename T>
struct DecoderDuffin {
  std::vector<CompositeConv<T>> convnet;
  Var<T> atten_kernel, atten_bias;
  FusionNet<T> fnet;
};

template <typename T>
struct DecoderNet {
  DenseLayer<T> prenet_fc;
  CompositeConv<T> prenet_conv;
  std::vector<DecoderDuffin<T>> blocks;
  CompositeConv<T> recnet;
};

template <typename T>
struct EncoderTrace {
  Var<T> conv_features;   // G
  Var<T> atten_features;  // S
  Var<T> fused;           // J
  Var<T> avg_attention;   // a_f
  Var<T> max_attention;   // v_f
  Var<T> combined;        // d
};

template <typename T>
struct DecoderTrace {
  std::vector<Var<T>> gates;  // sigmoid(a_u) per DuffinNet
};

template <typename T>
class Model {
 public:
  ModelConfig config;
  ParameterStore<T> params;
  EncoderNet<T> encoder;
  DecoderNet<T> decoder;

  // Compresses a (B,Ns,Nt,2) normalized image batch into (B,M) codewords.
  Var<T> encode(const Var<T>& image, Mode mode, EncoderTrace<T>* trace = nullptr) const {
    if (image.shape().size() != 4)
      throw shape_error("encoder input must be a (B,Ns,Nt,2) batch, got " +
                        shape_str(image.shape()));
    require_shape(image.value(), {image.shape()[0], config.ns, config.nt, 2}, "encoder input");
    const T alpha = static_cast<T>(config.alpha);
    const T zeta = static_cast<T>(config.zeta);

    Var<T> g = image;
    for (const auto& layer : encoder.convnet) g = layer.forward(g, mode, alpha, zeta);

    auto a = global_pool(PoolKind::avg, image);
    auto v = global_pool(PoolKind::max, image);
    auto a_f = encoder.fnn_avg.forward(a, mode, zeta);
    auto v_f = encoder.fnn_max.forward(v, mode, zeta);
    auto d = add(scale_by_scalar(a_f, encoder.omega_a), scale_by_scalar(v_f, encoder.omega_v));
    auto s = channel_scale(image, d);

    auto fused = fuse(g, s, encoder.fnet);
    if (trace) *trace = {g, s, fused, a_f, v_f, d};

    auto flat = flatten_image(fused);
    return dense(flat, encoder.comnet.w, encoder.comnet.b);
  }

  // Reconstructs a (B,Ns,Nt,2) image in [0,1] from (B,M) codewords.
  Var<T> decode(const Var<T>& codeword, Mode mode, DecoderTrace<T>* trace = nullptr) const {
    if (codeword.shape().size() != 2)
      throw shape_error("decoder input must be a (B,M) batch, got " + shape_str(codeword.shape()));
    const int B = codeword.shape()[0];
    require_shape(codeword.value(), {B, config.codeword_len()}, "decoder input");
    const T alpha = static_cast<T>(config.alpha);
    const T zeta = static_cast<T>(config.zeta);

    auto h = dense(codeword, decoder.prenet_fc.w, decoder.prenet_fc.b);
    auto img = reshape(h, {B, config.ns, config.nt, 2});
    auto x = decoder.prenet_conv.forward(img, mode, alpha, zeta);

    for (const auto& block : decoder.blocks) {
      Var<T> g = x;
      for (const auto& layer : block.convnet) g = layer.forward(g, mode, alpha, zeta);
      auto pooled = global_pool(PoolKind::avg, x);
      const int k = block.atten_kernel.shape()[0];
      auto gate = sigmoid(conv1d(pooled, block.atten_kernel, (k - 1) / 2, block.atten_bias));
      if (trace) trace->gates.push_back(gate);
      auto s = channel_scale(x, gate);
      x = fuse(g, s, block.fnet);
    }
    return decoder.recnet.forward(x, mode, alpha, zeta);
  }

  // Single-sample inference helpers; no graph retained.
  Tensor<T> encode_one(const Tensor<T>& image, Mode mode = Mode::infer) const {
    Tensor<T> batch = image.reshaped({1, config.ns, config.nt, 2});
    auto code = encode(Var<T>::leaf(std::move(batch), false), mode);
    return code.value().reshaped({config.codeword_len()});
  }

  Tensor<T> decode_one(const Tensor<T>& codeword, Mode mode = Mode::infer) const {
    Tensor<T> batch = codeword.reshaped({1, config.codeword_len()});
    auto img = decode(Var<T>::leaf(std::move(batch), false), mode);
    return img.value().reshaped({config.ns, config.nt, 2});
  }

  std::pair<size_t, size_t> param_count() const {
    size_t enc = 0, dec = 0;
    for (const auto& r : params.records()) {
      if (!r.trainable) continue;
      if (r.name.rfind("encoder.", 0) == 0) enc += r.var.value().numel();
      if (r.name.rfind("decoder.", 0) == 0) dec += r.var.value().numel();
    }
    return {enc, dec};
  }

 private:
  Var<T> fuse(const Var<T>& g, const Var<T>& s, const FusionNet<T>& fnet) const {
    switch (config.fusion) {
      case FusionMode::add: return add(g, s);
      case FusionMode::dot: return mul(g, s);
      case FusionMode::nn: break;
    }
    return conv2d(concat_channels(g, s), fnet.w, fnet.b, 1, 1, 1, 1);
  }
};

namespace detail {

template <typename T>
Tensor<T> glorot_uniform(const Shape& shape, size_t fan_in, size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> t(shape);
  for (size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

template <typename T>
CompositeConv<T> make_composite(ParameterStore<T>& ps, const std::string& prefix,
                                const KernelSpec& spec, int cin, int cout, ActKind act,
                                Rng& rng) {
  CompositeConv<T> layer;
  layer.spec = spec;
  layer.act = act;
  const size_t fan_in = static_cast<size_t>(spec.kh) * spec.kw * cin;
  const size_t fan_out = static_cast<size_t>(spec.kh) * spec.kw * cout;
  layer.w = ps.add(prefix + ".conv.w",
                   glorot_uniform<T>({spec.kh, spec.kw, cin, cout}, fan_in, fan_out, rng));
  layer.b = ps.add(prefix + ".conv.b", Tensor<T>({cout}));
  // a sigmoid output layer starts in the targets' dynamic range instead of
  // saturating the unit-variance normalized activations
  const T gamma_init = act == ActKind::sigmoid ? T(0.1) : T(1);
  layer.bn = BatchNormState<T>::create(ps, prefix + ".bn", cout, true, gamma_init);
  return layer;
}

template <typename T>
DenseLayer<T> make_dense(ParameterStore<T>& ps, const std::string& prefix, int in, int out,
                         Rng& rng) {
  DenseLayer<T> layer;
  layer.w = ps.add(prefix + ".w", glorot_uniform<T>({out, in}, in, out, rng));
  layer.b = ps.add(prefix + ".b", Tensor<T>({out}));
  return layer;
}

template <typename T>
AttentionFnn<T> make_fnn(ParameterStore<T>& ps, const std::string& prefix, int channels,
                         Rng& rng) {
  AttentionFnn<T> fnn;
  fnn.fc1 = make_dense(ps, prefix + ".fc1", channels, 1, rng);
  fnn.bn1 = BatchNormState<T>::create(ps, prefix + ".bn1", 1, true);
  fnn.fc2 = make_dense(ps, prefix + ".fc2", 1, channels, rng);
  fnn.bn2 = BatchNormState<T>::create(ps, prefix + ".bn2", channels, true);
  return fnn;
}

template <typename T>
FusionNet<T> make_fnet(ParameterStore<T>& ps, const std::string& prefix, FusionMode mode,
                       int cin, int cout, Rng& rng) {
  FusionNet<T> fnet;
  if (mode != FusionMode::nn) return fnet;  // addition/product variants carry no kernel
  const size_t fan_in = 9ull * cin;
  const size_t fan_out = 9ull * cout;
  fnet.w = ps.add(prefix + ".w", glorot_uniform<T>({3, 3, cin, cout}, fan_in, fan_out, rng));
  fnet.b = ps.add(prefix + ".b", Tensor<T>({cout}));
  return fnet;
}

}  // namespace detail

// Builds every layer with Glorot-uniform weights and zero biases,
// deterministically from the seed. Running statistics start populated at
// (mean 0, var 1) so a freshly built model can run inference.
template <typename T>
Model<T> build_model(const ModelConfig& config, uint64_t seed) {
  config.validate();
  Model<T> model;
  model.config = config;
  Rng rng(seed);
  ParameterStore<T>& ps = model.params;

  // encoder
  for (int layer = 0; layer < config.l; ++layer) {
    model.encoder.convnet.push_back(detail::make_composite<T>(
        ps, "encoder.convnet." + std::to_string(layer), detail::convnet_kernel(layer), 2, 2,
        ActKind::leaky, rng));
  }
  model.encoder.fnn_avg = detail::make_fnn<T>(ps, "encoder.atten.avg", 2, rng);
  model.encoder.fnn_max = detail::make_fnn<T>(ps, "encoder.atten.max", 2, rng);
  model.encoder.omega_a =
      ps.add("encoder.omega_a", Tensor<T>({1}, static_cast<T>(config.omega_a_init)));
  model.encoder.omega_v =
      ps.add("encoder.omega_v", Tensor<T>({1}, static_cast<T>(config.omega_v_init)));
  model.encoder.fnet = detail::make_fnet<T>(ps, "encoder.fnet", config.fusion, 4, 2, rng);
  model.encoder.comnet =
      detail::make_dense<T>(ps, "encoder.comnet", 2 * config.ns * config.nt, config.codeword_len(),
                            rng);

  // decoder
  model.decoder.prenet_fc = detail::make_dense<T>(ps, "decoder.prenet.fc", config.codeword_len(),
                                                  2 * config.ns * config.nt, rng);
  model.decoder.prenet_conv = detail::make_composite<T>(ps, "decoder.prenet.conv", {5, 5, 2, 2}, 2,
                                                        config.t, ActKind::leaky, rng);
  int in_ch = config.t;
  for (int blk = 0; blk < config.cascade; ++blk) {
    const std::string prefix = "decoder.duffin." + std::to_string(blk);
    DecoderDuffin<T> block;
    int c = in_ch;
    for (int layer = 0; layer < config.l; ++layer) {
      block.convnet.push_back(detail::make_composite<T>(ps, prefix + ".convnet." +
                                                                std::to_string(layer),
                                                        detail::convnet_kernel(layer), c,
                                                        config.t, ActKind::leaky, rng));
      c = config.t;
    }
    const int k = adaptive_kernel_size(in_ch);
    block.atten_kernel = ps.add(prefix + ".atten.kernel",
                                detail::glorot_uniform<T>({k}, k, k, rng));
    block.atten_bias = ps.add(prefix + ".atten.bias", Tensor<T>({1}));
    block.fnet = detail::make_fnet<T>(ps, prefix + ".fnet", config.fusion, config.t + in_ch,
                                      config.decoder_fnet_channels, rng);
    model.decoder.blocks.push_back(std::move(block));
    in_ch = config.fusion == FusionMode::nn ? config.decoder_fnet_channels : config.t;
  }
  model.decoder.recnet = detail::make_composite<T>(ps, "decoder.recnet", {5, 5, 2, 2}, in_ch, 2,
                                                   ActKind::sigmoid, rng);
  return model;
}

}  // namespace duffin
