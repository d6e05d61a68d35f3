#include "robusthar/cleaner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "robusthar/config.hpp"
#include "robusthar/error.hpp"
#include "robusthar/nn/ops.hpp"
#include "robusthar/nn/optimizer.hpp"

namespace robusthar {

namespace {

using nn::Var;

nn::Var weight(Shape shape, double fan_in, std::mt19937_64& rng) {
  return Var::parameter(Tensor::normal(std::move(shape), std::sqrt(2.0 / fan_in), rng));
}

nn::Var zeros(Shape shape) { return Var::parameter(Tensor(std::move(shape))); }

std::string layer_key(const char* part, std::size_t i, const char* what) {
  return std::string(part) + "." + std::to_string(i) + "." + what;
}

void expect_shape(const Var& v, const Shape& shape, const std::string& name) {
  if (!v.defined() || v.shape() != shape) {
    throw ShapeError("dae parameter " + name + " should be " + shape_str(shape) +
                     (v.defined() ? ", got " + shape_str(v.shape()) : ", missing"));
  }
}

}  // namespace

std::array<nn::LayerGeometry, DaeConfig::kLayers> DaeConfig::encoder_geometry() const {
  std::array<nn::LayerGeometry, kLayers> geo;
  std::size_t h = input_h, w = input_w, c = 1;
  for (std::size_t i = 0; i < kLayers; ++i) {
    auto& g = geo[i];
    g.in_h = h;
    g.in_w = w;
    g.in_c = c;
    g.kernel_h = g.kernel_w = kernel;
    g.stride_h = g.stride_w = stride;
    g.pad_h = g.pad_w = padding;
    g.out_kernels = base_kernels << i;
    h = g.out_h();
    w = g.out_w();
    c = g.out_kernels;
  }
  return geo;
}

std::size_t DaeConfig::bottleneck_size() const {
  const auto g = encoder_geometry().back();
  return g.out_h() * g.out_w() * g.out_kernels;
}

void DaeConfig::validate() const {
  if (input_h == 0 || input_w == 0) throw ValueError("dae: input shape must be positive");
  if (base_kernels == 0 || kernel == 0 || stride == 0 || latent_dim == 0) {
    throw ValueError("dae: kernel counts, sizes, stride and latent_dim must be >= 1");
  }
  if (batch_size == 0) throw ValueError("dae: batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !(momentum >= 0.0 && momentum < 1.0)) {
    throw ValueError("dae: learning_rate must be > 0 and momentum in [0,1)");
  }
  for (const auto& g : encoder_geometry()) g.validate();
}

std::vector<Shape> encoder_input_shapes(const DaeConfig& config) {
  std::vector<Shape> out;
  const auto geo = config.encoder_geometry();
  for (const auto& g : geo) out.push_back({g.in_h, g.in_w, g.in_c});
  out.push_back({geo.back().out_h(), geo.back().out_w(), geo.back().out_kernels});
  return out;
}

std::vector<Shape> decoder_shapes(const DaeConfig& config) {
  const auto geo = config.encoder_geometry();
  std::vector<Shape> out{{geo.back().out_h(), geo.back().out_w(), geo.back().out_kernels}};
  for (std::size_t i = DaeConfig::kLayers; i-- > 0;) out.push_back({geo[i].in_h, geo[i].in_w, geo[i].in_c});
  return out;
}

DaeParams DaeParams::init(const DaeConfig& config, StreamSeed seed) {
  config.validate();
  auto rng = seed.engine();
  DaeParams p;
  p.config = config;
  const auto geo = config.encoder_geometry();
  const double k2 = static_cast<double>(config.kernel * config.kernel);
  const double s2 = static_cast<double>(config.stride * config.stride);
  for (std::size_t i = 0; i < DaeConfig::kLayers; ++i) {
    const auto& g = geo[i];
    const Shape kshape{g.out_kernels, g.kernel_h, g.kernel_w, g.in_c};
    p.enc_kernels[i] = weight(kshape, k2 * static_cast<double>(g.in_c), rng);
    p.enc_bias[i] = zeros({g.out_kernels});
  }
  const std::size_t bottleneck = config.bottleneck_size();
  p.enc_dense_w = weight({config.latent_dim, bottleneck}, static_cast<double>(bottleneck), rng);
  p.enc_dense_b = zeros({config.latent_dim});
  p.dec_dense_w = weight({bottleneck, config.latent_dim}, static_cast<double>(config.latent_dim), rng);
  p.dec_dense_b = zeros({bottleneck});
  for (std::size_t i = DaeConfig::kLayers; i-- > 0;) {
    const auto& g = geo[i];
    const Shape kshape{g.out_kernels, g.kernel_h, g.kernel_w, g.in_c};
    p.dec_kernels[i] = weight(kshape, std::max(1.0, k2 * static_cast<double>(g.out_kernels) / s2), rng);
    p.dec_bias[i] = zeros({g.in_c});
  }
  p.check_structure();
  return p;
}

std::vector<nn::Var> DaeParams::parameters() const {
  std::vector<Var> out;
  for (std::size_t i = 0; i < DaeConfig::kLayers; ++i) {
    out.push_back(enc_kernels[i]);
    out.push_back(enc_bias[i]);
  }
  out.insert(out.end(), {enc_dense_w, enc_dense_b, dec_dense_w, dec_dense_b});
  for (std::size_t i = DaeConfig::kLayers; i-- > 0;) {
    out.push_back(dec_kernels[i]);
    out.push_back(dec_bias[i]);
  }
  return out;
}

void DaeParams::check_structure() const {
  config.validate();
  const auto geo = config.encoder_geometry();
  for (std::size_t i = 0; i < DaeConfig::kLayers; ++i) {
    const auto& g = geo[i];
    const Shape kshape{g.out_kernels, g.kernel_h, g.kernel_w, g.in_c};
    expect_shape(enc_kernels[i], kshape, layer_key("enc", i, "kernel"));
    expect_shape(enc_bias[i], {g.out_kernels}, layer_key("enc", i, "bias"));
    expect_shape(dec_kernels[i], kshape, layer_key("dec", i, "kernel"));
    expect_shape(dec_bias[i], {g.in_c}, layer_key("dec", i, "bias"));
  }
  const std::size_t bottleneck = config.bottleneck_size();
  expect_shape(enc_dense_w, {config.latent_dim, bottleneck}, "enc.dense.weight");
  expect_shape(enc_dense_b, {config.latent_dim}, "enc.dense.bias");
  expect_shape(dec_dense_w, {bottleneck, config.latent_dim}, "dec.dense.weight");
  expect_shape(dec_dense_b, {bottleneck}, "dec.dense.bias");

  auto enc = encoder_input_shapes(config);
  std::reverse(enc.begin(), enc.end());
  if (enc != decoder_shapes(config)) throw ShapeError("dae decoder does not mirror the encoder");
}

DaeOutput dae_forward(const DaeParams& params, const Var& input) {
  const auto& cfg = params.config;
  const Tensor& x = input.value();
  const bool batched = x.rank() == 3;
  if (x.rank() < 2 || x.rank() > 3 || x.shape()[x.rank() - 2] != cfg.input_h ||
      x.shape()[x.rank() - 1] != cfg.input_w) {
    throw ShapeError("dae_forward: input " + shape_str(x.shape()) + " does not match configured (" +
                     std::to_string(cfg.input_h) + "," + std::to_string(cfg.input_w) + ")");
  }
  const std::size_t n = batched ? x.shape()[0] : 1;
  const auto geo = cfg.encoder_geometry();

  Var h = nn::reshape(input, {n, cfg.input_h, cfg.input_w, 1});
  for (std::size_t i = 0; i < DaeConfig::kLayers; ++i) {
    h = nn::relu(nn::conv2d(h, params.enc_kernels[i], params.enc_bias[i], geo[i]));
  }
  const std::size_t bottleneck = cfg.bottleneck_size();
  Var z = nn::dense(nn::reshape(h, {n, bottleneck}), params.enc_dense_w, params.enc_dense_b);

  const auto& last = geo.back();
  h = nn::relu(nn::dense(z, params.dec_dense_w, params.dec_dense_b));
  h = nn::reshape(h, {n, last.out_h(), last.out_w(), last.out_kernels});
  for (std::size_t i = DaeConfig::kLayers; i-- > 0;) {
    h = nn::transpose_conv2d(h, params.dec_kernels[i], params.dec_bias[i], geo[i]);
    h = i > 0 ? nn::relu(h) : nn::sigmoid(h);
  }
  if (batched) return {nn::reshape(h, {n, cfg.input_h, cfg.input_w}), z};
  return {nn::reshape(h, {cfg.input_h, cfg.input_w}), nn::reshape(z, {cfg.latent_dim})};
}

DaeTrainResult dae_train(const DaeConfig& config, std::span<const Tensor> segments, const CorruptionSpec& spec,
                         StreamSeed seed) {
  config.validate();
  if (segments.empty()) throw ValueError("dae_train: empty dataset");
  spec.validate(config.input_w);
  for (const auto& x : segments) {
    if (x.shape() != Shape{config.input_h, config.input_w}) {
      throw ShapeError("dae_train: segment " + shape_str(x.shape()) + " does not match the configured input");
    }
  }

  DaeTrainResult result{DaeParams::init(config, seed.child("init")), {}};
  auto params = result.params.parameters();
  auto opt = nn::OptimizerState::rmsprop(config.learning_rate, config.momentum);
  auto shuffle_rng = seed.child("shuffle").engine();
  const StreamSeed corrupt_seed = seed.child("corrupt");

  std::vector<std::size_t> order(segments.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Tensor> targets, inputs;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      targets.clear();
      inputs.clear();
      for (std::size_t j = start; j < end; ++j) {
        const std::size_t idx = order[j];
        targets.push_back(segments[idx]);
        inputs.push_back(corrupt(segments[idx], spec, corrupt_seed.child(epoch).child(idx)).data);
      }
      const Var target(stack(targets));
      const Var input(stack(inputs));
      const Var loss = nn::mse_loss(dae_forward(result.params, input).x_prime, target);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw NumericError("dae_train: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting " +
                           std::to_string(start));
      }
      nn::backward(loss);
      nn::optimizer_step(params, opt);
      nn::zero_grad(params);
      loss_sum += value * static_cast<double>(end - start);
    }
    result.loss_curve.push_back(loss_sum / static_cast<double>(segments.size()));
  }
  return result;
}

DaeTrainResult dae_train(const DaeConfig& config, const SegmentSet& train, const CorruptionSpec& spec,
                         StreamSeed seed) {
  require_train_split(train, "dae_train");
  const auto tensors = train.tensors();
  return dae_train(config, tensors, spec, seed);
}

Tensor clean(const DaeParams& params, const CorruptedSegment& corrupted) {
  return dae_forward(params, Var(corrupted.data)).x_prime.value();
}

std::vector<Tensor> clean_batch(const DaeParams& params, std::span<const Tensor> inputs, std::size_t batch_size) {
  std::vector<Tensor> out;
  out.reserve(inputs.size());
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t start = 0; start < inputs.size(); start += batch_size) {
    const auto chunk = inputs.subspan(start, std::min(batch_size, inputs.size() - start));
    auto cleaned = unstack(dae_forward(params, Var(stack(chunk))).x_prime.value());
    for (auto& t : cleaned) out.push_back(std::move(t));
  }
  return out;
}

Checkpoint DaeParams::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.kind = "dae";
  const auto& c = config;
  ckpt.config = {{"input_h", std::to_string(c.input_h)},
                 {"input_w", std::to_string(c.input_w)},
                 {"base_kernels", std::to_string(c.base_kernels)},
                 {"kernel", std::to_string(c.kernel)},
                 {"stride", std::to_string(c.stride)},
                 {"padding", std::to_string(c.padding)},
                 {"latent_dim", std::to_string(c.latent_dim)},
                 {"learning_rate", format_double(c.learning_rate)},
                 {"momentum", format_double(c.momentum)},
                 {"epochs", std::to_string(c.epochs)},
                 {"batch_size", std::to_string(c.batch_size)}};
  for (std::size_t i = 0; i < DaeConfig::kLayers; ++i) {
    ckpt.arrays.emplace_back(layer_key("enc", i, "kernel"), enc_kernels[i].value());
    ckpt.arrays.emplace_back(layer_key("enc", i, "bias"), enc_bias[i].value());
  }
  ckpt.arrays.emplace_back("enc.dense.weight", enc_dense_w.value());
  ckpt.arrays.emplace_back("enc.dense.bias", enc_dense_b.value());
  ckpt.arrays.emplace_back("dec.dense.weight", dec_dense_w.value());
  ckpt.arrays.emplace_back("dec.dense.bias", dec_dense_b.value());
  for (std::size_t i = 0; i < DaeConfig::kLayers; ++i) {
    ckpt.arrays.emplace_back(layer_key("dec", i, "kernel"), dec_kernels[i].value());
    ckpt.arrays.emplace_back(layer_key("dec", i, "bias"), dec_bias[i].value());
  }
  return ckpt;
}

DaeConfig dae_config_from(const Checkpoint& ckpt) {
  if (ckpt.kind != "dae") throw IoError("checkpoint kind '" + ckpt.kind + "' is not a dae");
  auto cfg = KeyValueConfig::parse("");
  for (const auto& [k, v] : ckpt.config) cfg.set(k, v);
  DaeConfig c;
  c.input_h = cfg.get_size("input_h", 0);
  c.input_w = cfg.get_size("input_w", 0);
  c.base_kernels = cfg.get_size("base_kernels", c.base_kernels);
  c.kernel = cfg.get_size("kernel", c.kernel);
  c.stride = cfg.get_size("stride", c.stride);
  c.padding = cfg.get_size("padding", c.padding);
  c.latent_dim = cfg.get_size("latent_dim", c.latent_dim);
  c.learning_rate = cfg.get_double("learning_rate", c.learning_rate);
  c.momentum = cfg.get_double("momentum", c.momentum);
  c.epochs = cfg.get_size("epochs", c.epochs);
  c.batch_size = cfg.get_size("batch_size", c.batch_size);
  return c;
}

DaeParams DaeParams::from_checkpoint(const Checkpoint& ckpt) {
  DaeParams p;
  p.config = dae_config_from(ckpt);
  auto load = [&ckpt](const std::string& name) { return Var::parameter(ckpt.array(name)); };
  for (std::size_t i = 0; i < DaeConfig::kLayers; ++i) {
    p.enc_kernels[i] = load(layer_key("enc", i, "kernel"));
    p.enc_bias[i] = load(layer_key("enc", i, "bias"));
    p.dec_kernels[i] = load(layer_key("dec", i, "kernel"));
    p.dec_bias[i] = load(layer_key("dec", i, "bias"));
  }
  p.enc_dense_w = load("enc.dense.weight");
  p.enc_dense_b = load("enc.dense.bias");
  p.dec_dense_w = load("dec.dense.weight");
  p.dec_dense_b = load("dec.dense.bias");
  p.check_structure();
  return p;
}

}  // namespace robusthar
