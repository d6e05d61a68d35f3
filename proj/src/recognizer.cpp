#include "robusthar/recognizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "robusthar/config.hpp"
#include "robusthar/error.hpp"
#include "robusthar/nn/optimizer.hpp"

namespace robusthar {

namespace {

using nn::Var;

void expect_shape(const Var& v, const Shape& shape, const std::string& name) {
  if (!v.defined() || v.shape() != shape) {
    throw ShapeError("har parameter " + name + " should be " + shape_str(shape) +
                     (v.defined() ? ", got " + shape_str(v.shape()) : ", missing"));
  }
}

const char* scale_name(nn::AttentionScale s) { return s == nn::AttentionScale::dimension ? "d" : "sqrt_d"; }

}  // namespace

std::size_t HarConfig::height_after(std::size_t layer) const {
  const std::size_t shrink = layer * (kernel_length - 1);
  return input_h > shrink ? input_h - shrink : 0;
}

std::array<nn::LayerGeometry, HarConfig::kLayers> HarConfig::conv_geometry() const {
  std::array<nn::LayerGeometry, kLayers> geo;
  for (std::size_t i = 0; i < kLayers; ++i) {
    auto& g = geo[i];
    g.in_h = height_after(i);
    g.in_w = input_w;
    g.in_c = i == 0 ? 1 : kernels;
    g.kernel_h = kernel_length;
    g.kernel_w = 1;
    g.out_kernels = kernels;
  }
  return geo;
}

void HarConfig::validate() const {
  if (input_h == 0 || input_w == 0) throw ValueError("har: input shape must be positive");
  if (kernels == 0 || kernel_length == 0) throw ValueError("har: kernels and kernel_length must be >= 1");
  if (num_classes < 2) throw ValueError("har: need at least two classes");
  if (batch_size == 0) throw ValueError("har: batch_size must be >= 1");
  if (sequence_length() < 1) {
    throw ShapeError("har: input length " + std::to_string(input_h) + " leaves no time steps after four (" +
                     std::to_string(kernel_length) + ",1) convolutions");
  }
  if (!(learning_rate > 0.0) || !(momentum >= 0.0 && momentum < 1.0) || !(weight_decay >= 0.0)) {
    throw ValueError("har: invalid optimizer hyperparameters");
  }
}

std::vector<std::string> har_layers(const HarConfig& config) {
  std::vector<std::string> out;
  const std::string conv =
      "conv(" + std::to_string(config.kernel_length) + ",1)x" + std::to_string(config.kernels);
  for (std::size_t i = 0; i < HarConfig::kLayers; ++i) {
    out.push_back(conv);
    out.push_back("relu");
  }
  out.push_back("reshape");
  out.push_back(std::string("self_attention/") + scale_name(config.attention_scale));
  out.push_back("flatten");
  out.push_back("dense");
  out.push_back("softmax");
  return out;
}

HarParams HarParams::init(const HarConfig& config, StreamSeed seed) {
  config.validate();
  auto rng = seed.engine();
  HarParams p;
  p.config = config;
  for (std::size_t i = 0; i < HarConfig::kLayers; ++i) {
    const std::size_t in_c = i == 0 ? 1 : config.kernels;
    const double fan_in = static_cast<double>(config.kernel_length * in_c);
    p.conv_kernels[i] = Var::parameter(
        Tensor::normal({config.kernels, config.kernel_length, 1, in_c}, std::sqrt(2.0 / fan_in), rng));
    p.conv_bias[i] = Var::parameter(Tensor({config.kernels}));
  }
  const std::size_t flat = config.sequence_length() * config.embedding_dim();
  p.fc_w = Var::parameter(Tensor::normal({config.num_classes, flat}, std::sqrt(1.0 / static_cast<double>(flat)), rng));
  p.fc_b = Var::parameter(Tensor({config.num_classes}));
  return p;
}

std::vector<nn::Var> HarParams::parameters() const {
  std::vector<Var> out;
  for (std::size_t i = 0; i < HarConfig::kLayers; ++i) {
    out.push_back(conv_kernels[i]);
    out.push_back(conv_bias[i]);
  }
  out.push_back(fc_w);
  out.push_back(fc_b);
  return out;
}

void HarParams::check_structure() const {
  config.validate();
  for (std::size_t i = 0; i < HarConfig::kLayers; ++i) {
    const std::size_t in_c = i == 0 ? 1 : config.kernels;
    expect_shape(conv_kernels[i], {config.kernels, config.kernel_length, 1, in_c},
                 "conv." + std::to_string(i) + ".kernel");
    expect_shape(conv_bias[i], {config.kernels}, "conv." + std::to_string(i) + ".bias");
  }
  const std::size_t flat = config.sequence_length() * config.embedding_dim();
  expect_shape(fc_w, {config.num_classes, flat}, "fc.weight");
  expect_shape(fc_b, {config.num_classes}, "fc.bias");
}

HarTrace har_forward_batch(const HarParams& params, const Var& input) {
  const auto& cfg = params.config;
  const Tensor& x = input.value();
  if (x.rank() != 3 || x.shape()[1] != cfg.input_h || x.shape()[2] != cfg.input_w) {
    throw ShapeError("har_forward: input " + shape_str(x.shape()) + " does not match configured (" +
                     std::to_string(cfg.input_h) + "," + std::to_string(cfg.input_w) + ")");
  }
  const std::size_t n = x.shape()[0];
  const auto geo = cfg.conv_geometry();
  Var h = nn::reshape(input, {n, cfg.input_h, cfg.input_w, 1});
  for (std::size_t i = 0; i < HarConfig::kLayers; ++i) {
    h = nn::relu(nn::conv2d(h, params.conv_kernels[i], params.conv_bias[i], geo[i]));
  }
  const std::size_t len = cfg.sequence_length(), dim = cfg.embedding_dim();
  // [N, H4, W0, f] is already laid out as H4 rows of (channel, kernel).
  auto attended = nn::self_attention(nn::reshape(h, {n, len, dim}), cfg.attention_scale);
  Var logits = nn::dense(nn::reshape(attended.output, {n, len * dim}), params.fc_w, params.fc_b);
  return {h, attended.weights, logits, nn::softmax_rows(logits)};
}

Tensor har_forward(const HarParams& params, const Tensor& segment) {
  const auto& cfg = params.config;
  if (segment.shape() != Shape{cfg.input_h, cfg.input_w}) {
    throw ShapeError("har_forward: segment " + shape_str(segment.shape()) + " does not match configured input");
  }
  auto trace = har_forward_batch(params, Var(segment.reshaped({1, cfg.input_h, cfg.input_w})));
  return trace.probabilities.value().reshaped({cfg.num_classes});
}

int argmax(std::span<const double> scores) {
  if (scores.empty()) throw ValueError("argmax of empty scores");
  // max_element returns the first maximum.
  return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

int har_predict(const HarParams& params, const Tensor& segment) {
  return argmax(har_forward(params, segment).values());
}

std::vector<int> har_predict_batch(const HarParams& params, std::span<const Tensor> segments,
                                   std::size_t batch_size) {
  std::vector<int> out;
  out.reserve(segments.size());
  batch_size = std::max<std::size_t>(batch_size, 1);
  const std::size_t classes = params.config.num_classes;
  for (std::size_t start = 0; start < segments.size(); start += batch_size) {
    const auto chunk = segments.subspan(start, std::min(batch_size, segments.size() - start));
    for (const auto& s : chunk) {
      if (s.shape() != Shape{params.config.input_h, params.config.input_w}) {
        throw ShapeError("har_predict: segment " + shape_str(s.shape()) + " does not match configured input");
      }
    }
    const Tensor probs = har_forward_batch(params, Var(stack(chunk))).probabilities.value();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      out.push_back(argmax(std::span<const double>(probs.data() + i * classes, classes)));
    }
  }
  return out;
}

HarTrainResult har_train(const HarConfig& config, std::span<const Tensor> segments, std::span<const int> labels,
                         StreamSeed seed) {
  config.validate();
  if (segments.empty()) throw ValueError("har_train: empty dataset");
  if (segments.size() != labels.size()) throw ShapeError("har_train: segment and label counts differ");
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= config.num_classes) {
      throw ValueError("har_train: label " + std::to_string(label) + " out of range");
    }
  }

  HarTrainResult result{HarParams::init(config, seed.child("init")), {}, {}};
  auto params = result.params.parameters();
  auto opt = nn::OptimizerState::sgd(config.learning_rate, config.momentum, config.weight_decay);
  auto shuffle_rng = seed.child("shuffle").engine();

  std::vector<std::size_t> order(segments.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Tensor> batch;
  std::vector<int> batch_labels;
  const std::size_t classes = config.num_classes;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::size_t correct = 0;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      batch_labels.clear();
      for (std::size_t j = start; j < end; ++j) {
        batch.push_back(segments[order[j]]);
        batch_labels.push_back(labels[order[j]]);
      }
      const auto trace = har_forward_batch(result.params, Var(stack(batch)));
      const Var loss = nn::cross_entropy_loss(trace.logits, batch_labels);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw NumericError("har_train: non-finite loss at epoch " + std::to_string(epoch));
      }
      const Tensor& logits = trace.logits.value();
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (argmax(std::span<const double>(logits.data() + i * classes, classes)) == batch_labels[i]) ++correct;
      }
      nn::backward(loss);
      nn::optimizer_step(params, opt);
      nn::zero_grad(params);
      loss_sum += value * static_cast<double>(end - start);
    }
    const auto n = static_cast<double>(segments.size());
    result.accuracy_curve.push_back(static_cast<double>(correct) / n);
    result.loss_curve.push_back(loss_sum / n);
  }
  return result;
}

HarTrainResult har_train(const HarConfig& config, const SegmentSet& train, StreamSeed seed) {
  require_train_split(train, "har_train");
  const auto tensors = train.tensors();
  const auto labels = train.labels();
  return har_train(config, tensors, labels, seed);
}

Checkpoint HarParams::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.kind = "har";
  const auto& c = config;
  ckpt.config = {{"input_h", std::to_string(c.input_h)},
                 {"input_w", std::to_string(c.input_w)},
                 {"kernels", std::to_string(c.kernels)},
                 {"kernel_length", std::to_string(c.kernel_length)},
                 {"num_classes", std::to_string(c.num_classes)},
                 {"learning_rate", format_double(c.learning_rate)},
                 {"momentum", format_double(c.momentum)},
                 {"weight_decay", format_double(c.weight_decay)},
                 {"epochs", std::to_string(c.epochs)},
                 {"batch_size", std::to_string(c.batch_size)},
                 {"attention_scale", scale_name(c.attention_scale)}};
  for (std::size_t i = 0; i < HarConfig::kLayers; ++i) {
    ckpt.arrays.emplace_back("conv." + std::to_string(i) + ".kernel", conv_kernels[i].value());
    ckpt.arrays.emplace_back("conv." + std::to_string(i) + ".bias", conv_bias[i].value());
  }
  ckpt.arrays.emplace_back("fc.weight", fc_w.value());
  ckpt.arrays.emplace_back("fc.bias", fc_b.value());
  return ckpt;
}

HarConfig har_config_from(const Checkpoint& ckpt) {
  if (ckpt.kind != "har") throw IoError("checkpoint kind '" + ckpt.kind + "' is not a har model");
  auto cfg = KeyValueConfig::parse("");
  for (const auto& [k, v] : ckpt.config) cfg.set(k, v);
  HarConfig c;
  c.input_h = cfg.get_size("input_h", 0);
  c.input_w = cfg.get_size("input_w", 0);
  c.kernels = cfg.get_size("kernels", c.kernels);
  c.kernel_length = cfg.get_size("kernel_length", c.kernel_length);
  c.num_classes = cfg.get_size("num_classes", 0);
  c.learning_rate = cfg.get_double("learning_rate", c.learning_rate);
  c.momentum = cfg.get_double("momentum", c.momentum);
  c.weight_decay = cfg.get_double("weight_decay", c.weight_decay);
  c.epochs = cfg.get_size("epochs", c.epochs);
  c.batch_size = cfg.get_size("batch_size", c.batch_size);
  c.attention_scale = cfg.get_string("attention_scale", "d") == "sqrt_d" ? nn::AttentionScale::sqrt_dimension
                                                                          : nn::AttentionScale::dimension;
  return c;
}

HarParams HarParams::from_checkpoint(const Checkpoint& ckpt) {
  HarParams p;
  p.config = har_config_from(ckpt);
  for (std::size_t i = 0; i < HarConfig::kLayers; ++i) {
    p.conv_kernels[i] = Var::parameter(ckpt.array("conv." + std::to_string(i) + ".kernel"));
    p.conv_bias[i] = Var::parameter(ckpt.array("conv." + std::to_string(i) + ".bias"));
  }
  p.fc_w = Var::parameter(ckpt.array("fc.weight"));
  p.fc_b = Var::parameter(ckpt.array("fc.bias"));
  p.check_structure();
  return p;
}

}  // namespace robusthar
