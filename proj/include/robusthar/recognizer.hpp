#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "robusthar/checkpoint.hpp"
#include "robusthar/nn/autodiff.hpp"
#include "robusthar/nn/geometry.hpp"
#include "robusthar/nn/ops.hpp"
#include "robusthar/rng.hpp"
#include "robusthar/segment.hpp"

namespace robusthar {

// Self-attention CNN classifier.
//
// Four (k,1) temporal convolutions with ReLU (stride 1, no padding, no
// pooling) shrink the time axis by k-1 each while keeping every channel
// separate. The [H4, W0, f] map is read as H4 embeddings of length W0·f
// (channel-major, then kernel), passed through one self-attention layer,
// flattened, and classified by a dense softmax layer.
struct HarConfig {
  std::size_t input_h = 0;
  std::size_t input_w = 0;
  std::size_t kernels = 64;
  std::size_t kernel_length = 5;
  std::size_t num_classes = 0;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  nn::AttentionScale attention_scale = nn::AttentionScale::dimension;

  static constexpr std::size_t kLayers = 4;

  // Time length after conv layer i (i = 0 is the input).
  std::size_t height_after(std::size_t layer) const;
  std::size_t sequence_length() const { return height_after(kLayers); }
  std::size_t embedding_dim() const { return kernels * input_w; }
  std::array<nn::LayerGeometry, kLayers> conv_geometry() const;
  void validate() const;
};

struct HarParams {
  HarConfig config;
  std::array<nn::Var, HarConfig::kLayers> conv_kernels, conv_bias;
  nn::Var fc_w, fc_b;

  static HarParams init(const HarConfig& config, StreamSeed seed);
  std::vector<nn::Var> parameters() const;
  void check_structure() const;

  Checkpoint to_checkpoint() const;
  static HarParams from_checkpoint(const Checkpoint& ckpt);
};

// Layer sequence of the forward pass, e.g. "conv(5,1)x64", "relu", ...
std::vector<std::string> har_layers(const HarConfig& config);

struct HarTrace {
  nn::Var features;           // [N, H4, W0, f] after the last conv block
  nn::Var attention_weights;  // [N, H4, H4]
  nn::Var logits;             // [N, classes]
  nn::Var probabilities;      // [N, classes]
};

// input: [N, H, W].
HarTrace har_forward_batch(const HarParams& params, const nn::Var& input);
// Class probabilities for one [H, W] segment.
Tensor har_forward(const HarParams& params, const Tensor& segment);

// Argmax with ties broken toward the lowest id.
int argmax(std::span<const double> scores);
int har_predict(const HarParams& params, const Tensor& segment);
std::vector<int> har_predict_batch(const HarParams& params, std::span<const Tensor> segments,
                                   std::size_t batch_size = 64);

struct HarTrainResult {
  HarParams params;
  std::vector<double> accuracy_curve;  // training accuracy per epoch
  std::vector<double> loss_curve;
};

// SGD with momentum and weight decay on cross-entropy, no corruption.
HarTrainResult har_train(const HarConfig& config, std::span<const Tensor> segments, std::span<const int> labels,
                         StreamSeed seed);
HarTrainResult har_train(const HarConfig& config, const SegmentSet& train, StreamSeed seed);

HarConfig har_config_from(const Checkpoint& ckpt);

}  // namespace robusthar
