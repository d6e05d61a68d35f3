#pragma once

#include <array>
#include <span>
#include <vector>

#include "robusthar/checkpoint.hpp"
#include "robusthar/corruption.hpp"
#include "robusthar/nn/autodiff.hpp"
#include "robusthar/nn/geometry.hpp"
#include "robusthar/rng.hpp"
#include "robusthar/segment.hpp"

namespace robusthar {

// Convolutional denoising autoencoder.
//
// Encoder: four stride-2 convolutions with base·{1,2,4,8} kernels, each
// followed by ReLU, then a dense layer to the latent vector z.
// Decoder: dense back to the last feature map (ReLU), then four transposed
// convolutions mirroring the encoder geometry. The first three are followed
// by ReLU, the last by a sigmoid so the output lies in [0,1].
struct DaeConfig {
  std::size_t input_h = 0;
  std::size_t input_w = 0;
  std::size_t base_kernels = 64;
  std::size_t kernel = 5;
  std::size_t stride = 2;
  std::size_t padding = 2;
  std::size_t latent_dim = 128;
  double learning_rate = 1e-4;
  double momentum = 0.1;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;

  static constexpr std::size_t kLayers = 4;

  std::array<nn::LayerGeometry, kLayers> encoder_geometry() const;
  // Elements of the last encoder feature map.
  std::size_t bottleneck_size() const;
  void validate() const;
};

struct DaeParams {
  DaeConfig config;
  std::array<nn::Var, DaeConfig::kLayers> enc_kernels, enc_bias;
  nn::Var enc_dense_w, enc_dense_b;
  nn::Var dec_dense_w, dec_dense_b;
  // Indexed by the encoder layer they mirror.
  std::array<nn::Var, DaeConfig::kLayers> dec_kernels, dec_bias;

  // Fan-in scaled normal weights, zero biases.
  static DaeParams init(const DaeConfig& config, StreamSeed seed);

  std::vector<nn::Var> parameters() const;
  // Throws ShapeError unless every parameter and the decoder output shapes
  // mirror the encoder.
  void check_structure() const;

  Checkpoint to_checkpoint() const;
  static DaeParams from_checkpoint(const Checkpoint& ckpt);
};

struct DaeOutput {
  nn::Var x_prime;  // same shape as the input
  nn::Var z;        // [latent] or [N, latent]
};

// input: [H,W] or [N,H,W].
DaeOutput dae_forward(const DaeParams& params, const nn::Var& input);

// Output shape of each decoder stage, starting with the reshaped dense
// output; the reverse of the encoder input shapes after the first entry.
std::vector<Shape> decoder_shapes(const DaeConfig& config);
std::vector<Shape> encoder_input_shapes(const DaeConfig& config);

struct DaeTrainResult {
  DaeParams params;
  std::vector<double> loss_curve;  // mean batch loss per epoch
};

// Each epoch re-corrupts every clean segment with fresh randomness derived
// from (seed, epoch, index) and minimizes the MSE to the clean segment with
// RMSprop. Throws NumericError on a non-finite loss.
DaeTrainResult dae_train(const DaeConfig& config, std::span<const Tensor> clean, const CorruptionSpec& spec,
                         StreamSeed seed);
// Same, but only accepts a training split.
DaeTrainResult dae_train(const DaeConfig& config, const SegmentSet& train, const CorruptionSpec& spec,
                         StreamSeed seed);

// Inference only; the mask is not consulted.
Tensor clean(const DaeParams& params, const CorruptedSegment& corrupted);
std::vector<Tensor> clean_batch(const DaeParams& params, std::span<const Tensor> inputs,
                                std::size_t batch_size = 64);

DaeConfig dae_config_from(const Checkpoint& ckpt);

}  // namespace robusthar
