#pragma once

#include <span>

#include "robusthar/nn/autodiff.hpp"
#include "robusthar/nn/geometry.hpp"

namespace robusthar::nn {

// Layers accept a single sample or a batch with a leading N axis; the result
// keeps the caller's rank.

// Cross-correlation. input [H,W,C] or [N,H,W,C]; kernels [f,kh,kw,C];
// bias [f]. Returns [outH,outW,f] (or batched).
Var conv2d(const Var& input, const Var& kernels, const Var& bias, const LayerGeometry& geometry);

// Adjoint of conv2d with the same geometry and kernels. input [outH,outW,f]
// (or batched); bias [C]. Returns [H,W,C] with H, W taken from the geometry.
Var transpose_conv2d(const Var& input, const Var& kernels, const Var& bias,
                     const LayerGeometry& geometry);

// weight [m,n] times input [n] (or rows of [N,n]) plus bias [m].
Var dense(const Var& input, const Var& weight, const Var& bias);

enum class Activation { relu, sigmoid, softmax_rows };

Var activation(const Var& input, Activation kind);
inline Var relu(const Var& x) { return activation(x, Activation::relu); }
inline Var sigmoid(const Var& x) { return activation(x, Activation::sigmoid); }
// Softmax along the last axis; input must have rank >= 2.
inline Var softmax_rows(const Var& x) { return activation(x, Activation::softmax_rows); }

Var reshape(const Var& input, Shape shape);

// Divisor applied to Q·Kᵀ before the softmax.
enum class AttentionScale {
  dimension,       // d
  sqrt_dimension,  // √d
};

struct AttentionResult {
  Var output;   // [L,d] or [N,L,d]
  Var weights;  // [L,L] or [N,L,L]
};

// Single-head self-attention with Q = K = V = embedding.
AttentionResult self_attention(const Var& embedding,
                               AttentionScale scale = AttentionScale::dimension);

// Mean of squared differences over every element.
Var mse_loss(const Var& prediction, const Var& target);

// Batch mean of -log softmax(logits)[label]. logits [N,C] or [C].
Var cross_entropy_loss(const Var& logits, std::span<const int> labels);

}  // namespace robusthar::nn
