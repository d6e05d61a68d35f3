#include "robusthar/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "robusthar/error.hpp"

namespace robusthar::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap as_mat(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MatMap as_mat(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// Number of samples when `t` is one sample of `sample_rank` or a batch of them.
std::size_t batch_size(const Tensor& t, std::size_t sample_rank, const char* op) {
  if (t.rank() == sample_rank) return 1;
  if (t.rank() == sample_rank + 1) return t.shape()[0];
  throw ShapeError(std::string(op) + ": expected rank " + std::to_string(sample_rank) + " or " +
                   std::to_string(sample_rank + 1) + ", got " + shape_str(t.shape()));
}

Shape with_batch(bool batched, std::size_t n, Shape sample) {
  if (batched) sample.insert(sample.begin(), n);
  return sample;
}

void check_kernels(const Tensor& kernels, const LayerGeometry& g, const char* op) {
  const Shape expect{g.out_kernels, g.kernel_h, g.kernel_w, g.in_c};
  if (kernels.shape() != expect) {
    throw ShapeError(std::string(op) + ": kernels " + shape_str(kernels.shape()) + " do not match " +
                     shape_str(expect));
  }
}

void check_bias(const Tensor& bias, std::size_t n, const char* op) {
  if (bias.shape() != Shape{n}) {
    throw ShapeError(std::string(op) + ": bias " + shape_str(bias.shape()) + " expected [" +
                     std::to_string(n) + "]");
  }
}

// Unfolds n samples of [H,W,C] into rows of receptive fields: [n*P, K] with
// P = outH*outW and K = kh*kw*C ordered (ki, kj, c) like the kernels.
Tensor im2col(const double* x, std::size_t n, const LayerGeometry& g) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.patch_size();
  const std::size_t sample_in = g.in_h * g.in_w * g.in_c;
  Tensor col({n * oh * ow, k});
  double* out = col.data();
  for (std::size_t s = 0; s < n; ++s) {
    const double* xs = x + s * sample_in;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j, out += k) {
        double* row = out;
        for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
          const auto ih = static_cast<std::ptrdiff_t>(i * g.stride_h + ki) - static_cast<std::ptrdiff_t>(g.pad_h);
          for (std::size_t kj = 0; kj < g.kernel_w; ++kj, row += g.in_c) {
            const auto iw = static_cast<std::ptrdiff_t>(j * g.stride_w + kj) - static_cast<std::ptrdiff_t>(g.pad_w);
            if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h) ||
                iw >= static_cast<std::ptrdiff_t>(g.in_w)) {
              std::fill(row, row + g.in_c, 0.0);
            } else {
              const double* src = xs + (static_cast<std::size_t>(ih) * g.in_w + static_cast<std::size_t>(iw)) * g.in_c;
              std::copy(src, src + g.in_c, row);
            }
          }
        }
      }
    }
  }
  return col;
}

// Adjoint of im2col: scatter-adds rows back into n samples of [H,W,C].
void col2im(const double* col, std::size_t n, const LayerGeometry& g, double* x) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.patch_size();
  const std::size_t sample_in = g.in_h * g.in_w * g.in_c;
  for (std::size_t s = 0; s < n; ++s) {
    double* xs = x + s * sample_in;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j, col += k) {
        const double* row = col;
        for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
          const auto ih = static_cast<std::ptrdiff_t>(i * g.stride_h + ki) - static_cast<std::ptrdiff_t>(g.pad_h);
          for (std::size_t kj = 0; kj < g.kernel_w; ++kj, row += g.in_c) {
            const auto iw = static_cast<std::ptrdiff_t>(j * g.stride_w + kj) - static_cast<std::ptrdiff_t>(g.pad_w);
            if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h) ||
                iw >= static_cast<std::ptrdiff_t>(g.in_w)) {
              continue;
            }
            double* dst = xs + (static_cast<std::size_t>(ih) * g.in_w + static_cast<std::size_t>(iw)) * g.in_c;
            for (std::size_t c = 0; c < g.in_c; ++c) dst[c] += row[c];
          }
        }
      }
    }
  }
}

void add_row_bias(Tensor& out, std::size_t rows, const Tensor& bias) {
  auto m = as_mat(out, rows, bias.size());
  m.rowwise() += as_mat(bias, 1, bias.size()).row(0);
}

Tensor column_sums(const Tensor& g, std::size_t rows, std::size_t cols) {
  Tensor s({cols});
  as_mat(s, 1, cols) = as_mat(g, rows, cols).colwise().sum();
  return s;
}

// Scaled Gram matrix E·Eᵀ / scale per sample; E is [L,d] or [N,L,d].
Var scaled_gram(const Var& emb, double scale) {
  const Tensor& e = emb.value();
  const bool batched = e.rank() == 3;
  const std::size_t n = batch_size(e, 2, "self_attention");
  const std::size_t l = e.shape()[e.rank() - 2], d = e.shape()[e.rank() - 1];
  if (l == 0 || d == 0) throw ShapeError("self_attention: empty embedding");
  Tensor out(with_batch(batched, n, {l, l}));
  for (std::size_t s = 0; s < n; ++s) {
    auto es = ConstMatMap(e.data() + s * l * d, l, d);
    MatMap(out.data() + s * l * l, l, l).noalias() = (es * es.transpose()) / scale;
  }
  return make_result(std::move(out), {emb}, [emb, n, l, d, scale](const Tensor& g) mutable {
    const Tensor& e = emb.value();
    Tensor de(e.shape());
    for (std::size_t s = 0; s < n; ++s) {
      auto gs = ConstMatMap(g.data() + s * l * l, l, l);
      auto es = ConstMatMap(e.data() + s * l * d, l, d);
      MatMap(de.data() + s * l * d, l, d).noalias() = ((gs + gs.transpose()) * es) / scale;
    }
    emb.node()->accumulate(de);
  });
}

// Per-sample product [L,M]·[M,d].
Var batched_matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool batched = av.rank() == 3;
  const std::size_t n = batch_size(av, 2, "matmul");
  if (bv.rank() != av.rank() || (batched && bv.shape()[0] != n) ||
      av.shape()[av.rank() - 1] != bv.shape()[bv.rank() - 2]) {
    throw ShapeError("matmul: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  const std::size_t l = av.shape()[av.rank() - 2], m = av.shape()[av.rank() - 1];
  const std::size_t d = bv.shape()[bv.rank() - 1];
  Tensor out(with_batch(batched, n, {l, d}));
  for (std::size_t s = 0; s < n; ++s) {
    MatMap(out.data() + s * l * d, l, d).noalias() =
        ConstMatMap(av.data() + s * l * m, l, m) * ConstMatMap(bv.data() + s * m * d, m, d);
  }
  return make_result(std::move(out), {a, b}, [a, b, n, l, m, d](const Tensor& g) mutable {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor da(av.shape()), db(bv.shape());
    for (std::size_t s = 0; s < n; ++s) {
      auto gs = ConstMatMap(g.data() + s * l * d, l, d);
      MatMap(da.data() + s * l * m, l, m).noalias() = gs * ConstMatMap(bv.data() + s * m * d, m, d).transpose();
      MatMap(db.data() + s * m * d, m, d).noalias() = ConstMatMap(av.data() + s * l * m, l, m).transpose() * gs;
    }
    a.node()->accumulate(da);
    b.node()->accumulate(db);
  });
}

}  // namespace

Var conv2d(const Var& input, const Var& kernels, const Var& bias, const LayerGeometry& geometry) {
  geometry.validate();
  const Tensor& x = input.value();
  const bool batched = x.rank() == 4;
  const std::size_t n = batch_size(x, 3, "conv2d");
  const Shape sample{geometry.in_h, geometry.in_w, geometry.in_c};
  if (!std::equal(sample.begin(), sample.end(), x.shape().end() - 3)) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " does not match " + geometry.str());
  }
  check_kernels(kernels.value(), geometry, "conv2d");
  check_bias(bias.value(), geometry.out_kernels, "conv2d");

  const std::size_t f = geometry.out_kernels, k = geometry.patch_size();
  const std::size_t rows = n * geometry.out_h() * geometry.out_w();
  auto col = std::make_shared<Tensor>(im2col(x.data(), n, geometry));
  Tensor out(with_batch(batched, n, {geometry.out_h(), geometry.out_w(), f}));
  as_mat(out, rows, f).noalias() = as_mat(*col, rows, k) * as_mat(kernels.value(), f, k).transpose();
  add_row_bias(out, rows, bias.value());

  return make_result(std::move(out), {input, kernels, bias},
                     [input, kernels, bias, geometry, col, n, rows, f, k](const Tensor& g) mutable {
                       auto gm = as_mat(g, rows, f);
                       if (kernels.requires_grad()) {
                         Tensor dk(kernels.shape());
                         as_mat(dk, f, k).noalias() = gm.transpose() * as_mat(*col, rows, k);
                         kernels.node()->accumulate(dk);
                       }
                       if (bias.requires_grad()) bias.node()->accumulate(column_sums(g, rows, f));
                       if (input.requires_grad()) {
                         Tensor dcol({rows, k});
                         as_mat(dcol, rows, k).noalias() = gm * as_mat(kernels.value(), f, k);
                         Tensor dx(input.shape());
                         col2im(dcol.data(), n, geometry, dx.data());
                         input.node()->accumulate(dx);
                       }
                     });
}

Var transpose_conv2d(const Var& input, const Var& kernels, const Var& bias, const LayerGeometry& geometry) {
  geometry.validate();
  const Tensor& y = input.value();
  const bool batched = y.rank() == 4;
  const std::size_t n = batch_size(y, 3, "transpose_conv2d");
  const Shape sample{geometry.out_h(), geometry.out_w(), geometry.out_kernels};
  if (!std::equal(sample.begin(), sample.end(), y.shape().end() - 3)) {
    throw ShapeError("transpose_conv2d: input " + shape_str(y.shape()) + " does not match " +
                     geometry.str());
  }
  check_kernels(kernels.value(), geometry, "transpose_conv2d");
  check_bias(bias.value(), geometry.in_c, "transpose_conv2d");

  const std::size_t f = geometry.out_kernels, k = geometry.patch_size();
  const std::size_t rows = n * geometry.out_h() * geometry.out_w();
  Tensor dcol({rows, k});
  as_mat(dcol, rows, k).noalias() = as_mat(y, rows, f) * as_mat(kernels.value(), f, k);
  Tensor out(with_batch(batched, n, {geometry.in_h, geometry.in_w, geometry.in_c}));
  col2im(dcol.data(), n, geometry, out.data());
  add_row_bias(out, n * geometry.in_h * geometry.in_w, bias.value());

  return make_result(std::move(out), {input, kernels, bias},
                     [input, kernels, bias, geometry, n, rows, f, k](const Tensor& g) mutable {
                       const Tensor gcol = im2col(g.data(), n, geometry);
                       if (kernels.requires_grad()) {
                         Tensor dk(kernels.shape());
                         as_mat(dk, f, k).noalias() = as_mat(input.value(), rows, f).transpose() * as_mat(gcol, rows, k);
                         kernels.node()->accumulate(dk);
                       }
                       if (bias.requires_grad()) {
                         bias.node()->accumulate(column_sums(g, n * geometry.in_h * geometry.in_w, geometry.in_c));
                       }
                       if (input.requires_grad()) {
                         Tensor dy(input.shape());
                         as_mat(dy, rows, f).noalias() = as_mat(gcol, rows, k) * as_mat(kernels.value(), f, k).transpose();
                         input.node()->accumulate(dy);
                       }
                     });
}

Var dense(const Var& input, const Var& weight, const Var& bias) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const bool batched = x.rank() == 2;
  const std::size_t n = batch_size(x, 1, "dense");
  if (w.rank() != 2 || w.shape()[1] != x.shape().back()) {
    throw ShapeError("dense: weight " + shape_str(w.shape()) + " vs input " + shape_str(x.shape()));
  }
  const std::size_t m = w.shape()[0], in = w.shape()[1];
  check_bias(bias.value(), m, "dense");
  Tensor out(with_batch(batched, n, {m}));
  as_mat(out, n, m).noalias() = as_mat(x, n, in) * as_mat(w, m, in).transpose();
  add_row_bias(out, n, bias.value());

  return make_result(std::move(out), {input, weight, bias},
                     [input, weight, bias, n, m, in](const Tensor& g) mutable {
                       auto gm = as_mat(g, n, m);
                       if (weight.requires_grad()) {
                         Tensor dw(weight.shape());
                         as_mat(dw, m, in).noalias() = gm.transpose() * as_mat(input.value(), n, in);
                         weight.node()->accumulate(dw);
                       }
                       if (bias.requires_grad()) bias.node()->accumulate(column_sums(g, n, m));
                       if (input.requires_grad()) {
                         Tensor dx(input.shape());
                         as_mat(dx, n, in).noalias() = gm * as_mat(weight.value(), m, in);
                         input.node()->accumulate(dx);
                       }
                     });
}

Var activation(const Var& input, Activation kind) {
  const Tensor& x = input.value();
  Tensor y(x.shape());
  switch (kind) {
    case Activation::relu: {
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      return make_result(std::move(y), {input}, [input](const Tensor& g) mutable {
        const Tensor& x = input.value();
        Tensor dx(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? g[i] : 0.0;
        input.node()->accumulate(dx);
      });
    }
    case Activation::sigmoid: {
      for (std::size_t i = 0; i < x.size(); ++i) {
        // Split by sign so exp never overflows.
        if (x[i] >= 0.0) {
          y[i] = 1.0 / (1.0 + std::exp(-x[i]));
        } else {
          const double e = std::exp(x[i]);
          y[i] = e / (1.0 + e);
        }
      }
      auto out = std::make_shared<Tensor>(y);
      return make_result(std::move(y), {input}, [input, out](const Tensor& g) mutable {
        Tensor dx(out->shape());
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = g[i] * (*out)[i] * (1.0 - (*out)[i]);
        input.node()->accumulate(dx);
      });
    }
    case Activation::softmax_rows: {
      if (x.rank() < 2) throw ShapeError("softmax_rows: rank-2 input required, got " + shape_str(x.shape()));
      const std::size_t cols = x.shape().back(), rows = x.size() / std::max<std::size_t>(cols, 1);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * cols;
        double* yr = y.data() + r * cols;
        const double mx = *std::max_element(xr, xr + cols);
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) sum += (yr[c] = std::exp(xr[c] - mx));
        for (std::size_t c = 0; c < cols; ++c) yr[c] /= sum;
      }
      auto out = std::make_shared<Tensor>(y);
      return make_result(std::move(y), {input}, [input, out, rows, cols](const Tensor& g) mutable {
        Tensor dx(out->shape());
        for (std::size_t r = 0; r < rows; ++r) {
          const double* yr = out->data() + r * cols;
          const double* gr = g.data() + r * cols;
          double inner = 0.0;
          for (std::size_t c = 0; c < cols; ++c) inner += gr[c] * yr[c];
          for (std::size_t c = 0; c < cols; ++c) dx[r * cols + c] = yr[c] * (gr[c] - inner);
        }
        input.node()->accumulate(dx);
      });
    }
  }
  throw ValueError("unknown activation");
}

Var reshape(const Var& input, Shape shape) {
  Tensor y = input.value().reshaped(std::move(shape));
  return make_result(std::move(y), {input}, [input](const Tensor& g) mutable {
    input.node()->accumulate(g.reshaped(input.shape()));
  });
}

AttentionResult self_attention(const Var& embedding, AttentionScale scale) {
  const Tensor& e = embedding.value();
  if (e.rank() != 2 && e.rank() != 3) {
    throw ShapeError("self_attention: expected [L,d] or [N,L,d], got " + shape_str(e.shape()));
  }
  const auto d = static_cast<double>(e.shape().back());
  const double divisor = scale == AttentionScale::dimension ? d : std::sqrt(d);
  Var weights = softmax_rows(scaled_gram(embedding, divisor));
  Var output = batched_matmul(weights, embedding);
  return {output, weights};
}

Var mse_loss(const Var& prediction, const Var& target) {
  require_same_shape(prediction.value(), target.value(), "mse_loss");
  const Tensor& p = prediction.value();
  const Tensor& t = target.value();
  if (p.empty()) throw ShapeError("mse_loss: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double diff = p[i] - t[i];
    sum += diff * diff;
  }
  const auto count = static_cast<double>(p.size());
  return make_result(Tensor({1}, {sum / count}), {prediction, target},
                     [prediction, target, count](const Tensor& g) mutable {
                       const Tensor& p = prediction.value();
                       const Tensor& t = target.value();
                       Tensor dp(p.shape());
                       const double scale = 2.0 * g[0] / count;
                       for (std::size_t i = 0; i < p.size(); ++i) dp[i] = scale * (p[i] - t[i]);
                       if (target.requires_grad()) {
                         Tensor dt = dp;
                         for (auto& v : dt.values()) v = -v;
                         target.node()->accumulate(dt);
                       }
                       prediction.node()->accumulate(dp);
                     });
}

Var cross_entropy_loss(const Var& logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  const std::size_t n = batch_size(z, 1, "cross_entropy_loss");
  const std::size_t classes = z.shape().back();
  if (labels.size() != n) {
    throw ShapeError("cross_entropy_loss: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(n));
  }
  if (classes == 0) throw ShapeError("cross_entropy_loss: zero classes");
  auto probs = std::make_shared<Tensor>(z.shape());
  std::vector<int> ids(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= classes) {
      throw ValueError("cross_entropy_loss: label " + std::to_string(ids[r]) + " out of range [0," +
                       std::to_string(classes) + ")");
    }
    const double* zr = z.data() + r * classes;
    const double mx = *std::max_element(zr, zr + classes);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(zr[c] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t c = 0; c < classes; ++c) (*probs)[r * classes + c] = std::exp(zr[c] - lse);
    total += lse - zr[ids[r]];
  }
  return make_result(Tensor({1}, {total / static_cast<double>(n)}), {logits},
                     [logits, probs, ids = std::move(ids), n, classes](const Tensor& g) mutable {
                       Tensor dz = *probs;
                       for (std::size_t r = 0; r < n; ++r) dz[r * classes + static_cast<std::size_t>(ids[r])] -= 1.0;
                       const double scale = g[0] / static_cast<double>(n);
                       for (auto& v : dz.values()) v *= scale;
                       logits.node()->accumulate(dz);
                     });
}

}  // namespace robusthar::nn
