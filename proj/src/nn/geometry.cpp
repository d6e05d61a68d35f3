#include "robusthar/nn/geometry.hpp"

#include "robusthar/error.hpp"

namespace robusthar::nn {

namespace {

// floor((n + 2p - k)/s) + 1, or 0 when the kernel does not fit.
std::size_t conv_out(std::size_t n, std::size_t k, std::size_t s, std::size_t p) {
  if (n + 2 * p < k || s == 0) return 0;
  return (n + 2 * p - k) / s + 1;
}

}  // namespace

std::size_t LayerGeometry::out_h() const { return conv_out(in_h, kernel_h, stride_h, pad_h); }
std::size_t LayerGeometry::out_w() const { return conv_out(in_w, kernel_w, stride_w, pad_w); }

void LayerGeometry::validate() const {
  if (in_h == 0 || in_w == 0 || in_c == 0 || kernel_h == 0 || kernel_w == 0 || stride_h == 0 ||
      stride_w == 0 || out_kernels == 0) {
    throw ShapeError("layer geometry has a zero entry: " + str());
  }
  if (out_h() == 0 || out_w() == 0) throw ShapeError("non-positive output dimension: " + str());
}

std::string LayerGeometry::str() const {
  auto s = [](std::size_t v) { return std::to_string(v); };
  return "in=(" + s(in_h) + "," + s(in_w) + "," + s(in_c) + ") kernel=(" + s(kernel_h) + "," +
         s(kernel_w) + ") stride=(" + s(stride_h) + "," + s(stride_w) + ") pad=(" + s(pad_h) + "," +
         s(pad_w) + ") f=" + s(out_kernels);
}

}  // namespace robusthar::nn
