#pragma once

#include <cstddef>
#include <string>

namespace robusthar::nn {

// Spatial bookkeeping for a strided, zero-padded 2-D convolution over
// (height, width, channels) inputs. The paired transposed convolution uses
// the same geometry and restores (in_h, in_w).
struct LayerGeometry {
  std::size_t in_h = 1, in_w = 1, in_c = 1;
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
  std::size_t out_kernels = 1;

  std::size_t out_h() const;
  std::size_t out_w() const;
  std::size_t patch_size() const { return kernel_h * kernel_w * in_c; }

  // Throws ShapeError on a zero entry or a non-positive output dimension.
  void validate() const;
  std::string str() const;

  friend bool operator==(const LayerGeometry&, const LayerGeometry&) = default;
};

}  // namespace robusthar::nn
