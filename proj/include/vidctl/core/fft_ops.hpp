#pragma once

#include "vidctl/core/autograd.hpp"

namespace vidctl::core::ops {

// Focal frequency loss between a prediction and a constant target, both
// [N, C, H, W]. Per (n, c) plane the orthonormal 2D DFT of both images is
// taken and the squared spectral distance is weighted by the per-plane
// max-normalized spectral error magnitude (exponent alpha). The weight
// matrix is treated as a constant in the backward pass. Returns a scalar.
template <typename T>
Var<T> focal_frequency_loss(const Var<T>& pred, const Tensor<T>& target, T alpha = T(1));

}  // namespace vidctl::core::ops
