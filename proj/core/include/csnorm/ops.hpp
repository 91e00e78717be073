#pragma once

#include <cstdint>
#include <utility>

#include "csnorm/autodiff.hpp"
#include "csnorm/rng.hpp"

namespace csnorm {

// Differentiable tensor operations. Each records one node on the tape.
// Binary elementwise ops require identical shapes; use broadcast_to first.

Value add(Tape& t, Value a, Value b);
Value sub(Tape& t, Value a, Value b);
Value mul(Tape& t, Value a, Value b);
Value add_scalar(Tape& t, Value a, double s);
Value mul_scalar(Tape& t, Value a, double s);
Value relu(Tape& t, Value a);

/// Replicates size-1 dims of `a` up to `target`. Every non-1 dim of `a` must
/// equal the corresponding dim of `target`.
Value broadcast_to(Tape& t, Value a, const Shape& target);

/// Cross-correlation, kernel shape (C_out, C_in, kH, kW), zero padding.
/// Output spatial size is floor((H + 2*padding - kH) / stride) + 1.
Value conv2d(Tape& t, Value input, Value kernel, int stride, int padding);

/// Adds a 1 x C x 1 x 1 bias to every (n, h, w).
Value add_channel_bias(Tape& t, Value x, Value bias);

/// Fully-connected layer on N x C_in x 1 x 1 features: weight is
/// C_out x C_in x 1 x 1, bias 1 x C_out x 1 x 1.
Value dense(Tape& t, Value x, Value weight, Value bias);

/// Spatial mean to N x C x 1 x 1.
Value global_avg_pool(Tape& t, Value x);

/// Per-(n, c) mean and biased variance over H*W, each N x C x 1 x 1.
std::pair<Value, Value> channel_stats(Tape& t, Value x);

/// (a + eps)^(-1/2) elementwise; a + eps must be positive.
Value rsqrt(Tape& t, Value a, double eps);

/// a^2 / (a^2 + eps) elementwise.
Value gate_function(Tape& t, Value alpha, double eps);

/// (1 - g) * x + g * normalized, with g of shape N x C x 1 x 1 broadcast
/// over H x W.
Value gated_mix(Tape& t, Value x, Value normalized, Value g);

Value sum(Tape& t, Value a);
Value mean(Tape& t, Value a);
/// mean(a^2) over every element.
Value mean_square(Tape& t, Value a);

/// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], fan_in = C_in*kH*kW.
Tensor4 init_uniform_fan_in(const Shape& kernel_shape, Rng& rng);

}  // namespace csnorm
