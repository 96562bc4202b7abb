#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "mrf/tensor.hpp"

// Differentiable primitives. Every op records its adjoint when grad mode is
// enabled and at least one input requires a gradient.
//
// Elementwise binary ops take operands of identical shape; use broadcast_to
// to expand explicitly. matmul is the one op that broadcasts on its own, and
// only across leading batch dimensions.
namespace mrf {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor sqrt(const Tensor& x);
Tensor gelu(const Tensor& x);

/// Sum of all elements, shape (1).
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim = true);
Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim = true);
/// Population variance along `axis`.
Tensor var_axis(const Tensor& x, std::size_t axis, bool keepdim = true);

/// Right-aligned expansion of size-1 (or missing leading) dimensions.
Tensor broadcast_to(const Tensor& x, const Shape& shape);

/// [..., m, p] @ [..., p, n]. Leading dims must match, or one side is rank 2.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor transpose(const Tensor& x, std::size_t axis_a, std::size_t axis_b);
Tensor reshape(const Tensor& x, const Shape& shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
/// Picks entries along `axis`; indices may repeat (adjoint scatter-adds).
Tensor index_select(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& indices);

/// Numerically stable softmax. Throws NumericError on NaN input.
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
/// Inverted dropout in training mode, identity otherwise.
Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64* rng);

/// Fixed sparse linear operator acting on the last axis:
/// out[..., j] = sum over entries (j, i, w) of w * in[..., i].
struct SparseMap {
    struct Entry {
        std::size_t out;
        std::size_t in;
        double weight;
    };
    std::size_t in_size = 0;
    std::size_t out_size = 0;
    std::vector<Entry> entries;
};

Tensor apply_last_axis(const Tensor& x, const SparseMap& map);

namespace testing {
/// Test-only: corrupts the GELU adjoint so gradient checks have a negative control.
void set_gelu_adjoint_fault(bool enabled);
}  // namespace testing

}  // namespace mrf
