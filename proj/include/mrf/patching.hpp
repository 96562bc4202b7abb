#pragma once

#include <cstddef>
#include <memory>

#include "mrf/ops.hpp"
#include "mrf/tensor.hpp"

namespace mrf {

/// Layout of one resolution branch over a length-I window.
struct BranchGeometry {
    std::size_t period = 1;       // patch length
    std::size_t num_patches = 1;  // ceil(I / period)
    std::size_t pad_len = 0;      // num_patches * period - I
    std::size_t model_width = 1;

    static BranchGeometry make(std::size_t length, std::size_t period, std::size_t model_width);
};

/// [B, I, V] -> [B, I + pad, V], repeating the last time step.
Tensor pad_to_multiple(const Tensor& x, std::size_t period);

/// [B, L, V] -> [B, V, L / period, period]. L must be a multiple of period.
Tensor segment(const Tensor& x, std::size_t period);

/// Endpoint-aligned linear resampling of a length-`from` axis to length `to`.
/// Cached and safe for concurrent lookup.
std::shared_ptr<const SparseMap> resize_weights(std::size_t from, std::size_t to);

/// Resamples the last axis of [..., p] to [..., target].
Tensor resize_linear(const Tensor& patches, std::size_t target);

/// [B, V, NP, p] -> [B, I, V]: flatten patches in time order, drop the padded tail.
Tensor flatten_truncate(const Tensor& patches, std::size_t original_len);

}  // namespace mrf
