#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "mrf/tensor.hpp"

namespace mrf {

/// Number of attention heads; must divide the model width.
class HeadCount {
public:
    HeadCount(std::size_t heads, std::size_t width);
    std::size_t value() const { return heads_; }
    std::size_t head_dim() const { return width_ / heads_; }

private:
    std::size_t heads_;
    std::size_t width_;
};

/// Train mode enables dropout; `rng` is required whenever dropout > 0 in training.
struct RunMode {
    bool training = false;
    double dropout = 0.0;
    std::mt19937_64* rng = nullptr;

    static RunMode eval() { return {}; }
};

/// Weights of the shared Transformer block. Handles alias tensors owned by a
/// ParameterStore; `re` may alias a model-wide embedding.
struct BlockParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor w1, b1, w2, b2;
    Tensor ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
    Tensor re;  // may be undefined when resolution embeddings are disabled

    /// Registers freshly initialised weights under `prefix` (e.g. "block0.").
    static BlockParams create(ParameterStore& store, const std::string& prefix, std::size_t width,
                              std::size_t ffn_width, std::mt19937_64& rng);
    /// Re-binds handles to tensors already present in `store`.
    static BlockParams bind(ParameterStore& store, const std::string& prefix);
};

/// re / period.
Tensor resolution_embedding(const Tensor& re, std::size_t period);

/// x[..., in] @ w[in, out] + b[out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor mha(const Tensor& tokens, const BlockParams& params, HeadCount heads, const RunMode& mode);
Tensor ffn(const Tensor& tokens, const BlockParams& params, const RunMode& mode);

/// Pre-norm: y = x + MHA(LN1(x)); out = y + FFN(LN2(y)).
Tensor transformer_block(const Tensor& tokens, const BlockParams& params, HeadCount heads, const RunMode& mode);

}  // namespace mrf
