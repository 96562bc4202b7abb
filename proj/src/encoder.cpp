#include "mrf/encoder.hpp"

#include <cmath>

#include "mrf/errors.hpp"
#include "mrf/ops.hpp"

namespace mrf {

namespace {

constexpr double kLayerNormEps = 1e-5;

Tensor uniform_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = dist(rng);
    return Tensor({rows, cols}, std::move(v));
}

}  // namespace

HeadCount::HeadCount(std::size_t heads, std::size_t width) : heads_(heads), width_(width) {
    if (heads == 0 || width % heads != 0)
        throw ContractError("head count " + std::to_string(heads) + " must divide model width " +
                            std::to_string(width));
}

BlockParams BlockParams::create(ParameterStore& store, const std::string& prefix, std::size_t width,
                                std::size_t ffn_width, std::mt19937_64& rng) {
    const std::size_t d = width, f = ffn_width;
    for (const char* n : {"wq", "wk", "wv", "wo"}) {
        store.add(prefix + n, uniform_matrix(d, d, rng));
        store.add(prefix + "b" + std::string(n + 1), Tensor::zeros({d}));
    }
    store.add(prefix + "ffn.w1", uniform_matrix(d, f, rng));
    store.add(prefix + "ffn.b1", Tensor::zeros({f}));
    store.add(prefix + "ffn.w2", uniform_matrix(f, d, rng));
    store.add(prefix + "ffn.b2", Tensor::zeros({d}));
    store.add(prefix + "ln1.gamma", Tensor::full({d}, 1.0));
    store.add(prefix + "ln1.beta", Tensor::zeros({d}));
    store.add(prefix + "ln2.gamma", Tensor::full({d}, 1.0));
    store.add(prefix + "ln2.beta", Tensor::zeros({d}));
    return bind(store, prefix);
}

BlockParams BlockParams::bind(ParameterStore& store, const std::string& prefix) {
    BlockParams p;
    p.wq = store.get(prefix + "wq");
    p.bq = store.get(prefix + "bq");
    p.wk = store.get(prefix + "wk");
    p.bk = store.get(prefix + "bk");
    p.wv = store.get(prefix + "wv");
    p.bv = store.get(prefix + "bv");
    p.wo = store.get(prefix + "wo");
    p.bo = store.get(prefix + "bo");
    p.w1 = store.get(prefix + "ffn.w1");
    p.b1 = store.get(prefix + "ffn.b1");
    p.w2 = store.get(prefix + "ffn.w2");
    p.b2 = store.get(prefix + "ffn.b2");
    p.ln1_gamma = store.get(prefix + "ln1.gamma");
    p.ln1_beta = store.get(prefix + "ln1.beta");
    p.ln2_gamma = store.get(prefix + "ln2.gamma");
    p.ln2_beta = store.get(prefix + "ln2.beta");
    return p;
}

Tensor resolution_embedding(const Tensor& re, std::size_t period) {
    if (period < 1) throw ContractError("resolution_embedding: period must be >= 1");
    if (period == 1) return re;
    return scale(re, 1.0 / static_cast<double>(period));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor y = matmul(x, w);
    return add(y, broadcast_to(b, y.shape()));
}

Tensor mha(const Tensor& tokens, const BlockParams& params, HeadCount heads, const RunMode& mode) {
    if (tokens.rank() != 3) throw ContractError("mha: expected [M, NP, d], got " + shape_str(tokens.shape()));
    const std::size_t M = tokens.dim(0), T = tokens.dim(1), d = tokens.dim(2);
    if (params.wq.shape() != Shape{d, d})
        throw ContractError("mha: token width " + std::to_string(d) + " does not match projection " +
                            shape_str(params.wq.shape()));
    const std::size_t h = heads.value(), dh = heads.head_dim();
    if (h * dh != d) throw ContractError("mha: head count does not match token width");

    auto split_heads = [&](const Tensor& t) { return permute(reshape(t, {M, T, h, dh}), {0, 2, 1, 3}); };
    const Tensor q = split_heads(linear(tokens, params.wq, params.bq));
    const Tensor k = split_heads(linear(tokens, params.wk, params.bk));
    const Tensor v = split_heads(linear(tokens, params.wv, params.bv));

    Tensor scores = scale(matmul(q, transpose(k, 2, 3)), 1.0 / std::sqrt(static_cast<double>(dh)));
    Tensor attn = dropout(softmax(scores, 3), mode.dropout, mode.training, mode.rng);
    Tensor ctx = permute(matmul(attn, v), {0, 2, 1, 3});
    return linear(reshape(ctx, {M, T, d}), params.wo, params.bo);
}

Tensor ffn(const Tensor& tokens, const BlockParams& params, const RunMode& mode) {
    (void)mode;
    return linear(gelu(linear(tokens, params.w1, params.b1)), params.w2, params.b2);
}

Tensor transformer_block(const Tensor& tokens, const BlockParams& params, HeadCount heads, const RunMode& mode) {
    const Tensor attn = mha(layer_norm(tokens, params.ln1_gamma, params.ln1_beta, kLayerNormEps), params, heads, mode);
    const Tensor y = add(tokens, dropout(attn, mode.dropout, mode.training, mode.rng));
    const Tensor f = ffn(layer_norm(y, params.ln2_gamma, params.ln2_beta, kLayerNormEps), params, mode);
    return add(y, dropout(f, mode.dropout, mode.training, mode.rng));
}

}  // namespace mrf
