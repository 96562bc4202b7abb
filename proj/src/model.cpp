#include "mrf/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mrf/errors.hpp"
#include "mrf/ops.hpp"
#include "mrf/patching.hpp"

namespace mrf {

namespace {

constexpr double kFlatSpectrum = 1e-9;
constexpr double kEmbeddingStd = 0.02;

Tensor gaussian(Shape shape, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v));
}

std::string block_prefix(std::size_t i) { return "block" + std::to_string(i) + "."; }

}  // namespace

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ContractError("model config: " + msg); };
    if (lookback < 2) fail("lookback must be >= 2");
    if (horizon < 1) fail("horizon must be >= 1");
    if (width < 1) fail("width must be >= 1");
    if (blocks < 1) fail("blocks must be >= 1");
    if (resolutions < 1) fail("resolutions must be >= 1");
    if (resolutions > lookback / 2) fail("resolutions must not exceed floor(lookback / 2)");
    if (heads < 1 || width % heads != 0) fail("heads must divide width");
    if (ffn_width < 1) fail("ffn_width must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
    if (!(revin_eps > 0.0)) fail("revin_eps must be positive");
}

void ModelConfig::write_to(KeyValueConfig& kv) const {
    kv.set("model.lookback", std::to_string(lookback));
    kv.set("model.horizon", std::to_string(horizon));
    kv.set("model.width", std::to_string(width));
    kv.set("model.blocks", std::to_string(blocks));
    kv.set("model.resolutions", std::to_string(resolutions));
    kv.set("model.heads", std::to_string(heads));
    kv.set("model.ffn_width", std::to_string(ffn_width));
    kv.set("model.dropout", format_double(dropout));
    kv.set("model.revin_eps", format_double(revin_eps));
    kv.set("model.use_res_emb", use_res_emb ? "true" : "false");
    kv.set("model.share_re_globally", share_re_globally ? "true" : "false");
    kv.set("model.learned_pos_emb", learned_pos_emb ? "true" : "false");
    kv.set("model.block_residual", block_residual ? "true" : "false");
}

void ModelConfig::read_from(const KeyValueConfig& kv) {
    auto u = [&](const char* key, std::size_t& field) {
        if (kv.has(key)) field = kv.get_uint(key);
    };
    auto f = [&](const char* key, double& field) {
        if (kv.has(key)) field = kv.get_double(key);
    };
    auto b = [&](const char* key, bool& field) {
        if (kv.has(key)) field = kv.get_bool(key);
    };
    u("model.lookback", lookback);
    u("model.horizon", horizon);
    u("model.width", width);
    u("model.blocks", blocks);
    u("model.resolutions", resolutions);
    u("model.heads", heads);
    u("model.ffn_width", ffn_width);
    f("model.dropout", dropout);
    f("model.revin_eps", revin_eps);
    b("model.use_res_emb", use_res_emb);
    b("model.share_re_globally", share_re_globally);
    b("model.learned_pos_emb", learned_pos_emb);
    b("model.block_residual", block_residual);
}

std::pair<Tensor, RevinStats> revin_normalize(const Tensor& x, double eps) {
    if (x.rank() != 3) throw ShapeError("revin_normalize: expected [B, I, V], got " + shape_str(x.shape()));
    if (!(eps > 0.0)) throw ContractError("revin_normalize: eps must be positive");
    RevinStats stats;
    stats.mean = mean_axis(x, 1, true);
    stats.std = sqrt(add_scalar(var_axis(x, 1, true), eps));
    const Tensor normalized =
        div(sub(x, broadcast_to(stats.mean, x.shape())), broadcast_to(stats.std, x.shape()));
    return {normalized, stats};
}

Tensor revin_denormalize(const Tensor& y, const RevinStats& stats) {
    if (y.rank() != 3 || stats.mean.rank() != 3 || y.dim(0) != stats.mean.dim(0) || y.dim(2) != stats.mean.dim(2))
        throw ShapeError("revin_denormalize: output " + shape_str(y.shape()) + " does not match stats " +
                         shape_str(stats.mean.shape()));
    return add(mul(y, broadcast_to(stats.std, y.shape())), broadcast_to(stats.mean, y.shape()));
}

PeriodicitySet detect_block_periods(const Tensor& x, std::size_t k) {
    const std::size_t length = x.dim(1);
    const AmplitudeSpectrum spec = amplitude_spectrum(x);
    const double peak = spec.amps.empty() ? 0.0 : *std::max_element(spec.amps.begin(), spec.amps.end());
    if (peak <= kFlatSpectrum) return single_period(length);
    PeriodicitySet set = detect_salient_periods(spec, std::min(k, spec.amps.size()));
    if (set.empty()) return single_period(length);
    return set;
}

Tensor multires_block(const Tensor& x, const BlockParams& params, const BlockContext& ctx, const RunMode& mode) {
    const ModelConfig& cfg = *ctx.config;
    if (x.rank() != 3 || x.dim(1) != cfg.lookback)
        throw ContractError("multires_block: expected [B, " + std::to_string(cfg.lookback) + ", V], got " +
                            shape_str(x.shape()));
    const std::size_t B = x.dim(0), I = x.dim(1), V = x.dim(2), d = cfg.width;
    const HeadCount heads(cfg.heads, d);

    PeriodicitySet periods = ctx.forced ? *ctx.forced : detect_block_periods(x, cfg.resolutions);
    if (periods.empty() || periods.weights.size() != periods.size())
        throw ContractError("multires_block: periodicity set has no usable branches");

    Tensor out;
    for (std::size_t i = 0; i < periods.size(); ++i) {
        const auto geo = BranchGeometry::make(I, periods.periods[i], d);
        const std::size_t NP = geo.num_patches;
        Tensor patches = resize_linear(segment(pad_to_multiple(x, geo.period), geo.period), d);  // [B, V, NP, d]
        if (cfg.use_res_emb && params.re.defined())
            patches = add(patches, broadcast_to(resolution_embedding(params.re, geo.period), patches.shape()));
        Tensor tokens = reshape(patches, {B * V, NP, d});
        if (ctx.pos_emb && ctx.pos_emb->defined())
            tokens = add(tokens, broadcast_to(slice(*ctx.pos_emb, 0, 0, NP), tokens.shape()));
        tokens = transformer_block(tokens, params, heads, mode);
        Tensor branch = flatten_truncate(resize_linear(reshape(tokens, {B, V, NP, d}), geo.period), I);
        branch = scale(branch, periods.weights[i]);
        out = out.defined() ? add(out, branch) : branch;
    }
    if (cfg.block_residual) out = add(out, x);
    if (ctx.used) *ctx.used = std::move(periods);
    return out;
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const std::size_t d = config_.width;
    if (config_.use_res_emb && config_.share_re_globally) store_.add("re", gaussian({d}, kEmbeddingStd, rng));
    if (config_.learned_pos_emb) store_.add("pos_emb", gaussian({config_.lookback, d}, kEmbeddingStd, rng));
    for (std::size_t b = 0; b < config_.blocks; ++b) {
        BlockParams::create(store_, block_prefix(b), d, config_.ffn_width, rng);
        if (config_.use_res_emb && !config_.share_re_globally)
            store_.add(block_prefix(b) + "re", gaussian({d}, kEmbeddingStd, rng));
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(config_.lookback));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> w(config_.lookback * config_.horizon);
    for (auto& v : w) v = dist(rng);
    store_.add("head.w", Tensor({config_.lookback, config_.horizon}, std::move(w)));
    store_.add("head.b", Tensor::zeros({config_.horizon}));
    bind();
}

Model::Model(ModelConfig config, const ParameterStore& weights) : Model(std::move(config), 0) {
    store_.assign_from(weights);
}

void Model::bind() {
    blocks_.clear();
    for (std::size_t b = 0; b < config_.blocks; ++b) {
        BlockParams p = BlockParams::bind(store_, block_prefix(b));
        if (config_.use_res_emb)
            p.re = config_.share_re_globally ? store_.get("re") : store_.get(block_prefix(b) + "re");
        blocks_.push_back(std::move(p));
    }
    head_w_ = store_.get("head.w");
    head_b_ = store_.get("head.b");
    if (config_.learned_pos_emb) pos_emb_ = store_.get("pos_emb");
}

Tensor Model::forward(const Tensor& x, const RunMode& mode, const ForwardOptions& options) const {
    if (x.rank() != 3 || x.dim(1) != config_.lookback)
        throw ContractError("forward: expected input [B, " + std::to_string(config_.lookback) + ", V], got " +
                            shape_str(x.shape()));
    for (double v : x.data())
        if (!std::isfinite(v)) throw NumericError("forward: non-finite input");
    if (options.forced && options.forced->size() != config_.blocks)
        throw ContractError("forward: forced periodicities must list one set per block");

    auto [h, stats] = revin_normalize(x, config_.revin_eps);
    if (options.trace) {
        options.trace->periodicities.clear();
        options.trace->block_outputs.clear();
    }
    for (std::size_t b = 0; b < config_.blocks; ++b) {
        PeriodicitySet used;
        BlockContext ctx;
        ctx.config = &config_;
        ctx.pos_emb = config_.learned_pos_emb ? &pos_emb_ : nullptr;
        ctx.forced = options.forced ? &(*options.forced)[b] : nullptr;
        ctx.used = &used;
        h = multires_block(h, blocks_[b], ctx, mode);
        if (options.trace) {
            options.trace->periodicities.push_back(std::move(used));
            options.trace->block_outputs.push_back(h);
        }
    }
    // Shared head over the time axis: [B, I, V] -> [B, V, I] -> [B, V, O] -> [B, O, V].
    const Tensor y = permute(linear(permute(h, {0, 2, 1}), head_w_, head_b_), {0, 2, 1});
    return revin_denormalize(y, stats);
}

std::size_t count_parameters(const ParameterStore& params) { return params.scalar_count(); }

}  // namespace mrf
