#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "mrf/config.hpp"
#include "mrf/encoder.hpp"
#include "mrf/spectral.hpp"
#include "mrf/tensor.hpp"

namespace mrf {

struct ModelConfig {
    std::size_t lookback = 96;     // I
    std::size_t horizon = 24;      // O
    std::size_t width = 64;        // d, the interpolated patch length
    std::size_t blocks = 2;        // N
    std::size_t resolutions = 3;   // k
    std::size_t heads = 4;
    std::size_t ffn_width = 128;
    double dropout = 0.1;
    double revin_eps = 1e-5;
    bool use_res_emb = true;
    bool share_re_globally = true;
    bool learned_pos_emb = false;
    bool block_residual = false;

    /// Throws ContractError naming the offending field.
    void validate() const;

    void write_to(KeyValueConfig& kv) const;
    /// Reads every key present in `kv`, leaving absent fields untouched.
    void read_from(const KeyValueConfig& kv);
};

struct RevinStats {
    Tensor mean;  // [B, 1, V]
    Tensor std;   // [B, 1, V], >= sqrt(eps)
};

/// Per (example, variate): subtract the temporal mean, divide by sqrt(var + eps).
std::pair<Tensor, RevinStats> revin_normalize(const Tensor& x, double eps);
/// y * std + mean, broadcast over the horizon axis.
Tensor revin_denormalize(const Tensor& y, const RevinStats& stats);

/// Block-level knobs used by multires_block.
struct BlockContext {
    const ModelConfig* config = nullptr;
    const Tensor* pos_emb = nullptr;      // [I, d] when learned_pos_emb
    const PeriodicitySet* forced = nullptr;  // skip detection and use these periods
    PeriodicitySet* used = nullptr;          // receives the periods actually used
};

/// Detect -> per-branch pad/segment/resize/embed/transform/resize back/flatten
/// -> amplitude-weighted sum. Input and output are [B, I, V].
Tensor multires_block(const Tensor& x, const BlockParams& params, const BlockContext& ctx, const RunMode& mode);

/// Periods for one block input; falls back to a single period-I branch when
/// the spectrum is flat.
PeriodicitySet detect_block_periods(const Tensor& x, std::size_t k);

struct ForwardTrace {
    std::vector<PeriodicitySet> periodicities;  // one per block
    std::vector<Tensor> block_outputs;          // normalized-domain [B, I, V] per block
};

struct ForwardOptions {
    const std::vector<PeriodicitySet>* forced = nullptr;
    ForwardTrace* trace = nullptr;
};

class Model {
public:
    Model(ModelConfig config, std::uint64_t seed);
    /// Adopts loaded weights; names and shapes must match what `config` builds.
    Model(ModelConfig config, const ParameterStore& weights);

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    const ModelConfig& config() const { return config_; }
    ParameterStore& params() { return store_; }
    const ParameterStore& params() const { return store_; }
    const BlockParams& block(std::size_t i) const { return blocks_.at(i); }

    /// [B, I, V] -> [B, O, V].
    Tensor forward(const Tensor& x, const RunMode& mode, const ForwardOptions& options = {}) const;

private:
    void bind();

    ModelConfig config_;
    ParameterStore store_;
    std::vector<BlockParams> blocks_;
    Tensor head_w_, head_b_, pos_emb_;
};

/// Exact count of learnable scalars.
std::size_t count_parameters(const ParameterStore& params);

}  // namespace mrf
