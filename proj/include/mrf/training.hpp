#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mrf/config.hpp"
#include "mrf/data_io.hpp"
#include "mrf/model.hpp"
#include "mrf/tensor.hpp"

namespace mrf {

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    std::size_t patience = 3;
    std::uint64_t seed = 0;
    std::optional<double> clip_norm;
    bool cosine_decay = false;
    std::size_t stride = 1;            // window stride for the training split
    std::size_t steps_per_epoch = 0;   // 0 = one full pass

    void validate() const;
    void write_to(KeyValueConfig& kv) const;
    void read_from(const KeyValueConfig& kv);
};

/// One (look-back, horizon) pair; y starts at origin_index + I in the source series.
struct WindowSample {
    Tensor x;  // [I, V]
    Tensor y;  // [O, V]
    std::size_t origin_index = 0;
};

/// Origins 0, stride, 2*stride, ... while origin + I + O <= T.
/// Throws EmptyDatasetError when T < I + O.
std::vector<WindowSample> make_windows(const TimeSeries& series, std::size_t lookback, std::size_t horizon,
                                       std::size_t stride = 1);

/// Stacks samples[indices] into ([B, I, V], [B, O, V]).
std::pair<Tensor, Tensor> make_batch(const std::vector<WindowSample>& samples,
                                     const std::vector<std::size_t>& indices);

Tensor mse_loss(const Tensor& pred, const Tensor& target);

struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::size_t step = 0;

    static AdamState init(const ParameterStore& params);
};

/// Bias-corrected Adam on the gradients held by `params`, with optional
/// global-norm clipping first. Returns the pre-clip gradient norm.
double adam_step(ParameterStore& params, AdamState& state, const TrainConfig& cfg, double learning_rate);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_mse = 0.0;
    double val_mse = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    double best_val_mse = 0.0;
    std::size_t best_epoch = 0;
};

/// Seeded mini-batch Adam with early stopping on validation MSE. The model
/// ends holding the best-validation weights. Throws NumericError on a NaN loss.
TrainResult train(Model& model, const std::vector<WindowSample>& train_set, const std::vector<WindowSample>& val_set,
                  const TrainConfig& cfg);

/// Eval-mode predictions for all samples, [N, O, V] row-major. The final
/// partial batch is kept.
std::vector<double> predict(const Model& model, const std::vector<WindowSample>& samples, std::size_t batch_size);
double evaluate_mse(const Model& model, const std::vector<WindowSample>& samples, std::size_t batch_size);
/// Targets of `samples` flattened in the same layout as predict().
std::vector<double> stack_targets(const std::vector<WindowSample>& samples);

struct GradCheckEntry {
    std::string parameter;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    double mean_rel_error = 0.0;
    std::size_t coordinates = 0;
    GradCheckEntry worst;
    std::vector<GradCheckEntry> violations;  // coordinates above tolerance
    bool passed = true;

    std::string to_json() const;
};

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    std::size_t max_coordinates = 10000;  // random subsample above this
    std::uint64_t seed = 0;
};

/// Relative error |a - n| / max(|a|, |n|, 1e-6).
double gradient_rel_error(double analytic, double numeric);

/// Central differences on every coordinate of `params` against the analytic
/// gradient of `loss_fn`.
GradCheckReport gradient_check(ParameterStore& params, const std::function<Tensor()>& loss_fn,
                               const GradCheckOptions& options = {});

/// Model version: eval mode, MSE loss on (x, y), detected periods frozen from
/// an initial forward so perturbations cannot switch branches.
GradCheckReport gradient_check(Model& model, const Tensor& x, const Tensor& y, const GradCheckOptions& options = {});

}  // namespace mrf
