#include "mrf/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <numbers>
#include <numeric>
#include <random>

#include "mrf/errors.hpp"
#include "mrf/ops.hpp"

namespace mrf {

namespace {

// Per-epoch generators derived from the run seed.
std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(stream)};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ContractError("train config: " + msg); };
    if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (epochs < 1) fail("epochs must be >= 1");
    if (stride < 1) fail("stride must be >= 1");
    if (clip_norm && !(*clip_norm > 0.0)) fail("clip_norm must be positive");
}

void TrainConfig::write_to(KeyValueConfig& kv) const {
    kv.set("train.learning_rate", format_double(learning_rate));
    kv.set("train.beta1", format_double(beta1));
    kv.set("train.beta2", format_double(beta2));
    kv.set("train.adam_eps", format_double(adam_eps));
    kv.set("train.epochs", std::to_string(epochs));
    kv.set("train.batch_size", std::to_string(batch_size));
    kv.set("train.patience", std::to_string(patience));
    kv.set("train.seed", std::to_string(seed));
    kv.set("train.clip_norm", clip_norm ? format_double(*clip_norm) : "none");
    kv.set("train.cosine_decay", cosine_decay ? "true" : "false");
    kv.set("train.stride", std::to_string(stride));
    kv.set("train.steps_per_epoch", std::to_string(steps_per_epoch));
}

void TrainConfig::read_from(const KeyValueConfig& kv) {
    if (kv.has("train.learning_rate")) learning_rate = kv.get_double("train.learning_rate");
    if (kv.has("train.beta1")) beta1 = kv.get_double("train.beta1");
    if (kv.has("train.beta2")) beta2 = kv.get_double("train.beta2");
    if (kv.has("train.adam_eps")) adam_eps = kv.get_double("train.adam_eps");
    if (kv.has("train.epochs")) epochs = kv.get_uint("train.epochs");
    if (kv.has("train.batch_size")) batch_size = kv.get_uint("train.batch_size");
    if (kv.has("train.patience")) patience = kv.get_uint("train.patience");
    if (kv.has("train.seed")) seed = kv.get_uint("train.seed");
    if (kv.has("train.clip_norm")) {
        if (kv.get("train.clip_norm") == "none")
            clip_norm.reset();
        else
            clip_norm = kv.get_double("train.clip_norm");
    }
    if (kv.has("train.cosine_decay")) cosine_decay = kv.get_bool("train.cosine_decay");
    if (kv.has("train.stride")) stride = kv.get_uint("train.stride");
    if (kv.has("train.steps_per_epoch")) steps_per_epoch = kv.get_uint("train.steps_per_epoch");
}

std::vector<WindowSample> make_windows(const TimeSeries& series, std::size_t lookback, std::size_t horizon,
                                       std::size_t stride) {
    if (stride < 1) throw ContractError("make_windows: stride must be >= 1");
    if (lookback < 1 || horizon < 1) throw ContractError("make_windows: lookback and horizon must be >= 1");
    if (series.length < lookback + horizon)
        throw EmptyDatasetError("series of length " + std::to_string(series.length) + " is shorter than I + O = " +
                                std::to_string(lookback + horizon));
    const std::size_t V = series.variates;
    std::vector<WindowSample> out;
    for (std::size_t origin = 0; origin + lookback + horizon <= series.length; origin += stride) {
        auto first = series.values.begin() + static_cast<std::ptrdiff_t>(origin * V);
        auto mid = first + static_cast<std::ptrdiff_t>(lookback * V);
        auto last = mid + static_cast<std::ptrdiff_t>(horizon * V);
        out.push_back({Tensor({lookback, V}, std::vector<double>(first, mid)),
                       Tensor({horizon, V}, std::vector<double>(mid, last)), origin});
    }
    return out;
}

std::pair<Tensor, Tensor> make_batch(const std::vector<WindowSample>& samples,
                                     const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw ContractError("make_batch: empty batch");
    const Shape xs = samples.at(indices[0]).x.shape();
    const Shape ys = samples.at(indices[0]).y.shape();
    std::vector<double> x, y;
    x.reserve(indices.size() * shape_numel(xs));
    y.reserve(indices.size() * shape_numel(ys));
    for (auto i : indices) {
        const auto& s = samples.at(i);
        x.insert(x.end(), s.x.data().begin(), s.x.data().end());
        y.insert(y.end(), s.y.data().begin(), s.y.data().end());
    }
    const std::size_t B = indices.size();
    return {Tensor({B, xs[0], xs[1]}, std::move(x)), Tensor({B, ys[0], ys[1]}, std::move(y))};
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape())
        throw ShapeError("mse_loss: prediction " + shape_str(pred.shape()) + " vs target " +
                         shape_str(target.shape()));
    const Tensor diff = sub(pred, target);
    return mean(mul(diff, diff));
}

AdamState AdamState::init(const ParameterStore& params) {
    AdamState s;
    for (const auto& p : params.items()) {
        s.m.emplace_back(p.tensor.numel(), 0.0);
        s.v.emplace_back(p.tensor.numel(), 0.0);
    }
    return s;
}

double adam_step(ParameterStore& params, AdamState& state, const TrainConfig& cfg, double learning_rate) {
    auto& items = params.items();
    if (state.m.size() != items.size()) throw ContractError("adam_step: optimizer state does not match parameters");
    double norm_sq = 0.0;
    for (auto& p : items)
        for (double g : p.tensor.grad()) norm_sq += g * g;
    const double norm = std::sqrt(norm_sq);
    double clip = 1.0;
    if (cfg.clip_norm && norm > *cfg.clip_norm) clip = *cfg.clip_norm / norm;

    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < items.size(); ++k) {
        auto w = items[k].tensor.data();
        auto g = items[k].tensor.grad();
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g[i] * clip;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
    return norm;
}

std::vector<double> predict(const Model& model, const std::vector<WindowSample>& samples, std::size_t batch_size) {
    if (batch_size < 1) throw ContractError("predict: batch_size must be >= 1");
    NoGradGuard no_grad;
    std::vector<double> out;
    for (std::size_t start = 0; start < samples.size(); start += batch_size) {
        const std::size_t end = std::min(samples.size(), start + batch_size);
        std::vector<std::size_t> idx(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const auto [x, y] = make_batch(samples, idx);
        const Tensor pred = model.forward(x, RunMode::eval());
        out.insert(out.end(), pred.data().begin(), pred.data().end());
    }
    return out;
}

std::vector<double> stack_targets(const std::vector<WindowSample>& samples) {
    std::vector<double> out;
    for (const auto& s : samples) out.insert(out.end(), s.y.data().begin(), s.y.data().end());
    return out;
}

double evaluate_mse(const Model& model, const std::vector<WindowSample>& samples, std::size_t batch_size) {
    if (samples.empty()) throw EmptyDatasetError("evaluate_mse: no samples");
    const auto pred = predict(model, samples, batch_size);
    const auto target = stack_targets(samples);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
    return s / static_cast<double>(pred.size());
}

TrainResult train(Model& model, const std::vector<WindowSample>& train_set, const std::vector<WindowSample>& val_set,
                  const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.empty()) throw EmptyDatasetError("train: empty training set");
    if (val_set.empty()) throw EmptyDatasetError("train: empty validation set");

    ParameterStore& params = model.params();
    AdamState adam = AdamState::init(params);
    TrainResult result;
    ParameterStore best = params.snapshot();
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t bad_epochs = 0;

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 shuffle_rng(epoch_seed(cfg.seed, epoch, 1));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        std::mt19937_64 dropout_rng(epoch_seed(cfg.seed, epoch, 2));
        RunMode mode{true, model.config().dropout, &dropout_rng};

        double lr = cfg.learning_rate;
        if (cfg.cosine_decay)
            lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(cfg.epochs)));

        double loss_sum = 0.0;
        std::size_t seen = 0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            if (cfg.steps_per_epoch && batches == cfg.steps_per_epoch) break;
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                               order.begin() + static_cast<std::ptrdiff_t>(end));
            const auto [x, y] = make_batch(train_set, idx);
            params.zero_grad();
            const Tensor loss = mse_loss(model.forward(x, mode), y);
            const double value = loss.item();
            if (!std::isfinite(value))
                throw NumericError("non-finite training loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                                   std::to_string(batches));
            loss.backward();
            adam_step(params, adam, cfg, lr);
            loss_sum += value * static_cast<double>(idx.size());
            seen += idx.size();
            ++batches;
        }

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.train_mse = loss_sum / static_cast<double>(seen);
        rec.val_mse = evaluate_mse(model, val_set, cfg.batch_size);
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!std::isfinite(rec.val_mse))
            throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch + 1));
        result.history.push_back(rec);

        if (rec.val_mse < best_val) {
            best_val = rec.val_mse;
            result.best_epoch = rec.epoch;
            best = params.snapshot();
            bad_epochs = 0;
        } else if (++bad_epochs > cfg.patience) {
            break;
        }
    }
    params.assign_from(best);
    result.best_val_mse = best_val;
    return result;
}

double gradient_rel_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / denom;
}

std::string GradCheckReport::to_json() const {
    nlohmann::ordered_json j;
    j["passed"] = passed;
    j["coordinates"] = coordinates;
    j["max_rel_error"] = max_rel_error;
    j["mean_rel_error"] = mean_rel_error;
    j["worst"] = {{"parameter", worst.parameter}, {"index", worst.index}, {"analytic", worst.analytic},
                  {"numeric", worst.numeric}, {"rel_error", worst.rel_error}};
    auto& v = j["violations"] = nlohmann::ordered_json::array();
    for (const auto& e : violations)
        v.push_back({{"parameter", e.parameter}, {"index", e.index}, {"rel_error", e.rel_error}});
    return j.dump(2);
}

GradCheckReport gradient_check(ParameterStore& params, const std::function<Tensor()>& loss_fn,
                               const GradCheckOptions& options) {
    if (!(options.step > 0.0)) throw ContractError("gradient_check: step must be positive");
    params.zero_grad();
    loss_fn().backward();

    // (parameter index, coordinate) pairs to probe.
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    auto& items = params.items();
    for (std::size_t p = 0; p < items.size(); ++p)
        for (std::size_t i = 0; i < items[p].tensor.numel(); ++i) coords.emplace_back(p, i);
    if (coords.size() > options.max_coordinates) {
        std::mt19937_64 rng(options.seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(options.max_coordinates);
        std::sort(coords.begin(), coords.end());
    }

    GradCheckReport report;
    NoGradGuard no_grad;
    double total = 0.0;
    for (auto [p, i] : coords) {
        auto w = items[p].tensor.data();
        const double original = w[i];
        w[i] = original + options.step;
        const double plus = loss_fn().item();
        w[i] = original - options.step;
        const double minus = loss_fn().item();
        w[i] = original;
        GradCheckEntry e;
        e.parameter = items[p].name;
        e.index = i;
        e.analytic = items[p].tensor.grad()[i];
        e.numeric = (plus - minus) / (2.0 * options.step);
        e.rel_error = gradient_rel_error(e.analytic, e.numeric);
        total += e.rel_error;
        if (e.rel_error > report.max_rel_error || report.coordinates == 0) {
            report.max_rel_error = e.rel_error;
            report.worst = e;
        }
        if (e.rel_error > options.tolerance) report.violations.push_back(e);
        ++report.coordinates;
    }
    report.mean_rel_error = report.coordinates ? total / static_cast<double>(report.coordinates) : 0.0;
    report.passed = report.violations.empty();
    return report;
}

GradCheckReport gradient_check(Model& model, const Tensor& x, const Tensor& y, const GradCheckOptions& options) {
    ForwardTrace trace;
    {
        NoGradGuard no_grad;
        model.forward(x, RunMode::eval(), {nullptr, &trace});
    }
    const std::vector<PeriodicitySet> frozen = trace.periodicities;
    const auto loss_fn = [&]() { return mse_loss(model.forward(x, RunMode::eval(), {&frozen, nullptr}), y); };
    return gradient_check(model.params(), loss_fn, options);
}

}  // namespace mrf
