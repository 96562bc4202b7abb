#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "mrf/checkpoint.hpp"
#include "mrf/cli.hpp"
#include "mrf/config.hpp"
#include "mrf/data_io.hpp"
#include "mrf/errors.hpp"
#include "mrf/metrics.hpp"
#include "mrf/model.hpp"
#include "mrf/patching.hpp"
#include "mrf/spectral.hpp"

namespace py = pybind11;
using namespace mrf;

namespace {

using Rows = std::vector<std::vector<double>>;

// Flattens [T][V] rows, checking they are rectangular.
std::vector<double> flatten_rows(const Rows& rows, std::size_t& variates) {
    if (rows.empty()) throw ContractError("series must have at least one row");
    variates = rows.front().size();
    std::vector<double> out;
    out.reserve(rows.size() * variates);
    for (const auto& r : rows) {
        if (r.size() != variates) throw ShapeError("ragged rows");
        out.insert(out.end(), r.begin(), r.end());
    }
    return out;
}

Rows to_rows(std::span<const double> flat, std::size_t variates) {
    Rows out;
    for (std::size_t i = 0; i < flat.size(); i += variates) out.emplace_back(flat.begin() + i, flat.begin() + i + variates);
    return out;
}

py::dict periods_dict(const PeriodicitySet& s) {
    py::dict d;
    d["periods"] = s.periods;
    d["frequencies"] = s.frequencies;
    d["amplitudes"] = s.amplitudes;
    d["weights"] = s.weights;
    return d;
}

ModelConfig config_from(const std::map<std::string, std::string>& overrides) {
    KeyValueConfig kv;
    for (const auto& [k, v] : overrides) kv.set(k.rfind("model.", 0) == 0 ? k : "model." + k, v);
    ModelConfig c;
    c.read_from(kv);
    c.validate();
    return c;
}

class PyModel {
public:
    PyModel(const std::map<std::string, std::string>& config, std::uint64_t seed)
        : model_(config_from(config), seed) {}
    PyModel(const std::map<std::string, std::string>& config, const std::filesystem::path& checkpoint)
        : model_(config_from(config), load_checkpoint(checkpoint)) {}

    // batch: [B][I][V] -> [B][O][V]
    std::vector<Rows> forecast(const std::vector<Rows>& batch) const {
        if (batch.empty()) throw ContractError("empty batch");
        std::vector<double> flat;
        std::size_t variates = 0;
        for (const auto& rows : batch) {
            std::size_t v = 0;
            const auto part = flatten_rows(rows, v);
            if (variates != 0 && v != variates) throw ShapeError("variate count differs across batch");
            variates = v;
            flat.insert(flat.end(), part.begin(), part.end());
        }
        const std::size_t I = batch.front().size();
        NoGradGuard ng;
        const Tensor y = model_.forward(Tensor({batch.size(), I, variates}, std::move(flat)), RunMode::eval());
        const std::size_t per = y.shape()[1] * variates;
        std::vector<Rows> out;
        for (std::size_t b = 0; b < batch.size(); ++b) out.push_back(to_rows(y.data().subspan(b * per, per), variates));
        return out;
    }

    std::vector<py::dict> periods(const Rows& window) const {
        std::size_t v = 0;
        auto flat = flatten_rows(window, v);
        ForwardTrace trace;
        NoGradGuard ng;
        model_.forward(Tensor({1, window.size(), v}, std::move(flat)), RunMode::eval(), {nullptr, &trace});
        std::vector<py::dict> out;
        for (const auto& s : trace.periodicities) out.push_back(periods_dict(s));
        return out;
    }

    std::size_t parameter_count() const { return count_parameters(model_.params()); }
    void save(const std::filesystem::path& path) const { save_checkpoint(path, model_.params()); }

private:
    Model model_;
};

}  // namespace

PYBIND11_MODULE(_multiresformer, m) {
    m.doc() = "Multi-resolution periodic-patch forecaster";

    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", PyExc_ArithmeticError);
    py::register_exception<CorruptArtifactError>(m, "CorruptArtifactError", PyExc_IOError);

    m.def("version", &cli::version_string);

    m.def(
        "amplitude_spectrum",
        [](const Rows& rows) {
            std::size_t v = 0;
            const auto flat = flatten_rows(rows, v);
            return amplitude_spectrum(std::span<const double>(flat), 1, rows.size(), v).amps;
        },
        py::arg("series"), "Mean |DFT| for frequencies 1..T/2 of a [T][V] series.");

    m.def(
        "detect_periods",
        [](const Rows& rows, std::size_t k) {
            std::size_t v = 0;
            const auto flat = flatten_rows(rows, v);
            return periods_dict(
                detect_salient_periods(amplitude_spectrum(std::span<const double>(flat), 1, rows.size(), v), k));
        },
        py::arg("series"), py::arg("k"));

    m.def(
        "resize_linear",
        [](const std::vector<double>& patch, std::size_t target) {
            const Tensor out = resize_linear(Tensor({1, patch.size()}, patch), target);
            return std::vector<double>(out.data().begin(), out.data().end());
        },
        py::arg("patch"), py::arg("target"));

    m.def(
        "synth",
        [](std::size_t length, std::size_t variates, const std::vector<std::tuple<double, double, double>>& components,
           double noise_std, double trend_slope, std::uint64_t seed) {
            SynthSpec s;
            s.length = length;
            s.variates = variates;
            s.components.clear();
            for (const auto& [p, a, ph] : components) s.components.push_back({p, a, ph});
            s.noise_std = noise_std;
            s.trend_slope = trend_slope;
            s.seed = seed;
            const auto ts = synth_multiperiodic(s);
            return to_rows(ts.values, ts.variates);
        },
        py::arg("length") = 2000, py::arg("variates") = 1,
        py::arg("components") = std::vector<std::tuple<double, double, double>>{{24.0, 1.0, 0.0}, {56.0, 0.5, 0.0}},
        py::arg("noise_std") = 0.1, py::arg("trend_slope") = 0.0, py::arg("seed") = 0);

    m.def("mse", [](const std::vector<double>& p, const std::vector<double>& t) { return mse(p, t); });
    m.def("mae", [](const std::vector<double>& p, const std::vector<double>& t) { return mae(p, t); });
    m.def("smape", [](const std::vector<double>& p, const std::vector<double>& t) { return smape(p, t); });
    m.def(
        "mase",
        [](const std::vector<double>& p, const std::vector<double>& t, const std::vector<double>& insample,
           std::size_t season) { return mase(p, t, insample, season); },
        py::arg("pred"), py::arg("target"), py::arg("insample"), py::arg("season") = 1);
    m.def("owa", &owa, py::arg("smape"), py::arg("mase"), py::arg("smape_naive2"), py::arg("mase_naive2"));
    m.def("linear_cka", [](const Rows& a, const Rows& b) {
        std::size_t ca = 0, cb = 0;
        const auto fa = flatten_rows(a, ca);
        const auto fb = flatten_rows(b, cb);
        return linear_cka(Matrix{a.size(), ca, fa}, Matrix{b.size(), cb, fb});
    });

    py::class_<PyModel>(m, "Model")
        .def(py::init<const std::map<std::string, std::string>&, std::uint64_t>(),
             py::arg("config") = std::map<std::string, std::string>{}, py::arg("seed") = 0)
        .def(py::init<const std::map<std::string, std::string>&, const std::filesystem::path&>(), py::arg("config"),
             py::arg("checkpoint"))
        .def("forecast", &PyModel::forecast, py::arg("batch"), "[B][I][V] look-back windows -> [B][O][V].")
        .def("periods", &PyModel::periods, py::arg("window"), "Periods used by each block for one window.")
        .def("parameter_count", &PyModel::parameter_count)
        .def("save", &PyModel::save, py::arg("path"));

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = cli::run(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs an mrf subcommand; returns (exit_code, stdout, stderr).");
}
