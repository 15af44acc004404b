// Python face of the library: numpy-backed access to causal convolution,
// implicit kernel generation, the mixing layer, and the rank/identity
// verification oracles.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hynd/filtergen.hpp"
#include "hynd/hyena.hpp"
#include "hynd/numcore.hpp"
#include "hynd/tape.hpp"
#include "hynd/tensor.hpp"
#include "hynd/theorylab.hpp"

namespace py = pybind11;
using namespace hynd;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& array) {
    Shape shape(static_cast<std::size_t>(array.ndim()));
    for (std::size_t i = 0; i < shape.size(); ++i)
        shape[i] = static_cast<std::size_t>(array.shape(static_cast<py::ssize_t>(i)));
    std::vector<double> values(array.data(), array.data() + array.size());
    return Tensor::from_data(std::move(shape), std::move(values));
}

py::array_t<double> to_array(const Tensor& tensor) {
    std::vector<py::ssize_t> shape(tensor.shape().begin(), tensor.shape().end());
    py::array_t<double> out(shape);
    std::copy(tensor.data().begin(), tensor.data().end(), out.mutable_data());
    return out;
}

template <typename T>
T lookup(const std::map<std::string, T>& table, const std::string& key, const char* what) {
    auto it = table.find(key);
    if (it == table.end())
        throw std::invalid_argument(std::string("unknown ") + what + " '" + key + "'");
    return it->second;
}

const std::map<std::string, FilterVariant> kFilterVariants{
    {"implicit_1d", FilterVariant::implicit_1d},
    {"implicit_nd", FilterVariant::implicit_nd},
    {"product_nd", FilterVariant::product_nd}};
const std::map<std::string, HyenaVariant> kHyenaVariants{
    {"hyena_1d", HyenaVariant::hyena_1d},
    {"hyena_nd", HyenaVariant::hyena_nd},
    {"hyena_nd_product", HyenaVariant::hyena_nd_product}};
const std::map<std::string, Direction> kDirections{{"causal", Direction::causal},
                                                   {"two_dir", Direction::two_dir},
                                                   {"four_dir", Direction::four_dir}};
const std::map<std::string, WindowVariant> kWindows{{"none", WindowVariant::none},
                                                    {"one_d", WindowVariant::one_d},
                                                    {"symmetric", WindowVariant::symmetric},
                                                    {"dimensional", WindowVariant::dimensional}};

} // namespace

PYBIND11_MODULE(_hynd, m) {
    m.doc() = "N-D token mixing with implicit convolution kernels";
    m.attr("__version__") = "0.1.0";

    m.def(
        "fft_conv_causal",
        [](const Array& u, const Array& h) {
            NoTapeScope quiet;
            return to_array(fft_conv_causal(to_tensor(u), to_tensor(h)));
        },
        py::arg("u"), py::arg("h"),
        "Causal N-D convolution of a signal with a kernel of no greater extent.");

    m.def(
        "direct_conv_oracle",
        [](const Array& u, const Array& h) {
            return to_array(direct_conv_oracle(to_tensor(u), to_tensor(h)));
        },
        py::arg("u"), py::arg("h"),
        "Same contraction by explicit summation; small sizes only.");

    m.def(
        "matrix_rank",
        [](const Array& a, double rel_tol) { return matrix_rank(to_tensor(a), rel_tol); },
        py::arg("a"), py::arg("rel_tol") = 1e-8,
        "Numerical rank from the singular spectrum.");

    m.def(
        "build_kernel",
        [](const std::string& variant, std::size_t channels, std::size_t order,
           const std::vector<std::size_t>& axes, std::uint64_t seed, std::size_t m_width,
           const std::string& window, std::size_t step) {
            NoTapeScope quiet;
            auto spec = make_implicit_filter_spec(lookup(kFilterVariants, variant, "variant"),
                                                  channels, order, axes, seed, m_width,
                                                  lookup(kWindows, window, "window"));
            return to_array(build_kernel(spec, axes, step));
        },
        py::arg("variant"), py::arg("channels"), py::arg("order"), py::arg("axes"),
        py::arg("seed") = 0, py::arg("m") = 32, py::arg("window") = "none",
        py::arg("step") = 0,
        "Evaluate a freshly initialized implicit kernel generator on a grid; "
        "returns a (channels, *axes) array.");

    m.def("verify_identity_theorems", [] {
        TheoryReport report = verify_identity_theorems();
        py::list cases;
        for (const TheoryCase& c : report.cases) {
            py::dict entry;
            entry["n"] = c.n;
            entry["r"] = c.r;
            entry["r_prime"] = c.r_prime;
            entry["pass"] = c.pass;
            entry["detail"] = c.detail;
            cases.append(entry);
        }
        py::dict out;
        out["all_pass"] = report.all_pass;
        out["cases"] = cases;
        out["text"] = report.text();
        return out;
    });

    py::class_<HyenaLayer>(m, "HyenaLayer",
                           "Gated long-convolution token mixer over an N-D grid; kernels come "
                           "from a positional generator, so parameters are grid-size "
                           "independent.")
        .def(py::init([](std::size_t channels, std::size_t order, const std::string& variant,
                         const std::string& direction, const std::vector<std::size_t>& axes,
                         std::size_t filter_m, const std::string& window, std::uint64_t seed) {
                 HyenaConfig cfg;
                 cfg.channels = channels;
                 cfg.order = order;
                 cfg.variant = lookup(kHyenaVariants, variant, "variant");
                 cfg.direction = lookup(kDirections, direction, "direction");
                 cfg.axes_hint = axes;
                 cfg.filter_m = filter_m;
                 cfg.window = lookup(kWindows, window, "window");
                 return HyenaLayer(cfg, seed);
             }),
             py::arg("channels") = 8, py::arg("order") = 2, py::arg("variant") = "hyena_nd",
             py::arg("direction") = "causal", py::arg("axes") = std::vector<std::size_t>{8, 8},
             py::arg("filter_m") = 32, py::arg("window") = "dimensional", py::arg("seed") = 0)
        .def(
            "forward",
            [](const HyenaLayer& layer, const Array& tokens) {
                NoTapeScope quiet;
                return to_array(layer.forward(to_tensor(tokens)));
            },
            py::arg("tokens"), "Mix a (batch, *axes, channels) token grid.")
        .def("__call__",
             [](const HyenaLayer& layer, const Array& tokens) {
                 NoTapeScope quiet;
                 return to_array(layer.forward(to_tensor(tokens)));
             })
        .def(
            "kernel",
            [](const HyenaLayer& layer, std::size_t step,
               const std::vector<std::size_t>& axes) {
                NoTapeScope quiet;
                return to_array(layer.kernel_slice(step, axes));
            },
            py::arg("step"), py::arg("axes"),
            "Materialize the long-convolution kernel of one recurrence step.")
        .def("set_training", &HyenaLayer::set_training, py::arg("training"))
        .def_property_readonly("parameter_count", &HyenaLayer::parameter_count);
}
