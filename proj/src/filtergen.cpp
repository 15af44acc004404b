#include "hynd/filtergen.hpp"

#include <atomic>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "hynd/ops.hpp"

namespace hynd {

namespace {

std::atomic<std::uint64_t> g_ffn_evaluations{0};

std::size_t pairs_per_axis(const PositionalEncoder& enc, std::size_t ndim) {
    if (enc.mode == EncoderMode::one_dimensional) {
        if (ndim != 1)
            throw std::invalid_argument("encode_position: one_dimensional mode is 1-D only");
        if (enc.width % 2 != 0)
            throw std::invalid_argument("encode_position: width must be divisible by 2");
        return enc.width / 2;
    }
    if (enc.width % (2 * ndim) != 0)
        throw std::invalid_argument("encode_position: width must be divisible by 2N");
    return enc.width / (2 * ndim);
}

std::vector<double> frequency_ladder(std::size_t pairs, std::size_t longest_axis) {
    std::vector<double> ladder(pairs);
    const double top = static_cast<double>(std::max<std::size_t>(longest_axis, 2));
    for (std::size_t k = 0; k < pairs; ++k) {
        const double t = pairs > 1 ? static_cast<double>(k) / static_cast<double>(pairs - 1)
                                   : 0.0;
        ladder[k] = std::pow(top, t); // geometric from 1 to L_max
    }
    return ladder;
}

} // namespace

std::vector<double> encode_position(const std::vector<std::size_t>& coords,
                                    const Shape& axis_lengths, const PositionalEncoder& encoder) {
    const std::size_t ndim = axis_lengths.size();
    if (coords.size() != ndim)
        throw std::invalid_argument("encode_position: coordinate arity mismatch");
    for (std::size_t k = 0; k < ndim; ++k)
        if (coords[k] >= axis_lengths[k])
            throw std::invalid_argument("encode_position: coordinate out of range");

    const std::size_t pairs = pairs_per_axis(encoder, ndim);
    std::size_t longest = 0;
    for (std::size_t l : axis_lengths) longest = std::max(longest, l);
    const auto ladder = frequency_ladder(pairs, longest);

    std::vector<double> features;
    features.reserve(encoder.width);
    for (std::size_t k = 0; k < ndim; ++k) {
        const double x =
            static_cast<double>(coords[k]) / static_cast<double>(axis_lengths[k]);
        for (double f : ladder) {
            const double phase = 2.0 * std::numbers::pi * f * x;
            features.push_back(std::sin(phase));
            features.push_back(std::cos(phase));
        }
    }
    return features;
}

Tensor encoding_matrix(const Shape& axis_lengths, const PositionalEncoder& encoder) {
    const std::size_t total = shape_numel(axis_lengths);
    const std::size_t ndim = axis_lengths.size();
    std::vector<double> rows;
    rows.reserve(total * encoder.width);
    std::vector<std::size_t> coords(ndim, 0);
    for (std::size_t t = 0; t < total; ++t) {
        auto f = encode_position(coords, axis_lengths, encoder);
        rows.insert(rows.end(), f.begin(), f.end());
        for (std::size_t k = ndim; k-- > 0;) {
            if (++coords[k] < axis_lengths[k]) break;
            coords[k] = 0;
        }
    }
    return Tensor::from_data({total, encoder.width}, std::move(rows));
}

std::size_t FilterNetwork::output_width() const {
    if (weights.empty()) throw std::logic_error("FilterNetwork: no layers");
    return weights.back().shape()[0];
}

std::vector<Tensor> FilterNetwork::parameters() const {
    std::vector<Tensor> params;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        params.push_back(weights[i]);
        params.push_back(biases[i]);
    }
    return params;
}

FilterNetwork make_filter_network(std::size_t m, std::size_t out_width, std::uint64_t seed,
                                  FilterActivation activation, std::size_t hidden_layers) {
    if (m == 0 || out_width == 0)
        throw std::invalid_argument("make_filter_network: zero widths");
    std::mt19937_64 rng(seed);
    FilterNetwork net;
    net.activation = activation;
    std::vector<std::size_t> widths{m};
    for (std::size_t i = 0; i < hidden_layers; ++i) widths.push_back(m);
    widths.push_back(out_width);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const std::size_t in_w = widths[l], out_w = widths[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(in_w + out_w));
        std::uniform_real_distribution<double> dist(-bound, bound);
        std::vector<double> w(out_w * in_w);
        for (double& v : w) v = dist(rng);
        net.weights.push_back(Tensor::from_data({out_w, in_w}, std::move(w), true));
        net.biases.push_back(Tensor::zeros({out_w}, true));
    }
    return net;
}

Tensor filter_network_forward(const FilterNetwork& net, const Tensor& encoded) {
    if (encoded.ndim() != 2)
        throw std::invalid_argument("filter_network_forward: encoded rows must be 2-D");
    if (net.weights.empty()) throw std::logic_error("filter_network_forward: no layers");
    if (encoded.shape()[1] != net.weights.front().shape()[1])
        throw std::invalid_argument("filter_network_forward: feature width mismatch");

    g_ffn_evaluations.fetch_add(encoded.shape()[0], std::memory_order_relaxed);

    Tensor h = encoded;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        h = ops::linear(h, net.weights[l], net.biases[l]);
        const bool last = (l + 1 == net.weights.size());
        if (net.activation == FilterActivation::sign) {
            h = ops::heaviside(h);
        } else if (!last) {
            h = ops::tanh(h);
        }
    }
    return h;
}

std::uint64_t ffn_evaluations() { return g_ffn_evaluations.load(std::memory_order_relaxed); }
void reset_ffn_evaluations() { g_ffn_evaluations.store(0, std::memory_order_relaxed); }

DecaySchedule decay_schedule(std::size_t channels, std::pair<double, double> alpha_range,
                             std::pair<double, double> beta_range, std::uint64_t seed) {
    if (channels == 0) throw std::invalid_argument("decay_schedule: zero channels");
    if (alpha_range.first > alpha_range.second || beta_range.first > beta_range.second)
        throw std::invalid_argument("decay_schedule: range min exceeds max");

    auto spaced = [channels](std::pair<double, double> range) {
        std::vector<double> v(channels);
        for (std::size_t c = 0; c < channels; ++c) {
            const double t = channels > 1
                                 ? static_cast<double>(c) / static_cast<double>(channels - 1)
                                 : 0.0;
            v[c] = range.first + t * (range.second - range.first);
        }
        return v;
    };

    DecaySchedule out;
    out.alpha = spaced(alpha_range);
    out.beta = spaced(beta_range);
    // Fisher-Yates with an explicit generator so the permutation is stable
    // across standard libraries.
    std::mt19937_64 rng(seed);
    for (std::size_t i = channels; i-- > 1;) {
        const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(out.beta[i], out.beta[j]);
    }
    return out;
}

double default_decay_ceiling(std::size_t longest_axis) {
    return 2.0 / static_cast<double>(std::max<std::size_t>(longest_axis, 1));
}

WindowParams make_window(WindowVariant variant, std::size_t channels, std::size_t longest_axis,
                         std::uint64_t seed, double gamma, bool learnable) {
    WindowParams params;
    params.variant = variant;
    params.gamma = gamma;
    params.learnable = learnable;
    if (variant == WindowVariant::none) return params;
    const double ceiling = default_decay_ceiling(longest_axis);
    auto sched = decay_schedule(channels, {0.0, ceiling}, {0.0, ceiling}, seed);
    params.alpha = Tensor::from_data({channels}, std::move(sched.alpha), learnable);
    params.beta = Tensor::from_data({channels}, std::move(sched.beta), learnable);
    return params;
}

namespace {

void check_window_arity(const WindowVariant variant, std::size_t arity) {
    if (variant == WindowVariant::one_d && arity != 1)
        throw std::invalid_argument("window: one_d variant takes 1-D coordinates");
    // symmetric decays in the summed distance from the origin, any arity.
    if (variant == WindowVariant::dimensional && arity != 2)
        throw std::invalid_argument("window: dimensional variant takes 2-D coordinates");
}

void check_window_nonnegative(const WindowParams& params, double tolerance) {
    auto nonneg = [tolerance](const Tensor& t) {
        if (!t.defined()) return true;
        for (double v : t.data())
            if (v < -tolerance) return false;
        return true;
    };
    if (!nonneg(params.alpha) || !nonneg(params.beta))
        throw std::invalid_argument("window: decay rates must be nonnegative");
}

} // namespace

double window_eval(const std::vector<std::size_t>& coords, std::size_t channel,
                   const WindowParams& params) {
    if (params.variant == WindowVariant::none) return 1.0;
    check_window_arity(params.variant, coords.size());
    check_window_nonnegative(params, 0.0);
    const double a = params.alpha.data()[channel];
    switch (params.variant) {
    case WindowVariant::one_d:
        return std::exp(-a * static_cast<double>(coords[0])) + params.gamma;
    case WindowVariant::symmetric: {
        std::size_t total = 0;
        for (std::size_t c : coords) total += c;
        return std::exp(-a * static_cast<double>(total)) + params.gamma;
    }
    case WindowVariant::dimensional: {
        const double b = params.beta.data()[channel];
        return std::exp(-(a * static_cast<double>(coords[0]) +
                          b * static_cast<double>(coords[1]))) +
               params.gamma;
    }
    default:
        return 1.0;
    }
}

Tensor window_matrix(const WindowParams& params, const Shape& axis_lengths) {
    const std::size_t total = shape_numel(axis_lengths);
    if (params.variant == WindowVariant::none)
        throw std::logic_error("window_matrix: the none variant has no matrix");
    check_window_arity(params.variant, axis_lengths.size());
    // Small slack: finite-difference probes and optimizer steps may graze zero.
    check_window_nonnegative(params, 1e-3);

    // Per-position coordinate sums feeding the exponent, as constants.
    std::vector<double> first(total), second(total);
    std::vector<std::size_t> coords(axis_lengths.size(), 0);
    for (std::size_t t = 0; t < total; ++t) {
        switch (params.variant) {
        case WindowVariant::one_d:
            first[t] = static_cast<double>(coords[0]);
            break;
        case WindowVariant::symmetric: {
            std::size_t total = 0;
            for (std::size_t c : coords) total += c;
            first[t] = static_cast<double>(total);
            break;
        }
        case WindowVariant::dimensional:
            first[t] = static_cast<double>(coords[0]);
            second[t] = static_cast<double>(coords[1]);
            break;
        default:
            break;
        }
        for (std::size_t k = axis_lengths.size(); k-- > 0;) {
            if (++coords[k] < axis_lengths[k]) break;
            coords[k] = 0;
        }
    }

    Tensor pos1 = Tensor::from_data({total}, std::move(first));
    Tensor exponent = ops::outer(pos1, params.alpha);
    if (params.variant == WindowVariant::dimensional) {
        Tensor pos2 = Tensor::from_data({total}, std::move(second));
        exponent = ops::add(exponent, ops::outer(pos2, params.beta));
    }
    Tensor w = ops::offset(ops::exp(ops::scale(exponent, -1.0)), params.gamma);
    return w; // (total, channels)
}

std::vector<Tensor> ImplicitFilterSpec::parameters() const {
    std::vector<Tensor> params;
    auto add_window = [&](const WindowParams& w) {
        if (w.learnable && w.variant != WindowVariant::none) {
            params.push_back(w.alpha);
            if (w.variant == WindowVariant::dimensional) params.push_back(w.beta);
        }
    };
    if (variant == FilterVariant::product_nd) {
        for (const auto& net : axis_networks) {
            auto p = net.parameters();
            params.insert(params.end(), p.begin(), p.end());
        }
        for (const auto& w : axis_windows) add_window(w);
    } else {
        auto p = network.parameters();
        params.insert(params.end(), p.begin(), p.end());
        add_window(window);
    }
    return params;
}

std::vector<Tensor> ImplicitFilterSpec::buffers() const {
    std::vector<Tensor> out;
    auto add_window = [&](const WindowParams& w) {
        if (!w.learnable && w.variant != WindowVariant::none) {
            out.push_back(w.alpha);
            if (w.variant == WindowVariant::dimensional) out.push_back(w.beta);
        }
    };
    if (variant == FilterVariant::product_nd)
        for (const auto& w : axis_windows) add_window(w);
    else
        add_window(window);
    return out;
}

ImplicitFilterSpec make_implicit_filter_spec(FilterVariant variant, std::size_t channels,
                                             std::size_t order, const Shape& axes_hint,
                                             std::uint64_t seed, std::size_t m,
                                             WindowVariant window, double gamma,
                                             bool learnable_window) {
    if (channels == 0 || order == 0)
        throw std::invalid_argument("make_implicit_filter_spec: channels and order must be >= 1");
    if (axes_hint.empty())
        throw std::invalid_argument("make_implicit_filter_spec: empty axes hint");

    std::size_t longest = 0;
    for (std::size_t l : axes_hint) longest = std::max(longest, l);
    const std::size_t out_width = (order + 1) * channels;

    ImplicitFilterSpec spec;
    spec.variant = variant;
    spec.channels = channels;
    spec.order = order;
    spec.encoder.width = m;

    if (variant == FilterVariant::product_nd) {
        spec.encoder.mode = EncoderMode::one_dimensional;
        for (std::size_t n = 0; n < axes_hint.size(); ++n) {
            spec.axis_networks.push_back(
                make_filter_network(m, out_width, seed + 101 * (n + 1)));
            const WindowVariant axis_variant =
                window == WindowVariant::none ? WindowVariant::none : WindowVariant::one_d;
            spec.axis_windows.push_back(make_window(axis_variant, channels, axes_hint[n],
                                                    seed + 211 * (n + 1), gamma,
                                                    learnable_window));
        }
    } else {
        spec.encoder.mode = variant == FilterVariant::implicit_1d
                                ? EncoderMode::one_dimensional
                                : EncoderMode::concatenated_per_axis;
        spec.network = make_filter_network(m, out_width, seed);
        spec.window = make_window(window, channels, longest, seed + 7, gamma, learnable_window);
    }
    return spec;
}

namespace {

Tensor windowed_slice(const Tensor& net_out, const WindowParams& window,
                      const Shape& axis_lengths, std::size_t channels, std::size_t order_step) {
    Tensor slice = ops::slice_last(net_out, order_step * channels, (order_step + 1) * channels);
    if (window.variant == WindowVariant::none) return slice;
    return ops::mul(slice, window_matrix(window, axis_lengths));
}

} // namespace

Tensor build_kernel(const ImplicitFilterSpec& spec, const Shape& axis_lengths,
                    std::size_t order_step) {
    if (order_step >= spec.order)
        throw std::invalid_argument("build_kernel: order step out of range");
    if (spec.variant == FilterVariant::implicit_1d && axis_lengths.size() != 1)
        throw std::invalid_argument("build_kernel: implicit_1d takes a single axis");

    Tensor kernel;
    if (spec.variant == FilterVariant::product_nd) {
        if (axis_lengths.size() != spec.axis_networks.size())
            throw std::invalid_argument(
                "build_kernel: axis count must match the product sub-generators");
        Tensor core;
        for (std::size_t n = 0; n < axis_lengths.size(); ++n) {
            const Shape axis{axis_lengths[n]};
            Tensor rows = encoding_matrix(axis, spec.encoder);
            Tensor out = filter_network_forward(spec.axis_networks[n], rows);
            Tensor factor =
                windowed_slice(out, spec.axis_windows[n], axis, spec.channels, order_step);
            if (n == 0) {
                core = ops::transpose(factor); // (C, L_0)
            } else {
                core = ops::channel_outer(core, factor);
            }
        }
        kernel = core;
    } else {
        Tensor rows = encoding_matrix(axis_lengths, spec.encoder);
        Tensor out = filter_network_forward(spec.network, rows);
        Tensor flat = windowed_slice(out, spec.window, axis_lengths, spec.channels, order_step);
        Shape kshape{spec.channels};
        for (std::size_t l : axis_lengths) kshape.push_back(l);
        kernel = ops::reshape(ops::transpose(flat), kshape);
    }

    if (spec.normalize) kernel = ops::l1_normalize(kernel);
    validate_finite(kernel.data(), "build_kernel");
    return kernel;
}

} // namespace hynd
