#include "hynd/hyena.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

#include "hynd/numcore.hpp"
#include "hynd/ops.hpp"
#include "hynd/tape.hpp"

namespace hynd {

namespace {

[[noreturn]] void fail(const std::string& why) { throw std::invalid_argument("hyena: " + why); }

void need(bool ok, const char* why) {
    if (!ok) fail(why);
}

double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = dist(rng);
    return Tensor::from_data(std::move(shape), std::move(values), /*requires_grad=*/true);
}

void validate_config(const HyenaConfig& cfg) {
    need(cfg.channels >= 1, "channels must be positive");
    need(cfg.order >= 1, "order must be at least 1");
    need(!cfg.axes_hint.empty(), "axes_hint must name at least one axis");
    for (std::size_t len : cfg.axes_hint) need(len >= 1, "axes_hint lengths must be positive");
    need(cfg.short_filter_size % 2 == 1, "short filter size must be odd");
    need(cfg.filter_m >= 2, "filter_m must be at least 2");
    if (cfg.direction == Direction::two_dir)
        need(cfg.order >= 2, "two_dir needs order >= 2 so both scan directions occur");
    if (cfg.direction == Direction::four_dir)
        need(cfg.ndim() == 2, "four_dir is defined on 2-D grids");
}

FilterVariant filter_variant_for(HyenaVariant variant) {
    switch (variant) {
        case HyenaVariant::hyena_1d: return FilterVariant::implicit_1d;
        case HyenaVariant::hyena_nd: return FilterVariant::implicit_nd;
        case HyenaVariant::hyena_nd_product: return FilterVariant::product_nd;
    }
    fail("unknown variant");
}

// The dimensional window pairs two decay rates with two axes; degrade it
// gracefully when the mixing grid is not 2-D.
WindowVariant window_for(WindowVariant requested, std::size_t mix_ndim) {
    if (requested == WindowVariant::none) return requested;
    if (mix_ndim == 1) return WindowVariant::one_d;
    if (requested == WindowVariant::dimensional && mix_ndim != 2) return WindowVariant::symmetric;
    return requested;
}

std::size_t pow_size(std::size_t base, std::size_t exp) {
    std::size_t out = 1;
    for (std::size_t i = 0; i < exp; ++i) out *= base;
    return out;
}

} // namespace

Tensor short_conv(const Tensor& stream, const Tensor& weights) {
    need(stream.ndim() >= 3, "short_conv: stream must be (B, axes..., C)");
    need(weights.ndim() >= 2, "short_conv: weights must be (C, taps...)");
    for (std::size_t d = 1; d < weights.ndim(); ++d)
        need(weights.shape()[d] % 2 == 1, "short_conv: every tap extent must be odd");
    Shape spatial(stream.shape().begin() + 1, stream.shape().end() - 1);
    const std::size_t batch = stream.shape().front();
    const std::size_t channels = stream.shape().back();
    Tensor tokens = ops::reshape(stream, {batch, shape_numel(spatial), channels});
    Tensor mixed = ops::short_conv(tokens, weights, spatial);
    return ops::reshape(mixed, stream.shape());
}

HyenaLayer::HyenaLayer(HyenaConfig config, std::uint64_t seed) : config_(std::move(config)) {
    validate_config(config_);
    const std::size_t channels = config_.channels;
    const std::size_t streams = (config_.order + 1) * channels;
    const std::size_t mix_ndim = config_.variant == HyenaVariant::hyena_1d ? 1 : config_.ndim();

    std::mt19937_64 rng(seed);
    in_proj_weight = uniform_tensor({streams, channels}, xavier_bound(channels, streams), rng);
    in_proj_bias = Tensor::zeros({streams}, /*requires_grad=*/true);

    // Short taps start as a delta at the origin plus noise: near-identity, so
    // early training is dominated by the long implicit kernels.
    {
        Shape taps_shape{streams};
        for (std::size_t d = 0; d < mix_ndim; ++d) taps_shape.push_back(config_.short_filter_size);
        const std::size_t taps = pow_size(config_.short_filter_size, mix_ndim);
        std::uniform_real_distribution<double> dist(-0.05, 0.05);
        std::vector<double> values(streams * taps);
        for (std::size_t s = 0; s < streams; ++s) {
            values[s * taps] = 1.0 + dist(rng);
            for (std::size_t t = 1; t < taps; ++t) values[s * taps + t] = dist(rng);
        }
        short_filter = Tensor::from_data(std::move(taps_shape), std::move(values), true);
    }

    Shape spec_axes = config_.variant == HyenaVariant::hyena_1d
                          ? Shape{shape_numel(config_.axes_hint)}
                          : config_.axes_hint;
    filter_spec = make_implicit_filter_spec(
        filter_variant_for(config_.variant), channels, config_.order, spec_axes, seed + 0x51,
        config_.filter_m, window_for(config_.window, mix_ndim), config_.gamma,
        config_.learnable_window);
    filter_spec.normalize = config_.normalize_kernels;

    out_proj_weight = uniform_tensor({channels, channels}, xavier_bound(channels, channels), rng);
    out_proj_bias = Tensor::zeros({channels}, /*requires_grad=*/true);

    if (config_.direction == Direction::four_dir) {
        std::uniform_real_distribution<double> dist(-0.05, 0.05);
        for (std::size_t k = 0; k < 4; ++k) {
            std::vector<double> scale(channels);
            for (double& v : scale) v = 1.0 + dist(rng);
            direction_scales.push_back(Tensor::from_data({channels}, std::move(scale), true));
        }
        // Aggregation starts near the mean of the four direction outputs.
        std::vector<double> agg(channels * 4 * channels, 0.0);
        for (std::size_t k = 0; k < 4; ++k)
            for (std::size_t c = 0; c < channels; ++c)
                agg[c * 4 * channels + k * channels + c] = 0.25 + dist(rng);
        aggregate_weight = Tensor::from_data({channels, 4 * channels}, std::move(agg), true);
    }

    if (config_.recurrence_residual)
        for (std::size_t n = 0; n < config_.order; ++n)
            residual_gains.push_back(Tensor::zeros({channels}, /*requires_grad=*/true));
}

HyenaLayer::HyenaLayer(const HyenaLayer& other)
    : in_proj_weight(other.in_proj_weight),
      in_proj_bias(other.in_proj_bias),
      short_filter(other.short_filter),
      filter_spec(other.filter_spec),
      out_proj_weight(other.out_proj_weight),
      out_proj_bias(other.out_proj_bias),
      direction_scales(other.direction_scales),
      aggregate_weight(other.aggregate_weight),
      residual_gains(other.residual_gains),
      config_(other.config_),
      training_(other.training_),
      explicit_kernels_(other.explicit_kernels_) {}

HyenaLayer& HyenaLayer::operator=(const HyenaLayer& other) {
    if (this == &other) return *this;
    in_proj_weight = other.in_proj_weight;
    in_proj_bias = other.in_proj_bias;
    short_filter = other.short_filter;
    filter_spec = other.filter_spec;
    out_proj_weight = other.out_proj_weight;
    out_proj_bias = other.out_proj_bias;
    direction_scales = other.direction_scales;
    aggregate_weight = other.aggregate_weight;
    residual_gains = other.residual_gains;
    config_ = other.config_;
    training_ = other.training_;
    explicit_kernels_ = other.explicit_kernels_;
    std::lock_guard<std::mutex> lock(cache_mutex_);
    kernel_cache_.clear();
    return *this;
}

void HyenaLayer::set_training(bool training) {
    training_ = training;
    invalidate_kernels();
}

void HyenaLayer::invalidate_kernels() {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    kernel_cache_.clear();
}

void HyenaLayer::set_explicit_kernels(std::vector<Tensor> kernels) {
    if (!kernels.empty())
        need(kernels.size() == config_.order, "explicit kernels: need one slice per step");
    explicit_kernels_ = std::move(kernels);
    std::lock_guard<std::mutex> lock(cache_mutex_);
    kernel_cache_.clear();
}

Tensor HyenaLayer::kernel_slice(std::size_t step, const Shape& spatial) const {
    need(step < config_.order, "kernel step out of range");
    if (!explicit_kernels_.empty()) {
        const Tensor& h = explicit_kernels_[step];
        need(h.ndim() == spatial.size() + 1, "explicit kernel rank mismatch");
        need(h.shape().front() == config_.channels, "explicit kernel channel mismatch");
        return h;
    }
    if (!training_) {
        std::lock_guard<std::mutex> lock(cache_mutex_);
        auto key = std::make_pair(spatial, step);
        auto it = kernel_cache_.find(key);
        if (it != kernel_cache_.end()) return it->second;
        Tensor h;
        {
            NoTapeScope guard;
            h = build_kernel(filter_spec, spatial, step);
        }
        kernel_cache_.emplace(std::move(key), h);
        return h;
    }
    return build_kernel(filter_spec, spatial, step);
}

Tensor HyenaLayer::mix_tokens(const Tensor& tokens, const Shape& spatial) const {
    const std::size_t channels = config_.channels;
    const Shape mix_axes = config_.variant == HyenaVariant::hyena_1d
                               ? Shape{shape_numel(spatial)}
                               : spatial;

    Tensor proj = ops::linear(tokens, in_proj_weight, in_proj_bias);
    proj = ops::short_conv(proj, short_filter, mix_axes);

    Tensor v = ops::slice_last(proj, 0, channels);
    std::vector<std::size_t> flip; // built lazily; only two_dir needs it
    for (std::size_t n = 1; n <= config_.order; ++n) {
        Tensor h = kernel_slice(n - 1, mix_axes);
        Tensor w;
        if (config_.direction == Direction::two_dir && n % 2 == 0) {
            // Reversing every axis before the convolution and undoing it after
            // turns a causal kernel into an anti-causal one; the gate still
            // applies in the original orientation.
            if (flip.empty()) flip = flip_permutation(mix_axes);
            Tensor reversed = ops::permute_tokens(v, flip);
            Tensor mixed = ops::fft_conv(reversed, h, mix_axes);
            w = ops::permute_tokens(mixed, flip);
        } else {
            w = ops::fft_conv(v, h, mix_axes);
        }
        if (config_.recurrence_residual)
            w = ops::add(w, ops::scale_channels(v, residual_gains[n - 1]));
        Tensor gate = ops::slice_last(proj, n * channels, (n + 1) * channels);
        v = ops::mul(gate, w);
    }
    return ops::linear(v, out_proj_weight, out_proj_bias);
}

Tensor HyenaLayer::forward(const Tensor& u) const {
    need(u.ndim() == config_.ndim() + 2, "input must be (B, axes..., C)");
    need(u.shape().back() == config_.channels, "input channel count mismatch");
    const std::size_t batch = u.shape().front();
    need(batch >= 1, "batch must be positive");
    Shape spatial(u.shape().begin() + 1, u.shape().end() - 1);
    const std::size_t tokens = shape_numel(spatial);
    Tensor x = ops::reshape(u, {batch, tokens, config_.channels});

    Tensor y;
    if (config_.direction == Direction::four_dir) {
        need(spatial.size() == 2 && spatial[0] == spatial[1], "four_dir needs a square grid");
        std::vector<Tensor> views;
        views.reserve(4);
        for (std::size_t k = 0; k < 4; ++k) {
            Tensor xk = ops::scale_channels(x, direction_scales[k]);
            if (k > 0) {
                auto turn = rotation_permutation(spatial[0], spatial[1], k);
                xk = ops::permute_tokens(xk, turn);
            }
            Tensor yk = mix_tokens(xk, spatial);
            if (k > 0) {
                auto back = rotation_permutation(spatial[0], spatial[1], 4 - k);
                yk = ops::permute_tokens(yk, back);
            }
            views.push_back(yk);
        }
        y = ops::linear(ops::concat_last(views), aggregate_weight, Tensor());
    } else {
        y = mix_tokens(x, spatial);
    }
    return ops::reshape(y, u.shape());
}

std::vector<Tensor> HyenaLayer::parameters() const {
    std::vector<Tensor> params = {in_proj_weight, in_proj_bias, short_filter};
    for (const Tensor& p : filter_spec.parameters()) params.push_back(p);
    params.push_back(out_proj_weight);
    params.push_back(out_proj_bias);
    if (config_.direction == Direction::four_dir) {
        for (const Tensor& p : direction_scales) params.push_back(p);
        params.push_back(aggregate_weight);
    }
    if (config_.recurrence_residual)
        for (const Tensor& p : residual_gains) params.push_back(p);
    return params;
}

std::size_t HyenaLayer::parameter_count() const {
    std::size_t total = 0;
    for (const Tensor& p : parameters()) total += p.numel();
    return total;
}

Tensor hyena_forward(const Tensor& u, const HyenaLayer& layer) { return layer.forward(u); }

HyenaLayer wrap_multidirectional(const HyenaLayer& layer, Direction mode, std::uint64_t seed) {
    HyenaLayer out(layer);
    out.config_.direction = mode;
    validate_config(out.config_);
    out.direction_scales.clear();
    out.aggregate_weight = Tensor();
    if (mode == Direction::four_dir) {
        const std::size_t channels = out.config_.channels;
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> dist(-0.05, 0.05);
        for (std::size_t k = 0; k < 4; ++k) {
            std::vector<double> scale(channels);
            for (double& v : scale) v = 1.0 + dist(rng);
            out.direction_scales.push_back(Tensor::from_data({channels}, std::move(scale), true));
        }
        std::vector<double> agg(channels * 4 * channels, 0.0);
        for (std::size_t k = 0; k < 4; ++k)
            for (std::size_t c = 0; c < channels; ++c)
                agg[c * 4 * channels + k * channels + c] = 0.25 + dist(rng);
        out.aggregate_weight = Tensor::from_data({channels, 4 * channels}, std::move(agg), true);
    }
    return out;
}

} // namespace hynd
