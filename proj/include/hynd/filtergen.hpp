#pragma once

#include <cstdint>
#include <vector>

#include "hynd/tensor.hpp"

namespace hynd {

// ---- positional encoding ----------------------------------------------------

enum class EncoderMode { one_dimensional, concatenated_per_axis };

/// Sinusoidal features over a geometric frequency ladder from 1 to the longest
/// axis, positions normalized per axis. Stateless given (width, mode).
struct PositionalEncoder {
    std::size_t width = 32; // M
    EncoderMode mode = EncoderMode::one_dimensional;
};

/// Feature vector of length encoder.width for one grid coordinate.
std::vector<double> encode_position(const std::vector<std::size_t>& coords,
                                    const Shape& axis_lengths, const PositionalEncoder& encoder);

/// Encoding rows for every coordinate of the grid, row-major: (L_total, M).
/// Constant (never carries gradients).
Tensor encoding_matrix(const Shape& axis_lengths, const PositionalEncoder& encoder);

// ---- the filter network -------------------------------------------------------

enum class FilterActivation { smooth, sign };

/// Small MLP mapping positional features to per-channel kernel values.
/// smooth: tanh between layers, linear output. sign: hard threshold
/// (1 if z > 0 else 0) after every layer including the last.
struct FilterNetwork {
    std::vector<Tensor> weights; // (out, in) per layer
    std::vector<Tensor> biases;  // (out) per layer
    FilterActivation activation = FilterActivation::smooth;

    std::size_t output_width() const;
    std::vector<Tensor> parameters() const;
};

/// Widths [M, M, M, out_width] with uniform Xavier init, deterministic in seed.
FilterNetwork make_filter_network(std::size_t m, std::size_t out_width, std::uint64_t seed,
                                  FilterActivation activation = FilterActivation::smooth,
                                  std::size_t hidden_layers = 2);

/// Runs the network on rows of `encoded` (T, M) -> (T, out). Differentiable in
/// the weights; bumps the global evaluation counter by T.
Tensor filter_network_forward(const FilterNetwork& net, const Tensor& encoded);

/// Positions evaluated by filter_network_forward since the last reset.
std::uint64_t ffn_evaluations();
void reset_ffn_evaluations();

// ---- windows -------------------------------------------------------------------

enum class WindowVariant { one_d, symmetric, dimensional, none };

/// Per-channel exponential decay envelopes. alpha/beta live in tensors so the
/// learnable toggle can hand them to the optimizer; gamma stays fixed.
struct WindowParams {
    WindowVariant variant = WindowVariant::none;
    Tensor alpha; // (C), >= 0
    Tensor beta;  // (C), >= 0, dimensional variant only
    double gamma = 0.01;
    bool learnable = false;
};

/// Evenly spaced alpha over alpha_range; beta likewise but order shuffled by a
/// seeded Fisher-Yates pass so the per-axis pairings vary across channels.
struct DecaySchedule {
    std::vector<double> alpha;
    std::vector<double> beta;
};
DecaySchedule decay_schedule(std::size_t channels, std::pair<double, double> alpha_range,
                             std::pair<double, double> beta_range, std::uint64_t seed);

/// Ceiling 2/L so the fastest channel decays to e^-2 across the longest axis.
double default_decay_ceiling(std::size_t longest_axis);

WindowParams make_window(WindowVariant variant, std::size_t channels, std::size_t longest_axis,
                         std::uint64_t seed, double gamma = 0.01, bool learnable = false);

/// Scalar window value at one coordinate for one channel.
double window_eval(const std::vector<std::size_t>& coords, std::size_t channel,
                   const WindowParams& params);

/// Window values for every grid coordinate: (L_total, C). Taped when the
/// parameters are learnable.
Tensor window_matrix(const WindowParams& params, const Shape& axis_lengths);

// ---- implicit filter specs -------------------------------------------------------

enum class FilterVariant { implicit_1d, implicit_nd, product_nd };

/// Everything needed to regenerate convolution kernels from parameters alone;
/// kernels are a pure function of (spec parameters, axis lengths).
struct ImplicitFilterSpec {
    FilterVariant variant = FilterVariant::implicit_nd;
    std::size_t channels = 0; // C
    std::size_t order = 1;    // recurrence depth; network emits (order+1)*C
    PositionalEncoder encoder;
    FilterNetwork network;  // implicit variants
    WindowParams window;    // implicit variants
    std::vector<FilterNetwork> axis_networks; // product variant, one per axis
    std::vector<WindowParams> axis_windows;   // product variant, one per axis
    bool normalize = false;

    std::vector<Tensor> parameters() const;
    /// Non-learnable state a checkpoint must still carry: the frozen window
    /// decay rates (learnable windows report them via parameters() instead).
    std::vector<Tensor> buffers() const;
};

/// Deterministic spec with the default network widths [M, M, M, (order+1)*C].
/// `axes_hint` sets the decay ranges (longest axis) and, for the product
/// variant, the number of per-axis generators.
ImplicitFilterSpec make_implicit_filter_spec(FilterVariant variant, std::size_t channels,
                                             std::size_t order, const Shape& axes_hint,
                                             std::uint64_t seed, std::size_t m = 32,
                                             WindowVariant window = WindowVariant::none,
                                             double gamma = 0.01, bool learnable_window = false);

/// One kernel slice (C, L_1..L_N) for a recurrence step in [0, order).
/// Differentiable in the spec's parameters.
Tensor build_kernel(const ImplicitFilterSpec& spec, const Shape& axis_lengths,
                    std::size_t order_step);

} // namespace hynd
