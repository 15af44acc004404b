#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <vector>

#include "hynd/filtergen.hpp"
#include "hynd/tensor.hpp"

namespace hynd {

enum class HyenaVariant { hyena_1d, hyena_nd, hyena_nd_product };
enum class Direction { causal, two_dir, four_dir };

struct HyenaConfig {
    std::size_t channels = 8;  // C
    std::size_t order = 2;     // recurrence depth
    HyenaVariant variant = HyenaVariant::hyena_nd;
    Direction direction = Direction::causal;
    std::size_t short_filter_size = 3; // odd; per-axis extent of the short taps
    Shape axes_hint = {8, 8};          // sets dimensionality and decay ranges
    std::size_t filter_m = 32;         // positional feature width
    WindowVariant window = WindowVariant::dimensional;
    double gamma = 0.01;
    bool learnable_window = false;
    bool normalize_kernels = false;  // L1-normalize each kernel slice
    bool recurrence_residual = false; // v <- x (conv(v,h) + r v) instead of x conv(v,h)

    std::size_t ndim() const { return axes_hint.size(); }
};

/// Applies per-channel causal taps to a (B, axes..., C) stream. weights:
/// (C, k_1..k_N) with every extent odd; identity is a delta at the origin.
Tensor short_conv(const Tensor& stream, const Tensor& weights);

/// Token mixer: project to order+1 streams, tap each with a short causal
/// filter, then interleave implicit long convolutions with gating. Parameters
/// are independent of grid size; the same layer evaluates any axis lengths.
class HyenaLayer {
public:
    HyenaLayer(HyenaConfig config, std::uint64_t seed);
    HyenaLayer(const HyenaLayer& other);            // shares parameters, fresh cache
    HyenaLayer& operator=(const HyenaLayer& other); // likewise

    /// u: (B, L_1..L_N, C) -> same shape.
    Tensor forward(const Tensor& u) const;

    std::vector<Tensor> parameters() const;
    /// Frozen window decay rates; checkpoints persist them alongside the
    /// parameters.
    std::vector<Tensor> buffers() const { return filter_spec.buffers(); }
    std::size_t parameter_count() const;

    /// Drops memoized kernels (call after editing parameters in place).
    void invalidate_kernels();

    /// Training mode rebuilds kernels every pass; evaluation memoizes them
    /// per grid size.
    void set_training(bool training);
    bool training() const { return training_; }

    /// Test seam: bypass the implicit generator with fixed kernel slices
    /// (one (C, k...) tensor per recurrence step). Empty restores the default.
    void set_explicit_kernels(std::vector<Tensor> kernels);

    const HyenaConfig& config() const { return config_; }

    /// Kernel slice for one recurrence step at the given grid size.
    Tensor kernel_slice(std::size_t step, const Shape& spatial) const;

    // Parameters are public handles: tests and optimizers edit them in place.
    Tensor in_proj_weight;  // ((order+1)C, C)
    Tensor in_proj_bias;    // ((order+1)C)
    Tensor short_filter;    // ((order+1)C, k^N taps)
    ImplicitFilterSpec filter_spec;
    Tensor out_proj_weight; // (C, C)
    Tensor out_proj_bias;   // (C)
    std::vector<Tensor> direction_scales; // four_dir: 4 x (C)
    Tensor aggregate_weight;              // four_dir: (C, 4C), bias-free
    std::vector<Tensor> residual_gains;   // recurrence_residual: order x (C)

private:
    friend HyenaLayer wrap_multidirectional(const HyenaLayer&, Direction, std::uint64_t);

    Tensor mix_tokens(const Tensor& tokens, const Shape& spatial) const;

    HyenaConfig config_;
    bool training_ = true;
    std::vector<Tensor> explicit_kernels_;
    mutable std::mutex cache_mutex_;
    mutable std::map<std::pair<Shape, std::size_t>, Tensor> kernel_cache_;
};

/// layer.forward; named entry point matching the mixer contract.
Tensor hyena_forward(const Tensor& u, const HyenaLayer& layer);

/// Re-targets a layer's direction mode, sharing every core parameter.
/// four_dir allocates the per-direction scales and the 4C->C aggregation.
HyenaLayer wrap_multidirectional(const HyenaLayer& layer, Direction mode, std::uint64_t seed);

} // namespace hynd
