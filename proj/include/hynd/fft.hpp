#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace hynd::detail {

std::size_t next_pow2(std::size_t n);

/// Iterative radix-2 Cooley-Tukey, in place. `a.size()` must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse);

/// Separable N-D transform over a row-major buffer with the given dims
/// (every dim a power of two).
void fftnd_inplace(std::vector<std::complex<double>>& a, const std::vector<std::size_t>& dims,
                   bool inverse);

/// Quadrant-causal linear convolution truncated to the signal shape:
///   y[i] = sum_{s <= i per axis} h[s] * u[i - s]
/// Each axis is zero-padded to the next power of two >= 2*L_n - 1, transformed
/// per axis, multiplied pointwise and inverted. Kernel axes must not exceed
/// signal axes.
std::vector<double> conv_causal_raw(const std::vector<std::size_t>& u_shape,
                                    std::span<const double> u,
                                    const std::vector<std::size_t>& h_shape,
                                    std::span<const double> h);

/// Same result by explicit nested summation; O(L*K), small sizes only.
std::vector<double> direct_conv_raw(const std::vector<std::size_t>& u_shape,
                                    std::span<const double> u,
                                    const std::vector<std::size_t>& h_shape,
                                    std::span<const double> h);

/// Reverses every axis of a row-major buffer.
std::vector<double> flip_all_axes_raw(const std::vector<std::size_t>& shape,
                                      std::span<const double> values);

} // namespace hynd::detail
