#include "hynd/fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hynd::detail {

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft size must be a power of two");
    if (n == 1) return;

    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(angle), std::sin(angle));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> even = a[i + k];
                const std::complex<double> odd = a[i + k + len / 2] * w;
                a[i + k] = even + odd;
                a[i + k + len / 2] = even - odd;
                w *= wlen;
            }
        }
    }

    if (inverse) {
        const double scale = 1.0 / static_cast<double>(n);
        for (auto& v : a) v *= scale;
    }
}

void fftnd_inplace(std::vector<std::complex<double>>& a, const std::vector<std::size_t>& dims,
                   bool inverse) {
    const std::size_t ndim = dims.size();
    std::size_t total = 1;
    for (std::size_t d : dims) total *= d;
    if (a.size() != total) throw std::invalid_argument("fftnd buffer size mismatch");

    std::vector<std::size_t> strides(ndim, 1);
    for (std::size_t k = ndim; k-- > 1;) strides[k - 1] = strides[k] * dims[k];

    std::vector<std::complex<double>> line;
    for (std::size_t axis = 0; axis < ndim; ++axis) {
        const std::size_t len = dims[axis];
        if (len == 1) continue;
        const std::size_t stride = strides[axis];
        const std::size_t lines = total / len;
        line.resize(len);
        for (std::size_t l = 0; l < lines; ++l) {
            // Decompose line index into the base offset skipping `axis`.
            std::size_t rem = l;
            std::size_t base = 0;
            for (std::size_t k = ndim; k-- > 0;) {
                if (k == axis) continue;
                const std::size_t coord = rem % dims[k];
                rem /= dims[k];
                base += coord * strides[k];
            }
            for (std::size_t i = 0; i < len; ++i) line[i] = a[base + i * stride];
            fft_inplace(line, inverse);
            for (std::size_t i = 0; i < len; ++i) a[base + i * stride] = line[i];
        }
    }
}

namespace {

void check_conv_shapes(const std::vector<std::size_t>& u_shape,
                       const std::vector<std::size_t>& h_shape) {
    if (u_shape.size() != h_shape.size()) {
        throw std::invalid_argument("convolution axis-count mismatch between signal and kernel");
    }
    if (u_shape.empty()) throw std::invalid_argument("convolution needs at least one axis");
    for (std::size_t k = 0; k < u_shape.size(); ++k) {
        if (h_shape[k] > u_shape[k]) {
            throw std::invalid_argument("kernel axis " + std::to_string(k) +
                                        " longer than signal axis");
        }
    }
}

} // namespace

std::vector<double> conv_causal_raw(const std::vector<std::size_t>& u_shape,
                                    std::span<const double> u,
                                    const std::vector<std::size_t>& h_shape,
                                    std::span<const double> h) {
    check_conv_shapes(u_shape, h_shape);
    const std::size_t ndim = u_shape.size();

    std::vector<std::size_t> padded(ndim);
    std::size_t padded_total = 1;
    for (std::size_t k = 0; k < ndim; ++k) {
        padded[k] = next_pow2(2 * u_shape[k] - 1);
        padded_total *= padded[k];
    }

    std::vector<std::size_t> pstrides(ndim, 1);
    for (std::size_t k = ndim; k-- > 1;) pstrides[k - 1] = pstrides[k] * padded[k];

    auto embed = [&](std::span<const double> src, const std::vector<std::size_t>& sshape) {
        std::vector<std::complex<double>> out(padded_total, {0.0, 0.0});
        std::vector<std::size_t> idx(ndim, 0);
        const std::size_t n = src.size();
        for (std::size_t flat = 0; flat < n; ++flat) {
            std::size_t off = 0;
            for (std::size_t k = 0; k < ndim; ++k) off += idx[k] * pstrides[k];
            out[off] = {src[flat], 0.0};
            for (std::size_t k = ndim; k-- > 0;) {
                if (++idx[k] < sshape[k]) break;
                idx[k] = 0;
            }
        }
        return out;
    };

    auto fu = embed(u, u_shape);
    auto fh = embed(h, h_shape);
    fftnd_inplace(fu, padded, false);
    fftnd_inplace(fh, padded, false);
    for (std::size_t i = 0; i < padded_total; ++i) fu[i] *= fh[i];
    fftnd_inplace(fu, padded, true);

    std::size_t u_total = 1;
    for (std::size_t d : u_shape) u_total *= d;
    std::vector<double> result(u_total);
    std::vector<std::size_t> idx(ndim, 0);
    for (std::size_t flat = 0; flat < result.size(); ++flat) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < ndim; ++k) off += idx[k] * pstrides[k];
        result[flat] = fu[off].real();
        for (std::size_t k = ndim; k-- > 0;) {
            if (++idx[k] < u_shape[k]) break;
            idx[k] = 0;
        }
    }
    return result;
}

std::vector<double> direct_conv_raw(const std::vector<std::size_t>& u_shape,
                                    std::span<const double> u,
                                    const std::vector<std::size_t>& h_shape,
                                    std::span<const double> h) {
    check_conv_shapes(u_shape, h_shape);
    const std::size_t ndim = u_shape.size();

    std::vector<std::size_t> ustrides(ndim, 1);
    for (std::size_t k = ndim; k-- > 1;) ustrides[k - 1] = ustrides[k] * u_shape[k];

    std::size_t total = 1;
    for (std::size_t d : u_shape) total *= d;
    std::size_t ktotal = 1;
    for (std::size_t d : h_shape) ktotal *= d;

    std::vector<double> result(total, 0.0);
    std::vector<std::size_t> yi(ndim, 0);
    std::vector<std::size_t> si(ndim, 0);
    for (std::size_t flat = 0; flat < total; ++flat) {
        double acc = 0.0;
        std::fill(si.begin(), si.end(), 0);
        for (std::size_t kf = 0; kf < ktotal; ++kf) {
            bool inside = true;
            std::size_t uoff = 0;
            for (std::size_t k = 0; k < ndim; ++k) {
                if (si[k] > yi[k]) {
                    inside = false;
                    break;
                }
                uoff += (yi[k] - si[k]) * ustrides[k];
            }
            if (inside) acc += h[kf] * u[uoff];
            for (std::size_t k = ndim; k-- > 0;) {
                if (++si[k] < h_shape[k]) break;
                si[k] = 0;
            }
        }
        result[flat] = acc;
        for (std::size_t k = ndim; k-- > 0;) {
            if (++yi[k] < u_shape[k]) break;
            yi[k] = 0;
        }
    }
    return result;
}

std::vector<double> flip_all_axes_raw(const std::vector<std::size_t>& shape,
                                      std::span<const double> values) {
    const std::size_t ndim = shape.size();
    std::vector<std::size_t> strides(ndim, 1);
    for (std::size_t k = ndim; k-- > 1;) strides[k - 1] = strides[k] * shape[k];

    std::vector<double> out(values.size());
    std::vector<std::size_t> idx(ndim, 0);
    for (std::size_t flat = 0; flat < values.size(); ++flat) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < ndim; ++k) off += (shape[k] - 1 - idx[k]) * strides[k];
        out[off] = values[flat];
        for (std::size_t k = ndim; k-- > 0;) {
            if (++idx[k] < shape[k]) break;
            idx[k] = 0;
        }
    }
    return out;
}

} // namespace hynd::detail
