#include "hynd/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hynd/fft.hpp"

namespace hynd {

Tensor fft_conv_causal(const Tensor& u, const Tensor& h) {
    const Shape spatial = u.shape();
    Tensor u3 = ops::reshape(u, {1, u.numel(), 1});
    Shape h3 = h.shape();
    h3.insert(h3.begin(), 1);
    Tensor y = ops::fft_conv(u3, ops::reshape(h, h3), spatial);
    return ops::reshape(y, spatial);
}

Tensor direct_conv_oracle(const Tensor& u, const Tensor& h) {
    if (u.ndim() != h.ndim())
        throw std::invalid_argument("direct_conv_oracle: axis-count mismatch");
    for (std::size_t k = 0; k < u.ndim(); ++k) {
        if (h.shape()[k] > u.shape()[k])
            throw std::invalid_argument("direct_conv_oracle: kernel longer than signal");
    }
    auto y = detail::direct_conv_raw(u.shape(), u.data(), h.shape(), h.data());
    return Tensor::from_data(u.shape(), std::move(y));
}

Tensor outer_product(const std::vector<Tensor>& vectors) {
    if (vectors.empty()) throw std::invalid_argument("outer_product: needs at least one vector");
    Shape out_shape;
    for (const Tensor& v : vectors) {
        if (v.ndim() != 1 || v.numel() == 0)
            throw std::invalid_argument("outer_product: factors must be nonempty vectors");
        out_shape.push_back(v.shape()[0]);
    }
    const std::size_t n = vectors.size();
    Tensor out = make_tensor_like(out_shape);
    auto dst = out.data_mut();
    std::vector<std::size_t> idx(n, 0);
    for (std::size_t flat = 0; flat < dst.size(); ++flat) {
        double prod = 1.0;
        for (std::size_t k = 0; k < n; ++k) prod *= vectors[k].data()[idx[k]];
        dst[flat] = prod;
        for (std::size_t k = n; k-- > 0;) {
            if (++idx[k] < out_shape[k]) break;
            idx[k] = 0;
        }
    }

    bool any_grad = false;
    for (const Tensor& v : vectors)
        if (v.requires_grad()) any_grad = true;
    if (GradTape::active() && any_grad) {
        std::vector<std::shared_ptr<TensorImpl>> inputs;
        inputs.reserve(n);
        for (const Tensor& v : vectors) inputs.push_back(v.impl());
        detail::record_entry(
            "outer_product", out, inputs, [res = out.impl(), inputs, out_shape, n] {
                const auto& g = res->grad->values();
                std::vector<std::size_t> idx(n, 0);
                std::vector<double> factor(n), prefix(n + 1), suffix(n + 1);
                for (std::size_t flat = 0; flat < g.size(); ++flat) {
                    for (std::size_t k = 0; k < n; ++k)
                        factor[k] = inputs[k]->data->values()[idx[k]];
                    prefix[0] = 1.0;
                    for (std::size_t k = 0; k < n; ++k) prefix[k + 1] = prefix[k] * factor[k];
                    suffix[n] = 1.0;
                    for (std::size_t k = n; k-- > 0;) suffix[k] = suffix[k + 1] * factor[k];
                    for (std::size_t k = 0; k < n; ++k) {
                        if (inputs[k]->requires_grad && inputs[k]->grad) {
                            inputs[k]->grad->values()[idx[k]] +=
                                g[flat] * prefix[k] * suffix[k + 1];
                        }
                    }
                    for (std::size_t k = n; k-- > 0;) {
                        if (++idx[k] < out_shape[k]) break;
                        idx[k] = 0;
                    }
                }
            });
    }
    return out;
}

namespace {

// One-sided Jacobi on the columns of an m x n matrix (m >= n after an
// implicit transpose). Column norms at convergence are the singular values.
std::vector<double> jacobi_singular_values(std::size_t m, std::size_t n,
                                           std::span<const double> a) {
    const bool flip = m < n;
    const std::size_t rows = flip ? n : m;
    const std::size_t cols = flip ? m : n;
    std::vector<std::vector<double>> col(cols, std::vector<double>(rows));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (flip)
                col[i][j] = a[i * n + j];
            else
                col[j][i] = a[i * n + j];
        }

    constexpr double kTol = 1e-14;
    constexpr int kMaxSweeps = 64;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < cols; ++p) {
            for (std::size_t q = p + 1; q < cols; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < rows; ++i) {
                    alpha += col[p][i] * col[p][i];
                    beta += col[q][i] * col[q][i];
                    gamma += col[p][i] * col[q][i];
                }
                if (std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < rows; ++i) {
                    const double vp = col[p][i];
                    const double vq = col[q][i];
                    col[p][i] = c * vp - s * vq;
                    col[q][i] = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sigma(cols);
    for (std::size_t j = 0; j < cols; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < rows; ++i) acc += col[j][i] * col[j][i];
        sigma[j] = std::sqrt(acc);
    }
    std::sort(sigma.begin(), sigma.end(), std::greater<>());
    return sigma;
}

} // namespace

std::vector<double> singular_values(const Tensor& a) {
    if (a.ndim() != 2) throw std::invalid_argument("singular_values: 2-D tensors only");
    validate_finite(a.data(), "singular_values");
    return jacobi_singular_values(a.shape()[0], a.shape()[1], a.data());
}

std::size_t matrix_rank(const Tensor& a, double rel_tol) {
    if (rel_tol <= 0.0 || rel_tol >= 1.0)
        throw std::invalid_argument("matrix_rank: rel_tol must lie in (0, 1)");
    const auto sigma = singular_values(a);
    if (sigma.empty() || sigma[0] == 0.0) return 0;
    const double cut = rel_tol * sigma[0];
    std::size_t rank = 0;
    for (double s : sigma)
        if (s > cut) ++rank;
    return rank;
}

std::vector<std::size_t> rotation_permutation(std::size_t rows, std::size_t cols,
                                              int quarter_turns) {
    const int k = ((quarter_turns % 4) + 4) % 4;
    if ((k % 2 == 1) && rows != cols)
        throw std::invalid_argument("rotation_permutation: odd quarter turns need a square grid");
    std::vector<std::size_t> perm(rows * cols);
    // One clockwise quarter turn maps out[i][j] = in[in_rows-1-j][i]; unrolling
    // k turns from the output side, stage m reads a grid of
    // (m-1 turns applied) whose row count alternates between rows and cols.
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
            std::size_t si = i, sj = j;
            for (int m = k; m >= 1; --m) {
                const std::size_t src_rows = ((m - 1) % 2 == 0) ? rows : cols;
                const std::size_t ni = src_rows - 1 - sj;
                sj = si;
                si = ni;
            }
            perm[i * cols + j] = si * cols + sj;
        }
    return perm;
}

std::vector<std::size_t> flip_permutation(const Shape& spatial) {
    const std::size_t total = shape_numel(spatial);
    std::vector<std::size_t> strides(spatial.size(), 1);
    for (std::size_t k = spatial.size(); k-- > 1;) strides[k - 1] = strides[k] * spatial[k];
    std::vector<std::size_t> perm(total);
    std::vector<std::size_t> idx(spatial.size(), 0);
    for (std::size_t t = 0; t < total; ++t) {
        std::size_t src = 0;
        for (std::size_t k = 0; k < spatial.size(); ++k)
            src += (spatial[k] - 1 - idx[k]) * strides[k];
        perm[t] = src;
        for (std::size_t k = spatial.size(); k-- > 0;) {
            if (++idx[k] < spatial[k]) break;
            idx[k] = 0;
        }
    }
    return perm;
}

Tensor rotate_grid(const Tensor& g, int quarter_turns) {
    if (g.ndim() != 2) throw std::invalid_argument("rotate_grid: 2-D tensors only");
    const std::size_t rows = g.shape()[0];
    const std::size_t cols = g.shape()[1];
    const int k = ((quarter_turns % 4) + 4) % 4;
    const auto perm = rotation_permutation(rows, cols, k);
    const Shape out_shape = (k % 2 == 0) ? Shape{rows, cols} : Shape{cols, rows};
    // Reuse the taped token permutation: one batch, one channel.
    Tensor as_tokens = ops::reshape(g, {1, rows * cols, 1});
    Tensor rotated = ops::permute_tokens(as_tokens, perm);
    return ops::reshape(rotated, out_shape);
}

GradCheckReport check_gradients(const std::function<Tensor()>& forward,
                                const std::vector<Tensor>& parameters,
                                const std::vector<std::string>& names, double step,
                                double tolerance, double floor) {
    if (!names.empty() && names.size() != parameters.size())
        throw std::invalid_argument("check_gradients: one name per parameter (or none)");

    GradTape tape;
    std::vector<Tensor> analytic;
    {
        TapeScope scope(tape);
        Tensor loss = forward();
        analytic = gradient_of(loss, parameters);
    }

    GradCheckReport report;
    NoTapeScope quiet;
    for (std::size_t p = 0; p < parameters.size(); ++p) {
        Tensor param = parameters[p];
        auto values = param.data_mut();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + step;
            const double up = forward().value();
            values[i] = saved - step;
            const double down = forward().value();
            values[i] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double an = analytic[p].data()[i];
            const double denom = std::max({std::abs(fd), std::abs(an), floor});
            const double rel = std::abs(fd - an) / denom;
            ++report.entries_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = names.empty() ? ("param" + std::to_string(p)) : names[p];
            }
            if (rel > tolerance) report.pass = false;
        }
    }
    return report;
}

} // namespace hynd
