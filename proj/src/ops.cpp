#include "hynd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "hynd/fft.hpp"
#include "hynd/tape.hpp"

namespace hynd::ops {

namespace {

using detail::record_entry;
using detail::should_record;

[[noreturn]] void fail(const char* op, const std::string& why) {
    throw std::invalid_argument(std::string(op) + ": " + why);
}

void need(bool cond, const char* op, const char* why) {
    if (!cond) fail(op, why);
}

std::span<double> grad_span(const std::shared_ptr<TensorImpl>& impl) {
    return {impl->grad->values().data(), impl->grad->values().size()};
}

bool wants_grad(const std::shared_ptr<TensorImpl>& impl) {
    return impl->requires_grad && impl->grad != nullptr;
}

// out (M,N) += / = A (M,K) @ B (K,N)
void mm_nn(std::span<const double> a, std::span<const double> b, std::size_t m, std::size_t k,
           std::size_t n, std::span<double> out, bool accumulate) {
    if (!accumulate) std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b.data() + p * n;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

// out (M,N) += A (M,K) @ B(N,K)^T
void mm_nt(std::span<const double> a, std::span<const double> b, std::size_t m, std::size_t k,
           std::size_t n, std::span<double> out, bool accumulate) {
    if (!accumulate) std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.data() + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b.data() + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            out[i * n + j] += acc;
        }
    }
}

// out (K,N) += A(M,K)^T @ B (M,N)
void mm_tn(std::span<const double> a, std::span<const double> b, std::size_t m, std::size_t k,
           std::size_t n, std::span<double> out, bool accumulate) {
    if (!accumulate) std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.data() + i * k;
        const double* brow = b.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* orow = out.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

Tensor unary_map(const char* op, const Tensor& a, double (*fwd)(double), double (*dfdx)(double)) {
    Tensor out = make_tensor_like(a.shape());
    auto src = a.data();
    auto dst = out.data_mut();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fwd(src[i]);
    if (should_record({&a})) {
        record_entry(op, out, {a.impl()}, [res = out.impl(), in = a.impl(), dfdx] {
            if (!wants_grad(in)) return;
            auto g = grad_span(res);
            auto gi = grad_span(in);
            const auto& x = in->data->values();
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * dfdx(x[i]);
        });
    }
    return out;
}

Shape token_shape_check(const char* op, const Tensor& a) {
    need(a.ndim() == 3, op, "expected a (batch, tokens, channels) tensor");
    return a.shape();
}

} // namespace

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    need(a.shape() == b.shape(), "add", "shape mismatch");
    Tensor out = make_tensor_like(a.shape());
    auto pa = a.data();
    auto pb = b.data();
    auto dst = out.data_mut();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = pa[i] + pb[i];
    if (should_record({&a, &b})) {
        record_entry("add", out, {a.impl(), b.impl()},
                     [res = out.impl(), ia = a.impl(), ib = b.impl()] {
                         auto g = grad_span(res);
                         if (wants_grad(ia)) {
                             auto ga = grad_span(ia);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                         }
                         if (wants_grad(ib)) {
                             auto gb = grad_span(ib);
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                         }
                     });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    need(a.shape() == b.shape(), "sub", "shape mismatch");
    Tensor out = make_tensor_like(a.shape());
    auto pa = a.data();
    auto pb = b.data();
    auto dst = out.data_mut();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = pa[i] - pb[i];
    if (should_record({&a, &b})) {
        record_entry("sub", out, {a.impl(), b.impl()},
                     [res = out.impl(), ia = a.impl(), ib = b.impl()] {
                         auto g = grad_span(res);
                         if (wants_grad(ia)) {
                             auto ga = grad_span(ia);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                         }
                         if (wants_grad(ib)) {
                             auto gb = grad_span(ib);
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                         }
                     });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    need(a.shape() == b.shape(), "mul", "shape mismatch");
    Tensor out = make_tensor_like(a.shape());
    auto pa = a.data();
    auto pb = b.data();
    auto dst = out.data_mut();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = pa[i] * pb[i];
    if (should_record({&a, &b})) {
        record_entry("mul", out, {a.impl(), b.impl()},
                     [res = out.impl(), ia = a.impl(), ib = b.impl()] {
                         auto g = grad_span(res);
                         const auto& xa = ia->data->values();
                         const auto& xb = ib->data->values();
                         if (wants_grad(ia)) {
                             auto ga = grad_span(ia);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * xb[i];
                         }
                         if (wants_grad(ib)) {
                             auto gb = grad_span(ib);
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * xa[i];
                         }
                     });
    }
    return out;
}

Tensor scale(const Tensor& a, double factor) {
    Tensor out = make_tensor_like(a.shape());
    auto src = a.data();
    auto dst = out.data_mut();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] * factor;
    if (should_record({&a})) {
        record_entry("scale", out, {a.impl()}, [res = out.impl(), in = a.impl(), factor] {
            if (!wants_grad(in)) return;
            auto g = grad_span(res);
            auto gi = grad_span(in);
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * factor;
        });
    }
    return out;
}

Tensor offset(const Tensor& a, double constant) {
    Tensor out = make_tensor_like(a.shape());
    auto src = a.data();
    auto dst = out.data_mut();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] + constant;
    if (should_record({&a})) {
        record_entry("offset", out, {a.impl()}, [res = out.impl(), in = a.impl()] {
            if (!wants_grad(in)) return;
            auto g = grad_span(res);
            auto gi = grad_span(in);
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        });
    }
    return out;
}

Tensor exp(const Tensor& a) {
    Tensor out = unary_map(
        "exp", a, [](double x) { return std::exp(x); },
        [](double x) { return std::exp(x); });
    validate_finite(out.data(), "exp");
    return out;
}

Tensor tanh(const Tensor& a) {
    return unary_map(
        "tanh", a, [](double x) { return std::tanh(x); },
        [](double x) {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        });
}

Tensor gelu(const Tensor& a) {
    constexpr double kC0 = 0.044715;
    static const double kRoot = std::sqrt(2.0 / std::numbers::pi);
    return unary_map(
        "gelu", a,
        [](double x) {
            const double u = kRoot * (x + kC0 * x * x * x);
            return 0.5 * x * (1.0 + std::tanh(u));
        },
        [](double x) {
            const double u = kRoot * (x + kC0 * x * x * x);
            const double t = std::tanh(u);
            const double du = kRoot * (1.0 + 3.0 * kC0 * x * x);
            return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
        });
}

Tensor heaviside(const Tensor& a) {
    Tensor out = make_tensor_like(a.shape());
    auto src = a.data();
    auto dst = out.data_mut();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] > 0.0 ? 1.0 : 0.0;
    if (should_record({&a})) {
        // Keeps the graph connected; the step's derivative is zero a.e.
        record_entry("heaviside", out, {a.impl()}, [] {});
    }
    return out;
}

// ---- reductions and losses -------------------------------------------------

Tensor sum(const Tensor& a) {
    Tensor out = make_tensor_like({1});
    auto src = a.data();
    double acc = 0.0;
    for (double v : src) acc += v;
    out.data_mut()[0] = acc;
    if (should_record({&a})) {
        record_entry("sum", out, {a.impl()}, [res = out.impl(), in = a.impl()] {
            if (!wants_grad(in)) return;
            const double g = res->grad->values()[0];
            auto gi = grad_span(in);
            for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g;
        });
    }
    return out;
}

Tensor mean(const Tensor& a) {
    need(a.numel() > 0, "mean", "empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor mse(const Tensor& pred, const Tensor& target) {
    need(pred.shape() == target.shape(), "mse", "shape mismatch");
    Tensor out = make_tensor_like({1});
    auto p = pred.data();
    auto t = target.data();
    const double inv_n = 1.0 / static_cast<double>(p.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - t[i];
        acc += d * d;
    }
    out.data_mut()[0] = acc * inv_n;
    if (should_record({&pred, &target})) {
        record_entry("mse", out, {pred.impl(), target.impl()},
                     [res = out.impl(), ip = pred.impl(), it = target.impl(), inv_n] {
                         const double g = res->grad->values()[0];
                         const auto& xp = ip->data->values();
                         const auto& xt = it->data->values();
                         if (wants_grad(ip)) {
                             auto gp = grad_span(ip);
                             for (std::size_t i = 0; i < gp.size(); ++i)
                                 gp[i] += g * 2.0 * inv_n * (xp[i] - xt[i]);
                         }
                         if (wants_grad(it)) {
                             auto gt = grad_span(it);
                             for (std::size_t i = 0; i < gt.size(); ++i)
                                 gt[i] -= g * 2.0 * inv_n * (xp[i] - xt[i]);
                         }
                     });
    }
    return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
    need(logits.ndim() == 2, "cross_entropy", "logits must be (batch, classes)");
    const std::size_t batch = logits.shape()[0];
    const std::size_t classes = logits.shape()[1];
    need(labels.size() == batch, "cross_entropy", "one label per batch row required");
    for (std::size_t l : labels) need(l < classes, "cross_entropy", "label out of range");

    auto x = logits.data();
    // Row-wise softmax probabilities, kept for the backward pass.
    std::vector<double> probs(batch * classes);
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = x.data() + b * classes;
        double m = row[0];
        for (std::size_t k = 1; k < classes; ++k) m = std::max(m, row[k]);
        double z = 0.0;
        for (std::size_t k = 0; k < classes; ++k) z += std::exp(row[k] - m);
        const double log_z = m + std::log(z);
        for (std::size_t k = 0; k < classes; ++k) probs[b * classes + k] = std::exp(row[k] - log_z);
        loss += log_z - row[labels[b]];
    }
    Tensor out = make_tensor_like({1});
    out.data_mut()[0] = loss / static_cast<double>(batch);
    validate_finite(out.data(), "cross_entropy");

    if (should_record({&logits})) {
        record_entry("cross_entropy", out, {logits.impl()},
                     [res = out.impl(), in = logits.impl(), probs = std::move(probs), labels,
                      batch, classes] {
                         if (!wants_grad(in)) return;
                         const double g = res->grad->values()[0] / static_cast<double>(batch);
                         auto gi = grad_span(in);
                         for (std::size_t b = 0; b < batch; ++b) {
                             for (std::size_t k = 0; k < classes; ++k) {
                                 const double onehot = (k == labels[b]) ? 1.0 : 0.0;
                                 gi[b * classes + k] += g * (probs[b * classes + k] - onehot);
                             }
                         }
                     });
    }
    return out;
}

Tensor softmax_last(const Tensor& a) {
    need(a.ndim() >= 1, "softmax_last", "needs at least one axis");
    const std::size_t width = a.shape().back();
    const std::size_t rows = a.numel() / width;
    Tensor out = make_tensor_like(a.shape());
    auto src = a.data();
    auto dst = out.data_mut();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = src.data() + r * width;
        double* orow = dst.data() + r * width;
        double m = row[0];
        for (std::size_t k = 1; k < width; ++k) m = std::max(m, row[k]);
        double z = 0.0;
        for (std::size_t k = 0; k < width; ++k) {
            orow[k] = std::exp(row[k] - m);
            z += orow[k];
        }
        const double inv = 1.0 / z;
        for (std::size_t k = 0; k < width; ++k) orow[k] *= inv;
    }
    if (should_record({&a})) {
        record_entry("softmax_last", out, {a.impl()},
                     [res = out.impl(), in = a.impl(), rows, width] {
                         if (!wants_grad(in)) return;
                         auto g = grad_span(res);
                         auto gi = grad_span(in);
                         const auto& y = res->data->values();
                         for (std::size_t r = 0; r < rows; ++r) {
                             const double* yr = y.data() + r * width;
                             const double* gr = g.data() + r * width;
                             double dot = 0.0;
                             for (std::size_t k = 0; k < width; ++k) dot += gr[k] * yr[k];
                             double* gir = gi.data() + r * width;
                             for (std::size_t k = 0; k < width; ++k)
                                 gir[k] += yr[k] * (gr[k] - dot);
                         }
                     });
    }
    return out;
}

// ---- structure ---------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape new_shape) {
    need(shape_numel(new_shape) == a.numel(), "reshape", "element count must be preserved");
    Tensor out = make_tensor_like(new_shape);
    auto src = a.data();
    auto dst = out.data_mut();
    std::copy(src.begin(), src.end(), dst.begin());
    if (should_record({&a})) {
        record_entry("reshape", out, {a.impl()}, [res = out.impl(), in = a.impl()] {
            if (!wants_grad(in)) return;
            auto g = grad_span(res);
            auto gi = grad_span(in);
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        });
    }
    return out;
}

Tensor slice_last(const Tensor& a, std::size_t begin, std::size_t end) {
    need(a.ndim() >= 1, "slice_last", "needs at least one axis");
    const std::size_t width = a.shape().back();
    need(begin < end && end <= width, "slice_last", "slice bounds out of range");
    const std::size_t rows = a.numel() / width;
    const std::size_t out_w = end - begin;
    Shape out_shape = a.shape();
    out_shape.back() = out_w;
    Tensor out = make_tensor_like(out_shape);
    auto src = a.data();
    auto dst = out.data_mut();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = src.data() + r * width + begin;
        std::copy(row, row + out_w, dst.data() + r * out_w);
    }
    if (should_record({&a})) {
        record_entry("slice_last", out, {a.impl()},
                     [res = out.impl(), in = a.impl(), rows, width, begin, out_w] {
                         if (!wants_grad(in)) return;
                         auto g = grad_span(res);
                         auto gi = grad_span(in);
                         for (std::size_t r = 0; r < rows; ++r) {
                             const double* gr = g.data() + r * out_w;
                             double* gir = gi.data() + r * width + begin;
                             for (std::size_t k = 0; k < out_w; ++k) gir[k] += gr[k];
                         }
                     });
    }
    return out;
}

Tensor concat_last(const std::vector<Tensor>& parts) {
    need(!parts.empty(), "concat_last", "nothing to concatenate");
    Shape lead = parts[0].shape();
    need(!lead.empty(), "concat_last", "parts need at least one axis");
    lead.pop_back();
    std::size_t total_w = 0;
    std::vector<std::size_t> widths;
    widths.reserve(parts.size());
    for (const Tensor& p : parts) {
        Shape pl = p.shape();
        need(!pl.empty(), "concat_last", "parts need at least one axis");
        const std::size_t w = pl.back();
        pl.pop_back();
        need(pl == lead, "concat_last", "leading axes must match across parts");
        widths.push_back(w);
        total_w += w;
    }
    Shape out_shape = lead;
    out_shape.push_back(total_w);
    const std::size_t rows = shape_numel(lead.empty() ? Shape{1} : lead);
    Tensor out = make_tensor_like(out_shape);
    auto dst = out.data_mut();
    std::size_t col = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        auto src = parts[p].data();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy(src.data() + r * widths[p], src.data() + (r + 1) * widths[p],
                      dst.data() + r * total_w + col);
        }
        col += widths[p];
    }

    bool any_grad = false;
    std::vector<const Tensor*> ptrs;
    for (const Tensor& p : parts) {
        if (p.requires_grad()) any_grad = true;
        ptrs.push_back(&p);
    }
    if (GradTape::active() && any_grad) {
        std::vector<std::shared_ptr<TensorImpl>> inputs;
        inputs.reserve(parts.size());
        for (const Tensor& p : parts) inputs.push_back(p.impl());
        record_entry("concat_last", out, inputs,
                     [res = out.impl(), inputs, widths, rows, total_w] {
                         auto g = grad_span(res);
                         std::size_t col = 0;
                         for (std::size_t p = 0; p < inputs.size(); ++p) {
                             const std::size_t w = widths[p];
                             if (wants_grad(inputs[p])) {
                                 auto gi = grad_span(inputs[p]);
                                 for (std::size_t r = 0; r < rows; ++r) {
                                     const double* gr = g.data() + r * total_w + col;
                                     double* gir = gi.data() + r * w;
                                     for (std::size_t k = 0; k < w; ++k) gir[k] += gr[k];
                                 }
                             }
                             col += w;
                         }
                     });
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    need(a.ndim() == 2, "transpose", "2-D tensors only");
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    Tensor out = make_tensor_like({n, m});
    auto src = a.data();
    auto dst = out.data_mut();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
    if (should_record({&a})) {
        record_entry("transpose", out, {a.impl()}, [res = out.impl(), in = a.impl(), m, n] {
            if (!wants_grad(in)) return;
            auto g = grad_span(res);
            auto gi = grad_span(in);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gi[i * n + j] += g[j * m + i];
        });
    }
    return out;
}

Tensor permute_tokens(const Tensor& a, const std::vector<std::size_t>& perm) {
    const Shape s = token_shape_check("permute_tokens", a);
    const std::size_t batch = s[0], tokens = s[1], channels = s[2];
    need(perm.size() == tokens, "permute_tokens", "permutation length must equal token count");
    for (std::size_t t : perm) need(t < tokens, "permute_tokens", "permutation index out of range");
    Tensor out = make_tensor_like(s);
    auto src = a.data();
    auto dst = out.data_mut();
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t base = b * tokens * channels;
        for (std::size_t t = 0; t < tokens; ++t) {
            const double* row = src.data() + base + perm[t] * channels;
            std::copy(row, row + channels, dst.data() + base + t * channels);
        }
    }
    if (should_record({&a})) {
        record_entry("permute_tokens", out, {a.impl()},
                     [res = out.impl(), in = a.impl(), perm, batch, tokens, channels] {
                         if (!wants_grad(in)) return;
                         auto g = grad_span(res);
                         auto gi = grad_span(in);
                         for (std::size_t b = 0; b < batch; ++b) {
                             const std::size_t base = b * tokens * channels;
                             for (std::size_t t = 0; t < tokens; ++t) {
                                 const double* gr = g.data() + base + t * channels;
                                 double* gir = gi.data() + base + perm[t] * channels;
                                 for (std::size_t c = 0; c < channels; ++c) gir[c] += gr[c];
                             }
                         }
                     });
    }
    return out;
}

Tensor heads_front(const Tensor& a, std::size_t heads) {
    const Shape s = token_shape_check("heads_front", a);
    const std::size_t batch = s[0], tokens = s[1], width = s[2];
    need(heads > 0 && width % heads == 0, "heads_front", "channel width must divide by heads");
    const std::size_t dim = width / heads;
    Tensor out = make_tensor_like({batch * heads, tokens, dim});
    auto src = a.data();
    auto dst = out.data_mut();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < tokens; ++t)
            for (std::size_t h = 0; h < heads; ++h) {
                const double* from = src.data() + (b * tokens + t) * width + h * dim;
                double* to = dst.data() + ((b * heads + h) * tokens + t) * dim;
                std::copy(from, from + dim, to);
            }
    if (should_record({&a})) {
        record_entry("heads_front", out, {a.impl()},
                     [res = out.impl(), in = a.impl(), batch, tokens, width, heads, dim] {
                         if (!wants_grad(in)) return;
                         auto g = grad_span(res);
                         auto gi = grad_span(in);
                         for (std::size_t b = 0; b < batch; ++b)
                             for (std::size_t t = 0; t < tokens; ++t)
                                 for (std::size_t h = 0; h < heads; ++h) {
                                     const double* gr =
                                         g.data() + ((b * heads + h) * tokens + t) * dim;
                                     double* gir = gi.data() + (b * tokens + t) * width + h * dim;
                                     for (std::size_t d = 0; d < dim; ++d) gir[d] += gr[d];
                                 }
                     });
    }
    return out;
}

Tensor heads_back(const Tensor& a, std::size_t heads) {
    const Shape s = token_shape_check("heads_back", a);
    const std::size_t grouped = s[0], tokens = s[1], dim = s[2];
    need(heads > 0 && grouped % heads == 0, "heads_back", "grouped batch must divide by heads");
    const std::size_t batch = grouped / heads;
    const std::size_t width = heads * dim;
    Tensor out = make_tensor_like({batch, tokens, width});
    auto src = a.data();
    auto dst = out.data_mut();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < tokens; ++t)
            for (std::size_t h = 0; h < heads; ++h) {
                const double* from = src.data() + ((b * heads + h) * tokens + t) * dim;
                double* to = dst.data() + (b * tokens + t) * width + h * dim;
                std::copy(from, from + dim, to);
            }
    if (should_record({&a})) {
        record_entry("heads_back", out, {a.impl()},
                     [res = out.impl(), in = a.impl(), batch, tokens, width, heads, dim] {
                         if (!wants_grad(in)) return;
                         auto g = grad_span(res);
                         auto gi = grad_span(in);
                         for (std::size_t b = 0; b < batch; ++b)
                             for (std::size_t t = 0; t < tokens; ++t)
                                 for (std::size_t h = 0; h < heads; ++h) {
                                     const double* gr =
                                         g.data() + (b * tokens + t) * width + h * dim;
                                     double* gir =
                                         gi.data() + ((b * heads + h) * tokens + t) * dim;
                                     for (std::size_t d = 0; d < dim; ++d) gir[d] += gr[d];
                                 }
                     });
    }
    return out;
}

Tensor mean_tokens(const Tensor& a) {
    const Shape s = token_shape_check("mean_tokens", a);
    const std::size_t batch = s[0], tokens = s[1], channels = s[2];
    Tensor out = make_tensor_like({batch, channels});
    auto src = a.data();
    auto dst = out.data_mut();
    const double inv = 1.0 / static_cast<double>(tokens);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < tokens; ++t)
            for (std::size_t c = 0; c < channels; ++c)
                dst[b * channels + c] += src[(b * tokens + t) * channels + c] * inv;
    if (should_record({&a})) {
        record_entry("mean_tokens", out, {a.impl()},
                     [res = out.impl(), in = a.impl(), batch, tokens, channels, inv] {
                         if (!wants_grad(in)) return;
                         auto g = grad_span(res);
                         auto gi = grad_span(in);
                         for (std::size_t b = 0; b < batch; ++b)
                             for (std::size_t t = 0; t < tokens; ++t)
                                 for (std::size_t c = 0; c < channels; ++c)
                                     gi[(b * tokens + t) * channels + c] +=
                                         g[b * channels + c] * inv;
                     });
    }
    return out;
}

Tensor select_token(const Tensor& a, std::size_t index) {
    const Shape s = token_shape_check("select_token", a);
    const std::size_t batch = s[0], tokens = s[1], channels = s[2];
    need(index < tokens, "select_token", "token index out of range");
    Tensor out = make_tensor_like({batch, channels});
    auto src = a.data();
    auto dst = out.data_mut();
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = src.data() + (b * tokens + index) * channels;
        std::copy(row, row + channels, dst.data() + b * channels);
    }
    if (should_record({&a})) {
        record_entry("select_token", out, {a.impl()},
                     [res = out.impl(), in = a.impl(), index, batch, tokens, channels] {
                         if (!wants_grad(in)) return;
                         auto g = grad_span(res);
                         auto gi = grad_span(in);
                         for (std::size_t b = 0; b < batch; ++b) {
                             const double* gr = g.data() + b * channels;
                             double* gir = gi.data() + (b * tokens + index) * channels;
                             for (std::size_t c = 0; c < channels; ++c) gir[c] += gr[c];
                         }
                     });
    }
    return out;
}

Tensor prepend_token(const Tensor& a, const Tensor& token) {
    const Shape s = token_shape_check("prepend_token", a);
    const std::size_t batch = s[0], tokens = s[1], channels = s[2];
    need(token.shape() == Shape{channels}, "prepend_token", "token must be a (channels) vector");
    Tensor out = make_tensor_like({batch, tokens + 1, channels});
    auto src = a.data();
    auto tok = token.data();
    auto dst = out.data_mut();
    for (std::size_t b = 0; b < batch; ++b) {
        double* obase = dst.data() + b * (tokens + 1) * channels;
        std::copy(tok.begin(), tok.end(), obase);
        std::copy(src.data() + b * tokens * channels, src.data() + (b + 1) * tokens * channels,
                  obase + channels);
    }
    if (should_record({&a, &token})) {
        record_entry("prepend_token", out, {a.impl(), token.impl()},
                     [res = out.impl(), in = a.impl(), tk = token.impl(), batch, tokens,
                      channels] {
                         auto g = grad_span(res);
                         for (std::size_t b = 0; b < batch; ++b) {
                             const double* gbase = g.data() + b * (tokens + 1) * channels;
                             if (wants_grad(tk)) {
                                 auto gt = grad_span(tk);
                                 for (std::size_t c = 0; c < channels; ++c) gt[c] += gbase[c];
                             }
                             if (wants_grad(in)) {
                                 auto gi = grad_span(in);
                                 double* gir = gi.data() + b * tokens * channels;
                                 for (std::size_t i = 0; i < tokens * channels; ++i)
                                     gir[i] += gbase[channels + i];
                             }
                         }
                     });
    }
    return out;
}

Tensor add_position(const Tensor& a, const Tensor& table) {
    const Shape s = token_shape_check("add_position", a);
    const std::size_t batch = s[0], tokens = s[1], channels = s[2];
    need(table.shape() == Shape{tokens, channels}, "add_position",
         "table must be (tokens, channels)");
    Tensor out = make_tensor_like(s);
    auto src = a.data();
    auto tab = table.data();
    auto dst = out.data_mut();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < tokens * channels; ++i)
            dst[b * tokens * channels + i] = src[b * tokens * channels + i] + tab[i];
    if (should_record({&a, &table})) {
        record_entry("add_position", out, {a.impl(), table.impl()},
                     [res = out.impl(), in = a.impl(), tb = table.impl(), batch, tokens,
                      channels] {
                         auto g = grad_span(res);
                         const std::size_t plane = tokens * channels;
                         if (wants_grad(in)) {
                             auto gi = grad_span(in);
                             for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
                         }
                         if (wants_grad(tb)) {
                             auto gt = grad_span(tb);
                             for (std::size_t b = 0; b < batch; ++b)
                                 for (std::size_t i = 0; i < plane; ++i)
                                     gt[i] += g[b * plane + i];
                         }
                     });
    }
    return out;
}

Tensor scale_channels(const Tensor& a, const Tensor& s) {
    const Shape sh = token_shape_check("scale_channels", a);
    const std::size_t batch = sh[0], tokens = sh[1], channels = sh[2];
    need(s.shape() == Shape{channels}, "scale_channels", "scale must be a (channels) vector");
    Tensor out = make_tensor_like(sh);
    auto src = a.data();
    auto sv = s.data();
    auto dst = out.data_mut();
    for (std::size_t r = 0; r < batch * tokens; ++r)
        for (std::size_t c = 0; c < channels; ++c)
            dst[r * channels + c] = src[r * channels + c] * sv[c];
    if (should_record({&a, &s})) {
        record_entry("scale_channels", out, {a.impl(), s.impl()},
                     [res = out.impl(), in = a.impl(), sc = s.impl(), rows = batch * tokens,
                      channels] {
                         auto g = grad_span(res);
                         const auto& x = in->data->values();
                         const auto& sval = sc->data->values();
                         if (wants_grad(in)) {
                             auto gi = grad_span(in);
                             for (std::size_t r = 0; r < rows; ++r)
                                 for (std::size_t c = 0; c < channels; ++c)
                                     gi[r * channels + c] += g[r * channels + c] * sval[c];
                         }
                         if (wants_grad(sc)) {
                             auto gs = grad_span(sc);
                             for (std::size_t r = 0; r < rows; ++r)
                                 for (std::size_t c = 0; c < channels; ++c)
                                     gs[c] += g[r * channels + c] * x[r * channels + c];
                         }
                     });
    }
    return out;
}

// ---- linear algebra ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    need(a.ndim() == 2 && b.ndim() == 2, "matmul", "2-D tensors only");
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    need(b.shape()[0] == k, "matmul", "inner axes must match");
    const std::size_t n = b.shape()[1];
    Tensor out = make_tensor_like({m, n});
    mm_nn(a.data(), b.data(), m, k, n, out.data_mut(), false);
    if (should_record({&a, &b})) {
        record_entry("matmul", out, {a.impl(), b.impl()},
                     [res = out.impl(), ia = a.impl(), ib = b.impl(), m, k, n] {
                         auto g = grad_span(res);
                         const auto& xa = ia->data->values();
                         const auto& xb = ib->data->values();
                         if (wants_grad(ia)) mm_nt(g, xb, m, n, k, grad_span(ia), true);
                         if (wants_grad(ib)) mm_tn(xa, g, m, k, n, grad_span(ib), true);
                     });
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    need(x.ndim() >= 1, "linear", "input needs at least one axis");
    need(weight.ndim() == 2, "linear", "weight must be (out, in)");
    const std::size_t in_w = x.shape().back();
    need(weight.shape()[1] == in_w, "linear", "weight input width must match input's last axis");
    const std::size_t out_w = weight.shape()[0];
    const std::size_t rows = x.numel() / in_w;
    const bool with_bias = bias.defined();
    if (with_bias) need(bias.shape() == Shape{out_w}, "linear", "bias must be (out)");

    Shape out_shape = x.shape();
    out_shape.back() = out_w;
    Tensor out = make_tensor_like(out_shape);
    mm_nt(x.data(), weight.data(), rows, in_w, out_w, out.data_mut(), false);
    if (with_bias) {
        auto dst = out.data_mut();
        auto bv = bias.data();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < out_w; ++j) dst[r * out_w + j] += bv[j];
    }

    const bool rec = with_bias ? should_record({&x, &weight, &bias})
                               : should_record({&x, &weight});
    if (rec) {
        std::vector<std::shared_ptr<TensorImpl>> inputs{x.impl(), weight.impl()};
        if (with_bias) inputs.push_back(bias.impl());
        record_entry("linear", out, inputs,
                     [res = out.impl(), ix = x.impl(), iw = weight.impl(),
                      ibias = with_bias ? bias.impl() : nullptr, rows, in_w, out_w] {
                         auto g = grad_span(res);
                         const auto& xv = ix->data->values();
                         const auto& wv = iw->data->values();
                         if (wants_grad(ix)) mm_nn(g, wv, rows, out_w, in_w, grad_span(ix), true);
                         if (wants_grad(iw)) mm_tn(g, xv, rows, out_w, in_w, grad_span(iw), true);
                         if (ibias && wants_grad(ibias)) {
                             auto gb = grad_span(ibias);
                             for (std::size_t r = 0; r < rows; ++r)
                                 for (std::size_t j = 0; j < out_w; ++j)
                                     gb[j] += g[r * out_w + j];
                         }
                     });
    }
    return out;
}

Tensor bmm_nt(const Tensor& a, const Tensor& b, double alpha) {
    need(a.ndim() == 3 && b.ndim() == 3, "bmm_nt", "3-D tensors only");
    const std::size_t groups = a.shape()[0], t = a.shape()[1], d = a.shape()[2];
    need(b.shape()[0] == groups && b.shape()[2] == d, "bmm_nt",
         "batch and inner axes must match");
    const std::size_t s = b.shape()[1];
    Tensor out = make_tensor_like({groups, t, s});
    auto pa = a.data();
    auto pb = b.data();
    auto dst = out.data_mut();
    for (std::size_t gidx = 0; gidx < groups; ++gidx) {
        mm_nt(pa.subspan(gidx * t * d, t * d), pb.subspan(gidx * s * d, s * d), t, d, s,
              dst.subspan(gidx * t * s, t * s), false);
    }
    if (alpha != 1.0)
        for (double& v : dst) v *= alpha;
    if (should_record({&a, &b})) {
        record_entry("bmm_nt", out, {a.impl(), b.impl()},
                     [res = out.impl(), ia = a.impl(), ib = b.impl(), groups, t, d, s, alpha] {
                         const auto& gv = res->grad->values();
                         const auto& xa = ia->data->values();
                         const auto& xb = ib->data->values();
                         std::vector<double> gscaled(gv);
                         if (alpha != 1.0)
                             for (double& v : gscaled) v *= alpha;
                         std::span<const double> g{gscaled.data(), gscaled.size()};
                         for (std::size_t gi = 0; gi < groups; ++gi) {
                             auto gblk = g.subspan(gi * t * s, t * s);
                             if (wants_grad(ia)) {
                                 mm_nn(gblk,
                                       std::span<const double>{xb}.subspan(gi * s * d, s * d), t,
                                       s, d, grad_span(ia).subspan(gi * t * d, t * d), true);
                             }
                             if (wants_grad(ib)) {
                                 mm_tn(gblk,
                                       std::span<const double>{xa}.subspan(gi * t * d, t * d), t,
                                       s, d, grad_span(ib).subspan(gi * s * d, s * d), true);
                             }
                         }
                     });
    }
    return out;
}

Tensor bmm_nn(const Tensor& a, const Tensor& b) {
    need(a.ndim() == 3 && b.ndim() == 3, "bmm_nn", "3-D tensors only");
    const std::size_t groups = a.shape()[0], t = a.shape()[1], s = a.shape()[2];
    need(b.shape()[0] == groups && b.shape()[1] == s, "bmm_nn",
         "batch and inner axes must match");
    const std::size_t d = b.shape()[2];
    Tensor out = make_tensor_like({groups, t, d});
    auto pa = a.data();
    auto pb = b.data();
    auto dst = out.data_mut();
    for (std::size_t gidx = 0; gidx < groups; ++gidx) {
        mm_nn(pa.subspan(gidx * t * s, t * s), pb.subspan(gidx * s * d, s * d), t, s, d,
              dst.subspan(gidx * t * d, t * d), false);
    }
    if (should_record({&a, &b})) {
        record_entry("bmm_nn", out, {a.impl(), b.impl()},
                     [res = out.impl(), ia = a.impl(), ib = b.impl(), groups, t, s, d] {
                         const auto& gv = res->grad->values();
                         const auto& xa = ia->data->values();
                         const auto& xb = ib->data->values();
                         std::span<const double> g{gv.data(), gv.size()};
                         for (std::size_t gi = 0; gi < groups; ++gi) {
                             auto gblk = g.subspan(gi * t * d, t * d);
                             if (wants_grad(ia)) {
                                 mm_nt(gblk,
                                       std::span<const double>{xb}.subspan(gi * s * d, s * d), t,
                                       d, s, grad_span(ia).subspan(gi * t * s, t * s), true);
                             }
                             if (wants_grad(ib)) {
                                 mm_tn(std::span<const double>{xa}.subspan(gi * t * s, t * s),
                                       gblk, t, s, d, grad_span(ib).subspan(gi * s * d, s * d),
                                       true);
                             }
                         }
                     });
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    need(x.ndim() >= 1, "layer_norm", "needs at least one axis");
    const std::size_t width = x.shape().back();
    need(gamma.shape() == Shape{width} && beta.shape() == Shape{width}, "layer_norm",
         "gain and shift must match the last axis");
    const std::size_t rows = x.numel() / width;
    Tensor out = make_tensor_like(x.shape());
    auto src = x.data();
    auto gn = gamma.data();
    auto bt = beta.data();
    auto dst = out.data_mut();

    // Per-row inverse stddev and normalized values, kept for backward.
    std::vector<double> inv_std(rows);
    std::vector<double> xhat(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = src.data() + r * width;
        double mu = 0.0;
        for (std::size_t c = 0; c < width; ++c) mu += row[c];
        mu /= static_cast<double>(width);
        double var = 0.0;
        for (std::size_t c = 0; c < width; ++c) {
            const double d = row[c] - mu;
            var += d * d;
        }
        var /= static_cast<double>(width);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (std::size_t c = 0; c < width; ++c) {
            const double h = (row[c] - mu) * is;
            xhat[r * width + c] = h;
            dst[r * width + c] = gn[c] * h + bt[c];
        }
    }
    if (should_record({&x, &gamma, &beta})) {
        record_entry("layer_norm", out, {x.impl(), gamma.impl(), beta.impl()},
                     [res = out.impl(), ix = x.impl(), ig = gamma.impl(), ib = beta.impl(),
                      inv_std = std::move(inv_std), xhat = std::move(xhat), rows, width] {
                         auto g = grad_span(res);
                         const auto& gn = ig->data->values();
                         for (std::size_t r = 0; r < rows; ++r) {
                             const double* gr = g.data() + r * width;
                             const double* hr = xhat.data() + r * width;
                             if (wants_grad(ig)) {
                                 auto gg = grad_span(ig);
                                 for (std::size_t c = 0; c < width; ++c)
                                     gg[c] += gr[c] * hr[c];
                             }
                             if (wants_grad(ib)) {
                                 auto gb = grad_span(ib);
                                 for (std::size_t c = 0; c < width; ++c) gb[c] += gr[c];
                             }
                             if (wants_grad(ix)) {
                                 double sum_gy = 0.0, sum_gyh = 0.0;
                                 for (std::size_t c = 0; c < width; ++c) {
                                     const double gy = gr[c] * gn[c];
                                     sum_gy += gy;
                                     sum_gyh += gy * hr[c];
                                 }
                                 const double inv_w = 1.0 / static_cast<double>(width);
                                 auto gx = grad_span(ix);
                                 double* gxr = gx.data() + r * width;
                                 for (std::size_t c = 0; c < width; ++c) {
                                     const double gy = gr[c] * gn[c];
                                     gxr[c] += inv_std[r] *
                                               (gy - inv_w * sum_gy - hr[c] * inv_w * sum_gyh);
                                 }
                             }
                         }
                     });
    }
    return out;
}

// ---- kernel construction --------------------------------------------------------

Tensor outer(const Tensor& a, const Tensor& b) {
    need(a.ndim() == 1 && b.ndim() == 1, "outer", "1-D tensors only");
    const std::size_t m = a.shape()[0], n = b.shape()[0];
    Tensor out = make_tensor_like({m, n});
    auto pa = a.data();
    auto pb = b.data();
    auto dst = out.data_mut();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dst[i * n + j] = pa[i] * pb[j];
    if (should_record({&a, &b})) {
        record_entry("outer", out, {a.impl(), b.impl()},
                     [res = out.impl(), ia = a.impl(), ib = b.impl(), m, n] {
                         auto g = grad_span(res);
                         const auto& xa = ia->data->values();
                         const auto& xb = ib->data->values();
                         if (wants_grad(ia)) {
                             auto ga = grad_span(ia);
                             for (std::size_t i = 0; i < m; ++i) {
                                 double acc = 0.0;
                                 for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * xb[j];
                                 ga[i] += acc;
                             }
                         }
                         if (wants_grad(ib)) {
                             auto gb = grad_span(ib);
                             for (std::size_t j = 0; j < n; ++j) {
                                 double acc = 0.0;
                                 for (std::size_t i = 0; i < m; ++i) acc += g[i * n + j] * xa[i];
                                 gb[j] += acc;
                             }
                         }
                     });
    }
    return out;
}

Tensor channel_outer(const Tensor& core, const Tensor& factors) {
    need(core.ndim() >= 2, "channel_outer", "core must be (channels, spatial...)");
    need(factors.ndim() == 2, "channel_outer", "factors must be (length, channels)");
    const std::size_t channels = core.shape()[0];
    need(factors.shape()[1] == channels, "channel_outer",
         "factor channel count must match core");
    const std::size_t len = factors.shape()[0];
    const std::size_t inner = core.numel() / channels;

    Shape out_shape = core.shape();
    out_shape.push_back(len);
    Tensor out = make_tensor_like(out_shape);
    auto pc = core.data();
    auto pf = factors.data();
    auto dst = out.data_mut();
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < inner; ++i) {
            const double cv = pc[c * inner + i];
            double* orow = dst.data() + (c * inner + i) * len;
            for (std::size_t l = 0; l < len; ++l) orow[l] = cv * pf[l * channels + c];
        }
    if (should_record({&core, &factors})) {
        record_entry("channel_outer", out, {core.impl(), factors.impl()},
                     [res = out.impl(), ic = core.impl(), iff = factors.impl(), channels, inner,
                      len] {
                         auto g = grad_span(res);
                         const auto& xc = ic->data->values();
                         const auto& xf = iff->data->values();
                         for (std::size_t c = 0; c < channels; ++c)
                             for (std::size_t i = 0; i < inner; ++i) {
                                 const double* gr = g.data() + (c * inner + i) * len;
                                 if (wants_grad(ic)) {
                                     double acc = 0.0;
                                     for (std::size_t l = 0; l < len; ++l)
                                         acc += gr[l] * xf[l * channels + c];
                                     grad_span(ic)[c * inner + i] += acc;
                                 }
                                 if (wants_grad(iff)) {
                                     auto gf = grad_span(iff);
                                     const double cv = xc[c * inner + i];
                                     for (std::size_t l = 0; l < len; ++l)
                                         gf[l * channels + c] += gr[l] * cv;
                                 }
                             }
                     });
    }
    return out;
}

Tensor l1_normalize(const Tensor& kernel, double eps) {
    need(kernel.ndim() >= 2, "l1_normalize", "kernel must be (channels, spatial...)");
    const std::size_t channels = kernel.shape()[0];
    const std::size_t inner = kernel.numel() / channels;
    Tensor out = make_tensor_like(kernel.shape());
    auto src = kernel.data();
    auto dst = out.data_mut();
    std::vector<double> norms(channels);
    for (std::size_t c = 0; c < channels; ++c) {
        double n = eps;
        for (std::size_t i = 0; i < inner; ++i) n += std::abs(src[c * inner + i]);
        norms[c] = n;
        const double inv = 1.0 / n;
        for (std::size_t i = 0; i < inner; ++i) dst[c * inner + i] = src[c * inner + i] * inv;
    }
    if (should_record({&kernel})) {
        record_entry("l1_normalize", out, {kernel.impl()},
                     [res = out.impl(), in = kernel.impl(), norms = std::move(norms), channels,
                      inner] {
                         if (!wants_grad(in)) return;
                         auto g = grad_span(res);
                         auto gi = grad_span(in);
                         const auto& x = in->data->values();
                         const auto& y = res->data->values();
                         for (std::size_t c = 0; c < channels; ++c) {
                             const double inv = 1.0 / norms[c];
                             double dot = 0.0;
                             for (std::size_t i = 0; i < inner; ++i)
                                 dot += g[c * inner + i] * y[c * inner + i];
                             for (std::size_t i = 0; i < inner; ++i) {
                                 const double sgn =
                                     x[c * inner + i] > 0.0 ? 1.0 : (x[c * inner + i] < 0.0 ? -1.0 : 0.0);
                                 gi[c * inner + i] +=
                                     inv * (g[c * inner + i] - dot * sgn);
                             }
                         }
                     });
    }
    return out;
}

// ---- convolution -----------------------------------------------------------------

namespace {

// Short taps may overhang a small grid (they read causal padding zeros);
// long kernels must fit the grid they were built for.
void conv_shapes_check(const char* op, const Tensor& u, const Tensor& h, const Shape& spatial,
                       bool kernel_must_fit = true) {
    need(u.ndim() == 3, op, "signal must be (batch, tokens, channels)");
    need(!spatial.empty(), op, "spatial shape must have at least one axis");
    need(shape_numel(spatial) == u.shape()[1], op,
         "token count must equal the product of the spatial axes");
    need(h.ndim() == spatial.size() + 1, op, "kernel must be (channels, spatial...)");
    need(h.shape()[0] == u.shape()[2], op, "kernel channel count must match the signal");
    if (kernel_must_fit)
        for (std::size_t k = 0; k < spatial.size(); ++k)
            need(h.shape()[k + 1] <= spatial[k], op, "kernel axis exceeds the spatial grid");
}

// Gathers u[b, :, c] into a contiguous spatial line.
void gather_line(std::span<const double> u, std::size_t b, std::size_t c, std::size_t tokens,
                 std::size_t channels, std::vector<double>& line) {
    line.resize(tokens);
    const double* base = u.data() + b * tokens * channels + c;
    for (std::size_t t = 0; t < tokens; ++t) line[t] = base[t * channels];
}

} // namespace

Tensor fft_conv(const Tensor& u, const Tensor& h, const Shape& spatial) {
    conv_shapes_check("fft_conv", u, h, spatial);
    const std::size_t batch = u.shape()[0], tokens = u.shape()[1], channels = u.shape()[2];
    Shape kshape(h.shape().begin() + 1, h.shape().end());
    const std::size_t ksize = shape_numel(kshape);

    Tensor out = make_tensor_like(u.shape());
    auto pu = u.data();
    auto ph = h.data();
    auto dst = out.data_mut();
    std::vector<double> line;
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < channels; ++c) {
            gather_line(pu, b, c, tokens, channels, line);
            auto y = detail::conv_causal_raw(spatial, line,
                                             kshape, ph.subspan(c * ksize, ksize));
            double* obase = dst.data() + b * tokens * channels + c;
            for (std::size_t t = 0; t < tokens; ++t) obase[t * channels] = y[t];
        }

    if (should_record({&u, &h})) {
        record_entry(
            "fft_conv", out, {u.impl(), h.impl()},
            [res = out.impl(), iu = u.impl(), ih = h.impl(), spatial, kshape, batch, tokens,
             channels, ksize] {
                const auto& gv = res->grad->values();
                const auto& uv = iu->data->values();
                const auto& hv = ih->data->values();
                std::span<const double> g{gv.data(), gv.size()};
                std::span<const double> us{uv.data(), uv.size()};
                std::span<const double> hs{hv.data(), hv.size()};

                std::vector<std::size_t> kstrides(kshape.size(), 1);
                for (std::size_t k = kshape.size(); k-- > 1;)
                    kstrides[k - 1] = kstrides[k] * kshape[k];
                std::vector<std::size_t> sstrides(spatial.size(), 1);
                for (std::size_t k = spatial.size(); k-- > 1;)
                    sstrides[k - 1] = sstrides[k] * spatial[k];

                std::vector<double> gline, uline;
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t c = 0; c < channels; ++c) {
                        gather_line(g, b, c, tokens, channels, gline);
                        auto gflip = detail::flip_all_axes_raw(spatial, gline);
                        if (wants_grad(iu)) {
                            // d/du of causal conv is correlation with the kernel:
                            // flip(conv(flip(g), h)).
                            auto t1 = detail::conv_causal_raw(spatial, gflip, kshape,
                                                              hs.subspan(c * ksize, ksize));
                            auto gu = detail::flip_all_axes_raw(spatial, t1);
                            auto giu = grad_span(iu);
                            double* base = giu.data() + b * tokens * channels + c;
                            for (std::size_t t = 0; t < tokens; ++t) base[t * channels] += gu[t];
                        }
                        if (wants_grad(ih)) {
                            gather_line(us, b, c, tokens, channels, uline);
                            auto t2 = detail::conv_causal_raw(spatial, gflip, spatial, uline);
                            auto gh_full = detail::flip_all_axes_raw(spatial, t2);
                            // Truncate the full-grid gradient to the kernel support.
                            auto gih = grad_span(ih);
                            std::vector<std::size_t> idx(kshape.size(), 0);
                            for (std::size_t kf = 0; kf < ksize; ++kf) {
                                std::size_t soff = 0;
                                for (std::size_t k = 0; k < kshape.size(); ++k)
                                    soff += idx[k] * sstrides[k];
                                gih[c * ksize + kf] += gh_full[soff];
                                for (std::size_t k = kshape.size(); k-- > 0;) {
                                    if (++idx[k] < kshape[k]) break;
                                    idx[k] = 0;
                                }
                            }
                        }
                    }
            });
    }
    return out;
}

Tensor short_conv(const Tensor& u, const Tensor& w, const Shape& spatial) {
    conv_shapes_check("short_conv", u, w, spatial, /*kernel_must_fit=*/false);
    const std::size_t batch = u.shape()[0], tokens = u.shape()[1], channels = u.shape()[2];
    Shape kshape(w.shape().begin() + 1, w.shape().end());
    const std::size_t ksize = shape_numel(kshape);
    const std::size_t ndim = spatial.size();

    std::vector<std::size_t> sstrides(ndim, 1);
    for (std::size_t k = ndim; k-- > 1;) sstrides[k - 1] = sstrides[k] * spatial[k];

    // Flat token offset and N-D coords per kernel tap.
    std::vector<std::size_t> tap_offset(ksize, 0);
    std::vector<std::vector<std::size_t>> tap_coord(ksize, std::vector<std::size_t>(ndim, 0));
    {
        std::vector<std::size_t> idx(ndim, 0);
        for (std::size_t kf = 0; kf < ksize; ++kf) {
            std::size_t off = 0;
            for (std::size_t k = 0; k < ndim; ++k) off += idx[k] * sstrides[k];
            tap_offset[kf] = off;
            tap_coord[kf] = idx;
            for (std::size_t k = ndim; k-- > 0;) {
                if (++idx[k] < kshape[k]) break;
                idx[k] = 0;
            }
        }
    }

    Tensor out = make_tensor_like(u.shape());
    auto pu = u.data();
    auto pw = w.data();
    auto dst = out.data_mut();

    std::vector<std::size_t> coord(ndim, 0);
    for (std::size_t b = 0; b < batch; ++b) {
        std::fill(coord.begin(), coord.end(), 0);
        for (std::size_t t = 0; t < tokens; ++t) {
            for (std::size_t kf = 0; kf < ksize; ++kf) {
                bool inside = true;
                for (std::size_t k = 0; k < ndim; ++k) {
                    if (tap_coord[kf][k] > coord[k]) {
                        inside = false;
                        break;
                    }
                }
                if (!inside) continue;
                const std::size_t tsrc = t - tap_offset[kf];
                const double* urow = pu.data() + (b * tokens + tsrc) * channels;
                double* orow = dst.data() + (b * tokens + t) * channels;
                for (std::size_t c = 0; c < channels; ++c)
                    orow[c] += pw[c * ksize + kf] * urow[c];
            }
            for (std::size_t k = ndim; k-- > 0;) {
                if (++coord[k] < spatial[k]) break;
                coord[k] = 0;
            }
        }
    }

    if (should_record({&u, &w})) {
        record_entry(
            "short_conv", out, {u.impl(), w.impl()},
            [res = out.impl(), iu = u.impl(), iw = w.impl(), spatial, tap_offset, tap_coord,
             batch, tokens, channels, ksize, ndim] {
                const auto& gv = res->grad->values();
                const auto& uv = iu->data->values();
                const auto& wv = iw->data->values();
                std::vector<std::size_t> coord(ndim, 0);
                for (std::size_t b = 0; b < batch; ++b) {
                    std::fill(coord.begin(), coord.end(), 0);
                    for (std::size_t t = 0; t < tokens; ++t) {
                        const double* grow = gv.data() + (b * tokens + t) * channels;
                        for (std::size_t kf = 0; kf < ksize; ++kf) {
                            bool inside = true;
                            for (std::size_t k = 0; k < ndim; ++k) {
                                if (tap_coord[kf][k] > coord[k]) {
                                    inside = false;
                                    break;
                                }
                            }
                            if (!inside) continue;
                            const std::size_t tsrc = t - tap_offset[kf];
                            if (wants_grad(iu)) {
                                auto gu = grad_span(iu);
                                double* gur = gu.data() + (b * tokens + tsrc) * channels;
                                for (std::size_t c = 0; c < channels; ++c)
                                    gur[c] += wv[c * ksize + kf] * grow[c];
                            }
                            if (wants_grad(iw)) {
                                auto gw = grad_span(iw);
                                const double* urow = uv.data() + (b * tokens + tsrc) * channels;
                                for (std::size_t c = 0; c < channels; ++c)
                                    gw[c * ksize + kf] += grow[c] * urow[c];
                            }
                        }
                        for (std::size_t k = ndim; k-- > 0;) {
                            if (++coord[k] < spatial[k]) break;
                            coord[k] = 0;
                        }
                    }
                }
            });
    }
    return out;
}

} // namespace hynd::ops
