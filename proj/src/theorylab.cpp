#include "hynd/theorylab.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "hynd/numcore.hpp"
#include "hynd/tape.hpp"

namespace hynd {

namespace {

[[noreturn]] void fail(const std::string& why) {
    throw std::invalid_argument("theorylab: " + why);
}

void need(bool ok, const char* why) {
    if (!ok) fail(why);
}

std::size_t pow_size(std::size_t base, std::size_t exp) {
    std::size_t out = 1;
    for (std::size_t i = 0; i < exp; ++i) out *= base;
    return out;
}

// All integer coordinates of [0, r)^n as rows, last axis fastest.
Tensor coordinate_rows(std::size_t n, std::size_t r) {
    const std::size_t total = pow_size(r, n);
    std::vector<double> rows(total * n);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rem = flat;
        for (std::size_t axis = n; axis-- > 0;) {
            rows[flat * n + axis] = static_cast<double>(rem % r);
            rem /= r;
        }
    }
    return Tensor::from_data({total, n}, std::move(rows));
}

} // namespace

ThresholdNetwork build_identity_network(std::size_t n, std::size_t r) {
    need(n >= 2, "need n >= 2");
    need(r >= 2, "need r >= 2");
    const std::size_t hidden = 2 * n * r;

    ThresholdNetwork net;
    net.n = n;
    net.r = r;
    net.delta = -2.0 * static_cast<double>(n) + 0.5;

    // Stage 1: unit pair (>= j, <= j) for each axis and value. On integer
    // inputs the half-sample bias shift makes > behave as >=.
    std::vector<double> w1(hidden * n, 0.0);
    std::vector<double> b1(hidden, 0.0);
    for (std::size_t axis = 0; axis < n; ++axis)
        for (std::size_t j = 0; j < r; ++j) {
            const std::size_t ge = 2 * (axis * r + j);
            const std::size_t le = ge + 1;
            w1[ge * n + axis] = 1.0;
            b1[ge] = -static_cast<double>(j) + 0.5;
            w1[le * n + axis] = -1.0;
            b1[le] = static_cast<double>(j) + 0.5;
        }
    net.w1 = Tensor::from_data({hidden, n}, std::move(w1));
    net.b1 = Tensor::from_data({hidden}, std::move(b1));

    // Stage 2: value j fires iff all 2n of its detectors fire.
    std::vector<double> w2(r * hidden, 0.0);
    for (std::size_t j = 0; j < r; ++j)
        for (std::size_t axis = 0; axis < n; ++axis) {
            w2[j * hidden + 2 * (axis * r + j)] = 1.0;
            w2[j * hidden + 2 * (axis * r + j) + 1] = 1.0;
        }
    net.w2 = Tensor::from_data({r, hidden}, std::move(w2));
    net.b2 = Tensor::from_data({r}, std::vector<double>(r, net.delta));

    // Stage 3: OR over the r conjunctions.
    net.w3 = Tensor::from_data({1, r}, std::vector<double>(r, 1.0));
    net.b3 = Tensor::from_data({1}, {-0.5});
    return net;
}

ThresholdNetwork truncate_to_rank(const ThresholdNetwork& net, std::size_t r_prime) {
    need(r_prime >= 2 && r_prime <= net.r, "r_prime must lie in [2, r]");
    ThresholdNetwork out = net;
    std::vector<double> w3(net.r, 0.0);
    std::fill(w3.begin(), w3.begin() + static_cast<std::ptrdiff_t>(r_prime), 1.0);
    out.w3 = Tensor::from_data({1, net.r}, std::move(w3));
    return out;
}

FilterNetwork as_filter_network(const ThresholdNetwork& net) {
    FilterNetwork fn;
    fn.weights = {net.w1, net.w2, net.w3};
    fn.biases = {net.b1, net.b2, net.b3};
    fn.activation = FilterActivation::sign;
    return fn;
}

Tensor evaluate_network_tensor(const ThresholdNetwork& net, std::size_t n, std::size_t r) {
    need(n == net.n, "arity mismatch with the network");
    need(r >= 1, "need r >= 1");
    NoTapeScope quiet;
    Tensor values = filter_network_forward(as_filter_network(net), coordinate_rows(n, r));
    Shape cube(n, r);
    return Tensor::from_data(std::move(cube),
                             std::vector<double>(values.data().begin(), values.data().end()));
}

std::size_t KernelRankReport::lower_bound() const {
    if (exact_rank_2d) return *exact_rank_2d;
    std::size_t best = 0;
    for (std::size_t rank : unfolding_lower_bounds) best = std::max(best, rank);
    return best;
}

KernelRankReport kernel_rank_report(const Tensor& kernel, double rel_tol) {
    need(kernel.ndim() >= 2, "kernel needs at least 2 axes");
    const Shape& shape = kernel.shape();
    const std::size_t total = kernel.numel();
    auto data = kernel.data();

    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t k = shape.size(); k-- > 1;) strides[k - 1] = strides[k] * shape[k];

    KernelRankReport report;
    for (std::size_t axis = 0; axis < shape.size(); ++axis) {
        const std::size_t rows = shape[axis];
        const std::size_t cols = total / rows;
        std::vector<double> flat(total);
        for (std::size_t f = 0; f < total; ++f) {
            const std::size_t i = (f / strides[axis]) % rows;
            // Remaining axes keep their relative order in the column index.
            const std::size_t outer = f / (strides[axis] * rows);
            const std::size_t inner = f % strides[axis];
            const std::size_t col = outer * strides[axis] + inner;
            flat[i * cols + col] = data[f];
        }
        report.unfolding_lower_bounds.push_back(
            matrix_rank(Tensor::from_data({rows, cols}, std::move(flat)), rel_tol));
    }
    if (shape.size() == 2)
        report.exact_rank_2d = matrix_rank(
            Tensor::from_data({shape[0], shape[1]},
                              std::vector<double>(data.begin(), data.end())),
            rel_tol);
    return report;
}

std::string TheoryReport::text() const {
    std::string out;
    char line[160];
    for (const TheoryCase& c : cases) {
        std::snprintf(line, sizeof line, "%s  N=%zu r=%zu r'=%zu  %s\n",
                      c.pass ? "PASS" : "FAIL", c.n, c.r, c.r_prime, c.detail.c_str());
        out += line;
    }
    return out;
}

TheoryReport verify_identity_theorems() {
    TheoryReport report;
    auto run = [&report](std::size_t n, std::size_t r_max) {
        for (std::size_t r = 2; r <= r_max; ++r) {
            ThresholdNetwork net = build_identity_network(n, r);
            for (std::size_t r_prime = 2; r_prime <= r; ++r_prime) {
                ThresholdNetwork cut =
                    r_prime == r ? net : truncate_to_rank(net, r_prime);
                Tensor cube = evaluate_network_tensor(cut, n, r);

                TheoryCase c;
                c.n = n;
                c.r = r;
                c.r_prime = r_prime;
                c.pass = true;

                // Exact {0,1} match against the truncated diagonal pattern.
                const std::size_t total = cube.numel();
                for (std::size_t flat = 0; flat < total && c.pass; ++flat) {
                    std::size_t rem = flat;
                    std::size_t first = rem % r;
                    bool diagonal = true;
                    for (std::size_t axis = 0; axis < n; ++axis) {
                        if (rem % r != first) diagonal = false;
                        rem /= r;
                    }
                    const double want = (diagonal && first < r_prime) ? 1.0 : 0.0;
                    if (cube.data()[flat] != want) {
                        c.pass = false;
                        c.detail = "entry mismatch at flat index " + std::to_string(flat);
                    }
                }

                if (c.pass && n == 2) {
                    const std::size_t rank = matrix_rank(cube);
                    if (rank != r_prime) {
                        c.pass = false;
                        c.detail = "matrix rank " + std::to_string(rank) + ", wanted " +
                                   std::to_string(r_prime);
                    } else {
                        c.detail = "diagonal exact, rank " + std::to_string(rank);
                    }
                } else if (c.pass) {
                    c.detail = "diagonal exact";
                }

                report.all_pass = report.all_pass && c.pass;
                report.cases.push_back(std::move(c));
            }
        }
    };
    run(2, 8);
    run(3, 4);
    return report;
}

} // namespace hynd
