#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hynd/filtergen.hpp"
#include "hynd/tensor.hpp"

namespace hynd {

/// Three-stage threshold circuit over integer coordinates in [0, r)^n with
/// layer widths [n, 2nr, r, 1]. Stage 1 detects x_i >= j and x_i <= j per
/// (axis, value) pair, stage 2 conjoins the 2n detectors per value, stage 3
/// disjoins the r conjunctions. Evaluates to the n-dimensional identity
/// pattern: 1 on the diagonal, 0 elsewhere.
struct ThresholdNetwork {
    std::size_t n = 0; // input arity
    std::size_t r = 0; // values per axis
    Tensor w1, b1;     // (2nr, n), (2nr)
    Tensor w2, b2;     // (r, 2nr), (r)
    Tensor w3, b3;     // (1, r), (1)
    double delta = 0.0; // the conjunction bias, -2n + 1/2

    std::vector<std::size_t> widths() const { return {n, 2 * n * r, r, 1}; }
};

/// n >= 2, r >= 2. The construction is certified by exhaustive evaluation in
/// the tests, not by transcribed formulas.
ThresholdNetwork build_identity_network(std::size_t n, std::size_t r);

/// Keeps only the first r_prime disjuncts: the evaluated tensor becomes the
/// identity pattern restricted to the leading r_prime diagonal entries.
ThresholdNetwork truncate_to_rank(const ThresholdNetwork& net, std::size_t r_prime);

/// The same circuit as a sign-mode filter network (shared tensors), so the
/// generator stack can run it directly.
FilterNetwork as_filter_network(const ThresholdNetwork& net);

/// Exhaustive evaluation over [0, r)^n, returned with shape r^n (row-major,
/// last axis fastest).
Tensor evaluate_network_tensor(const ThresholdNetwork& net, std::size_t n, std::size_t r);

/// Rank certificate for a kernel tensor with >= 2 axes. Two-axis kernels get
/// an exact matrix rank; higher arities report per-axis unfolding ranks,
/// whose maximum lower-bounds the tensor rank.
struct KernelRankReport {
    std::optional<std::size_t> exact_rank_2d;
    std::vector<std::size_t> unfolding_lower_bounds; // one per axis

    std::size_t lower_bound() const;
};
KernelRankReport kernel_rank_report(const Tensor& kernel, double rel_tol = 1e-8);

/// One constructive check: build, truncate to r_prime, evaluate exhaustively,
/// compare against the truncated identity pattern (and, for n = 2, certify
/// the matrix rank equals r_prime).
struct TheoryCase {
    std::size_t n = 0, r = 0, r_prime = 0;
    bool pass = false;
    std::string detail;
};

struct TheoryReport {
    std::vector<TheoryCase> cases;
    bool all_pass = true;

    /// One "PASS/FAIL N=. r=. r'=." line per case.
    std::string text() const;
};

/// Sweeps n = 2 with r in [2, 8] and n = 3 with r in [2, 4], every
/// r_prime in [2, r].
TheoryReport verify_identity_theorems();

} // namespace hynd
