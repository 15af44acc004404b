#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hynd/memory.hpp"
#include "hynd/ops.hpp"
#include "hynd/tape.hpp"
#include "hynd/tensor.hpp"

namespace hynd {

/// Quadrant-causal convolution of a plain N-D signal against an N-D kernel of
/// no greater extent, via padded FFTs. Differentiable. For token batches use
/// ops::fft_conv.
Tensor fft_conv_causal(const Tensor& u, const Tensor& h);

/// Same contraction by explicit nested summation. Not taped; small sizes only.
Tensor direct_conv_oracle(const Tensor& u, const Tensor& h);

/// result[i_1..i_N] = prod_n v_n[i_n]. Differentiable in every factor.
Tensor outer_product(const std::vector<Tensor>& vectors);

/// Singular values of a 2-D tensor, descending, by one-sided Jacobi.
std::vector<double> singular_values(const Tensor& a);

/// Number of singular values above rel_tol * sigma_max.
std::size_t matrix_rank(const Tensor& a, double rel_tol = 1e-8);

/// 90-degree clockwise rotations of a 2-D grid. Odd turn counts require a
/// square grid. Differentiable.
Tensor rotate_grid(const Tensor& g, int quarter_turns);

/// Token permutation realizing rotate_grid on a row-major (rows x cols) token
/// grid: out_perm[t_out] = t_in. For odd turns rows must equal cols.
std::vector<std::size_t> rotation_permutation(std::size_t rows, std::size_t cols,
                                              int quarter_turns);

/// Token permutation reversing every spatial axis of a row-major grid.
std::vector<std::size_t> flip_permutation(const Shape& spatial);

// ---- gradient checking -------------------------------------------------------

struct GradCheckReport {
    bool pass = true;
    double max_rel_err = 0.0;
    std::size_t entries_checked = 0;
    std::string worst_param;
};

/// Compares reverse-mode gradients of `forward` (a scalar-loss closure reading
/// the parameters in place) against central finite differences.
/// rel_err = |a-b| / max(|a|, |b|, floor).
GradCheckReport check_gradients(const std::function<Tensor()>& forward,
                                const std::vector<Tensor>& parameters,
                                const std::vector<std::string>& names, double step = 1e-5,
                                double tolerance = 1e-4, double floor = 1e-3);

} // namespace hynd
