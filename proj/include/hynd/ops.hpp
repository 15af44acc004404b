#pragma once

#include <cstddef>
#include <vector>

#include "hynd/tensor.hpp"

namespace hynd::ops {

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor offset(const Tensor& a, double constant);
Tensor exp(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor gelu(const Tensor& a); // tanh approximation
/// 1 where a > 0, else 0. Recorded with a zero backward (derivative is zero
/// almost everywhere), so gradients pass through as exact zeros.
Tensor heaviside(const Tensor& a);

// ---- reductions and losses -------------------------------------------------

Tensor sum(const Tensor& a);  // -> shape {1}
Tensor mean(const Tensor& a); // -> shape {1}
Tensor mse(const Tensor& pred, const Tensor& target);
/// Mean negative log-likelihood of integer labels under row-wise softmax.
/// logits: (B, K), labels.size() == B.
Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);
Tensor softmax_last(const Tensor& a); // softmax over the last axis

// ---- structure --------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape new_shape); // copies; numel must match
Tensor slice_last(const Tensor& a, std::size_t begin, std::size_t end);
Tensor concat_last(const std::vector<Tensor>& parts);
Tensor transpose(const Tensor& a); // 2-D only
/// Token reindex on (B, T, C): y[b, t, c] = x[b, perm[t], c].
/// perm must be a permutation of [0, T).
Tensor permute_tokens(const Tensor& a, const std::vector<std::size_t>& perm);
/// (B, T, H*D) -> (B*H, T, D): group attention heads into the batch axis.
Tensor heads_front(const Tensor& a, std::size_t heads);
/// Inverse of heads_front: (B*H, T, D) -> (B, T, H*D).
Tensor heads_back(const Tensor& a, std::size_t heads);
Tensor mean_tokens(const Tensor& a);                     // (B, T, C) -> (B, C)
Tensor select_token(const Tensor& a, std::size_t index); // (B, T, C) -> (B, C)
/// (B, T, C) + learned (C) -> (B, T+1, C) with the new token at position 0.
Tensor prepend_token(const Tensor& a, const Tensor& token);
Tensor add_position(const Tensor& a, const Tensor& table); // x (B,T,C) + table (T,C)
Tensor scale_channels(const Tensor& a, const Tensor& s);   // x (B,T,C) * s (C)

// ---- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b); // (M,K) @ (K,N)
/// x (..., In) @ W(Out, In)^T + b(Out). Pass an undefined Tensor to skip the bias.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Batched a (G,T,D) @ b(G,S,D)^T * alpha -> (G,T,S).
Tensor bmm_nt(const Tensor& a, const Tensor& b, double alpha);
/// Batched a (G,T,S) @ b (G,S,D) -> (G,T,D).
Tensor bmm_nn(const Tensor& a, const Tensor& b);
/// Normalization over the last axis with learned gain/shift of that width.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// ---- kernel construction -----------------------------------------------------

Tensor outer(const Tensor& a, const Tensor& b); // (M) x (N) -> (M, N)
/// Per-channel outer product extending a kernel by one trailing axis:
/// core (C, S...) x factors (L, C) -> (C, S..., L).
Tensor channel_outer(const Tensor& core, const Tensor& factors);
/// Scales each channel of (C, S...) to unit L1 mass: k[c] / (sum |k[c]| + eps).
Tensor l1_normalize(const Tensor& kernel, double eps = 1e-12);

// ---- convolution --------------------------------------------------------------

/// FFT-based causal convolution of token sequences against per-channel kernels.
/// u: (B, T, C) with T == prod(spatial); h: (C, k_1..k_N) with k_n <= spatial[n].
/// Per batch and channel, tokens are viewed as the row-major spatial grid and
/// convolved so position i only sees positions <= i along every axis.
Tensor fft_conv(const Tensor& u, const Tensor& h, const Shape& spatial);
/// Same contraction by direct summation for small depthwise taps.
/// w: (C, k_1..k_N); identity is w = [1, 0, ...] per channel.
Tensor short_conv(const Tensor& u, const Tensor& w, const Shape& spatial);

} // namespace hynd::ops
