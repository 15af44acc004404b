"""N-D token mixing with implicit convolution kernels.

Thin wrapper over the compiled ``_hynd`` extension: causal FFT convolution,
positional kernel generators, the gated long-convolution mixing layer, and
the rank/identity verification oracles.
"""

from _hynd import (
    HyenaLayer,
    __version__,
    build_kernel,
    direct_conv_oracle,
    fft_conv_causal,
    matrix_rank,
    verify_identity_theorems,
)

__all__ = [
    "HyenaLayer",
    "__version__",
    "build_kernel",
    "direct_conv_oracle",
    "fft_conv_causal",
    "matrix_rank",
    "verify_identity_theorems",
]
