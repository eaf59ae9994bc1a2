#pragma once

#include "cm/ops.hpp"

namespace cm::ssm {

struct NonPositiveDelta : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct LengthMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Below this |delta * A| the discretized input matrix uses its series limit
// B_bar = delta * B instead of the exact expression ((e^{dA} - 1) / A) B.
inline constexpr double kZohSeriesEps = 1e-8;

// Zero-order-hold pieces, elementwise over identically shaped tensors.
// A_bar = exp(delta * a). Requires delta > 0.
ad::Tensor zoh_a_bar(const ad::Tensor& a_diag, const ad::Tensor& delta);
// B_bar = ((exp(delta * a) - 1) / a) * b, with the small-|delta*a| limit above.
ad::Tensor zoh_b_bar(const ad::Tensor& a_diag, const ad::Tensor& b, const ad::Tensor& delta);

std::pair<ad::Tensor, ad::Tensor> zoh_discretize(const ad::Tensor& a_diag,
                                                 const ad::Tensor& b,
                                                 const ad::Tensor& delta);

// Discrete recurrence for one channel: x_k = a_bar_k * x_{k-1} + b_bar_k u_k,
// y_k = <c_k, x_k> + d u_k, with x_0 = 0. Shapes: a_bar, b_bar, c are (L, N);
// u is (L); d_skip is scalar. Sequential evaluation, differentiable.
ad::Tensor ssm_scan(const ad::Tensor& a_bar, const ad::Tensor& b_bar,
                    const ad::Tensor& c, const ad::Tensor& u, const ad::Tensor& d_skip);

// Fused ZOH + scan over a batch of multichannel sequences. Computes exactly
// zoh_discretize followed by the recurrence above, per channel i and state n:
//   A_bar[t,i,n] = exp(delta[t,i] * a[i,n])
//   B_bar[t,i,n] = ((A_bar - 1) / a[i,n]) * b_seq[t,n]   (series limit as above)
//   x[t,i,n]     = A_bar * x[t-1,i,n] + B_bar * u[t,i]
//   y[t,i]       = sum_n c_seq[t,n] * x[t,i,n] + d_skip[i] * u[t,i]
// Shapes: u, delta (B, L, I); a_diag (I, N); b_seq, c_seq (B, L, N);
// d_skip (I). Returns (B, L, I).
ad::Tensor selective_scan(const ad::Tensor& u, const ad::Tensor& delta,
                          const ad::Tensor& a_diag, const ad::Tensor& b_seq,
                          const ad::Tensor& c_seq, const ad::Tensor& d_skip);

// Learnable pieces of one selective SSM over I channels and N states.
struct SsmParams {
  ad::Tensor a_log;    // (I, N); A = -exp(a_log)
  ad::Tensor d_skip;   // (I)
  ad::Tensor b_proj;   // (I, N)
  ad::Tensor c_proj;   // (I, N)
  ad::Tensor dt_proj;  // (I, I)
  ad::Tensor dt_bias;  // (I)
};

struct SelectiveSeqs {
  ad::Tensor b;      // (B, L, N)
  ad::Tensor c;      // (B, L, N)
  ad::Tensor delta;  // (B, L, I), strictly positive
};

// Input-dependent B_t, C_t and step size: linear projections of u plus
// softplus(dt_proj u + dt_bias) for delta.
SelectiveSeqs selective_params(const ad::Tensor& u, const SsmParams& p);

struct MambaBlockParams {
  ad::Tensor in_proj;  // (D, 2I): stream and gate halves
  ad::Tensor conv_w;   // (K, I) depthwise causal kernel
  ad::Tensor conv_b;   // (I)
  SsmParams ssm;
  ad::Tensor out_proj;  // (I, D)
  bool bare = false;    // selective SSM only, no projections/conv/gate
};

// x: (B, L, D) -> (B, L, D). In the full block: project to 2I, causal
// depthwise conv + SiLU on the stream half, selective scan, gate with
// SiLU(gate half), project back to D. Causal: step t ignores steps > t.
ad::Tensor mamba_block_forward(const ad::Tensor& x, const MambaBlockParams& p);

}  // namespace cm::ssm
