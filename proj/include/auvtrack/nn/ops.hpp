#pragma once

#include "auvtrack/nn/tensor.hpp"

#include <span>
#include <vector>

namespace auvtrack::nn {

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise / broadcasting arithmetic
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a (n×m) + row (1×m) broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& row);
/// a (n×m) ∘ row (1×m) broadcast over rows.
Tensor mul_row(const Tensor& a, const Tensor& row);
/// a (n×m) ∘ col (n×1) broadcast over columns.
Tensor mul_col(const Tensor& a, const Tensor& col);
/// a (n×m) + col (n×1) broadcast over columns.
Tensor add_col(const Tensor& a, const Tensor& col);
/// a / s with s a 1×1 tensor.
Tensor div_scalar(const Tensor& a, const Tensor& s);
/// a (any shape) + s (1×1) broadcast.
Tensor add_scalar_tensor(const Tensor& a, const Tensor& s);
/// a (any shape) ∘ s (1×1) broadcast.
Tensor mul_scalar_tensor(const Tensor& a, const Tensor& s);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor min_elem(const Tensor& a, const Tensor& b);

// Pointwise nonlinearities
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor softplus(const Tensor& a);
/// log σ(a), numerically stable.
Tensor log_sigmoid(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
/// Gradient is passed only where lo < a < hi.
Tensor clamp(const Tensor& a, double lo, double hi);

// Reductions
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// n×m -> n×1
Tensor sum_cols(const Tensor& a);
/// n×m -> 1×m
Tensor mean_rows(const Tensor& a);

// Shape manipulation
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count);
/// out.row(i) = a.row(index[i]); backward scatters-adds.
Tensor gather_rows(const Tensor& a, std::span<const Eigen::Index> index);

// Composite layers implemented as fused ops
/// Row-wise softmax.
Tensor softmax_rows(const Tensor& a);
/// Row-wise layer normalisation with affine gain/bias (1×m each).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

enum class AttentionMask { kNone, kCausal };

/// Single-head scaled dot-product attention over `batch` independent
/// sequences of `seq_len` tokens stacked row-wise ((batch·seq_len)×d).
/// `key_valid` (optional, batch·seq_len entries) masks padded keys.
/// When `scale_logits` is false the raw inner products are used.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, Eigen::Index batch, Eigen::Index seq_len,
                 AttentionMask mask, std::span<const std::uint8_t> key_valid = {}, bool scale_logits = true);

/// Attention weights for a single sequence (for inspection/tests).
Matrix attention_weights(const Matrix& q, const Matrix& k, AttentionMask mask, bool scale_logits = true);

}  // namespace auvtrack::nn
