#pragma once

#include "ltx/autodiff.hpp"

#include <cstddef>

namespace ltx::ops {

enum class Ewise { add, sub, mul };
enum class Activation { relu, tanh, sigmoid };

/// Elementwise a (op) b. `b` must have a's dims or be a single element.
Var ewise(Ewise kind, Var a, Var b);
inline Var add(Var a, Var b) { return ewise(Ewise::add, a, b); }
inline Var sub(Var a, Var b) { return ewise(Ewise::sub, a, b); }
inline Var mul(Var a, Var b) { return ewise(Ewise::mul, a, b); }

/// x * factor for a compile-time-free constant.
Var scale(Var x, double factor);

/// [r x k] * [k x c]. Higher-rank inputs are rejected.
Var matmul(Var a, Var b);

/// x[r x c] + bias[c] broadcast over rows.
Var add_bias(Var x, Var bias);

/// Valid, stride-1 cross-correlation. `input` is [C_in,H,W] or
/// [B,C_in,H,W]; kernels [C_out,C_in,kh,kw]; bias [C_out].
Var conv2d(Var input, Var kernels, Var bias);

/// 2x2 non-overlapping max over the trailing two axes of [C,H,W] or
/// [B,C,H,W]. Gradient goes to the first maximal cell in row-major order.
Var maxpool2(Var input);

Var activation(Activation kind, Var x);
inline Var relu(Var x) { return activation(Activation::relu, x); }
inline Var tanh(Var x) { return activation(Activation::tanh, x); }
inline Var sigmoid(Var x) { return activation(Activation::sigmoid, x); }

/// Row-wise softmax of a [r x k] matrix with max subtraction.
Var softmax_rows(Var logits);

/// Row-wise layer normalization with affine gamma/beta of length c.
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);

/// Align-corners bilinear resize of the trailing two axes of [h,w] or
/// [B,h,w] to H x W. Throws ContractError when asked to shrink.
Var bilinear_upsample(Var map, std::size_t out_h, std::size_t out_w);

Var reshape(Var x, Shape dims);
Var sum(Var x);
Var mean(Var x);

/// Multi-head scaled dot-product attention over packed rows.
///
/// `qkv` is [B*T x 3d] with the query, key and value blocks side by side.
/// Each group of `seq_len` consecutive rows is one sequence; attention never
/// crosses groups. Returns [B*T x d] with heads concatenated.
Var multi_head_attention(Var qkv, std::size_t seq_len, std::size_t heads);

/// [C,S,S] or [B,C,S,S] images to [B*n x C*p*p] patch rows. Patches are
/// enumerated row-major; within a patch values run channel-major, then
/// row-major.
Var patchify(Var images, std::size_t patch);

/// Per sequence: prepend `cls` [1 x d] to n embedded patch rows and add
/// positional embeddings [(n+1) x d]. `patches` is [B*n x d].
Var assemble_tokens(Var patches, Var cls, Var positions);

/// Row `offset` of every group of `seq_len` rows: [B*T x d] -> [B x d].
Var group_rows(Var x, std::size_t seq_len, std::size_t offset);

/// All rows but the first of every group: [B*T x d] -> [B*(T-1) x d].
Var drop_group_head(Var x, std::size_t seq_len);

}  // namespace ltx::ops
