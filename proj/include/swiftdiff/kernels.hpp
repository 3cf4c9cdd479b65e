#pragma once

#include <cstdint>
#include <vector>

#include "swiftdiff/tensor.hpp"

namespace swiftdiff::kernels {

// Throws NumericError naming `op` if any element is NaN/Inf.
void ensure_finite(const Tensor& t, const char* op);

Tensor matmul(const Tensor& a, const Tensor& b);

// add/sub/mul accept equal shapes, or a 2-D broadcast of b with shape (1,C)
// (per-column) or (R,1) (per-row).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

// Sums grad down to `shape` (inverse of the broadcast above).
Tensor reduce_to_shape(const Tensor& grad, const std::vector<int64_t>& shape);

Tensor transpose(const Tensor& a);
// Stacks equally-shaped 2-D tensors along rows.
Tensor vstack(const std::vector<Tensor>& parts);
// Treats `a` as (batch, T, C) flattened to (batch*T, C); returns (batch*C, T).
Tensor batched_transpose(const Tensor& a, int64_t batch);
Tensor reshape(const Tensor& a, std::vector<int64_t> shape);
Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor slice(const Tensor& a, int axis, int64_t start, int64_t len);

Tensor mean_all(const Tensor& a);
Tensor sum_all(const Tensor& a);
Tensor rows_mean(const Tensor& a);  // (R,C) -> (R,1)

Tensor sigmoid(const Tensor& a);
Tensor gelu(const Tensor& a);       // exact erf form
Tensor gelu_grad(const Tensor& x);  // elementwise dGELU/dx at x
Tensor softmax_rows(const Tensor& a);

struct LayerNormResult {
    Tensor y;
    Tensor xhat;     // normalized pre-scale activations, saved for backward
    Tensor inv_std;  // (R,1)
};
LayerNormResult layernorm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                               double eps);

struct AttentionResult {
    Tensor out;    // (B*T, d)
    Tensor probs;  // (B*heads*T, T) softmax rows, saved for backward
};
AttentionResult attention(const Tensor& q, const Tensor& k, const Tensor& v, int64_t batch,
                          int64_t heads);

struct AttentionGrads {
    Tensor dq, dk, dv;
};
AttentionGrads attention_backward(const Tensor& q, const Tensor& k, const Tensor& v,
                                  const Tensor& probs, const Tensor& dout, int64_t batch,
                                  int64_t heads);

}  // namespace swiftdiff::kernels
