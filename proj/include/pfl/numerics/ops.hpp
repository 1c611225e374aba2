#pragma once

#include <cstddef>
#include <vector>

#include "pfl/numerics/tape.hpp"

namespace pfl::num {

// Differentiable matrix ops recorded on the tape of their inputs. All inputs of
// one op must live on the same tape. Shapes are explicit: the only expansion is
// a 1xc row over rows (add_row, broadcast_rows) or an rx1 column over columns
// (broadcast_cols). Mismatches raise DimensionError naming the op and shapes.

Var matmul(Var a, Var b);
// a * b^T without materializing the transpose.
Var matmul_nt(Var a, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);

Var add_row(Var x, Var row);
Var broadcast_rows(Var row, std::size_t rows);
Var broadcast_cols(Var col, std::size_t cols);

// axis 0 stacks rows, axis 1 stacks columns.
Var concat(const std::vector<Var>& parts, int axis);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var transpose(Var a);

// axis 1 normalizes each row, axis 0 each column.
Var softmax(Var a, int axis);
// Row-wise normalization with 1xc gain and bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var gelu(Var a);

// Full reductions return 1x1. Axis reductions return 1xc (axis 0) or rx1 (axis 1).
Var sum(Var a);
Var sum(Var a, int axis);
Var mean(Var a);
Var sum_squares(Var a);
// mean((a - b)^2) over all entries.
Var mse(Var a, Var b);

// Plain kernel used by the ops and by callers that only need values:
// C (m x n) += op(A) * op(B) with op = transpose when the flag is set.
void gemm(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, Tensor& c);

}  // namespace pfl::num
