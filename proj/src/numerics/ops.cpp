#include "pfl/numerics/ops.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "pfl/errors.hpp"

namespace pfl::num {

namespace {

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                         b.shape_str());
}

void require_matrix(const char* op, const Tensor& a) {
    if (a.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected a matrix, got " + a.shape_str());
    }
}

void require_same_tape(const char* op, Var a, Var b) {
    if (&a.tape() != &b.tape()) {
        throw ContractError(std::string(op) + ": operands recorded on different tapes");
    }
}

void add_into(Tensor& dst, const Tensor& src, double factor = 1.0) {
    double* d = dst.data();
    const double* s = src.data();
    for (std::size_t i = 0, n = dst.size(); i < n; ++i) {
        d[i] += factor * s[i];
    }
}

template <typename F, typename DF>
Var unary(const char* op, Var a, F f, DF df) {
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = f(x[i]);
    }
    const std::size_t ia = a.id();
    return a.tape().record(op, std::move(y), {a}, [ia, df](Tape& t, std::size_t self) {
        if (!t.needs_grad(ia)) {
            return;
        }
        const Tensor& g = *t.grad(self);
        const Tensor& xv = t.value(ia);
        const Tensor& yv = t.value(self);
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * df(xv[i], yv[i]);
        }
    });
}

}  // namespace

void gemm(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, Tensor& c) {
    const std::size_t m = trans_a ? a.cols() : a.rows();
    const std::size_t k = trans_a ? a.rows() : a.cols();
    const std::size_t kb = trans_b ? b.cols() : b.rows();
    const std::size_t n = trans_b ? b.rows() : b.cols();
    if (k != kb || c.rows() != m || c.cols() != n) {
        throw DimensionError("gemm: incompatible shapes " + a.shape_str() + (trans_a ? "^T" : "") +
                             " * " + b.shape_str() + (trans_b ? "^T" : "") + " -> " + c.shape_str());
    }
    const double* A = a.data();
    const double* B = b.data();
    double* C = c.data();
    if (!trans_a && !trans_b) {
        for (std::size_t i = 0; i < m; ++i) {
            double* crow = C + i * n;
            const double* arow = A + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = arow[p];
                if (av == 0.0) {
                    continue;
                }
                const double* brow = B + p * n;
                for (std::size_t j = 0; j < n; ++j) {
                    crow[j] += av * brow[j];
                }
            }
        }
    } else if (!trans_a && trans_b) {
        for (std::size_t i = 0; i < m; ++i) {
            const double* arow = A + i * k;
            double* crow = C + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                const double* brow = B + j * k;
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) {
                    acc += arow[p] * brow[p];
                }
                crow[j] += acc;
            }
        }
    } else if (trans_a && !trans_b) {
        for (std::size_t p = 0; p < k; ++p) {
            const double* arow = A + p * m;
            const double* brow = B + p * n;
            for (std::size_t i = 0; i < m; ++i) {
                const double av = arow[i];
                if (av == 0.0) {
                    continue;
                }
                double* crow = C + i * n;
                for (std::size_t j = 0; j < n; ++j) {
                    crow[j] += av * brow[j];
                }
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) {
                    acc += A[p * m + i] * B[j * k + p];
                }
                C[i * n + j] += acc;
            }
        }
    }
}

Var matmul(Var a, Var b) {
    require_same_tape("matmul", a, b);
    const Tensor& x = a.value();
    const Tensor& w = b.value();
    require_matrix("matmul", x);
    require_matrix("matmul", w);
    if (x.cols() != w.rows()) {
        shape_fail("matmul", x, w);
    }
    Tensor y = Tensor::matrix(x.rows(), w.cols());
    gemm(x, false, w, false, y);
    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return a.tape().record("matmul", std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        if (t.needs_grad(ia)) {
            gemm(g, false, t.value(ib), true, t.grad_buffer(ia));
        }
        if (t.needs_grad(ib)) {
            gemm(t.value(ia), true, g, false, t.grad_buffer(ib));
        }
    });
}

Var matmul_nt(Var a, Var b) {
    require_same_tape("matmul_nt", a, b);
    const Tensor& x = a.value();
    const Tensor& w = b.value();
    require_matrix("matmul_nt", x);
    require_matrix("matmul_nt", w);
    if (x.cols() != w.cols()) {
        shape_fail("matmul_nt", x, w);
    }
    Tensor y = Tensor::matrix(x.rows(), w.rows());
    gemm(x, false, w, true, y);
    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return a.tape().record("matmul_nt", std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        if (t.needs_grad(ia)) {
            gemm(g, false, t.value(ib), false, t.grad_buffer(ia));
        }
        if (t.needs_grad(ib)) {
            gemm(g, true, t.value(ia), false, t.grad_buffer(ib));
        }
    });
}

namespace {

template <typename F>
Var binary_same_shape(const char* op, Var a, Var b, double sign_b, F combine) {
    require_same_tape(op, a, b);
    const Tensor& x = a.value();
    const Tensor& z = b.value();
    if (!x.same_shape(z)) {
        shape_fail(op, x, z);
    }
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = combine(x[i], z[i]);
    }
    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return a.tape().record(op, std::move(y), {a, b}, [ia, ib, sign_b](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        if (t.needs_grad(ia)) {
            add_into(t.grad_buffer(ia), g);
        }
        if (t.needs_grad(ib)) {
            add_into(t.grad_buffer(ib), g, sign_b);
        }
    });
}

}  // namespace

Var add(Var a, Var b) {
    return binary_same_shape("add", a, b, 1.0, [](double x, double z) { return x + z; });
}

Var sub(Var a, Var b) {
    return binary_same_shape("sub", a, b, -1.0, [](double x, double z) { return x - z; });
}

Var mul(Var a, Var b) {
    require_same_tape("mul", a, b);
    const Tensor& x = a.value();
    const Tensor& z = b.value();
    if (!x.same_shape(z)) {
        shape_fail("mul", x, z);
    }
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = x[i] * z[i];
    }
    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return a.tape().record("mul", std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        if (t.needs_grad(ia)) {
            const Tensor& zv = t.value(ib);
            Tensor& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * zv[i];
            }
        }
        if (t.needs_grad(ib)) {
            const Tensor& xv = t.value(ia);
            Tensor& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < g.size(); ++i) {
                gb[i] += g[i] * xv[i];
            }
        }
    });
}

Var scale(Var a, double factor) {
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = factor * x[i];
    }
    const std::size_t ia = a.id();
    return a.tape().record("scale", std::move(y), {a}, [ia, factor](Tape& t, std::size_t self) {
        add_into(t.grad_buffer(ia), *t.grad(self), factor);
    });
}

Var add_row(Var x, Var row) {
    require_same_tape("add_row", x, row);
    const Tensor& xv = x.value();
    const Tensor& rv = row.value();
    require_matrix("add_row", xv);
    require_matrix("add_row", rv);
    if (rv.rows() != 1 || rv.cols() != xv.cols()) {
        shape_fail("add_row", xv, rv);
    }
    const std::size_t r = xv.rows();
    const std::size_t c = xv.cols();
    Tensor y(xv.shape());
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            y(i, j) = xv(i, j) + rv[j];
        }
    }
    const std::size_t ix = x.id();
    const std::size_t ir = row.id();
    return x.tape().record("add_row", std::move(y), {x, row}, [ix, ir, r, c](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        if (t.needs_grad(ix)) {
            add_into(t.grad_buffer(ix), g);
        }
        if (t.needs_grad(ir)) {
            Tensor& gr = t.grad_buffer(ir);
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    gr[j] += g(i, j);
                }
            }
        }
    });
}

Var broadcast_rows(Var row, std::size_t rows) {
    const Tensor& rv = row.value();
    require_matrix("broadcast_rows", rv);
    if (rv.rows() != 1 || rows == 0) {
        throw DimensionError("broadcast_rows: expected a 1xc row and rows > 0, got " + rv.shape_str());
    }
    const std::size_t c = rv.cols();
    Tensor y = Tensor::matrix(rows, c);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            y(i, j) = rv[j];
        }
    }
    const std::size_t ir = row.id();
    return row.tape().record("broadcast_rows", std::move(y), {row}, [ir, rows, c](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        Tensor& gr = t.grad_buffer(ir);
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                gr[j] += g(i, j);
            }
        }
    });
}

Var broadcast_cols(Var col, std::size_t cols) {
    const Tensor& cv = col.value();
    require_matrix("broadcast_cols", cv);
    if (cv.cols() != 1 || cols == 0) {
        throw DimensionError("broadcast_cols: expected an rx1 column and cols > 0, got " + cv.shape_str());
    }
    const std::size_t r = cv.rows();
    Tensor y = Tensor::matrix(r, cols);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            y(i, j) = cv[i];
        }
    }
    const std::size_t ic = col.id();
    return col.tape().record("broadcast_cols", std::move(y), {col}, [ic, r, cols](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        Tensor& gc = t.grad_buffer(ic);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
                gc[i] += g(i, j);
            }
        }
    });
}

Var concat(const std::vector<Var>& parts, int axis) {
    if (axis == 0) {
        return concat_rows(parts);
    }
    if (axis == 1) {
        return concat_cols(parts);
    }
    throw DimensionError("concat: axis must be 0 or 1, got " + std::to_string(axis));
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw DimensionError("concat_rows: no inputs");
    }
    const std::size_t c = parts.front().value().cols();
    std::size_t r = 0;
    for (const Var& p : parts) {
        require_same_tape("concat_rows", parts.front(), p);
        const Tensor& v = p.value();
        require_matrix("concat_rows", v);
        if (v.cols() != c) {
            shape_fail("concat_rows", parts.front().value(), v);
        }
        r += v.rows();
    }
    Tensor y = Tensor::matrix(r, c);
    std::vector<std::size_t> ids;
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        std::copy(v.data(), v.data() + v.size(), y.data() + offset * c);
        ids.push_back(p.id());
        offsets.push_back(offset);
        offset += v.rows();
    }
    return parts.front().tape().record(
        "concat_rows", std::move(y), parts, [ids, offsets, c](Tape& t, std::size_t self) {
            const Tensor& g = *t.grad(self);
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (!t.needs_grad(ids[k])) {
                    continue;
                }
                Tensor& gp = t.grad_buffer(ids[k]);
                const double* src = g.data() + offsets[k] * c;
                for (std::size_t i = 0; i < gp.size(); ++i) {
                    gp[i] += src[i];
                }
            }
        });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw DimensionError("concat_cols: no inputs");
    }
    const std::size_t r = parts.front().value().rows();
    std::size_t c = 0;
    for (const Var& p : parts) {
        require_same_tape("concat_cols", parts.front(), p);
        const Tensor& v = p.value();
        require_matrix("concat_cols", v);
        if (v.rows() != r) {
            shape_fail("concat_cols", parts.front().value(), v);
        }
        c += v.cols();
    }
    Tensor y = Tensor::matrix(r, c);
    std::vector<std::size_t> ids;
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        const std::size_t pc = v.cols();
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < pc; ++j) {
                y(i, offset + j) = v(i, j);
            }
        }
        ids.push_back(p.id());
        offsets.push_back(offset);
        offset += pc;
    }
    return parts.front().tape().record(
        "concat_cols", std::move(y), parts, [ids, offsets, r, c](Tape& t, std::size_t self) {
            const Tensor& g = *t.grad(self);
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (!t.needs_grad(ids[k])) {
                    continue;
                }
                Tensor& gp = t.grad_buffer(ids[k]);
                const std::size_t pc = gp.cols();
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < pc; ++j) {
                        gp(i, j) += g(i, offsets[k] + j);
                    }
                }
            }
        });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
    const Tensor& x = a.value();
    require_matrix("slice_rows", x);
    if (begin >= end || end > x.rows()) {
        throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") out of bounds for " + x.shape_str());
    }
    const std::size_t c = x.cols();
    Tensor y = Tensor::matrix(end - begin, c);
    std::copy(x.data() + begin * c, x.data() + end * c, y.data());
    const std::size_t ia = a.id();
    return a.tape().record("slice_rows", std::move(y), {a}, [ia, begin, c](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        Tensor& ga = t.grad_buffer(ia);
        double* dst = ga.data() + begin * c;
        for (std::size_t i = 0; i < g.size(); ++i) {
            dst[i] += g[i];
        }
    });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
    const Tensor& x = a.value();
    require_matrix("slice_cols", x);
    if (begin >= end || end > x.cols()) {
        throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") out of bounds for " + x.shape_str());
    }
    const std::size_t r = x.rows();
    const std::size_t w = end - begin;
    Tensor y = Tensor::matrix(r, w);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            y(i, j) = x(i, begin + j);
        }
    }
    const std::size_t ia = a.id();
    return a.tape().record("slice_cols", std::move(y), {a}, [ia, begin, r, w](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                ga(i, begin + j) += g(i, j);
            }
        }
    });
}

Var transpose(Var a) {
    const Tensor& x = a.value();
    require_matrix("transpose", x);
    const std::size_t r = x.rows();
    const std::size_t c = x.cols();
    Tensor y = Tensor::matrix(c, r);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            y(j, i) = x(i, j);
        }
    }
    const std::size_t ia = a.id();
    return a.tape().record("transpose", std::move(y), {a}, [ia, r, c](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                ga(i, j) += g(j, i);
            }
        }
    });
}

Var softmax(Var a, int axis) {
    const Tensor& x = a.value();
    require_matrix("softmax", x);
    if (axis != 0 && axis != 1) {
        throw DimensionError("softmax: axis must be 0 or 1, got " + std::to_string(axis));
    }
    const std::size_t r = x.rows();
    const std::size_t c = x.cols();
    // Work in terms of "lanes": rows for axis 1, columns for axis 0.
    const std::size_t lanes = axis == 1 ? r : c;
    const std::size_t len = axis == 1 ? c : r;
    const std::size_t lane_stride = axis == 1 ? c : 1;
    const std::size_t elem_stride = axis == 1 ? 1 : c;
    Tensor y(x.shape());
    for (std::size_t lane = 0; lane < lanes; ++lane) {
        const std::size_t base = lane * lane_stride;
        double mx = x[base];
        for (std::size_t e = 1; e < len; ++e) {
            mx = std::max(mx, x[base + e * elem_stride]);
        }
        double total = 0.0;
        for (std::size_t e = 0; e < len; ++e) {
            const double v = std::exp(x[base + e * elem_stride] - mx);
            y[base + e * elem_stride] = v;
            total += v;
        }
        for (std::size_t e = 0; e < len; ++e) {
            y[base + e * elem_stride] /= total;
        }
    }
    const std::size_t ia = a.id();
    return a.tape().record("softmax", std::move(y), {a},
                           [ia, lanes, len, lane_stride, elem_stride](Tape& t, std::size_t self) {
                               const Tensor& g = *t.grad(self);
                               const Tensor& yv = t.value(self);
                               Tensor& ga = t.grad_buffer(ia);
                               for (std::size_t lane = 0; lane < lanes; ++lane) {
                                   const std::size_t base = lane * lane_stride;
                                   double dot = 0.0;
                                   for (std::size_t e = 0; e < len; ++e) {
                                       const std::size_t i = base + e * elem_stride;
                                       dot += g[i] * yv[i];
                                   }
                                   for (std::size_t e = 0; e < len; ++e) {
                                       const std::size_t i = base + e * elem_stride;
                                       ga[i] += yv[i] * (g[i] - dot);
                                   }
                               }
                           });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    require_same_tape("layer_norm", x, gain);
    require_same_tape("layer_norm", x, bias);
    const Tensor& xv = x.value();
    const Tensor& gv = gain.value();
    const Tensor& bv = bias.value();
    require_matrix("layer_norm", xv);
    if (gv.size() != xv.cols() || bv.size() != xv.cols()) {
        shape_fail("layer_norm", xv, gv);
    }
    const std::size_t r = xv.rows();
    const std::size_t c = xv.cols();
    Tensor normalized(xv.shape());
    std::vector<double> inv_std(r);
    Tensor y(xv.shape());
    for (std::size_t i = 0; i < r; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            mu += xv(i, j);
        }
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double d = xv(i, j) - mu;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (std::size_t j = 0; j < c; ++j) {
            const double xh = (xv(i, j) - mu) * is;
            normalized(i, j) = xh;
            y(i, j) = xh * gv[j] + bv[j];
        }
    }
    const std::size_t ix = x.id();
    const std::size_t ig = gain.id();
    const std::size_t ib = bias.id();
    return x.tape().record(
        "layer_norm", std::move(y), {x, gain, bias},
        [ix, ig, ib, r, c, normalized = std::move(normalized), inv_std = std::move(inv_std)](
            Tape& t, std::size_t self) {
            const Tensor& g = *t.grad(self);
            if (t.needs_grad(ig)) {
                Tensor& gg = t.grad_buffer(ig);
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < c; ++j) {
                        gg[j] += g(i, j) * normalized(i, j);
                    }
                }
            }
            if (t.needs_grad(ib)) {
                Tensor& gb = t.grad_buffer(ib);
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < c; ++j) {
                        gb[j] += g(i, j);
                    }
                }
            }
            if (t.needs_grad(ix)) {
                const Tensor& gv2 = t.value(ig);
                Tensor& gx = t.grad_buffer(ix);
                const double inv_c = 1.0 / static_cast<double>(c);
                for (std::size_t i = 0; i < r; ++i) {
                    double sum_d = 0.0;
                    double sum_dx = 0.0;
                    for (std::size_t j = 0; j < c; ++j) {
                        const double d = g(i, j) * gv2[j];
                        sum_d += d;
                        sum_dx += d * normalized(i, j);
                    }
                    for (std::size_t j = 0; j < c; ++j) {
                        const double d = g(i, j) * gv2[j];
                        gx(i, j) += inv_std[i] * (d - inv_c * sum_d - normalized(i, j) * inv_c * sum_dx);
                    }
                }
            }
        });
}

Var tanh(Var a) {
    return unary("tanh", a, [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
    return unary("sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                 [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
    return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var gelu(Var a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    return unary("gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
                 [inv_sqrt_2pi](double x, double) {
                     const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
                     return cdf + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
                 });
}

Var sum(Var a) {
    const Tensor& x = a.value();
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        acc += x[i];
    }
    const std::size_t ia = a.id();
    return a.tape().record("sum", Tensor::scalar(acc), {a}, [ia](Tape& t, std::size_t self) {
        const double g = (*t.grad(self))[0];
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) {
            ga[i] += g;
        }
    });
}

Var sum(Var a, int axis) {
    const Tensor& x = a.value();
    require_matrix("sum", x);
    if (axis != 0 && axis != 1) {
        throw DimensionError("sum: axis must be 0 or 1, got " + std::to_string(axis));
    }
    const std::size_t r = x.rows();
    const std::size_t c = x.cols();
    Tensor y = axis == 0 ? Tensor::matrix(1, c) : Tensor::matrix(r, 1);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            y[axis == 0 ? j : i] += x(i, j);
        }
    }
    const std::size_t ia = a.id();
    return a.tape().record("sum_axis", std::move(y), {a}, [ia, axis, r, c](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                ga(i, j) += g[axis == 0 ? j : i];
            }
        }
    });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var sum_squares(Var a) {
    const Tensor& x = a.value();
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        acc += x[i] * x[i];
    }
    const std::size_t ia = a.id();
    return a.tape().record("sum_squares", Tensor::scalar(acc), {a}, [ia](Tape& t, std::size_t self) {
        const double g = (*t.grad(self))[0];
        const Tensor& xv = t.value(ia);
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) {
            ga[i] += 2.0 * g * xv[i];
        }
    });
}

Var mse(Var a, Var b) {
    require_same_tape("mse", a, b);
    const Tensor& x = a.value();
    const Tensor& z = b.value();
    if (!x.same_shape(z)) {
        shape_fail("mse", x, z);
    }
    const double inv_n = 1.0 / static_cast<double>(x.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - z[i];
        acc += d * d;
    }
    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return a.tape().record("mse", Tensor::scalar(acc * inv_n), {a, b}, [ia, ib, inv_n](Tape& t, std::size_t self) {
        const double g = (*t.grad(self))[0];
        const Tensor& xv = t.value(ia);
        const Tensor& zv = t.value(ib);
        const double f = 2.0 * g * inv_n;
        if (t.needs_grad(ia)) {
            Tensor& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < ga.size(); ++i) {
                ga[i] += f * (xv[i] - zv[i]);
            }
        }
        if (t.needs_grad(ib)) {
            Tensor& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < gb.size(); ++i) {
                gb[i] -= f * (xv[i] - zv[i]);
            }
        }
    });
}

}  // namespace pfl::num
