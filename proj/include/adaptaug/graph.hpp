#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "adaptaug/tensor.hpp"

namespace adaptaug {

namespace detail {

// C[m,n] += A[m,k] * B[k,n], row-major. i-k-j loop order keeps both the
// B row and the C row streaming, which the compiler vectorizes.
inline void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,n] += A[m,k] * B^T where B is [n,k].
inline void matmul_bt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C[k,n] += A^T * B where A is [m,k], B is [m,n].
inline void matmul_at_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        const double* brow = b + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

inline void require_2d(const char* op, const TensorPtr& t) {
    if (t->shape.size() != 2)
        throw std::invalid_argument(std::string(op) + ": expected 2-d tensor, got " +
                                    shape_str(t->shape));
}

[[noreturn]] inline void shape_error(const char* op, const TensorPtr& a, const TensorPtr& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a->shape) +
                                " vs " + shape_str(b->shape));
}

}  // namespace detail

/// Define-by-run reverse-mode autodiff tape. Each op computes its output
/// eagerly and records a closure that propagates gradients to its inputs.
/// The tape is in creation order, which is a topological order of the
/// computation, so backward() just replays it in reverse. Gradients are
/// accumulated (+=) so fan-out sums over consumers.
class Graph {
public:
    void backward(const TensorPtr& loss) {
        if (!loss->is_scalar())
            throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                        shape_str(loss->shape));
        loss->ensure_grad();
        loss->grad[0] = 1.0;
        for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
    }

    std::size_t node_count() const { return tape_.size(); }

    // ---- binary ops ----

    TensorPtr matmul(TensorPtr a, TensorPtr b) {
        detail::require_2d("matmul", a);
        detail::require_2d("matmul", b);
        if (a->shape[1] != b->shape[0]) detail::shape_error("matmul", a, b);
        const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
        auto out = make_tensor({m, n});
        detail::matmul_acc(a->data.data(), b->data.data(), out->data.data(), m, k, n);
        record(out, [a, b, out, m, k, n] {
            a->ensure_grad();
            b->ensure_grad();
            detail::matmul_bt_acc(out->grad.data(), b->data.data(), a->grad.data(), m, n, k);
            detail::matmul_at_acc(a->data.data(), out->grad.data(), b->grad.data(), m, k, n);
        });
        return out;
    }

    /// add with matching shapes, or row-broadcast of a [n] / [1,n] bias
    /// onto an [m,n] left operand.
    TensorPtr add(TensorPtr a, TensorPtr b) {
        if (a->shape == b->shape) {
            auto out = make_tensor(a->shape);
            for (std::size_t i = 0; i < out->numel(); ++i) out->data[i] = a->data[i] + b->data[i];
            record(out, [a, b, out] {
                a->ensure_grad();
                b->ensure_grad();
                for (std::size_t i = 0; i < out->numel(); ++i) {
                    a->grad[i] += out->grad[i];
                    b->grad[i] += out->grad[i];
                }
            });
            return out;
        }
        if (a->shape.size() == 2 && static_cast<int>(b->numel()) == a->shape[1] &&
            b->shape.size() <= 2) {
            const int m = a->shape[0], n = a->shape[1];
            auto out = make_tensor(a->shape);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    out->data[static_cast<std::size_t>(i) * n + j] =
                        a->data[static_cast<std::size_t>(i) * n + j] + b->data[j];
            record(out, [a, b, out, m, n] {
                a->ensure_grad();
                b->ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) {
                        const double g = out->grad[static_cast<std::size_t>(i) * n + j];
                        a->grad[static_cast<std::size_t>(i) * n + j] += g;
                        b->grad[j] += g;
                    }
            });
            return out;
        }
        detail::shape_error("add", a, b);
    }

    TensorPtr sub(TensorPtr a, TensorPtr b) {
        if (a->shape != b->shape) detail::shape_error("sub", a, b);
        auto out = make_tensor(a->shape);
        for (std::size_t i = 0; i < out->numel(); ++i) out->data[i] = a->data[i] - b->data[i];
        record(out, [a, b, out] {
            a->ensure_grad();
            b->ensure_grad();
            for (std::size_t i = 0; i < out->numel(); ++i) {
                a->grad[i] += out->grad[i];
                b->grad[i] -= out->grad[i];
            }
        });
        return out;
    }

    TensorPtr mul(TensorPtr a, TensorPtr b) {
        if (a->shape != b->shape) detail::shape_error("mul", a, b);
        auto out = make_tensor(a->shape);
        for (std::size_t i = 0; i < out->numel(); ++i) out->data[i] = a->data[i] * b->data[i];
        record(out, [a, b, out] {
            a->ensure_grad();
            b->ensure_grad();
            for (std::size_t i = 0; i < out->numel(); ++i) {
                a->grad[i] += out->grad[i] * b->data[i];
                b->grad[i] += out->grad[i] * a->data[i];
            }
        });
        return out;
    }

    /// out = min(a, b) elementwise; gradient follows the selected branch,
    /// ties go to `a`.
    TensorPtr minimum(TensorPtr a, TensorPtr b) {
        if (a->shape != b->shape) detail::shape_error("minimum", a, b);
        auto out = make_tensor(a->shape);
        for (std::size_t i = 0; i < out->numel(); ++i)
            out->data[i] = std::min(a->data[i], b->data[i]);
        record(out, [a, b, out] {
            a->ensure_grad();
            b->ensure_grad();
            for (std::size_t i = 0; i < out->numel(); ++i) {
                if (a->data[i] <= b->data[i])
                    a->grad[i] += out->grad[i];
                else
                    b->grad[i] += out->grad[i];
            }
        });
        return out;
    }

    /// Divide each row of a [m,n] by the matching entry of s [m,1].
    TensorPtr rows_div(TensorPtr a, TensorPtr s) {
        detail::require_2d("rows_div", a);
        if (s->shape != Shape{a->shape[0], 1}) detail::shape_error("rows_div", a, s);
        const int m = a->shape[0], n = a->shape[1];
        auto out = make_tensor(a->shape);
        for (int i = 0; i < m; ++i) {
            const double inv = 1.0 / s->data[i];
            for (int j = 0; j < n; ++j)
                out->data[static_cast<std::size_t>(i) * n + j] =
                    a->data[static_cast<std::size_t>(i) * n + j] * inv;
        }
        record(out, [a, s, out, m, n] {
            a->ensure_grad();
            s->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const double sv = s->data[i];
                const double inv = 1.0 / sv;
                double acc = 0.0;
                for (int j = 0; j < n; ++j) {
                    const std::size_t ix = static_cast<std::size_t>(i) * n + j;
                    a->grad[ix] += out->grad[ix] * inv;
                    acc += out->grad[ix] * a->data[ix];
                }
                s->grad[i] -= acc * inv * inv;
            }
        });
        return out;
    }

    // ---- unary ops ----

    TensorPtr scale(TensorPtr a, double c) {
        auto out = make_tensor(a->shape);
        for (std::size_t i = 0; i < out->numel(); ++i) out->data[i] = c * a->data[i];
        record(out, [a, out, c] {
            a->ensure_grad();
            for (std::size_t i = 0; i < out->numel(); ++i) a->grad[i] += c * out->grad[i];
        });
        return out;
    }

    TensorPtr add_scalar(TensorPtr a, double c) {
        auto out = make_tensor(a->shape);
        for (std::size_t i = 0; i < out->numel(); ++i) out->data[i] = a->data[i] + c;
        record(out, [a, out] {
            a->ensure_grad();
            for (std::size_t i = 0; i < out->numel(); ++i) a->grad[i] += out->grad[i];
        });
        return out;
    }

    TensorPtr tanh(TensorPtr a) {
        auto out = make_tensor(a->shape);
        for (std::size_t i = 0; i < out->numel(); ++i) out->data[i] = std::tanh(a->data[i]);
        record(out, [a, out] {
            a->ensure_grad();
            for (std::size_t i = 0; i < out->numel(); ++i)
                a->grad[i] += out->grad[i] * (1.0 - out->data[i] * out->data[i]);
        });
        return out;
    }

    TensorPtr sigmoid(TensorPtr a) {
        auto out = make_tensor(a->shape);
        for (std::size_t i = 0; i < out->numel(); ++i)
            out->data[i] = 1.0 / (1.0 + std::exp(-a->data[i]));
        record(out, [a, out] {
            a->ensure_grad();
            for (std::size_t i = 0; i < out->numel(); ++i)
                a->grad[i] += out->grad[i] * out->data[i] * (1.0 - out->data[i]);
        });
        return out;
    }

    TensorPtr relu(TensorPtr a) {
        auto out = make_tensor(a->shape);
        for (std::size_t i = 0; i < out->numel(); ++i) out->data[i] = std::max(0.0, a->data[i]);
        record(out, [a, out] {
            a->ensure_grad();
            for (std::size_t i = 0; i < out->numel(); ++i)
                if (a->data[i] > 0.0) a->grad[i] += out->grad[i];
        });
        return out;
    }

    TensorPtr exp(TensorPtr a) {
        auto out = make_tensor(a->shape);
        for (std::size_t i = 0; i < out->numel(); ++i) out->data[i] = std::exp(a->data[i]);
        record(out, [a, out] {
            a->ensure_grad();
            for (std::size_t i = 0; i < out->numel(); ++i)
                a->grad[i] += out->grad[i] * out->data[i];
        });
        return out;
    }

    TensorPtr log(TensorPtr a) {
        auto out = make_tensor(a->shape);
        for (std::size_t i = 0; i < out->numel(); ++i) out->data[i] = std::log(a->data[i]);
        record(out, [a, out] {
            a->ensure_grad();
            for (std::size_t i = 0; i < out->numel(); ++i)
                a->grad[i] += out->grad[i] / a->data[i];
        });
        return out;
    }

    TensorPtr sqrt(TensorPtr a) {
        auto out = make_tensor(a->shape);
        for (std::size_t i = 0; i < out->numel(); ++i) out->data[i] = std::sqrt(a->data[i]);
        record(out, [a, out] {
            a->ensure_grad();
            for (std::size_t i = 0; i < out->numel(); ++i)
                a->grad[i] += out->grad[i] * 0.5 / out->data[i];
        });
        return out;
    }

    TensorPtr clamp(TensorPtr a, double lo, double hi) {
        auto out = make_tensor(a->shape);
        for (std::size_t i = 0; i < out->numel(); ++i)
            out->data[i] = std::min(hi, std::max(lo, a->data[i]));
        record(out, [a, out, lo, hi] {
            a->ensure_grad();
            for (std::size_t i = 0; i < out->numel(); ++i)
                if (a->data[i] >= lo && a->data[i] <= hi) a->grad[i] += out->grad[i];
        });
        return out;
    }

    /// Row-wise softmax over the last dimension of a 1-d or 2-d tensor.
    TensorPtr softmax(TensorPtr a) {
        const int n = a->shape.back();
        const int m = static_cast<int>(a->numel()) / n;
        auto out = make_tensor(a->shape);
        for (int i = 0; i < m; ++i) {
            const double* row = a->data.data() + static_cast<std::size_t>(i) * n;
            double* orow = out->data.data() + static_cast<std::size_t>(i) * n;
            double mx = row[0];
            for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
            double sum = 0.0;
            for (int j = 0; j < n; ++j) sum += (orow[j] = std::exp(row[j] - mx));
            const double inv = 1.0 / sum;
            for (int j = 0; j < n; ++j) orow[j] *= inv;
        }
        record(out, [a, out, m, n] {
            a->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const double* y = out->data.data() + static_cast<std::size_t>(i) * n;
                const double* g = out->grad.data() + static_cast<std::size_t>(i) * n;
                double dot = 0.0;
                for (int j = 0; j < n; ++j) dot += g[j] * y[j];
                double* ga = a->grad.data() + static_cast<std::size_t>(i) * n;
                for (int j = 0; j < n; ++j) ga[j] += y[j] * (g[j] - dot);
            }
        });
        return out;
    }

    // ---- reductions ----

    TensorPtr sum(TensorPtr a) {
        double s = 0.0;
        for (double v : a->data) s += v;
        auto out = make_scalar(s);
        record(out, [a, out] {
            a->ensure_grad();
            for (std::size_t i = 0; i < a->numel(); ++i) a->grad[i] += out->grad[0];
        });
        return out;
    }

    TensorPtr mean(TensorPtr a) {
        double s = 0.0;
        for (double v : a->data) s += v;
        auto out = make_scalar(s / static_cast<double>(a->numel()));
        record(out, [a, out] {
            a->ensure_grad();
            const double g = out->grad[0] / static_cast<double>(a->numel());
            for (std::size_t i = 0; i < a->numel(); ++i) a->grad[i] += g;
        });
        return out;
    }

    /// [m,n] -> [m,1] sum over columns.
    TensorPtr row_sum(TensorPtr a) {
        detail::require_2d("row_sum", a);
        const int m = a->shape[0], n = a->shape[1];
        auto out = make_tensor({m, 1});
        for (int i = 0; i < m; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += a->data[static_cast<std::size_t>(i) * n + j];
            out->data[i] = s;
        }
        record(out, [a, out, m, n] {
            a->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    a->grad[static_cast<std::size_t>(i) * n + j] += out->grad[i];
        });
        return out;
    }

    // ---- structural ops ----

    TensorPtr transpose(TensorPtr a) {
        detail::require_2d("transpose", a);
        const int m = a->shape[0], n = a->shape[1];
        auto out = make_tensor({n, m});
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                out->data[static_cast<std::size_t>(j) * m + i] =
                    a->data[static_cast<std::size_t>(i) * n + j];
        record(out, [a, out, m, n] {
            a->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    a->grad[static_cast<std::size_t>(i) * n + j] +=
                        out->grad[static_cast<std::size_t>(j) * m + i];
        });
        return out;
    }

    TensorPtr reshape(TensorPtr a, Shape s) {
        if (shape_numel(s) != a->numel())
            throw std::invalid_argument("reshape: cannot view " + shape_str(a->shape) + " as " +
                                        shape_str(s));
        auto out = make_tensor(std::move(s), a->data);
        record(out, [a, out] {
            a->ensure_grad();
            for (std::size_t i = 0; i < a->numel(); ++i) a->grad[i] += out->grad[i];
        });
        return out;
    }

    TensorPtr concat_cols(TensorPtr a, TensorPtr b) {
        detail::require_2d("concat_cols", a);
        detail::require_2d("concat_cols", b);
        if (a->shape[0] != b->shape[0]) detail::shape_error("concat_cols", a, b);
        const int m = a->shape[0], p = a->shape[1], q = b->shape[1];
        auto out = make_tensor({m, p + q});
        for (int i = 0; i < m; ++i) {
            std::copy_n(a->data.data() + static_cast<std::size_t>(i) * p, p,
                        out->data.data() + static_cast<std::size_t>(i) * (p + q));
            std::copy_n(b->data.data() + static_cast<std::size_t>(i) * q, q,
                        out->data.data() + static_cast<std::size_t>(i) * (p + q) + p);
        }
        record(out, [a, b, out, m, p, q] {
            a->ensure_grad();
            b->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const double* g = out->grad.data() + static_cast<std::size_t>(i) * (p + q);
                for (int j = 0; j < p; ++j) a->grad[static_cast<std::size_t>(i) * p + j] += g[j];
                for (int j = 0; j < q; ++j)
                    b->grad[static_cast<std::size_t>(i) * q + j] += g[p + j];
            }
        });
        return out;
    }

    TensorPtr concat_rows(TensorPtr a, TensorPtr b) {
        detail::require_2d("concat_rows", a);
        detail::require_2d("concat_rows", b);
        if (a->shape[1] != b->shape[1]) detail::shape_error("concat_rows", a, b);
        const int p = a->shape[0], q = b->shape[0], n = a->shape[1];
        auto out = make_tensor({p + q, n});
        std::copy(a->data.begin(), a->data.end(), out->data.begin());
        std::copy(b->data.begin(), b->data.end(), out->data.begin() + a->numel());
        record(out, [a, b, out] {
            a->ensure_grad();
            b->ensure_grad();
            for (std::size_t i = 0; i < a->numel(); ++i) a->grad[i] += out->grad[i];
            for (std::size_t i = 0; i < b->numel(); ++i)
                b->grad[i] += out->grad[a->numel() + i];
        });
        return out;
    }

    TensorPtr slice_cols(TensorPtr a, int c0, int c1) {
        detail::require_2d("slice_cols", a);
        if (c0 < 0 || c1 > a->shape[1] || c0 >= c1)
            throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) + "," +
                                        std::to_string(c1) + ") for " + shape_str(a->shape));
        const int m = a->shape[0], n = a->shape[1], w = c1 - c0;
        auto out = make_tensor({m, w});
        for (int i = 0; i < m; ++i)
            std::copy_n(a->data.data() + static_cast<std::size_t>(i) * n + c0, w,
                        out->data.data() + static_cast<std::size_t>(i) * w);
        record(out, [a, out, m, n, w, c0] {
            a->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < w; ++j)
                    a->grad[static_cast<std::size_t>(i) * n + c0 + j] +=
                        out->grad[static_cast<std::size_t>(i) * w + j];
        });
        return out;
    }

    /// Embedding lookup: rows of `table` [v,e] selected by `idx` -> [idx.size(),e].
    TensorPtr embed(TensorPtr table, const std::vector<int>& idx) {
        detail::require_2d("embed", table);
        const int v = table->shape[0], e = table->shape[1];
        const int m = static_cast<int>(idx.size());
        for (int i : idx)
            if (i < 0 || i >= v)
                throw std::invalid_argument("embed: index " + std::to_string(i) +
                                            " out of range for table " + shape_str(table->shape));
        auto out = make_tensor({m, e});
        for (int i = 0; i < m; ++i)
            std::copy_n(table->data.data() + static_cast<std::size_t>(idx[i]) * e, e,
                        out->data.data() + static_cast<std::size_t>(i) * e);
        record(out, [table, out, idx, m, e] {
            table->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < e; ++j)
                    table->grad[static_cast<std::size_t>(idx[i]) * e + j] +=
                        out->grad[static_cast<std::size_t>(i) * e + j];
        });
        return out;
    }

    /// Per-row element pick: out[i,0] = a[i, idx[i]].
    TensorPtr select_cols(TensorPtr a, const std::vector<int>& idx) {
        detail::require_2d("select_cols", a);
        const int m = a->shape[0], n = a->shape[1];
        if (static_cast<int>(idx.size()) != m)
            throw std::invalid_argument("select_cols: need one index per row");
        for (int j : idx)
            if (j < 0 || j >= n)
                throw std::invalid_argument("select_cols: index " + std::to_string(j) +
                                            " out of range for " + shape_str(a->shape));
        auto out = make_tensor({m, 1});
        for (int i = 0; i < m; ++i) out->data[i] = a->data[static_cast<std::size_t>(i) * n + idx[i]];
        record(out, [a, out, idx, m, n] {
            a->ensure_grad();
            for (int i = 0; i < m; ++i)
                a->grad[static_cast<std::size_t>(i) * n + idx[i]] += out->grad[i];
        });
        return out;
    }

    /// Tile a [n] or [1,n] row vector into [m,n].
    TensorPtr repeat_rows(TensorPtr v, int m) {
        const int n = static_cast<int>(v->numel());
        auto out = make_tensor({m, n});
        for (int i = 0; i < m; ++i)
            std::copy_n(v->data.data(), n, out->data.data() + static_cast<std::size_t>(i) * n);
        record(out, [v, out, m, n] {
            v->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    v->grad[j] += out->grad[static_cast<std::size_t>(i) * n + j];
        });
        return out;
    }

    // ---- spatial ops ----

    /// 3x3-style convolution via im2col + matmul. x is [b,c,h,w], weight is
    /// [c*kh*kw, cout], bias is [cout]; stride 1, zero padding `pad`.
    TensorPtr conv2d(TensorPtr x, TensorPtr weight, TensorPtr bias, int kh, int kw, int pad) {
        if (x->shape.size() != 4)
            throw std::invalid_argument("conv2d: expected [b,c,h,w] input, got " +
                                        shape_str(x->shape));
        const int b = x->shape[0], c = x->shape[1], h = x->shape[2], w = x->shape[3];
        const int patch = c * kh * kw;
        if (weight->shape.size() != 2 || weight->shape[0] != patch)
            throw std::invalid_argument("conv2d: weight " + shape_str(weight->shape) +
                                        " does not match patch size " + std::to_string(patch));
        const int cout = weight->shape[1];
        if (static_cast<int>(bias->numel()) != cout) detail::shape_error("conv2d", weight, bias);
        const int ho = h + 2 * pad - kh + 1;
        const int wo = w + 2 * pad - kw + 1;
        if (ho <= 0 || wo <= 0)
            throw std::invalid_argument("conv2d: kernel larger than padded input " +
                                        shape_str(x->shape));

        const int rows = b * ho * wo;
        auto cols = std::make_shared<std::vector<double>>(
            static_cast<std::size_t>(rows) * patch, 0.0);
        im2col(*x, *cols, kh, kw, pad, ho, wo);

        auto out = make_tensor({b, cout, ho, wo});
        // matmul into [rows, cout] laid out as (b, oy, ox) x cout, then
        // transpose channel-major into the output.
        std::vector<double> prod(static_cast<std::size_t>(rows) * cout, 0.0);
        detail::matmul_acc(cols->data(), weight->data.data(), prod.data(), rows, patch, cout);
        for (int bi = 0; bi < b; ++bi)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    const double* prow =
                        prod.data() +
                        (static_cast<std::size_t>(bi) * ho * wo + static_cast<std::size_t>(oy) * wo + ox) * cout;
                    for (int oc = 0; oc < cout; ++oc)
                        out->data[((static_cast<std::size_t>(bi) * cout + oc) * ho + oy) * wo + ox] =
                            prow[oc] + bias->data[oc];
                }

        record(out, [x, weight, bias, out, cols, b, c, h, w, kh, kw, pad, ho, wo, patch, cout] {
            x->ensure_grad();
            weight->ensure_grad();
            bias->ensure_grad();
            const int rows = b * ho * wo;
            // gradient back to [rows, cout] layout
            std::vector<double> gprod(static_cast<std::size_t>(rows) * cout);
            for (int bi = 0; bi < b; ++bi)
                for (int oy = 0; oy < ho; ++oy)
                    for (int ox = 0; ox < wo; ++ox) {
                        double* grow =
                            gprod.data() +
                            (static_cast<std::size_t>(bi) * ho * wo + static_cast<std::size_t>(oy) * wo + ox) * cout;
                        for (int oc = 0; oc < cout; ++oc) {
                            const double g =
                                out->grad[((static_cast<std::size_t>(bi) * cout + oc) * ho + oy) * wo + ox];
                            grow[oc] = g;
                            bias->grad[oc] += g;
                        }
                    }
            detail::matmul_at_acc(cols->data(), gprod.data(), weight->grad.data(), rows, patch,
                                  cout);
            std::vector<double> gcols(static_cast<std::size_t>(rows) * patch, 0.0);
            detail::matmul_bt_acc(gprod.data(), weight->data.data(), gcols.data(), rows, cout,
                                  patch);
            col2im_acc(gcols, *x, kh, kw, pad, ho, wo);
        });
        return out;
    }

    /// 2x2 max pooling with stride 2; input [b,c,h,w] with even h and w.
    TensorPtr maxpool2x2(TensorPtr x) {
        if (x->shape.size() != 4)
            throw std::invalid_argument("maxpool2x2: expected [b,c,h,w] input, got " +
                                        shape_str(x->shape));
        const int b = x->shape[0], c = x->shape[1], h = x->shape[2], w = x->shape[3];
        if (h % 2 != 0 || w % 2 != 0)
            throw std::invalid_argument("maxpool2x2: odd spatial size " + shape_str(x->shape));
        const int ho = h / 2, wo = w / 2;
        auto out = make_tensor({b, c, ho, wo});
        auto argmax = std::make_shared<std::vector<std::size_t>>(out->numel());
        std::size_t o = 0;
        for (int bi = 0; bi < b; ++bi)
            for (int ci = 0; ci < c; ++ci)
                for (int oy = 0; oy < ho; ++oy)
                    for (int ox = 0; ox < wo; ++ox, ++o) {
                        const std::size_t base =
                            ((static_cast<std::size_t>(bi) * c + ci) * h + 2 * oy) * w + 2 * ox;
                        std::size_t best = base;
                        double bv = x->data[base];
                        for (std::size_t cand : {base + 1, base + w, base + w + 1})
                            if (x->data[cand] > bv) bv = x->data[best = cand];
                        out->data[o] = bv;
                        (*argmax)[o] = best;
                    }
        record(out, [x, out, argmax] {
            x->ensure_grad();
            for (std::size_t i = 0; i < out->numel(); ++i)
                x->grad[(*argmax)[i]] += out->grad[i];
        });
        return out;
    }

private:
    /// Register a backward closure for `out`. Nodes whose output never
    /// received a gradient (dead branches of the graph) are skipped: all
    /// of their contributions would be zero.
    void record(const TensorPtr& out, std::function<void()> fn) {
        tape_.push_back([out, fn = std::move(fn)] {
            if (out->grad.empty()) return;
            fn();
        });
    }

    static void im2col(const Tensor& x, std::vector<double>& cols, int kh, int kw, int pad,
                       int ho, int wo) {
        const int b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
        const int patch = c * kh * kw;
        for (int bi = 0; bi < b; ++bi)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    double* row = cols.data() +
                                  (static_cast<std::size_t>(bi) * ho * wo +
                                   static_cast<std::size_t>(oy) * wo + ox) *
                                      patch;
                    for (int ci = 0; ci < c; ++ci)
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = oy + ky - pad;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ox + kx - pad;
                                *row++ = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                             ? x.data[((static_cast<std::size_t>(bi) * c + ci) * h +
                                                       iy) *
                                                          w +
                                                      ix]
                                             : 0.0;
                            }
                        }
                }
    }

    static void col2im_acc(const std::vector<double>& gcols, Tensor& x, int kh, int kw, int pad,
                           int ho, int wo) {
        const int b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
        const int patch = c * kh * kw;
        for (int bi = 0; bi < b; ++bi)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    const double* row = gcols.data() +
                                        (static_cast<std::size_t>(bi) * ho * wo +
                                         static_cast<std::size_t>(oy) * wo + ox) *
                                            patch;
                    for (int ci = 0; ci < c; ++ci)
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = oy + ky - pad;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ox + kx - pad;
                                if (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                    x.grad[((static_cast<std::size_t>(bi) * c + ci) * h + iy) * w +
                                           ix] += row[static_cast<std::size_t>(ci) * kh * kw +
                                                      static_cast<std::size_t>(ky) * kw + kx];
                            }
                        }
                }
    }

    std::vector<std::function<void()>> tape_;
};

}  // namespace adaptaug
