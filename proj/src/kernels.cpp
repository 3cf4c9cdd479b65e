#include "swiftdiff/kernels.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstring>

#include "swiftdiff/errors.hpp"

namespace swiftdiff::kernels {

namespace {

using EigenMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EigenMat>;
using Map = Eigen::Map<EigenMat>;

void require_2d(const Tensor& t, const char* op) {
    if (!t.is_2d()) {
        throw ShapeError(std::string(op) + ": expected 2-D tensor, got " + t.shape_str());
    }
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                     b.shape_str());
}

enum class Broadcast { none, row, col };  // row: b is (1,C); col: b is (R,1)

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.same_shape(b)) return Broadcast::none;
    if (a.is_2d() && b.is_2d()) {
        if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
        if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::col;
    }
    shape_fail(op, a, b);
}

template <typename F>
Tensor elementwise_binary(const Tensor& a, const Tensor& b, const char* op, F f) {
    Broadcast bc = broadcast_kind(a, b, op);
    Tensor out(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    if (bc == Broadcast::none) {
        for (int64_t i = 0; i < a.numel(); ++i) po[i] = f(pa[i], pb[i]);
    } else {
        int64_t r = a.rows(), c = a.cols();
        for (int64_t i = 0; i < r; ++i) {
            for (int64_t j = 0; j < c; ++j) {
                double bv = (bc == Broadcast::row) ? pb[j] : pb[i];
                po[i * c + j] = f(pa[i * c + j], bv);
            }
        }
    }
    ensure_finite(out, op);
    return out;
}

}  // namespace

void ensure_finite(const Tensor& t, const char* op) {
    if (!t.all_finite()) {
        throw NumericError(std::string(op) + ": non-finite value produced (shape " +
                           t.shape_str() + ")");
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a.cols() != b.rows()) shape_fail("matmul", a, b);
    Tensor out({a.rows(), b.cols()});
    ConstMap ma(a.data(), a.rows(), a.cols());
    ConstMap mb(b.data(), b.rows(), b.cols());
    Map mo(out.data(), out.rows(), out.cols());
    mo.noalias() = ma * mb;
    ensure_finite(out, "matmul");
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    return elementwise_binary(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return elementwise_binary(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return elementwise_binary(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double s) {
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) * s;
    ensure_finite(out, "scale");
    return out;
}

Tensor reduce_to_shape(const Tensor& grad, const std::vector<int64_t>& shape) {
    if (grad.shape() == shape) return grad;
    Tensor out(shape);
    int64_t r = grad.rows(), c = grad.cols();
    if (shape.size() == 2 && shape[0] == 1 && shape[1] == c) {
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) out.at(0, j) += grad.at(i, j);
        return out;
    }
    if (shape.size() == 2 && shape[1] == 1 && shape[0] == r) {
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) out.at(i, 0) += grad.at(i, j);
        return out;
    }
    throw ShapeError("reduce_to_shape: cannot reduce " + grad.shape_str() + " to " +
                     shape_str(shape));
}

Tensor transpose(const Tensor& a) {
    require_2d(a, "transpose");
    Tensor out({a.cols(), a.rows()});
    for (int64_t i = 0; i < a.rows(); ++i)
        for (int64_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
    return out;
}

Tensor vstack(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("vstack: no tensors");
    int64_t c = parts[0].cols();
    int64_t r = 0;
    for (const Tensor& t : parts) {
        if (t.cols() != c) shape_fail("vstack", parts[0], t);
        r += t.rows();
    }
    Tensor out({r, c});
    double* po = out.data();
    for (const Tensor& t : parts) {
        std::memcpy(po, t.data(), sizeof(double) * t.numel());
        po += t.numel();
    }
    return out;
}

Tensor batched_transpose(const Tensor& a, int64_t batch) {
    require_2d(a, "batched_transpose");
    if (batch <= 0 || a.rows() % batch != 0) {
        throw ShapeError("batched_transpose: rows " + std::to_string(a.rows()) +
                         " not divisible by batch " + std::to_string(batch));
    }
    int64_t t = a.rows() / batch;
    int64_t c = a.cols();
    Tensor out({batch * c, t});
    const double* pa = a.data();
    double* po = out.data();
    for (int64_t b = 0; b < batch; ++b) {
        const double* block_in = pa + b * t * c;
        double* block_out = po + b * c * t;
        for (int64_t i = 0; i < t; ++i)
            for (int64_t j = 0; j < c; ++j) block_out[j * t + i] = block_in[i * c + j];
    }
    return out;
}

Tensor reshape(const Tensor& a, std::vector<int64_t> shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot reshape " + a.shape_str() + " to " +
                         shape_str(shape));
    }
    return Tensor(std::move(shape), a.raw());
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
    require_2d(a, "concat");
    require_2d(b, "concat");
    if (axis == 0) {
        if (a.cols() != b.cols()) shape_fail("concat", a, b);
        Tensor out({a.rows() + b.rows(), a.cols()});
        std::memcpy(out.data(), a.data(), sizeof(double) * a.numel());
        std::memcpy(out.data() + a.numel(), b.data(), sizeof(double) * b.numel());
        return out;
    }
    if (axis == 1) {
        if (a.rows() != b.rows()) shape_fail("concat", a, b);
        Tensor out({a.rows(), a.cols() + b.cols()});
        for (int64_t i = 0; i < a.rows(); ++i) {
            std::memcpy(out.data() + i * out.cols(), a.data() + i * a.cols(),
                        sizeof(double) * a.cols());
            std::memcpy(out.data() + i * out.cols() + a.cols(), b.data() + i * b.cols(),
                        sizeof(double) * b.cols());
        }
        return out;
    }
    throw ShapeError("concat: axis must be 0 or 1");
}

Tensor slice(const Tensor& a, int axis, int64_t start, int64_t len) {
    require_2d(a, "slice");
    if (axis != 0 && axis != 1) throw ShapeError("slice: axis must be 0 or 1");
    int64_t dim = axis == 0 ? a.rows() : a.cols();
    if (start < 0 || len < 0 || start + len > dim) {
        throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") out of bounds for " + a.shape_str());
    }
    if (axis == 0) {
        Tensor out({len, a.cols()});
        std::memcpy(out.data(), a.data() + start * a.cols(), sizeof(double) * out.numel());
        return out;
    }
    Tensor out({a.rows(), len});
    for (int64_t i = 0; i < a.rows(); ++i) {
        std::memcpy(out.data() + i * len, a.data() + i * a.cols() + start,
                    sizeof(double) * len);
    }
    return out;
}

Tensor mean_all(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean_all: empty tensor");
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) s += a.at(i);
    Tensor out = Tensor::scalar(s / static_cast<double>(a.numel()));
    ensure_finite(out, "mean");
    return out;
}

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) s += a.at(i);
    Tensor out = Tensor::scalar(s);
    ensure_finite(out, "sum");
    return out;
}

Tensor rows_mean(const Tensor& a) {
    require_2d(a, "rows_mean");
    if (a.cols() == 0) throw ShapeError("rows_mean: zero columns");
    Tensor out({a.rows(), 1});
    for (int64_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < a.cols(); ++j) s += a.at(i, j);
        out.at(i, 0) = s / static_cast<double>(a.cols());
    }
    ensure_finite(out, "rows_mean");
    return out;
}

Tensor sigmoid(const Tensor& a) {
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) {
        double x = a.at(i);
        out.at(i) = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                             : std::exp(x) / (1.0 + std::exp(x));
    }
    ensure_finite(out, "sigmoid");
    return out;
}

Tensor gelu(const Tensor& a) {
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) {
        double x = a.at(i);
        out.at(i) = 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
    }
    ensure_finite(out, "gelu");
    return out;
}

Tensor gelu_grad(const Tensor& x) {
    Tensor out(x.shape());
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    for (int64_t i = 0; i < x.numel(); ++i) {
        double v = x.at(i);
        double phi = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
        double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        out.at(i) = phi + v * pdf;
    }
    return out;
}

Tensor softmax_rows(const Tensor& a) {
    require_2d(a, "softmax");
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.rows(); ++i) {
        double mx = a.at(i, 0);
        for (int64_t j = 1; j < a.cols(); ++j) mx = std::max(mx, a.at(i, j));
        double s = 0.0;
        for (int64_t j = 0; j < a.cols(); ++j) {
            double e = std::exp(a.at(i, j) - mx);
            out.at(i, j) = e;
            s += e;
        }
        for (int64_t j = 0; j < a.cols(); ++j) out.at(i, j) /= s;
    }
    ensure_finite(out, "softmax");
    return out;
}

LayerNormResult layernorm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                               double eps) {
    require_2d(x, "layernorm");
    if (gamma.shape() != std::vector<int64_t>{1, x.cols()} || !gamma.same_shape(beta)) {
        throw ShapeError("layernorm: gamma/beta must be (1, " + std::to_string(x.cols()) +
                         "), got " + gamma.shape_str() + " and " + beta.shape_str());
    }
    LayerNormResult r{Tensor(x.shape()), Tensor(x.shape()), Tensor({x.rows(), 1})};
    int64_t c = x.cols();
    for (int64_t i = 0; i < x.rows(); ++i) {
        double mu = 0.0;
        for (int64_t j = 0; j < c; ++j) mu += x.at(i, j);
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            double d = x.at(i, j) - mu;
            var += d * d;
        }
        var /= static_cast<double>(c);
        double inv = 1.0 / std::sqrt(var + eps);
        r.inv_std.at(i, 0) = inv;
        for (int64_t j = 0; j < c; ++j) {
            double xh = (x.at(i, j) - mu) * inv;
            r.xhat.at(i, j) = xh;
            r.y.at(i, j) = xh * gamma.at(0, j) + beta.at(0, j);
        }
    }
    ensure_finite(r.y, "layernorm");
    return r;
}

AttentionResult attention(const Tensor& q, const Tensor& k, const Tensor& v, int64_t batch,
                          int64_t heads) {
    require_2d(q, "attention");
    if (!q.same_shape(k) || !q.same_shape(v)) shape_fail("attention", q, k);
    int64_t d = q.cols();
    if (heads <= 0 || d % heads != 0) {
        throw ShapeError("attention: d_model " + std::to_string(d) +
                         " not divisible by heads " + std::to_string(heads));
    }
    if (batch <= 0 || q.rows() % batch != 0) {
        throw ShapeError("attention: rows not divisible by batch");
    }
    int64_t t = q.rows() / batch;
    int64_t dh = d / heads;
    double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    AttentionResult r{Tensor({batch * t, d}), Tensor({batch * heads * t, t})};
    std::vector<double> scores(static_cast<size_t>(t) * t);
    for (int64_t b = 0; b < batch; ++b) {
        for (int64_t h = 0; h < heads; ++h) {
            const double* qb = q.data() + b * t * d + h * dh;
            const double* kb = k.data() + b * t * d + h * dh;
            const double* vb = v.data() + b * t * d + h * dh;
            double* pb = r.probs.data() + (b * heads + h) * t * t;
            double* ob = r.out.data() + b * t * d + h * dh;
            for (int64_t i = 0; i < t; ++i) {
                for (int64_t j = 0; j < t; ++j) {
                    double s = 0.0;
                    for (int64_t e = 0; e < dh; ++e) s += qb[i * d + e] * kb[j * d + e];
                    scores[static_cast<size_t>(i * t + j)] = s * inv_scale;
                }
            }
            for (int64_t i = 0; i < t; ++i) {
                double mx = scores[static_cast<size_t>(i * t)];
                for (int64_t j = 1; j < t; ++j)
                    mx = std::max(mx, scores[static_cast<size_t>(i * t + j)]);
                double ssum = 0.0;
                for (int64_t j = 0; j < t; ++j) {
                    double e = std::exp(scores[static_cast<size_t>(i * t + j)] - mx);
                    pb[i * t + j] = e;
                    ssum += e;
                }
                for (int64_t j = 0; j < t; ++j) pb[i * t + j] /= ssum;
            }
            for (int64_t i = 0; i < t; ++i) {
                for (int64_t e = 0; e < dh; ++e) {
                    double s = 0.0;
                    for (int64_t j = 0; j < t; ++j) s += pb[i * t + j] * vb[j * d + e];
                    ob[i * d + e] = s;
                }
            }
        }
    }
    ensure_finite(r.out, "attention");
    return r;
}

AttentionGrads attention_backward(const Tensor& q, const Tensor& k, const Tensor& v,
                                  const Tensor& probs, const Tensor& dout, int64_t batch,
                                  int64_t heads) {
    int64_t d = q.cols();
    int64_t t = q.rows() / batch;
    int64_t dh = d / heads;
    double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    AttentionGrads g{Tensor(q.shape()), Tensor(k.shape()), Tensor(v.shape())};
    std::vector<double> dp(static_cast<size_t>(t) * t);
    std::vector<double> ds(static_cast<size_t>(t) * t);
    for (int64_t b = 0; b < batch; ++b) {
        for (int64_t h = 0; h < heads; ++h) {
            const double* qb = q.data() + b * t * d + h * dh;
            const double* kb = k.data() + b * t * d + h * dh;
            const double* vb = v.data() + b * t * d + h * dh;
            const double* pb = probs.data() + (b * heads + h) * t * t;
            const double* dob = dout.data() + b * t * d + h * dh;
            double* dqb = g.dq.data() + b * t * d + h * dh;
            double* dkb = g.dk.data() + b * t * d + h * dh;
            double* dvb = g.dv.data() + b * t * d + h * dh;

            // dV += P^T dO ; dP = dO V^T
            for (int64_t j = 0; j < t; ++j) {
                for (int64_t e = 0; e < dh; ++e) {
                    double s = 0.0;
                    for (int64_t i = 0; i < t; ++i) s += pb[i * t + j] * dob[i * d + e];
                    dvb[j * d + e] = s;
                }
            }
            for (int64_t i = 0; i < t; ++i) {
                for (int64_t j = 0; j < t; ++j) {
                    double s = 0.0;
                    for (int64_t e = 0; e < dh; ++e) s += dob[i * d + e] * vb[j * d + e];
                    dp[static_cast<size_t>(i * t + j)] = s;
                }
            }
            // dS = P ∘ (dP − rowsum(dP ∘ P))
            for (int64_t i = 0; i < t; ++i) {
                double row = 0.0;
                for (int64_t j = 0; j < t; ++j)
                    row += dp[static_cast<size_t>(i * t + j)] * pb[i * t + j];
                for (int64_t j = 0; j < t; ++j) {
                    ds[static_cast<size_t>(i * t + j)] =
                        pb[i * t + j] * (dp[static_cast<size_t>(i * t + j)] - row);
                }
            }
            // dQ = dS K / sqrt(dh) ; dK = dS^T Q / sqrt(dh)
            for (int64_t i = 0; i < t; ++i) {
                for (int64_t e = 0; e < dh; ++e) {
                    double s = 0.0;
                    for (int64_t j = 0; j < t; ++j)
                        s += ds[static_cast<size_t>(i * t + j)] * kb[j * d + e];
                    dqb[i * d + e] = s * inv_scale;
                }
            }
            for (int64_t j = 0; j < t; ++j) {
                for (int64_t e = 0; e < dh; ++e) {
                    double s = 0.0;
                    for (int64_t i = 0; i < t; ++i)
                        s += ds[static_cast<size_t>(i * t + j)] * qb[i * d + e];
                    dkb[j * d + e] = s * inv_scale;
                }
            }
        }
    }
    return g;
}

}  // namespace swiftdiff::kernels
