#include "swiftdiff/autodiff.hpp"

#include <cmath>

#include "swiftdiff/errors.hpp"

namespace swiftdiff {

Value Tape::input(Tensor t) {
    nodes_.push_back(Node{std::move(t), Tensor(), {}, nullptr, false});
    return Value(this, nodes_.size() - 1);
}

Value Tape::param(Tensor t) {
    nodes_.push_back(Node{std::move(t), Tensor(), {}, nullptr, true});
    return Value(this, nodes_.size() - 1);
}

size_t Tape::push(Tensor value, std::vector<size_t> parents, BackFn back) {
    bool req = false;
    for (size_t p : parents) req = req || nodes_[p].requires_grad;
    nodes_.push_back(Node{std::move(value), Tensor(), std::move(parents),
                          req ? std::move(back) : BackFn(), req});
    return nodes_.size() - 1;
}

void Tape::accumulate_grad(size_t idx, const Tensor& g) {
    Node& n = nodes_[idx];
    if (!n.requires_grad) return;
    if (n.grad.numel() == 0) {
        n.grad = g;
        return;
    }
    for (int64_t i = 0; i < g.numel(); ++i) n.grad.at(i) += g.at(i);
}

void Tape::backward(const Value& scalar_out) {
    if (scalar_out.tape() != this) throw ShapeError("backward: value from another tape");
    size_t root = scalar_out.index();
    if (nodes_[root].value.numel() != 1) {
        throw ShapeError("backward: output is not scalar, shape " +
                         nodes_[root].value.shape_str());
    }
    if (!nodes_[root].requires_grad) return;
    nodes_[root].grad = Tensor(nodes_[root].value.shape());
    nodes_[root].grad.at(0) = 1.0;
    for (size_t i = root + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.back && n.grad.numel() != 0) n.back(*this, i);
    }
}

Tensor Tape::grad(const Value& v) const {
    const Node& n = nodes_[v.index()];
    if (n.grad.numel() == 0) return Tensor(n.value.shape());
    return n.grad;
}

void Tape::reset() { nodes_.clear(); }

namespace ad {

namespace {

Tape& same_tape(const Value& a, const Value& b) {
    if (a.tape() == nullptr || a.tape() != b.tape()) {
        throw ShapeError("op: operands are not on the same tape");
    }
    return *a.tape();
}

// Adds dY into a sub-rectangle of the parent's gradient.
void accumulate_slice_grad(Tape& t, size_t parent, const Tensor& dy, int axis, int64_t start) {
    Tape::Node& pn = t.node(parent);
    if (!pn.requires_grad) return;
    if (pn.grad.numel() == 0) pn.grad = Tensor(pn.value.shape());
    int64_t pc = pn.value.cols();
    if (axis == 0) {
        for (int64_t i = 0; i < dy.rows(); ++i)
            for (int64_t j = 0; j < dy.cols(); ++j) pn.grad.at(start + i, j) += dy.at(i, j);
    } else {
        for (int64_t i = 0; i < dy.rows(); ++i)
            for (int64_t j = 0; j < dy.cols(); ++j)
                pn.grad.raw()[static_cast<size_t>(i * pc + start + j)] += dy.at(i, j);
    }
}

}  // namespace

Value matmul(const Value& a, const Value& b) {
    Tape& t = same_tape(a, b);
    Tensor out = kernels::matmul(a.tensor(), b.tensor());
    size_t ia = a.index(), ib = b.index();
    size_t idx = t.push(std::move(out), {ia, ib}, [ia, ib](Tape& tp, size_t self) {
        const Tensor& dy = tp.node(self).grad;
        tp.accumulate_grad(ia, kernels::matmul(dy, kernels::transpose(tp.node(ib).value)));
        tp.accumulate_grad(ib, kernels::matmul(kernels::transpose(tp.node(ia).value), dy));
    });
    return t.handle(idx);
}

Value add(const Value& a, const Value& b) {
    Tape& t = same_tape(a, b);
    Tensor out = kernels::add(a.tensor(), b.tensor());
    size_t ia = a.index(), ib = b.index();
    size_t idx = t.push(std::move(out), {ia, ib}, [ia, ib](Tape& tp, size_t self) {
        const Tensor& dy = tp.node(self).grad;
        tp.accumulate_grad(ia, dy);
        tp.accumulate_grad(ib, kernels::reduce_to_shape(dy, tp.node(ib).value.shape()));
    });
    return t.handle(idx);
}

Value sub(const Value& a, const Value& b) {
    Tape& t = same_tape(a, b);
    Tensor out = kernels::sub(a.tensor(), b.tensor());
    size_t ia = a.index(), ib = b.index();
    size_t idx = t.push(std::move(out), {ia, ib}, [ia, ib](Tape& tp, size_t self) {
        const Tensor& dy = tp.node(self).grad;
        tp.accumulate_grad(ia, dy);
        tp.accumulate_grad(
            ib, kernels::scale(kernels::reduce_to_shape(dy, tp.node(ib).value.shape()), -1.0));
    });
    return t.handle(idx);
}

Value mul(const Value& a, const Value& b) {
    Tape& t = same_tape(a, b);
    Tensor out = kernels::mul(a.tensor(), b.tensor());
    size_t ia = a.index(), ib = b.index();
    size_t idx = t.push(std::move(out), {ia, ib}, [ia, ib](Tape& tp, size_t self) {
        const Tensor& dy = tp.node(self).grad;
        const Tensor& av = tp.node(ia).value;
        const Tensor& bv = tp.node(ib).value;
        tp.accumulate_grad(ia, kernels::mul(dy, bv));
        tp.accumulate_grad(ib, kernels::reduce_to_shape(kernels::mul(dy, av), bv.shape()));
    });
    return t.handle(idx);
}

Value scale(const Value& a, double s) {
    Tape& t = *a.tape();
    Tensor out = kernels::scale(a.tensor(), s);
    size_t ia = a.index();
    size_t idx = t.push(std::move(out), {ia}, [ia, s](Tape& tp, size_t self) {
        tp.accumulate_grad(ia, kernels::scale(tp.node(self).grad, s));
    });
    return t.handle(idx);
}

Value transpose(const Value& a) {
    Tape& t = *a.tape();
    Tensor out = kernels::transpose(a.tensor());
    size_t ia = a.index();
    size_t idx = t.push(std::move(out), {ia}, [ia](Tape& tp, size_t self) {
        tp.accumulate_grad(ia, kernels::transpose(tp.node(self).grad));
    });
    return t.handle(idx);
}

Value batched_transpose(const Value& a, int64_t batch) {
    Tape& t = *a.tape();
    Tensor out = kernels::batched_transpose(a.tensor(), batch);
    size_t ia = a.index();
    size_t idx = t.push(std::move(out), {ia}, [ia, batch](Tape& tp, size_t self) {
        tp.accumulate_grad(ia, kernels::batched_transpose(tp.node(self).grad, batch));
    });
    return t.handle(idx);
}

Value reshape(const Value& a, std::vector<int64_t> shape) {
    Tape& t = *a.tape();
    Tensor out = kernels::reshape(a.tensor(), shape);
    size_t ia = a.index();
    size_t idx = t.push(std::move(out), {ia}, [ia](Tape& tp, size_t self) {
        tp.accumulate_grad(
            ia, kernels::reshape(tp.node(self).grad, tp.node(ia).value.shape()));
    });
    return t.handle(idx);
}

Value concat(const Value& a, const Value& b, int axis) {
    Tape& t = same_tape(a, b);
    Tensor out = kernels::concat(a.tensor(), b.tensor(), axis);
    size_t ia = a.index(), ib = b.index();
    size_t idx = t.push(std::move(out), {ia, ib}, [ia, ib, axis](Tape& tp, size_t self) {
        const Tensor& dy = tp.node(self).grad;
        const Tensor& av = tp.node(ia).value;
        int64_t adim = axis == 0 ? av.rows() : av.cols();
        int64_t bdim = axis == 0 ? tp.node(ib).value.rows() : tp.node(ib).value.cols();
        tp.accumulate_grad(ia, kernels::slice(dy, axis, 0, adim));
        tp.accumulate_grad(ib, kernels::slice(dy, axis, adim, bdim));
    });
    return t.handle(idx);
}

Value slice(const Value& a, int axis, int64_t start, int64_t len) {
    Tape& t = *a.tape();
    Tensor out = kernels::slice(a.tensor(), axis, start, len);
    size_t ia = a.index();
    size_t idx = t.push(std::move(out), {ia}, [ia, axis, start](Tape& tp, size_t self) {
        accumulate_slice_grad(tp, ia, tp.node(self).grad, axis, start);
    });
    return t.handle(idx);
}

Value mean_all(const Value& a) {
    Tape& t = *a.tape();
    Tensor out = kernels::mean_all(a.tensor());
    size_t ia = a.index();
    size_t idx = t.push(std::move(out), {ia}, [ia](Tape& tp, size_t self) {
        const Tensor& av = tp.node(ia).value;
        double g = tp.node(self).grad.at(0) / static_cast<double>(av.numel());
        tp.accumulate_grad(ia, Tensor::full(av.shape(), g));
    });
    return t.handle(idx);
}

Value sum_all(const Value& a) {
    Tape& t = *a.tape();
    Tensor out = kernels::sum_all(a.tensor());
    size_t ia = a.index();
    size_t idx = t.push(std::move(out), {ia}, [ia](Tape& tp, size_t self) {
        tp.accumulate_grad(
            ia, Tensor::full(tp.node(ia).value.shape(), tp.node(self).grad.at(0)));
    });
    return t.handle(idx);
}

Value rows_mean(const Value& a) {
    Tape& t = *a.tape();
    Tensor out = kernels::rows_mean(a.tensor());
    size_t ia = a.index();
    size_t idx = t.push(std::move(out), {ia}, [ia](Tape& tp, size_t self) {
        const Tensor& dy = tp.node(self).grad;
        const Tensor& av = tp.node(ia).value;
        Tensor da(av.shape());
        double inv = 1.0 / static_cast<double>(av.cols());
        for (int64_t i = 0; i < av.rows(); ++i)
            for (int64_t j = 0; j < av.cols(); ++j) da.at(i, j) = dy.at(i, 0) * inv;
        tp.accumulate_grad(ia, da);
    });
    return t.handle(idx);
}

Value sigmoid(const Value& a) {
    Tape& t = *a.tape();
    Tensor out = kernels::sigmoid(a.tensor());
    size_t ia = a.index();
    size_t idx = t.push(std::move(out), {ia}, [ia](Tape& tp, size_t self) {
        const Tensor& y = tp.node(self).value;
        const Tensor& dy = tp.node(self).grad;
        Tensor da(y.shape());
        for (int64_t i = 0; i < y.numel(); ++i)
            da.at(i) = dy.at(i) * y.at(i) * (1.0 - y.at(i));
        tp.accumulate_grad(ia, da);
    });
    return t.handle(idx);
}

Value gelu(const Value& a) {
    Tape& t = *a.tape();
    Tensor out = kernels::gelu(a.tensor());
    size_t ia = a.index();
    size_t idx = t.push(std::move(out), {ia}, [ia](Tape& tp, size_t self) {
        Tensor dg = kernels::gelu_grad(tp.node(ia).value);
        tp.accumulate_grad(ia, kernels::mul(tp.node(self).grad, dg));
    });
    return t.handle(idx);
}

Value softmax_rows(const Value& a) {
    Tape& t = *a.tape();
    Tensor out = kernels::softmax_rows(a.tensor());
    size_t ia = a.index();
    size_t idx = t.push(std::move(out), {ia}, [ia](Tape& tp, size_t self) {
        const Tensor& y = tp.node(self).value;
        const Tensor& dy = tp.node(self).grad;
        Tensor da(y.shape());
        for (int64_t i = 0; i < y.rows(); ++i) {
            double dot = 0.0;
            for (int64_t j = 0; j < y.cols(); ++j) dot += dy.at(i, j) * y.at(i, j);
            for (int64_t j = 0; j < y.cols(); ++j)
                da.at(i, j) = y.at(i, j) * (dy.at(i, j) - dot);
        }
        tp.accumulate_grad(ia, da);
    });
    return t.handle(idx);
}

Value layernorm_rows(const Value& x, const Value& gamma, const Value& beta, double eps) {
    Tape& t = same_tape(x, gamma);
    same_tape(gamma, beta);
    kernels::LayerNormResult r =
        kernels::layernorm_rows(x.tensor(), gamma.tensor(), beta.tensor(), eps);
    size_t ix = x.index(), ig = gamma.index(), ib = beta.index();
    Tensor xhat = std::move(r.xhat);
    Tensor inv_std = std::move(r.inv_std);
    size_t idx = t.push(std::move(r.y), {ix, ig, ib},
                        [ix, ig, ib, xhat, inv_std](Tape& tp, size_t self) {
        const Tensor& dy = tp.node(self).grad;
        const Tensor& gv = tp.node(ig).value;
        int64_t rows = dy.rows(), c = dy.cols();
        Tensor dgamma({1, c});
        Tensor dbeta({1, c});
        Tensor dx(dy.shape());
        for (int64_t i = 0; i < rows; ++i) {
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (int64_t j = 0; j < c; ++j) {
                double dxh = dy.at(i, j) * gv.at(0, j);
                mean_dxh += dxh;
                mean_dxh_xh += dxh * xhat.at(i, j);
                dgamma.at(0, j) += dy.at(i, j) * xhat.at(i, j);
                dbeta.at(0, j) += dy.at(i, j);
            }
            mean_dxh /= static_cast<double>(c);
            mean_dxh_xh /= static_cast<double>(c);
            for (int64_t j = 0; j < c; ++j) {
                double dxh = dy.at(i, j) * gv.at(0, j);
                dx.at(i, j) =
                    inv_std.at(i, 0) * (dxh - mean_dxh - xhat.at(i, j) * mean_dxh_xh);
            }
        }
        tp.accumulate_grad(ix, dx);
        tp.accumulate_grad(ig, dgamma);
        tp.accumulate_grad(ib, dbeta);
    });
    return t.handle(idx);
}

Value attention(const Value& q, const Value& k, const Value& v, int64_t batch, int64_t heads) {
    Tape& t = same_tape(q, k);
    same_tape(k, v);
    kernels::AttentionResult r = kernels::attention(q.tensor(), k.tensor(), v.tensor(),
                                                    batch, heads);
    size_t iq = q.index(), ik = k.index(), iv = v.index();
    Tensor probs = std::move(r.probs);
    size_t idx = t.push(std::move(r.out), {iq, ik, iv},
                        [iq, ik, iv, batch, heads, probs](Tape& tp, size_t self) {
        kernels::AttentionGrads g = kernels::attention_backward(
            tp.node(iq).value, tp.node(ik).value, tp.node(iv).value, probs,
            tp.node(self).grad, batch, heads);
        tp.accumulate_grad(iq, g.dq);
        tp.accumulate_grad(ik, g.dk);
        tp.accumulate_grad(iv, g.dv);
    });
    return t.handle(idx);
}

}  // namespace ad

double gradcheck(const std::function<Value(Tape&, Value)>& f, const Tensor& x, double h) {
    if (!(h >= 1e-6 && h <= 1e-3)) {
        throw ConfigError("gradcheck: step h must lie in [1e-6, 1e-3]");
    }

    Tape tape;
    Value vx = tape.param(x);
    Value out = f(tape, vx);
    if (out.tensor().numel() != 1) {
        throw ShapeError("gradcheck: function output is not scalar, shape " +
                         out.tensor().shape_str());
    }
    tape.backward(out);
    Tensor analytic = tape.grad(vx);

    auto eval = [&](const Tensor& xt) {
        Tape tp;
        Value v = tp.param(xt);
        Value o = f(tp, v);
        double val = o.tensor().at(0);
        if (!std::isfinite(val)) throw NumericError("gradcheck: non-finite probe value");
        return val;
    };

    double max_rel = 0.0;
    Tensor probe = x;
    for (int64_t i = 0; i < x.numel(); ++i) {
        double orig = probe.at(i);
        probe.at(i) = orig + h;
        double fp = eval(probe);
        probe.at(i) = orig - h;
        double fm = eval(probe);
        probe.at(i) = orig;
        double fd = (fp - fm) / (2.0 * h);
        double a = analytic.at(i);
        double rel = std::abs(a - fd) / std::max(1.0, std::abs(a));
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace swiftdiff
