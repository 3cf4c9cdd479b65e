#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "swiftdiff/kernels.hpp"
#include "swiftdiff/tensor.hpp"

namespace swiftdiff {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid until the tape is reset.
class Value {
public:
    Value() = default;
    Tape* tape() const { return tape_; }
    size_t index() const { return idx_; }
    const Tensor& tensor() const;

private:
    friend class Tape;
    Value(Tape* t, size_t i) : tape_(t), idx_(i) {}
    Tape* tape_ = nullptr;
    size_t idx_ = static_cast<size_t>(-1);
};

// Records primitive ops in construction order; backward replays them in exact
// reverse order, accumulating gradients additively on fan-out.
class Tape {
public:
    using BackFn = std::function<void(Tape&, size_t)>;

    struct Node {
        Tensor value;
        Tensor grad;  // empty until first accumulation
        std::vector<size_t> parents;
        BackFn back;
        bool requires_grad = false;
    };

    Value input(Tensor t);  // leaf without gradient tracking
    Value param(Tensor t);  // leaf with gradient tracking

    // Seeds d(scalar)/d(scalar) = 1 and sweeps the tape in reverse.
    void backward(const Value& scalar_out);

    const Tensor& value(const Value& v) const { return nodes_[v.index()].value; }
    // Gradient of the last backward() wrt a leaf; zeros if the leaf was unused.
    Tensor grad(const Value& v) const;

    size_t node_count() const { return nodes_.size(); }
    void reset();

    // Op-implementation interface.
    size_t push(Tensor value, std::vector<size_t> parents, BackFn back);
    void accumulate_grad(size_t idx, const Tensor& g);
    Node& node(size_t idx) { return nodes_[idx]; }
    Value handle(size_t idx) { return Value(this, idx); }

private:
    std::vector<Node> nodes_;
};

inline const Tensor& Value::tensor() const { return tape_->value(*this); }

namespace ad {

Value matmul(const Value& a, const Value& b);
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value scale(const Value& a, double s);
Value transpose(const Value& a);
Value batched_transpose(const Value& a, int64_t batch);
Value reshape(const Value& a, std::vector<int64_t> shape);
Value concat(const Value& a, const Value& b, int axis);
Value slice(const Value& a, int axis, int64_t start, int64_t len);
Value mean_all(const Value& a);
Value sum_all(const Value& a);
Value rows_mean(const Value& a);
Value sigmoid(const Value& a);
Value gelu(const Value& a);
Value softmax_rows(const Value& a);
Value layernorm_rows(const Value& x, const Value& gamma, const Value& beta, double eps);
Value attention(const Value& q, const Value& k, const Value& v, int64_t batch, int64_t heads);

}  // namespace ad

// Max over coordinates of |analytic − central-difference| / max(1, |analytic|)
// for a scalar-valued function of one tensor. h must lie in [1e-6, 1e-3].
double gradcheck(const std::function<Value(Tape&, Value)>& f, const Tensor& x, double h);

}  // namespace swiftdiff
