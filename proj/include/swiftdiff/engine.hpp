#pragma once

#include <cstdint>
#include <unordered_map>

#include "swiftdiff/autodiff.hpp"
#include "swiftdiff/kernels.hpp"
#include "swiftdiff/tensor.hpp"

namespace swiftdiff {

// Network forwards are written once against this implicit interface and run
// either eagerly (no tape, used for frozen teachers and inference) or on a
// Tape (used for training). Both paths share the same kernels, so results are
// bit-identical.

struct EagerEngine {
    using V = Tensor;

    const Tensor& use_param(const Tensor& t) { return t; }
    const Tensor& use_input(const Tensor& t) { return t; }

    V matmul(const V& a, const V& b) { return kernels::matmul(a, b); }
    V add(const V& a, const V& b) { return kernels::add(a, b); }
    V sub(const V& a, const V& b) { return kernels::sub(a, b); }
    V mul(const V& a, const V& b) { return kernels::mul(a, b); }
    V scale(const V& a, double s) { return kernels::scale(a, s); }
    V batched_transpose(const V& a, int64_t batch) {
        return kernels::batched_transpose(a, batch);
    }
    V reshape(const V& a, std::vector<int64_t> shape) {
        return kernels::reshape(a, std::move(shape));
    }
    V concat(const V& a, const V& b, int axis) { return kernels::concat(a, b, axis); }
    V slice(const V& a, int axis, int64_t start, int64_t len) {
        return kernels::slice(a, axis, start, len);
    }
    V rows_mean(const V& a) { return kernels::rows_mean(a); }
    V sigmoid(const V& a) { return kernels::sigmoid(a); }
    V gelu(const V& a) { return kernels::gelu(a); }
    V mean_all(const V& a) { return kernels::mean_all(a); }
    V layernorm(const V& x, const V& g, const V& b, double eps) {
        return kernels::layernorm_rows(x, g, b, eps).y;
    }
    V attention(const V& q, const V& k, const V& v, int64_t batch, int64_t heads) {
        return kernels::attention(q, k, v, batch, heads).out;
    }
    static const Tensor& tensor_of(const V& v) { return v; }
};

struct TapeEngine {
    explicit TapeEngine(Tape& t) : tape(t) {}
    Tape& tape;
    std::unordered_map<const Tensor*, Value> leaves;

    using V = Value;

    V use_param(const Tensor& t) {
        auto it = leaves.find(&t);
        if (it != leaves.end()) return it->second;
        Value v = tape.param(t);
        leaves.emplace(&t, v);
        return v;
    }
    V use_input(const Tensor& t) { return tape.input(t); }

    // Gradient of the most recent backward() wrt a parameter tensor.
    Tensor grad_of(const Tensor& t) const {
        auto it = leaves.find(&t);
        if (it == leaves.end()) return Tensor(t.shape());
        return tape.grad(it->second);
    }

    V matmul(const V& a, const V& b) { return ad::matmul(a, b); }
    V add(const V& a, const V& b) { return ad::add(a, b); }
    V sub(const V& a, const V& b) { return ad::sub(a, b); }
    V mul(const V& a, const V& b) { return ad::mul(a, b); }
    V scale(const V& a, double s) { return ad::scale(a, s); }
    V batched_transpose(const V& a, int64_t batch) { return ad::batched_transpose(a, batch); }
    V reshape(const V& a, std::vector<int64_t> shape) {
        return ad::reshape(a, std::move(shape));
    }
    V concat(const V& a, const V& b, int axis) { return ad::concat(a, b, axis); }
    V slice(const V& a, int axis, int64_t start, int64_t len) {
        return ad::slice(a, axis, start, len);
    }
    V rows_mean(const V& a) { return ad::rows_mean(a); }
    V sigmoid(const V& a) { return ad::sigmoid(a); }
    V gelu(const V& a) { return ad::gelu(a); }
    V mean_all(const V& a) { return ad::mean_all(a); }
    V layernorm(const V& x, const V& g, const V& b, double eps) {
        return ad::layernorm_rows(x, g, b, eps);
    }
    V attention(const V& q, const V& k, const V& v, int64_t batch, int64_t heads) {
        return ad::attention(q, k, v, batch, heads);
    }
    static const Tensor& tensor_of(const V& v) { return v.tensor(); }
};

}  // namespace swiftdiff
