#pragma once

#include <cmath>
#include <functional>

#include "swiftdiff/engine.hpp"
#include "swiftdiff/models.hpp"
#include "swiftdiff/rng.hpp"

namespace swiftdiff::testutil {

inline Tensor random_tensor(Rng& rng, std::vector<int64_t> shape, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.normal() * scale;
    return t;
}

// Gradcheck of a scalar loss against a model's parameter store: analytic
// gradients from one tape pass vs central differences over the flattened
// parameter vector.
inline double param_gradcheck(
    const std::function<Value(Tape&, TapeEngine&)>& loss_builder, ParamStore& params,
    double h) {
    Tape tape;
    TapeEngine eng(tape);
    Value loss = loss_builder(tape, eng);
    tape.backward(loss);

    std::vector<double> analytic;
    for (size_t i = 0; i < params.count(); ++i) {
        Tensor g = eng.grad_of(params[i]);
        analytic.insert(analytic.end(), g.raw().begin(), g.raw().end());
    }

    auto eval = [&] {
        Tape tp;
        TapeEngine e(tp);
        return loss_builder(tp, e).tensor().at(0);
    };

    std::vector<double> flat = params.flatten();
    double max_rel = 0.0;
    for (size_t i = 0; i < flat.size(); ++i) {
        double orig = flat[i];
        flat[i] = orig + h;
        params.load_flat(flat);
        double fp = eval();
        flat[i] = orig - h;
        params.load_flat(flat);
        double fm = eval();
        flat[i] = orig;
        params.load_flat(flat);
        double fd = (fp - fm) / (2.0 * h);
        double rel = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace swiftdiff::testutil
