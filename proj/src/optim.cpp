#include "swiftdiff/optim.hpp"

#include <cmath>
#include <string>

#include "swiftdiff/errors.hpp"

namespace swiftdiff {

OptimizerState OptimizerState::init(const std::vector<Tensor*>& params, AdamWHyper hyper) {
    OptimizerState st;
    st.hyper = hyper;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const Tensor* p : params) {
        st.m.emplace_back(p->shape());
        st.v.emplace_back(p->shape());
    }
    return st;
}

void adamw_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                OptimizerState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw ShapeError("adamw_step: params/grads/state size mismatch");
    }
    // lr == 0 is a valid no-op step: the warmup schedule starts at zero.
    if (state.hyper.lr < 0.0) throw ConfigError("adamw_step: lr must be nonnegative");

    state.t += 1;
    const AdamWHyper& h = state.hyper;
    double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));

    for (size_t p = 0; p < params.size(); ++p) {
        Tensor& theta = *params[p];
        const Tensor& g = grads[p];
        if (!theta.same_shape(g)) {
            throw ShapeError("adamw_step: parameter " + std::to_string(p) + " shape " +
                             theta.shape_str() + " vs grad " + g.shape_str());
        }
        if (!g.all_finite()) {
            throw NumericError("adamw_step: non-finite gradient at parameter index " +
                               std::to_string(p));
        }
        Tensor& m = state.m[p];
        Tensor& v = state.v[p];
        for (int64_t i = 0; i < theta.numel(); ++i) {
            double gi = g.at(i);
            m.at(i) = h.beta1 * m.at(i) + (1.0 - h.beta1) * gi;
            v.at(i) = h.beta2 * v.at(i) + (1.0 - h.beta2) * gi * gi;
            double mhat = m.at(i) / bc1;
            double vhat = v.at(i) / bc2;
            theta.at(i) -= h.lr * h.weight_decay * theta.at(i);
            theta.at(i) -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
        }
    }
}

double cosine_lr(int64_t epoch, int64_t total_epochs, double base_lr, double warmup_frac) {
    if (total_epochs <= 0) throw ConfigError("cosine_lr: total_epochs must be positive");
    if (epoch < 0 || epoch >= total_epochs) {
        throw ConfigError("cosine_lr: epoch " + std::to_string(epoch) +
                          " out of range [0, " + std::to_string(total_epochs) + ")");
    }
    double warmup = warmup_frac * static_cast<double>(total_epochs);
    double e = static_cast<double>(epoch);
    if (e < warmup) return base_lr * e / warmup;
    double span = static_cast<double>(total_epochs) - warmup;
    double progress = span > 0.0 ? (e - warmup) / span : 0.0;
    return base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace swiftdiff
