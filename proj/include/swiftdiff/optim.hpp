#pragma once

#include <cstdint>
#include <vector>

#include "swiftdiff/tensor.hpp"

namespace swiftdiff {

struct AdamWHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Per-parameter Adam moments plus a shared step counter.
struct OptimizerState {
    AdamWHyper hyper;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    int64_t t = 0;

    static OptimizerState init(const std::vector<Tensor*>& params, AdamWHyper hyper);
};

// Decoupled weight decay: θ ← θ − lr·wd·θ − lr·m̂/(√v̂+ε), bias-corrected moments.
void adamw_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                OptimizerState& state);

// Linear ramp 0→base over the first warmup_frac·total epochs, then cosine decay
// base→0 over the remainder.
double cosine_lr(int64_t epoch, int64_t total_epochs, double base_lr,
                 double warmup_frac = 0.10);

}  // namespace swiftdiff
