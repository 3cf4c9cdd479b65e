#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "swiftdiff/rng.hpp"
#include "swiftdiff/tensor.hpp"

namespace swiftdiff {

struct SearchDim {
    enum class Kind { continuous, log_continuous, integer };
    std::string name;
    Kind kind = Kind::continuous;
    double lo = 0.0;
    double hi = 1.0;
    int64_t step = 1;  // integer dims only

    int64_t grid_size() const;  // number of grid points (integer dims)
};

struct SearchSpace {
    std::vector<SearchDim> dims;

    size_t size() const { return dims.size(); }
    void validate() const;
    // unit cube -> raw values (integers snapped to their grid)
    std::vector<double> decode(const std::vector<double>& unit) const;
    std::vector<double> encode(const std::vector<double>& raw) const;
    // canonical unit coords: integer dims moved to their grid point's encoding
    std::vector<double> snap(const std::vector<double>& unit) const;
};

struct TrialRecord {
    int64_t trial = -1;
    std::vector<double> lambda_enc;
    std::vector<double> lambda_raw;
    double g = 0.0;
    enum class Status { pending, done, failed } status = Status::pending;
    double wall_seconds = 0.0;
    uint64_t seed = 0;
    bool has_components = false;
    double ratio_err = 0.0, ratio_acc = 0.0, ratio_inf = 0.0;
};

// k(λi, λj) = σ²(1 + √5 r + 5r²/3)·exp(−√5 r), r² = Σ((λi−λj)/ℓ)².
double matern52_ard(const std::vector<double>& a, const std::vector<double>& b,
                    const std::vector<double>& lengthscales, double variance);

// Noise-free GP with cached Cholesky factor; y values are mean-centered
// before the solve and the mean is re-added to posterior means.
struct GPModel {
    double variance = 1.0;
    std::vector<double> lengthscales;
    double jitter = 1e-10;

    std::vector<std::vector<double>> x;
    std::vector<double> y;
    double y_mean = 0.0;
    std::vector<double> chol;   // row-major lower-triangular factor
    std::vector<double> alpha;  // K^{-1}(y − mean)

    size_t n() const { return x.size(); }
};

// Factorizes with jitter escalation 1e-10 -> 1e-6; throws NumericError if the
// matrix stays indefinite.
GPModel gp_build(std::vector<std::vector<double>> x, std::vector<double> y, double variance,
                 std::vector<double> lengthscales, double jitter = 1e-10);

// Hyperparameters by maximizing the marginal likelihood, 5 random restarts.
GPModel gp_fit_ml(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                  uint64_t seed);

struct Posterior {
    double mean = 0.0;
    double var = 0.0;
};
Posterior gp_posterior(const GPModel& gp, const std::vector<double>& query);

// Minimization form; EI = max(g_best − μ, 0) at σ = 0.
double expected_improvement(double mu, double sigma, double g_best);

// Cranley–Patterson-rotated Halton point (low-discrepancy, seed-scrambled).
std::vector<double> halton_point(int64_t index, size_t dims, uint64_t seed);

// One suggestion given the history (pending trials are fantasized at their
// posterior mean, in trial order). Cold start: the first `n_initial` points
// come from the scrambled low-discrepancy sequence.
std::vector<double> suggest(const SearchSpace& space, const std::vector<TrialRecord>& history,
                            uint64_t seed, int64_t n_initial = 5);

// Eq. (10) with the bare ‖·‖² reading: per sample the squared L2 over all
// elements, averaged over samples.
double objective_case1(const std::vector<Tensor>& teacher_out,
                       const std::vector<Tensor>& student_out);

struct Case2Components {
    double ratio_err = 0.0;
    double ratio_acc = 0.0;
    double ratio_inf = 0.0;
};
struct Case2Weights {
    double a = 15.0;
    double b = 15.0;
    double c = 1.0;
};
double objective_case2(const Case2Components& comp, const Case2Weights& w = {});

// Per-sample relative L2 error, averaged.
double case2_ratio_err(const std::vector<Tensor>& teacher_out,
                       const std::vector<Tensor>& student_out);

// ---- study driver -----------------------------------------------------------

struct TrialOutcome {
    double g = 0.0;
    bool failed = false;
    bool has_components = false;
    Case2Components components;
};

using TrialEvalFn =
    std::function<TrialOutcome(int64_t trial, const std::vector<double>& raw, uint64_t seed)>;

struct BoStudyConfig {
    SearchSpace space;
    int64_t iterations = 40;
    int64_t parallel = 5;
    uint64_t seed = 0;
    std::string ledger_path;  // append-only JSONL; empty disables persistence
};

struct BoStudyResult {
    std::vector<TrialRecord> trials;
    double best_g = 0.0;
    std::vector<double> best_raw;
    int64_t best_trial = -1;
};

// Batch-synchronous rounds: `parallel` kriging-believer suggestions per round,
// evaluated concurrently, results appended in trial order (deterministic
// ledger). Resumes from an existing ledger without duplicating trials.
BoStudyResult run_bo_study(const BoStudyConfig& cfg, const TrialEvalFn& eval);

std::vector<TrialRecord> read_ledger(const std::string& path);

}  // namespace swiftdiff
