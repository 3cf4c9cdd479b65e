#include "swiftdiff/bayesopt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "json.hpp"
#include "swiftdiff/errors.hpp"

namespace swiftdiff {

namespace {
using ordered_json = nlohmann::ordered_json;
}

int64_t SearchDim::grid_size() const {
    if (kind != Kind::integer) return 0;
    return static_cast<int64_t>((hi - lo) / static_cast<double>(step)) + 1;
}

void SearchSpace::validate() const {
    if (dims.empty()) throw ConfigError("search space: no dimensions");
    for (const SearchDim& d : dims) {
        if (!(d.lo < d.hi)) {
            throw ConfigError("search space: bounds not ordered for " + d.name);
        }
        if (d.kind == SearchDim::Kind::log_continuous && d.lo <= 0.0) {
            throw ConfigError("search space: log dimension needs positive bounds: " + d.name);
        }
        if (d.kind == SearchDim::Kind::integer && d.step < 1) {
            throw ConfigError("search space: integer step must be >= 1: " + d.name);
        }
    }
}

std::vector<double> SearchSpace::decode(const std::vector<double>& unit) const {
    if (unit.size() != dims.size()) throw ConfigError("decode: dimension mismatch");
    std::vector<double> raw(dims.size());
    for (size_t i = 0; i < dims.size(); ++i) {
        double u = std::clamp(unit[i], 0.0, 1.0);
        const SearchDim& d = dims[i];
        switch (d.kind) {
            case SearchDim::Kind::continuous:
                raw[i] = d.lo + u * (d.hi - d.lo);
                break;
            case SearchDim::Kind::log_continuous:
                raw[i] = std::exp(std::log(d.lo) + u * (std::log(d.hi) - std::log(d.lo)));
                break;
            case SearchDim::Kind::integer: {
                int64_t g = d.grid_size();
                int64_t idx = g == 1 ? 0
                                     : static_cast<int64_t>(
                                           std::llround(u * static_cast<double>(g - 1)));
                raw[i] = d.lo + static_cast<double>(idx * d.step);
                break;
            }
        }
    }
    return raw;
}

std::vector<double> SearchSpace::encode(const std::vector<double>& raw) const {
    if (raw.size() != dims.size()) throw ConfigError("encode: dimension mismatch");
    std::vector<double> unit(dims.size());
    for (size_t i = 0; i < dims.size(); ++i) {
        const SearchDim& d = dims[i];
        switch (d.kind) {
            case SearchDim::Kind::continuous:
                unit[i] = (raw[i] - d.lo) / (d.hi - d.lo);
                break;
            case SearchDim::Kind::log_continuous:
                unit[i] = (std::log(raw[i]) - std::log(d.lo)) /
                          (std::log(d.hi) - std::log(d.lo));
                break;
            case SearchDim::Kind::integer: {
                int64_t g = d.grid_size();
                int64_t idx = static_cast<int64_t>(std::llround((raw[i] - d.lo) /
                                                                static_cast<double>(d.step)));
                unit[i] = g == 1 ? 0.0
                                 : static_cast<double>(idx) / static_cast<double>(g - 1);
                break;
            }
        }
        unit[i] = std::clamp(unit[i], 0.0, 1.0);
    }
    return unit;
}

std::vector<double> SearchSpace::snap(const std::vector<double>& unit) const {
    return encode(decode(unit));
}

double matern52_ard(const std::vector<double>& a, const std::vector<double>& b,
                    const std::vector<double>& lengthscales, double variance) {
    if (a.size() != b.size() || a.size() != lengthscales.size()) {
        throw ConfigError("matern52: dimension mismatch");
    }
    double r2 = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        if (lengthscales[i] <= 0.0) throw ConfigError("matern52: lengthscale must be > 0");
        double d = (a[i] - b[i]) / lengthscales[i];
        r2 += d * d;
    }
    double r = std::sqrt(r2);
    double s5r = std::sqrt(5.0) * r;
    return variance * (1.0 + s5r + 5.0 * r2 / 3.0) * std::exp(-s5r);
}

namespace {

// Lower-triangular Cholesky, row-major; returns false if not positive definite.
bool cholesky(std::vector<double>& a, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j <= i; ++j) {
            double s = a[i * n + j];
            for (size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            if (i == j) {
                if (s <= 0.0) return false;
                a[i * n + i] = std::sqrt(s);
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
        for (size_t j = i + 1; j < n; ++j) a[i * n + j] = 0.0;
    }
    return true;
}

void solve_lower(const std::vector<double>& l, size_t n, std::vector<double>& b) {
    for (size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (size_t k = 0; k < i; ++k) s -= l[i * n + k] * b[k];
        b[i] = s / l[i * n + i];
    }
}

void solve_upper_from_lower(const std::vector<double>& l, size_t n, std::vector<double>& b) {
    for (size_t i = n; i-- > 0;) {
        double s = b[i];
        for (size_t k = i + 1; k < n; ++k) s -= l[k * n + i] * b[k];
        b[i] = s / l[i * n + i];
    }
}

std::vector<double> kernel_matrix(const std::vector<std::vector<double>>& x, double variance,
                                  const std::vector<double>& ls, double jitter) {
    size_t n = x.size();
    std::vector<double> k(n * n);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j <= i; ++j) {
            double v = matern52_ard(x[i], x[j], ls, variance);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
        k[i * n + i] += jitter;
    }
    return k;
}

}  // namespace

GPModel gp_build(std::vector<std::vector<double>> x, std::vector<double> y, double variance,
                 std::vector<double> lengthscales, double jitter) {
    if (x.empty() || x.size() != y.size()) {
        throw ConfigError("gp_build: need at least one observation with matching values");
    }
    GPModel gp;
    gp.variance = variance;
    gp.lengthscales = std::move(lengthscales);
    gp.x = std::move(x);
    gp.y = std::move(y);
    size_t n = gp.n();

    gp.y_mean = 0.0;
    for (double v : gp.y) gp.y_mean += v;
    gp.y_mean /= static_cast<double>(n);

    for (double j = jitter; j <= 1e-6 * 1.0000001; j *= 10.0) {
        std::vector<double> k = kernel_matrix(gp.x, gp.variance, gp.lengthscales, j);
        if (cholesky(k, n)) {
            gp.jitter = j;
            gp.chol = std::move(k);
            gp.alpha.resize(n);
            for (size_t i = 0; i < n; ++i) gp.alpha[i] = gp.y[i] - gp.y_mean;
            solve_lower(gp.chol, n, gp.alpha);
            solve_upper_from_lower(gp.chol, n, gp.alpha);
            return gp;
        }
    }
    throw NumericError("gp_build: kernel matrix not positive definite after jitter escalation");
}

Posterior gp_posterior(const GPModel& gp, const std::vector<double>& query) {
    size_t n = gp.n();
    if (n == 0) throw ConfigError("gp_posterior: empty model");
    std::vector<double> k(n);
    for (size_t i = 0; i < n; ++i) {
        k[i] = matern52_ard(query, gp.x[i], gp.lengthscales, gp.variance);
    }
    Posterior post;
    post.mean = gp.y_mean;
    for (size_t i = 0; i < n; ++i) post.mean += k[i] * gp.alpha[i];

    std::vector<double> v = k;
    solve_lower(gp.chol, n, v);
    double quad = 0.0;
    for (size_t i = 0; i < n; ++i) quad += v[i] * v[i];
    double var = matern52_ard(query, query, gp.lengthscales, gp.variance) - quad;
    if (var < 0.0) {
        if (var < -1e-9) {
            std::cerr << "[bayesopt] warning: posterior variance " << var
                      << " clamped to 0\n";
        }
        var = 0.0;
    }
    post.var = var;
    return post;
}

namespace {

// Compact Nelder–Mead; good enough for the 3-5 dim fits used here.
std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> x0, double step, int max_iter) {
    size_t d = x0.size();
    std::vector<std::vector<double>> simplex(d + 1, x0);
    std::vector<double> fv(d + 1);
    for (size_t i = 0; i < d; ++i) simplex[i + 1][i] += step;
    for (size_t i = 0; i <= d; ++i) fv[i] = f(simplex[i]);

    for (int it = 0; it < max_iter; ++it) {
        std::vector<size_t> order(d + 1);
        for (size_t i = 0; i <= d; ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](size_t a, size_t b) { return fv[a] < fv[b]; });
        std::vector<std::vector<double>> sx(d + 1);
        std::vector<double> sf(d + 1);
        for (size_t i = 0; i <= d; ++i) {
            sx[i] = simplex[order[i]];
            sf[i] = fv[order[i]];
        }
        simplex = std::move(sx);
        fv = std::move(sf);

        std::vector<double> centroid(d, 0.0);
        for (size_t i = 0; i < d; ++i) {
            for (size_t j = 0; j < d; ++j) centroid[j] += simplex[i][j];
        }
        for (double& c : centroid) c /= static_cast<double>(d);

        auto blend = [&](double t) {
            std::vector<double> p(d);
            for (size_t j = 0; j < d; ++j) {
                p[j] = centroid[j] + t * (simplex[d][j] - centroid[j]);
            }
            return p;
        };

        std::vector<double> xr = blend(-1.0);
        double fr = f(xr);
        if (fr < fv[0]) {
            std::vector<double> xe = blend(-2.0);
            double fe = f(xe);
            if (fe < fr) {
                simplex[d] = xe;
                fv[d] = fe;
            } else {
                simplex[d] = xr;
                fv[d] = fr;
            }
        } else if (fr < fv[d - 1]) {
            simplex[d] = xr;
            fv[d] = fr;
        } else {
            std::vector<double> xc = blend(0.5);
            double fc = f(xc);
            if (fc < fv[d]) {
                simplex[d] = xc;
                fv[d] = fc;
            } else {
                for (size_t i = 1; i <= d; ++i) {
                    for (size_t j = 0; j < d; ++j) {
                        simplex[i][j] = simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]);
                    }
                    fv[i] = f(simplex[i]);
                }
            }
        }
    }
    size_t best = 0;
    for (size_t i = 1; i <= d; ++i) {
        if (fv[i] < fv[best]) best = i;
    }
    return simplex[best];
}

double nlml(const std::vector<std::vector<double>>& x, const std::vector<double>& yc,
            double variance, const std::vector<double>& ls) {
    size_t n = x.size();
    std::vector<double> k = kernel_matrix(x, variance, ls, 1e-10);
    if (!cholesky(k, n)) return 1e300;
    std::vector<double> a = yc;
    solve_lower(k, n, a);
    double quad = 0.0, logdet = 0.0;
    for (size_t i = 0; i < n; ++i) {
        quad += a[i] * a[i];
        logdet += std::log(k[i * n + i]);
    }
    return 0.5 * quad + logdet + 0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
}

}  // namespace

GPModel gp_fit_ml(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                  uint64_t seed) {
    if (x.empty()) throw ConfigError("gp_fit_ml: no observations");
    size_t d = x[0].size();
    size_t n = x.size();

    // Standardize targets so the fit is invariant to positive rescaling of y.
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : y) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    std::vector<double> yc(n);
    for (size_t i = 0; i < n; ++i) yc[i] = (y[i] - mean) / sd;

    // θ = (log σ², log ℓ_1..d) with soft box bounds.
    auto objective = [&](const std::vector<double>& theta) {
        double lv = theta[0];
        if (lv < std::log(1e-3) || lv > std::log(1e3)) return 1e280;
        std::vector<double> ls(d);
        for (size_t i = 0; i < d; ++i) {
            double ll = theta[i + 1];
            if (ll < std::log(5e-3) || ll > std::log(50.0)) return 1e280;
            ls[i] = std::exp(ll);
        }
        return nlml(x, yc, std::exp(lv), ls);
    };

    Rng rng(mix64(seed ^ 0xb0f17));
    std::vector<double> best_theta;
    double best_val = 1e301;
    for (int restart = 0; restart < 6; ++restart) {
        std::vector<double> t0(d + 1);
        if (restart == 0) {
            t0[0] = 0.0;  // σ² = 1 in standardized units
            for (size_t i = 0; i < d; ++i) t0[i + 1] = std::log(0.3);
        } else {
            t0[0] = rng.uniform(std::log(0.2), std::log(5.0));
            for (size_t i = 0; i < d; ++i) {
                t0[i + 1] = rng.uniform(std::log(0.03), std::log(2.0));
            }
        }
        std::vector<double> t = nelder_mead(objective, t0, 0.4, 60);
        double v = objective(t);
        if (v < best_val) {
            best_val = v;
            best_theta = t;
        }
    }
    if (best_theta.empty()) throw NumericError("gp_fit_ml: optimization failed");

    double variance = std::exp(best_theta[0]) * sd * sd;
    std::vector<double> ls(d);
    for (size_t i = 0; i < d; ++i) ls[i] = std::exp(best_theta[i + 1]);
    return gp_build(x, y, variance, ls);
}

double expected_improvement(double mu, double sigma, double g_best) {
    if (sigma < 0.0) throw ConfigError("expected_improvement: sigma must be >= 0");
    double delta = g_best - mu;
    if (sigma == 0.0) return std::max(delta, 0.0);
    double z = delta / sigma;
    double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    double cdf = 0.5 * std::erfc(-z * M_SQRT1_2);
    double ei = delta * cdf + sigma * phi;
    return std::max(ei, 0.0);
}

std::vector<double> halton_point(int64_t index, size_t dims, uint64_t seed) {
    static const int primes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29,
                                 31, 37, 41, 43, 47, 53, 59, 61, 67, 71};
    if (dims > std::size(primes)) throw ConfigError("halton: too many dimensions");
    std::vector<double> p(dims);
    for (size_t d = 0; d < dims; ++d) {
        int base = primes[d];
        double f = 1.0, r = 0.0;
        int64_t i = index + 1;
        while (i > 0) {
            f /= base;
            r += f * static_cast<double>(i % base);
            i /= base;
        }
        // Cranley–Patterson rotation scrambles the sequence deterministically.
        uint64_t h = mix64(seed ^ mix64(0x9e37 + d));
        double shift = static_cast<double>(h >> 11) * 0x1.0p-53;
        p[d] = r + shift;
        p[d] -= std::floor(p[d]);
    }
    return p;
}

namespace {

bool near_duplicate(const std::vector<double>& a, const std::vector<double>& b, double tol) {
    for (size_t i = 0; i < a.size(); ++i) {
        if (std::abs(a[i] - b[i]) > tol) return false;
    }
    return true;
}

bool is_taken(const std::vector<double>& cand,
              const std::vector<std::vector<double>>& taken) {
    for (const auto& t : taken) {
        if (near_duplicate(cand, t, 1e-9)) return true;
    }
    return false;
}

}  // namespace

std::vector<double> suggest(const SearchSpace& space, const std::vector<TrialRecord>& history,
                            uint64_t seed, int64_t n_initial) {
    space.validate();
    size_t d = space.size();

    std::vector<TrialRecord> done, pending;
    for (const TrialRecord& t : history) {
        if (t.status == TrialRecord::Status::done && std::isfinite(t.g)) {
            done.push_back(t);
        } else if (t.status == TrialRecord::Status::pending) {
            pending.push_back(t);
        }
    }
    int64_t issued = static_cast<int64_t>(done.size() + pending.size());

    std::vector<std::vector<double>> taken;
    for (const TrialRecord& t : done) taken.push_back(space.snap(t.lambda_enc));
    for (const TrialRecord& t : pending) taken.push_back(space.snap(t.lambda_enc));

    // Cold start (and fallback when nothing has completed yet).
    if (issued < n_initial || done.empty()) {
        for (int64_t i = issued; i < issued + 1024; ++i) {
            std::vector<double> cand = space.snap(halton_point(i, d, seed));
            if (!is_taken(cand, taken)) return cand;
        }
        throw ConfigError("suggest: could not find an unevaluated initial point");
    }

    // Standardized targets make the suggestion invariant to positive
    // rescaling of g.
    std::vector<std::vector<double>> xs;
    std::vector<double> gs;
    double mean = 0.0;
    for (const TrialRecord& t : done) mean += t.g;
    mean /= static_cast<double>(done.size());
    double var = 0.0;
    for (const TrialRecord& t : done) var += (t.g - mean) * (t.g - mean);
    var /= static_cast<double>(done.size());
    double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    for (const TrialRecord& t : done) {
        xs.push_back(space.snap(t.lambda_enc));
        gs.push_back((t.g - mean) / sd);
    }

    GPModel fit = gp_fit_ml(xs, gs, mix64(seed ^ static_cast<uint64_t>(issued)));

    // Kriging believer: impute pending outcomes at their posterior mean, in
    // trial order, so parallel suggestions spread out.
    std::sort(pending.begin(), pending.end(),
              [](const TrialRecord& a, const TrialRecord& b) { return a.trial < b.trial; });
    for (const TrialRecord& p : pending) {
        GPModel gp = gp_build(xs, gs, fit.variance, fit.lengthscales);
        std::vector<double> pe = space.snap(p.lambda_enc);
        gs.push_back(gp_posterior(gp, pe).mean);
        xs.push_back(pe);
    }
    GPModel gp = gp_build(xs, gs, fit.variance, fit.lengthscales);

    double g_best = gs[0];
    for (size_t i = 0; i < done.size(); ++i) g_best = std::min(g_best, gs[i]);

    auto ei_at = [&](const std::vector<double>& u) {
        Posterior post = gp_posterior(gp, u);
        return expected_improvement(post.mean, std::sqrt(post.var), g_best);
    };

    // 1024 quasi-random candidates, then local refinement from the best 8.
    uint64_t cand_seed = mix64(seed ^ 0xca4dull ^ static_cast<uint64_t>(issued));
    struct Scored {
        std::vector<double> u;
        double ei;
    };
    std::vector<Scored> scored;
    scored.reserve(1024 + 8);
    for (int64_t i = 0; i < 1024; ++i) {
        std::vector<double> u = halton_point(i, d, cand_seed);
        scored.push_back({u, ei_at(u)});
    }
    std::sort(scored.begin(), scored.end(),
              [](const Scored& a, const Scored& b) { return a.ei > b.ei; });

    std::vector<Scored> refined;
    for (size_t i = 0; i < std::min<size_t>(8, scored.size()); ++i) {
        auto neg = [&](const std::vector<double>& u) {
            std::vector<double> c(u.size());
            for (size_t j = 0; j < u.size(); ++j) c[j] = std::clamp(u[j], 0.0, 1.0);
            return -ei_at(c);
        };
        std::vector<double> u = nelder_mead(neg, scored[i].u, 0.05, 40);
        for (double& v : u) v = std::clamp(v, 0.0, 1.0);
        refined.push_back({u, ei_at(u)});
    }
    for (const Scored& s : refined) scored.push_back(s);
    std::sort(scored.begin(), scored.end(),
              [](const Scored& a, const Scored& b) { return a.ei > b.ei; });

    // Integer dims round via snap; avoid duplicates of done and pending points.
    for (const Scored& s : scored) {
        std::vector<double> cand = space.snap(s.u);
        if (!is_taken(cand, taken)) return cand;
    }

    // Everything collided (dense integer grids): perturb the best candidate to
    // the nearest unevaluated grid point.
    std::vector<double> base = space.snap(scored.front().u);
    for (int radius = 1; radius < 64; ++radius) {
        for (size_t dim = 0; dim < d; ++dim) {
            if (space.dims[dim].kind != SearchDim::Kind::integer) continue;
            int64_t g = space.dims[dim].grid_size();
            if (g <= 1) continue;
            double stepu = 1.0 / static_cast<double>(g - 1);
            for (int sign : {+1, -1}) {
                std::vector<double> cand = base;
                cand[dim] = std::clamp(cand[dim] + sign * radius * stepu, 0.0, 1.0);
                cand = space.snap(cand);
                if (!is_taken(cand, taken)) return cand;
            }
        }
    }
    throw ConfigError("suggest: search grid exhausted");
}

double objective_case1(const std::vector<Tensor>& teacher_out,
                       const std::vector<Tensor>& student_out) {
    if (teacher_out.empty() || teacher_out.size() != student_out.size()) {
        throw ConfigError("objective_case1: validation set empty or mismatched");
    }
    double total = 0.0;
    for (size_t m = 0; m < teacher_out.size(); ++m) {
        if (!teacher_out[m].same_shape(student_out[m])) {
            throw ShapeError("objective_case1: output shape mismatch at sample " +
                             std::to_string(m));
        }
        double s = 0.0;
        for (int64_t i = 0; i < teacher_out[m].numel(); ++i) {
            double dd = teacher_out[m].at(i) - student_out[m].at(i);
            s += dd * dd;
        }
        total += s;
    }
    return total / static_cast<double>(teacher_out.size());
}

double case2_ratio_err(const std::vector<Tensor>& teacher_out,
                       const std::vector<Tensor>& student_out) {
    if (teacher_out.empty() || teacher_out.size() != student_out.size()) {
        throw ConfigError("case2_ratio_err: validation set empty or mismatched");
    }
    double total = 0.0;
    for (size_t m = 0; m < teacher_out.size(); ++m) {
        double num = 0.0, den = 0.0;
        for (int64_t i = 0; i < teacher_out[m].numel(); ++i) {
            double t = teacher_out[m].at(i);
            double dd = t - student_out[m].at(i);
            num += dd * dd;
            den += t * t;
        }
        if (den <= 0.0) {
            throw NumericError("case2_ratio_err: teacher output has zero norm");
        }
        total += std::sqrt(num) / std::sqrt(den);
    }
    return total / static_cast<double>(teacher_out.size());
}

double objective_case2(const Case2Components& comp, const Case2Weights& w) {
    return w.a * comp.ratio_err + w.b * comp.ratio_acc + w.c * comp.ratio_inf;
}

// ---- ledger -----------------------------------------------------------------

std::vector<TrialRecord> read_ledger(const std::string& path) {
    std::vector<TrialRecord> trials;
    std::ifstream in(path);
    if (!in) return trials;
    std::string line;
    auto find_trial = [&](int64_t id) -> TrialRecord* {
        for (TrialRecord& t : trials) {
            if (t.trial == id) return &t;
        }
        return nullptr;
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ordered_json j = ordered_json::parse(line, nullptr, false);
        if (j.is_discarded()) continue;  // tolerate a truncated trailing line
        std::string event = j.value("event", "");
        if (event == "issue") {
            TrialRecord t;
            t.trial = j.at("trial").get<int64_t>();
            t.lambda_enc = j.at("lambda_enc").get<std::vector<double>>();
            t.lambda_raw = j.at("lambda_raw").get<std::vector<double>>();
            t.seed = j.at("seed").get<uint64_t>();
            t.status = TrialRecord::Status::pending;
            trials.push_back(std::move(t));
        } else if (event == "done") {
            TrialRecord* t = find_trial(j.at("trial").get<int64_t>());
            if (t == nullptr) continue;
            std::string status = j.value("status", "done");
            t->status = status == "failed" ? TrialRecord::Status::failed
                                           : TrialRecord::Status::done;
            if (j.contains("g") && !j.at("g").is_null()) {
                t->g = j.at("g").get<double>();
            } else {
                t->g = std::numeric_limits<double>::quiet_NaN();
            }
            t->wall_seconds = j.value("wall_seconds", 0.0);
            if (j.contains("components") && !j.at("components").is_null()) {
                t->has_components = true;
                t->ratio_err = j["components"].value("ratio_err", 0.0);
                t->ratio_acc = j["components"].value("ratio_acc", 0.0);
                t->ratio_inf = j["components"].value("ratio_inf", 0.0);
            }
        }
    }
    return trials;
}

namespace {

void append_issue(std::ofstream& out, const TrialRecord& t) {
    if (!out.is_open()) return;
    ordered_json j;
    j["event"] = "issue";
    j["trial"] = t.trial;
    j["lambda_enc"] = t.lambda_enc;
    j["lambda_raw"] = t.lambda_raw;
    j["seed"] = t.seed;
    out << j.dump() << "\n";
    out.flush();
}

void append_done(std::ofstream& out, const TrialRecord& t) {
    if (!out.is_open()) return;
    ordered_json j;
    j["event"] = "done";
    j["trial"] = t.trial;
    j["status"] = t.status == TrialRecord::Status::failed ? "failed" : "done";
    if (std::isfinite(t.g)) {
        j["g"] = t.g;
    } else {
        j["g"] = nullptr;
    }
    if (t.has_components) {
        j["components"] = {{"ratio_err", t.ratio_err},
                           {"ratio_acc", t.ratio_acc},
                           {"ratio_inf", t.ratio_inf}};
    }
    j["wall_seconds"] = t.wall_seconds;
    out << j.dump() << "\n";
    out.flush();
}

void evaluate_parallel(std::vector<TrialRecord*>& batch, const TrialEvalFn& eval) {
    std::vector<std::thread> workers;
    workers.reserve(batch.size());
    for (TrialRecord* t : batch) {
        workers.emplace_back([t, &eval] {
            auto t0 = std::chrono::steady_clock::now();
            try {
                TrialOutcome out = eval(t->trial, t->lambda_raw, t->seed);
                t->g = out.failed ? std::numeric_limits<double>::quiet_NaN() : out.g;
                t->status = out.failed ? TrialRecord::Status::failed
                                       : TrialRecord::Status::done;
                t->has_components = out.has_components;
                t->ratio_err = out.components.ratio_err;
                t->ratio_acc = out.components.ratio_acc;
                t->ratio_inf = out.components.ratio_inf;
            } catch (const std::exception&) {
                t->g = std::numeric_limits<double>::quiet_NaN();
                t->status = TrialRecord::Status::failed;
            }
            t->wall_seconds = std::chrono::duration<double>(
                                  std::chrono::steady_clock::now() - t0)
                                  .count();
        });
    }
    for (std::thread& w : workers) w.join();
}

}  // namespace

BoStudyResult run_bo_study(const BoStudyConfig& cfg, const TrialEvalFn& eval) {
    cfg.space.validate();
    if (cfg.iterations < 1 || cfg.parallel < 1) {
        throw ConfigError("bo_study: iterations and parallel must be >= 1");
    }

    std::vector<TrialRecord> trials;
    std::ofstream ledger;
    if (!cfg.ledger_path.empty()) {
        trials = read_ledger(cfg.ledger_path);
        ledger.open(cfg.ledger_path, std::ios::app);
        if (!ledger) {
            throw DataError(DataError::Code::io, "cannot open ledger " + cfg.ledger_path);
        }
    }

    const int64_t target = cfg.iterations * cfg.parallel;

    // Re-run trials that were issued but never completed (interrupted study).
    {
        std::vector<TrialRecord*> stale;
        for (TrialRecord& t : trials) {
            if (t.status == TrialRecord::Status::pending) stale.push_back(&t);
        }
        if (!stale.empty()) {
            evaluate_parallel(stale, eval);
            for (TrialRecord* t : stale) append_done(ledger, *t);
        }
    }

    auto n_completed = [&] {
        int64_t n = 0;
        for (const TrialRecord& t : trials) {
            if (t.status != TrialRecord::Status::pending) ++n;
        }
        return n;
    };

    while (n_completed() < target) {
        int64_t m = std::min<int64_t>(cfg.parallel, target - n_completed());
        std::vector<TrialRecord*> round;
        for (int64_t i = 0; i < m; ++i) {
            std::vector<double> enc = suggest(cfg.space, trials, cfg.seed);
            TrialRecord t;
            t.trial = trials.empty() ? 0 : trials.back().trial + 1;
            t.lambda_enc = enc;
            t.lambda_raw = cfg.space.decode(enc);
            t.seed = mix64(cfg.seed ^ static_cast<uint64_t>(t.trial) * 0x9e3779b9ull);
            t.status = TrialRecord::Status::pending;
            trials.push_back(std::move(t));
            append_issue(ledger, trials.back());
        }
        for (size_t i = trials.size() - static_cast<size_t>(m); i < trials.size(); ++i) {
            round.push_back(&trials[i]);
        }
        evaluate_parallel(round, eval);
        for (TrialRecord* t : round) append_done(ledger, *t);
    }

    BoStudyResult res;
    res.trials = trials;
    res.best_g = std::numeric_limits<double>::infinity();
    for (const TrialRecord& t : trials) {
        if (t.status == TrialRecord::Status::done && std::isfinite(t.g) &&
            t.g < res.best_g) {
            res.best_g = t.g;
            res.best_raw = t.lambda_raw;
            res.best_trial = t.trial;
        }
    }
    return res;
}

}  // namespace swiftdiff
