#include "swiftdiff/synthetic.hpp"

#include <cmath>

#include "swiftdiff/errors.hpp"
#include "swiftdiff/rng.hpp"

namespace swiftdiff {

void SyntheticCorpusSpec::validate() const {
    if (joints < 1) throw ConfigError("corpus: joints must be >= 1");
    if (observed < 1 || future < 1) throw ConfigError("corpus: H and F must be >= 1");
    if (n_train < 1 || n_test < 1) throw ConfigError("corpus: split sizes must be >= 1");
    if (n_modes < 2) throw ConfigError("corpus: n_modes must be >= 2 (multi-modal by design)");
    if (n_families < 1) throw ConfigError("corpus: n_families must be >= 1");
    if (band_limit < 2 || band_limit > total_len()) {
        throw ConfigError("corpus: band_limit must lie in [2, H+F]");
    }
    if (amplitude <= 0.0 || mode_amplitude < 0.0 || noise_floor < 0.0) {
        throw ConfigError("corpus: amplitudes must be positive, noise_floor >= 0");
    }
}

namespace {

double smoothstep(double u) {
    u = std::clamp(u, 0.0, 1.0);
    return u * u * (3.0 - 2.0 * u);
}

double clamped_normal(Rng& rng, double sigma) {
    return std::clamp(rng.normal(), -4.0, 4.0) * sigma;
}

struct Family {
    Tensor base_coeffs;                // (band_limit, 3J) DCT coefficients
    std::vector<Tensor> mode_harm;     // per mode: (2, 3J) sine harmonics
    std::vector<Tensor> mode_phase;    // per mode: (2, 3J) phases
};

}  // namespace

SyntheticCorpus gen_corpus(const SyntheticCorpusSpec& spec) {
    spec.validate();
    const int64_t n = spec.total_len();
    const int64_t ch = 3 * spec.joints;
    const int64_t h = spec.observed;
    const int64_t f = spec.future;
    const int64_t ramp_len = std::max<int64_t>(2, f / 4);

    Rng root(spec.seed);
    Tensor basis = dct_basis(n, spec.band_limit);

    // Family-level draws: base motion and per-mode continuation patterns.
    std::vector<Family> families;
    families.reserve(static_cast<size_t>(spec.n_families));
    for (int64_t fam = 0; fam < spec.n_families; ++fam) {
        Rng fr = root.spawn(0xfa0000 + static_cast<uint64_t>(fam));
        Family family;
        family.base_coeffs = Tensor({spec.band_limit, ch});
        double time_scale = spec.amplitude * std::sqrt(static_cast<double>(n) / 2.0);
        for (int64_t k = 0; k < spec.band_limit; ++k) {
            double sigma = k == 0 ? spec.amplitude * std::sqrt(static_cast<double>(n))
                                  : time_scale * std::pow(0.6, static_cast<double>(k));
            for (int64_t c = 0; c < ch; ++c) {
                family.base_coeffs.at(k, c) = clamped_normal(fr, sigma);
            }
        }
        for (int64_t m = 0; m < spec.n_modes; ++m) {
            Rng mr = fr.spawn(0x30de + static_cast<uint64_t>(m));
            Tensor harm({2, ch});
            Tensor phase({2, ch});
            for (int64_t q = 0; q < 2; ++q) {
                for (int64_t c = 0; c < ch; ++c) {
                    harm.at(q, c) = clamped_normal(mr, spec.mode_amplitude / (1.0 + q));
                    phase.at(q, c) = mr.uniform(0.0, 2.0 * M_PI);
                }
            }
            family.mode_harm.push_back(std::move(harm));
            family.mode_phase.push_back(std::move(phase));
        }
        families.push_back(std::move(family));
    }

    // Conservative step bound: basis-derivative term + mode ramp-in + jitter.
    double bound = 0.0;
    for (const Family& fam : families) {
        double base_term = 0.0;
        for (int64_t c = 0; c < ch; ++c) {
            double bc = 0.0;
            for (int64_t k = 1; k < spec.band_limit; ++k) {
                double dmax = std::sqrt(2.0 / static_cast<double>(n)) * M_PI *
                              static_cast<double>(k) / static_cast<double>(n);
                bc += std::abs(fam.base_coeffs.at(k, c)) * dmax;
            }
            base_term = std::max(base_term, bc);
        }
        double mode_term = 0.0;
        for (const Tensor& harm : fam.mode_harm) {
            for (int64_t c = 0; c < ch; ++c) {
                double mc = std::abs(harm.at(0, c)) + std::abs(harm.at(1, c));
                mode_term = std::max(mode_term, mc);
            }
        }
        // first future frame has ramp value smoothstep(1/ramp_len)
        double ramp0 = smoothstep(1.0 / static_cast<double>(ramp_len));
        double per_coord = base_term + ramp0 * mode_term + 8.0 * spec.noise_floor;
        bound = std::max(bound, per_coord * std::sqrt(static_cast<double>(ch)));
    }

    auto make_item = [&](Rng& ir, int64_t& mode_out, int64_t& family_out) {
        int64_t fam = ir.uniform_int(spec.n_families);
        int64_t mode = ir.uniform_int(spec.n_modes);
        const Family& family = families[static_cast<size_t>(fam)];

        Tensor frames({n, ch});
        for (int64_t t = 0; t < n; ++t) {
            double ramp = t < h ? 0.0
                                : smoothstep(static_cast<double>(t - (h - 1)) /
                                             static_cast<double>(ramp_len));
            for (int64_t c = 0; c < ch; ++c) {
                double v = 0.0;
                for (int64_t k = 0; k < spec.band_limit; ++k) {
                    v += family.base_coeffs.at(k, c) * basis.at(k, t);
                }
                if (ramp > 0.0) {
                    const Tensor& harm = family.mode_harm[static_cast<size_t>(mode)];
                    const Tensor& phase = family.mode_phase[static_cast<size_t>(mode)];
                    double u = static_cast<double>(t - (h - 1)) / static_cast<double>(f);
                    double delta = 0.0;
                    for (int64_t q = 0; q < 2; ++q) {
                        delta += harm.at(q, c) *
                                 std::sin(M_PI * static_cast<double>(q + 1) * u +
                                          phase.at(q, c));
                    }
                    v += ramp * delta;
                }
                v += clamped_normal(ir, spec.noise_floor);
                frames.at(t, c) = v;
            }
        }
        mode_out = mode;
        family_out = fam;
        return make_motion(std::move(frames), h, f);
    };

    SyntheticCorpus corpus;
    corpus.spec = spec;
    corpus.step_bound = bound;
    for (int64_t i = 0; i < spec.n_train; ++i) {
        Rng ir = root.spawn(0x100000 + static_cast<uint64_t>(i));
        int64_t mode, fam;
        corpus.train.push_back(make_item(ir, mode, fam));
        corpus.train_modes.push_back(mode);
        corpus.train_families.push_back(fam);
    }
    for (int64_t i = 0; i < spec.n_test; ++i) {
        Rng ir = root.spawn(0x200000 + static_cast<uint64_t>(i));
        int64_t mode, fam;
        corpus.test.push_back(make_item(ir, mode, fam));
        corpus.test_modes.push_back(mode);
        corpus.test_families.push_back(fam);
    }
    return corpus;
}

std::vector<Tensor> observations_of(const std::vector<MotionSequence>& items) {
    std::vector<Tensor> obs;
    obs.reserve(items.size());
    for (const MotionSequence& m : items) obs.push_back(m.observed_frames());
    return obs;
}

}  // namespace swiftdiff
