#include "swiftdiff/models.hpp"

#include <cmath>

#include "swiftdiff/errors.hpp"

namespace swiftdiff {

size_t ParamStore::add(std::string name, std::vector<int64_t> shape) {
    names_.push_back(std::move(name));
    values_.emplace_back(std::move(shape));
    return values_.size() - 1;
}

int64_t ParamStore::total_params() const {
    int64_t n = 0;
    for (const Tensor& t : values_) n += t.numel();
    return n;
}

std::vector<double> ParamStore::flatten() const {
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(total_params()));
    for (const Tensor& t : values_) {
        flat.insert(flat.end(), t.raw().begin(), t.raw().end());
    }
    return flat;
}

void ParamStore::load_flat(const std::vector<double>& flat) {
    if (static_cast<int64_t>(flat.size()) != total_params()) {
        throw ShapeError("load_flat: expected " + std::to_string(total_params()) +
                         " values, got " + std::to_string(flat.size()));
    }
    size_t off = 0;
    for (Tensor& t : values_) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + t.raw().size()),
                  t.raw().begin());
        off += t.raw().size();
    }
}

void ParamStore::copy_from(const ParamStore& other) {
    if (other.count() != count() || other.total_params() != total_params()) {
        throw ShapeError("copy_from: parameter stores are not congruent");
    }
    for (size_t i = 0; i < count(); ++i) {
        if (!values_[i].same_shape(other.values_[i])) {
            throw ShapeError("copy_from: segment " + names_[i] + " shape mismatch");
        }
        values_[i] = other.values_[i];
    }
}

uint64_t ParamStore::content_hash() const {
    uint64_t h = 1469598103934665603ull;
    for (const Tensor& t : values_) {
        h = fnv1a(t.raw().data(), t.raw().size() * sizeof(double), h);
    }
    return h;
}

std::vector<Tensor*> ParamStore::pointers() {
    std::vector<Tensor*> p;
    p.reserve(values_.size());
    for (Tensor& t : values_) p.push_back(&t);
    return p;
}

void TeacherConfig::validate() const {
    if (n_layers < 1) throw ConfigError("teacher: n_layers must be >= 1");
    if (d_model < 8 || d_model % 2 != 0) {
        throw ConfigError("teacher: d_model must be even and >= 8");
    }
    if (n_heads < 1 || d_model % n_heads != 0) {
        throw ConfigError("teacher: d_model must be divisible by n_heads");
    }
    if (ffn_dim < 1) throw ConfigError("teacher: ffn_dim must be >= 1");
    if (se_reduction < 1) throw ConfigError("teacher: se_reduction must be >= 1");
    if (coeff_rows < 1 || joints < 1) throw ConfigError("teacher: L and J must be >= 1");
}

void StudentConfig::validate() const {
    if (n_layers < 1) throw ConfigError("student: n_layers must be >= 1");
    if (d_model < 8) throw ConfigError("student: d_model must be >= 8");
    if (se_reduction < 1) throw ConfigError("student: se_reduction must be >= 1");
    if (coeff_rows < 1 || joints < 1) throw ConfigError("student: L and J must be >= 1");
    if (seq_expand < 1 || chan_expand < 1) {
        throw ConfigError("student: expansion ratios must be >= 1");
    }
}

int64_t se_hidden_width(int64_t tokens, int64_t reduction) {
    if (tokens < reduction) return tokens;  // no bottleneck rather than failure
    return tokens / reduction;
}

Tensor step_embedding(const std::vector<int64_t>& steps, int64_t dim) {
    int64_t b = static_cast<int64_t>(steps.size());
    Tensor e({b, dim});
    int64_t half = dim / 2;
    for (int64_t i = 0; i < b; ++i) {
        double k = static_cast<double>(steps[static_cast<size_t>(i)]);
        for (int64_t j = 0; j < half; ++j) {
            double freq = std::exp(-std::log(10000.0) * static_cast<double>(j) /
                                   static_cast<double>(half));
            e.at(i, 2 * j) = std::sin(k * freq);
            e.at(i, 2 * j + 1) = std::cos(k * freq);
        }
    }
    return e;
}

namespace {

// Weights: fan-in-scaled normal; biases zero.
void init_linear(ParamStore& ps, size_t w, Rng& rng) {
    Tensor& t = ps[w];
    double std = 1.0 / std::sqrt(static_cast<double>(t.rows()));
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.normal() * std;
}

int64_t linear_count(int64_t fan_in, int64_t fan_out) { return fan_in * fan_out + fan_out; }

int64_t se_count(int64_t tokens, int64_t reduction) {
    int64_t hid = se_hidden_width(tokens, reduction);
    return linear_count(tokens, hid) + linear_count(hid, tokens);
}

}  // namespace

int64_t TeacherModel::param_count(const TeacherConfig& cfg) {
    int64_t d = cfg.d_model, ch = cfg.channels(), t = cfg.tokens();
    int64_t n = 0;
    n += 2 * linear_count(ch, d);                       // condition / noisy embeds
    n += 2 * linear_count(d, d);                        // step-embedding MLP
    int64_t per_layer = se_count(t, cfg.se_reduction) + 4 * linear_count(d, d) +
                        linear_count(d, cfg.ffn_dim) + linear_count(cfg.ffn_dim, d);
    n += cfg.n_layers * per_layer;
    n += (cfg.n_layers / 2) * linear_count(2 * d, d);   // long-skip projections
    n += linear_count(d, ch);                           // output head
    return n;
}

TeacherModel::TeacherModel(TeacherConfig cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    int64_t d = cfg_.d_model, ch = cfg_.channels(), t = cfg_.tokens();
    int64_t hid = se_hidden_width(t, cfg_.se_reduction);

    auto lin = [&](const std::string& name, int64_t in, int64_t out, size_t& w, size_t& b) {
        w = params_.add(name + ".w", {in, out});
        b = params_.add(name + ".b", {1, out});
        init_linear(params_, w, rng);
    };

    lin("embed_c", ch, d, embed_c_w_, embed_c_b_);
    lin("embed_y", ch, d, embed_y_w_, embed_y_b_);
    lin("step.fc1", d, d, step_w1_, step_b1_);
    lin("step.fc2", d, d, step_w2_, step_b2_);

    for (int64_t i = 0; i < cfg_.n_layers; ++i) {
        std::string p = "layer" + std::to_string(i);
        LayerIdx ly;
        lin(p + ".se.fc1", t, hid, ly.se.w1, ly.se.b1);
        lin(p + ".se.fc2", hid, t, ly.se.w2, ly.se.b2);
        lin(p + ".attn.q", d, d, ly.wq, ly.bq);
        lin(p + ".attn.k", d, d, ly.wk, ly.bk);
        lin(p + ".attn.v", d, d, ly.wv, ly.bv);
        lin(p + ".attn.out", d, d, ly.wo, ly.bo);
        lin(p + ".ffn.fc1", d, cfg_.ffn_dim, ly.ffn_w1, ly.ffn_b1);
        lin(p + ".ffn.fc2", cfg_.ffn_dim, d, ly.ffn_w2, ly.ffn_b2);
        layers_.push_back(ly);
    }
    for (int64_t p = 0; p < cfg_.n_layers / 2; ++p) {
        size_t w, b;
        lin("skip" + std::to_string(p), 2 * d, d, w, b);
        skip_w_.push_back(w);
        skip_b_.push_back(b);
    }
    lin("head", d, ch, head_w_, head_b_);

    if (params_.total_params() != param_count(cfg_)) {
        throw ConfigError("teacher: parameter layout does not match count formula");
    }
}

Tensor TeacherModel::forward_eager(const Tensor& y_noisy, const Tensor& cond,
                                   int64_t step) const {
    EagerEngine eng;
    return forward(eng, y_noisy, cond, {step}, 1);
}

int64_t StudentModel::param_count(const StudentConfig& cfg) {
    int64_t d = cfg.d_model, ch = cfg.channels(), t = cfg.tokens();
    int64_t st = cfg.seq_expand * t, cd = cfg.chan_expand * d;
    int64_t n = 0;
    n += 2 * linear_count(ch, d);
    int64_t per_layer = 2 * d + se_count(t, cfg.se_reduction) + linear_count(t, st) +
                        linear_count(st, t) + 2 * d + linear_count(d, cd) +
                        linear_count(cd, d);
    n += cfg.n_layers * per_layer;
    n += linear_count(d, ch);
    return n;
}

StudentModel::StudentModel(StudentConfig cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    int64_t d = cfg_.d_model, ch = cfg_.channels(), t = cfg_.tokens();
    int64_t hid = se_hidden_width(t, cfg_.se_reduction);
    int64_t st = cfg_.seq_expand * t, cd = cfg_.chan_expand * d;

    auto lin = [&](const std::string& name, int64_t in, int64_t out, size_t& w, size_t& b) {
        w = params_.add(name + ".w", {in, out});
        b = params_.add(name + ".b", {1, out});
        init_linear(params_, w, rng);
    };

    lin("embed_c", ch, d, embed_c_w_, embed_c_b_);
    lin("embed_y", ch, d, embed_y_w_, embed_y_b_);

    for (int64_t i = 0; i < cfg_.n_layers; ++i) {
        std::string p = "layer" + std::to_string(i);
        LayerIdx ly;
        ly.ln1_g = params_.add(p + ".ln1.g", {1, d});
        ly.ln1_b = params_.add(p + ".ln1.b", {1, d});
        params_[ly.ln1_g] = Tensor::full({1, d}, 1.0);
        lin(p + ".se.fc1", t, hid, ly.se.w1, ly.se.b1);
        lin(p + ".se.fc2", hid, t, ly.se.w2, ly.se.b2);
        lin(p + ".seqmix.fc1", t, st, ly.seq_w1, ly.seq_b1);
        lin(p + ".seqmix.fc2", st, t, ly.seq_w2, ly.seq_b2);
        ly.ln2_g = params_.add(p + ".ln2.g", {1, d});
        ly.ln2_b = params_.add(p + ".ln2.b", {1, d});
        params_[ly.ln2_g] = Tensor::full({1, d}, 1.0);
        lin(p + ".chanmix.fc1", d, cd, ly.chan_w1, ly.chan_b1);
        lin(p + ".chanmix.fc2", cd, d, ly.chan_w2, ly.chan_b2);
        layers_.push_back(ly);
    }
    lin("head", d, ch, head_w_, head_b_);

    if (params_.total_params() != param_count(cfg_)) {
        throw ConfigError("student: parameter layout does not match count formula");
    }
}

Tensor StudentModel::forward_eager(const Tensor& y_noisy, const Tensor& cond) const {
    EagerEngine eng;
    return forward(eng, y_noisy, cond, 1);
}

}  // namespace swiftdiff
