#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swiftdiff/engine.hpp"
#include "swiftdiff/errors.hpp"
#include "swiftdiff/rng.hpp"
#include "swiftdiff/tensor.hpp"

namespace swiftdiff {

// Named parameter segments with flat access for copying and checkpointing.
class ParamStore {
public:
    size_t add(std::string name, std::vector<int64_t> shape);
    Tensor& operator[](size_t i) { return values_[i]; }
    const Tensor& operator[](size_t i) const { return values_[i]; }
    const std::string& name(size_t i) const { return names_[i]; }
    size_t count() const { return values_.size(); }
    int64_t total_params() const;

    std::vector<double> flatten() const;
    void load_flat(const std::vector<double>& flat);
    void copy_from(const ParamStore& other);
    uint64_t content_hash() const;
    std::vector<Tensor*> pointers();

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
};

struct TeacherConfig {
    int64_t n_layers = 4;
    int64_t d_model = 64;
    int64_t n_heads = 4;
    int64_t ffn_dim = 256;
    int64_t se_reduction = 4;
    int64_t coeff_rows = 16;  // L
    int64_t joints = 8;       // J

    int64_t tokens() const { return 2 * coeff_rows + 1; }  // c block, y block, step token
    int64_t channels() const { return 3 * joints; }
    void validate() const;
};

struct StudentConfig {
    int64_t n_layers = 3;
    int64_t d_model = 64;
    int64_t se_reduction = 4;
    int64_t coeff_rows = 16;
    int64_t joints = 8;
    int64_t seq_expand = 2;
    int64_t chan_expand = 1;

    int64_t tokens() const { return 2 * coeff_rows; }
    int64_t channels() const { return 3 * joints; }
    void validate() const;
};

// Sinusoidal embedding of step indices, one row per batch item.
Tensor step_embedding(const std::vector<int64_t>& steps, int64_t dim);

// SE bottleneck width: squeeze over channels yields one scalar per token, the
// excite MLP maps T -> T/r -> T (r forced to 1 when T < r).
int64_t se_hidden_width(int64_t tokens, int64_t reduction);

namespace detail {

struct SeIdx {
    size_t w1, b1, w2, b2;
};

// squeeze: per-token channel mean; excite: FC, GELU, FC, sigmoid; the scales
// multiply tokens row-wise.
template <class E>
typename E::V se_gate(E& eng, const typename E::V& tokens, const ParamStore& ps,
                      const SeIdx& idx, int64_t batch, int64_t t_tokens) {
    auto z = eng.rows_mean(tokens);                       // (B*T, 1)
    auto zb = eng.reshape(z, {batch, t_tokens});          // (B, T)
    auto&& w1 = eng.use_param(ps[idx.w1]);
    auto&& b1 = eng.use_param(ps[idx.b1]);
    auto&& w2 = eng.use_param(ps[idx.w2]);
    auto&& b2 = eng.use_param(ps[idx.b2]);
    auto h = eng.gelu(eng.add(eng.matmul(zb, w1), b1));
    auto s = eng.sigmoid(eng.add(eng.matmul(h, w2), b2));  // (B, T) in (0,1)
    auto scol = eng.reshape(s, {batch * t_tokens, 1});
    return eng.mul(tokens, scol);
}

}  // namespace detail

// SE-Transformer noise predictor: condition, noisy coefficients, and the
// diffusion step enter as tokens; layers are SE gate -> self-attention ->
// feed-forward with residuals; U-style long skips concatenate shallow and
// deep activations and project back to d_model.
class TeacherModel {
public:
    TeacherModel(TeacherConfig cfg, Rng& rng);

    static int64_t param_count(const TeacherConfig& cfg);

    const TeacherConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // y_noisy, cond: (B*L, 3J); steps: one index per batch item.
    template <class E>
    typename E::V forward(E& eng, const typename E::V& y_noisy, const typename E::V& cond,
                          const std::vector<int64_t>& steps, int64_t batch) const;

    Tensor forward_eager(const Tensor& y_noisy, const Tensor& cond, int64_t step) const;

private:
    struct LayerIdx {
        detail::SeIdx se;
        size_t wq, bq, wk, bk, wv, bv, wo, bo;
        size_t ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    };

    TeacherConfig cfg_;
    ParamStore params_;
    size_t embed_c_w_, embed_c_b_, embed_y_w_, embed_y_b_;
    size_t step_w1_, step_b1_, step_w2_, step_b2_;
    std::vector<LayerIdx> layers_;
    std::vector<size_t> skip_w_, skip_b_;
    size_t head_w_, head_b_;
};

// MLP-mixer noise predictor without step conditioning: per layer
// LayerNorm -> SE gate -> token-axis MLP -> residual -> LayerNorm ->
// channel-axis MLP -> residual.
class StudentModel {
public:
    StudentModel(StudentConfig cfg, Rng& rng);

    static int64_t param_count(const StudentConfig& cfg);

    const StudentConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    template <class E>
    typename E::V forward(E& eng, const typename E::V& y_noisy, const typename E::V& cond,
                          int64_t batch) const;

    Tensor forward_eager(const Tensor& y_noisy, const Tensor& cond) const;

private:
    struct LayerIdx {
        size_t ln1_g, ln1_b;
        detail::SeIdx se;
        size_t seq_w1, seq_b1, seq_w2, seq_b2;
        size_t ln2_g, ln2_b;
        size_t chan_w1, chan_b1, chan_w2, chan_b2;
    };

    StudentConfig cfg_;
    ParamStore params_;
    size_t embed_c_w_, embed_c_b_, embed_y_w_, embed_y_b_;
    std::vector<LayerIdx> layers_;
    size_t head_w_, head_b_;
};

// -- template bodies --------------------------------------------------------

template <class E>
typename E::V TeacherModel::forward(E& eng, const typename E::V& y_noisy,
                                    const typename E::V& cond,
                                    const std::vector<int64_t>& steps, int64_t batch) const {
    const int64_t l = cfg_.coeff_rows;
    const int64_t d = cfg_.d_model;
    const int64_t t = cfg_.tokens();
    const int64_t ch = cfg_.channels();
    const auto& yt = E::tensor_of(y_noisy);
    if (yt.rows() != batch * l || yt.cols() != ch ||
        static_cast<int64_t>(steps.size()) != batch) {
        throw ShapeError("teacher_forward: input " + yt.shape_str() + " does not match L=" +
                         std::to_string(l) + " 3J=" + std::to_string(ch) + " B=" +
                         std::to_string(batch));
    }

    auto embed = [&](const typename E::V& x, size_t w, size_t b) {
        auto&& wt = eng.use_param(params_[w]);
        auto&& bt = eng.use_param(params_[b]);
        return eng.add(eng.matmul(x, wt), bt);
    };

    auto tok_c = embed(cond, embed_c_w_, embed_c_b_);
    auto tok_y = embed(y_noisy, embed_y_w_, embed_y_b_);
    auto sin_in = eng.use_input(step_embedding(steps, d));
    auto tok_k = embed(eng.gelu(embed(sin_in, step_w1_, step_b1_)), step_w2_, step_b2_);

    auto tc = eng.reshape(tok_c, {batch, l * d});
    auto ty = eng.reshape(tok_y, {batch, l * d});
    auto tokens = eng.reshape(eng.concat(eng.concat(tc, ty, 1), tok_k, 1), {batch * t, d});

    const int64_t n = cfg_.n_layers;
    const int64_t n_half = n / 2;
    std::vector<typename E::V> saved;
    for (int64_t i = 0; i < n; ++i) {
        const LayerIdx& ly = layers_[static_cast<size_t>(i)];
        if (i >= n - n_half) {
            int64_t p = n - 1 - i;
            auto&& sw = eng.use_param(params_[skip_w_[static_cast<size_t>(p)]]);
            auto&& sb = eng.use_param(params_[skip_b_[static_cast<size_t>(p)]]);
            tokens = eng.add(
                eng.matmul(eng.concat(tokens, saved[static_cast<size_t>(p)], 1), sw), sb);
        }
        if (i < n_half) saved.push_back(tokens);

        auto gated = detail::se_gate(eng, tokens, params_, ly.se, batch, t);
        auto&& wq = eng.use_param(params_[ly.wq]);
        auto&& bq = eng.use_param(params_[ly.bq]);
        auto&& wk = eng.use_param(params_[ly.wk]);
        auto&& bk = eng.use_param(params_[ly.bk]);
        auto&& wv = eng.use_param(params_[ly.wv]);
        auto&& bv = eng.use_param(params_[ly.bv]);
        auto q = eng.add(eng.matmul(gated, wq), bq);
        auto kk = eng.add(eng.matmul(gated, wk), bk);
        auto vv = eng.add(eng.matmul(gated, wv), bv);
        auto att = eng.attention(q, kk, vv, batch, cfg_.n_heads);
        auto&& wo = eng.use_param(params_[ly.wo]);
        auto&& bo = eng.use_param(params_[ly.bo]);
        tokens = eng.add(tokens, eng.add(eng.matmul(att, wo), bo));

        auto&& fw1 = eng.use_param(params_[ly.ffn_w1]);
        auto&& fb1 = eng.use_param(params_[ly.ffn_b1]);
        auto&& fw2 = eng.use_param(params_[ly.ffn_w2]);
        auto&& fb2 = eng.use_param(params_[ly.ffn_b2]);
        auto h = eng.gelu(eng.add(eng.matmul(tokens, fw1), fb1));
        tokens = eng.add(tokens, eng.add(eng.matmul(h, fw2), fb2));
    }

    auto tb = eng.reshape(tokens, {batch, t * d});
    auto yb = eng.reshape(eng.slice(tb, 1, l * d, l * d), {batch * l, d});
    auto&& hw = eng.use_param(params_[head_w_]);
    auto&& hb = eng.use_param(params_[head_b_]);
    return eng.add(eng.matmul(yb, hw), hb);
}

template <class E>
typename E::V StudentModel::forward(E& eng, const typename E::V& y_noisy,
                                    const typename E::V& cond, int64_t batch) const {
    const int64_t l = cfg_.coeff_rows;
    const int64_t d = cfg_.d_model;
    const int64_t t = cfg_.tokens();
    const int64_t ch = cfg_.channels();
    const auto& yt = E::tensor_of(y_noisy);
    if (yt.rows() != batch * l || yt.cols() != ch) {
        throw ShapeError("student_forward: input " + yt.shape_str() + " does not match L=" +
                         std::to_string(l) + " 3J=" + std::to_string(ch) + " B=" +
                         std::to_string(batch));
    }

    auto embed = [&](const typename E::V& x, size_t w, size_t b) {
        auto&& wt = eng.use_param(params_[w]);
        auto&& bt = eng.use_param(params_[b]);
        return eng.add(eng.matmul(x, wt), bt);
    };

    auto tc = eng.reshape(embed(cond, embed_c_w_, embed_c_b_), {batch, l * d});
    auto ty = eng.reshape(embed(y_noisy, embed_y_w_, embed_y_b_), {batch, l * d});
    auto tokens = eng.reshape(eng.concat(tc, ty, 1), {batch * t, d});

    for (const LayerIdx& ly : layers_) {
        auto&& g1 = eng.use_param(params_[ly.ln1_g]);
        auto&& be1 = eng.use_param(params_[ly.ln1_b]);
        auto h = eng.layernorm(tokens, g1, be1, 1e-5);
        h = detail::se_gate(eng, h, params_, ly.se, batch, t);

        auto ht = eng.batched_transpose(h, batch);  // (B*d, T)
        auto&& sw1 = eng.use_param(params_[ly.seq_w1]);
        auto&& sb1 = eng.use_param(params_[ly.seq_b1]);
        auto&& sw2 = eng.use_param(params_[ly.seq_w2]);
        auto&& sb2 = eng.use_param(params_[ly.seq_b2]);
        auto mixed = eng.add(
            eng.matmul(eng.gelu(eng.add(eng.matmul(ht, sw1), sb1)), sw2), sb2);
        tokens = eng.add(tokens, eng.batched_transpose(mixed, batch));

        auto&& g2 = eng.use_param(params_[ly.ln2_g]);
        auto&& be2 = eng.use_param(params_[ly.ln2_b]);
        auto h2 = eng.layernorm(tokens, g2, be2, 1e-5);
        auto&& cw1 = eng.use_param(params_[ly.chan_w1]);
        auto&& cb1 = eng.use_param(params_[ly.chan_b1]);
        auto&& cw2 = eng.use_param(params_[ly.chan_w2]);
        auto&& cb2 = eng.use_param(params_[ly.chan_b2]);
        auto f = eng.add(eng.matmul(eng.gelu(eng.add(eng.matmul(h2, cw1), cb1)), cw2), cb2);
        tokens = eng.add(tokens, f);
    }

    auto tb = eng.reshape(tokens, {batch, t * d});
    auto yb = eng.reshape(eng.slice(tb, 1, l * d, l * d), {batch * l, d});
    auto&& hw = eng.use_param(params_[head_w_]);
    auto&& hb = eng.use_param(params_[head_b_]);
    return eng.add(eng.matmul(yb, hw), hb);
}

}  // namespace swiftdiff
