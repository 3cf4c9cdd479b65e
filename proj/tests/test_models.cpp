#include <cmath>

#include "doctest.h"
#include "swiftdiff/engine.hpp"
#include "swiftdiff/errors.hpp"
#include "swiftdiff/models.hpp"
#include "swiftdiff/rng.hpp"
#include "test_util.hpp"

using namespace swiftdiff;
using testutil::param_gradcheck;
using testutil::random_tensor;

namespace {

void zero_segment(ParamStore& ps, const std::string& prefix) {
    bool found = false;
    for (size_t i = 0; i < ps.count(); ++i) {
        if (ps.name(i).rfind(prefix, 0) == 0) {
            ps[i] = Tensor::zeros(ps[i].shape());
            found = true;
        }
    }
    REQUIRE(found);
}

// Standalone SE gate on a single item, built from raw tensors.
Tensor se_forward(const Tensor& tokens, const Tensor& w1, const Tensor& b1,
                  const Tensor& w2, const Tensor& b2) {
    ParamStore ps;
    size_t i1 = ps.add("w1", w1.shape());
    size_t i2 = ps.add("b1", b1.shape());
    size_t i3 = ps.add("w2", w2.shape());
    size_t i4 = ps.add("b2", b2.shape());
    ps[i1] = w1;
    ps[i2] = b1;
    ps[i3] = w2;
    ps[i4] = b2;
    EagerEngine eng;
    return detail::se_gate(eng, tokens, ps, detail::SeIdx{i1, i2, i3, i4}, 1, tokens.rows());
}

}  // namespace

TEST_CASE("se block with zero excite weights halves the tokens") {
    Rng rng(1);
    int64_t t = 6, d = 8, hid = se_hidden_width(t, 4);
    Tensor tokens = random_tensor(rng, {t, d});
    Tensor out = se_forward(tokens, Tensor::zeros({t, hid}), Tensor::zeros({1, hid}),
                            Tensor::zeros({hid, t}), Tensor::zeros({1, t}));
    for (int64_t i = 0; i < tokens.numel(); ++i) {
        CHECK(out.at(i) == doctest::Approx(0.5 * tokens.at(i)).epsilon(1e-12));
    }
}

TEST_CASE("se block is permutation-equivariant on identical tokens") {
    // The excite FC mixes token positions, so scales are position-dependent in
    // general; with all tokens equal, any permutation of the input is a no-op
    // and the output must be unchanged. Each row is still scaled by a single
    // scalar.
    Rng rng(2);
    int64_t t = 5, d = 7, hid = se_hidden_width(t, 4);
    Tensor row = random_tensor(rng, {1, d});
    Tensor tokens({t, d});
    for (int64_t i = 0; i < t; ++i) {
        for (int64_t j = 0; j < d; ++j) tokens.at(i, j) = row.at(0, j);
    }
    Tensor w1 = random_tensor(rng, {t, hid});
    Tensor b1 = random_tensor(rng, {1, hid});
    Tensor w2 = random_tensor(rng, {hid, t});
    Tensor b2 = random_tensor(rng, {1, t});
    Tensor out = se_forward(tokens, w1, b1, w2, b2);

    // permuted-identical input -> bit-identical output
    Tensor permuted = tokens;  // rows equal, any permutation is the same tensor
    Tensor out2 = se_forward(permuted, w1, b1, w2, b2);
    CHECK(out.bit_equal(out2));

    // each token is rescaled by one scalar in (0, 1)
    for (int64_t i = 0; i < t; ++i) {
        double s = out.at(i, 0) / tokens.at(i, 0);
        CHECK(s > 0.0);
        CHECK(s < 1.0);
        for (int64_t j = 1; j < d; ++j) {
            CHECK(out.at(i, j) / tokens.at(i, j) == doctest::Approx(s).epsilon(1e-10));
        }
    }
}

TEST_CASE("se block matches a direct formula evaluation") {
    Rng rng(3);
    int64_t t = 4, d = 8, r = 4;
    int64_t hid = se_hidden_width(t, r);  // = 1
    Tensor tokens = random_tensor(rng, {t, d});
    Tensor w1 = random_tensor(rng, {t, hid});
    Tensor b1 = random_tensor(rng, {1, hid});
    Tensor w2 = random_tensor(rng, {hid, t});
    Tensor b2 = random_tensor(rng, {1, t});

    // oracle: hand-rolled loops
    std::vector<double> z(static_cast<size_t>(t));
    for (int64_t i = 0; i < t; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j) s += tokens.at(i, j);
        z[static_cast<size_t>(i)] = s / static_cast<double>(d);
    }
    std::vector<double> h(static_cast<size_t>(hid));
    for (int64_t q = 0; q < hid; ++q) {
        double s = b1.at(0, q);
        for (int64_t i = 0; i < t; ++i) s += z[static_cast<size_t>(i)] * w1.at(i, q);
        double x = s;
        h[static_cast<size_t>(q)] = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
    }
    for (int64_t i = 0; i < t; ++i) {
        double s = b2.at(0, i);
        for (int64_t q = 0; q < hid; ++q) s += h[static_cast<size_t>(q)] * w2.at(q, i);
        double scale = 1.0 / (1.0 + std::exp(-s));
        Tensor out = se_forward(tokens, w1, b1, w2, b2);
        for (int64_t j = 0; j < d; ++j) {
            CHECK(out.at(i, j) == doctest::Approx(tokens.at(i, j) * scale).epsilon(1e-10));
        }
    }
}

TEST_CASE("se reduction falls back to no bottleneck when T < r") {
    CHECK(se_hidden_width(3, 4) == 3);
    CHECK(se_hidden_width(8, 4) == 2);
    CHECK(se_hidden_width(9, 4) == 2);
}

TEST_CASE("teacher: zero output head gives zero noise prediction") {
    Rng rng(4);
    TeacherConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.ffn_dim = 32;
    cfg.coeff_rows = 4;
    cfg.joints = 2;
    TeacherModel model(cfg, rng);
    zero_segment(model.params(), "head");
    Tensor y = random_tensor(rng, {4, 6});
    Tensor c = random_tensor(rng, {4, 6});
    Tensor out = model.forward_eager(y, c, 3);
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.at(i) == 0.0);
}

TEST_CASE("teacher: output shape matches input coefficients for an (L, J) sweep") {
    Rng rng(5);
    for (int64_t l : {2, 4, 7}) {
        for (int64_t j : {1, 3}) {
            TeacherConfig cfg;
            cfg.n_layers = 1;
            cfg.d_model = 8;
            cfg.n_heads = 2;
            cfg.ffn_dim = 8;
            cfg.coeff_rows = l;
            cfg.joints = j;
            TeacherModel model(cfg, rng);
            Tensor y = random_tensor(rng, {l, 3 * j});
            Tensor c = random_tensor(rng, {l, 3 * j});
            Tensor out = model.forward_eager(y, c, 0);
            CHECK(out.rows() == l);
            CHECK(out.cols() == 3 * j);
        }
    }
}

TEST_CASE("teacher: step embedding is live") {
    Rng rng(6);
    TeacherConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.ffn_dim = 32;
    cfg.coeff_rows = 4;
    cfg.joints = 2;
    TeacherModel model(cfg, rng);
    Tensor y = random_tensor(rng, {4, 6});
    Tensor c = random_tensor(rng, {4, 6});
    Tensor lo = model.forward_eager(y, c, 0);
    Tensor hi = model.forward_eager(y, c, 999);
    double diff = 0.0;
    for (int64_t i = 0; i < lo.numel(); ++i) diff += std::abs(lo.at(i) - hi.at(i));
    CHECK(diff > 1e-8);
}

TEST_CASE("teacher: shape mismatch raises") {
    Rng rng(7);
    TeacherConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.ffn_dim = 8;
    cfg.coeff_rows = 4;
    cfg.joints = 2;
    TeacherModel model(cfg, rng);
    Tensor bad = random_tensor(rng, {3, 6});
    CHECK_THROWS_AS(model.forward_eager(bad, bad, 0), ShapeError);
}

TEST_CASE("student: zero head gives zero output and the API admits no step") {
    Rng rng(8);
    StudentConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 16;
    cfg.coeff_rows = 4;
    cfg.joints = 2;
    StudentModel model(cfg, rng);
    zero_segment(model.params(), "head");
    Tensor y = random_tensor(rng, {4, 6});
    Tensor c = random_tensor(rng, {4, 6});
    Tensor out = model.forward_eager(y, c);
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.at(i) == 0.0);
}

TEST_CASE("both forwards are deterministic and tape matches eager bit-exactly") {
    Rng rng(9);
    TeacherConfig tc;
    tc.n_layers = 2;
    tc.d_model = 16;
    tc.n_heads = 2;
    tc.ffn_dim = 32;
    tc.coeff_rows = 3;
    tc.joints = 2;
    TeacherModel teacher(tc, rng);
    Tensor y = random_tensor(rng, {3, 6});
    Tensor c = random_tensor(rng, {3, 6});
    Tensor e1 = teacher.forward_eager(y, c, 5);
    Tensor e2 = teacher.forward_eager(y, c, 5);
    CHECK(e1.bit_equal(e2));

    Tape tape;
    TapeEngine eng(tape);
    Value out = teacher.forward(eng, tape.input(y), tape.input(c), {5}, 1);
    CHECK(out.tensor().bit_equal(e1));

    StudentConfig sc;
    sc.n_layers = 2;
    sc.d_model = 16;
    sc.coeff_rows = 3;
    sc.joints = 2;
    StudentModel student(sc, rng);
    Tensor s1 = student.forward_eager(y, c);
    Tape tape2;
    TapeEngine eng2(tape2);
    Value sout = student.forward(eng2, tape2.input(y), tape2.input(c), 1);
    CHECK(sout.tensor().bit_equal(s1));
}

TEST_CASE("parameter count formula matches an independent hand count (1 layer)") {
    TeacherConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.ffn_dim = 24;
    cfg.se_reduction = 4;
    cfg.coeff_rows = 3;
    cfg.joints = 2;
    // hand count: T = 7 tokens, ch = 6
    int64_t t = 7, ch = 6, d = 16, ffn = 24, hid = 1;  // 7/4 -> 1
    int64_t embeds = 2 * (ch * d + d);
    int64_t step = 2 * (d * d + d);
    int64_t se = t * hid + hid + hid * t + t;
    int64_t attn = 4 * (d * d + d);
    int64_t ffn_params = d * ffn + ffn + ffn * d + d;
    int64_t head = d * ch + ch;
    int64_t expected = embeds + step + se + attn + ffn_params + head;  // no skip pairs
    CHECK(TeacherModel::param_count(cfg) == expected);

    Rng rng(10);
    TeacherModel model(cfg, rng);
    CHECK(model.params().total_params() == expected);

    StudentConfig scfg;
    scfg.n_layers = 1;
    scfg.d_model = 16;
    scfg.se_reduction = 4;
    scfg.coeff_rows = 3;
    scfg.joints = 2;
    scfg.seq_expand = 2;
    scfg.chan_expand = 1;
    int64_t st = 6, sst = 12, cd = 16;
    int64_t s_embeds = 2 * (ch * d + d);
    int64_t s_ln = 2 * (2 * d);
    int64_t s_se = st * 1 + 1 + 1 * st + st;
    int64_t s_seq = st * sst + sst + sst * st + st;
    int64_t s_chan = d * cd + cd + cd * d + d;
    int64_t s_head = d * ch + ch;
    int64_t s_expected = s_embeds + s_ln + s_se + s_seq + s_chan + s_head;
    CHECK(StudentModel::param_count(scfg) == s_expected);
}

TEST_CASE("doubling d_model strictly increases the parameter count") {
    TeacherConfig cfg;
    cfg.coeff_rows = 8;
    cfg.joints = 4;
    TeacherConfig big = cfg;
    big.d_model *= 2;
    CHECK(TeacherModel::param_count(big) > TeacherModel::param_count(cfg));

    StudentConfig s;
    s.coeff_rows = 8;
    s.joints = 4;
    StudentConfig sbig = s;
    sbig.d_model *= 2;
    CHECK(StudentModel::param_count(sbig) > StudentModel::param_count(s));
}

TEST_CASE("student parameter count for the published 12x768 configuration") {
    // 25 observed + 100 future frames at 16 joints, L = N/2
    StudentConfig cfg;
    cfg.n_layers = 12;
    cfg.d_model = 768;
    cfg.se_reduction = 4;
    cfg.coeff_rows = 62;
    cfg.joints = 16;
    cfg.seq_expand = 2;
    cfg.chan_expand = 1;
    double count = static_cast<double>(StudentModel::param_count(cfg));
    double published = 15.04e6;
    CHECK(std::abs(count - published) / published < 0.20);
}

TEST_CASE("gradcheck: 2-layer teacher noise-prediction loss") {
    Rng rng(11);
    TeacherConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.ffn_dim = 8;
    cfg.coeff_rows = 2;
    cfg.joints = 1;
    TeacherModel model(cfg, rng);
    Tensor y = random_tensor(rng, {2, 3});
    Tensor c = random_tensor(rng, {2, 3});
    Tensor target = random_tensor(rng, {2, 3});

    auto loss = [&](Tape& t, TapeEngine& e) {
        Value out = model.forward(e, t.input(y), t.input(c), {7}, 1);
        Value diff = ad::sub(t.input(target), out);
        return ad::mean_all(ad::mul(diff, diff));
    };
    CHECK(param_gradcheck(loss, model.params(), 1e-4) < 1e-4);
}

TEST_CASE("gradcheck: 2-layer student loss") {
    Rng rng(12);
    StudentConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 8;
    cfg.coeff_rows = 2;
    cfg.joints = 1;
    StudentModel model(cfg, rng);
    Tensor y = random_tensor(rng, {2, 3});
    Tensor c = random_tensor(rng, {2, 3});
    Tensor target = random_tensor(rng, {2, 3});

    auto loss = [&](Tape& t, TapeEngine& e) {
        Value out = model.forward(e, t.input(y), t.input(c), 1);
        Value diff = ad::sub(t.input(target), out);
        return ad::mean_all(ad::mul(diff, diff));
    };
    CHECK(param_gradcheck(loss, model.params(), 1e-4) < 1e-4);
}

TEST_CASE("parameter stores flatten and reload exactly") {
    Rng rng(13);
    StudentConfig cfg;
    cfg.coeff_rows = 4;
    cfg.joints = 2;
    StudentModel a(cfg, rng);
    StudentModel b(cfg, rng);
    CHECK_FALSE(a.params().content_hash() == b.params().content_hash());
    b.params().load_flat(a.params().flatten());
    CHECK(a.params().content_hash() == b.params().content_hash());
    Tensor y = random_tensor(rng, {4, 6});
    Tensor c = random_tensor(rng, {4, 6});
    CHECK(a.forward_eager(y, c).bit_equal(b.forward_eager(y, c)));
}
