#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "techcoach/encoder.hpp"
#include "testutil.hpp"

using namespace techcoach;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * scale;
    return t;
}

void randomize(Param& p, Rng& rng, double scale) {
    for (int64_t i = 0; i < p.value.numel(); ++i) p.value[i] = rng.normal() * scale;
}

void zero(Param& p) { p.value.fill(0.0); }

}  // namespace

TEST_CASE("view fusion concatenates ego channels before exo channels") {
    ClipFeatureSet f;
    f.instance_id = "x";
    f.views.emplace_back("ego", Tensor({2, 2, 2, 3}, 1.0));
    f.views.emplace_back("exo", Tensor({2, 2, 2, 3}, 2.0));

    Tensor fused = fuse_views(f);
    REQUIRE(fused.shape() == Shape{2, 2, 2, 6});
    for (int t = 0; t < 2; ++t)
        for (int h = 0; h < 2; ++h)
            for (int w = 0; w < 2; ++w)
                for (int c = 0; c < 6; ++c) CHECK(fused.at(t, h, w, c) == (c < 3 ? 1.0 : 2.0));

    // Fusing two [16,8,8,4] views yields [16,8,8,8].
    ClipFeatureSet big;
    big.views.emplace_back("ego", Tensor({16, 8, 8, 4}));
    big.views.emplace_back("exo", Tensor({16, 8, 8, 4}));
    CHECK(fuse_views(big).shape() == Shape{16, 8, 8, 8});
}

TEST_CASE("view fusion validates its inputs") {
    ClipFeatureSet one;
    one.views.emplace_back("ego", Tensor({2, 2, 2, 3}));
    CHECK_THROWS_WITH_AS(fuse_views(one), doctest::Contains("exactly 2"), std::runtime_error);

    ClipFeatureSet mismatched;
    mismatched.views.emplace_back("ego", Tensor({2, 2, 2, 3}));
    mismatched.views.emplace_back("exo", Tensor({2, 2, 2, 4}));
    CHECK_THROWS_WITH_AS(fuse_views(mismatched), doctest::Contains("differ"), std::runtime_error);

    ClipFeatureSet flat;
    flat.views.emplace_back("ego", Tensor({4, 3}));
    flat.views.emplace_back("exo", Tensor({4, 3}));
    CHECK_THROWS_AS(fuse_views(flat), std::runtime_error);
}

TEST_CASE("enhancer maps a fused clip to one context row per position") {
    EncoderConfig cfg;
    cfg.t = 16;
    cfg.h = 8;
    cfg.w = 8;
    cfg.d_in = 4;  // two views of 4 channels fuse to 8
    cfg.d_model = 32;
    cfg.n_st = 1;
    cfg.heads = 4;

    ParamStore store;
    Rng rng(21);
    STEnhancer enc(cfg, store, rng);

    Rng data(22);
    Tensor fused = random_tensor({16, 8, 8, 8}, data);
    Graph g;
    Var out = enc.forward(g, fused);
    CHECK(out.rows() == 16 * 8 * 8);
    CHECK(out.cols() == 32);
    CHECK(g.value(out).reshaped({16, 8, 8, 32}).shape() == Shape{16, 8, 8, 32});

    Tensor wrong = random_tensor({16, 8, 8, 4}, data);
    Graph g2;
    CHECK_THROWS_WITH_AS(enc.forward(g2, wrong), doctest::Contains("fused input"),
                         std::runtime_error);
}

TEST_CASE("zeroed residual branches reduce the enhancer to its input projection") {
    EncoderConfig cfg;
    cfg.t = 3;
    cfg.h = 2;
    cfg.w = 2;
    cfg.d_in = 2;
    cfg.d_model = 8;
    cfg.n_st = 2;
    cfg.heads = 2;

    ParamStore store;
    Rng rng(23);
    STEnhancer enc(cfg, store, rng);
    for (int b = 0; b < cfg.n_st; ++b) {
        std::string prefix = "enhancer.block" + std::to_string(b);
        zero(store.find(prefix + ".spatial.wo"));
        zero(store.find(prefix + ".spatial.bo"));
        zero(store.find(prefix + ".temporal.wo"));
        zero(store.find(prefix + ".temporal.bo"));
        zero(store.find(prefix + ".ffn.w2"));
        zero(store.find(prefix + ".ffn.b2"));
    }

    Rng data(24);
    Tensor fused = random_tensor({3, 2, 2, 4}, data);

    Graph g;
    Tensor got = g.value(enc.forward(g, fused));

    Graph g2;
    Tensor want = g2.value(g2.linear(g2.constant(fused.reshaped({12, 4})),
                                     g2.param(store.find("enhancer.proj.w")),
                                     g2.param(store.find("enhancer.proj.b"))));
    REQUIRE(got.same_shape(want));
    for (int64_t i = 0; i < got.numel(); ++i) CHECK(got[i] == want[i]);
}

TEST_CASE("enhancer matches a plain-loop reference on a tiny clip") {
    EncoderConfig cfg;
    cfg.t = 2;
    cfg.h = 1;
    cfg.w = 2;
    cfg.d_in = 1;
    cfg.d_model = 4;
    cfg.n_st = 1;
    cfg.heads = 2;
    cfg.ffn_mult = 2;

    ParamStore store;
    Rng rng(25);
    STEnhancer enc(cfg, store, rng);
    // Position embeddings are zero-initialized; give them real values so the
    // reference exercises them too.
    randomize(store.find("enhancer.pos_spatial"), rng, 0.3);
    randomize(store.find("enhancer.pos_temporal"), rng, 0.3);

    Rng data(26);
    Tensor fused = random_tensor({2, 1, 2, 2}, data);

    Graph g;
    Tensor got = g.value(enc.forward(g, fused));

    // Reference: project, add positions, then spatial attention within each
    // time step, temporal attention at each spatial position, feed-forward,
    // every sublayer pre-normalized and residual.
    const int hw = 2, n = 4;
    auto v = [&](const char* name) -> const Tensor& { return store.find(name).value; };
    Tensor x = refcalc::linear(fused.reshaped({n, 2}), v("enhancer.proj.w"), v("enhancer.proj.b"));
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < 4; ++c)
            x.at(r, c) += v("enhancer.pos_spatial").at(r % hw, c) +
                          v("enhancer.pos_temporal").at(r / hw, c);

    auto attn_rows = [&](const Tensor& normed, const std::vector<int>& rows, const char* prefix) {
        Tensor slab({static_cast<int>(rows.size()), 4});
        for (size_t i = 0; i < rows.size(); ++i)
            for (int c = 0; c < 4; ++c) slab.at(static_cast<int>(i), c) = normed.at(rows[i], c);
        std::string p(prefix);
        return refcalc::attention(slab, slab, v((p + ".wq").c_str()), v((p + ".bq").c_str()),
                                  v((p + ".wk").c_str()), v((p + ".bk").c_str()),
                                  v((p + ".wv").c_str()), v((p + ".bv").c_str()),
                                  v((p + ".wo").c_str()), v((p + ".bo").c_str()), cfg.heads);
    };

    // Spatial: time step 0 owns rows {0,1}, step 1 owns rows {2,3}.
    Tensor normed = refcalc::layer_norm(x, v("enhancer.block0.ln_spatial.gamma"),
                                        v("enhancer.block0.ln_spatial.beta"));
    for (int step = 0; step < 2; ++step) {
        std::vector<int> rows = {step * hw, step * hw + 1};
        Tensor out = attn_rows(normed, rows, "enhancer.block0.spatial");
        for (size_t i = 0; i < rows.size(); ++i)
            for (int c = 0; c < 4; ++c) x.at(rows[i], c) += out.at(static_cast<int>(i), c);
    }

    // Temporal: spatial position 0 owns rows {0,2}, position 1 owns {1,3}.
    normed = refcalc::layer_norm(x, v("enhancer.block0.ln_temporal.gamma"),
                                 v("enhancer.block0.ln_temporal.beta"));
    for (int s = 0; s < hw; ++s) {
        std::vector<int> rows = {s, hw + s};
        Tensor out = attn_rows(normed, rows, "enhancer.block0.temporal");
        for (size_t i = 0; i < rows.size(); ++i)
            for (int c = 0; c < 4; ++c) x.at(rows[i], c) += out.at(static_cast<int>(i), c);
    }

    normed = refcalc::layer_norm(x, v("enhancer.block0.ln_ffn.gamma"),
                                 v("enhancer.block0.ln_ffn.beta"));
    Tensor mlp = refcalc::ffn(normed, v("enhancer.block0.ffn.w1"), v("enhancer.block0.ffn.b1"),
                              v("enhancer.block0.ffn.w2"), v("enhancer.block0.ffn.b2"));
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < 4; ++c) x.at(r, c) += mlp.at(r, c);

    REQUIRE(got.same_shape(x));
    for (int64_t i = 0; i < got.numel(); ++i) CHECK(got[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("disabling temporal attention keeps time steps independent") {
    EncoderConfig cfg;
    cfg.t = 3;
    cfg.h = 2;
    cfg.w = 2;
    cfg.d_in = 2;
    cfg.d_model = 8;
    cfg.n_st = 2;
    cfg.heads = 2;

    ParamStore store;
    Rng rng(27);
    STEnhancer enc(cfg, store, rng);

    Rng data(28);
    Tensor fused = random_tensor({3, 2, 2, 4}, data);
    Tensor poked = fused;
    for (int h = 0; h < 2; ++h)
        for (int w = 0; w < 2; ++w)
            for (int c = 0; c < 4; ++c) poked.at(2, h, w, c) += 1.0 + h + w + c;

    const int hw = 4;
    Graph g1, g2;
    Tensor a = g1.value(enc.forward(g1, fused, /*enable_temporal=*/false));
    Tensor b = g2.value(enc.forward(g2, poked, /*enable_temporal=*/false));
    for (int r = 0; r < 2 * hw; ++r)
        for (int c = 0; c < 8; ++c) CHECK(a.at(r, c) == b.at(r, c));  // untouched steps bit-equal
    bool last_step_differs = false;
    for (int r = 2 * hw; r < 3 * hw; ++r)
        for (int c = 0; c < 8; ++c) last_step_differs |= a.at(r, c) != b.at(r, c);
    CHECK(last_step_differs);

    // With temporal attention on, the perturbation reaches other steps.
    Graph g3, g4;
    Tensor c3 = g3.value(enc.forward(g3, fused, /*enable_temporal=*/true));
    Tensor c4 = g4.value(enc.forward(g4, poked, /*enable_temporal=*/true));
    bool first_step_differs = false;
    for (int r = 0; r < hw; ++r)
        for (int c = 0; c < 8; ++c) first_step_differs |= c3.at(r, c) != c4.at(r, c);
    CHECK(first_step_differs);
}

TEST_CASE("enhancer gradients agree with finite differences") {
    EncoderConfig cfg;
    cfg.t = 2;
    cfg.h = 1;
    cfg.w = 2;
    cfg.d_in = 2;
    cfg.d_model = 4;
    cfg.n_st = 1;
    cfg.heads = 2;
    cfg.ffn_mult = 2;

    ParamStore store;
    Rng rng(29);
    STEnhancer enc(cfg, store, rng);
    randomize(store.find("enhancer.pos_spatial"), rng, 0.3);
    randomize(store.find("enhancer.pos_temporal"), rng, 0.3);

    Rng data(30);
    Tensor fused = random_tensor({2, 1, 2, 4}, data);
    auto build = [&](Graph& g) { return g.mean_all(g.square(enc.forward(g, fused))); };

    Rng pick(31);
    testutil::check_grads_sampled(store.all(), build, 1e-4, 4, pick);
}
