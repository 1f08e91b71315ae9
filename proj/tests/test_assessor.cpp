#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "techcoach/assessor.hpp"
#include "testutil.hpp"

using namespace techcoach;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * scale;
    return t;
}

constexpr std::array<int, kNumTechDims> kAllMentioned = {1, 1, 1, 1, 1, 1, 1};

struct Fixture {
    AssessorConfig cfg;
    ParamStore store;
    Tokenizer tok = Tokenizer::build({"one two three four five six keep the elbow tucked"});
    Assessor assessor;
    Tensor f_tq, f_v;

    explicit Fixture(int d = 8, int layers = 2, int heads = 2, int n_vid = 4, uint64_t seed = 61)
        : cfg(make_cfg(d, layers, heads)), assessor(make_assessor(cfg, tok, store, seed)),
          f_tq(make_rows(2 * kNumTechDims, d, seed + 1)), f_v(make_rows(n_vid, d, seed + 2)) {}

    static AssessorConfig make_cfg(int d, int layers, int heads) {
        AssessorConfig c;
        c.d_model = d;
        c.layers = layers;
        c.heads = heads;
        c.ffn_mult = 2;
        c.max_text_len = 12;
        return c;
    }
    static Assessor make_assessor(const AssessorConfig& c, const Tokenizer& t, ParamStore& s,
                                  uint64_t seed) {
        Rng rng(seed);
        return Assessor(c, t.vocab_size(), s, rng);
    }
    static Tensor make_rows(int rows, int d, uint64_t seed) {
        Rng rng(seed);
        return random_tensor({rows, d}, rng, 0.5);
    }
};

}  // namespace

TEST_CASE("coaching mask: techpoint and score rows allow exactly the ruled edges") {
    Tensor m = build_coaching_mask(0, 1, 1);
    REQUIRE(m.shape() == Shape{3, 3});
    // Layout: [score, techpoint, video].
    CHECK(m.at(0, 0) == 1.0);
    CHECK(m.at(0, 1) == 1.0);
    CHECK(m.at(0, 2) == 1.0);
    CHECK(m.at(1, 0) == 0.0);
    CHECK(m.at(1, 1) == 1.0);
    CHECK(m.at(1, 2) == 1.0);
    CHECK(m.at(2, 0) == 0.0);
    CHECK(m.at(2, 1) == 0.0);
    CHECK(m.at(2, 2) == 1.0);
}

TEST_CASE("coaching mask: the video block is all-true") {
    for (int k = 1; k <= 4; ++k) {
        Tensor m = build_coaching_mask(0, 0, k);
        REQUIRE(m.shape() == Shape{1 + k, 1 + k});
        for (int q = 1; q <= k; ++q)
            for (int c = 1; c <= k; ++c) CHECK(m.at(q, c) == 1.0);
    }
}

TEST_CASE("coaching mask: text rows are causal") {
    Tensor m = build_coaching_mask(3, 14, 8);
    REQUIRE(m.shape() == Shape{26, 26});
    // Text row 2 sees all text up to itself...
    CHECK(m.at(2, 0) == 1.0);
    CHECK(m.at(2, 1) == 1.0);
    CHECK(m.at(2, 2) == 1.0);
    // ...but earlier rows never see later text.
    CHECK(m.at(1, 2) == 0.0);
    CHECK(m.at(0, 1) == 0.0);
    CHECK(m.at(0, 2) == 0.0);
    // Text also reads the score token, techpoints, and video.
    CHECK(m.at(2, 3) == 1.0);
    CHECK(m.at(2, 4) == 1.0);
    CHECK(m.at(2, 25) == 1.0);
    // The score row never reads text.
    CHECK(m.at(3, 0) == 0.0);
    CHECK(m.at(3, 2) == 0.0);
    // Techpoints read only themselves and video.
    CHECK(m.at(4, 5) == 0.0);
    CHECK(m.at(5, 5) == 1.0);
    CHECK(m.at(4, 3) == 0.0);
}

TEST_CASE("coaching mask agrees with the pairwise rule enumerator on small lengths") {
    for (int text = 0; text <= 5; ++text)
        for (int tp : {0, 14})
            for (int vid = 0; vid <= 5; ++vid) {
                Tensor got = build_coaching_mask(text, tp, vid);
                Tensor want = refcalc::enumerate_mask(text, tp, vid);
                REQUIRE(got.same_shape(want));
                for (int64_t i = 0; i < got.numel(); ++i) {
                    CAPTURE(text);
                    CAPTURE(tp);
                    CAPTURE(vid);
                    CHECK(got[i] == want[i]);
                }
            }
    CHECK_THROWS_AS(build_coaching_mask(-1, 0, 0), std::runtime_error);
}

TEST_CASE("additive mask maps allowed to zero and forbidden to the block value") {
    Tensor binary({2, 2}, {1.0, 0.0, 0.0, 1.0});
    Tensor add = to_additive_mask(binary);
    CHECK(add.at(0, 0) == 0.0);
    CHECK(add.at(0, 1) == kMaskBlock);
    CHECK(add.at(1, 0) == kMaskBlock);
    CHECK(add.at(1, 1) == 0.0);
}

TEST_CASE("assembled sequences lay out text, score, techpoints, then video") {
    Fixture fx(8, 1, 2, /*n_vid=*/1024);
    std::vector<int> text = fx.tok.encode("one two three four five");
    REQUIRE(text.size() == 5);

    Graph g;
    auto seq = fx.assessor.assemble(g, text, g.constant(fx.f_tq), g.constant(fx.f_v), kAllMentioned);
    CHECK(seq.total() == 5 + 1 + 14 + 1024);
    CHECK(seq.score_pos() == 5);
    CHECK(seq.embeddings.rows() == seq.total());
    CHECK(seq.additive_mask.shape() == Shape{seq.total(), seq.total()});
}

TEST_CASE("assemble validates text length and techpoint row count") {
    Fixture fx;
    std::vector<int> too_long(static_cast<size_t>(fx.cfg.max_text_len) + 1, 5);
    Graph g;
    CHECK_THROWS_WITH_AS(
        fx.assessor.assemble(g, too_long, g.constant(fx.f_tq), g.constant(fx.f_v), kAllMentioned),
        doctest::Contains("exceeds"), std::runtime_error);

    Tensor short_tq({4, fx.cfg.d_model}, 0.5);
    Graph g2;
    CHECK_THROWS_WITH_AS(fx.assessor.assemble(g2, {5}, g2.constant(short_tq), g2.constant(fx.f_v),
                                              kAllMentioned),
                         doctest::Contains("14"), std::runtime_error);
}

TEST_CASE("unmentioned techpoints carry exactly the segment embedding") {
    Fixture fx;
    std::array<int, kNumTechDims> flags = {1, 1, 1, 0, 1, 1, 1};
    std::vector<int> text = fx.tok.encode("one two");

    Graph g;
    auto seq = fx.assessor.assemble(g, text, g.constant(fx.f_tq), g.constant(fx.f_v), flags);
    const Tensor& emb = g.value(seq.embeddings);
    const Tensor& seg = fx.store.find("assessor.seg_emb").value;

    const int tp_base = static_cast<int>(text.size()) + 1;
    for (int k = 0; k < 2 * kNumTechDims; ++k) {
        const bool zeroed = (k == 6 || k == 7);  // dimension 3, strength and weakness
        bool equals_seg = true;
        for (int c = 0; c < fx.cfg.d_model; ++c)
            equals_seg &= emb.at(tp_base + k, c) == seg.at(2, c);
        CHECK(equals_seg == zeroed);
    }
}

TEST_CASE("fully-unmentioned techpoint content cannot influence score or text logits") {
    Fixture fx;
    std::array<int, kNumTechDims> flags = {1, 0, 1, 1, 0, 1, 1};
    std::vector<int> text = fx.tok.encode("keep the elbow tucked");
    std::vector<int> text_pos = {0, 1, 2, 3};

    auto run = [&](const Tensor& tq) {
        Graph g;
        auto seq = fx.assessor.assemble(g, text, g.constant(tq), g.constant(fx.f_v), flags);
        Var hidden = fx.assessor.encode_sequence(g, seq);
        Tensor logits = g.value(fx.assessor.logits_at(g, hidden, text_pos));
        double score = g.value(fx.assessor.predict_score(g, hidden, seq.score_pos()))[0];
        return std::make_pair(score, logits);
    };

    auto [score0, logits0] = run(fx.f_tq);

    // Scribble over the rows of the unmentioned dimensions (1 and 4).
    Tensor poked = fx.f_tq;
    Rng noise(71);
    for (int row : {2, 3, 8, 9})
        for (int c = 0; c < fx.cfg.d_model; ++c) poked.at(row, c) += 10.0 + noise.normal() * 5.0;
    auto [score1, logits1] = run(poked);

    CHECK(score1 == score0);  // bit-identical
    REQUIRE(logits1.same_shape(logits0));
    for (int64_t i = 0; i < logits0.numel(); ++i) CHECK(logits1[i] == logits0[i]);

    // Sanity: the same scribble on a mentioned dimension does move the score.
    Tensor poked2 = fx.f_tq;
    for (int c = 0; c < fx.cfg.d_model; ++c) poked2.at(0, c) += 10.0;
    auto [score2, logits2] = run(poked2);
    CHECK(score2 != score0);
    (void)logits2;
}

TEST_CASE("text cannot reach backwards, and the score token never reads text") {
    Fixture fx;
    std::vector<int> base = fx.tok.encode("one two three four five");
    std::vector<int> changed = base;
    changed[3] = fx.tok.id_of("six");

    auto run = [&](const std::vector<int>& ids) {
        Graph g;
        auto seq = fx.assessor.assemble(g, ids, g.constant(fx.f_tq), g.constant(fx.f_v),
                                        kAllMentioned);
        Var hidden = fx.assessor.encode_sequence(g, seq);
        Tensor logits = g.value(fx.assessor.logits_at(g, hidden, {0, 1, 2, 3, 4}));
        double score = g.value(fx.assessor.predict_score(g, hidden, seq.score_pos()))[0];
        return std::make_pair(score, logits);
    };

    auto [score0, logits0] = run(base);
    auto [score1, logits1] = run(changed);

    // Positions before the edit see identical context, bit for bit.
    for (int p = 0; p < 3; ++p)
        for (int v = 0; v < fx.tok.vocab_size(); ++v) CHECK(logits0.at(p, v) == logits1.at(p, v));
    // The edited position's own logits do change (it attends to itself).
    bool moved = false;
    for (int v = 0; v < fx.tok.vocab_size(); ++v) moved |= logits0.at(3, v) != logits1.at(3, v);
    CHECK(moved);
    // Score is blind to text entirely.
    CHECK(score0 == score1);
}

TEST_CASE("masked-token training masks a seeded subset and scores the originals") {
    Fixture fx;
    std::vector<int> text = fx.tok.encode("one two three four");
    REQUIRE(text.size() == 4);

    SUBCASE("ratio one masks everything") {
        AssessorConfig cfg = fx.cfg;
        cfg.mask_ratio = 1.0;
        ParamStore store;
        Rng init(62);
        Assessor assessor(cfg, fx.tok.vocab_size(), store, init);
        Graph g;
        Rng mask_rng(5);
        auto res = assessor.mtm_loss(g, text, g.constant(fx.f_tq), g.constant(fx.f_v),
                                     kAllMentioned, mask_rng);
        CHECK(res.n_masked == 4);
        CHECK(res.positions == std::vector<int>{0, 1, 2, 3});
        CHECK(g.value(res.loss)[0] > 0.0);
    }

    SUBCASE("ratio zero still masks one position") {
        AssessorConfig cfg = fx.cfg;
        cfg.mask_ratio = 0.0;
        ParamStore store;
        Rng init(62);
        Assessor assessor(cfg, fx.tok.vocab_size(), store, init);
        Graph g;
        Rng mask_rng(5);
        auto res = assessor.mtm_loss(g, text, g.constant(fx.f_tq), g.constant(fx.f_v),
                                     kAllMentioned, mask_rng);
        CHECK(res.n_masked == 1);
    }

    SUBCASE("same seed, same mask; empty text is an error") {
        Graph g1, g2;
        Rng r1(9), r2(9);
        auto a = fx.assessor.mtm_loss(g1, text, g1.constant(fx.f_tq), g1.constant(fx.f_v),
                                      kAllMentioned, r1);
        auto b = fx.assessor.mtm_loss(g2, text, g2.constant(fx.f_tq), g2.constant(fx.f_v),
                                      kAllMentioned, r2);
        CHECK(a.positions == b.positions);
        CHECK(g1.value(a.loss)[0] == g2.value(b.loss)[0]);

        Graph g3;
        Rng r3(9);
        std::vector<int> empty;
        CHECK_THROWS_WITH_AS(fx.assessor.mtm_loss(g3, empty, g3.constant(fx.f_tq),
                                                  g3.constant(fx.f_v), kAllMentioned, r3),
                             doctest::Contains("non-empty"), std::runtime_error);
    }

    SUBCASE("uniform logits cost ln V, hard correct logits cost nearly nothing") {
        fx.store.find("assessor.vocab_head.w").value.fill(0.0);
        fx.store.find("assessor.vocab_head.b").value.fill(0.0);
        Graph g;
        Rng mask_rng(5);
        auto res = fx.assessor.mtm_loss(g, text, g.constant(fx.f_tq), g.constant(fx.f_v),
                                        kAllMentioned, mask_rng);
        CHECK(g.value(res.loss)[0] ==
              doctest::Approx(std::log(static_cast<double>(fx.tok.vocab_size()))).epsilon(1e-12));

        // Bias spiked on the correct token: every masked slot is "two".
        const int target = fx.tok.id_of("two");
        std::vector<int> same(4, target);
        fx.store.find("assessor.vocab_head.b").value[target] = 50.0;
        Graph g2;
        Rng mask_rng2(5);
        auto res2 = fx.assessor.mtm_loss(g2, same, g2.constant(fx.f_tq), g2.constant(fx.f_v),
                                         kAllMentioned, mask_rng2);
        double loss = g2.value(res2.loss)[0];
        CHECK(loss >= 0.0);
        CHECK(loss <= 1e-6);
    }
}

TEST_CASE("score regression reads an affine head off the score token") {
    Fixture fx;
    fx.store.find("assessor.score_head.w2").value.fill(0.0);
    fx.store.find("assessor.score_head.b2").value[0] = 3.7;

    Graph g;
    std::vector<int> text = fx.tok.encode("one two");
    auto seq = fx.assessor.assemble(g, text, g.constant(fx.f_tq), g.constant(fx.f_v), kAllMentioned);
    Var hidden = fx.assessor.encode_sequence(g, seq);
    CHECK(g.value(fx.assessor.predict_score(g, hidden, seq.score_pos()))[0] == 3.7);
}

TEST_CASE("greedy decoding stops at the end token and is deterministic") {
    Fixture fx;

    SUBCASE("end-token bias yields an empty commentary but still a score") {
        fx.store.find("assessor.vocab_head.b").value[Tokenizer::kEos] = 50.0;
        CoachingOutput out = fx.assessor.generate(fx.f_tq, fx.f_v, kAllMentioned, 10, fx.tok);
        CHECK(out.token_ids.empty());
        CHECK(out.commentary.empty());
        CHECK(std::isfinite(out.score));
    }

    SUBCASE("suppressing the end token fills max_len tokens") {
        fx.store.find("assessor.vocab_head.b").value[Tokenizer::kEos] = -50.0;
        CoachingOutput out = fx.assessor.generate(fx.f_tq, fx.f_v, kAllMentioned, 3, fx.tok);
        CHECK(out.token_ids.size() == 3);
        for (int id : out.token_ids) {
            CHECK(id >= 0);
            CHECK(id < fx.tok.vocab_size());
        }
        CHECK(out.commentary == fx.tok.decode(out.token_ids));

        // The text budget caps generation even when max_len asks for more.
        CoachingOutput capped = fx.assessor.generate(fx.f_tq, fx.f_v, kAllMentioned, 99, fx.tok);
        CHECK(static_cast<int>(capped.token_ids.size()) <= fx.cfg.max_text_len);
    }

    SUBCASE("two runs agree bit for bit") {
        CoachingOutput a = fx.assessor.generate(fx.f_tq, fx.f_v, kAllMentioned, 6, fx.tok);
        CoachingOutput b = fx.assessor.generate(fx.f_tq, fx.f_v, kAllMentioned, 6, fx.tok);
        CHECK(a.score == b.score);
        CHECK(a.token_ids == b.token_ids);
        CHECK(a.commentary == b.commentary);
    }

    SUBCASE("max_len below one is rejected") {
        CHECK_THROWS_AS(fx.assessor.generate(fx.f_tq, fx.f_v, kAllMentioned, 0, fx.tok),
                        std::runtime_error);
    }
}

TEST_CASE("assessor gradients agree with finite differences") {
    AssessorConfig cfg;
    cfg.d_model = 4;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    cfg.max_text_len = 8;
    cfg.mask_ratio = 0.5;

    Tokenizer tok = Tokenizer::build({"one two three"});
    ParamStore store;
    Rng init(63);
    Assessor assessor(cfg, tok.vocab_size(), store, init);

    Rng data(64);
    Param f_tq = testutil::random_param("f_tq", {2 * kNumTechDims, 4}, data, 0.5);
    Param f_v = testutil::random_param("f_v", {2, 4}, data, 0.5);
    std::vector<int> text = tok.encode("one two three");
    std::array<int, kNumTechDims> flags = {1, 0, 1, 1, 0, 1, 1};
    const double target_score = 7.25;

    auto build = [&](Graph& g) {
        Rng mask_rng(77);  // fixed so every finite-difference probe masks identically
        Var tq = g.param(f_tq);
        Var fv = g.param(f_v);
        auto mtm = assessor.mtm_loss(g, text, tq, fv, flags, mask_rng);
        auto seq = assessor.assemble(g, text, tq, fv, flags);
        Var hidden = assessor.encode_sequence(g, seq);
        Var pred = assessor.predict_score(g, hidden, seq.score_pos());
        Var mse = g.square(g.add_scalar(pred, -target_score));
        return g.add(mtm.loss, g.sum_all(mse));
    };

    std::vector<Param*> params = store.all();
    params.push_back(&f_tq);
    params.push_back(&f_v);
    Rng pick(65);
    testutil::check_grads_sampled(params, build, 1e-4, 3, pick);
}
