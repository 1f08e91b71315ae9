#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "techcoach/metrics.hpp"
#include "techcoach/text.hpp"

using namespace techcoach;

namespace {

ScorePairs make_pairs(const std::vector<double>& preds, const std::vector<double>& gts,
                      double s_min = 0.0, double s_max = 10.0) {
    ScorePairs out;
    for (size_t i = 0; i < preds.size(); ++i) out.push_back({preds[i], gts[i], s_min, s_max});
    return out;
}

// Independent O(n^2) rank oracle: rank_i = #smaller + average rank of the tie group.
std::vector<double> oracle_ranks(const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        int less = 0, equal = 0;
        for (size_t j = 0; j < v.size(); ++j) {
            if (v[j] < v[i]) ++less;
            if (v[j] == v[i]) ++equal;
        }
        r[i] = less + (equal + 1) / 2.0;
    }
    return r;
}

double oracle_pearson(const std::vector<double>& a, const std::vector<double>& b) {
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= a.size();
    mb /= b.size();
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    return cov / std::sqrt(va * vb);
}

// Maps a few fixed words to hand-set vectors so greedy-matching arithmetic
// can be checked by hand.
class StubEmbedder : public TextEmbedder {
public:
    int dim() const override { return 2; }
    std::vector<double> embed(const std::string& text) const override {
        if (text == "a") return {1.0, 0.0};
        if (text == "b") return {1.0, 1.0};
        if (text == "c") return {0.0, 1.0};
        return {0.0, 0.0};
    }
};

}  // namespace

TEST_CASE("spearman matches pinned examples") {
    CHECK(spearman(make_pairs({2.0, 4.0, 6.0}, {1.0, 2.0, 3.0})) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(spearman(make_pairs({3.0, 2.0, 1.0}, {1.0, 2.0, 3.0})) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(spearman(make_pairs({1.0, 3.0, 2.0, 4.0}, {1.0, 2.0, 3.0, 4.0})) ==
          doctest::Approx(0.8).epsilon(1e-12));

    // Tied pairs share an average rank; perfectly aligned tie structure is still 1.
    CHECK(spearman(make_pairs({1.0, 1.0, 2.0}, {3.0, 3.0, 4.0})) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("spearman is invariant under strictly increasing transforms") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> dist(-5.0, 5.0);
    for (int trial = 0; trial < 20; ++trial) {
        int n = 3 + static_cast<int>(rng() % 8);
        std::vector<double> preds(n), gts(n), preds_t(n), gts_t(n);
        for (int i = 0; i < n; ++i) {
            preds[i] = dist(rng);
            gts[i] = dist(rng);
            preds_t[i] = std::exp(preds[i]);
            gts_t[i] = 2.0 * gts[i] + 7.0;
        }
        double base = spearman(make_pairs(preds, gts));
        double mapped = spearman(make_pairs(preds_t, gts_t));
        CHECK(mapped == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("spearman agrees with an independent rank oracle") {
    std::mt19937_64 rng(7);
    int checked = 0;
    while (checked < 300) {
        int n = 2 + static_cast<int>(rng() % 9);
        std::vector<double> preds(n), gts(n);
        for (int i = 0; i < n; ++i) {
            preds[i] = static_cast<double>(rng() % 6);  // small range forces ties
            gts[i] = static_cast<double>(rng() % 6);
        }
        auto has_variance = [](const std::vector<double>& v) {
            for (double x : v)
                if (x != v[0]) return true;
            return false;
        };
        if (!has_variance(preds) || !has_variance(gts)) continue;
        double expected = oracle_pearson(oracle_ranks(preds), oracle_ranks(gts));
        CHECK(spearman(make_pairs(preds, gts)) == doctest::Approx(expected).epsilon(1e-12));
        ++checked;
    }
}

TEST_CASE("spearman matches the d-squared formula on tie-free permutations") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        int n = 2 + static_cast<int>(rng() % 9);
        std::vector<double> preds(n), gts(n);
        for (int i = 0; i < n; ++i) {
            preds[i] = i + 1.0;
            gts[i] = i + 1.0;
        }
        std::shuffle(preds.begin(), preds.end(), rng);
        std::shuffle(gts.begin(), gts.end(), rng);
        // Tie-free, so ranks equal the values themselves.
        double d2 = 0.0;
        for (int i = 0; i < n; ++i) d2 += (preds[i] - gts[i]) * (preds[i] - gts[i]);
        double expected = 1.0 - 6.0 * d2 / (n * (static_cast<double>(n) * n - 1.0));
        CHECK(spearman(make_pairs(preds, gts)) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("spearman rejects degenerate input") {
    ScorePairs one = make_pairs({1.0}, {2.0});
    CHECK_THROWS_WITH_AS(spearman(one), doctest::Contains("two pairs"), std::runtime_error);
    ScorePairs flat = make_pairs({2.0, 2.0, 2.0}, {1.0, 2.0, 3.0});
    CHECK_THROWS_WITH_AS(spearman(flat), doctest::Contains("zero variance"), std::runtime_error);
    ScorePairs flat_gt = make_pairs({1.0, 2.0, 3.0}, {5.0, 5.0, 5.0});
    CHECK_THROWS_AS(spearman(flat_gt), std::runtime_error);
}

TEST_CASE("rl2 matches pinned examples") {
    CHECK(rl2(make_pairs({3.0, 7.0}, {3.0, 7.0})) == doctest::Approx(0.0));
    CHECK(rl2(make_pairs({6.0}, {5.0})) == doctest::Approx(0.01).epsilon(1e-12));
    // Terms 0.01 and 0.04 average to 0.025.
    CHECK(rl2(make_pairs({6.0, 4.0}, {5.0, 2.0})) == doctest::Approx(0.025).epsilon(1e-12));
}

TEST_CASE("rl2 is invariant under affine rescaling of the score range") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> dist(0.0, 10.0);
    const double a = 3.5, b = -2.0;
    for (int trial = 0; trial < 20; ++trial) {
        int n = 1 + static_cast<int>(rng() % 8);
        ScorePairs base, mapped;
        for (int i = 0; i < n; ++i) {
            double pred = dist(rng), gt = dist(rng);
            base.push_back({pred, gt, 0.0, 10.0});
            mapped.push_back({a * pred + b, a * gt + b, a * 0.0 + b, a * 10.0 + b});
        }
        CHECK(rl2(mapped) == doctest::Approx(rl2(base)).epsilon(1e-12));
    }
}

TEST_CASE("rl2 rejects bad input") {
    CHECK_THROWS_WITH_AS(rl2(ScorePairs{}), doctest::Contains("one pair"), std::runtime_error);
    ScorePairs bad = {{1.0, 2.0, 10.0, 0.0}};
    CHECK_THROWS_WITH_AS(rl2(bad), doctest::Contains("range"), std::runtime_error);
    ScorePairs flat_range = {{1.0, 2.0, 5.0, 5.0}};
    CHECK_THROWS_AS(rl2(flat_range), std::runtime_error);
}

TEST_CASE("bleu1 computes clipped precision with brevity penalty") {
    CHECK(bleu1("the cat sat", {"the cat sat"}) == doctest::Approx(1.0));
    // Clipping: "the" appears once in the reference, so only one of three counts.
    CHECK(bleu1("the the the", {"the cat"}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(bleu1("dog barks loud", {"the cat sat"}) == doctest::Approx(0.0));
    // Short candidate against a long reference: full precision, penalized length.
    CHECK(bleu1("the cat", {"the cat sat on the mat"}) ==
          doctest::Approx(std::exp(1.0 - 6.0 / 2.0)).epsilon(1e-12));
    // Equidistant reference lengths resolve to the shorter one (no penalty here).
    CHECK(bleu1("a b c", {"a b", "a b c d"}) == doctest::Approx(1.0));
    // Normalization: case and punctuation do not matter.
    CHECK(bleu1("  The CAT! ", {"the cat"}) == doctest::Approx(1.0));
}

TEST_CASE("bleu1 rejects empty input") {
    std::vector<std::string> refs = {"the cat"};
    CHECK_THROWS_WITH_AS(bleu1("", refs), doctest::Contains("no tokens"), std::runtime_error);
    CHECK_THROWS_WITH_AS(bleu1("!!!", refs), doctest::Contains("no tokens"), std::runtime_error);
    CHECK_THROWS_AS(bleu1("the cat", std::vector<std::string>{}), std::runtime_error);
}

TEST_CASE("porter stemmer matches the published rule set") {
    const std::vector<std::pair<std::string, std::string>> cases = {
        {"caresses", "caress"}, {"ponies", "poni"},       {"ties", "ti"},
        {"cats", "cat"},        {"agreed", "agre"},       {"plastered", "plaster"},
        {"motoring", "motor"},  {"conflated", "conflat"}, {"troubled", "troubl"},
        {"sized", "size"},      {"hopping", "hop"},       {"tanned", "tan"},
        {"falling", "fall"},    {"hissing", "hiss"},      {"fizzed", "fizz"},
        {"failing", "fail"},    {"filing", "file"},       {"happy", "happi"},
        {"sky", "sky"},         {"relational", "relat"},  {"conditional", "condit"},
        {"rational", "ration"}, {"valenci", "valenc"},    {"digitizer", "digit"},
        {"operator", "oper"},   {"feudalism", "feudal"},  {"decisiveness", "decis"},
        {"hopefulness", "hope"},{"callousness", "callous"},{"formaliti", "formal"},
        {"sensitiviti", "sensit"},{"triplicate", "triplic"},{"formative", "form"},
        {"formalize", "formal"},{"electriciti", "electr"},{"electrical", "electr"},
        {"hopeful", "hope"},    {"goodness", "good"},     {"revival", "reviv"},
        {"allowance", "allow"}, {"inference", "infer"},   {"airliner", "airlin"},
        {"gyroscopic", "gyroscop"},{"adjustable", "adjust"},{"defensible", "defens"},
        {"irritant", "irrit"},  {"replacement", "replac"},{"adjustment", "adjust"},
        {"dependent", "depend"},{"adoption", "adopt"},    {"communism", "commun"},
        {"activate", "activ"},  {"angulariti", "angular"},{"effective", "effect"},
        {"bowdlerize", "bowdler"},{"probate", "probat"},  {"rate", "rate"},
        {"cease", "ceas"},      {"controll", "control"},  {"roll", "roll"},
        {"generalizations", "gener"},{"oscillators", "oscil"},{"connect", "connect"},
        {"connected", "connect"},{"connecting", "connect"},{"connection", "connect"},
        {"connections", "connect"},
    };
    for (const auto& [word, stem] : cases) {
        CAPTURE(word);
        CHECK(porter_stem(word) == stem);
    }
    // Too short to stem; uppercase input is normalized first.
    CHECK(porter_stem("as") == "as");
    CHECK(porter_stem("CONNECTED") == "connect");
}

TEST_CASE("meteor matches pinned corpus values") {
    // Three candidate/reference pairs fixed once against a reference
    // implementation of the exact+stem matcher; values pinned at 1e-6.
    CHECK(meteor("the player keeps the elbow tucked during the shot",
                 {"the player kept the elbow tucked in during every shot"}) ==
          doctest::Approx(0.484436198722).epsilon(1e-6));
    CHECK(meteor("follow through with a relaxed wrist after release",
                 {"the follow through needs a relaxed wrist at release"}) ==
          doctest::Approx(0.632022471910).epsilon(1e-6));
    CHECK(meteor("keep the knees bent and drive upward strongly",
                 {"bend the knees and drive upward with strength"}) ==
          doctest::Approx(0.605000000000).epsilon(1e-6));
}

TEST_CASE("meteor handles exact, stemmed, and degenerate matches") {
    // Identical sentences: one chunk over m tokens, so 1 - 0.5 * (1/m)^3.
    CHECK(meteor("keep the elbow in", {"keep the elbow in"}) ==
          doctest::Approx(1.0 - 0.5 / 64.0).epsilon(1e-12));
    CHECK(meteor("dog barks loud", {"the cat sat"}) == doctest::Approx(0.0));
    // "jumped"/"jumps" only align through the stem stage.
    CHECK(meteor("the player jumped", {"the player jumps"}) ==
          doctest::Approx(1.0 - 0.5 / 27.0).epsilon(1e-12));
    // Multi-reference scoring keeps the best reference.
    CHECK(meteor("keep the elbow in", {"totally unrelated words here", "keep the elbow in"}) ==
          doctest::Approx(1.0 - 0.5 / 64.0).epsilon(1e-12));
    // Normalization: spacing, case, punctuation.
    CHECK(meteor("Keep   the ELBOW in.", {"keep the elbow in"}) ==
          doctest::Approx(1.0 - 0.5 / 64.0).epsilon(1e-12));
    CHECK(meteor("", {"the cat"}) == doctest::Approx(0.0));
    CHECK_THROWS_AS(meteor("the cat", std::vector<std::string>{}), std::runtime_error);
}

TEST_CASE("cider matches pinned corpus value") {
    std::vector<std::string> cands = {
        "the player keeps the elbow tucked during the shot",
        "follow through with a relaxed wrist after release",
        "keep the knees bent and drive upward strongly",
    };
    std::vector<std::vector<std::string>> refs = {
        {"the player kept the elbow tucked in during every shot"},
        {"the follow through needs a relaxed wrist at release"},
        {"bend the knees and drive upward with strength"},
    };
    CHECK(cider(cands, refs) == doctest::Approx(0.306727810628).epsilon(1e-6));
}

TEST_CASE("cider handles perfect, disjoint, and invalid corpora") {
    std::vector<std::vector<std::string>> refs = {
        {"the player kept the elbow tucked in during every shot"},
        {"the follow through needs a relaxed wrist at release"},
        {"bend the knees and drive upward with strength"},
    };
    std::vector<std::string> exact;
    for (const auto& r : refs) exact.push_back(r[0]);
    CHECK(cider(exact, refs) == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<std::string> disjoint = {"zig zag zog", "quux quuz corge", "plugh xyzzy thud"};
    CHECK(cider(disjoint, refs) == doctest::Approx(0.0));

    CHECK_THROWS_WITH_AS(cider({}, {}), doctest::Contains("empty"), std::runtime_error);
    std::vector<std::string> one_cand = {"the cat"};
    CHECK_THROWS_WITH_AS(cider(one_cand, refs), doctest::Contains("parallel"), std::runtime_error);
    std::vector<std::vector<std::string>> no_refs = {{}};
    CHECK_THROWS_WITH_AS(cider(one_cand, no_refs), doctest::Contains("no references"),
                         std::runtime_error);
}

TEST_CASE("embed similarity is greedy cosine F1") {
    StubEmbedder stub;
    // P = R = (1 + cos(b,c or a))/2 = (1 + 1/sqrt(2))/2, and F1 of equal P,R is P.
    double expected = (1.0 + 1.0 / std::sqrt(2.0)) / 2.0;
    CHECK(embed_similarity("a b", "a c", stub) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(embed_similarity("a", "c", stub) == doctest::Approx(0.0));   // orthogonal
    CHECK(embed_similarity("z", "a", stub) == doctest::Approx(0.0));   // zero-norm vector
    CHECK(embed_similarity("", "a", stub) == doctest::Approx(0.0));    // no tokens

    HashEmbedder hash;
    CHECK(embed_similarity("keep the elbow in", "keep the elbow in", hash) ==
          doctest::Approx(1.0).epsilon(1e-12));
    double sym_ab = embed_similarity("keep the elbow", "bend the knees", hash);
    double sym_ba = embed_similarity("bend the knees", "keep the elbow", hash);
    CHECK(sym_ab == doctest::Approx(sym_ba).epsilon(1e-12));
}

TEST_CASE("judge aggregates follow the exclusion rules") {
    JudgeVerdict good{4, 2, 1, ""};
    CHECK_NOTHROW(good.validate());
    CHECK(gpt_m({good}) == doctest::Approx(0.5));
    CHECK(gpt_q({good}) == doctest::Approx(0.5));

    // Zero matches still count against recall; zero ground-truth details do not.
    JudgeVerdict none_matched{3, 0, 0, ""};
    CHECK(gpt_m({good, none_matched}) == doctest::Approx(0.25));
    CHECK(gpt_q({good, none_matched}) == doctest::Approx(0.5));

    JudgeVerdict empty_gt{0, 0, 0, ""};
    CHECK(gpt_m({empty_gt, good}) == doctest::Approx(0.5));

    CHECK_THROWS_WITH_AS(gpt_m({empty_gt}), doctest::Contains("ground-truth"), std::runtime_error);
    CHECK_THROWS_WITH_AS(gpt_q({none_matched}), doctest::Contains("both-mentioned"),
                         std::runtime_error);
}

TEST_CASE("judge verdicts enforce the count ordering") {
    JudgeVerdict both_over_gt{2, 3, 1, ""};
    CHECK_THROWS_AS(both_over_gt.validate(), std::runtime_error);
    JudgeVerdict same_over_both{3, 1, 2, ""};
    CHECK_THROWS_AS(same_over_both.validate(), std::runtime_error);
    JudgeVerdict negative{-1, 0, 0, ""};
    CHECK_THROWS_AS(negative.validate(), std::runtime_error);
    // Aggregates validate their inputs too.
    CHECK_THROWS_AS(gpt_m({both_over_gt}), std::runtime_error);
}
