#pragma once

#include <array>

#include "techcoach/data.hpp"
#include "techcoach/nn.hpp"
#include "techcoach/text.hpp"

namespace techcoach {

struct AssessorConfig {
    int d_model = 64;
    int layers = 4;
    int heads = 4;
    int ffn_mult = 4;
    int max_text_len = 48;
    double mask_ratio = 0.25;
    double init_std = 0.02;
};

// The layered visibility rules over the sequence [text | score | techpoint |
// video]. Returns an [L, L] matrix of 0/1 where entry (q, k) = 1 means query
// position q may attend to key position k:
//   video     -> all video positions
//   techpoint -> itself and all video
//   score     -> itself, all techpoints, all video
//   text at t -> text positions <= t, the score token, all techpoints, video
Tensor build_coaching_mask(int text_len, int n_tp, int n_vid);

// 0/1 visibility matrix -> additive attention mask (0 keeps, -1e30 blocks).
Tensor to_additive_mask(const Tensor& binary);

struct CoachingOutput {
    double score = 0.0;
    std::string commentary;
    std::vector<int> token_ids;  // emitted word ids, [EOS] excluded
};

// Unified TechPoint-aware action assessor: one transformer over the combined
// token sequence with the coaching mask, trained with masked-token prediction
// on the commentary and squared error on the score token's regression head.
class Assessor {
public:
    Assessor(const AssessorConfig& cfg, int vocab_size, ParamStore& store, Rng& rng);

    struct Assembled {
        Var embeddings;        // [L, D] on tape
        Tensor additive_mask;  // [L, L]
        int text_len = 0, n_tp = 0, n_vid = 0;
        int score_pos() const { return text_len; }
        int total() const { return text_len + 1 + n_tp + n_vid; }
    };

    // Builds the token sequence. TechPoint rows 2i and 2i+1 are zeroed (after
    // projection, before segment embeddings) when mention_flags[i] == 0, so
    // the model provably ignores unmentioned TechPoints.
    Assembled assemble(Graph& g, const std::vector<int>& text_ids, Var f_tq, Var f_v,
                       const std::array<int, kNumTechDims>& mention_flags) const;

    Var encode_sequence(Graph& g, const Assembled& seq) const;        // [L, D]
    Var logits_at(Graph& g, Var hidden, const std::vector<int>& positions) const;  // [k, V]
    Var predict_score(Graph& g, Var hidden, int score_pos) const;     // [1, 1]

    struct MtmResult {
        Var loss;    // mean cross-entropy at the masked positions
        Var hidden;  // encoded sequence, reusable by the score head
        int score_pos = 0;
        int n_masked = 0;
        std::vector<int> positions;
    };

    // Masks a seeded subset of the text (always at least one position),
    // runs the sequence, and scores the original ids at the masked slots.
    MtmResult mtm_loss(Graph& g, const std::vector<int>& text_ids, Var f_tq, Var f_v,
                       const std::array<int, kNumTechDims>& mention_flags, Rng& rng) const;

    // Greedy next-token decoding on frozen values: text starts as one [MASK],
    // each step predicts at the newest slot, stopping at [EOS] or max_len.
    CoachingOutput generate(const Tensor& f_tq, const Tensor& f_v,
                            const std::array<int, kNumTechDims>& mention_flags, int max_len,
                            const Tokenizer& tokenizer) const;

    const AssessorConfig& config() const { return cfg_; }
    int vocab_size() const { return vocab_size_; }

private:
    struct Block {
        LayerNormParams ln_attn, ln_ffn;
        AttentionParams attn;
        FfnParams mlp;
    };

    AssessorConfig cfg_;
    int vocab_size_;
    Param *tok_emb_, *text_pos_, *score_emb_, *seg_emb_;
    Param *tq_w_, *tq_b_, *vid_w_, *vid_b_;
    Param *final_gamma_, *final_beta_;
    Param *vocab_w_, *vocab_b_;
    Param *score_w1_, *score_b1_, *score_w2_, *score_b2_;
    std::vector<Block> blocks_;
};

}  // namespace techcoach
