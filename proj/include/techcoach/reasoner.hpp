#pragma once

#include <array>

#include "techcoach/data.hpp"
#include "techcoach/nn.hpp"
#include "techcoach/text.hpp"

namespace techcoach {

struct ReasonerConfig {
    int d_model = 64;
    int d_txt = 32;
    int layers = 2;
    int heads = 4;
    int ffn_mult = 4;
    double init_std = 0.02;
    bool squared_distance = false;  // alignment distance: L2 (default) or squared L2
};

// Alignment supervision: commentary features per (dimension, strength/weakness)
// cell, flattened row-major to [2N, D_txt], plus the mention mask in the same
// order. Rows with w=0 carry zeros and are ignored by the loss.
struct AlignmentTarget {
    Tensor f_tc;            // [2*kNumTechDims, d_txt]
    std::vector<double> w;  // 2*kNumTechDims entries of 0/1
};

AlignmentTarget make_alignment_target(const InstanceAnnotation& ann, const TextEmbedder& embedder);

// Context-aware TechPoint reasoner: augmented queries (TechPoint text + type
// prompt + quality prompt), a cross-attention stack into the visual context,
// and the mention-masked alignment loss against commentary features.
class Reasoner {
public:
    Reasoner(const ReasonerConfig& cfg, ParamStore& store, Rng& rng);

    // Embeds the seven TechPoint texts once; must be called before
    // build_queries. The embedder's dimension must equal cfg.d_txt.
    void set_techpoints(const TechPointSet& tps, const TextEmbedder& embedder);

    // f*_tp[i,j] = f_tp[i] + f_tt[i] + f_q[j], flattened to [2N, D]
    // (row = i*2 + j; j=0 strength, j=1 weakness).
    Var build_queries(Graph& g) const;

    // Cross-attends the 2N queries into the visual context rows [L_ctx, D];
    // queries only ever read from the context, never from one another.
    Var reason(Graph& g, Var queries, Var context) const;

    // Raw Eq-style loss: sum over rows of w[r] * dist(psi(f_tq[r]), f_tc[r]).
    // Any normalization by mention count is applied by the caller.
    Var alignment_loss(Graph& g, Var f_tq, const AlignmentTarget& target) const;

    const ReasonerConfig& config() const { return cfg_; }
    const Tensor& techpoint_features() const { return f_tp_raw_; }  // [N, d_txt]

private:
    struct Layer {
        LayerNormParams ln_query, ln_ffn;
        AttentionParams cross;
        FfnParams mlp;
    };

    ReasonerConfig cfg_;
    Param *f_tt_, *f_q_;          // [N, D] and [2, D] learnable prompts
    Param *proj_w_, *proj_b_;     // D_txt -> D TechPoint text projection
    Param *psi_w_, *psi_b_;       // D -> D_txt alignment projection (shared)
    std::vector<Layer> layers_;
    Tensor f_tp_raw_;             // embedded TechPoint texts, [N, d_txt]
    bool techpoints_set_ = false;
};

}  // namespace techcoach
