#include "techcoach/reasoner.hpp"

#include <stdexcept>

namespace techcoach {

AlignmentTarget make_alignment_target(const InstanceAnnotation& ann, const TextEmbedder& embedder) {
    const int d = embedder.dim();
    AlignmentTarget target;
    target.f_tc = Tensor({2 * kNumTechDims, d});
    target.w.assign(2 * kNumTechDims, 0.0);
    for (int i = 0; i < kNumTechDims; ++i) {
        for (int j = 0; j < 2; ++j) {
            const int row = i * 2 + j;
            if (ann.mention_mask[static_cast<size_t>(i)][static_cast<size_t>(j)] == 0) continue;
            target.w[static_cast<size_t>(row)] = 1.0;
            std::vector<double> v =
                embedder.embed(*ann.techpoint_commentary[static_cast<size_t>(i)][static_cast<size_t>(j)]);
            for (int c = 0; c < d; ++c) target.f_tc.at(row, c) = v[static_cast<size_t>(c)];
        }
    }
    return target;
}

Reasoner::Reasoner(const ReasonerConfig& cfg, ParamStore& store, Rng& rng) : cfg_(cfg) {
    f_tt_ = &store.create_normal("reasoner.f_tt", {kNumTechDims, cfg.d_model}, rng, cfg.init_std);
    f_q_ = &store.create_normal("reasoner.f_q", {2, cfg.d_model}, rng, cfg.init_std);
    proj_w_ = &store.create_normal("reasoner.proj.w", {cfg.d_txt, cfg.d_model}, rng, cfg.init_std);
    proj_b_ = &store.create("reasoner.proj.b", {cfg.d_model});
    psi_w_ = &store.create_normal("reasoner.psi.w", {cfg.d_model, cfg.d_txt}, rng, cfg.init_std);
    psi_b_ = &store.create("reasoner.psi.b", {cfg.d_txt});
    for (int l = 0; l < cfg.layers; ++l) {
        std::string prefix = "reasoner.layer" + std::to_string(l);
        Layer layer;
        layer.ln_query = make_layer_norm(store, prefix + ".ln_query", cfg.d_model);
        layer.cross = make_attention(store, prefix + ".cross", cfg.d_model, cfg.heads, rng, cfg.init_std);
        layer.ln_ffn = make_layer_norm(store, prefix + ".ln_ffn", cfg.d_model);
        layer.mlp = make_ffn(store, prefix + ".ffn", cfg.d_model, cfg.ffn_mult * cfg.d_model, rng,
                             cfg.init_std);
        layers_.push_back(layer);
    }
}

void Reasoner::set_techpoints(const TechPointSet& tps, const TextEmbedder& embedder) {
    tps.validate();
    if (embedder.dim() != cfg_.d_txt)
        throw std::runtime_error("reasoner: embedder dimension " + std::to_string(embedder.dim()) +
                                 " does not match configured text width " + std::to_string(cfg_.d_txt));
    f_tp_raw_ = Tensor({kNumTechDims, cfg_.d_txt});
    for (int i = 0; i < kNumTechDims; ++i) {
        std::vector<double> v = embedder.embed(tps.entries[static_cast<size_t>(i)].text);
        for (int c = 0; c < cfg_.d_txt; ++c) f_tp_raw_.at(i, c) = v[static_cast<size_t>(c)];
    }
    techpoints_set_ = true;
}

Var Reasoner::build_queries(Graph& g) const {
    if (!techpoints_set_) throw std::runtime_error("reasoner: set_techpoints must run before build_queries");
    Var f_tp = g.linear(g.constant(f_tp_raw_), g.param(*proj_w_), g.param(*proj_b_));  // [N, D]

    // Flatten to [2N, D] with row = i*2 + j by repeating each TechPoint row
    // twice and cycling the two quality prompts.
    std::vector<int> dim_idx, quality_idx;
    for (int i = 0; i < kNumTechDims; ++i)
        for (int j = 0; j < 2; ++j) {
            dim_idx.push_back(i);
            quality_idx.push_back(j);
        }
    Var sum = g.add(g.gather_rows(f_tp, dim_idx), g.gather_rows(g.param(*f_tt_), dim_idx));
    return g.add(sum, g.gather_rows(g.param(*f_q_), quality_idx));
}

Var Reasoner::reason(Graph& g, Var queries, Var context) const {
    if (queries.cols() != cfg_.d_model || context.cols() != cfg_.d_model)
        throw std::runtime_error("reasoner: query/context width mismatch");
    Var x = queries;
    for (const Layer& layer : layers_) {
        Var normed = layer_norm(g, x, layer.ln_query);
        x = g.add(x, multihead_attention(g, normed, context, layer.cross));
        x = g.add(x, ffn(g, layer_norm(g, x, layer.ln_ffn), layer.mlp));
    }
    if (!g.value(x).all_finite()) throw std::runtime_error("reasoner: non-finite quality embeddings");
    return x;  // [2N, D]
}

Var Reasoner::alignment_loss(Graph& g, Var f_tq, const AlignmentTarget& target) const {
    Var projected = g.linear(f_tq, g.param(*psi_w_), g.param(*psi_b_));
    return g.weighted_row_distance(projected, target.f_tc, target.w, cfg_.squared_distance);
}

}  // namespace techcoach
