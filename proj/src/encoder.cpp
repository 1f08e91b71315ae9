#include "techcoach/encoder.hpp"

#include <stdexcept>
#include <string>

namespace techcoach {

Tensor fuse_views(const ClipFeatureSet& features) {
    if (features.views.size() != 2)
        throw std::runtime_error("fuse_views: expected exactly 2 views, got " +
                                 std::to_string(features.views.size()));
    const Tensor& ego = features.views[0].second;
    const Tensor& exo = features.views[1].second;
    if (!ego.same_shape(exo)) throw std::runtime_error("fuse_views: view shapes differ");
    if (ego.rank() != 4) throw std::runtime_error("fuse_views: views must be rank-4 [T,H,W,D_in]");

    const int t = ego.dim(0), h = ego.dim(1), w = ego.dim(2), d = ego.dim(3);
    Tensor out({t, h, w, 2 * d});
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < h; ++j)
            for (int k = 0; k < w; ++k)
                for (int c = 0; c < d; ++c) {
                    out.at(i, j, k, c) = ego.at(i, j, k, c);
                    out.at(i, j, k, d + c) = exo.at(i, j, k, c);
                }
    return out;
}

STEnhancer::STEnhancer(const EncoderConfig& cfg, ParamStore& store, Rng& rng) : cfg_(cfg) {
    if (cfg.n_st < 1) throw std::runtime_error("enhancer needs at least one block");
    proj_w_ = &store.create_normal("enhancer.proj.w", {2 * cfg.d_in, cfg.d_model}, rng, cfg.init_std);
    proj_b_ = &store.create("enhancer.proj.b", {cfg.d_model});
    pos_spatial_ = &store.create("enhancer.pos_spatial", {cfg.h * cfg.w, cfg.d_model});
    pos_temporal_ = &store.create("enhancer.pos_temporal", {cfg.t, cfg.d_model});
    for (int b = 0; b < cfg.n_st; ++b) {
        std::string prefix = "enhancer.block" + std::to_string(b);
        Block blk;
        blk.ln_spatial = make_layer_norm(store, prefix + ".ln_spatial", cfg.d_model);
        blk.spatial = make_attention(store, prefix + ".spatial", cfg.d_model, cfg.heads, rng, cfg.init_std);
        blk.ln_temporal = make_layer_norm(store, prefix + ".ln_temporal", cfg.d_model);
        blk.temporal = make_attention(store, prefix + ".temporal", cfg.d_model, cfg.heads, rng, cfg.init_std);
        blk.ln_ffn = make_layer_norm(store, prefix + ".ln_ffn", cfg.d_model);
        blk.mlp = make_ffn(store, prefix + ".ffn", cfg.d_model, cfg.ffn_mult * cfg.d_model, rng, cfg.init_std);
        blocks_.push_back(blk);
    }
}

Var STEnhancer::forward(Graph& g, const Tensor& fused, bool enable_temporal) const {
    const int t = cfg_.t, hw = cfg_.h * cfg_.w, n = t * hw;
    if (fused.rank() != 4 || fused.dim(0) != t || fused.dim(1) != cfg_.h || fused.dim(2) != cfg_.w ||
        fused.dim(3) != 2 * cfg_.d_in)
        throw std::runtime_error("st_enhance: fused input does not match configured [T,H,W,2*D_in]");

    // Row r = t*H*W + (h*W + w); project channels to the model width.
    Var x = g.linear(g.constant(fused.reshaped({n, 2 * cfg_.d_in})), g.param(*proj_w_), g.param(*proj_b_));

    std::vector<int> spatial_idx(static_cast<size_t>(n)), temporal_idx(static_cast<size_t>(n));
    for (int r = 0; r < n; ++r) {
        spatial_idx[static_cast<size_t>(r)] = r % hw;
        temporal_idx[static_cast<size_t>(r)] = r / hw;
    }
    x = g.add(x, g.gather_rows(g.param(*pos_spatial_), spatial_idx));
    x = g.add(x, g.gather_rows(g.param(*pos_temporal_), temporal_idx));

    // Row order after regrouping by spatial position: group s holds rows
    // {t*hw + s : t}, so original row r lands at position s*T + t.
    std::vector<int> to_temporal(static_cast<size_t>(n)), from_temporal(static_cast<size_t>(n));
    for (int s = 0; s < hw; ++s)
        for (int step = 0; step < t; ++step) {
            to_temporal[static_cast<size_t>(s * t + step)] = step * hw + s;
            from_temporal[static_cast<size_t>(step * hw + s)] = s * t + step;
        }

    for (size_t b = 0; b < blocks_.size(); ++b) {
        const Block& blk = blocks_[b];

        // Spatial attention within each time step (rows are contiguous per t).
        Var normed = layer_norm(g, x, blk.ln_spatial);
        std::vector<Var> groups;
        groups.reserve(static_cast<size_t>(t));
        for (int step = 0; step < t; ++step) {
            std::vector<int> idx(static_cast<size_t>(hw));
            for (int s = 0; s < hw; ++s) idx[static_cast<size_t>(s)] = step * hw + s;
            Var slab = g.gather_rows(normed, idx);
            groups.push_back(multihead_attention(g, slab, slab, blk.spatial));
        }
        x = g.add(x, g.concat_rows(groups));

        // Temporal attention across time at each spatial position.
        if (enable_temporal) {
            normed = layer_norm(g, x, blk.ln_temporal);
            Var regrouped = g.gather_rows(normed, to_temporal);
            std::vector<Var> tgroups;
            tgroups.reserve(static_cast<size_t>(hw));
            for (int s = 0; s < hw; ++s) {
                std::vector<int> idx(static_cast<size_t>(t));
                for (int step = 0; step < t; ++step) idx[static_cast<size_t>(step)] = s * t + step;
                Var lane = g.gather_rows(regrouped, idx);
                tgroups.push_back(multihead_attention(g, lane, lane, blk.temporal));
            }
            x = g.add(x, g.gather_rows(g.concat_rows(tgroups), from_temporal));
        }

        x = g.add(x, ffn(g, layer_norm(g, x, blk.ln_ffn), blk.mlp));

        if (!g.value(x).all_finite())
            throw std::runtime_error("st_enhance: non-finite activations after block " + std::to_string(b));
    }
    return x;
}

}  // namespace techcoach
