#pragma once

#include "techcoach/data.hpp"
#include "techcoach/nn.hpp"

namespace techcoach {

struct EncoderConfig {
    int t = 8, h = 2, w = 2;  // clip/grid geometry
    int d_in = 8;             // per-view channel count
    int d_model = 64;
    int n_st = 4;
    int heads = 4;
    int ffn_mult = 4;
    double init_std = 0.02;

    int n_positions() const { return t * h * w; }
};

// Channel-concatenates the two views (ego first) into [T, H, W, 2*D_in].
Tensor fuse_views(const ClipFeatureSet& features);

// Spatial-temporal context enhancer: input projection, learned additive
// spatial/temporal position embeddings, then N_st pre-norm blocks of
// (spatial attention -> temporal attention -> feed-forward), each residual.
// Spatial attention mixes the H*W positions within one time step; temporal
// attention mixes the T steps at one spatial position.
class STEnhancer {
public:
    STEnhancer(const EncoderConfig& cfg, ParamStore& store, Rng& rng);

    // fused is [T, H, W, 2*D_in]; returns the visual context as a [T*H*W, D]
    // tape node (row index = (t*H + h)*W + w). `enable_temporal=false` skips
    // the temporal sublayers, which the locality tests rely on.
    Var forward(Graph& g, const Tensor& fused, bool enable_temporal = true) const;

    const EncoderConfig& config() const { return cfg_; }

private:
    struct Block {
        LayerNormParams ln_spatial, ln_temporal, ln_ffn;
        AttentionParams spatial, temporal;
        FfnParams mlp;
    };

    EncoderConfig cfg_;
    Param *proj_w_, *proj_b_;
    Param *pos_spatial_, *pos_temporal_;  // [H*W, D] and [T, D], zero-initialized
    std::vector<Block> blocks_;
};

}  // namespace techcoach
