#pragma once

#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "techcoach/graph.hpp"
#include "techcoach/rng.hpp"

namespace techcoach {

// Owns every trainable tensor of a model. Parameters keep stable addresses
// (deque) and a stable creation order, which is what the optimizer iterates
// and the checkpoint format serializes.
class ParamStore {
public:
    Param& create(const std::string& name, Shape shape, double fill = 0.0);
    Param& create_normal(const std::string& name, Shape shape, Rng& rng, double stddev);
    Param& find(const std::string& name);
    const Param& find(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    std::vector<Param*> all();  // creation order
    size_t count() const { return params_.size(); }
    int64_t total_numel() const;
    void zero_grads();

private:
    std::deque<Param> params_;
    std::unordered_map<std::string, size_t> index_;
};

struct LayerNormParams {
    Param* gamma = nullptr;
    Param* beta = nullptr;
};

struct AttentionParams {
    Param *wq = nullptr, *bq = nullptr;
    Param *wk = nullptr, *bk = nullptr;
    Param *wv = nullptr, *bv = nullptr;
    Param *wo = nullptr, *bo = nullptr;
    int heads = 1;
};

struct FfnParams {
    Param *w1 = nullptr, *b1 = nullptr;
    Param *w2 = nullptr, *b2 = nullptr;
};

LayerNormParams make_layer_norm(ParamStore& store, const std::string& prefix, int d);
AttentionParams make_attention(ParamStore& store, const std::string& prefix, int d, int heads,
                               Rng& rng, double init_std);
FfnParams make_ffn(ParamStore& store, const std::string& prefix, int d, int d_hidden, Rng& rng,
                   double init_std);

Var layer_norm(Graph& g, Var x, const LayerNormParams& p);

// Multi-head scaled-dot-product attention. Queries come from q_in [Lq, D],
// keys/values from kv_in [Lk, D]. `additive_mask`, when given, is [Lq, Lk]
// and is added to every head's logits (0 = keep, -1e30 = block).
Var multihead_attention(Graph& g, Var q_in, Var kv_in, const AttentionParams& p,
                        const Tensor* additive_mask = nullptr);

Var ffn(Graph& g, Var x, const FfnParams& p);  // linear -> gelu -> linear

inline constexpr double kMaskBlock = -1e30;  // additive logit for forbidden edges

}  // namespace techcoach
