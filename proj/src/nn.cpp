#include "techcoach/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace techcoach {

Param& ParamStore::create(const std::string& name, Shape shape, double fill) {
    if (index_.count(name)) throw std::runtime_error("duplicate parameter name " + name);
    params_.emplace_back(name, Tensor(std::move(shape), fill));
    index_[name] = params_.size() - 1;
    return params_.back();
}

Param& ParamStore::create_normal(const std::string& name, Shape shape, Rng& rng, double stddev) {
    Param& p = create(name, std::move(shape));
    for (int64_t i = 0; i < p.value.numel(); ++i) p.value[i] = rng.normal() * stddev;
    return p;
}

Param& ParamStore::find(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("unknown parameter " + name);
    return params_[it->second];
}

const Param& ParamStore::find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("unknown parameter " + name);
    return params_[it->second];
}

std::vector<Param*> ParamStore::all() {
    std::vector<Param*> out;
    out.reserve(params_.size());
    for (Param& p : params_) out.push_back(&p);
    return out;
}

int64_t ParamStore::total_numel() const {
    int64_t n = 0;
    for (const Param& p : params_) n += p.value.numel();
    return n;
}

void ParamStore::zero_grads() {
    for (Param& p : params_) p.zero_grad();
}

LayerNormParams make_layer_norm(ParamStore& store, const std::string& prefix, int d) {
    LayerNormParams p;
    p.gamma = &store.create(prefix + ".gamma", {d}, 1.0);
    p.beta = &store.create(prefix + ".beta", {d}, 0.0);
    return p;
}

AttentionParams make_attention(ParamStore& store, const std::string& prefix, int d, int heads,
                               Rng& rng, double init_std) {
    if (d % heads != 0) throw std::runtime_error(prefix + ": model width not divisible by heads");
    AttentionParams p;
    p.heads = heads;
    p.wq = &store.create_normal(prefix + ".wq", {d, d}, rng, init_std);
    p.bq = &store.create(prefix + ".bq", {d});
    p.wk = &store.create_normal(prefix + ".wk", {d, d}, rng, init_std);
    p.bk = &store.create(prefix + ".bk", {d});
    p.wv = &store.create_normal(prefix + ".wv", {d, d}, rng, init_std);
    p.bv = &store.create(prefix + ".bv", {d});
    p.wo = &store.create_normal(prefix + ".wo", {d, d}, rng, init_std);
    p.bo = &store.create(prefix + ".bo", {d});
    return p;
}

FfnParams make_ffn(ParamStore& store, const std::string& prefix, int d, int d_hidden, Rng& rng,
                   double init_std) {
    FfnParams p;
    p.w1 = &store.create_normal(prefix + ".w1", {d, d_hidden}, rng, init_std);
    p.b1 = &store.create(prefix + ".b1", {d_hidden});
    p.w2 = &store.create_normal(prefix + ".w2", {d_hidden, d}, rng, init_std);
    p.b2 = &store.create(prefix + ".b2", {d});
    return p;
}

Var layer_norm(Graph& g, Var x, const LayerNormParams& p) {
    return g.layer_norm(x, g.param(*p.gamma), g.param(*p.beta));
}

Var multihead_attention(Graph& g, Var q_in, Var kv_in, const AttentionParams& p,
                        const Tensor* additive_mask) {
    const int d = q_in.cols();
    const int dh = d / p.heads;
    Var q = g.linear(q_in, g.param(*p.wq), g.param(*p.bq));
    Var k = g.linear(kv_in, g.param(*p.wk), g.param(*p.bk));
    Var v = g.linear(kv_in, g.param(*p.wv), g.param(*p.bv));

    std::vector<Var> heads;
    heads.reserve(static_cast<size_t>(p.heads));
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < p.heads; ++h) {
        Var qh = g.slice_cols(q, h * dh, (h + 1) * dh);
        Var kh = g.slice_cols(k, h * dh, (h + 1) * dh);
        Var vh = g.slice_cols(v, h * dh, (h + 1) * dh);
        Var logits = g.scale(g.matmul_nt(qh, kh), inv_sqrt);
        if (!g.value(logits).all_finite()) throw std::runtime_error("non-finite attention logits");
        Var attn = g.softmax_rows(logits, additive_mask);
        heads.push_back(g.matmul(attn, vh));
    }
    Var merged = p.heads == 1 ? heads[0] : g.concat_cols(heads);
    return g.linear(merged, g.param(*p.wo), g.param(*p.bo));
}

Var ffn(Graph& g, Var x, const FfnParams& p) {
    Var h = g.gelu(g.linear(x, g.param(*p.w1), g.param(*p.b1)));
    return g.linear(h, g.param(*p.w2), g.param(*p.b2));
}

}  // namespace techcoach
