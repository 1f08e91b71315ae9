#include "techcoach/assessor.hpp"

#include <stdexcept>
#include <string>

namespace techcoach {

Tensor build_coaching_mask(int text_len, int n_tp, int n_vid) {
    if (text_len < 0 || n_tp < 0 || n_vid < 0)
        throw std::runtime_error("build_coaching_mask: negative segment length");
    const int score0 = text_len;
    const int tp0 = text_len + 1;
    const int vid0 = tp0 + n_tp;
    const int total = vid0 + n_vid;

    Tensor mask({total, total});
    auto allow = [&](int q, int k) { mask.at(q, k) = 1.0; };

    for (int q = vid0; q < total; ++q)
        for (int k = vid0; k < total; ++k) allow(q, k);

    for (int q = tp0; q < vid0; ++q) {
        allow(q, q);
        for (int k = vid0; k < total; ++k) allow(q, k);
    }

    allow(score0, score0);
    for (int k = tp0; k < total; ++k) allow(score0, k);

    for (int q = 0; q < text_len; ++q) {
        for (int k = 0; k <= q; ++k) allow(q, k);
        allow(q, score0);
        for (int k = tp0; k < total; ++k) allow(q, k);
    }
    return mask;
}

Tensor to_additive_mask(const Tensor& binary) {
    Tensor out(binary.shape());
    for (int64_t i = 0; i < binary.numel(); ++i) out[i] = binary[i] > 0.5 ? 0.0 : kMaskBlock;
    return out;
}

Assessor::Assessor(const AssessorConfig& cfg, int vocab_size, ParamStore& store, Rng& rng)
    : cfg_(cfg), vocab_size_(vocab_size) {
    const int d = cfg.d_model;
    tok_emb_ = &store.create_normal("assessor.tok_emb", {vocab_size, d}, rng, cfg.init_std);
    text_pos_ = &store.create("assessor.text_pos", {cfg.max_text_len, d});
    score_emb_ = &store.create_normal("assessor.score_emb", {1, d}, rng, cfg.init_std);
    seg_emb_ = &store.create_normal("assessor.seg_emb", {4, d}, rng, cfg.init_std);
    tq_w_ = &store.create_normal("assessor.tq_proj.w", {d, d}, rng, cfg.init_std);
    tq_b_ = &store.create("assessor.tq_proj.b", {d});
    vid_w_ = &store.create_normal("assessor.vid_proj.w", {d, d}, rng, cfg.init_std);
    vid_b_ = &store.create("assessor.vid_proj.b", {d});
    for (int l = 0; l < cfg.layers; ++l) {
        std::string prefix = "assessor.block" + std::to_string(l);
        Block blk;
        blk.ln_attn = make_layer_norm(store, prefix + ".ln_attn", d);
        blk.attn = make_attention(store, prefix + ".attn", d, cfg.heads, rng, cfg.init_std);
        blk.ln_ffn = make_layer_norm(store, prefix + ".ln_ffn", d);
        blk.mlp = make_ffn(store, prefix + ".ffn", d, cfg.ffn_mult * d, rng, cfg.init_std);
        blocks_.push_back(blk);
    }
    LayerNormParams fin = make_layer_norm(store, "assessor.ln_final", d);
    final_gamma_ = fin.gamma;
    final_beta_ = fin.beta;
    vocab_w_ = &store.create_normal("assessor.vocab_head.w", {d, vocab_size}, rng, cfg.init_std);
    vocab_b_ = &store.create("assessor.vocab_head.b", {vocab_size});
    score_w1_ = &store.create_normal("assessor.score_head.w1", {d, d}, rng, cfg.init_std);
    score_b1_ = &store.create("assessor.score_head.b1", {d});
    score_w2_ = &store.create_normal("assessor.score_head.w2", {d, 1}, rng, cfg.init_std);
    // Start the regressor at the score-range midpoint so early training only
    // has to learn deviations.
    score_b2_ = &store.create("assessor.score_head.b2", {1}, 5.0);
}

Assessor::Assembled Assessor::assemble(Graph& g, const std::vector<int>& text_ids, Var f_tq, Var f_v,
                                       const std::array<int, kNumTechDims>& mention_flags) const {
    const int text_len = static_cast<int>(text_ids.size());
    if (text_len > cfg_.max_text_len)
        throw std::runtime_error("assemble: text length " + std::to_string(text_len) +
                                 " exceeds maximum " + std::to_string(cfg_.max_text_len));
    const int n_tp = f_tq.rows();
    if (n_tp != 2 * kNumTechDims) throw std::runtime_error("assemble: expected 14 TechPoint rows");
    const int n_vid = f_v.rows();

    std::vector<Var> parts;
    if (text_len > 0) {
        std::vector<int> pos(static_cast<size_t>(text_len));
        for (int i = 0; i < text_len; ++i) pos[static_cast<size_t>(i)] = i;
        parts.push_back(g.add(g.gather_rows(g.param(*tok_emb_), text_ids),
                              g.gather_rows(g.param(*text_pos_), pos)));
    }
    parts.push_back(g.param(*score_emb_));

    Var tp = g.linear(f_tq, g.param(*tq_w_), g.param(*tq_b_));
    std::vector<int> zero_idx;
    for (int i = 0; i < kNumTechDims; ++i)
        if (mention_flags[static_cast<size_t>(i)] == 0) {
            zero_idx.push_back(2 * i);
            zero_idx.push_back(2 * i + 1);
        }
    if (!zero_idx.empty()) tp = g.zero_rows(tp, zero_idx);
    parts.push_back(tp);

    parts.push_back(g.linear(f_v, g.param(*vid_w_), g.param(*vid_b_)));

    Var x = g.concat_rows(parts);
    std::vector<int> seg;
    seg.reserve(static_cast<size_t>(x.rows()));
    for (int i = 0; i < text_len; ++i) seg.push_back(0);
    seg.push_back(1);
    for (int i = 0; i < n_tp; ++i) seg.push_back(2);
    for (int i = 0; i < n_vid; ++i) seg.push_back(3);
    x = g.add(x, g.gather_rows(g.param(*seg_emb_), seg));

    Assembled out;
    out.embeddings = x;
    out.additive_mask = to_additive_mask(build_coaching_mask(text_len, n_tp, n_vid));
    out.text_len = text_len;
    out.n_tp = n_tp;
    out.n_vid = n_vid;
    return out;
}

Var Assessor::encode_sequence(Graph& g, const Assembled& seq) const {
    Var x = seq.embeddings;
    for (const Block& blk : blocks_) {
        Var normed = layer_norm(g, x, blk.ln_attn);
        x = g.add(x, multihead_attention(g, normed, normed, blk.attn, &seq.additive_mask));
        x = g.add(x, ffn(g, layer_norm(g, x, blk.ln_ffn), blk.mlp));
    }
    LayerNormParams fin{final_gamma_, final_beta_};
    return layer_norm(g, x, fin);
}

Var Assessor::logits_at(Graph& g, Var hidden, const std::vector<int>& positions) const {
    return g.linear(g.gather_rows(hidden, positions), g.param(*vocab_w_), g.param(*vocab_b_));
}

Var Assessor::predict_score(Graph& g, Var hidden, int score_pos) const {
    Var h = g.gather_rows(hidden, {score_pos});
    h = g.gelu(g.linear(h, g.param(*score_w1_), g.param(*score_b1_)));
    return g.linear(h, g.param(*score_w2_), g.param(*score_b2_));
}

Assessor::MtmResult Assessor::mtm_loss(Graph& g, const std::vector<int>& text_ids, Var f_tq, Var f_v,
                                       const std::array<int, kNumTechDims>& mention_flags,
                                       Rng& rng) const {
    if (text_ids.empty()) throw std::runtime_error("mtm_loss: text must be non-empty");
    const int len = static_cast<int>(text_ids.size());

    std::vector<int> positions;
    for (int i = 0; i < len; ++i)
        if (rng.uniform() < cfg_.mask_ratio) positions.push_back(i);
    if (positions.empty()) positions.push_back(static_cast<int>(rng.uniform_int(len)));

    std::vector<int> masked_ids = text_ids;
    std::vector<int> targets;
    for (int p : positions) {
        masked_ids[static_cast<size_t>(p)] = Tokenizer::kMask;
        targets.push_back(text_ids[static_cast<size_t>(p)]);
    }

    Assembled seq = assemble(g, masked_ids, f_tq, f_v, mention_flags);
    Var hidden = encode_sequence(g, seq);
    Var logits = logits_at(g, hidden, positions);
    std::vector<int> rows(positions.size());
    for (size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);

    MtmResult res;
    res.loss = g.cross_entropy_rows(logits, rows, targets);
    res.hidden = hidden;
    res.score_pos = seq.score_pos();
    res.n_masked = static_cast<int>(positions.size());
    res.positions = std::move(positions);
    return res;
}

CoachingOutput Assessor::generate(const Tensor& f_tq, const Tensor& f_v,
                                  const std::array<int, kNumTechDims>& mention_flags, int max_len,
                                  const Tokenizer& tokenizer) const {
    if (max_len < 1) throw std::runtime_error("generate: max_len must be >= 1");
    const int cap = std::min(max_len, cfg_.max_text_len);

    CoachingOutput out;
    std::vector<int> text = {Tokenizer::kMask};
    for (int step = 0; step < cap; ++step) {
        Graph g;
        Assembled seq = assemble(g, text, g.constant(f_tq), g.constant(f_v), mention_flags);
        Var hidden = encode_sequence(g, seq);
        if (step == 0) out.score = g.value(predict_score(g, hidden, seq.score_pos()))[0];

        Var logits = logits_at(g, hidden, {step});
        const Tensor& row = g.value(logits);
        int best = 0;
        for (int v = 1; v < vocab_size_; ++v)
            if (row[v] > row[best]) best = v;

        if (best == Tokenizer::kEos) break;
        text[static_cast<size_t>(step)] = best;
        out.token_ids.push_back(best);
        if (step + 1 < cap) text.push_back(Tokenizer::kMask);
    }
    out.commentary = tokenizer.decode(out.token_ids);
    return out;
}

}  // namespace techcoach
