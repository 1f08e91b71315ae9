#include "techcoach/model.hpp"

#include <algorithm>
#include <stdexcept>

#include "techcoach/featurestore.hpp"

namespace techcoach {

void ModelConfig::validate() const {
    if (d_model < 1 || d_txt < 1) throw std::runtime_error("model config: widths must be positive");
    if (d_model % heads != 0)
        throw std::runtime_error("model config: d_model must be divisible by heads");
    if (n_st < 1 || reasoner_layers < 1 || assessor_layers < 1)
        throw std::runtime_error("model config: all stacks need at least one layer");
    if (max_text_len < 2) throw std::runtime_error("model config: text budget too small");
    if (mask_ratio < 0.0 || mask_ratio > 1.0)
        throw std::runtime_error("model config: mask ratio must lie in [0,1]");
}

namespace {

EncoderConfig encoder_config(const ModelConfig& m, const Shape& feature_shape) {
    if (feature_shape.size() != 4)
        throw std::runtime_error("model: feature shape must be [T,H,W,D_in]");
    EncoderConfig c;
    c.t = feature_shape[0];
    c.h = feature_shape[1];
    c.w = feature_shape[2];
    c.d_in = feature_shape[3];  // per view; the enhancer consumes the channel-fused pair
    c.d_model = m.d_model;
    c.n_st = m.n_st;
    c.heads = m.heads;
    c.ffn_mult = m.ffn_mult;
    c.init_std = m.init_std;
    return c;
}

ReasonerConfig reasoner_config(const ModelConfig& m) {
    ReasonerConfig c;
    c.d_model = m.d_model;
    c.d_txt = m.d_txt;
    c.layers = m.reasoner_layers;
    c.heads = m.heads;
    c.ffn_mult = m.ffn_mult;
    c.init_std = m.init_std;
    c.squared_distance = m.squared_distance;
    return c;
}

AssessorConfig assessor_config(const ModelConfig& m) {
    AssessorConfig c;
    c.d_model = m.d_model;
    c.layers = m.assessor_layers;
    c.heads = m.heads;
    c.ffn_mult = m.ffn_mult;
    c.max_text_len = m.max_text_len;
    c.mask_ratio = m.mask_ratio;
    c.init_std = m.init_std;
    return c;
}

// Parameters are created in one fixed pass so the same (config, vocab, seed)
// always yields the same store layout and initial values.
Rng seeded(const ModelConfig& cfg) {
    cfg.validate();
    return Rng(Rng::mix(cfg.seed, 0x434F414348));
}

}  // namespace

CoachModel::CoachModel(const ModelConfig& c, Shape fshape, Tokenizer tok)
    : CoachModel(c, std::move(fshape), std::move(tok), seeded(c)) {}

CoachModel::CoachModel(const ModelConfig& c, Shape fshape, Tokenizer tok, Rng init_rng)
    : cfg(c),
      feature_shape(std::move(fshape)),
      tokenizer(std::move(tok)),
      embedder(c.d_txt),
      store(),
      enhancer(encoder_config(c, feature_shape), store, init_rng),
      reasoner(reasoner_config(c), store, init_rng),
      assessor(assessor_config(c), tokenizer.vocab_size(), store, init_rng) {}

PreparedInstance prepare_instance(const CoachModel& model, const DatasetManifest& manifest,
                                  const ManifestInstance& inst) {
    PreparedInstance out;
    out.id = inst.annotation.instance_id;
    out.fused = fuse_views(load_clip_features(manifest, inst.annotation.instance_id));
    out.score = inst.annotation.score;

    out.text_ids = model.tokenizer.encode(inst.annotation.instance_commentary);
    const int budget = model.cfg.max_text_len;
    if (static_cast<int>(out.text_ids.size()) >= budget)
        out.text_ids.resize(static_cast<size_t>(budget - 1));
    out.text_ids.push_back(Tokenizer::kEos);

    out.target = make_alignment_target(inst.annotation, model.embedder);
    for (double w : out.target.w) out.mention_total += w;
    for (int i = 0; i < kNumTechDims; ++i)
        out.flags[static_cast<size_t>(i)] =
            (inst.annotation.mention_mask[static_cast<size_t>(i)][0] != 0 ||
             inst.annotation.mention_mask[static_cast<size_t>(i)][1] != 0)
                ? 1
                : 0;
    return out;
}

InstanceLosses compute_losses(const CoachModel& model, Graph& g, const PreparedInstance& item,
                              Rng& mask_rng, bool normalize_align) {
    Var ctx = model.enhancer.forward(g, item.fused);
    Var queries = model.reasoner.build_queries(g);
    Var f_tq = model.reasoner.reason(g, queries, ctx);

    Var align = model.reasoner.alignment_loss(g, f_tq, item.target);
    if (normalize_align) align = g.scale(align, 1.0 / std::max(1.0, item.mention_total));

    // One masked forward serves both text and score supervision: the mask
    // rules keep the score token blind to text, so masking cannot disturb it.
    auto mtm = model.assessor.mtm_loss(g, item.text_ids, f_tq, ctx, item.flags, mask_rng);
    Var pred = model.assessor.predict_score(g, mtm.hidden, mtm.score_pos);
    Var mse = g.sum_all(g.square(g.add_scalar(pred, -item.score)));

    InstanceLosses out;
    out.mtm = mtm.loss;
    out.mse = mse;
    out.align = align;
    out.n_masked = mtm.n_masked;
    return out;
}

InferenceResult run_inference(const CoachModel& model, const DatasetManifest& manifest,
                              const ManifestInstance& inst, int max_len) {
    PreparedInstance item = prepare_instance(model, manifest, inst);

    Graph g;
    Var ctx = model.enhancer.forward(g, item.fused);
    Var f_tq = model.reasoner.reason(g, model.reasoner.build_queries(g), ctx);
    Tensor f_tq_frozen = g.value(f_tq);
    Tensor ctx_frozen = g.value(ctx);

    CoachingOutput gen =
        model.assessor.generate(f_tq_frozen, ctx_frozen, item.flags, max_len, model.tokenizer);

    InferenceResult out;
    out.instance_id = item.id;
    out.pred_score = gen.score;
    out.commentary = gen.commentary;
    out.token_ids = gen.token_ids;
    return out;
}

}  // namespace techcoach
