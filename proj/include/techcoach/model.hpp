#pragma once

#include <array>
#include <string>
#include <vector>

#include "techcoach/assessor.hpp"
#include "techcoach/data.hpp"
#include "techcoach/encoder.hpp"
#include "techcoach/reasoner.hpp"
#include "techcoach/text.hpp"

namespace techcoach {

// Architecture knobs shared by training and evaluation; serialized into every
// checkpoint so a model can be rebuilt exactly from its artifacts.
struct ModelConfig {
    int d_model = 64;
    int d_txt = 32;
    int n_st = 2;             // enhancer blocks
    int reasoner_layers = 2;  // cross-attention layers
    int assessor_layers = 4;
    int heads = 4;
    int ffn_mult = 4;
    int max_text_len = 48;
    double mask_ratio = 0.25;
    double init_std = 0.02;
    bool squared_distance = false;
    uint64_t seed = 7;

    void validate() const;  // throws on violation
};

// The full pipeline bundle: visual enhancer, TechPoint reasoner, and the
// unified assessor over one parameter store. Construction is deterministic
// given (config, feature shape, vocabulary).
class CoachModel {
    CoachModel(const ModelConfig& cfg, Shape feature_shape, Tokenizer tok, Rng init_rng);

public:
    CoachModel(const ModelConfig& cfg, Shape feature_shape, Tokenizer tok);

    ModelConfig cfg;
    Shape feature_shape;  // per-view [T, H, W, D_in]
    Tokenizer tokenizer;
    HashEmbedder embedder;  // fixed-seed commentary/TechPoint text encoder
    ParamStore store;
    STEnhancer enhancer;
    Reasoner reasoner;
    Assessor assessor;

    // Registers the task's TechPoints with the reasoner (required before any
    // forward pass).
    void set_techpoints(const TechPointSet& tps) { reasoner.set_techpoints(tps, embedder); }
};

// One instance readied for the loss pipeline: fused views, tokenized
// commentary (end token appended, truncated to the text budget), alignment
// supervision, and the per-dimension mention flags.
struct PreparedInstance {
    std::string id;
    Tensor fused;
    std::vector<int> text_ids;
    AlignmentTarget target;
    std::array<int, kNumTechDims> flags{};
    double score = 0.0;
    double mention_total = 0.0;  // sum of alignment weights
};

PreparedInstance prepare_instance(const CoachModel& model, const DatasetManifest& manifest,
                                  const ManifestInstance& inst);

// The three loss components for one instance on one tape. `align` is already
// normalized by the mention count when `normalize_align` is set.
struct InstanceLosses {
    Var mtm, mse, align;
    int n_masked = 0;
};

InstanceLosses compute_losses(const CoachModel& model, Graph& g, const PreparedInstance& item,
                              Rng& mask_rng, bool normalize_align);

// Frozen-parameter inference: greedy commentary plus predicted score.
struct InferenceResult {
    std::string instance_id;
    double pred_score = 0.0;
    std::string commentary;
    std::vector<int> token_ids;
};

InferenceResult run_inference(const CoachModel& model, const DatasetManifest& manifest,
                              const ManifestInstance& inst, int max_len);

}  // namespace techcoach
