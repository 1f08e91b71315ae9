#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "techcoach/model.hpp"

namespace techcoach {

// Everything the training loop needs besides the data: architecture, loss
// weights, ablation switches, optimizer and schedule knobs. Serialized into
// every checkpoint so runs are reproducible from their artifacts alone.
struct TrainConfig {
    ModelConfig model;

    double lambda1 = 0.1;  // score-regression weight
    double lambda2 = 0.3;  // techpoint-alignment weight
    bool use_mtm = true;   // ablation switches for the three loss terms
    bool use_mse = true;
    bool use_align = true;
    bool align_normalize = true;  // divide alignment loss by the mention count

    double peak_lr = 2e-3;
    int total_steps = 300;
    double warmup_frac = 0.1;  // fraction of steps spent ramping 0 -> peak
    int batch_size = 4;
    double clip_norm = 1.0;  // global gradient-norm ceiling
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.01;  // decoupled, applied uniformly
    int checkpoint_every = 100;

    void validate() const;  // throws on violation
};

// The full objective value: l_mtm + lambda1*l_mse + lambda2*l_align. Throws,
// naming the offending component, if any input is non-finite. This is always
// the logged "total", regardless of which terms the ablation trains on.
double total_loss(double l_mtm, double l_mse, double l_align, const TrainConfig& cfg);

// Linear ramp 0 -> peak over the first ceil(warmup_frac * total_steps) steps,
// then linear decay to exactly zero at total_steps.
double lr_at(int step, const TrainConfig& cfg);

// JSON round trip for config files and checkpoint metadata. Parsing starts
// from defaults, applies the keys present, and rejects unknown keys.
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

// Hash of the canonical config serialization; guards resume compatibility.
uint64_t config_hash(const TrainConfig& cfg);

// Everything needed to rebuild the model and resume the optimizer mid-run.
// Parameter entries follow the store's creation order.
struct CheckpointData {
    uint64_t step = 0;
    TrainConfig config;
    Shape feature_shape;  // per-view [T, H, W, D_in]
    std::vector<std::string> vocab;
    std::vector<std::string> names;
    std::vector<Tensor> values;
    std::vector<Tensor> adam_m;
    std::vector<Tensor> adam_v;
};

// Writes/reads dir/params.bin plus dir/meta.json. The binary layout and the
// metadata are fully deterministic: no timestamps, no environment captures.
void write_checkpoint(const CheckpointData& data, const std::filesystem::path& dir);
CheckpointData read_checkpoint(const std::filesystem::path& dir);

// Fresh model rebuilt from a checkpoint: same config, vocabulary, and
// parameter values. Optimizer state stays in CheckpointData.
CoachModel restore_model(const CheckpointData& data);

struct TrainResult {
    int steps_done = 0;   // update steps completed across all runs
    bool diverged = false;
    double final_total = 0.0;  // last successfully computed total loss
    std::filesystem::path last_checkpoint;
    std::filesystem::path metrics_path;
};

// Runs (or resumes) training over the dataset in data_dir, writing
// checkpoints to out_dir/checkpoints/step_NNNNNN and per-step loss lines to
// out_dir/metrics.jsonl. On divergence (non-finite loss or gradient) the loop
// stops, keeps the last good checkpoint, and reports diverged=true.
TrainResult train(const TrainConfig& cfg, const std::filesystem::path& data_dir,
                  const std::filesystem::path& out_dir,
                  const std::optional<std::filesystem::path>& resume_from = std::nullopt);

}  // namespace techcoach
