#pragma once

#include <filesystem>
#include <string>

#include "techcoach/data.hpp"

namespace techcoach {

// Raw little-endian float32 tensor files; shape lives in the manifest.
Tensor read_tensor_f32(const std::filesystem::path& path, const Shape& shape);
void write_tensor_f32(const std::filesystem::path& path, const Tensor& t);

DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

ClipFeatureSet load_clip_features(const DatasetManifest& manifest, const std::string& instance_id);

TechPointSet load_techpoints(const std::filesystem::path& path);
void write_techpoints(const TechPointSet& tps, const std::filesystem::path& path);

// Synthetic dataset knobs. The default feature shape is deliberately small so
// the end-to-end training smoke tests stay inside a desk-scale time budget.
struct SynthConfig {
    Shape feature_shape{8, 2, 2, 8};  // [T, H, W, D_in]
    std::string split = "train";
    double noise_scale = 0.3;
    double mention_prob = 0.6;  // per (dimension, strength/weakness) cell
};

// Writes manifest.json, techpoints.json and one .f32 file per (instance,
// view) under out_dir. Pure function of (seed, n_instances, config): running
// it twice produces byte-identical files. Scores span [0,10] and the feature
// tensors carry a per-channel signal proportional to the score so a small
// model can actually regress it.
DatasetManifest generate_synthetic(uint64_t seed, int n_instances, const SynthConfig& config,
                                   const std::filesystem::path& out_dir);

}  // namespace techcoach
