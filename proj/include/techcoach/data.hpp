#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "techcoach/tensor.hpp"

namespace techcoach {

// The seven technical dimensions every action task is described along.
inline constexpr int kNumTechDims = 7;
inline constexpr const char* kDimensionIds[kNumTechDims] = {
    "head_eyes", "torso_core", "arms_elbows", "wrists_hands",
    "legs_knees", "feet_heels", "human_object",
};

int dimension_index(const std::string& id);  // -1 if unknown

struct TechPointEntry {
    std::string dimension_id;
    std::string text;
};

// The seven general technical points for one action task.
struct TechPointSet {
    std::string task_name;
    std::vector<TechPointEntry> entries;  // exactly kNumTechDims, fixed order

    void validate() const;  // throws on violation
};

// Ground truth for one instance. `techpoint_commentary[i][j]` holds the
// strength (j=0) / weakness (j=1) text for dimension i when mentioned;
// `mention_mask[i][j]` is 1 exactly when that cell is present.
struct InstanceAnnotation {
    std::string instance_id;
    double score = 0.0;
    std::string instance_commentary;
    std::array<std::array<std::optional<std::string>, 2>, kNumTechDims> techpoint_commentary;
    std::array<std::array<int, 2>, kNumTechDims> mention_mask{};

    void validate() const;
};

struct ManifestInstance {
    InstanceAnnotation annotation;
    std::vector<std::pair<std::string, std::string>> views;  // (name, relative path), ego then exo
    Shape feature_shape;                                     // [T, H, W, D_in]
};

struct DatasetManifest {
    int version = 1;
    std::string split;  // "train" or "eval"
    std::vector<ManifestInstance> instances;
    std::filesystem::path root;  // directory the relative paths resolve against

    const ManifestInstance& find(const std::string& instance_id) const;
};

// Per-view feature tensors for one instance, in manifest view order.
struct ClipFeatureSet {
    std::string instance_id;
    std::vector<std::pair<std::string, Tensor>> views;  // tensors of shape [T,H,W,D_in]
};

}  // namespace techcoach
