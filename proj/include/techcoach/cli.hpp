#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "techcoach/trainer.hpp"

namespace techcoach {

namespace fs = std::filesystem;

// Everything a subcommand needs, after flag parsing and config-file merging.
// usage_error() reports the first mutual-consistency violation (empty string
// when the config is fine); those map to exit code 2.
struct RunConfig {
    std::string command;  // gen-synth | train | eval | annotate

    fs::path manifest;    // manifest.json (train/eval)
    fs::path checkpoint;  // checkpoint directory (eval, train --resume)
    fs::path out;         // output directory
    fs::path take_file;   // raw take (annotate)
    fs::path replay;      // llm replay file (judge mock / recording)

    std::string judge = "off";  // off | mock | live
    uint64_t seed = 7;
    int n_instances = 16;
    std::string split = "train";
    double noise_scale = 0.3;
    double mention_prob = 0.6;

    TrainConfig train;  // flags already folded in

    std::string usage_error() const;
};

// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
int cmd_gen_synth(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg);
int cmd_eval(const RunConfig& cfg);
int cmd_annotate(const RunConfig& cfg);

// Parses args (no program name) and dispatches. All output goes to
// stdout/stderr; deterministic given the same inputs and seed.
int cli_run(const std::vector<std::string>& args);

}  // namespace techcoach
