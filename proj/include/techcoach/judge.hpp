#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "techcoach/llm.hpp"
#include "techcoach/metrics.hpp"

namespace techcoach {

// Settings for the LLM judge that compares generated commentary against the
// ground truth. max_retries counts extra attempts after an unparseable reply;
// concurrency caps how many instances are judged at once.
struct JudgeConfig {
    std::string model = "gpt-4o-mini";
    double temperature = 0.0;
    int max_retries = 2;
    int concurrency = 1;
};

// Raised when the judge's reply could not be parsed even after retries.
struct JudgeParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The exact request judge() sends; exposed so replay files can be seeded.
LLMRequest judge_request(const std::string& candidate, const std::string& reference,
                         const JudgeConfig& cfg = {});

// Extracts the three labeled counts (GT_DETAILS / BOTH_MENTIONED /
// SAME_OPINION) from a judge reply. Case-insensitive, tolerates markdown
// around the labels, takes the last occurrence of each; throws
// JudgeParseError when any label is missing or the counts are inconsistent.
JudgeVerdict parse_judge_reply(const std::string& reply);

// One instance: ask the judge, parse, retry on garbage, give up loudly.
JudgeVerdict judge(const std::string& candidate, const std::string& reference, LLMClient& client,
                   const JudgeConfig& cfg = {});

// A whole split. Instances whose replies stay unparseable after retries are
// excluded and counted instead of failing the run.
struct JudgeBatchResult {
    std::vector<JudgeVerdict> verdicts;  // parsed instances, input order
    int excluded = 0;
    std::vector<std::string> warnings;  // one line per excluded instance
};

JudgeBatchResult judge_all(const std::vector<std::string>& candidates,
                           const std::vector<std::string>& references, LLMClient& client,
                           const JudgeConfig& cfg = {});

}  // namespace techcoach
