#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "techcoach/data.hpp"
#include "techcoach/llm.hpp"

namespace techcoach {

namespace fs = std::filesystem;

// One time-stamped expert remark within a take.
struct TimedComment {
    double t = 0.0;  // seconds from take start
    std::string text;
};

// A full recorded take with its expert commentary stream and the averaged
// expert rating that every derived instance inherits.
struct RawTake {
    std::string take_id;
    double duration_s = 0.0;
    std::string task;    // e.g. "Basketball Drills - Reverse Layup"
    std::string domain;  // e.g. "Basketball"
    double rating = 0.0;  // averaged expert rating in [0,10]
    std::vector<TimedComment> comments;

    void validate() const;  // timestamps within [0, duration], rating in range
};

RawTake load_raw_take(const fs::path& path);
void write_raw_take(const RawTake& take, const fs::path& path);

// One fixed-length instance window cut from a take.
struct TakeWindow {
    double start = 0.0;
    double end = 0.0;
    std::vector<std::string> comments;  // texts of the comments inside [start, end)
};

// Cuts the take into consecutive non-overlapping windows of window_s seconds.
// Windows with no comments are dropped (nothing to annotate), and a trailing
// partial window is dropped outright.
std::vector<TakeWindow> segment_take(const RawTake& take, double window_s = 8.0);

// Prompt text with <Name> placeholders; render substitutes them and throws
// if the template mentions a placeholder the value map does not cover.
struct PromptTemplate {
    std::string id;
    std::string text;

    std::string render(const std::map<std::string, std::string>& values) const;
};

struct AnnotatorConfig {
    std::string model = "gpt-4o";
    double temperature = 0.0;
    int max_retries = 2;   // extra attempts after a malformed reply
    int concurrency = 1;   // instances annotated at once
    double window_s = 8.0;
};

// Raised when the LLM's content stays schema-invalid after all retries.
// Transport or replay-miss errors are NOT wrapped in this; they propagate.
struct AnnotatorParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Asks the LLM for the seven general technical points of a task, one per
// dimension. Malformed replies are retried; persistent failure throws with
// the last raw reply attached.
TechPointSet gen_techpoints(const std::string& task, const std::string& domain, LLMClient& client,
                            const AnnotatorConfig& cfg = {});

// Per-instance commentary: optional strength/weakness per dimension plus the
// overall instance commentary. The mention mask mirrors cell presence.
struct CommentaryAnnotation {
    std::array<std::array<std::optional<std::string>, 2>, kNumTechDims> techpoint_commentary;
    std::array<std::array<int, 2>, kNumTechDims> mention_mask{};
    std::string instance_commentary;
};

CommentaryAnnotation gen_commentary(const TechPointSet& techpoints,
                                    const std::vector<std::string>& raw_comments,
                                    LLMClient& client, const AnnotatorConfig& cfg = {});

// Asks the LLM to rate a commentary from 0 to 5; retries on non-numeric or
// out-of-range replies, then throws.
double coach_score(const std::string& commentary, LLMClient& client,
                   const AnnotatorConfig& cfg = {});

// Mean coach score over a split; failing instances are excluded and counted.
struct CoachScoreSummary {
    double mean = 0.0;
    int scored = 0;
    int excluded = 0;
};
CoachScoreSummary coach_score_split(const std::vector<std::string>& commentaries,
                                    LLMClient& client, const AnnotatorConfig& cfg = {});

// The whole pipeline for one take: segment, generate techpoints once, then
// per-window commentary. Windows whose annotation stays schema-invalid after
// retries are skipped and counted.
struct AnnotateResult {
    TechPointSet techpoints;
    std::vector<InstanceAnnotation> instances;
    int skipped = 0;
    std::vector<std::string> warnings;
};

AnnotateResult annotate_take(const RawTake& take, LLMClient& client,
                             const AnnotatorConfig& cfg = {});

// Annotations-only manifest fragment (features are supplied separately by
// the feature extraction step and merged downstream).
void write_manifest_fragment(const AnnotateResult& result, const RawTake& take,
                             const fs::path& path);
AnnotateResult load_manifest_fragment(const fs::path& path);

}  // namespace techcoach
