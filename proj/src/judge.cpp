#include "techcoach/judge.hpp"

#include <atomic>
#include <cctype>
#include <optional>
#include <thread>

namespace techcoach {

namespace {

constexpr const char* kJudgeSystem =
    "You are an expert coach who evaluates generated coaching commentary against "
    "ground-truth commentary for the same action performance.";

// Finds the integer following the LAST occurrence of `label` (matched
// case-insensitively), skipping markdown decoration between label and number.
std::optional<int> find_labeled_int(const std::string& reply, const std::string& label) {
    std::string lower(reply.size(), '\0');
    for (size_t i = 0; i < reply.size(); ++i)
        lower[i] = static_cast<char>(std::tolower(static_cast<unsigned char>(reply[i])));
    std::string want(label.size(), '\0');
    for (size_t i = 0; i < label.size(); ++i)
        want[i] = static_cast<char>(std::tolower(static_cast<unsigned char>(label[i])));

    size_t pos = lower.rfind(want);
    if (pos == std::string::npos) return std::nullopt;
    size_t i = pos + want.size();
    // Tolerate ":", "=", "**", spaces between the label and the count, but
    // stay on the same line.
    while (i < reply.size() && reply[i] != '\n' &&
           !std::isdigit(static_cast<unsigned char>(reply[i])) && reply[i] != '-')
        ++i;
    if (i >= reply.size() || reply[i] == '\n') return std::nullopt;
    size_t end = i;
    if (reply[end] == '-') ++end;
    while (end < reply.size() && std::isdigit(static_cast<unsigned char>(reply[end]))) ++end;
    if (end == i || (reply[i] == '-' && end == i + 1)) return std::nullopt;
    return std::stoi(reply.substr(i, end - i));
}

}  // namespace

LLMRequest judge_request(const std::string& candidate, const std::string& reference,
                         const JudgeConfig& cfg) {
    LLMRequest req;
    req.model = cfg.model;
    req.temperature = cfg.temperature;
    req.system = kJudgeSystem;
    req.prompt =
        "Ground-truth commentary:\n" + reference +
        "\n\nGenerated commentary:\n" + candidate +
        "\n\nCount the following, in order:\n"
        "1. The number of technical details mentioned by the ground-truth commentary.\n"
        "2. Of those, the number also mentioned by the generated commentary.\n"
        "3. Of the both-mentioned details, the number on which both commentaries share the "
        "same coaching opinion (the same praise or the same improvement suggestion).\n\n"
        "Answer with exactly three lines, integers only:\n"
        "GT_DETAILS: <count>\n"
        "BOTH_MENTIONED: <count>\n"
        "SAME_OPINION: <count>\n";
    return req;
}

JudgeVerdict parse_judge_reply(const std::string& reply) {
    auto gt = find_labeled_int(reply, "GT_DETAILS");
    auto both = find_labeled_int(reply, "BOTH_MENTIONED");
    auto same = find_labeled_int(reply, "SAME_OPINION");
    if (!gt || !both || !same)
        throw JudgeParseError("judge: reply is missing a labeled count");
    JudgeVerdict v{*gt, *both, *same, reply};
    try {
        v.validate();
    } catch (const std::runtime_error& e) {
        throw JudgeParseError(std::string("judge: inconsistent counts: ") + e.what());
    }
    return v;
}

JudgeVerdict judge(const std::string& candidate, const std::string& reference, LLMClient& client,
                   const JudgeConfig& cfg) {
    if (reference.empty()) throw std::runtime_error("judge: reference commentary is empty");
    const LLMRequest req = judge_request(candidate, reference, cfg);
    std::string last_error;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        const std::string raw = client.complete(req);
        try {
            return parse_judge_reply(raw);
        } catch (const JudgeParseError& e) {
            last_error = std::string(e.what()) + "; reply was:\n" + raw;
        }
    }
    throw JudgeParseError("judge: unparseable after " + std::to_string(cfg.max_retries + 1) +
                          " attempts; " + last_error);
}

JudgeBatchResult judge_all(const std::vector<std::string>& candidates,
                           const std::vector<std::string>& references, LLMClient& client,
                           const JudgeConfig& cfg) {
    if (candidates.size() != references.size())
        throw std::runtime_error("judge: candidates and references must be parallel");

    const size_t n = candidates.size();
    std::vector<std::optional<JudgeVerdict>> slots(n);
    std::vector<std::string> failures(n);
    std::vector<std::exception_ptr> fatal(n);

    auto work = [&](size_t i) {
        try {
            slots[i] = judge(candidates[i], references[i], client, cfg);
        } catch (const JudgeParseError& e) {
            failures[i] = e.what();
        } catch (...) {
            fatal[i] = std::current_exception();
        }
    };

    const int cap = std::max(1, cfg.concurrency);
    if (cap == 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) work(i);
    } else {
        std::atomic<size_t> next{0};
        auto runner = [&] {
            for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) work(i);
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < cap; ++t) pool.emplace_back(runner);
        for (std::thread& t : pool) t.join();
    }

    for (size_t i = 0; i < n; ++i)
        if (fatal[i]) std::rethrow_exception(fatal[i]);

    JudgeBatchResult result;
    for (size_t i = 0; i < n; ++i) {
        if (slots[i]) {
            result.verdicts.push_back(std::move(*slots[i]));
        } else {
            ++result.excluded;
            result.warnings.push_back("instance " + std::to_string(i) + ": " + failures[i]);
        }
    }
    return result;
}

}  // namespace techcoach
