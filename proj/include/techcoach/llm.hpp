#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace techcoach {

namespace fs = std::filesystem;

// One chat-completion style request. Temperature defaults to 0 so repeated
// runs of the pipeline ask byte-identical questions.
struct LLMRequest {
    std::string model;
    double temperature = 0.0;
    std::string system;  // optional system message
    std::string prompt;  // user message
};

// Stable 64-bit hash of a request; keys replay files.
uint64_t request_hash(const LLMRequest& req);

class LLMClient {
public:
    virtual ~LLMClient() = default;
    virtual std::string complete(const LLMRequest& req) = 0;
};

// Returns queued responses in order; remembers every request it saw.
// The workhorse for unit tests that need to vary replies call-by-call.
class ScriptedLLMClient : public LLMClient {
public:
    ScriptedLLMClient() = default;
    explicit ScriptedLLMClient(std::vector<std::string> responses);

    void push(const std::string& response);
    std::string complete(const LLMRequest& req) override;

    const std::vector<LLMRequest>& calls() const { return calls_; }

private:
    std::mutex mu_;
    std::deque<std::string> queue_;
    std::vector<LLMRequest> calls_;
};

// Request-hash -> canned-response store. In replay mode (no inner client) a
// miss throws, which keeps CI fully offline and loudly deterministic. With an
// inner client it records every fresh exchange so a live run can be saved and
// replayed later.
class ReplayLLMClient : public LLMClient {
public:
    ReplayLLMClient() : mu_(std::make_unique<std::mutex>()) {}
    explicit ReplayLLMClient(std::unique_ptr<LLMClient> inner)
        : mu_(std::make_unique<std::mutex>()), inner_(std::move(inner)) {}

    static ReplayLLMClient load(const fs::path& file);

    void add(const LLMRequest& req, const std::string& response);
    void save(const fs::path& file) const;
    size_t size() const { return canned_.size(); }

    std::string complete(const LLMRequest& req) override;

private:
    std::unique_ptr<std::mutex> mu_;  // behind a pointer so the client stays movable
    std::unordered_map<uint64_t, std::string> canned_;
    std::unique_ptr<LLMClient> inner_;
};

// HTTPS chat-completion endpoint. The API key comes from an environment
// variable; transport failures and 429/5xx responses retry with exponential
// backoff. Requires a TLS-enabled build.
struct HttpLLMConfig {
    std::string host = "api.openai.com";
    std::string path = "/v1/chat/completions";
    std::string api_key_env = "TECHCOACH_API_KEY";
    int max_retries = 3;
    double backoff_s = 1.0;  // doubles after each failed attempt
    int timeout_s = 60;
};

class HttpLLMClient : public LLMClient {
public:
    explicit HttpLLMClient(HttpLLMConfig cfg = {});
    std::string complete(const LLMRequest& req) override;

private:
    HttpLLMConfig cfg_;
};

}  // namespace techcoach
