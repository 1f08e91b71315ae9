#include "techcoach/llm.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#ifdef TECHCOACH_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#endif

namespace techcoach {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

uint64_t fnv1a64(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex16(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

uint64_t request_hash(const LLMRequest& req) {
    // Field separators keep ("ab","c") and ("a","bc") distinct.
    std::ostringstream key;
    char temp[32];
    std::snprintf(temp, sizeof(temp), "%.6f", req.temperature);
    key << req.model << '\x1f' << temp << '\x1f' << req.system << '\x1f' << req.prompt;
    return fnv1a64(key.str());
}

ScriptedLLMClient::ScriptedLLMClient(std::vector<std::string> responses) {
    for (std::string& r : responses) queue_.push_back(std::move(r));
}

void ScriptedLLMClient::push(const std::string& response) {
    std::lock_guard<std::mutex> lock(mu_);
    queue_.push_back(response);
}

std::string ScriptedLLMClient::complete(const LLMRequest& req) {
    std::lock_guard<std::mutex> lock(mu_);
    calls_.push_back(req);
    if (queue_.empty()) throw std::runtime_error("scripted llm client ran out of responses");
    std::string out = std::move(queue_.front());
    queue_.pop_front();
    return out;
}

ReplayLLMClient ReplayLLMClient::load(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open llm replay file " + file.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw std::runtime_error("llm replay file " + file.string() + ": " + e.what());
    }
    if (doc.at("version").get<int>() != 1)
        throw std::runtime_error("llm replay file " + file.string() + ": unsupported version");
    ReplayLLMClient client;
    for (const json& e : doc.at("entries")) {
        uint64_t h = std::stoull(e.at("hash").get<std::string>(), nullptr, 16);
        client.canned_[h] = e.at("response").get<std::string>();
    }
    return client;
}

void ReplayLLMClient::add(const LLMRequest& req, const std::string& response) {
    std::lock_guard<std::mutex> lock(*mu_);
    canned_[request_hash(req)] = response;
}

void ReplayLLMClient::save(const fs::path& file) const {
    std::lock_guard<std::mutex> lock(*mu_);
    ordered_json doc;
    doc["version"] = 1;
    ordered_json arr = ordered_json::array();
    // Sorted by hash so the file is byte-stable across runs.
    std::vector<std::pair<uint64_t, std::string>> entries(canned_.begin(), canned_.end());
    std::sort(entries.begin(), entries.end());
    for (const auto& [h, resp] : entries) {
        ordered_json e;
        e["hash"] = hex16(h);
        e["response"] = resp;
        arr.push_back(std::move(e));
    }
    doc["entries"] = std::move(arr);
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write llm replay file " + file.string());
    out << doc.dump(2) << '\n';
}

std::string ReplayLLMClient::complete(const LLMRequest& req) {
    const uint64_t h = request_hash(req);
    {
        std::lock_guard<std::mutex> lock(*mu_);
        auto it = canned_.find(h);
        if (it != canned_.end()) return it->second;
    }
    if (!inner_)
        throw std::runtime_error("llm replay: no canned response for request " + hex16(h) +
                                 " (model=" + req.model + ")");
    std::string fresh = inner_->complete(req);
    std::lock_guard<std::mutex> lock(*mu_);
    canned_[h] = fresh;
    return fresh;
}

HttpLLMClient::HttpLLMClient(HttpLLMConfig cfg) : cfg_(std::move(cfg)) {}

#ifdef TECHCOACH_HAVE_OPENSSL

std::string HttpLLMClient::complete(const LLMRequest& req) {
    const char* key = std::getenv(cfg_.api_key_env.c_str());
    if (key == nullptr || *key == '\0')
        throw std::runtime_error("llm: environment variable " + cfg_.api_key_env + " is not set");

    ordered_json body;
    body["model"] = req.model;
    body["temperature"] = req.temperature;
    ordered_json messages = ordered_json::array();
    if (!req.system.empty()) messages.push_back({{"role", "system"}, {"content", req.system}});
    messages.push_back({{"role", "user"}, {"content", req.prompt}});
    body["messages"] = std::move(messages);
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
        if (attempt > 0) {
            const double wait = cfg_.backoff_s * static_cast<double>(1 << (attempt - 1));
            std::this_thread::sleep_for(std::chrono::duration<double>(wait));
        }
        httplib::SSLClient http(cfg_.host);
        http.set_connection_timeout(cfg_.timeout_s);
        http.set_read_timeout(cfg_.timeout_s);
        httplib::Headers headers = {{"Authorization", std::string("Bearer ") + key}};
        auto res = http.Post(cfg_.path, headers, payload, "application/json");
        if (!res) {
            last_error = "transport error " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "http status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw std::runtime_error("llm: http status " + std::to_string(res->status) + ": " +
                                     res->body);
        try {
            json doc = json::parse(res->body);
            return doc.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception& e) {
            throw std::runtime_error(std::string("llm: malformed completion response: ") + e.what());
        }
    }
    throw std::runtime_error("llm: request failed after " + std::to_string(cfg_.max_retries + 1) +
                             " attempts: " + last_error);
}

#else

std::string HttpLLMClient::complete(const LLMRequest&) {
    throw std::runtime_error("llm: built without TLS support; use a replay file instead");
}

#endif

}  // namespace techcoach
