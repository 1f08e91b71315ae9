#include "techcoach/annotator.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <thread>

#include <json.hpp>

namespace techcoach {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

// Pulls the outermost {...} out of a reply that may wrap JSON in prose or
// markdown fences.
json extract_json(const std::string& reply) {
    const size_t open = reply.find('{');
    const size_t close = reply.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open)
        throw AnnotatorParseError("reply contains no JSON object");
    try {
        return json::parse(reply.substr(open, close - open + 1));
    } catch (const json::exception& e) {
        throw AnnotatorParseError(std::string("reply is not valid JSON: ") + e.what());
    }
}

const PromptTemplate kTechPointsPrompt{
    "gen_techpoints",
    "You are a general coach with deep knowledge of <Action_Domain>.\n"
    "The athlete is practicing the task: <Action_Task>.\n\n"
    "Describe the general technical points a skilled execution of this task should follow,\n"
    "one for each of the seven technical dimensions listed below. Each technical point\n"
    "should be a single instructive sentence.\n\n"
    "Dimensions: head_eyes (head & eyes), torso_core (torso & core), arms_elbows\n"
    "(arms & elbows), wrists_hands (wrists & hands), legs_knees (legs & knees),\n"
    "feet_heels (feet & heels), human_object (human-object interaction).\n\n"
    "Answer with a single JSON object whose keys are exactly the seven dimension ids\n"
    "and whose values are the technical point sentences:\n"
    "{\"head_eyes\": \"...\", \"torso_core\": \"...\", \"arms_elbows\": \"...\",\n"
    " \"wrists_hands\": \"...\", \"legs_knees\": \"...\", \"feet_heels\": \"...\",\n"
    " \"human_object\": \"...\"}\n"};

const PromptTemplate kCommentaryPrompt{
    "gen_commentary",
    "You are a professional coach summarizing expert commentary on one recorded action\n"
    "execution.\n\n"
    "General technical points for this task:\n<General_TechPoints>\n\n"
    "Original expert commentary (time-ordered remarks):\n<Original_Expert_Commentary>\n\n"
    "For each technical point, summarize the strength and the weakness in the execution\n"
    "corresponding to that technical point, using only what the expert commentary\n"
    "supports; use null for a field the commentary does not mention. Then provide the\n"
    "overall commentary for the whole execution.\n\n"
    "Answer with a single JSON object:\n"
    "{\"techpoints\": [{\"dimension\": \"<one of the seven ids>\", \"strength\": \"...\" or null,\n"
    "\"weakness\": \"...\" or null}, ...], \"overall\": \"...\"}\n"};

const PromptTemplate kCoachScorePrompt{
    "coach_score",
    "You are an expert coach rating the quality of a piece of coaching commentary.\n\n"
    "Commentary:\n<Commentary>\n\n"
    "Rate the commentary from 0 to 5 as the coach score, where 0 means useless and 5\n"
    "means excellent professional coaching feedback. Answer with only the number.\n"};

LLMRequest make_request(const AnnotatorConfig& cfg, std::string prompt) {
    LLMRequest req;
    req.model = cfg.model;
    req.temperature = cfg.temperature;
    req.prompt = std::move(prompt);
    return req;
}

int dim_index(const std::string& id) {
    for (int i = 0; i < kNumTechDims; ++i)
        if (kDimensionIds[static_cast<size_t>(i)] == id) return i;
    return -1;
}

}  // namespace

void RawTake::validate() const {
    if (take_id.empty()) throw std::runtime_error("raw take: take_id is empty");
    if (!(duration_s >= 0.0)) throw std::runtime_error("raw take " + take_id + ": bad duration");
    if (!(rating >= 0.0 && rating <= 10.0))
        throw std::runtime_error("raw take " + take_id + ": rating outside [0,10]");
    for (const TimedComment& c : comments)
        if (!(c.t >= 0.0 && c.t <= duration_s))
            throw std::runtime_error("raw take " + take_id + ": comment timestamp " +
                                     std::to_string(c.t) + " outside [0, duration]");
}

RawTake load_raw_take(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open raw take file " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw std::runtime_error("raw take file " + path.string() + ": " + e.what());
    }
    RawTake take;
    take.take_id = doc.at("take_id").get<std::string>();
    take.duration_s = doc.at("duration_s").get<double>();
    take.task = doc.at("task").get<std::string>();
    take.domain = doc.at("domain").get<std::string>();
    take.rating = doc.at("rating").get<double>();
    for (const json& c : doc.at("comments"))
        take.comments.push_back({c.at("t").get<double>(), c.at("text").get<std::string>()});
    take.validate();
    return take;
}

void write_raw_take(const RawTake& take, const fs::path& path) {
    take.validate();
    ordered_json doc;
    doc["take_id"] = take.take_id;
    doc["duration_s"] = take.duration_s;
    doc["task"] = take.task;
    doc["domain"] = take.domain;
    doc["rating"] = take.rating;
    ordered_json arr = ordered_json::array();
    for (const TimedComment& c : take.comments) {
        ordered_json cj;
        cj["t"] = c.t;
        cj["text"] = c.text;
        arr.push_back(std::move(cj));
    }
    doc["comments"] = std::move(arr);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write raw take file " + path.string());
    out << doc.dump(2) << "\n";
}

std::vector<TakeWindow> segment_take(const RawTake& take, double window_s) {
    if (!(window_s > 0.0)) throw std::runtime_error("segment_take: window must be positive");
    take.validate();
    const int n = static_cast<int>(std::floor(take.duration_s / window_s));
    std::vector<TakeWindow> windows;
    for (int i = 0; i < n; ++i) {
        TakeWindow w;
        w.start = i * window_s;
        w.end = (i + 1) * window_s;
        for (const TimedComment& c : take.comments)
            if (c.t >= w.start && c.t < w.end) w.comments.push_back(c.text);
        if (!w.comments.empty()) windows.push_back(std::move(w));
    }
    return windows;
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
    std::string out;
    out.reserve(text.size());
    size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '<') {
            size_t j = i + 1;
            while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_'))
                ++j;
            if (j < text.size() && text[j] == '>' && j > i + 1) {
                const std::string name = text.substr(i + 1, j - i - 1);
                auto it = values.find(name);
                if (it == values.end())
                    throw std::runtime_error("prompt template '" + id + "': unresolved placeholder <" +
                                             name + ">");
                out += it->second;
                i = j + 1;
                continue;
            }
        }
        out += text[i++];
    }
    return out;
}

TechPointSet gen_techpoints(const std::string& task, const std::string& domain, LLMClient& client,
                            const AnnotatorConfig& cfg) {
    const LLMRequest req = make_request(
        cfg, kTechPointsPrompt.render({{"Action_Domain", domain}, {"Action_Task", task}}));

    std::string last_reply, last_error;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        last_reply = client.complete(req);
        try {
            json doc = extract_json(last_reply);
            if (!doc.is_object()) throw AnnotatorParseError("reply JSON is not an object");
            if (doc.size() != static_cast<size_t>(kNumTechDims))
                throw AnnotatorParseError("expected exactly " + std::to_string(kNumTechDims) +
                                          " dimension entries, got " + std::to_string(doc.size()));
            TechPointSet tps;
            tps.task_name = task;
            for (const std::string& dim : kDimensionIds) {
                if (!doc.contains(dim)) throw AnnotatorParseError("missing dimension '" + dim + "'");
                if (!doc.at(dim).is_string())
                    throw AnnotatorParseError("dimension '" + dim + "' is not a string");
                std::string text = trim(doc.at(dim).get<std::string>());
                if (text.empty()) throw AnnotatorParseError("dimension '" + dim + "' is empty");
                tps.entries.push_back({dim, std::move(text)});
            }
            tps.validate();
            return tps;
        } catch (const AnnotatorParseError& e) {
            last_error = e.what();
        }
    }
    throw AnnotatorParseError("annotator: techpoint generation for task '" + task + "' failed after " +
                              std::to_string(cfg.max_retries + 1) + " attempts (" + last_error +
                              "); last reply:\n" + last_reply);
}

CommentaryAnnotation gen_commentary(const TechPointSet& techpoints,
                                    const std::vector<std::string>& raw_comments,
                                    LLMClient& client, const AnnotatorConfig& cfg) {
    techpoints.validate();
    std::string tp_text;
    for (const TechPointEntry& e : techpoints.entries)
        tp_text += "- " + e.dimension_id + ": " + e.text + "\n";
    std::string comments_text;
    for (const std::string& c : raw_comments) comments_text += "- " + c + "\n";
    if (comments_text.empty()) comments_text = "(none)\n";

    const LLMRequest req = make_request(
        cfg, kCommentaryPrompt.render({{"General_TechPoints", tp_text},
                                       {"Original_Expert_Commentary", comments_text}}));

    std::string last_reply, last_error;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        last_reply = client.complete(req);
        try {
            json doc = extract_json(last_reply);
            if (!doc.is_object() || !doc.contains("overall") || !doc.contains("techpoints"))
                throw AnnotatorParseError("reply must carry 'techpoints' and 'overall'");
            if (!doc.at("overall").is_string())
                throw AnnotatorParseError("'overall' is not a string");
            CommentaryAnnotation ann;
            ann.instance_commentary = trim(doc.at("overall").get<std::string>());
            if (ann.instance_commentary.empty())
                throw AnnotatorParseError("overall commentary is empty");

            std::array<bool, kNumTechDims> seen{};
            for (const json& e : doc.at("techpoints")) {
                if (!e.is_object() || !e.contains("dimension"))
                    throw AnnotatorParseError("a techpoint entry lacks 'dimension'");
                const int d = dim_index(e.at("dimension").get<std::string>());
                if (d < 0)
                    throw AnnotatorParseError("unknown dimension '" +
                                              e.at("dimension").get<std::string>() + "'");
                if (seen[static_cast<size_t>(d)])
                    throw AnnotatorParseError("duplicate dimension '" +
                                              std::string(kDimensionIds[static_cast<size_t>(d)]) + "'");
                seen[static_cast<size_t>(d)] = true;
                const char* fields[2] = {"strength", "weakness"};
                for (int j = 0; j < 2; ++j) {
                    if (!e.contains(fields[j]) || e.at(fields[j]).is_null()) continue;
                    if (!e.at(fields[j]).is_string())
                        throw AnnotatorParseError(std::string("'") + fields[j] + "' is not a string");
                    std::string cell = trim(e.at(fields[j]).get<std::string>());
                    if (cell.empty()) continue;  // blank counts as unmentioned
                    ann.techpoint_commentary[static_cast<size_t>(d)][static_cast<size_t>(j)] =
                        std::move(cell);
                    ann.mention_mask[static_cast<size_t>(d)][static_cast<size_t>(j)] = 1;
                }
            }
            return ann;
        } catch (const AnnotatorParseError& e) {
            last_error = e.what();
        }
    }
    throw AnnotatorParseError("annotator: commentary generation failed after " +
                              std::to_string(cfg.max_retries + 1) + " attempts (" + last_error +
                              "); last reply:\n" + last_reply);
}

double coach_score(const std::string& commentary, LLMClient& client, const AnnotatorConfig& cfg) {
    const LLMRequest req = make_request(cfg, kCoachScorePrompt.render({{"Commentary", commentary}}));

    std::string last_reply, last_error;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        last_reply = client.complete(req);
        const std::string reply = trim(last_reply);
        // First numeric token in the reply.
        size_t i = 0;
        while (i < reply.size() && !std::isdigit(static_cast<unsigned char>(reply[i])) &&
               reply[i] != '-' && reply[i] != '.')
            ++i;
        char* end = nullptr;
        const double value = (i < reply.size()) ? std::strtod(reply.c_str() + i, &end) : 0.0;
        if (i >= reply.size() || end == reply.c_str() + i) {
            last_error = "no numeric rating found";
        } else if (!(value >= 0.0 && value <= 5.0)) {
            last_error = "rating " + std::to_string(value) + " outside [0,5]";
        } else {
            return value;
        }
    }
    throw AnnotatorParseError("annotator: coach score failed after " +
                              std::to_string(cfg.max_retries + 1) + " attempts (" + last_error +
                              "); last reply:\n" + last_reply);
}

CoachScoreSummary coach_score_split(const std::vector<std::string>& commentaries,
                                    LLMClient& client, const AnnotatorConfig& cfg) {
    CoachScoreSummary summary;
    double sum = 0.0;
    for (const std::string& text : commentaries) {
        try {
            sum += coach_score(text, client, cfg);
            ++summary.scored;
        } catch (const AnnotatorParseError&) {
            ++summary.excluded;
        }
    }
    if (summary.scored > 0) summary.mean = sum / summary.scored;
    return summary;
}

AnnotateResult annotate_take(const RawTake& take, LLMClient& client, const AnnotatorConfig& cfg) {
    take.validate();
    AnnotateResult result;
    result.techpoints = gen_techpoints(take.task, take.domain, client, cfg);

    const std::vector<TakeWindow> windows = segment_take(take, cfg.window_s);
    const size_t n = windows.size();
    std::vector<std::optional<InstanceAnnotation>> slots(n);
    std::vector<std::string> failures(n);
    std::vector<std::exception_ptr> fatal(n);

    auto work = [&](size_t i) {
        try {
            CommentaryAnnotation ann = gen_commentary(result.techpoints, windows[i].comments, client, cfg);
            char suffix[16];
            std::snprintf(suffix, sizeof(suffix), "_w%02zu", i);
            InstanceAnnotation inst;
            inst.instance_id = take.take_id + suffix;
            inst.score = take.rating;
            inst.instance_commentary = std::move(ann.instance_commentary);
            inst.techpoint_commentary = std::move(ann.techpoint_commentary);
            inst.mention_mask = ann.mention_mask;
            inst.validate();
            slots[i] = std::move(inst);
        } catch (const AnnotatorParseError& e) {
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

    for (size_t i = 0; i < n; ++i) {
        if (slots[i]) {
            result.instances.push_back(std::move(*slots[i]));
        } else {
            ++result.skipped;
            result.warnings.push_back("window " + std::to_string(i) + ": " + failures[i]);
        }
    }
    return result;
}

void write_manifest_fragment(const AnnotateResult& result, const RawTake& take,
                             const fs::path& path) {
    ordered_json doc;
    doc["version"] = 1;
    doc["take_id"] = take.take_id;
    doc["task"] = take.task;
    doc["domain"] = take.domain;
    doc["skipped"] = result.skipped;

    ordered_json tps;
    tps["task_name"] = result.techpoints.task_name;
    ordered_json entries = ordered_json::array();
    for (const TechPointEntry& e : result.techpoints.entries) {
        ordered_json ej;
        ej["dimension"] = e.dimension_id;
        ej["text"] = e.text;
        entries.push_back(std::move(ej));
    }
    tps["entries"] = std::move(entries);
    doc["techpoints"] = std::move(tps);

    ordered_json insts = ordered_json::array();
    for (const InstanceAnnotation& inst : result.instances) {
        ordered_json ij;
        ij["id"] = inst.instance_id;
        ij["score"] = inst.score;
        ij["instance_commentary"] = inst.instance_commentary;
        ordered_json cells = ordered_json::array();
        ordered_json mask = ordered_json::array();
        for (int i = 0; i < kNumTechDims; ++i) {
            ordered_json row = ordered_json::array();
            ordered_json mrow = ordered_json::array();
            for (int j = 0; j < 2; ++j) {
                const auto& cell = inst.techpoint_commentary[static_cast<size_t>(i)][static_cast<size_t>(j)];
                if (cell)
                    row.push_back(*cell);
                else
                    row.push_back(nullptr);
                mrow.push_back(inst.mention_mask[static_cast<size_t>(i)][static_cast<size_t>(j)]);
            }
            cells.push_back(std::move(row));
            mask.push_back(std::move(mrow));
        }
        ij["techpoints"] = std::move(cells);
        ij["mention_mask"] = std::move(mask);
        insts.push_back(std::move(ij));
    }
    doc["instances"] = std::move(insts);

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write manifest fragment " + path.string());
    out << doc.dump(2) << "\n";
}

AnnotateResult load_manifest_fragment(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest fragment " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw std::runtime_error("manifest fragment " + path.string() + ": " + e.what());
    }
    if (doc.at("version").get<int>() != 1)
        throw std::runtime_error("manifest fragment " + path.string() + ": unsupported version");

    AnnotateResult result;
    result.skipped = doc.at("skipped").get<int>();
    result.techpoints.task_name = doc.at("techpoints").at("task_name").get<std::string>();
    for (const json& e : doc.at("techpoints").at("entries"))
        result.techpoints.entries.push_back(
            {e.at("dimension").get<std::string>(), e.at("text").get<std::string>()});
    result.techpoints.validate();

    for (const json& ij : doc.at("instances")) {
        InstanceAnnotation inst;
        inst.instance_id = ij.at("id").get<std::string>();
        inst.score = ij.at("score").get<double>();
        inst.instance_commentary = ij.at("instance_commentary").get<std::string>();
        const json& cells = ij.at("techpoints");
        const json& mask = ij.at("mention_mask");
        if (cells.size() != kNumTechDims || mask.size() != kNumTechDims)
            throw std::runtime_error("manifest fragment: instance " + inst.instance_id +
                                     " must carry 7 techpoint rows");
        for (int i = 0; i < kNumTechDims; ++i) {
            for (int j = 0; j < 2; ++j) {
                const json& cell = cells.at(static_cast<size_t>(i)).at(static_cast<size_t>(j));
                if (!cell.is_null())
                    inst.techpoint_commentary[static_cast<size_t>(i)][static_cast<size_t>(j)] =
                        cell.get<std::string>();
                inst.mention_mask[static_cast<size_t>(i)][static_cast<size_t>(j)] =
                    mask.at(static_cast<size_t>(i)).at(static_cast<size_t>(j)).get<int>();
            }
        }
        inst.validate();
        result.instances.push_back(std::move(inst));
    }
    return result;
}

}  // namespace techcoach
