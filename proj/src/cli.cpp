#include "techcoach/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

#include "techcoach/annotator.hpp"
#include "techcoach/featurestore.hpp"
#include "techcoach/judge.hpp"
#include "techcoach/llm.hpp"
#include "techcoach/metrics.hpp"
#include "techcoach/model.hpp"
#include "techcoach/text.hpp"

namespace techcoach {

using nlohmann::json;
using nlohmann::ordered_json;

std::string RunConfig::usage_error() const {
    if (judge != "off" && judge != "mock" && judge != "live")
        return "--judge must be one of off, mock, live";
    if (judge == "mock" && replay.empty()) return "--judge mock needs --replay <file>";
    if (command == "eval" && checkpoint.empty()) return "eval needs --checkpoint";
    if (command == "annotate" && judge == "off")
        return "annotate needs --judge mock or --judge live (the pipeline asks an LLM)";
    if (command == "gen-synth" && n_instances <= 0) return "--n must be positive";
    return "";
}

namespace {

// Builds the LLM client for the requested judge mode. In live mode with
// --replay set, fresh exchanges are recorded into the replay file so the run
// can be repeated offline; `recorder` then points into the returned client.
std::unique_ptr<LLMClient> make_llm_client(const RunConfig& cfg, ReplayLLMClient** recorder) {
    *recorder = nullptr;
    if (cfg.judge == "mock") {
        auto client = std::make_unique<ReplayLLMClient>(ReplayLLMClient::load(cfg.replay));
        return client;
    }
    auto http = std::make_unique<HttpLLMClient>();
    if (cfg.replay.empty()) return http;
    auto wrapped = std::make_unique<ReplayLLMClient>(std::move(http));
    *recorder = wrapped.get();
    if (fs::exists(cfg.replay)) *wrapped = ReplayLLMClient::load(cfg.replay);
    return wrapped;
}

std::string format_cell(const ordered_json& v) {
    if (v.is_null()) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v.get<double>());
    return buf;
}

}  // namespace

int cmd_gen_synth(const RunConfig& cfg) {
    SynthConfig sc;
    sc.split = cfg.split;
    sc.noise_scale = cfg.noise_scale;
    sc.mention_prob = cfg.mention_prob;
    DatasetManifest manifest = generate_synthetic(cfg.seed, cfg.n_instances, sc, cfg.out);
    std::cout << "wrote " << manifest.instances.size() << " instances to " << cfg.out.string()
              << " (manifest.json, techpoints.json, "
              << manifest.instances.size() * 2 << " feature files)\n";
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    const fs::path data_dir = cfg.manifest.parent_path();
    std::optional<fs::path> resume;
    if (!cfg.checkpoint.empty()) resume = cfg.checkpoint;

    TrainResult res = train(cfg.train, data_dir, cfg.out, resume);
    if (res.diverged)
        std::cout << "warning: training diverged; stopped after step " << res.steps_done << "\n";
    std::cout << "trained " << res.steps_done << " steps, final loss " << res.final_total << "\n";
    std::cout << "checkpoint: " << res.last_checkpoint.string() << "\n";
    std::cout << "metrics: " << res.metrics_path.string() << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    DatasetManifest manifest = load_manifest(cfg.manifest);
    TechPointSet tps = load_techpoints(cfg.manifest.parent_path() / "techpoints.json");
    CheckpointData ckpt = read_checkpoint(cfg.checkpoint);
    CoachModel model = restore_model(ckpt);
    model.set_techpoints(tps);

    std::vector<std::string> warnings;
    ScorePairs pairs;
    std::vector<std::string> cands, refs;
    for (const ManifestInstance& inst : manifest.instances) {
        InferenceResult r = run_inference(model, manifest, inst, model.cfg.max_text_len);
        pairs.push_back({r.pred_score, inst.annotation.score, 0.0, 10.0});
        cands.push_back(r.commentary);
        refs.push_back(inst.annotation.instance_commentary);
    }

    ordered_json metrics;
    auto guarded = [&](const char* name, auto&& fn) {
        try {
            metrics[name] = fn();
        } catch (const std::exception& e) {
            metrics[name] = nullptr;
            warnings.push_back(std::string(name) + ": " + e.what());
        }
    };

    guarded("spearman", [&] { return spearman(pairs); });
    guarded("rl2", [&] { return rl2(pairs); });
    guarded("bleu1", [&] {
        double sum = 0.0;
        for (size_t i = 0; i < cands.size(); ++i)
            if (!tokenize_words(cands[i]).empty()) sum += bleu1(cands[i], {refs[i]});
        return sum / static_cast<double>(cands.size());
    });
    guarded("meteor", [&] {
        double sum = 0.0;
        for (size_t i = 0; i < cands.size(); ++i) sum += meteor(cands[i], {refs[i]});
        return sum / static_cast<double>(cands.size());
    });
    guarded("cider", [&] {
        std::vector<std::vector<std::string>> ref_corpus;
        for (const std::string& r : refs) ref_corpus.push_back({r});
        return cider(cands, ref_corpus);
    });
    guarded("embed_sim", [&] {
        HashEmbedder embedder;  // deterministic stand-in for a pretrained text encoder
        double sum = 0.0;
        for (size_t i = 0; i < cands.size(); ++i) sum += embed_similarity(cands[i], refs[i], embedder);
        return sum / static_cast<double>(cands.size());
    });

    if (cfg.judge != "off") {
        ReplayLLMClient* recorder = nullptr;
        std::unique_ptr<LLMClient> client = make_llm_client(cfg, &recorder);
        JudgeBatchResult jb = judge_all(cands, refs, *client);
        guarded("gpt_m", [&] { return gpt_m(jb.verdicts); });
        guarded("gpt_q", [&] { return gpt_q(jb.verdicts); });
        metrics["judge_excluded"] = jb.excluded;
        for (const std::string& w : jb.warnings) warnings.push_back("judge: " + w);
        if (recorder) recorder->save(cfg.replay);
    } else {
        metrics["gpt_m"] = nullptr;
        metrics["gpt_q"] = nullptr;
        metrics["judge_excluded"] = nullptr;
    }

    fs::create_directories(cfg.out);
    ordered_json report;
    report["schema_version"] = 1;
    report["command"] = "eval";
    report["split"] = manifest.split;
    report["n_instances"] = manifest.instances.size();
    report["checkpoint_step"] = ckpt.step;
    report["metrics"] = metrics;
    report["warnings"] = warnings;
    {
        std::ofstream out(cfg.out / "report.json", std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + (cfg.out / "report.json").string());
        out << report.dump(2) << "\n";
    }

    // Plain-text single-row comparison table.
    const char* cols[] = {"spearman", "rl2", "bleu1", "meteor", "cider", "embed_sim", "gpt_m", "gpt_q"};
    std::string header = "model", row = "this-run";
    for (const char* c : cols) {
        header += "\t" + std::string(c);
        row += "\t" + format_cell(metrics.at(c));
    }
    const std::string table = header + "\n" + row + "\n";
    {
        std::ofstream out(cfg.out / "report.txt", std::ios::trunc);
        out << table;
    }
    std::cout << table;
    for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
    return 0;
}

int cmd_annotate(const RunConfig& cfg) {
    RawTake take = load_raw_take(cfg.take_file);
    ReplayLLMClient* recorder = nullptr;
    std::unique_ptr<LLMClient> client = make_llm_client(cfg, &recorder);

    AnnotatorConfig acfg;
    AnnotateResult result = annotate_take(take, *client, acfg);
    if (recorder) recorder->save(cfg.replay);

    fs::create_directories(cfg.out);
    const fs::path fragment = cfg.out / (take.take_id + "_fragment.json");
    write_manifest_fragment(result, take, fragment);
    std::cout << "annotated " << result.instances.size() << " instances (skipped " << result.skipped
              << ") -> " << fragment.string() << "\n";
    for (const std::string& w : result.warnings) std::cerr << "warning: " << w << "\n";
    return 0;
}

int cli_run(const std::vector<std::string>& args) {
    CLI::App app{"descriptive action coaching pipeline"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string manifest_str, checkpoint_str, out_str, take_str, replay_str, config_str, resume_str;

    CLI::App* gen = app.add_subcommand("gen-synth", "generate a synthetic dataset");
    gen->add_option("--seed", cfg.seed, "dataset seed");
    gen->add_option("--n", cfg.n_instances, "number of instances");
    gen->add_option("--out", out_str, "output directory")->required();
    gen->add_option("--split", cfg.split, "split name stored in the manifest");
    gen->add_option("--noise", cfg.noise_scale, "feature noise scale");
    gen->add_option("--mention-prob", cfg.mention_prob, "per-cell mention probability");

    CLI::App* tr = app.add_subcommand("train", "train a model on a manifest");
    tr->add_option("--manifest", manifest_str, "path to manifest.json")->required();
    tr->add_option("--out", out_str, "output directory")->required();
    tr->add_option("--config", config_str, "training config JSON file");
    uint64_t seed_flag = 0;
    int steps_flag = 0, batch_flag = 0, dmodel_flag = 0, ckpt_every_flag = 0;
    double lr_flag = 0.0, l1_flag = 0.0, l2_flag = 0.0;
    bool no_mtm = false, no_mse = false, no_align = false;
    tr->add_option("--seed", seed_flag, "model seed");
    tr->add_option("--steps", steps_flag, "total training steps");
    tr->add_option("--peak-lr", lr_flag, "peak learning rate");
    tr->add_option("--batch-size", batch_flag, "instances per step");
    tr->add_option("--lambda1", l1_flag, "score-loss weight");
    tr->add_option("--lambda2", l2_flag, "alignment-loss weight");
    tr->add_option("--d-model", dmodel_flag, "hidden width");
    tr->add_option("--checkpoint-every", ckpt_every_flag, "steps between checkpoints");
    tr->add_option("--resume", resume_str, "checkpoint directory to resume from");
    tr->add_flag("--no-mtm", no_mtm, "drop the masked-token objective");
    tr->add_flag("--no-mse", no_mse, "drop the score objective");
    tr->add_flag("--no-align", no_align, "drop the alignment objective");

    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    ev->add_option("--manifest", manifest_str, "path to manifest.json")->required();
    ev->add_option("--checkpoint", checkpoint_str, "checkpoint directory");
    ev->add_option("--out", out_str, "output directory")->required();
    ev->add_option("--judge", cfg.judge, "LLM judge mode: off|mock|live");
    ev->add_option("--replay", replay_str, "LLM replay file (mock source / live recording)");
    ev->add_option("--seed", cfg.seed, "accepted for workflow symmetry; eval is deterministic");

    CLI::App* an = app.add_subcommand("annotate", "annotate a raw take into a manifest fragment");
    an->add_option("--take", take_str, "raw take JSON file")->required();
    an->add_option("--out", out_str, "output directory")->required();
    an->add_option("--judge", cfg.judge, "LLM mode: mock|live");
    an->add_option("--replay", replay_str, "LLM replay file (mock source / live recording)");
    an->add_option("--seed", cfg.seed, "accepted for workflow symmetry");

    std::vector<const char*> argv;
    argv.push_back("techcoach");
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    cfg.manifest = manifest_str;
    cfg.checkpoint = checkpoint_str;
    cfg.out = out_str;
    cfg.take_file = take_str;
    cfg.replay = replay_str;

    if (gen->parsed()) cfg.command = "gen-synth";
    if (tr->parsed()) cfg.command = "train";
    if (ev->parsed()) cfg.command = "eval";
    if (an->parsed()) cfg.command = "annotate";

    if (tr->parsed()) {
        if (!config_str.empty()) {
            std::ifstream in(config_str);
            if (!in) {
                std::cerr << "error: cannot open config file " << config_str << "\n";
                return 2;
            }
            const std::string text(std::istreambuf_iterator<char>(in), {});
            try {
                cfg.train = train_config_from_json(text);
            } catch (const std::exception& e) {
                std::cerr << "error: bad config file: " << e.what() << "\n";
                return 2;
            }
        }
        // Flags win over the config file.
        if (tr->count("--seed")) cfg.train.model.seed = seed_flag;
        if (tr->count("--steps")) cfg.train.total_steps = steps_flag;
        if (tr->count("--peak-lr")) cfg.train.peak_lr = lr_flag;
        if (tr->count("--batch-size")) cfg.train.batch_size = batch_flag;
        if (tr->count("--lambda1")) cfg.train.lambda1 = l1_flag;
        if (tr->count("--lambda2")) cfg.train.lambda2 = l2_flag;
        if (tr->count("--d-model")) cfg.train.model.d_model = dmodel_flag;
        if (tr->count("--checkpoint-every")) cfg.train.checkpoint_every = ckpt_every_flag;
        if (no_mtm) cfg.train.use_mtm = false;
        if (no_mse) cfg.train.use_mse = false;
        if (no_align) cfg.train.use_align = false;
        cfg.checkpoint = resume_str;
        try {
            cfg.train.validate();
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 2;
        }
    }

    const std::string usage = cfg.usage_error();
    if (!usage.empty()) {
        std::cerr << "error: " << usage << "\n";
        return 2;
    }

    try {
        if (cfg.command == "gen-synth") return cmd_gen_synth(cfg);
        if (cfg.command == "train") return cmd_train(cfg);
        if (cfg.command == "eval") return cmd_eval(cfg);
        if (cfg.command == "annotate") return cmd_annotate(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no command\n";
    return 2;
}

}  // namespace techcoach
