#include "techcoach/trainer.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "techcoach/featurestore.hpp"

namespace techcoach {

namespace {

using nlohmann::json;

std::vector<std::string> active_losses(const TrainConfig& cfg) {
    std::vector<std::string> active;
    if (cfg.use_mtm) active.push_back("mtm");
    if (cfg.use_mse && cfg.lambda1 > 0.0) active.push_back("mse");
    if (cfg.use_align && cfg.lambda2 > 0.0) active.push_back("align");
    return active;
}

json model_config_to_json_obj(const ModelConfig& m) {
    json j;
    j["d_model"] = m.d_model;
    j["d_txt"] = m.d_txt;
    j["n_st"] = m.n_st;
    j["reasoner_layers"] = m.reasoner_layers;
    j["assessor_layers"] = m.assessor_layers;
    j["heads"] = m.heads;
    j["ffn_mult"] = m.ffn_mult;
    j["max_text_len"] = m.max_text_len;
    j["mask_ratio"] = m.mask_ratio;
    j["init_std"] = m.init_std;
    j["squared_distance"] = m.squared_distance;
    j["seed"] = m.seed;
    return j;
}

json train_config_to_json_obj(const TrainConfig& cfg) {
    json j;
    j["model"] = model_config_to_json_obj(cfg.model);
    j["lambda1"] = cfg.lambda1;
    j["lambda2"] = cfg.lambda2;
    j["use_mtm"] = cfg.use_mtm;
    j["use_mse"] = cfg.use_mse;
    j["use_align"] = cfg.use_align;
    j["align_normalize"] = cfg.align_normalize;
    j["peak_lr"] = cfg.peak_lr;
    j["total_steps"] = cfg.total_steps;
    j["warmup_frac"] = cfg.warmup_frac;
    j["batch_size"] = cfg.batch_size;
    j["clip_norm"] = cfg.clip_norm;
    j["beta1"] = cfg.beta1;
    j["beta2"] = cfg.beta2;
    j["adam_eps"] = cfg.adam_eps;
    j["weight_decay"] = cfg.weight_decay;
    j["checkpoint_every"] = cfg.checkpoint_every;
    return j;
}

void reject_unknown_keys(const json& j, const std::set<std::string>& known, const char* what) {
    for (const auto& item : j.items())
        if (!known.count(item.key()))
            throw std::runtime_error(std::string(what) + ": unknown key '" + item.key() + "'");
}

ModelConfig model_config_from_json_obj(const json& j) {
    static const std::set<std::string> known = {
        "d_model",   "d_txt",        "n_st",     "reasoner_layers",
        "assessor_layers", "heads",  "ffn_mult", "max_text_len",
        "mask_ratio", "init_std",    "squared_distance", "seed",
    };
    if (!j.is_object()) throw std::runtime_error("model config: expected a JSON object");
    reject_unknown_keys(j, known, "model config");
    ModelConfig m;
    m.d_model = j.value("d_model", m.d_model);
    m.d_txt = j.value("d_txt", m.d_txt);
    m.n_st = j.value("n_st", m.n_st);
    m.reasoner_layers = j.value("reasoner_layers", m.reasoner_layers);
    m.assessor_layers = j.value("assessor_layers", m.assessor_layers);
    m.heads = j.value("heads", m.heads);
    m.ffn_mult = j.value("ffn_mult", m.ffn_mult);
    m.max_text_len = j.value("max_text_len", m.max_text_len);
    m.mask_ratio = j.value("mask_ratio", m.mask_ratio);
    m.init_std = j.value("init_std", m.init_std);
    m.squared_distance = j.value("squared_distance", m.squared_distance);
    m.seed = j.value("seed", m.seed);
    return m;
}

TrainConfig train_config_from_json_obj(const json& j) {
    static const std::set<std::string> known = {
        "model",     "lambda1",   "lambda2",    "use_mtm",        "use_mse",
        "use_align", "align_normalize", "peak_lr", "total_steps", "warmup_frac",
        "batch_size", "clip_norm", "beta1",     "beta2",          "adam_eps",
        "weight_decay", "checkpoint_every",
    };
    if (!j.is_object()) throw std::runtime_error("train config: expected a JSON object");
    reject_unknown_keys(j, known, "train config");
    TrainConfig cfg;
    if (j.contains("model")) cfg.model = model_config_from_json_obj(j.at("model"));
    cfg.lambda1 = j.value("lambda1", cfg.lambda1);
    cfg.lambda2 = j.value("lambda2", cfg.lambda2);
    cfg.use_mtm = j.value("use_mtm", cfg.use_mtm);
    cfg.use_mse = j.value("use_mse", cfg.use_mse);
    cfg.use_align = j.value("use_align", cfg.use_align);
    cfg.align_normalize = j.value("align_normalize", cfg.align_normalize);
    cfg.peak_lr = j.value("peak_lr", cfg.peak_lr);
    cfg.total_steps = j.value("total_steps", cfg.total_steps);
    cfg.warmup_frac = j.value("warmup_frac", cfg.warmup_frac);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.clip_norm = j.value("clip_norm", cfg.clip_norm);
    cfg.beta1 = j.value("beta1", cfg.beta1);
    cfg.beta2 = j.value("beta2", cfg.beta2);
    cfg.adam_eps = j.value("adam_eps", cfg.adam_eps);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
    return cfg;
}

std::string hash_hex(uint64_t h) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

// --- checkpoint binary layout ------------------------------------------------
// magic "TCCKPT01" | u64 step | u64 n_params | per param:
//   u32 name_len, name bytes, u32 rank, i32 dims[rank],
//   f64 values[numel], f64 adam_m[numel], f64 adam_v[numel]
// Host-endian (little on every supported target); doubles are raw IEEE bits,
// so save -> load is bit-exact.

constexpr char kMagic[8] = {'T', 'C', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
void put_raw(std::ostream& os, const T& x) {
    os.write(reinterpret_cast<const char*>(&x), sizeof(T));
}

template <typename T>
T get_raw(std::istream& is) {
    T x{};
    if (!is.read(reinterpret_cast<char*>(&x), sizeof(T)))
        throw std::runtime_error("checkpoint: truncated params.bin");
    return x;
}

void put_doubles(std::ostream& os, const std::vector<double>& v) {
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_doubles(std::istream& is, int64_t n) {
    std::vector<double> v(static_cast<size_t>(n));
    if (!is.read(reinterpret_cast<char*>(v.data()),
                 static_cast<std::streamsize>(v.size() * sizeof(double))))
        throw std::runtime_error("checkpoint: truncated params.bin");
    return v;
}

CheckpointData snapshot(CoachModel& model, const TrainConfig& cfg, uint64_t step,
                        const std::vector<Tensor>& adam_m, const std::vector<Tensor>& adam_v) {
    CheckpointData d;
    d.step = step;
    d.config = cfg;
    d.feature_shape = model.feature_shape;
    d.vocab = model.tokenizer.vocab();
    auto params = model.store.all();
    for (size_t i = 0; i < params.size(); ++i) {
        d.names.push_back(params[i]->name);
        d.values.push_back(params[i]->value);
        d.adam_m.push_back(adam_m[i]);
        d.adam_v.push_back(adam_v[i]);
    }
    return d;
}

std::filesystem::path checkpoint_dir(const std::filesystem::path& out_dir, uint64_t step) {
    std::ostringstream name;
    name << "step_" << std::setw(6) << std::setfill('0') << step;
    return out_dir / "checkpoints" / name.str();
}

}  // namespace

void TrainConfig::validate() const {
    model.validate();
    if (lambda1 < 0.0 || lambda2 < 0.0)
        throw std::runtime_error("train config: loss weights must be non-negative");
    if (warmup_frac < 0.0 || warmup_frac >= 1.0)
        throw std::runtime_error("train config: warmup fraction must lie in [0,1)");
    if (total_steps < 1) throw std::runtime_error("train config: needs at least one step");
    if (batch_size < 1) throw std::runtime_error("train config: batch size must be positive");
    if (peak_lr < 0.0) throw std::runtime_error("train config: peak lr must be non-negative");
    if (clip_norm <= 0.0) throw std::runtime_error("train config: clip norm must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw std::runtime_error("train config: adam betas must lie in [0,1)");
    if (adam_eps <= 0.0) throw std::runtime_error("train config: adam eps must be positive");
    if (weight_decay < 0.0) throw std::runtime_error("train config: weight decay must be non-negative");
    if (checkpoint_every < 1)
        throw std::runtime_error("train config: checkpoint interval must be positive");
    if (active_losses(*this).empty())
        throw std::runtime_error("train config: at least one loss term must be active");
}

double total_loss(double l_mtm, double l_mse, double l_align, const TrainConfig& cfg) {
    auto check = [](double v, const char* name) {
        if (!std::isfinite(v))
            throw std::runtime_error(std::string("total loss: ") + name + " is non-finite");
    };
    check(l_mtm, "l_mtm");
    check(l_mse, "l_mse");
    check(l_align, "l_align");
    double total = l_mtm + cfg.lambda1 * l_mse + cfg.lambda2 * l_align;
    check(total, "total");
    return total;
}

double lr_at(int step, const TrainConfig& cfg) {
    if (step < 0 || step > cfg.total_steps)
        throw std::runtime_error("lr_at: step outside [0, total_steps]");
    int warmup = static_cast<int>(std::ceil(cfg.warmup_frac * cfg.total_steps));
    warmup = std::min(warmup, cfg.total_steps - 1);  // always leave a decay segment
    if (step < warmup) return cfg.peak_lr * step / warmup;
    return cfg.peak_lr * (cfg.total_steps - step) / (cfg.total_steps - warmup);
}

std::string train_config_to_json(const TrainConfig& cfg) {
    return train_config_to_json_obj(cfg).dump();
}

TrainConfig train_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("train config: ") + e.what());
    }
    return train_config_from_json_obj(j);
}

uint64_t config_hash(const TrainConfig& cfg) { return fnv1a64(train_config_to_json(cfg)); }

void write_checkpoint(const CheckpointData& data, const std::filesystem::path& dir) {
    if (data.names.size() != data.values.size() || data.names.size() != data.adam_m.size() ||
        data.names.size() != data.adam_v.size())
        throw std::runtime_error("checkpoint: parameter lists disagree in length");
    std::filesystem::create_directories(dir);

    std::ofstream bin(dir / "params.bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw std::runtime_error("checkpoint: cannot open params.bin for writing");
    bin.write(kMagic, sizeof(kMagic));
    put_raw<uint64_t>(bin, data.step);
    put_raw<uint64_t>(bin, data.names.size());
    for (size_t i = 0; i < data.names.size(); ++i) {
        const std::string& name = data.names[i];
        const Tensor& t = data.values[i];
        if (data.adam_m[i].shape() != t.shape() || data.adam_v[i].shape() != t.shape())
            throw std::runtime_error("checkpoint: optimizer state shape mismatch for " + name);
        put_raw<uint32_t>(bin, static_cast<uint32_t>(name.size()));
        bin.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_raw<uint32_t>(bin, static_cast<uint32_t>(t.rank()));
        for (int d : t.shape()) put_raw<int32_t>(bin, d);
        put_doubles(bin, t.vec());
        put_doubles(bin, data.adam_m[i].vec());
        put_doubles(bin, data.adam_v[i].vec());
    }
    if (!bin) throw std::runtime_error("checkpoint: write to params.bin failed");
    bin.close();

    json meta;
    meta["format"] = 1;
    meta["step"] = data.step;
    meta["config"] = train_config_to_json_obj(data.config);
    meta["config_hash"] = hash_hex(config_hash(data.config));
    meta["feature_shape"] = data.feature_shape;
    meta["vocab"] = data.vocab;
    std::ofstream mf(dir / "meta.json", std::ios::trunc);
    if (!mf) throw std::runtime_error("checkpoint: cannot open meta.json for writing");
    mf << meta.dump(2) << "\n";
}

CheckpointData read_checkpoint(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "meta.json");
    if (!mf) throw std::runtime_error("checkpoint: cannot open " + (dir / "meta.json").string());
    json meta;
    try {
        mf >> meta;
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("checkpoint: bad meta.json: ") + e.what());
    }
    if (meta.value("format", 0) != 1)
        throw std::runtime_error("checkpoint: unsupported metadata format");

    CheckpointData data;
    data.step = meta.at("step").get<uint64_t>();
    data.config = train_config_from_json_obj(meta.at("config"));
    if (meta.at("config_hash").get<std::string>() != hash_hex(config_hash(data.config)))
        throw std::runtime_error("checkpoint: config hash does not match the stored config");
    data.feature_shape = meta.at("feature_shape").get<Shape>();
    data.vocab = meta.at("vocab").get<std::vector<std::string>>();

    std::ifstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("checkpoint: cannot open " + (dir / "params.bin").string());
    char magic[8];
    if (!bin.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint: params.bin has the wrong magic");
    uint64_t step = get_raw<uint64_t>(bin);
    if (step != data.step)
        throw std::runtime_error("checkpoint: params.bin and meta.json disagree on the step");
    uint64_t n_params = get_raw<uint64_t>(bin);
    for (uint64_t i = 0; i < n_params; ++i) {
        uint32_t name_len = get_raw<uint32_t>(bin);
        std::string name(name_len, '\0');
        if (!bin.read(name.data(), name_len))
            throw std::runtime_error("checkpoint: truncated params.bin");
        uint32_t rank = get_raw<uint32_t>(bin);
        Shape shape;
        for (uint32_t r = 0; r < rank; ++r) shape.push_back(get_raw<int32_t>(bin));
        int64_t numel = shape_numel(shape);
        data.names.push_back(std::move(name));
        data.values.emplace_back(shape, get_doubles(bin, numel));
        data.adam_m.emplace_back(shape, get_doubles(bin, numel));
        data.adam_v.emplace_back(shape, get_doubles(bin, numel));
    }
    return data;
}

CoachModel restore_model(const CheckpointData& data) {
    CoachModel model(data.config.model, data.feature_shape, Tokenizer::from_vocab(data.vocab));
    auto params = model.store.all();
    if (params.size() != data.names.size())
        throw std::runtime_error("checkpoint: parameter count does not match the architecture");
    for (size_t i = 0; i < params.size(); ++i) {
        if (params[i]->name != data.names[i])
            throw std::runtime_error("checkpoint: parameter order mismatch at " + data.names[i]);
        if (params[i]->value.shape() != data.values[i].shape())
            throw std::runtime_error("checkpoint: shape mismatch for " + data.names[i]);
        params[i]->value = data.values[i];
    }
    return model;
}

TrainResult train(const TrainConfig& cfg, const std::filesystem::path& data_dir,
                  const std::filesystem::path& out_dir,
                  const std::optional<std::filesystem::path>& resume_from) {
    cfg.validate();
    DatasetManifest manifest = load_manifest(data_dir / "manifest.json");
    if (manifest.instances.empty()) throw std::runtime_error("train: dataset has no instances");
    TechPointSet tps = load_techpoints(data_dir / "techpoints.json");

    TrainResult result;
    result.metrics_path = out_dir / "metrics.jsonl";

    uint64_t start_step = 0;
    std::vector<Tensor> adam_m, adam_v;
    std::optional<CoachModel> model;

    if (resume_from) {
        CheckpointData data = read_checkpoint(*resume_from);
        if (config_hash(data.config) != config_hash(cfg))
            throw std::runtime_error("train: config does not match the checkpoint's");
        model.emplace(restore_model(data));
        adam_m = std::move(data.adam_m);
        adam_v = std::move(data.adam_v);
        start_step = data.step;
        if (start_step > static_cast<uint64_t>(cfg.total_steps))
            throw std::runtime_error("train: checkpoint step is beyond total_steps");
        result.last_checkpoint = *resume_from;
    } else {
        std::vector<std::string> corpus;
        for (const auto& inst : manifest.instances)
            corpus.push_back(inst.annotation.instance_commentary);
        model.emplace(cfg.model, manifest.instances[0].feature_shape, Tokenizer::build(corpus));
        for (Param* p : model->store.all()) {
            adam_m.emplace_back(p->value.shape());
            adam_v.emplace_back(p->value.shape());
        }
    }
    model->set_techpoints(tps);

    std::vector<PreparedInstance> items;
    for (const auto& inst : manifest.instances) {
        if (inst.feature_shape != model->feature_shape)
            throw std::runtime_error("train: instance " + inst.annotation.instance_id +
                                     " has a different feature shape than the model");
        items.push_back(prepare_instance(*model, manifest, inst));
    }

    std::filesystem::create_directories(out_dir / "checkpoints");
    std::ofstream metrics(result.metrics_path,
                          start_step == 0 ? std::ios::trunc : std::ios::app);
    if (!metrics) throw std::runtime_error("train: cannot open metrics.jsonl for writing");

    auto save = [&](uint64_t step) {
        auto dir = checkpoint_dir(out_dir, step);
        write_checkpoint(snapshot(*model, cfg, step, adam_m, adam_v), dir);
        result.last_checkpoint = dir;
    };
    if (start_step == 0) save(0);

    const std::vector<std::string> active = active_losses(cfg);
    const int B = cfg.batch_size;
    const int n = static_cast<int>(items.size());
    const uint64_t mask_base = Rng::mix(cfg.model.seed, 0x4D41534Bull);
    auto params = model->store.all();
    result.steps_done = static_cast<int>(start_step);

    for (int step = static_cast<int>(start_step); step < cfg.total_steps; ++step) {
        double lr = lr_at(step, cfg);
        model->store.zero_grads();
        Rng mask_rng(Rng::mix(mask_base, static_cast<uint64_t>(step)));

        double l_mtm = 0.0, l_mse = 0.0, l_align = 0.0;
        double total = 0.0, grad_norm = 0.0;
        try {
            for (int b = 0; b < B; ++b) {
                const PreparedInstance& item =
                    items[static_cast<size_t>((static_cast<int64_t>(step) * B + b) % n)];
                Graph g;
                InstanceLosses l = compute_losses(*model, g, item, mask_rng, cfg.align_normalize);

                std::optional<Var> objective;
                auto add_term = [&](Var v, double w) {
                    Var term = (w == 1.0) ? v : g.scale(v, w);
                    objective = objective ? g.add(*objective, term) : term;
                };
                if (cfg.use_mtm) add_term(l.mtm, 1.0);
                if (cfg.use_mse && cfg.lambda1 > 0.0) add_term(l.mse, cfg.lambda1);
                if (cfg.use_align && cfg.lambda2 > 0.0) add_term(l.align, cfg.lambda2);
                g.backward(g.scale(*objective, 1.0 / B));

                l_mtm += g.value(l.mtm)[0] / B;
                l_mse += g.value(l.mse)[0] / B;
                l_align += g.value(l.align)[0] / B;
            }
            total = total_loss(l_mtm, l_mse, l_align, cfg);
            for (Param* p : params)
                for (double v : p->grad.vec()) grad_norm += v * v;
            grad_norm = std::sqrt(grad_norm);
            if (!std::isfinite(grad_norm))
                throw std::runtime_error("train: gradient norm is non-finite");
        } catch (const std::runtime_error& e) {
            if (std::string(e.what()).find("non-finite") == std::string::npos) throw;
            result.diverged = true;
            break;  // last good checkpoint stays on disk
        }

        double clip_factor = grad_norm > cfg.clip_norm ? cfg.clip_norm / grad_norm : 1.0;
        double t = static_cast<double>(step) + 1.0;  // adam bias-correction time
        double bc1 = 1.0 - std::pow(cfg.beta1, t);
        double bc2 = 1.0 - std::pow(cfg.beta2, t);
        for (size_t i = 0; i < params.size(); ++i) {
            Param& p = *params[i];
            double* m = adam_m[i].data();
            double* v = adam_v[i].data();
            for (int64_t k = 0; k < p.numel(); ++k) {
                double gk = p.grad[k] * clip_factor;
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
                double mhat = m[k] / bc1;
                double vhat = v[k] / bc2;
                p.value[k] -= lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) +
                                    cfg.weight_decay * p.value[k]);
            }
        }

        double objective_val = 0.0;
        if (cfg.use_mtm) objective_val += l_mtm;
        if (cfg.use_mse && cfg.lambda1 > 0.0) objective_val += cfg.lambda1 * l_mse;
        if (cfg.use_align && cfg.lambda2 > 0.0) objective_val += cfg.lambda2 * l_align;

        json line;
        line["step"] = step;
        line["l_mtm"] = l_mtm;
        line["l_mse"] = l_mse;
        line["l_align"] = l_align;
        line["total"] = total;
        line["objective"] = objective_val;
        line["active"] = active;
        line["lr"] = lr;
        line["grad_norm"] = grad_norm;
        metrics << line.dump() << "\n";
        metrics.flush();

        result.final_total = total;
        result.steps_done = step + 1;
        if ((step + 1) % cfg.checkpoint_every == 0 || step + 1 == cfg.total_steps)
            save(static_cast<uint64_t>(step) + 1);
    }
    return result;
}

}  // namespace techcoach
