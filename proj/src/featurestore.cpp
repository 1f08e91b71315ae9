#include "techcoach/featurestore.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "techcoach/rng.hpp"

using nlohmann::json;
using nlohmann::ordered_json;

namespace techcoach {

namespace fs = std::filesystem;

int dimension_index(const std::string& id) {
    for (int i = 0; i < kNumTechDims; ++i)
        if (id == kDimensionIds[i]) return i;
    return -1;
}

void TechPointSet::validate() const {
    if (static_cast<int>(entries.size()) != kNumTechDims)
        throw std::runtime_error("techpoint set must have exactly 7 entries, got " +
                                 std::to_string(entries.size()));
    for (int i = 0; i < kNumTechDims; ++i) {
        if (entries[static_cast<size_t>(i)].dimension_id != kDimensionIds[i])
            throw std::runtime_error("techpoint entry " + std::to_string(i) + " has dimension '" +
                                     entries[static_cast<size_t>(i)].dimension_id + "', expected '" +
                                     kDimensionIds[i] + "'");
        if (entries[static_cast<size_t>(i)].text.empty())
            throw std::runtime_error(std::string("techpoint text empty for dimension ") + kDimensionIds[i]);
    }
}

void InstanceAnnotation::validate() const {
    if (!(score >= 0.0 && score <= 10.0))
        throw std::runtime_error("instance " + instance_id + ": score " + std::to_string(score) +
                                 " outside [0,10]");
    for (int i = 0; i < kNumTechDims; ++i) {
        for (int j = 0; j < 2; ++j) {
            int m = mention_mask[static_cast<size_t>(i)][static_cast<size_t>(j)];
            if (m != 0 && m != 1)
                throw std::runtime_error("instance " + instance_id + ": mention_mask must be 0/1");
            bool present = techpoint_commentary[static_cast<size_t>(i)][static_cast<size_t>(j)].has_value();
            if ((m == 1) != present)
                throw std::runtime_error("instance " + instance_id + ": mention_mask[" + std::to_string(i) +
                                         "][" + std::to_string(j) + "] disagrees with commentary presence");
        }
    }
}

const ManifestInstance& DatasetManifest::find(const std::string& instance_id) const {
    for (const ManifestInstance& inst : instances)
        if (inst.annotation.instance_id == instance_id) return inst;
    throw std::runtime_error("instance '" + instance_id + "' not in manifest");
}

Tensor read_tensor_f32(const fs::path& path, const Shape& shape) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open tensor file " + path.string());
    const auto bytes = static_cast<int64_t>(in.tellg());
    const int64_t expect = shape_numel(shape) * 4;
    if (bytes != expect)
        throw std::runtime_error("tensor file " + path.string() + " holds " + std::to_string(bytes) +
                                 " bytes, manifest shape needs " + std::to_string(expect));
    in.seekg(0);
    std::vector<float> raw(static_cast<size_t>(bytes / 4));
    in.read(reinterpret_cast<char*>(raw.data()), bytes);
    if (!in) throw std::runtime_error("short read on tensor file " + path.string());
    Tensor t(shape);
    for (size_t i = 0; i < raw.size(); ++i) t[static_cast<int64_t>(i)] = static_cast<double>(raw[i]);
    if (!t.all_finite()) throw std::runtime_error("tensor file " + path.string() + " contains NaN/Inf");
    return t;
}

void write_tensor_f32(const fs::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write tensor file " + path.string());
    std::vector<float> raw(static_cast<size_t>(t.numel()));
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(t[static_cast<int64_t>(i)]);
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
    if (!out) throw std::runtime_error("short write on tensor file " + path.string());
}

namespace {

ManifestInstance parse_instance(const json& j) {
    ManifestInstance inst;
    inst.annotation.instance_id = j.at("id").get<std::string>();
    inst.annotation.score = j.at("score").get<double>();
    inst.annotation.instance_commentary = j.at("instance_commentary").get<std::string>();

    const json& views = j.at("views");
    // Canonical order: ego first, then exo.
    for (const char* name : {"ego", "exo"}) {
        if (!views.contains(name))
            throw std::runtime_error("instance " + inst.annotation.instance_id + ": missing view '" +
                                     name + "'");
        inst.views.emplace_back(name, views.at(name).get<std::string>());
    }
    if (views.size() != 2)
        throw std::runtime_error("instance " + inst.annotation.instance_id +
                                 ": expected exactly the views {ego, exo}");

    for (const json& d : j.at("shape")) inst.feature_shape.push_back(d.get<int>());
    if (inst.feature_shape.size() != 4)
        throw std::runtime_error("instance " + inst.annotation.instance_id + ": shape must have 4 dims");

    const json& tps = j.at("techpoints");
    const json& mask = j.at("mention_mask");
    if (tps.size() != kNumTechDims || mask.size() != kNumTechDims)
        throw std::runtime_error("instance " + inst.annotation.instance_id +
                                 ": techpoints/mention_mask must have 7 rows");
    for (int i = 0; i < kNumTechDims; ++i) {
        for (int j2 = 0; j2 < 2; ++j2) {
            const json& cell = tps.at(static_cast<size_t>(i)).at(static_cast<size_t>(j2));
            if (!cell.is_null())
                inst.annotation.techpoint_commentary[static_cast<size_t>(i)][static_cast<size_t>(j2)] =
                    cell.get<std::string>();
            inst.annotation.mention_mask[static_cast<size_t>(i)][static_cast<size_t>(j2)] =
                mask.at(static_cast<size_t>(i)).at(static_cast<size_t>(j2)).get<int>();
        }
    }
    inst.annotation.validate();
    return inst;
}

ordered_json instance_to_json(const ManifestInstance& inst) {
    ordered_json j;
    j["id"] = inst.annotation.instance_id;
    j["score"] = inst.annotation.score;
    ordered_json views;
    for (const auto& [name, rel] : inst.views) views[name] = rel;
    j["views"] = views;
    j["shape"] = inst.feature_shape;
    j["instance_commentary"] = inst.annotation.instance_commentary;
    ordered_json tps = ordered_json::array();
    ordered_json mask = ordered_json::array();
    for (int i = 0; i < kNumTechDims; ++i) {
        ordered_json row = ordered_json::array();
        ordered_json mrow = ordered_json::array();
        for (int j2 = 0; j2 < 2; ++j2) {
            const auto& cell = inst.annotation.techpoint_commentary[static_cast<size_t>(i)][static_cast<size_t>(j2)];
            if (cell)
                row.push_back(*cell);
            else
                row.push_back(nullptr);
            mrow.push_back(inst.annotation.mention_mask[static_cast<size_t>(i)][static_cast<size_t>(j2)]);
        }
        tps.push_back(row);
        mask.push_back(mrow);
    }
    j["techpoints"] = tps;
    j["mention_mask"] = mask;
    return j;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw std::runtime_error("manifest " + path.string() + " is not valid JSON: " + e.what());
    }

    DatasetManifest m;
    m.version = doc.at("version").get<int>();
    m.split = doc.at("split").get<std::string>();
    if (m.split != "train" && m.split != "eval")
        throw std::runtime_error("manifest split must be train or eval, got '" + m.split + "'");
    m.root = path.parent_path();

    std::map<std::string, int> seen;
    for (const json& ij : doc.at("instances")) {
        ManifestInstance inst = parse_instance(ij);
        if (++seen[inst.annotation.instance_id] > 1)
            throw std::runtime_error("duplicate instance_id '" + inst.annotation.instance_id + "'");
        for (const auto& [name, rel] : inst.views) {
            fs::path p = m.root / rel;
            if (!fs::exists(p))
                throw std::runtime_error("instance " + inst.annotation.instance_id + ": view '" + name +
                                         "' references missing file " + p.string());
        }
        m.instances.push_back(std::move(inst));
    }
    return m;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
    ordered_json doc;
    doc["version"] = manifest.version;
    doc["split"] = manifest.split;
    ordered_json arr = ordered_json::array();
    for (const ManifestInstance& inst : manifest.instances) arr.push_back(instance_to_json(inst));
    doc["instances"] = arr;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write manifest " + path.string());
    out << doc.dump(2) << "\n";
}

ClipFeatureSet load_clip_features(const DatasetManifest& manifest, const std::string& instance_id) {
    const ManifestInstance& inst = manifest.find(instance_id);
    ClipFeatureSet set;
    set.instance_id = instance_id;
    for (const auto& [name, rel] : inst.views)
        set.views.emplace_back(name, read_tensor_f32(manifest.root / rel, inst.feature_shape));
    return set;
}

TechPointSet load_techpoints(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open techpoints file " + path.string());
    json doc;
    in >> doc;
    TechPointSet tps;
    tps.task_name = doc.at("task_name").get<std::string>();
    for (const json& e : doc.at("entries"))
        tps.entries.push_back({e.at("dimension").get<std::string>(), e.at("text").get<std::string>()});
    tps.validate();
    return tps;
}

void write_techpoints(const TechPointSet& tps, const fs::path& path) {
    tps.validate();
    ordered_json doc;
    doc["task_name"] = tps.task_name;
    ordered_json arr = ordered_json::array();
    for (const TechPointEntry& e : tps.entries) {
        ordered_json ej;
        ej["dimension"] = e.dimension_id;
        ej["text"] = e.text;
        arr.push_back(ej);
    }
    doc["entries"] = arr;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write techpoints file " + path.string());
    out << doc.dump(2) << "\n";
}

namespace {

// Closed-vocabulary templates for the synthetic corpus. Everything is
// lowercase with no punctuation so the whitespace tokenizer round-trips.
const char* kDimWords[kNumTechDims] = {"head", "torso", "arms", "wrists", "legs", "feet", "ball"};

int synth_bin(double score) {
    if (score >= 7.5) return 3;
    if (score >= 5.0) return 2;
    if (score >= 2.5) return 1;
    return 0;
}

std::string synth_instance_commentary(double score) {
    static const char* kOverall[4] = {
        "overall this is a poor attempt with weak control and an early breakdown",
        "overall this is an uneven attempt with shaky control and a rushed finish",
        "overall this is a solid attempt with steady control and a clean finish",
        "overall this is an excellent attempt with smooth control and a strong finish",
    };
    return kOverall[synth_bin(score)];
}

std::string synth_strength(int dim) {
    return std::string("the ") + kDimWords[dim] + " placement stays steady and supports the motion";
}

std::string synth_weakness(int dim) {
    return std::string("the ") + kDimWords[dim] + " placement drifts and needs more attention";
}

TechPointSet synth_techpoints() {
    TechPointSet tps;
    tps.task_name = "synthetic drill";
    const char* texts[kNumTechDims] = {
        "keep the head level and the eyes tracking the target through the whole motion",
        "keep the torso upright and the core braced to hold a stable base",
        "keep the arms extended and the elbows close to the body during the lift",
        "keep the wrists firm and the hands relaxed at the release point",
        "keep the legs loaded and the knees bent to drive the movement upward",
        "keep the feet planted and the heels down until the push begins",
        "keep the object controlled with smooth contact from setup to finish",
    };
    for (int i = 0; i < kNumTechDims; ++i)
        tps.entries.push_back({kDimensionIds[i], texts[i]});
    return tps;
}

}  // namespace

DatasetManifest generate_synthetic(uint64_t seed, int n_instances, const SynthConfig& config,
                                   const fs::path& out_dir) {
    if (n_instances < 1) throw std::runtime_error("generate_synthetic: n_instances must be >= 1");
    if (config.feature_shape.size() != 4)
        throw std::runtime_error("generate_synthetic: feature shape must be [T,H,W,D_in]");
    fs::create_directories(out_dir);

    // Evenly spaced scores spanning [0,10], dealt to instances in shuffled
    // order so instance index carries no rank information.
    std::vector<double> scores(static_cast<size_t>(n_instances));
    for (int i = 0; i < n_instances; ++i)
        scores[static_cast<size_t>(i)] =
            n_instances == 1 ? 5.0 : 10.0 * i / static_cast<double>(n_instances - 1);
    Rng order_rng(Rng::mix(seed, 0x5C03));
    order_rng.shuffle(scores);

    const int d_in = config.feature_shape[3];
    // Fixed per-view signal direction; features = noise + quality * direction.
    std::array<std::vector<double>, 2> direction;
    for (int v = 0; v < 2; ++v) {
        Rng dr(Rng::mix(seed, 0xD1 + static_cast<uint64_t>(v)));
        direction[static_cast<size_t>(v)].resize(static_cast<size_t>(d_in));
        for (int c = 0; c < d_in; ++c) direction[static_cast<size_t>(v)][static_cast<size_t>(c)] = dr.normal();
    }

    DatasetManifest m;
    m.version = 1;
    m.split = config.split;
    m.root = out_dir;

    const char* view_names[2] = {"ego", "exo"};
    for (int i = 0; i < n_instances; ++i) {
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "synth_%03d", i);
        ManifestInstance inst;
        inst.annotation.instance_id = idbuf;
        inst.annotation.score = scores[static_cast<size_t>(i)];
        inst.annotation.instance_commentary = synth_instance_commentary(inst.annotation.score);
        inst.feature_shape = config.feature_shape;

        Rng irng(Rng::mix(seed, 0x100 + static_cast<uint64_t>(i)));
        for (int dim = 0; dim < kNumTechDims; ++dim) {
            for (int j = 0; j < 2; ++j) {
                bool mention = irng.uniform() < config.mention_prob;
                inst.annotation.mention_mask[static_cast<size_t>(dim)][static_cast<size_t>(j)] = mention ? 1 : 0;
                if (mention)
                    inst.annotation.techpoint_commentary[static_cast<size_t>(dim)][static_cast<size_t>(j)] =
                        j == 0 ? synth_strength(dim) : synth_weakness(dim);
            }
        }

        const double quality = (inst.annotation.score / 10.0 - 0.5) * 2.0;  // [-1, 1]
        for (int v = 0; v < 2; ++v) {
            Tensor t(config.feature_shape);
            for (int64_t k = 0; k < t.numel(); ++k) {
                int c = static_cast<int>(k % d_in);
                t[k] = config.noise_scale * irng.normal() +
                       quality * direction[static_cast<size_t>(v)][static_cast<size_t>(c)];
            }
            std::string rel = std::string(idbuf) + "." + view_names[v] + ".f32";
            write_tensor_f32(out_dir / rel, t);
            inst.views.emplace_back(view_names[v], rel);
        }
        inst.annotation.validate();
        m.instances.push_back(std::move(inst));
    }

    write_techpoints(synth_techpoints(), out_dir / "techpoints.json");
    write_manifest(m, out_dir / "manifest.json");
    return m;
}

}  // namespace techcoach
