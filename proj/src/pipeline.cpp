#include "soundcollage/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "json.hpp"
#include "soundcollage/audio_io.hpp"
#include "soundcollage/features.hpp"
#include "soundcollage/learners.hpp"
#include "soundcollage/rng.hpp"
#include "soundcollage/segmentation.hpp"
#include "soundcollage/separation.hpp"
#include "soundcollage/synth.hpp"

namespace fs = std::filesystem;

namespace soundcollage {

namespace {

constexpr uint64_t kSaltSubsample = 0x5AB5;
constexpr uint64_t kSaltLabel = 0x1AB0;
constexpr uint64_t kSaltCap = 0xCA90;
constexpr uint64_t kSaltFolds = 0xF01D;
constexpr uint64_t kSaltForest = 0xF04E;

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& val) {
    try {
        size_t pos = 0;
        double d = std::stod(val, &pos);
        if (pos != val.size()) throw std::invalid_argument("");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": not a number: " + val);
    }
}

uint64_t to_u64(const std::string& key, const std::string& val) {
    try {
        if (!val.empty() && val[0] == '-') throw std::invalid_argument("");
        size_t pos = 0;
        uint64_t v = std::stoull(val, &pos);
        if (pos != val.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": not a non-negative integer: " + val);
    }
}

void require_cfg(bool ok, const std::string& key, const std::string& why) {
    if (!ok) throw ConfigError("config key " + key + ": " + why);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw PipelineError("cannot write " + path);
    return f;
}

nlohmann::json parse_line(const std::string& line, const std::string& path, size_t line_no) {
    try {
        return nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw PipelineError(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
}

std::string join_ids(const std::vector<std::string>& ids) {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ", ";
        out += ids[i];
    }
    return out;
}

fs::path grid_path(const fs::path& manifest_dir, const std::string& id) {
    return manifest_dir / "grid" / (id + ".grid");
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_kv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read " + path);
    std::vector<std::pair<std::string, std::string>> out;
    std::set<std::string> seen;
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + " line " + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(path + " line " + std::to_string(line_no) + ": empty key");
        }
        if (!seen.insert(key).second) {
            throw ConfigError(path + " line " + std::to_string(line_no) + ": duplicate key " + key);
        }
        out.emplace_back(std::move(key), std::move(val));
    }
    return out;
}

PipelineConfig parse_config(const std::string& path) {
    PipelineConfig cfg;
    for (const auto& [key, val] : parse_kv_file(path)) {
        if (key == "sample_rate") {
            cfg.sample_rate = static_cast<int>(to_u64(key, val));
        } else if (key == "duration_s") {
            cfg.duration_s = to_double(key, val);
        } else if (key == "window_ms") {
            cfg.window_ms = to_double(key, val);
        } else if (key == "hop_ms") {
            cfg.hop_ms = to_double(key, val);
        } else if (key == "n_mels") {
            cfg.n_mels = to_u64(key, val);
        } else if (key == "time_steps") {
            cfg.time_steps = to_u64(key, val);
        } else if (key == "sep_k") {
            cfg.sep_k = to_u64(key, val);
        } else if (key == "sep_min_gap") {
            cfg.sep_min_gap = to_u64(key, val);
        } else if (key == "sep_min_sim") {
            cfg.sep_min_sim = to_double(key, val);
        } else if (key == "seg_penalty_scale") {
            cfg.seg_penalty_scale = to_double(key, val);
        } else if (key == "seg_min_len") {
            cfg.seg_min_len = to_u64(key, val);
        } else if (key == "seg_max_changepoints") {
            cfg.seg_max_changepoints = to_u64(key, val);
        } else if (key == "seg_min_seconds") {
            cfg.seg_min_seconds = to_double(key, val);
        } else if (key == "strategy") {
            cfg.strategy = val;
        } else if (key == "n_candidates") {
            cfg.n_candidates = to_u64(key, val);
        } else if (key == "n_directions") {
            cfg.n_directions = to_u64(key, val);
        } else if (key == "flip_frac") {
            cfg.flip_frac = to_double(key, val);
        } else if (key == "max_rounds") {
            cfg.max_rounds = to_u64(key, val);
        } else if (key == "n_pairs") {
            cfg.n_pairs = to_u64(key, val);
        } else if (key == "train_frac") {
            cfg.train_frac = to_double(key, val);
        } else if (key == "hidden_dim") {
            cfg.hidden_dim = to_u64(key, val);
        } else if (key == "as_threshold") {
            cfg.as_threshold = to_double(key, val);
        } else if (key == "max_samples") {
            cfg.max_samples = to_u64(key, val);
        } else if (key == "clarity_threshold") {
            cfg.clarity_threshold = to_double(key, val);
        } else if (key == "n_reps") {
            cfg.n_reps = to_u64(key, val);
        } else if (key == "top_k") {
            cfg.top_k = to_u64(key, val);
        } else if (key == "labeler_cmd") {
            cfg.labeler_cmd = val;
        } else if (key == "n_trees") {
            cfg.n_trees = to_u64(key, val);
        } else if (key == "folds") {
            cfg.folds = to_u64(key, val);
        } else if (key == "samples_per_class") {
            cfg.samples_per_class = to_u64(key, val);
        } else if (key == "seed") {
            cfg.seed = to_u64(key, val);
        } else {
            throw ConfigError("unknown config key: " + key);
        }
    }

    require_cfg(cfg.sample_rate > 0, "sample_rate", "must be positive");
    require_cfg(cfg.duration_s > 0.0, "duration_s", "must be positive");
    require_cfg(cfg.window_ms > 0.0, "window_ms", "must be positive");
    require_cfg(cfg.hop_ms > 0.0, "hop_ms", "must be positive");
    require_cfg(cfg.n_mels >= 2, "n_mels", "must be at least 2");
    require_cfg(cfg.time_steps >= 2, "time_steps", "must be at least 2");
    require_cfg(cfg.sep_k >= 1, "sep_k", "must be positive");
    require_cfg(cfg.sep_min_sim >= -1.0 && cfg.sep_min_sim <= 1.0, "sep_min_sim",
                "must lie in [-1, 1]");
    require_cfg(cfg.seg_penalty_scale > 0.0, "seg_penalty_scale", "must be positive");
    require_cfg(cfg.seg_min_len >= 1, "seg_min_len", "must be positive");
    require_cfg(cfg.seg_min_seconds >= 0.0, "seg_min_seconds", "must be non-negative");
    require_cfg(cfg.strategy == "embedding" || cfg.strategy == "hillclimb", "strategy",
                "must be embedding or hillclimb");
    require_cfg(cfg.n_candidates >= 1, "n_candidates", "must be positive");
    require_cfg(cfg.n_directions >= 1, "n_directions", "must be positive");
    require_cfg(cfg.flip_frac > 0.0 && cfg.flip_frac <= 0.5, "flip_frac", "must lie in (0, 0.5]");
    require_cfg(cfg.max_rounds >= 1, "max_rounds", "must be positive");
    require_cfg(cfg.n_pairs >= 1, "n_pairs", "must be positive");
    require_cfg(cfg.train_frac > 0.0 && cfg.train_frac < 1.0, "train_frac",
                "must lie in (0, 1)");
    require_cfg(cfg.hidden_dim >= 1, "hidden_dim", "must be positive");
    require_cfg(cfg.as_threshold >= 0.0 && cfg.as_threshold <= 1.0, "as_threshold",
                "must lie in [0, 1]");
    require_cfg(cfg.max_samples >= 4, "max_samples", "must be at least 4");
    require_cfg(cfg.clarity_threshold >= 0.0 && cfg.clarity_threshold <= 1.0,
                "clarity_threshold", "must lie in [0, 1]");
    require_cfg(cfg.n_reps >= 1, "n_reps", "must be positive");
    require_cfg(cfg.top_k >= 1, "top_k", "must be positive");
    require_cfg(cfg.n_trees >= 1, "n_trees", "must be positive");
    require_cfg(cfg.folds >= 2, "folds", "must be at least 2");
    require_cfg(cfg.samples_per_class >= 1, "samples_per_class", "must be positive");
    return cfg;
}

// ---- manifest IO ----

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::vector<ManifestEntry> sorted = entries;
    std::sort(sorted.begin(), sorted.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
    for (size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i].id == sorted[i - 1].id) {
            throw PipelineError("duplicate manifest id: " + sorted[i].id);
        }
    }
    auto f = open_out(path);
    for (const ManifestEntry& e : sorted) {
        nlohmann::ordered_json j;
        j["id"] = e.id;
        j["path"] = e.path;
        j["origin_id"] = e.origin_id;
        j["component"] = e.component;
        j["segment_index"] = e.segment_index;
        j["duration_s"] = e.duration_s;
        if (!e.source_label.empty()) j["source_label"] = e.source_label;
        f << j.dump() << "\n";
    }
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw PipelineError("cannot read manifest: " + path);
    std::vector<ManifestEntry> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json j = parse_line(line, path, line_no);
        ManifestEntry e;
        try {
            e.id = j.at("id").get<std::string>();
            e.path = j.at("path").get<std::string>();
            e.origin_id = j.at("origin_id").get<std::string>();
            e.component = j.at("component").get<std::string>();
            e.segment_index = j.at("segment_index").get<size_t>();
            e.duration_s = j.at("duration_s").get<double>();
            if (j.contains("source_label")) e.source_label = j["source_label"].get<std::string>();
        } catch (const nlohmann::json::exception& ex) {
            throw PipelineError(path + " line " + std::to_string(line_no) + ": " + ex.what());
        }
        out.push_back(std::move(e));
    }
    return out;
}

void write_tasks(const std::string& path, const std::vector<TaskRecord>& tasks) {
    auto f = open_out(path);
    for (const TaskRecord& t : tasks) {
        nlohmann::ordered_json j;
        j["task_id"] = t.task.task_id;
        j["strategy"] = t.strategy;
        j["as_mean"] = t.estimate.mean;
        j["as_std"] = t.estimate.std;
        j["n_pairs"] = t.estimate.n_pairs;
        j["n_samples"] = t.n_samples;
        nlohmann::ordered_json a = nlohmann::ordered_json::object();
        for (const auto& [id, lab] : t.task.assignment) a[id] = lab;
        j["assignment"] = a;
        f << j.dump() << "\n";
    }
}

std::vector<TaskRecord> read_tasks(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw PipelineError("cannot read task manifest: " + path);
    std::vector<TaskRecord> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json j = parse_line(line, path, line_no);
        TaskRecord t;
        try {
            t.task.task_id = j.at("task_id").get<std::string>();
            t.strategy = j.at("strategy").get<std::string>();
            t.estimate.mean = j.at("as_mean").get<double>();
            t.estimate.std = j.at("as_std").get<double>();
            t.estimate.n_pairs = j.at("n_pairs").get<size_t>();
            t.n_samples = j.at("n_samples").get<size_t>();
            for (const auto& [id, lab] : j.at("assignment").items()) {
                t.task.assignment[id] = lab.get<int>();
            }
        } catch (const nlohmann::json::exception& ex) {
            throw PipelineError(path + " line " + std::to_string(line_no) + ": " + ex.what());
        }
        out.push_back(std::move(t));
    }
    return out;
}

void write_classes(const std::string& path, const std::vector<DiscoveredClass>& classes) {
    auto f = open_out(path);
    for (const DiscoveredClass& c : classes) {
        nlohmann::ordered_json j;
        j["task_id"] = c.task_id;
        j["label"] = c.label;
        j["clarity"] = c.clarity;
        j["as_mean"] = c.as_mean;
        j["class0_ids"] = c.class0_ids;
        j["class1_ids"] = c.class1_ids;
        nlohmann::ordered_json t = nlohmann::ordered_json::object();
        for (const auto& [lab, cl] : c.per_label_clarity) t[lab] = cl;
        j["per_label_clarity"] = t;
        f << j.dump() << "\n";
    }
}

std::vector<DiscoveredClass> read_classes(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw PipelineError("cannot read class manifest: " + path);
    std::vector<DiscoveredClass> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json j = parse_line(line, path, line_no);
        DiscoveredClass c;
        try {
            c.task_id = j.at("task_id").get<std::string>();
            c.label = j.at("label").get<std::string>();
            c.clarity = j.at("clarity").get<double>();
            c.as_mean = j.at("as_mean").get<double>();
            c.class0_ids = j.at("class0_ids").get<std::vector<std::string>>();
            c.class1_ids = j.at("class1_ids").get<std::vector<std::string>>();
            for (const auto& [lab, cl] : j.at("per_label_clarity").items()) {
                c.per_label_clarity[lab] = cl.get<double>();
            }
        } catch (const nlohmann::json::exception& ex) {
            throw PipelineError(path + " line " + std::to_string(line_no) + ": " + ex.what());
        }
        out.push_back(std::move(c));
    }
    return out;
}

// ---- synth stage ----

namespace {

ClipKind parse_kind(const std::string& key, const std::string& val) {
    if (val == "tone") return ClipKind::kTone;
    if (val == "chirp") return ClipKind::kChirp;
    if (val == "noise") return ClipKind::kNoise;
    if (val == "loop") return ClipKind::kLoop;
    if (val == "mixture") return ClipKind::kMixture;
    throw ConfigError("config key " + key + ": unknown kind: " + val);
}

}  // namespace

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
    uint64_t seed = 0;
    size_t n_per_class = 0;
    ClipSpec base;  // global defaults every class starts from
    base.duration_s = 10.0;

    std::map<size_t, std::map<std::string, std::string>> class_kv;
    for (const auto& [key, val] : parse_kv_file(spec_path)) {
        if (key == "seed") {
            seed = to_u64(key, val);
        } else if (key == "n_per_class") {
            n_per_class = to_u64(key, val);
        } else if (key == "sample_rate") {
            base.sample_rate = static_cast<int>(to_u64(key, val));
        } else if (key == "duration_s") {
            base.duration_s = to_double(key, val);
        } else if (key == "amplitude") {
            base.amplitude = to_double(key, val);
        } else if (key.rfind("class.", 0) == 0) {
            size_t dot = key.find('.', 6);
            if (dot == std::string::npos) throw ConfigError("unknown config key: " + key);
            size_t idx = to_u64(key, key.substr(6, dot - 6));
            class_kv[idx][key.substr(dot + 1)] = val;
        } else {
            throw ConfigError("unknown config key: " + key);
        }
    }
    if (n_per_class == 0) throw ConfigError("config key n_per_class: required and positive");

    std::vector<PlantedClassSpec> classes;
    for (size_t i = 0; i < class_kv.size(); ++i) {
        if (!class_kv.count(i)) {
            throw ConfigError("class indices must be contiguous from 0; missing class." +
                              std::to_string(i));
        }
        PlantedClassSpec spec;
        spec.base = base;
        for (const auto& [field, val] : class_kv[i]) {
            const std::string key = "class." + std::to_string(i) + "." + field;
            if (field == "name") {
                spec.name = val;
            } else if (field == "kind") {
                spec.base.kind = parse_kind(key, val);
            } else if (field == "freq_hz") {
                spec.base.freq_hz = to_double(key, val);
            } else if (field == "freq_end_hz") {
                spec.base.freq_end_hz = to_double(key, val);
            } else if (field == "period_s") {
                spec.base.period_s = to_double(key, val);
            } else if (field == "burst_frac") {
                spec.base.burst_frac = to_double(key, val);
            } else if (field == "event_freq_hz") {
                spec.base.event_freq_hz = to_double(key, val);
            } else if (field == "event_dur_s") {
                spec.base.event_dur_s = to_double(key, val);
            } else if (field == "n_events") {
                spec.base.n_events = to_u64(key, val);
            } else if (field == "amplitude") {
                spec.base.amplitude = to_double(key, val);
            } else {
                throw ConfigError("unknown config key: " + key);
            }
        }
        if (spec.name.empty()) {
            throw ConfigError("config key class." + std::to_string(i) + ".name: required");
        }
        classes.push_back(std::move(spec));
    }

    PlantedDataset ds = gen_planted_dataset(n_per_class, classes, seed);

    fs::create_directories(out_dir);
    std::vector<ManifestEntry> entries;
    for (size_t i = 0; i < ds.ids.size(); ++i) {
        const std::string& id = ds.ids[i];
        write_wav((fs::path(out_dir) / (id + ".wav")).string(), ds.clips[i]);
        ManifestEntry e;
        e.id = id;
        e.path = id + ".wav";
        e.origin_id = id;
        e.component = "raw";
        e.segment_index = 0;
        e.duration_s = ds.clips[i].duration_s();
        e.source_label = ds.labels.at(id);
        entries.push_back(std::move(e));
    }
    write_manifest((fs::path(out_dir) / "dataset.jsonl").string(), entries);
    return 0;
}

// ---- preprocess stage ----

int cmd_preprocess(const std::string& in_dir, const std::string& out_dir,
                   const PipelineConfig& cfg) {
    if (!fs::is_directory(in_dir)) throw PipelineError("preprocess: not a directory: " + in_dir);
    std::vector<fs::path> wavs;
    for (const auto& entry : fs::directory_iterator(in_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".wav") {
            wavs.push_back(entry.path());
        }
    }
    std::sort(wavs.begin(), wavs.end());
    if (wavs.empty()) throw PipelineError("preprocess: no .wav files in " + in_dir);

    // optional ground-truth labels produced by the synth stage
    std::map<std::string, std::string> source_labels;
    fs::path truth = fs::path(in_dir) / "dataset.jsonl";
    if (fs::exists(truth)) {
        for (const ManifestEntry& e : read_manifest(truth.string())) {
            if (!e.source_label.empty()) source_labels[e.id] = e.source_label;
        }
    }

    fs::create_directories(fs::path(out_dir) / "wav");
    fs::create_directories(fs::path(out_dir) / "grid");

    SeparationParams sep;
    sep.k = cfg.sep_k;
    sep.min_gap = cfg.sep_min_gap;
    sep.min_sim = cfg.sep_min_sim;

    std::vector<ManifestEntry> entries;
    size_t failures = 0;
    for (const fs::path& path : wavs) {
        try {
            AudioClip clip = resample(read_wav(path.string()), cfg.sample_rate);
            SeparationResult comps = separate(clip, sep);
            const std::pair<const AudioClip*, const char*> sides[2] = {{&comps.vocal, "v"},
                                                                       {&comps.background, "b"}};
            for (const auto& [comp, tag] : sides) {
                FeatureGrid frames = log_mel(*comp, cfg.n_mels, cfg.window_ms, cfg.hop_ms);
                SegmentBoundarySet bounds = detect_changepoints_auto(
                    frames, cfg.seg_penalty_scale, cfg.seg_min_len, cfg.seg_max_changepoints);
                for (const ClipSegment& seg :
                     segment_clip(*comp, bounds, cfg.hop_ms, cfg.seg_min_seconds)) {
                    if (!seg.kept) continue;
                    AudioClip padded = pad_to_duration(seg.clip, cfg.duration_s);
                    padded.id = seg.clip.id;
                    FeatureGrid grid = resample_time(
                        extract_mfcc(padded, cfg.n_mels, cfg.window_ms, cfg.hop_ms),
                        cfg.time_steps);

                    write_wav((fs::path(out_dir) / "wav" / (padded.id + ".wav")).string(), padded);
                    save_grid((fs::path(out_dir) / "grid" / (padded.id + ".grid")).string(), grid);

                    ManifestEntry e;
                    e.id = padded.id;
                    e.path = "wav/" + padded.id + ".wav";
                    e.origin_id = clip.id;
                    e.component = tag;
                    e.segment_index = seg.index;
                    e.duration_s = padded.duration_s();
                    auto it = source_labels.find(clip.id);
                    if (it != source_labels.end()) e.source_label = it->second;
                    entries.push_back(std::move(e));
                }
            }
        } catch (const std::exception& e) {
            std::fprintf(stderr, "error: clip %s: %s\n", path.string().c_str(), e.what());
            ++failures;
        }
    }

    if (entries.empty()) {
        throw PipelineError("preprocess: zero usable clips in " + in_dir + " (" +
                            std::to_string(failures) + " failed)");
    }
    write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), entries);
    return failures ? 1 : 0;
}

// ---- discover stage ----

namespace {

std::map<std::string, FeatureGrid> load_grids(const fs::path& manifest_dir,
                                              const std::vector<std::string>& ids,
                                              const std::string& stage) {
    std::vector<std::string> missing;
    for (const std::string& id : ids) {
        if (!fs::exists(grid_path(manifest_dir, id))) missing.push_back(id);
    }
    if (!missing.empty()) {
        std::sort(missing.begin(), missing.end());
        throw PipelineError(stage + ": missing grid files for: " + join_ids(missing));
    }
    std::map<std::string, FeatureGrid> grids;
    for (const std::string& id : ids) {
        grids[id] = load_grid(grid_path(manifest_dir, id).string());
    }
    return grids;
}

DiscoveryParams discovery_params(const PipelineConfig& cfg) {
    DiscoveryParams p;
    p.strategy = cfg.strategy == "hillclimb" ? DiscoveryStrategy::kAsHillclimb
                                             : DiscoveryStrategy::kEmbeddingBipartition;
    p.n_candidates = cfg.n_candidates;
    p.as_threshold = cfg.as_threshold;
    p.as.n_pairs = cfg.n_pairs;
    p.as.train_frac = cfg.train_frac;
    p.as.hidden_dim = cfg.hidden_dim;
    p.n_directions = cfg.n_directions;
    p.flip_frac = cfg.flip_frac;
    p.max_rounds = cfg.max_rounds;
    return p;
}

}  // namespace

int cmd_discover(const std::string& manifest_path, const std::string& out_path,
                 const PipelineConfig& cfg, const std::string& component) {
    if (component != "all" && component != "v" && component != "b") {
        throw ConfigError("component must be all, v, or b: " + component);
    }
    std::vector<std::string> ids;
    for (const ManifestEntry& e : read_manifest(manifest_path)) {
        if (component == "all" || e.component == component) ids.push_back(e.id);
    }
    if (ids.size() < 4) {
        throw PipelineError("discover: need at least 4 samples, have " +
                            std::to_string(ids.size()));
    }

    const size_t total = ids.size();
    if (ids.size() > cfg.max_samples) {
        Rng rng(mix_seed(cfg.seed, kSaltSubsample));
        rng.shuffle(ids);
        ids.resize(cfg.max_samples);
        std::sort(ids.begin(), ids.end());
    }
    std::fprintf(stderr, "discover: %zu of %zu samples\n", ids.size(), total);

    fs::path manifest_dir = fs::path(manifest_path).parent_path();
    std::map<std::string, FeatureGrid> grids = load_grids(manifest_dir, ids, "discover");

    std::vector<TaskRecord> records;
    for (DiscoveredTask& d : discover_tasks(grids, discovery_params(cfg), cfg.seed)) {
        records.push_back({std::move(d.task), d.estimate, d.strategy, ids.size()});
    }
    write_tasks(out_path, records);
    return 0;
}

// ---- label stage ----

int cmd_label(const std::string& tasks_path, const std::string& manifest_path,
              const std::string& out_dir, const PipelineConfig& cfg) {
    if (cfg.labeler_cmd.empty()) throw PipelineError("label: labeler_cmd not configured");
    std::vector<TaskRecord> tasks = read_tasks(tasks_path);
    fs::create_directories(out_dir);
    const std::string classes_path = (fs::path(out_dir) / "classes.jsonl").string();
    if (tasks.empty()) {
        write_classes(classes_path, {});
        return 0;
    }

    std::map<std::string, std::string> wav_of;
    fs::path manifest_dir = fs::path(manifest_path).parent_path();
    for (const ManifestEntry& e : read_manifest(manifest_path)) {
        wav_of[e.id] = (manifest_dir / e.path).string();
    }

    std::set<std::string> id_union;
    for (const TaskRecord& t : tasks) {
        for (const auto& [id, lab] : t.task.assignment) id_union.insert(id);
    }
    std::map<std::string, FeatureGrid> grids = load_grids(
        manifest_dir, std::vector<std::string>(id_union.begin(), id_union.end()), "label");

    // per task: scoring model on the full membership, then its probability
    // extremes become the exported representatives
    size_t failures = 0;
    std::vector<std::optional<RepSelection>> reps(tasks.size());
    for (size_t t = 0; t < tasks.size(); ++t) {
        const Task& task = tasks[t].task;
        std::map<std::string, FeatureGrid> members;
        for (const auto& [id, lab] : task.assignment) {
            auto it = grids.find(id);
            if (it == grids.end()) {
                throw PipelineError("label: task " + task.task_id + " references unknown id " +
                                    id);
            }
            members[id] = it->second;
        }
        std::vector<std::string> order;
        Matrix x = flatten_features(members, order);
        std::vector<size_t> all_rows(x.rows);
        for (size_t i = 0; i < x.rows; ++i) all_rows[i] = i;
        apply_standardizer(fit_standardizer(x, all_rows), x);
        std::vector<int> y;
        for (const std::string& id : order) y.push_back(task.assignment.at(id));

        MlpModel model = mlp_init(x.cols, cfg.hidden_dim,
                                  mix_seed(mix_seed(cfg.seed, kSaltLabel), 2 * t));
        try {
            mlp_train(model, x, y, MlpTrainParams{},
                      mix_seed(mix_seed(cfg.seed, kSaltLabel), 2 * t + 1));
        } catch (const DivergenceError& e) {
            std::fprintf(stderr, "skip task %s: scoring model diverged: %s\n",
                         task.task_id.c_str(), e.what());
            ++failures;
            continue;
        }

        // representatives are chosen on the standardized grids the model saw
        std::map<std::string, FeatureGrid> std_members;
        for (size_t i = 0; i < order.size(); ++i) {
            FeatureGrid g(members.at(order[i]).time_steps, members.at(order[i]).n_coeffs);
            std::copy(x.data.begin() + i * x.cols, x.data.begin() + (i + 1) * x.cols,
                      g.values.begin());
            std_members[order[i]] = std::move(g);
        }
        reps[t] = select_representatives(task, model, std_members, cfg.n_reps);
    }

    // one labeler invocation over the union of every task's representatives
    fs::path rep_dir = fs::path(out_dir) / "reps";
    fs::create_directories(rep_dir);
    std::set<std::string> rep_ids;
    for (const auto& r : reps) {
        if (!r) continue;
        rep_ids.insert(r->class0_ids.begin(), r->class0_ids.end());
        rep_ids.insert(r->class1_ids.begin(), r->class1_ids.end());
    }
    for (const std::string& id : rep_ids) {
        auto it = wav_of.find(id);
        if (it == wav_of.end() || !fs::exists(it->second)) {
            throw PipelineError("label: no WAV on disk for representative " + id);
        }
        fs::copy_file(it->second, rep_dir / (id + ".wav"), fs::copy_options::overwrite_existing);
    }

    const std::string pred_path = (fs::path(out_dir) / "predictions.jsonl").string();
    const std::string log_path = (fs::path(out_dir) / "labeler.log").string();
    std::string cmd = cfg.labeler_cmd + " \"" + rep_dir.string() + "\" \"" + pred_path +
                      "\" > \"" + log_path + "\" 2>&1";
    int status = std::system(cmd.c_str());
    if (status != 0) {
        std::string log;
        std::ifstream lf(log_path);
        if (lf) log.assign(std::istreambuf_iterator<char>(lf), {});
        throw PipelineError("label: labeler exited with status " + std::to_string(status) +
                            ": " + log);
    }

    std::map<std::string, LabelPrediction> preds;
    try {
        preds = ingest_predictions(pred_path, cfg.top_k);
    } catch (const std::exception& e) {
        throw PipelineError(std::string("label: labeler output invalid: ") + e.what());
    }

    std::vector<DiscoveredClass> classes;
    for (size_t t = 0; t < tasks.size(); ++t) {
        if (!reps[t]) continue;
        try {
            auto dc = assign_class(tasks[t].task, *reps[t], preds, cfg.clarity_threshold);
            if (!dc) {
                std::fprintf(stderr, "task %s: best clarity below threshold\n",
                             tasks[t].task.task_id.c_str());
                continue;
            }
            dc->as_mean = tasks[t].estimate.mean;
            classes.push_back(std::move(*dc));
        } catch (const CoverageError& e) {
            std::fprintf(stderr, "skip task %s: %s\n", tasks[t].task.task_id.c_str(), e.what());
            ++failures;
        }
    }
    write_classes(classes_path, classes);
    return failures ? 1 : 0;
}

// ---- downstream stage ----

int cmd_downstream(const std::string& classes_path, const std::string& tasks_path,
                   const std::string& manifest_path, const std::string& out_path,
                   const PipelineConfig& cfg) {
    std::vector<DiscoveredClass> classes = read_classes(classes_path);
    if (classes.empty()) throw PipelineError("downstream: no discovered classes");
    size_t best = 0;
    for (size_t i = 1; i < classes.size(); ++i) {
        if (classes[i].clarity > classes[best].clarity ||
            (classes[i].clarity == classes[best].clarity &&
             classes[i].task_id < classes[best].task_id)) {
            best = i;
        }
    }
    const DiscoveredClass& chosen = classes[best];

    std::optional<TaskRecord> record;
    for (TaskRecord& t : read_tasks(tasks_path)) {
        if (t.task.task_id == chosen.task_id) {
            record = std::move(t);
            break;
        }
    }
    if (!record) {
        throw PipelineError("downstream: task " + chosen.task_id + " not in " + tasks_path);
    }

    std::vector<std::string> side[2];
    for (const auto& [id, lab] : record->task.assignment) side[lab == 0 ? 0 : 1].push_back(id);
    for (int s = 0; s < 2; ++s) {
        if (side[s].size() > cfg.samples_per_class) {
            Rng rng(mix_seed(cfg.seed, kSaltCap + s));
            rng.shuffle(side[s]);
            side[s].resize(cfg.samples_per_class);
            std::sort(side[s].begin(), side[s].end());
        }
    }

    std::vector<std::string> ids;
    ids.insert(ids.end(), side[0].begin(), side[0].end());
    ids.insert(ids.end(), side[1].begin(), side[1].end());
    std::sort(ids.begin(), ids.end());
    if (ids.size() < 2 * cfg.folds) {
        throw std::invalid_argument("downstream: need at least 2*folds samples, have " +
                                    std::to_string(ids.size()));
    }

    fs::path manifest_dir = fs::path(manifest_path).parent_path();
    std::map<std::string, FeatureGrid> grids = load_grids(manifest_dir, ids, "downstream");
    std::vector<std::string> order;
    Matrix x = flatten_features(grids, order);
    std::vector<int> y;
    for (const std::string& id : order) y.push_back(record->task.assignment.at(id));

    auto folds = stratified_folds(y, cfg.folds, mix_seed(cfg.seed, kSaltFolds));

    ForestParams fp;
    fp.n_trees = cfg.n_trees;

    nlohmann::ordered_json folds_json = nlohmann::ordered_json::array();
    std::vector<double> acc, prec, rec, f1;
    for (size_t f = 0; f < folds.size(); ++f) {
        std::vector<char> in_test(order.size(), 0);
        for (size_t i : folds[f]) in_test[i] = 1;
        Matrix xtr(0, x.cols), xte(0, x.cols);
        std::vector<int> ytr, yte;
        for (size_t i = 0; i < order.size(); ++i) {
            Matrix& m = in_test[i] ? xte : xtr;
            m.data.insert(m.data.end(), x.data.begin() + i * x.cols,
                          x.data.begin() + (i + 1) * x.cols);
            ++m.rows;
            (in_test[i] ? yte : ytr).push_back(y[i]);
        }
        ForestModel model = forest_train(xtr, ytr, fp, mix_seed(cfg.seed, kSaltForest + f));
        EvalMetrics m = forest_eval(model, xte, yte);
        acc.push_back(m.accuracy);
        prec.push_back(m.macro_precision);
        rec.push_back(m.macro_recall);
        f1.push_back(m.macro_f1);

        nlohmann::ordered_json jf;
        jf["fold"] = f;
        jf["n_train"] = ytr.size();
        jf["n_test"] = yte.size();
        jf["accuracy"] = m.accuracy;
        jf["macro_precision"] = m.macro_precision;
        jf["macro_recall"] = m.macro_recall;
        jf["macro_f1"] = m.macro_f1;
        folds_json.push_back(jf);
    }

    auto stats = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double d : v) mean += d;
        mean /= v.size();
        double var = 0.0;
        for (double d : v) var += (d - mean) * (d - mean);
        nlohmann::ordered_json j;
        j["mean"] = mean;
        j["std"] = std::sqrt(var / v.size());
        return j;
    };

    nlohmann::ordered_json report;
    report["task_id"] = chosen.task_id;
    report["label"] = chosen.label;
    report["clarity"] = chosen.clarity;
    report["n_samples"] = order.size();
    report["n_class0"] = side[0].size();
    report["n_class1"] = side[1].size();
    report["folds"] = folds_json;
    nlohmann::ordered_json agg;
    agg["accuracy"] = stats(acc);
    agg["macro_precision"] = stats(prec);
    agg["macro_recall"] = stats(rec);
    agg["macro_f1"] = stats(f1);
    report["aggregate"] = agg;

    auto f = open_out(out_path);
    f << report.dump(2) << "\n";
    return 0;
}

}  // namespace soundcollage
