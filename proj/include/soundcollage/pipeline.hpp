#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "soundcollage/discovery.hpp"
#include "soundcollage/labeling.hpp"

namespace soundcollage {

// Bad configuration or spec file; the message names the offending key.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Fatal stage precondition (exit code 2 at the CLI).
class PipelineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Every tunable of the five stages. Config files are flat "key = value"
// text, one per line, # comments; keys mirror the field names below and
// unknown keys are rejected.
struct PipelineConfig {
    int sample_rate = 16000;
    double duration_s = 10.0;  // segments are padded or truncated to this
    double window_ms = 25.0;
    double hop_ms = 10.0;
    size_t n_mels = 64;
    size_t time_steps = 64;

    size_t sep_k = 100;
    size_t sep_min_gap = 1;
    double sep_min_sim = 0.0;

    double seg_penalty_scale = 1.0;
    size_t seg_min_len = 50;  // frames
    size_t seg_max_changepoints = 9;
    double seg_min_seconds = 0.5;

    std::string strategy = "embedding";  // embedding | hillclimb
    size_t n_candidates = 16;
    size_t n_directions = 8;
    double flip_frac = 0.05;
    size_t max_rounds = 8;
    size_t n_pairs = 4;
    double train_frac = 0.8;
    size_t hidden_dim = 4;
    double as_threshold = 0.85;
    size_t max_samples = 10000;

    double clarity_threshold = 0.5;
    size_t n_reps = 20;
    size_t top_k = 10;
    std::string labeler_cmd;  // invoked as: <labeler_cmd> <wav_dir> <out.jsonl>

    size_t n_trees = 10;
    size_t folds = 5;
    size_t samples_per_class = 100;
    uint64_t seed = 0;
};

// One audio sample the pipeline knows about. Paths are relative to the
// manifest's own directory so output trees can be moved or compared whole.
struct ManifestEntry {
    std::string id;
    std::string path;
    std::string origin_id;
    std::string component;  // raw | v | b
    size_t segment_index = 0;
    double duration_s = 0.0;
    std::string source_label;  // empty = none
};

// One scored task as written by the discover stage. n_samples is the size
// of the id set discovery actually ran on (after filtering and subsampling).
struct TaskRecord {
    Task task;
    AgreementEstimate estimate;
    std::string strategy;
    size_t n_samples = 0;
};

// ---- flat key = value parsing ----

// Order-preserving key/value pairs. Blank lines and # comments are skipped;
// duplicate keys and lines without '=' are errors.
std::vector<std::pair<std::string, std::string>> parse_kv_file(const std::string& path);

// All keys optional (defaults above), every value range-checked.
PipelineConfig parse_config(const std::string& path);

// ---- manifest files: JSON lines, UTF-8, LF, keys in documented order ----

// keys: id, path, origin_id, component, segment_index, duration_s,
// source_label (omitted when empty); entries sorted by id
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

// keys: task_id, strategy, as_mean, as_std, n_pairs, n_samples, assignment
void write_tasks(const std::string& path, const std::vector<TaskRecord>& tasks);
std::vector<TaskRecord> read_tasks(const std::string& path);

// keys: task_id, label, clarity, as_mean, class0_ids, class1_ids,
// per_label_clarity
void write_classes(const std::string& path, const std::vector<DiscoveredClass>& classes);
std::vector<DiscoveredClass> read_classes(const std::string& path);

// ---- stages ----
// Each returns a process exit code: 0 = success (possibly empty results),
// 1 = completed with per-item failures recorded on stderr. Fatal
// preconditions throw (PipelineError, ConfigError, std::invalid_argument);
// the CLI maps those to exit code 2.

// Synth spec file: flat key = value with global keys (seed, n_per_class,
// sample_rate, duration_s, amplitude) and per-class keys class.<i>.name,
// class.<i>.kind (tone|chirp|noise|loop|mixture) plus the kind's parameters
// (freq_hz, freq_end_hz, period_s, burst_frac, event_freq_hz, event_dur_s,
// n_events). Writes <id>.wav per clip and dataset.jsonl.
int cmd_synth(const std::string& spec_path, const std::string& out_dir);

// Per clip: resample, separate into v and b, change-point segment each
// component, pad kept segments to duration_s, extract time_steps x n_mels
// grids. Writes wav/<id>.wav, grid/<id>.grid, manifest.jsonl under out_dir.
// Segment ids are "<origin>.<component>.s<index>".
int cmd_preprocess(const std::string& in_dir, const std::string& out_dir,
                   const PipelineConfig& cfg);

// Runs task discovery over the manifest's grids (component = all | v | b),
// uniformly subsampling to max_samples ids first when the manifest is
// larger. Writes the task manifest to out_path.
int cmd_discover(const std::string& manifest_path, const std::string& out_path,
                 const PipelineConfig& cfg, const std::string& component = "all");

// Per task: retrain a scoring model on the full task, pick representatives,
// export their WAVs to out_dir/reps, invoke labeler_cmd once over the union,
// ingest predictions, and assign a label. Tasks with prediction coverage
// gaps are skipped with a reason. Writes out_dir/classes.jsonl.
int cmd_label(const std::string& tasks_path, const std::string& manifest_path,
              const std::string& out_dir, const PipelineConfig& cfg);

// Builds a labeled set from the highest-clarity class's task sides (each
// capped at samples_per_class by seeded subsample), runs stratified k-fold
// cross-validation with the forest learner, and writes per-fold plus
// aggregate metrics as one JSON document at out_path.
int cmd_downstream(const std::string& classes_path, const std::string& tasks_path,
                   const std::string& manifest_path, const std::string& out_path,
                   const PipelineConfig& cfg);

}  // namespace soundcollage
