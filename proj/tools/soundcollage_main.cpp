#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "soundcollage/pipeline.hpp"
#include "soundcollage/synth.hpp"

using namespace soundcollage;

namespace {

PipelineConfig load_config(const std::string& path) {
    return path.empty() ? PipelineConfig{} : parse_config(path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"soundcollage: discover and label sound classes in unlabeled audio"};
    app.require_subcommand(1);

    std::string config_path, spec_path, in_path, out_path, manifest_path, tasks_path,
        classes_path;
    std::string component = "all";
    std::string strategy;
    uint64_t seed = 0;
    size_t max_samples = 0;
    bool seed_set = false;

    auto* synth = app.add_subcommand("synth", "generate a planted dataset from a spec file");
    synth->add_option("--spec", spec_path, "dataset spec file")->required();
    synth->add_option("--out", out_path, "output directory")->required();

    auto* pre = app.add_subcommand("preprocess",
                                   "separate, segment, and extract features from raw WAVs");
    pre->add_option("--config", config_path, "pipeline config file");
    pre->add_option("--in", in_path, "directory of input WAVs")->required();
    pre->add_option("--out", out_path, "output directory")->required();

    auto* disc = app.add_subcommand("discover", "search for high-agreement binary tasks");
    disc->add_option("--config", config_path, "pipeline config file");
    disc->add_option("--manifest", manifest_path, "sample manifest from preprocess")->required();
    disc->add_option("--out", out_path, "task manifest to write")->required();
    disc->add_option("--component", component, "restrict to one component: all, v, or b");
    disc->add_option("--strategy", strategy, "override strategy: embedding or hillclimb");
    auto* seed_opt = disc->add_option("--seed", seed, "override the config seed");
    disc->add_option("--max-samples", max_samples, "override the sample cap");

    auto* lab = app.add_subcommand("label", "export representatives and ingest labels");
    lab->add_option("--config", config_path, "pipeline config file");
    lab->add_option("--tasks", tasks_path, "task manifest from discover")->required();
    lab->add_option("--manifest", manifest_path, "sample manifest from preprocess")->required();
    lab->add_option("--out", out_path, "output directory")->required();

    auto* down = app.add_subcommand("downstream",
                                    "cross-validated classifier on the best discovered class");
    down->add_option("--config", config_path, "pipeline config file");
    down->add_option("--classes", classes_path, "class manifest from label")->required();
    down->add_option("--tasks", tasks_path, "task manifest from discover")->required();
    down->add_option("--manifest", manifest_path, "sample manifest from preprocess")->required();
    down->add_option("--out", out_path, "metrics JSON to write")->required();

    auto* oracle = app.add_subcommand("oracle-label",
                                      "label a directory of WAVs with built-in detectors");
    oracle->add_option("wav_dir", in_path, "directory of WAVs to label")->required();
    oracle->add_option("out", out_path, "predictions JSONL to write")->required();

    CLI11_PARSE(app, argc, argv);
    seed_set = seed_opt->count() > 0;

    try {
        if (synth->parsed()) return cmd_synth(spec_path, out_path);
        PipelineConfig cfg = load_config(config_path);
        if (pre->parsed()) return cmd_preprocess(in_path, out_path, cfg);
        if (disc->parsed()) {
            if (!strategy.empty()) cfg.strategy = strategy;
            if (seed_set) cfg.seed = seed;
            if (max_samples > 0) cfg.max_samples = max_samples;
            if (cfg.strategy != "embedding" && cfg.strategy != "hillclimb") {
                throw ConfigError("strategy must be embedding or hillclimb: " + cfg.strategy);
            }
            return cmd_discover(manifest_path, out_path, cfg, component);
        }
        if (lab->parsed()) return cmd_label(tasks_path, manifest_path, out_path, cfg);
        if (down->parsed()) {
            return cmd_downstream(classes_path, tasks_path, manifest_path, out_path, cfg);
        }
        if (oracle->parsed()) {
            oracle_labeler(in_path, out_path);
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "fatal: %s\n", e.what());
        return 2;
    }
    return 2;
}
