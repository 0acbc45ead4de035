#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "soundcollage/features.hpp"
#include "soundcollage/learners.hpp"
#include "soundcollage/matrix.hpp"

namespace soundcollage {

// Binary labeling of a sample set. The map keeps ids sorted, which fixes
// the iteration order everywhere downstream.
struct Task {
    std::map<std::string, int> assignment;
    std::string task_id;
};

// Agreement of independently trained model pairs on held-out data.
// std is the population standard deviation over the pairs.
struct AgreementEstimate {
    double mean = 0.0;
    double std = 0.0;
    size_t n_pairs = 0;
    uint64_t split_seed = 0;
};

// Probe width 4 is deliberate: pair disagreement on structureless tasks must
// reflect initialization variance, and wide probes agree through the shared
// component of their learned interpolants even when the labels are pure noise.
struct AsParams {
    size_t n_pairs = 4;
    double train_frac = 0.8;
    size_t hidden_dim = 4;
    MlpTrainParams train;
};

enum class DiscoveryStrategy { kEmbeddingBipartition, kAsHillclimb };

struct DiscoveryParams {
    DiscoveryStrategy strategy = DiscoveryStrategy::kEmbeddingBipartition;
    size_t n_candidates = 16;
    double as_threshold = 0.85;
    AsParams as;
    size_t n_directions = 8;   // principal directions probed by the embedding strategy
    double flip_frac = 0.05;   // fraction of samples flipped per hill-climb round
    size_t max_rounds = 8;     // hill-climb round budget
};

struct DiscoveredTask {
    Task task;
    AgreementEstimate estimate;
    std::string strategy;
};

// Balanced random bipartition: floor(n/2) ones, the rest zeros.
// Throws std::invalid_argument for fewer than 4 ids.
Task random_task(const std::vector<std::string>& ids, uint64_t seed);

// Flips every label; the task_id is preserved.
Task complement(const Task& t);

// Rows are the flattened grids of the map in id order; ids_out receives that
// order. All grids must share dimensions.
Matrix flatten_features(const std::map<std::string, FeatureGrid>& features,
                        std::vector<std::string>& ids_out);

// Fraction of test rows where two models, trained from the two seeds on the
// same data, emit the same hard label. Equal seeds give identical models.
// Each seed expands to an init seed and a shuffle seed internally.
double pair_agreement(const Matrix& xtr, const std::vector<int>& ytr, const Matrix& xte,
                      size_t hidden_dim, const MlpTrainParams& tp, uint64_t seed_a,
                      uint64_t seed_b);

// One stratified train/test split at train_frac, shared by all pairs; feature
// standardization is fit on the train rows only. Throws std::invalid_argument
// if the task references unknown ids, has a missing label, or the test split
// comes out empty.
AgreementEstimate agreement_score(const Task& task,
                                  const std::map<std::string, FeatureGrid>& features,
                                  const AsParams& params, uint64_t seed);

// Top principal directions of the rows of x (unit rows of the result), found
// by power iteration with deflation. Deterministic per seed.
Matrix principal_directions(const Matrix& x, size_t n_dirs, uint64_t seed,
                            size_t n_iters = 100);

// Collapses tasks equal up to global label complement (keeping the higher
// mean, ties by lexicographic task_id), drops estimates below the threshold,
// and sorts by descending mean then ascending task_id.
std::vector<DiscoveredTask> dedup_and_rank(std::vector<DiscoveredTask> cands,
                                           double as_threshold);

struct HillclimbResult {
    Task task;
    AgreementEstimate estimate;
    double start_mean = 0.0;  // estimate of the start task at the same split seed
};

// Greedy agreement ascent from a given start task: each round trains a probe
// model on the current labels, proposes flipping the samples nearest its
// decision boundary, and keeps the proposal only if the mean agreement
// strictly improves under the same evaluation seed.
HillclimbResult hillclimb_from(const Task& start,
                               const std::map<std::string, FeatureGrid>& features,
                               const DiscoveryParams& params, uint64_t seed);

// Generates candidate tasks per the configured strategy, scores them, and
// returns the deduplicated survivors at or above as_threshold, best first.
std::vector<DiscoveredTask> discover_tasks(const std::map<std::string, FeatureGrid>& features,
                                           const DiscoveryParams& params, uint64_t seed);

}  // namespace soundcollage
