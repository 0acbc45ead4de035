#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "soundcollage/discovery.hpp"
#include "soundcollage/learners.hpp"

namespace soundcollage {

// Per-sample labeler output, entries sorted by descending score (ties by
// label) and already truncated to the ingest top_k.
struct LabelPrediction {
    std::string sample_id;
    std::vector<std::pair<std::string, double>> entries;
};

// Counts feeding the clarity formula: how many representatives of each class
// carry a label, out of how many representatives total per class.
struct ClarityInput {
    size_t n0_ij = 0;
    size_t n1_ij = 0;
    size_t n0_i = 0;
    size_t n1_i = 0;
};

struct DiscoveredClass {
    std::string task_id;
    std::string label;
    double clarity = 0.0;
    double as_mean = 0.0;
    std::vector<std::string> class0_ids;
    std::vector<std::string> class1_ids;
    std::map<std::string, double> per_label_clarity;
};

struct RepSelection {
    std::vector<std::string> class0_ids;
    std::vector<std::string> class1_ids;
    // set when the task has fewer than 2 * n_per_class members, so the two
    // sides cannot be filled disjointly
    bool short_selection = false;
};

class PredictionFormatError : public std::runtime_error {
public:
    PredictionFormatError(size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    explicit PredictionFormatError(const std::string& what)
        : std::runtime_error(what), line_(0) {}
    size_t line() const { return line_; }

private:
    size_t line_;
};

class DuplicateSampleError : public std::runtime_error {
public:
    DuplicateSampleError(size_t line, const std::string& id)
        : std::runtime_error("line " + std::to_string(line) + ": duplicate sample id: " + id),
          id_(id) {}
    const std::string& id() const { return id_; }

private:
    std::string id_;
};

class CoverageError : public std::runtime_error {
public:
    explicit CoverageError(std::vector<std::string> missing);
    const std::vector<std::string>& missing() const { return missing_; }

private:
    std::vector<std::string> missing_;
};

// Extremes of the model's output probability over the task's members:
// class-1 side takes the n_per_class highest, class-0 side the lowest, ties
// by lexicographic id. Sides come back sorted by id.
RepSelection select_representatives(const Task& task, const MlpModel& model,
                                    const std::map<std::string, FeatureGrid>& features,
                                    size_t n_per_class = 20);

// Reads the JSON-lines prediction format, keeping the top_k highest-score
// entries per sample (ties by label). Malformed lines raise
// PredictionFormatError with the line number; a repeated sample id raises
// DuplicateSampleError.
std::map<std::string, LabelPrediction> ingest_predictions(const std::string& path,
                                                          size_t top_k = 10);

// max((|n0_ij - n1_ij| - min(n0_ij, n1_ij)) / max(n0_i, n1_i), 0)
double clarity(const ClarityInput& in);

// Scores every label occurring in the representatives' retained predictions
// and names the task after the clearest one; returns nothing when even the
// best label's clarity is under the threshold. as_mean is left zero for the
// caller to fill from the task's agreement estimate.
std::optional<DiscoveredClass> assign_class(const Task& task, const RepSelection& reps,
                                            const std::map<std::string, LabelPrediction>& predictions,
                                            double clarity_threshold = 0.5);

}  // namespace soundcollage
