#include "soundcollage/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"

namespace soundcollage {

CoverageError::CoverageError(std::vector<std::string> missing)
    : std::runtime_error([&missing] {
          std::sort(missing.begin(), missing.end());
          std::string msg = "predictions missing for representatives:";
          for (const auto& id : missing) msg += " " + id;
          return msg;
      }()),
      missing_(std::move(missing)) {
    std::sort(missing_.begin(), missing_.end());
}

RepSelection select_representatives(const Task& task, const MlpModel& model,
                                    const std::map<std::string, FeatureGrid>& features,
                                    size_t n_per_class) {
    if (task.assignment.empty()) {
        throw std::invalid_argument("select_representatives: task has no samples");
    }
    if (n_per_class == 0) {
        throw std::invalid_argument("select_representatives: n_per_class must be positive");
    }

    std::vector<std::pair<double, std::string>> scored;
    scored.reserve(task.assignment.size());
    for (const auto& [id, lab] : task.assignment) {
        auto it = features.find(id);
        if (it == features.end()) {
            throw std::invalid_argument("select_representatives: no features for id: " + id);
        }
        const FeatureGrid& g = it->second;
        if (g.time_steps * g.n_coeffs != model.input_dim) {
            throw std::invalid_argument("select_representatives: grid width mismatch at id: " + id);
        }
        scored.emplace_back(mlp_prob(model, g.values.data()), id);
    }

    const size_t take = std::min(n_per_class, scored.size());
    RepSelection reps;
    reps.short_selection = scored.size() < 2 * n_per_class;

    auto lo = scored;
    std::sort(lo.begin(), lo.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return a.second < b.second;
    });
    for (size_t i = 0; i < take; ++i) reps.class0_ids.push_back(lo[i].second);

    std::sort(lo.begin(), lo.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (size_t i = 0; i < take; ++i) reps.class1_ids.push_back(lo[i].second);

    std::sort(reps.class0_ids.begin(), reps.class0_ids.end());
    std::sort(reps.class1_ids.begin(), reps.class1_ids.end());
    return reps;
}

std::map<std::string, LabelPrediction> ingest_predictions(const std::string& path, size_t top_k) {
    if (top_k == 0) throw std::invalid_argument("ingest_predictions: top_k must be positive");
    std::ifstream f(path);
    if (!f) throw PredictionFormatError("cannot open prediction file: " + path);

    std::map<std::string, LabelPrediction> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw PredictionFormatError(line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!obj.is_object() || !obj.contains("sample_id") || !obj["sample_id"].is_string() ||
            !obj.contains("predictions") || !obj["predictions"].is_array()) {
            throw PredictionFormatError(line_no,
                                        "expected {\"sample_id\": str, \"predictions\": [...]}");
        }
        std::string id = obj["sample_id"].get<std::string>();
        if (id.empty()) throw PredictionFormatError(line_no, "empty sample_id");
        if (out.count(id)) throw DuplicateSampleError(line_no, id);

        LabelPrediction pred;
        pred.sample_id = id;
        std::set<std::string> seen;
        for (const auto& e : obj["predictions"]) {
            if (!e.is_object() || !e.contains("label") || !e["label"].is_string() ||
                !e.contains("score") || !e["score"].is_number()) {
                throw PredictionFormatError(line_no,
                                            "prediction entries need a string label and a number score");
            }
            std::string label = e["label"].get<std::string>();
            double score = e["score"].get<double>();
            if (label.empty()) throw PredictionFormatError(line_no, "empty label");
            if (!(score >= 0.0 && score <= 1.0)) {
                throw PredictionFormatError(line_no, "score out of [0,1] for label " + label);
            }
            if (!seen.insert(label).second) {
                throw PredictionFormatError(line_no, "duplicate label for sample: " + label);
            }
            pred.entries.emplace_back(std::move(label), score);
        }
        if (pred.entries.empty()) {
            throw PredictionFormatError(line_no, "sample has no prediction entries");
        }

        std::sort(pred.entries.begin(), pred.entries.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        if (pred.entries.size() > top_k) pred.entries.resize(top_k);
        out.emplace(std::move(id), std::move(pred));
    }
    return out;
}

double clarity(const ClarityInput& in) {
    if (in.n0_i == 0 || in.n1_i == 0) {
        throw std::invalid_argument("clarity: class totals must be positive");
    }
    if (in.n0_ij > in.n0_i || in.n1_ij > in.n1_i) {
        throw std::invalid_argument("clarity: carrier count exceeds class total");
    }
    const double n0 = static_cast<double>(in.n0_ij);
    const double n1 = static_cast<double>(in.n1_ij);
    const double num = std::abs(n0 - n1) - std::min(n0, n1);
    const double den = static_cast<double>(std::max(in.n0_i, in.n1_i));
    return std::max(num / den, 0.0);
}

std::optional<DiscoveredClass> assign_class(const Task& task, const RepSelection& reps,
                                            const std::map<std::string, LabelPrediction>& predictions,
                                            double clarity_threshold) {
    if (reps.class0_ids.empty() || reps.class1_ids.empty()) {
        throw std::invalid_argument("assign_class: both representative sides must be non-empty");
    }

    std::vector<std::string> missing;
    auto check_side = [&](const std::vector<std::string>& side) {
        for (const auto& id : side) {
            if (!predictions.count(id)) missing.push_back(id);
        }
    };
    check_side(reps.class0_ids);
    check_side(reps.class1_ids);
    if (!missing.empty()) {
        std::sort(missing.begin(), missing.end());
        missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
        throw CoverageError(std::move(missing));
    }

    std::set<std::string> labels;
    auto collect = [&](const std::vector<std::string>& side) {
        for (const auto& id : side) {
            for (const auto& [lab, score] : predictions.at(id).entries) labels.insert(lab);
        }
    };
    collect(reps.class0_ids);
    collect(reps.class1_ids);

    auto carrier_count = [&](const std::vector<std::string>& side, const std::string& label) {
        size_t n = 0;
        for (const auto& id : side) {
            for (const auto& [lab, score] : predictions.at(id).entries) {
                if (lab == label) {
                    ++n;
                    break;
                }
            }
        }
        return n;
    };

    DiscoveredClass dc;
    dc.task_id = task.task_id;
    dc.class0_ids = reps.class0_ids;
    dc.class1_ids = reps.class1_ids;
    double best = -1.0;
    for (const auto& label : labels) {
        ClarityInput in;
        in.n0_ij = carrier_count(reps.class0_ids, label);
        in.n1_ij = carrier_count(reps.class1_ids, label);
        in.n0_i = reps.class0_ids.size();
        in.n1_i = reps.class1_ids.size();
        double c = clarity(in);
        dc.per_label_clarity[label] = c;
        if (c > best) {
            best = c;
            dc.label = label;
            dc.clarity = c;
        }
        // std::set iterates labels in ascending order, so on ties the
        // lexicographically smallest label is kept automatically
    }

    if (dc.clarity < clarity_threshold) return std::nullopt;
    return dc;
}

}  // namespace soundcollage
