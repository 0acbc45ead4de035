#include "soundcollage/discovery.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "soundcollage/rng.hpp"

namespace soundcollage {

namespace {

// seed substream salts; estimation, candidate generation, and probe-model
// training must never share a stream
constexpr uint64_t kSaltSplit = 0xF00D;
constexpr uint64_t kSaltDirections = 0xD1E5;
constexpr uint64_t kSaltKmeans = 0x2EA2;
constexpr uint64_t kSaltCandidate = 0xCA4D;
constexpr uint64_t kSaltRestart = 0x3E57;
constexpr uint64_t kSaltClimbRun = 0xC11B;
constexpr uint64_t kSaltEstimate = 0xE571;
constexpr uint64_t kSaltProbe = 0x9B0E;

void validate_as_params(const AsParams& p) {
    if (p.n_pairs == 0) throw std::invalid_argument("agreement_score: n_pairs must be positive");
    if (!(p.train_frac > 0.0 && p.train_frac < 1.0)) {
        throw std::invalid_argument("agreement_score: train_frac must lie in (0, 1)");
    }
    if (p.hidden_dim == 0) throw std::invalid_argument("agreement_score: hidden_dim must be positive");
}

// rows of the matrix for exactly the task's ids, in sorted id order
Matrix task_matrix(const Task& task, const std::map<std::string, FeatureGrid>& features,
                   std::vector<int>& labels_out) {
    if (task.assignment.empty()) throw std::invalid_argument("task has no samples");
    size_t ts = 0, nc = 0;
    Matrix x;
    labels_out.clear();
    size_t row = 0;
    for (const auto& [id, lab] : task.assignment) {
        auto it = features.find(id);
        if (it == features.end()) {
            throw std::invalid_argument("task references unknown sample id: " + id);
        }
        const FeatureGrid& g = it->second;
        if (row == 0) {
            ts = g.time_steps;
            nc = g.n_coeffs;
            if (ts * nc == 0) throw std::invalid_argument("feature grids must be non-empty");
            x = Matrix(task.assignment.size(), ts * nc);
        } else if (g.time_steps != ts || g.n_coeffs != nc) {
            throw std::invalid_argument("feature grids disagree in shape at id: " + id);
        }
        std::copy(g.values.begin(), g.values.end(), x.row(row));
        labels_out.push_back(lab);
        ++row;
    }
    return x;
}

}  // namespace

Task random_task(const std::vector<std::string>& ids, uint64_t seed) {
    if (ids.size() < 4) throw std::invalid_argument("random_task: need at least 4 ids");
    std::vector<int> labels(ids.size(), 0);
    std::fill(labels.end() - static_cast<long>(ids.size() / 2), labels.end(), 1);
    Rng rng(seed);
    rng.shuffle(labels);
    Task t;
    t.task_id = "rand-" + std::to_string(seed);
    for (size_t i = 0; i < ids.size(); ++i) t.assignment[ids[i]] = labels[i];
    if (t.assignment.size() != ids.size()) {
        throw std::invalid_argument("random_task: duplicate sample ids");
    }
    return t;
}

Task complement(const Task& t) {
    Task c;
    c.task_id = t.task_id;
    for (const auto& [id, lab] : t.assignment) c.assignment[id] = 1 - lab;
    return c;
}

Matrix flatten_features(const std::map<std::string, FeatureGrid>& features,
                        std::vector<std::string>& ids_out) {
    if (features.empty()) throw std::invalid_argument("flatten_features: empty feature map");
    ids_out.clear();
    const FeatureGrid& first = features.begin()->second;
    const size_t ts = first.time_steps, nc = first.n_coeffs;
    if (ts * nc == 0) throw std::invalid_argument("flatten_features: empty grid");
    Matrix x(features.size(), ts * nc);
    size_t row = 0;
    for (const auto& [id, g] : features) {
        if (g.time_steps != ts || g.n_coeffs != nc) {
            throw std::invalid_argument("flatten_features: grid shape mismatch at id: " + id);
        }
        std::copy(g.values.begin(), g.values.end(), x.row(row));
        ids_out.push_back(id);
        ++row;
    }
    return x;
}

double pair_agreement(const Matrix& xtr, const std::vector<int>& ytr, const Matrix& xte,
                      size_t hidden_dim, const MlpTrainParams& tp, uint64_t seed_a,
                      uint64_t seed_b) {
    if (xte.rows == 0) throw std::invalid_argument("pair_agreement: empty test set");
    auto train_one = [&](uint64_t s) {
        MlpModel m = mlp_init(xtr.cols, hidden_dim, mix_seed(s, 1));
        mlp_train(m, xtr, ytr, tp, mix_seed(s, 2));
        return m;
    };
    MlpModel a = train_one(seed_a);
    MlpModel b = train_one(seed_b);
    size_t same = 0;
    for (size_t i = 0; i < xte.rows; ++i) {
        if (mlp_predict(a, xte.row(i)) == mlp_predict(b, xte.row(i))) ++same;
    }
    return static_cast<double>(same) / static_cast<double>(xte.rows);
}

AgreementEstimate agreement_score(const Task& task,
                                  const std::map<std::string, FeatureGrid>& features,
                                  const AsParams& params, uint64_t seed) {
    validate_as_params(params);
    std::vector<int> labels;
    Matrix x = task_matrix(task, features, labels);

    std::array<std::vector<size_t>, 2> by_class;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            throw std::invalid_argument("agreement_score: labels must be 0 or 1");
        }
        by_class[static_cast<size_t>(labels[i])].push_back(i);
    }
    if (by_class[0].empty() || by_class[1].empty()) {
        throw std::invalid_argument("agreement_score: task is degenerate (one label missing)");
    }

    // one stratified split shared by every model pair; a single global
    // shuffle walked per class keeps the membership invariant under label
    // complement (the walk ignores which class is called 0)
    Rng split_rng(mix_seed(seed, kSaltSplit));
    std::vector<size_t> order(labels.size());
    std::iota(order.begin(), order.end(), size_t{0});
    split_rng.shuffle(order);
    std::array<size_t, 2> quota;
    for (int c = 0; c < 2; ++c) {
        size_t n_c = by_class[static_cast<size_t>(c)].size();
        size_t n_tr = static_cast<size_t>(std::llround(params.train_frac * static_cast<double>(n_c)));
        quota[static_cast<size_t>(c)] = std::clamp<size_t>(n_tr, 1, n_c);
    }
    std::vector<size_t> train_idx, test_idx;
    std::array<size_t, 2> taken = {0, 0};
    for (size_t i : order) {
        size_t c = static_cast<size_t>(labels[i]);
        if (taken[c] < quota[c]) {
            train_idx.push_back(i);
            ++taken[c];
        } else {
            test_idx.push_back(i);
        }
    }
    if (test_idx.empty()) {
        throw std::invalid_argument("agreement_score: test split is empty at this train_frac");
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    Standardizer st = fit_standardizer(x, train_idx);
    apply_standardizer(st, x);

    Matrix xtr(train_idx.size(), x.cols), xte(test_idx.size(), x.cols);
    std::vector<int> ytr(train_idx.size());
    for (size_t i = 0; i < train_idx.size(); ++i) {
        std::copy(x.row(train_idx[i]), x.row(train_idx[i]) + x.cols, xtr.row(i));
        ytr[i] = labels[train_idx[i]];
    }
    for (size_t i = 0; i < test_idx.size(); ++i) {
        std::copy(x.row(test_idx[i]), x.row(test_idx[i]) + x.cols, xte.row(i));
    }

    std::vector<double> agreements(params.n_pairs);
    for (size_t p = 0; p < params.n_pairs; ++p) {
        agreements[p] = pair_agreement(xtr, ytr, xte, params.hidden_dim, params.train,
                                       mix_seed(seed, 2 * p + 2), mix_seed(seed, 2 * p + 3));
    }

    AgreementEstimate e;
    e.n_pairs = params.n_pairs;
    e.split_seed = seed;
    e.mean = std::accumulate(agreements.begin(), agreements.end(), 0.0) /
             static_cast<double>(params.n_pairs);
    double ss = 0.0;
    for (double a : agreements) ss += (a - e.mean) * (a - e.mean);
    e.std = std::sqrt(ss / static_cast<double>(params.n_pairs));
    return e;
}

Matrix principal_directions(const Matrix& x, size_t n_dirs, uint64_t seed, size_t n_iters) {
    if (x.rows == 0 || x.cols == 0) {
        throw std::invalid_argument("principal_directions: empty matrix");
    }
    n_dirs = std::min(n_dirs, x.cols);
    const size_t n = x.rows, d = x.cols;

    std::vector<double> mean(d, 0.0);
    for (size_t i = 0; i < n; ++i) {
        const double* row = x.row(i);
        for (size_t c = 0; c < d; ++c) mean[c] += row[c];
    }
    for (auto& v : mean) v /= static_cast<double>(n);
    Matrix xc(n, d);
    for (size_t i = 0; i < n; ++i) {
        const double* src = x.row(i);
        double* dst = xc.row(i);
        for (size_t c = 0; c < d; ++c) dst[c] = src[c] - mean[c];
    }

    Matrix dirs(n_dirs, d);
    std::vector<double> v(d), w(d), y(n);

    auto orthogonalize = [&](std::vector<double>& u, size_t upto) {
        for (size_t k = 0; k < upto; ++k) {
            const double* prev = dirs.row(k);
            double dot = 0.0;
            for (size_t c = 0; c < d; ++c) dot += u[c] * prev[c];
            for (size_t c = 0; c < d; ++c) u[c] -= dot * prev[c];
        }
    };
    auto norm_of = [&](const std::vector<double>& u) {
        double s = 0.0;
        for (double t : u) s += t * t;
        return std::sqrt(s);
    };

    for (size_t j = 0; j < n_dirs; ++j) {
        Rng rng(mix_seed(seed, kSaltDirections + j));
        for (auto& t : v) t = rng.normal();
        orthogonalize(v, j);
        double nv = norm_of(v);
        if (nv <= 0.0) nv = 1.0;
        for (auto& t : v) t /= nv;

        for (size_t it = 0; it < n_iters; ++it) {
            // w = (Xc^T (Xc v)) / n, the covariance applied without forming it
            for (size_t i = 0; i < n; ++i) {
                const double* row = xc.row(i);
                double s = 0.0;
                for (size_t c = 0; c < d; ++c) s += row[c] * v[c];
                y[i] = s;
            }
            std::fill(w.begin(), w.end(), 0.0);
            for (size_t i = 0; i < n; ++i) {
                const double* row = xc.row(i);
                for (size_t c = 0; c < d; ++c) w[c] += y[i] * row[c];
            }
            for (auto& t : w) t /= static_cast<double>(n);
            orthogonalize(w, j);
            double nw = norm_of(w);
            if (nw < 1e-14) break;  // no variance left in the deflated space
            for (size_t c = 0; c < d; ++c) v[c] = w[c] / nw;
        }
        std::copy(v.begin(), v.end(), dirs.row(j));
    }
    return dirs;
}

namespace {

// Lloyd 2-means on 2-d points, deterministic given the rng state. Returns
// false when every point coincides (no split possible).
bool kmeans2(const std::vector<std::array<double, 2>>& pts, Rng& rng, std::vector<int>& labels) {
    const size_t n = pts.size();
    size_t i0 = static_cast<size_t>(rng.below(n)), i1 = i0;
    for (int tries = 0; tries < 100 && pts[i1] == pts[i0]; ++tries) {
        i1 = static_cast<size_t>(rng.below(n));
    }
    if (pts[i1] == pts[i0]) return false;
    std::array<std::array<double, 2>, 2> centers = {pts[i0], pts[i1]};

    labels.assign(n, 0);
    for (int iter = 0; iter < 50; ++iter) {
        bool changed = false;
        for (size_t i = 0; i < n; ++i) {
            double d0 = 0.0, d1 = 0.0;
            for (int c = 0; c < 2; ++c) {
                double e0 = pts[i][c] - centers[0][c], e1 = pts[i][c] - centers[1][c];
                d0 += e0 * e0;
                d1 += e1 * e1;
            }
            int lab = d1 < d0 ? 1 : 0;
            if (lab != labels[i]) changed = true;
            labels[i] = lab;
        }
        if (!changed && iter > 0) break;

        std::array<std::array<double, 2>, 2> sums = {};
        std::array<size_t, 2> counts = {0, 0};
        for (size_t i = 0; i < n; ++i) {
            sums[labels[i]][0] += pts[i][0];
            sums[labels[i]][1] += pts[i][1];
            counts[static_cast<size_t>(labels[i])]++;
        }
        for (int k = 0; k < 2; ++k) {
            if (counts[k] == 0) {
                // re-seed an emptied cluster at the farthest point from the other
                size_t far = 0;
                double best = -1.0;
                for (size_t i = 0; i < n; ++i) {
                    double e0 = pts[i][0] - centers[1 - k][0], e1 = pts[i][1] - centers[1 - k][1];
                    double dd = e0 * e0 + e1 * e1;
                    if (dd > best) {
                        best = dd;
                        far = i;
                    }
                }
                centers[k] = pts[far];
            } else {
                centers[k][0] = sums[k][0] / static_cast<double>(counts[k]);
                centers[k][1] = sums[k][1] / static_cast<double>(counts[k]);
            }
        }
    }
    return true;
}

size_t min_class_size(const std::vector<int>& labels) {
    size_t ones = 0;
    for (int l : labels) ones += static_cast<size_t>(l);
    return std::min(ones, labels.size() - ones);
}

Task labels_to_task(const std::vector<std::string>& ids, const std::vector<int>& labels,
                    std::string task_id) {
    Task t;
    t.task_id = std::move(task_id);
    for (size_t i = 0; i < ids.size(); ++i) t.assignment[ids[i]] = labels[i];
    return t;
}

}  // namespace

std::vector<DiscoveredTask> dedup_and_rank(std::vector<DiscoveredTask> cands,
                                           double as_threshold) {
    // canonical key: per-id bits relative to the first id's label, so a task
    // and its complement collide
    auto key_of = [](const Task& t) {
        std::string key;
        int base = t.assignment.empty() ? 0 : t.assignment.begin()->second;
        for (const auto& [id, lab] : t.assignment) {
            key += id;
            key += (lab ^ base) ? '1' : '0';
            key += ';';
        }
        return key;
    };

    std::map<std::string, size_t> best;
    for (size_t i = 0; i < cands.size(); ++i) {
        std::string key = key_of(cands[i].task);
        auto [it, inserted] = best.try_emplace(std::move(key), i);
        if (inserted) continue;
        const DiscoveredTask& held = cands[it->second];
        const DiscoveredTask& cand = cands[i];
        bool better = cand.estimate.mean > held.estimate.mean ||
                      (cand.estimate.mean == held.estimate.mean &&
                       cand.task.task_id < held.task.task_id);
        if (better) it->second = i;
    }

    std::vector<DiscoveredTask> out;
    for (const auto& [key, idx] : best) {
        if (cands[idx].estimate.mean >= as_threshold) out.push_back(std::move(cands[idx]));
    }
    std::sort(out.begin(), out.end(), [](const DiscoveredTask& a, const DiscoveredTask& b) {
        if (a.estimate.mean != b.estimate.mean) return a.estimate.mean > b.estimate.mean;
        return a.task.task_id < b.task.task_id;
    });
    return out;
}

HillclimbResult hillclimb_from(const Task& start,
                               const std::map<std::string, FeatureGrid>& features,
                               const DiscoveryParams& params, uint64_t seed) {
    const uint64_t est_seed = mix_seed(seed, kSaltEstimate);
    HillclimbResult res;
    res.task = start;
    res.estimate = agreement_score(start, features, params.as, est_seed);
    res.start_mean = res.estimate.mean;

    std::vector<int> labels;
    Matrix x = task_matrix(start, features, labels);
    Standardizer st = fit_standardizer(x, {});
    apply_standardizer(st, x);
    std::vector<std::string> ids;
    for (const auto& [id, lab] : start.assignment) ids.push_back(id);

    const size_t n = ids.size();
    const size_t b = std::max<size_t>(1, static_cast<size_t>(std::llround(params.flip_frac *
                                                                          static_cast<double>(n))));

    for (size_t round = 0; round < params.max_rounds; ++round) {
        for (size_t i = 0; i < n; ++i) labels[i] = res.task.assignment.at(ids[i]);

        // probe model on the full current labeling locates the boundary
        MlpModel probe = mlp_init(x.cols, params.as.hidden_dim,
                                  mix_seed(seed, kSaltProbe + 2 * round));
        try {
            mlp_train(probe, x, labels, params.as.train,
                      mix_seed(seed, kSaltProbe + 2 * round + 1));
        } catch (const DivergenceError&) {
            break;
        }

        std::vector<std::pair<double, size_t>> dist(n);
        for (size_t i = 0; i < n; ++i) {
            dist[i] = {std::abs(mlp_prob(probe, x.row(i)) - 0.5), i};
        }
        std::sort(dist.begin(), dist.end(), [&](const auto& a, const auto& b2) {
            if (a.first != b2.first) return a.first < b2.first;
            return ids[a.second] < ids[b2.second];
        });

        Task proposal = res.task;
        for (size_t k = 0; k < b && k < n; ++k) {
            int& lab = proposal.assignment.at(ids[dist[k].second]);
            lab = 1 - lab;
        }

        try {
            AgreementEstimate cand = agreement_score(proposal, features, params.as, est_seed);
            if (cand.mean > res.estimate.mean) {
                res.task = std::move(proposal);
                res.estimate = cand;
            }
        } catch (const std::invalid_argument&) {
            // degenerate proposal, keep the current task
        }
    }
    return res;
}

std::vector<DiscoveredTask> discover_tasks(const std::map<std::string, FeatureGrid>& features,
                                           const DiscoveryParams& params, uint64_t seed) {
    std::vector<std::string> ids;
    Matrix x = flatten_features(features, ids);
    std::vector<DiscoveredTask> cands;

    auto score_and_keep = [&](Task task, const char* strategy, uint64_t salt) {
        try {
            AgreementEstimate e =
                agreement_score(task, features, params.as, mix_seed(seed, kSaltCandidate + salt));
            cands.push_back({std::move(task), e, strategy});
        } catch (const std::invalid_argument&) {
            // unsplittable candidate (degenerate or too small), drop it
        }
    };

    if (params.strategy == DiscoveryStrategy::kEmbeddingBipartition) {
        Matrix z = x;
        Standardizer st = fit_standardizer(z, {});
        apply_standardizer(st, z);
        const size_t nd = std::min(params.n_directions, z.cols);
        Matrix dirs = principal_directions(z, nd, mix_seed(seed, 1));

        std::vector<std::vector<double>> proj(nd, std::vector<double>(z.rows));
        for (size_t j = 0; j < nd; ++j) {
            for (size_t i = 0; i < z.rows; ++i) {
                const double* row = z.row(i);
                double s = 0.0;
                for (size_t c = 0; c < z.cols; ++c) s += row[c] * dirs.at(j, c);
                proj[j][i] = s;
            }
        }

        size_t produced = 0;
        for (size_t j = 0; j < nd && produced < params.n_candidates; ++j) {
            std::vector<int> labels(z.rows);
            for (size_t i = 0; i < z.rows; ++i) labels[i] = proj[j][i] > 0.0 ? 1 : 0;
            if (min_class_size(labels) < 2) continue;
            score_and_keep(labels_to_task(ids, labels, "pc" + std::to_string(j)),
                           "embedding-bipartition", produced);
            ++produced;
        }

        Rng km_rng(mix_seed(seed, kSaltKmeans));
        const size_t max_attempts = params.n_candidates * 20 + 20;
        for (size_t attempt = 0, k = 0; produced < params.n_candidates && attempt < max_attempts;
             ++attempt) {
            size_t a = static_cast<size_t>(km_rng.below(nd));
            size_t b = nd > 1 ? static_cast<size_t>(km_rng.below(nd)) : a;
            if (nd > 1 && b == a) continue;
            std::vector<std::array<double, 2>> pts(z.rows);
            for (size_t i = 0; i < z.rows; ++i) pts[i] = {proj[a][i], proj[b][i]};
            std::vector<int> labels;
            if (!kmeans2(pts, km_rng, labels)) continue;
            if (min_class_size(labels) < 2) continue;
            score_and_keep(labels_to_task(ids, labels, "km" + std::to_string(k)),
                           "embedding-bipartition", produced);
            ++produced;
            ++k;
        }
    } else {
        for (size_t r = 0; r < params.n_candidates; ++r) {
            Task start = random_task(ids, mix_seed(seed, kSaltRestart + r));
            start.task_id = "hc" + std::to_string(r);
            HillclimbResult hr =
                hillclimb_from(start, features, params, mix_seed(seed, kSaltClimbRun + r));
            cands.push_back({std::move(hr.task), hr.estimate, "as-hillclimb"});
        }
    }

    return dedup_and_rank(std::move(cands), params.as_threshold);
}

}  // namespace soundcollage
