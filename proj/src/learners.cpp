#include "soundcollage/learners.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "soundcollage/rng.hpp"

namespace soundcollage {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    double e = std::exp(z);
    return e / (1.0 + e);
}

// numerically stable BCE from the logit
double bce_from_logit(double z, int y) {
    double m = z > 0.0 ? z : 0.0;
    return m - static_cast<double>(y) * z + std::log1p(std::exp(-std::abs(z)));
}

// forward pass, hidden activations written to h, returns the output logit
double forward(const MlpModel& m, const double* x, std::vector<double>& h) {
    h.resize(m.hidden_dim);
    for (size_t j = 0; j < m.hidden_dim; ++j) {
        const double* w = m.w1.data() + j * m.input_dim;
        double z = m.b1[j];
        for (size_t k = 0; k < m.input_dim; ++k) z += w[k] * x[k];
        h[j] = std::tanh(z);
    }
    double z2 = m.b2;
    for (size_t j = 0; j < m.hidden_dim; ++j) z2 += m.w2[j] * h[j];
    return z2;
}

}  // namespace

MlpModel mlp_init(size_t input_dim, size_t hidden_dim, uint64_t seed) {
    if (input_dim == 0 || hidden_dim == 0) {
        throw std::invalid_argument("mlp_init: dimensions must be positive");
    }
    MlpModel m;
    m.input_dim = input_dim;
    m.hidden_dim = hidden_dim;
    Rng rng(seed);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    m.w1.resize(hidden_dim * input_dim);
    for (auto& w : m.w1) w = rng.uniform(-s1, s1);
    m.b1.assign(hidden_dim, 0.0);
    m.w2.resize(hidden_dim);
    for (auto& w : m.w2) w = rng.uniform(-s2, s2);
    m.b2 = 0.0;
    return m;
}

double mlp_prob(const MlpModel& m, const double* x) {
    std::vector<double> h;
    return sigmoid(forward(m, x, h));
}

int mlp_predict(const MlpModel& m, const double* x) {
    return mlp_prob(m, x) >= 0.5 ? 1 : 0;
}

MlpGrad mlp_gradient(const MlpModel& m, const double* x, int y) {
    std::vector<double> h;
    double z2 = forward(m, x, h);
    double d2 = sigmoid(z2) - static_cast<double>(y);

    MlpGrad g;
    g.w1.resize(m.w1.size());
    g.b1.resize(m.hidden_dim);
    g.w2.resize(m.hidden_dim);
    g.b2 = d2;
    for (size_t j = 0; j < m.hidden_dim; ++j) {
        g.w2[j] = d2 * h[j];
        double dh = d2 * m.w2[j] * (1.0 - h[j] * h[j]);
        g.b1[j] = dh;
        double* gw = g.w1.data() + j * m.input_dim;
        for (size_t k = 0; k < m.input_dim; ++k) gw[k] = dh * x[k];
    }
    return g;
}

double mlp_loss(const MlpModel& m, const Matrix& x, const std::vector<int>& y) {
    if (x.rows != y.size() || x.rows == 0) {
        throw std::invalid_argument("mlp_loss: data and labels must align and be non-empty");
    }
    std::vector<double> h;
    double total = 0.0;
    for (size_t i = 0; i < x.rows; ++i) {
        total += bce_from_logit(forward(m, x.row(i), h), y[i]);
    }
    return total / static_cast<double>(x.rows);
}

void mlp_train(MlpModel& m, const Matrix& x, const std::vector<int>& y,
               const MlpTrainParams& params, uint64_t shuffle_seed) {
    if (x.rows != y.size() || x.rows == 0) {
        throw std::invalid_argument("mlp_train: data and labels must align and be non-empty");
    }
    if (x.cols != m.input_dim) {
        throw std::invalid_argument("mlp_train: feature width does not match the model");
    }
    if (params.batch == 0 || params.lr <= 0.0) {
        throw std::invalid_argument("mlp_train: batch and learning rate must be positive");
    }

    Rng rng(shuffle_seed);
    std::vector<size_t> order(x.rows);
    std::iota(order.begin(), order.end(), size_t{0});

    const size_t hd = m.hidden_dim, id = m.input_dim;
    std::vector<double> h(hd);
    std::vector<double> gw1(hd * id), gb1(hd), gw2(hd);
    m.epoch_loss.clear();
    m.epoch_loss.reserve(params.epochs);

    for (size_t epoch = 0; epoch < params.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_total = 0.0;

        for (size_t start = 0; start < x.rows; start += params.batch) {
            const size_t end = std::min(start + params.batch, x.rows);
            const double bsz = static_cast<double>(end - start);
            std::fill(gw1.begin(), gw1.end(), 0.0);
            std::fill(gb1.begin(), gb1.end(), 0.0);
            std::fill(gw2.begin(), gw2.end(), 0.0);
            double gb2 = 0.0;

            for (size_t t = start; t < end; ++t) {
                const double* xi = x.row(order[t]);
                const int yi = y[order[t]];
                double z2 = forward(m, xi, h);
                epoch_total += bce_from_logit(z2, yi);
                double d2 = sigmoid(z2) - static_cast<double>(yi);
                gb2 += d2;
                for (size_t j = 0; j < hd; ++j) {
                    gw2[j] += d2 * h[j];
                    double dh = d2 * m.w2[j] * (1.0 - h[j] * h[j]);
                    gb1[j] += dh;
                    double* gw = gw1.data() + j * id;
                    for (size_t k = 0; k < id; ++k) gw[k] += dh * xi[k];
                }
            }

            const double step = params.lr / bsz;
            for (size_t i = 0; i < m.w1.size(); ++i) m.w1[i] -= step * gw1[i];
            for (size_t j = 0; j < hd; ++j) {
                m.b1[j] -= step * gb1[j];
                m.w2[j] -= step * gw2[j];
            }
            m.b2 -= step * gb2;
        }

        double mean_loss = epoch_total / static_cast<double>(x.rows);
        if (!std::isfinite(mean_loss)) {
            throw DivergenceError(epoch + 1, "training diverged at epoch " +
                                                 std::to_string(epoch + 1) +
                                                 ": non-finite mean loss");
        }
        m.epoch_loss.push_back(mean_loss);
    }
}

namespace {
constexpr char kMlpMagic[4] = {'S', 'C', 'M', 'L'};
constexpr uint32_t kMlpVersion = 1;
}  // namespace

void mlp_save(const std::string& path, const MlpModel& m) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot open " + path + " for writing");
    f.write(kMlpMagic, 4);
    uint32_t hdr[3] = {kMlpVersion, static_cast<uint32_t>(m.input_dim),
                       static_cast<uint32_t>(m.hidden_dim)};
    f.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    auto put = [&](double v) {
        float x = static_cast<float>(v);
        f.write(reinterpret_cast<const char*>(&x), 4);
    };
    for (double v : m.w1) put(v);
    for (double v : m.b1) put(v);
    for (double v : m.w2) put(v);
    put(m.b2);
    if (!f) throw CheckpointError("short write to " + path);
}

MlpModel mlp_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open " + path);
    char magic[4];
    uint32_t hdr[3];
    f.read(magic, 4);
    f.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
    if (!f || std::memcmp(magic, kMlpMagic, 4) != 0) {
        throw CheckpointError(path + ": not a model checkpoint");
    }
    if (hdr[0] != kMlpVersion) {
        throw CheckpointError(path + ": unsupported checkpoint version " + std::to_string(hdr[0]));
    }
    MlpModel m;
    m.input_dim = hdr[1];
    m.hidden_dim = hdr[2];
    const size_t n_params = m.hidden_dim * m.input_dim + 2 * m.hidden_dim + 1;
    std::vector<float> buf(n_params);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n_params * 4));
    if (static_cast<size_t>(f.gcount()) != n_params * 4) {
        throw CheckpointError(path + ": checkpoint payload truncated");
    }
    size_t p = 0;
    m.w1.resize(m.hidden_dim * m.input_dim);
    for (auto& v : m.w1) v = buf[p++];
    m.b1.resize(m.hidden_dim);
    for (auto& v : m.b1) v = buf[p++];
    m.w2.resize(m.hidden_dim);
    for (auto& v : m.w2) v = buf[p++];
    m.b2 = buf[p++];
    return m;
}

Standardizer fit_standardizer(const Matrix& x, const std::vector<size_t>& rows) {
    std::vector<size_t> all;
    const std::vector<size_t>* use = &rows;
    if (rows.empty()) {
        all.resize(x.rows);
        std::iota(all.begin(), all.end(), size_t{0});
        use = &all;
    }
    const double n = static_cast<double>(use->size());
    if (n == 0.0) throw std::invalid_argument("fit_standardizer: no rows");

    Standardizer s;
    s.mean.assign(x.cols, 0.0);
    s.inv_std.assign(x.cols, 0.0);
    for (size_t r : *use) {
        const double* row = x.row(r);
        for (size_t c = 0; c < x.cols; ++c) s.mean[c] += row[c];
    }
    for (auto& v : s.mean) v /= n;
    std::vector<double> var(x.cols, 0.0);
    for (size_t r : *use) {
        const double* row = x.row(r);
        for (size_t c = 0; c < x.cols; ++c) {
            double d = row[c] - s.mean[c];
            var[c] += d * d;
        }
    }
    for (size_t c = 0; c < x.cols; ++c) {
        double sd = std::sqrt(var[c] / n);
        s.inv_std[c] = sd > 0.0 ? 1.0 / sd : 0.0;
    }
    return s;
}

void apply_standardizer(const Standardizer& s, Matrix& x) {
    if (s.mean.size() != x.cols) {
        throw std::invalid_argument("apply_standardizer: width mismatch");
    }
    for (size_t r = 0; r < x.rows; ++r) {
        double* row = x.row(r);
        for (size_t c = 0; c < x.cols; ++c) row[c] = (row[c] - s.mean[c]) * s.inv_std[c];
    }
}

// ---- forest ----

namespace {

struct TreeBuilder {
    const Matrix& x;
    const std::vector<int>& y;
    size_t n_classes;
    size_t mtry;
    Rng& rng;
    Tree tree;

    double gini(const std::vector<size_t>& counts, size_t total) const {
        if (total == 0) return 0.0;
        double g = 1.0;
        for (size_t c : counts) {
            double p = static_cast<double>(c) / static_cast<double>(total);
            g -= p * p;
        }
        return g;
    }

    size_t build(std::vector<size_t>& idx) {
        std::vector<size_t> counts(n_classes, 0);
        for (size_t i : idx) counts[static_cast<size_t>(y[i])]++;
        const size_t n = idx.size();
        size_t nonzero = 0;
        for (size_t c : counts) nonzero += c > 0 ? 1 : 0;

        size_t node_id = tree.nodes.size();
        tree.nodes.emplace_back();

        if (n < 2 || nonzero <= 1) {
            tree.nodes[node_id].class_counts = std::move(counts);
            return node_id;
        }

        // feature order: a seeded shuffle; the first mtry form the sampled
        // subset, the rest are fallbacks when the subset has no valid split
        std::vector<size_t> feats(x.cols);
        std::iota(feats.begin(), feats.end(), size_t{0});
        rng.shuffle(feats);

        int best_feat = -1;
        double best_thresh = 0.0;
        double best_score = std::numeric_limits<double>::infinity();
        std::vector<std::pair<double, int>> vals;
        std::vector<size_t> left_counts(n_classes);

        for (size_t fi = 0; fi < feats.size(); ++fi) {
            if (fi >= mtry && best_feat != -1) break;  // subset done and a split exists
            size_t feat = feats[fi];
            vals.clear();
            for (size_t i : idx) vals.emplace_back(x.at(i, feat), y[i]);
            std::sort(vals.begin(), vals.end());
            if (vals.front().first == vals.back().first) continue;

            std::fill(left_counts.begin(), left_counts.end(), size_t{0});
            size_t n_left = 0;
            for (size_t t = 0; t + 1 < vals.size(); ++t) {
                left_counts[static_cast<size_t>(vals[t].second)]++;
                ++n_left;
                if (vals[t].first == vals[t + 1].first) continue;
                // weighted child impurity; parent impurity is constant so
                // minimizing this maximizes the Gini gain
                std::vector<size_t> right_counts(n_classes);
                for (size_t c = 0; c < n_classes; ++c) right_counts[c] = counts[c] - left_counts[c];
                size_t n_right = n - n_left;
                double score = (static_cast<double>(n_left) * gini(left_counts, n_left) +
                                static_cast<double>(n_right) * gini(right_counts, n_right)) /
                               static_cast<double>(n);
                if (score < best_score) {
                    best_score = score;
                    best_feat = static_cast<int>(feat);
                    best_thresh = 0.5 * (vals[t].first + vals[t + 1].first);
                }
            }
        }

        if (best_feat == -1) {
            // impure but inseparable (duplicate points with conflicting labels)
            tree.nodes[node_id].class_counts = std::move(counts);
            return node_id;
        }

        std::vector<size_t> left_idx, right_idx;
        for (size_t i : idx) {
            if (x.at(i, static_cast<size_t>(best_feat)) <= best_thresh) left_idx.push_back(i);
            else right_idx.push_back(i);
        }
        idx.clear();
        idx.shrink_to_fit();

        tree.nodes[node_id].feature = best_feat;
        tree.nodes[node_id].threshold = best_thresh;
        size_t l = build(left_idx);
        size_t r = build(right_idx);
        tree.nodes[node_id].left = l;
        tree.nodes[node_id].right = r;
        return node_id;
    }
};

int tree_predict(const Tree& t, const double* x) {
    size_t node = 0;
    for (;;) {
        const TreeNode& n = t.nodes[node];
        if (n.feature == -1) {
            size_t best = 0;
            for (size_t c = 1; c < n.class_counts.size(); ++c) {
                if (n.class_counts[c] > n.class_counts[best]) best = c;
            }
            return static_cast<int>(best);
        }
        node = x[n.feature] <= n.threshold ? n.left : n.right;
    }
}

}  // namespace

ForestModel forest_train(const Matrix& x, const std::vector<int>& y,
                         const ForestParams& params, uint64_t seed) {
    if (x.rows != y.size() || x.rows == 0) {
        throw std::invalid_argument("forest_train: data and labels must align and be non-empty");
    }
    if (params.n_trees == 0) throw std::invalid_argument("forest_train: need at least one tree");
    int max_label = 0;
    for (int v : y) {
        if (v < 0) throw std::invalid_argument("forest_train: labels must be non-negative");
        max_label = std::max(max_label, v);
    }

    ForestModel m;
    m.n_classes = static_cast<size_t>(max_label) + 1;
    m.n_features = x.cols;
    size_t mtry = params.max_features;
    if (mtry == 0) mtry = static_cast<size_t>(std::ceil(std::sqrt(static_cast<double>(x.cols))));
    mtry = std::min(mtry, x.cols);

    m.trees.resize(params.n_trees);
    for (size_t t = 0; t < params.n_trees; ++t) {
        Rng rng(mix_seed(seed, t));
        std::vector<size_t> idx(x.rows);
        if (params.bootstrap) {
            for (auto& i : idx) i = static_cast<size_t>(rng.below(x.rows));
        } else {
            std::iota(idx.begin(), idx.end(), size_t{0});
        }
        TreeBuilder builder{x, y, m.n_classes, mtry, rng, {}};
        builder.build(idx);
        m.trees[t] = std::move(builder.tree);
    }
    return m;
}

int forest_predict(const ForestModel& m, const double* x) {
    std::vector<size_t> votes(m.n_classes, 0);
    for (const auto& t : m.trees) votes[static_cast<size_t>(tree_predict(t, x))]++;
    size_t best = 0;
    for (size_t c = 1; c < votes.size(); ++c) {
        if (votes[c] > votes[best]) best = c;
    }
    return static_cast<int>(best);
}

EvalMetrics forest_eval(const ForestModel& m, const Matrix& x, const std::vector<int>& y) {
    if (x.rows != y.size() || x.rows == 0) {
        throw std::invalid_argument("forest_eval: data and labels must align and be non-empty");
    }
    // metrics span every class seen by the model or present in the labels,
    // so a degenerate model is still scored against the true class set
    size_t n_classes = m.n_classes;
    for (int v : y) {
        if (v < 0) throw std::invalid_argument("forest_eval: labels must be non-negative");
        n_classes = std::max(n_classes, static_cast<size_t>(v) + 1);
    }

    EvalMetrics e;
    e.confusion = Matrix(n_classes, n_classes);
    size_t correct = 0;
    for (size_t i = 0; i < x.rows; ++i) {
        int pred = forest_predict(m, x.row(i));
        e.confusion.at(static_cast<size_t>(y[i]), static_cast<size_t>(pred)) += 1.0;
        if (pred == y[i]) ++correct;
    }
    e.accuracy = static_cast<double>(correct) / static_cast<double>(x.rows);

    double psum = 0.0, rsum = 0.0, fsum = 0.0;
    for (size_t c = 0; c < n_classes; ++c) {
        double tp = e.confusion.at(c, c);
        double fp = 0.0, fn = 0.0;
        for (size_t o = 0; o < n_classes; ++o) {
            if (o == c) continue;
            fp += e.confusion.at(o, c);
            fn += e.confusion.at(c, o);
        }
        double prec = (tp + fp) > 0.0 ? tp / (tp + fp) : 0.0;
        double rec = (tp + fn) > 0.0 ? tp / (tp + fn) : 0.0;
        double f1 = (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
        psum += prec;
        rsum += rec;
        fsum += f1;
    }
    const double nc = static_cast<double>(n_classes);
    e.macro_precision = psum / nc;
    e.macro_recall = rsum / nc;
    e.macro_f1 = fsum / nc;
    return e;
}

std::vector<std::vector<size_t>> stratified_folds(const std::vector<int>& y, size_t k,
                                                  uint64_t seed) {
    if (k < 2) throw std::invalid_argument("stratified_folds: need at least two folds");
    int max_label = 0;
    for (int v : y) max_label = std::max(max_label, v);

    std::vector<std::vector<size_t>> folds(k);
    Rng rng(seed);
    for (int cls = 0; cls <= max_label; ++cls) {
        std::vector<size_t> idx;
        for (size_t i = 0; i < y.size(); ++i) {
            if (y[i] == cls) idx.push_back(i);
        }
        rng.shuffle(idx);
        for (size_t i = 0; i < idx.size(); ++i) folds[i % k].push_back(idx[i]);
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

}  // namespace soundcollage
