#include "soundcollage/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace soundcollage {

Matrix gram_matrix(const FeatureGrid& frames, double bandwidth) {
    if (bandwidth <= 0.0) throw std::invalid_argument("gram_matrix: bandwidth must be positive");
    const size_t n = frames.time_steps;
    const size_t d = frames.n_coeffs;
    const double inv = 1.0 / (2.0 * bandwidth * bandwidth);

    Matrix g(n, n);
    for (size_t i = 0; i < n; ++i) {
        g.at(i, i) = 1.0;
        const double* fi = frames.values.data() + i * d;
        for (size_t j = i + 1; j < n; ++j) {
            const double* fj = frames.values.data() + j * d;
            double d2 = 0.0;
            for (size_t k = 0; k < d; ++k) {
                double diff = fi[k] - fj[k];
                d2 += diff * diff;
            }
            double v = std::exp(-d2 * inv);
            g.at(i, j) = v;
            g.at(j, i) = v;
        }
    }
    return g;
}

double median_heuristic_bandwidth(const FeatureGrid& frames) {
    const size_t n = frames.time_steps;
    const size_t d = frames.n_coeffs;
    if (n < 2) return 1.0;
    const size_t m = std::min<size_t>(n, 256);

    std::vector<size_t> idx(m);
    for (size_t i = 0; i < m; ++i) idx[i] = i * n / m;

    std::vector<double> dist;
    dist.reserve(m * (m - 1) / 2);
    for (size_t a = 0; a < m; ++a) {
        const double* fa = frames.values.data() + idx[a] * d;
        for (size_t b = a + 1; b < m; ++b) {
            const double* fb = frames.values.data() + idx[b] * d;
            double d2 = 0.0;
            for (size_t k = 0; k < d; ++k) {
                double diff = fa[k] - fb[k];
                d2 += diff * diff;
            }
            dist.push_back(std::sqrt(d2));
        }
    }
    auto mid = dist.begin() + dist.size() / 2;
    std::nth_element(dist.begin(), mid, dist.end());
    double med = *mid;
    return med > 0.0 ? med : 1.0;
}

double segment_cost(const Matrix& gram, size_t i, size_t j) {
    if (j <= i || j > gram.rows) throw std::invalid_argument("segment_cost: need 0 <= i < j <= n");
    double diag = 0.0, block = 0.0;
    for (size_t t = i; t < j; ++t) {
        diag += gram.at(t, t);
        for (size_t s = i; s < j; ++s) block += gram.at(s, t);
    }
    return diag - block / static_cast<double>(j - i);
}

SegmentCostTable::SegmentCostTable(const Matrix& gram) : n_(gram.rows) {
    diag_prefix_.assign(n_ + 1, 0.0);
    for (size_t t = 0; t < n_; ++t) diag_prefix_[t + 1] = diag_prefix_[t] + gram.at(t, t);

    block_prefix_.assign((n_ + 1) * (n_ + 1), 0.0);
    auto p = [&](size_t a, size_t b) -> double& { return block_prefix_[a * (n_ + 1) + b]; };
    for (size_t a = 1; a <= n_; ++a) {
        for (size_t b = 1; b <= n_; ++b) {
            p(a, b) = gram.at(a - 1, b - 1) + p(a - 1, b) + p(a, b - 1) - p(a - 1, b - 1);
        }
    }
}

double SegmentCostTable::cost(size_t i, size_t j) const {
    if (j <= i || j > n_) throw std::invalid_argument("SegmentCostTable: need 0 <= i < j <= n");
    auto p = [&](size_t a, size_t b) { return block_prefix_[a * (n_ + 1) + b]; };
    double block = p(j, j) - p(i, j) - p(j, i) + p(i, i);
    double diag = diag_prefix_[j] - diag_prefix_[i];
    return diag - block / static_cast<double>(j - i);
}

double auto_penalty(const FeatureGrid& frames) {
    const size_t n = frames.time_steps;
    if (n < 2) return 0.0;
    Matrix gram = gram_matrix(frames, median_heuristic_bandwidth(frames));

    // per-frame scatter against the whole sequence
    std::vector<double> scatter(n);
    for (size_t t = 0; t < n; ++t) {
        double mean = 0.0;
        for (size_t s = 0; s < n; ++s) mean += gram.at(t, s);
        scatter[t] = gram.at(t, t) - mean / static_cast<double>(n);
    }
    auto mid = scatter.begin() + n / 2;
    std::nth_element(scatter.begin(), mid, scatter.end());
    return *mid * std::log(static_cast<double>(n));
}

SegmentBoundarySet detect_changepoints_gram(const Matrix& gram, double penalty,
                                            size_t min_segment_len, size_t max_changepoints) {
    if (penalty < 0.0) throw std::invalid_argument("detect_changepoints: penalty must be >= 0");
    if (min_segment_len < 1) throw std::invalid_argument("detect_changepoints: min length must be >= 1");

    SegmentBoundarySet out;
    out.n_frames = gram.rows;
    const size_t n = gram.rows;
    if (n < min_segment_len) {
        out.too_short = true;
        return out;
    }

    SegmentCostTable table(gram);
    const double inf = std::numeric_limits<double>::infinity();
    const size_t max_c = std::min(max_changepoints, n / min_segment_len == 0 ? size_t{0} : n / min_segment_len - 1);

    // D[c][j]: best cost covering [0, j) with exactly c changepoints
    std::vector<std::vector<double>> dp(max_c + 1, std::vector<double>(n + 1, inf));
    std::vector<std::vector<size_t>> parent(max_c + 1, std::vector<size_t>(n + 1, 0));

    for (size_t j = min_segment_len; j <= n; ++j) dp[0][j] = table.cost(0, j);
    for (size_t c = 1; c <= max_c; ++c) {
        for (size_t j = (c + 1) * min_segment_len; j <= n; ++j) {
            double best = inf;
            size_t arg = 0;
            for (size_t i = c * min_segment_len; i + min_segment_len <= j; ++i) {
                if (dp[c - 1][i] == inf) continue;
                double v = dp[c - 1][i] + table.cost(i, j);
                if (v < best) {
                    best = v;
                    arg = i;
                }
            }
            dp[c][j] = best;
            parent[c][j] = arg;
        }
    }

    double best = inf;
    size_t best_c = 0;
    for (size_t c = 0; c <= max_c; ++c) {
        if (dp[c][n] == inf) continue;
        double v = dp[c][n] + penalty * static_cast<double>(c);
        if (v < best) {
            best = v;
            best_c = c;
        }
    }

    std::vector<size_t> cuts;
    size_t j = n;
    for (size_t c = best_c; c > 0; --c) {
        j = parent[c][j];
        cuts.push_back(j);
    }
    std::reverse(cuts.begin(), cuts.end());
    out.boundaries = std::move(cuts);
    return out;
}

SegmentBoundarySet detect_changepoints(const FeatureGrid& frames, double penalty,
                                       size_t min_segment_len, size_t max_changepoints) {
    if (frames.time_steps < min_segment_len) {
        SegmentBoundarySet out;
        out.n_frames = frames.time_steps;
        out.too_short = true;
        return out;
    }
    Matrix gram = gram_matrix(frames, median_heuristic_bandwidth(frames));
    return detect_changepoints_gram(gram, penalty, min_segment_len, max_changepoints);
}

SegmentBoundarySet detect_changepoints_auto(const FeatureGrid& frames, double penalty_scale,
                                            size_t min_segment_len, size_t max_changepoints) {
    if (frames.time_steps < min_segment_len) {
        SegmentBoundarySet out;
        out.n_frames = frames.time_steps;
        out.too_short = true;
        return out;
    }
    Matrix gram = gram_matrix(frames, median_heuristic_bandwidth(frames));
    SegmentCostTable table(gram);
    const size_t n = frames.time_steps;

    std::vector<double> scatter(n);
    for (size_t t = 0; t < n; ++t) {
        double mean = 0.0;
        for (size_t s = 0; s < n; ++s) mean += gram.at(t, s);
        scatter[t] = gram.at(t, t) - mean / static_cast<double>(n);
    }
    auto mid = scatter.begin() + n / 2;
    std::nth_element(scatter.begin(), mid, scatter.end());
    double penalty = penalty_scale * *mid * std::log(static_cast<double>(n));
    if (penalty < 0.0) penalty = 0.0;

    return detect_changepoints_gram(gram, penalty, min_segment_len, max_changepoints);
}

std::vector<ClipSegment> segment_clip(const AudioClip& clip, const SegmentBoundarySet& bounds,
                                      double hop_ms, double min_seconds) {
    if (clip.sample_rate <= 0) throw std::invalid_argument("segment_clip: rate must be positive");
    const size_t hop = static_cast<size_t>(std::lround(hop_ms * 1e-3 * clip.sample_rate));
    if (hop == 0) throw std::invalid_argument("segment_clip: hop must be at least one sample");

    std::vector<size_t> cut_samples;
    cut_samples.push_back(0);
    for (size_t b : bounds.boundaries) {
        size_t s = b * hop;
        if (s >= clip.samples.size()) break;
        cut_samples.push_back(s);
    }
    cut_samples.push_back(clip.samples.size());

    std::vector<ClipSegment> out;
    for (size_t k = 0; k + 1 < cut_samples.size(); ++k) {
        ClipSegment seg;
        seg.index = k;
        size_t lo = cut_samples[k], hi = cut_samples[k + 1];
        seg.clip.id = clip.id + ".s" + std::to_string(k);
        seg.clip.sample_rate = clip.sample_rate;
        seg.clip.samples.assign(clip.samples.begin() + static_cast<long>(lo),
                                clip.samples.begin() + static_cast<long>(hi));
        seg.start_s = static_cast<double>(lo) / clip.sample_rate;
        seg.end_s = static_cast<double>(hi) / clip.sample_rate;
        seg.kept = (seg.end_s - seg.start_s) >= min_seconds;
        out.push_back(std::move(seg));
    }
    return out;
}

}  // namespace soundcollage
