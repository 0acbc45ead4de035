#include "soundcollage/separation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace soundcollage {

namespace {

constexpr double kMaskEps = 1e-12;

}  // namespace

Matrix similarity_matrix(const Matrix& mag) {
    const size_t n = mag.rows;
    std::vector<double> norm(n);
    for (size_t i = 0; i < n; ++i) {
        const double* r = mag.row(i);
        double acc = 0.0;
        for (size_t b = 0; b < mag.cols; ++b) acc += r[b] * r[b];
        norm[i] = std::sqrt(acc);
    }

    Matrix s(n, n);
    for (size_t i = 0; i < n; ++i) {
        s.at(i, i) = 1.0;
        const double* ri = mag.row(i);
        for (size_t j = i + 1; j < n; ++j) {
            double v = 0.0;
            if (norm[i] > 0.0 && norm[j] > 0.0) {
                const double* rj = mag.row(j);
                double dot = 0.0;
                for (size_t b = 0; b < mag.cols; ++b) dot += ri[b] * rj[b];
                v = dot / (norm[i] * norm[j]);
            }
            s.at(i, j) = v;
            s.at(j, i) = v;
        }
    }
    return s;
}

Matrix repeating_model(const Matrix& mag, const Matrix& sim, const SeparationParams& params) {
    if (params.k < 1) throw std::invalid_argument("repeating_model: k must be at least 1");
    if (sim.rows != mag.rows || sim.cols != mag.rows) {
        throw std::invalid_argument("repeating_model: similarity matrix does not match frame count");
    }
    const size_t n = mag.rows;
    Matrix r(n, mag.cols);

    std::vector<size_t> order(n);
    std::vector<size_t> selected;
    std::vector<double> buf;
    const size_t gap = params.min_gap == 0 ? 1 : params.min_gap;

    for (size_t i = 0; i < n; ++i) {
        // candidates by similarity, best first, index as tie-break
        std::iota(order.begin(), order.end(), size_t{0});
        const double* si = sim.row(i);
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            if (si[a] != si[b]) return si[a] > si[b];
            return a < b;
        });

        selected.clear();
        selected.push_back(i);  // the frame itself, exempt from the floor
        for (size_t cand : order) {
            if (selected.size() >= params.k) break;
            if (cand == i || si[cand] < params.min_sim) continue;
            // pairwise spacing: nearest already-selected index decides
            auto it = std::lower_bound(selected.begin(), selected.end(), cand);
            bool ok = true;
            if (it != selected.end() && *it - cand < gap) ok = false;
            if (it != selected.begin() && cand - *(it - 1) < gap) ok = false;
            if (ok) selected.insert(it, cand);
        }

        const size_t m = selected.size();
        buf.resize(m);
        for (size_t b = 0; b < mag.cols; ++b) {
            for (size_t t = 0; t < m; ++t) buf[t] = mag.at(selected[t], b);
            double med;
            auto mid = buf.begin() + m / 2;
            std::nth_element(buf.begin(), mid, buf.end());
            if (m % 2 == 1) {
                med = *mid;
            } else {
                double hi = *mid;
                double lo = *std::max_element(buf.begin(), mid);
                med = 0.5 * (lo + hi);
            }
            r.at(i, b) = std::min(med, mag.at(i, b));
        }
    }
    return r;
}

Matrix wiener_mask(const Matrix& repeat_model, const Matrix& mag) {
    if (repeat_model.rows != mag.rows || repeat_model.cols != mag.cols) {
        throw std::invalid_argument("wiener_mask: model and magnitude dims differ");
    }
    Matrix m(mag.rows, mag.cols);
    for (size_t i = 0; i < m.data.size(); ++i) {
        double r = repeat_model.data[i];
        double d = mag.data[i] - r;
        m.data[i] = (r * r) / (r * r + d * d + kMaskEps);
    }
    return m;
}

SeparationResult separate(const AudioClip& clip, const SeparationParams& params) {
    Spectrogram spec = stft(clip);
    Matrix v = magnitude(spec);
    Matrix sim = similarity_matrix(v);
    Matrix rep = repeating_model(v, sim, params);
    Matrix mask = wiener_mask(rep, v);

    Spectrogram back = spec;
    Spectrogram voc = spec;
    for (size_t i = 0; i < spec.data.size(); ++i) {
        back.data[i] = spec.data[i] * mask.data[i];
        voc.data[i] = spec.data[i] * (1.0 - mask.data[i]);
    }

    SeparationResult out;
    out.background = istft(back, clip.samples.size());
    out.vocal = istft(voc, clip.samples.size());
    out.background.id = clip.id + ".b";
    out.vocal.id = clip.id + ".v";
    out.background.sample_rate = clip.sample_rate;
    out.vocal.sample_rate = clip.sample_rate;
    return out;
}

}  // namespace soundcollage
