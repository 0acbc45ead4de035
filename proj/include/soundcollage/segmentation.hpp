#pragma once

#include <cstddef>
#include <vector>

#include "soundcollage/audio_io.hpp"
#include "soundcollage/features.hpp"
#include "soundcollage/matrix.hpp"

namespace soundcollage {

// Change-point positions in frame indices, strictly inside (0, n_frames),
// sorted ascending. too_short flags inputs with fewer frames than one
// minimum-length segment; those get no boundaries.
struct SegmentBoundarySet {
    std::vector<size_t> boundaries;
    size_t n_frames = 0;
    bool too_short = false;
};

// One span of the source clip. index is the segment's position in the full
// segmentation (dropped segments keep their slot, so ids stay stable).
struct ClipSegment {
    AudioClip clip;
    size_t index = 0;
    double start_s = 0.0;
    double end_s = 0.0;
    bool kept = true;
};

// RBF gram matrix G[i,j] = exp(-|fi - fj|^2 / (2 bw^2)) over frame vectors.
Matrix gram_matrix(const FeatureGrid& frames, double bandwidth);

// Median pairwise Euclidean distance over at most 256 evenly spaced frames.
// Returns 1.0 when every sampled distance is zero, which makes the gram
// matrix all-ones and the change-point search a no-op (correct for uniform
// input) instead of dividing by zero.
double median_heuristic_bandwidth(const FeatureGrid& frames);

// Within-segment scatter of [i, j): sum_t G[t,t] - (1/(j-i)) sum_{s,t} G[s,t].
// Direct double-sum evaluation.
double segment_cost(const Matrix& gram, size_t i, size_t j);

// O(1) per-query segment costs from 2D prefix sums. The DP and any
// exhaustive search over the same table see bitwise-identical cost values.
class SegmentCostTable {
public:
    explicit SegmentCostTable(const Matrix& gram);
    double cost(size_t i, size_t j) const;
    size_t n() const { return n_; }

private:
    size_t n_ = 0;
    std::vector<double> diag_prefix_;  // n+1
    std::vector<double> block_prefix_; // (n+1)^2 row-major
};

// Penalty from the data itself: median over frames of the per-frame scatter
// against the whole sequence, times log(n_frames).
double auto_penalty(const FeatureGrid& frames);

// Exact penalized DP: minimizes total segment cost + penalty * #changepoints
// subject to the minimum segment length and the changepoint cap.
SegmentBoundarySet detect_changepoints_gram(const Matrix& gram, double penalty,
                                            size_t min_segment_len, size_t max_changepoints);

// Same, with the median-heuristic bandwidth applied to raw frame features.
SegmentBoundarySet detect_changepoints(const FeatureGrid& frames, double penalty,
                                       size_t min_segment_len = 50,
                                       size_t max_changepoints = 9);

// Gram built once, penalty derived from it via the auto heuristic scaled by
// penalty_scale. This is the pipeline entry point.
SegmentBoundarySet detect_changepoints_auto(const FeatureGrid& frames, double penalty_scale = 1.0,
                                            size_t min_segment_len = 50,
                                            size_t max_changepoints = 9);

// Cuts the clip at boundary frames (frame index * hop samples). The last
// segment runs to the end of the clip. Segments shorter than min_seconds
// are returned with kept = false. Ids get ".s<index>" suffixes.
std::vector<ClipSegment> segment_clip(const AudioClip& clip, const SegmentBoundarySet& bounds,
                                      double hop_ms = 10.0, double min_seconds = 0.5);

}  // namespace soundcollage
