#pragma once

#include "soundcollage/audio_io.hpp"
#include "soundcollage/features.hpp"
#include "soundcollage/matrix.hpp"

namespace soundcollage {

// Repeating-pattern extraction via frame similarity. k counts the frames
// entering each median, the frame itself included. min_gap is the minimum
// index spacing enforced pairwise among selected frames, which keeps the
// median from feasting on immediate temporal neighbors. min_sim floors the
// admissible cosine similarity (the frame itself is exempt).
struct SeparationParams {
    size_t k = 100;
    size_t min_gap = 1;
    double min_sim = 0.0;
};

struct SeparationResult {
    AudioClip vocal;       // comp1: residual after removing the repeating model
    AudioClip background;  // comp2: repeating part
};

// Cosine similarity between magnitude frames, frames x frames.
// Zero-norm frames are similar only to themselves.
Matrix similarity_matrix(const Matrix& mag);

// Per-frame median over the selected similar frames, clipped to the
// mixture magnitude: R = min(median, mag) elementwise.
Matrix repeating_model(const Matrix& mag, const Matrix& sim, const SeparationParams& params);

// Soft mask M = R^2 / (R^2 + (V - R)^2 + 1e-12), elementwise in [0, 1).
Matrix wiener_mask(const Matrix& repeat_model, const Matrix& mag);

// Full decomposition: background = istft(M . X), vocal = istft((1 - M) . X),
// both with the mixture phase, both exactly as long as the input.
// Output ids are the input id suffixed ".v" and ".b".
SeparationResult separate(const AudioClip& clip, const SeparationParams& params = {});

}  // namespace soundcollage
