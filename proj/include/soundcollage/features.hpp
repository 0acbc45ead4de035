#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "soundcollage/audio_io.hpp"
#include "soundcollage/matrix.hpp"

namespace soundcollage {

// Complex short-time spectrum, row-major frames x bins, one-sided
// (n_bins = n_fft/2 + 1). Analysis geometry is carried along so the
// inverse transform and downstream timing math agree with the forward pass.
struct Spectrogram {
    size_t n_frames = 0;
    size_t n_bins = 0;
    size_t window_len = 0;
    size_t hop = 0;
    size_t n_fft = 0;
    int sample_rate = 0;
    std::vector<std::complex<double>> data;

    std::complex<double>& at(size_t f, size_t b) { return data[f * n_bins + b]; }
    std::complex<double> at(size_t f, size_t b) const { return data[f * n_bins + b]; }
};

// Time-by-coefficient feature matrix (log-mel frames, MFCC grids, ...).
struct FeatureGrid {
    size_t time_steps = 0;
    size_t n_coeffs = 0;
    std::vector<double> values;

    FeatureGrid() = default;
    FeatureGrid(size_t t, size_t c) : time_steps(t), n_coeffs(c), values(t * c, 0.0) {}

    double& at(size_t t, size_t c) { return values[t * n_coeffs + c]; }
    double at(size_t t, size_t c) const { return values[t * n_coeffs + c]; }
};

class GridFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Zero-pads or truncates to exactly round(seconds * rate) samples.
AudioClip pad_to_duration(const AudioClip& clip, double seconds);

// Periodic Hann window of the given length.
std::vector<double> hann_window(size_t len);

// Short-time Fourier transform: periodic Hann analysis window,
// window/hop given in milliseconds, FFT size = next power of two >= window,
// unnormalized forward transform, one-sided bins.
// Requires at least one full window of samples.
Spectrogram stft(const AudioClip& clip, double window_ms = 25.0, double hop_ms = 10.0);

// Overlap-add inverse with Hann synthesis window and per-sample
// window-energy normalization (epsilon-floored). n_samples fixes the
// output length; mixture phase is whatever the spectrogram holds.
AudioClip istft(const Spectrogram& spec, size_t n_samples);

Matrix magnitude(const Spectrogram& spec);

// Triangular mel filterbank, n_mels x (n_fft/2 + 1). HTK mel scale
// (2595 * log10(1 + f/700)), filters span 0 Hz..Nyquist, unit-peak
// unnormalized triangles evaluated at bin center frequencies.
Matrix mel_filterbank(size_t n_mels, size_t n_fft, int sample_rate);

// Power spectrogram -> mel energies -> log(1e-10 + e). frames x n_mels.
FeatureGrid log_mel(const AudioClip& clip, size_t n_mels = 64,
                    double window_ms = 25.0, double hop_ms = 10.0);

// log_mel followed by an orthonormal DCT-II across the band axis,
// keeping all n_mels coefficients.
FeatureGrid extract_mfcc(const AudioClip& clip, size_t n_mels = 64,
                         double window_ms = 25.0, double hop_ms = 10.0);

// Linear interpolation of each coefficient track onto target_steps
// positions uniformly spanning [0, time_steps - 1]. Identity when
// target_steps == time_steps.
FeatureGrid resample_time(const FeatureGrid& grid, size_t target_steps);

// Binary grid file: u32 time_steps, u32 n_coeffs, then row-major
// float-32 values, all little-endian.
void save_grid(const std::string& path, const FeatureGrid& grid);
FeatureGrid load_grid(const std::string& path);

}  // namespace soundcollage
