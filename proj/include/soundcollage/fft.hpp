#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace soundcollage {

// In-place iterative radix-2 FFT. Size must be a power of two.
// Forward transform is unnormalized; inverse divides by n.
void fft(std::vector<std::complex<double>>& a, bool inverse);

size_t next_pow2(size_t n);

}  // namespace soundcollage
