// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DESEP_FFT_H_
#define DESEP_FFT_H_

#include <complex>
#include <vector>

namespace desep {

// In-place radix-2 decimation-in-time FFT. Size must be a power of two.
// inverse=true applies conjugate twiddles and scales by 1/N.
void fft_inplace(std::vector<std::complex<double>>* data, bool inverse);

std::vector<std::complex<double>> fft(const std::vector<std::complex<double>>& data);
std::vector<std::complex<double>> ifft(const std::vector<std::complex<double>>& data);

// Real-input transform returning the N/2+1 non-negative frequency bins.
std::vector<std::complex<double>> rfft(const std::vector<double>& data);

// Inverse of rfft; n is the (power of two) output length and spectrum must
// hold n/2+1 bins. Imaginary parts of bins 0 and n/2 are ignored.
std::vector<double> irfft(const std::vector<std::complex<double>>& spectrum, int n);

bool is_power_of_two(int n);
// Smallest power of two >= n.
int next_power_of_two(int n);

}  // namespace desep

#endif  // DESEP_FFT_H_
