// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "desep/fft.h"

#include <cmath>
#include <stdexcept>

#include "desep/common.h"

namespace desep {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

int next_power_of_two(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft_inplace(std::vector<std::complex<double>>* data, bool inverse) {
  auto& a = *data;
  const int n = static_cast<int>(a.size());
  if (!is_power_of_two(n)) throw std::invalid_argument("fft: size must be a power of two");

  // Bit-reversal permutation.
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  for (int len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * kPi / len;
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }

  if (inverse) {
    const double scale = 1.0 / n;
    for (auto& x : a) x *= scale;
  }
}

std::vector<std::complex<double>> fft(const std::vector<std::complex<double>>& data) {
  auto out = data;
  fft_inplace(&out, false);
  return out;
}

std::vector<std::complex<double>> ifft(const std::vector<std::complex<double>>& data) {
  auto out = data;
  fft_inplace(&out, true);
  return out;
}

std::vector<std::complex<double>> rfft(const std::vector<double>& data) {
  const int n = static_cast<int>(data.size());
  std::vector<std::complex<double>> full(data.begin(), data.end());
  fft_inplace(&full, false);
  full.resize(n / 2 + 1);
  return full;
}

std::vector<double> irfft(const std::vector<std::complex<double>>& spectrum, int n) {
  if (static_cast<int>(spectrum.size()) != n / 2 + 1)
    throw std::invalid_argument("irfft: spectrum size must be n/2+1");
  std::vector<std::complex<double>> full(n);
  full[0] = std::complex<double>(spectrum[0].real(), 0.0);
  for (int k = 1; k < n / 2; ++k) {
    full[k] = spectrum[k];
    full[n - k] = std::conj(spectrum[k]);
  }
  full[n / 2] = std::complex<double>(spectrum[n / 2].real(), 0.0);
  fft_inplace(&full, true);
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = full[i].real();
  return out;
}

}  // namespace desep
