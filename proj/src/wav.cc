// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "desep/wav.h"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "desep/common.h"

namespace desep {

namespace {

// RIFF is little-endian; so are all targets we build on. Read/write through
// memcpy to stay alignment-safe.
template <typename T>
T read_le(std::istream& is) {
  char buf[sizeof(T)];
  is.read(buf, sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

template <typename T>
void write_le(std::ostream& os, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(buf, sizeof(T));
}

struct FmtChunk {
  uint16_t format = 0;
  uint16_t channels = 0;
  uint32_t sample_rate = 0;
  uint16_t bits_per_sample = 0;
};

}  // namespace

void Waveform::validate() const {
  if (samples.rows() < 1 || samples.cols() < 1)
    throw std::invalid_argument("Waveform: empty audio buffer");
  if (!samples.allFinite())
    throw std::invalid_argument("Waveform: non-finite sample values");
}

Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("read_wav: cannot open " + path);

  char tag[4];
  is.read(tag, 4);
  if (std::memcmp(tag, "RIFF", 4) != 0) throw DataError("read_wav: not a RIFF file: " + path);
  read_le<uint32_t>(is);  // riff size, unused
  is.read(tag, 4);
  if (std::memcmp(tag, "WAVE", 4) != 0) throw DataError("read_wav: not a WAVE file: " + path);

  FmtChunk fmt;
  std::vector<char> data;
  bool have_fmt = false, have_data = false;
  while (is.read(tag, 4)) {
    uint32_t size = read_le<uint32_t>(is);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      fmt.format = read_le<uint16_t>(is);
      fmt.channels = read_le<uint16_t>(is);
      fmt.sample_rate = read_le<uint32_t>(is);
      read_le<uint32_t>(is);  // byte rate
      read_le<uint16_t>(is);  // block align
      fmt.bits_per_sample = read_le<uint16_t>(is);
      if (size > 16) is.ignore(size - 16);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data.resize(size);
      is.read(data.data(), size);
      have_data = true;
      break;
    } else {
      is.ignore(size + (size & 1));
    }
  }
  if (!have_fmt || !have_data) throw DataError("read_wav: missing fmt/data chunk: " + path);
  if (fmt.channels == 0) throw DataError("read_wav: zero channels: " + path);

  const int M = fmt.channels;
  Waveform wave;
  wave.sample_rate = static_cast<int>(fmt.sample_rate);
  if (fmt.format == 1 && fmt.bits_per_sample == 16) {
    Eigen::Index n = static_cast<Eigen::Index>(data.size() / (2 * M));
    wave.samples.resize(M, n);
    const char* p = data.data();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int m = 0; m < M; ++m) {
        int16_t s;
        std::memcpy(&s, p, 2);
        p += 2;
        wave.samples(m, i) = s / 32768.0;
      }
    }
  } else if (fmt.format == 3 && fmt.bits_per_sample == 32) {
    Eigen::Index n = static_cast<Eigen::Index>(data.size() / (4 * M));
    wave.samples.resize(M, n);
    const char* p = data.data();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int m = 0; m < M; ++m) {
        float s;
        std::memcpy(&s, p, 4);
        p += 4;
        wave.samples(m, i) = s;
      }
    }
  } else {
    throw DataError("read_wav: unsupported encoding (want PCM16 or float32): " + path);
  }
  return wave;
}

void write_wav(const std::string& path, const Waveform& wave, WavEncoding encoding) {
  wave.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("write_wav: cannot open " + path);

  const int M = wave.num_channels();
  const Eigen::Index n = wave.num_samples();
  const uint16_t bytes = encoding == WavEncoding::kPcm16 ? 2 : 4;
  const uint32_t data_size = static_cast<uint32_t>(n * M * bytes);

  os.write("RIFF", 4);
  write_le<uint32_t>(os, 36 + data_size);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  write_le<uint32_t>(os, 16);
  write_le<uint16_t>(os, encoding == WavEncoding::kPcm16 ? 1 : 3);
  write_le<uint16_t>(os, static_cast<uint16_t>(M));
  write_le<uint32_t>(os, static_cast<uint32_t>(wave.sample_rate));
  write_le<uint32_t>(os, static_cast<uint32_t>(wave.sample_rate * M * bytes));
  write_le<uint16_t>(os, static_cast<uint16_t>(M * bytes));
  write_le<uint16_t>(os, static_cast<uint16_t>(bytes * 8));
  os.write("data", 4);
  write_le<uint32_t>(os, data_size);

  for (Eigen::Index i = 0; i < n; ++i) {
    for (int m = 0; m < M; ++m) {
      double v = wave.samples(m, i);
      if (encoding == WavEncoding::kPcm16) {
        double clipped = std::max(-1.0, std::min(1.0, v));
        int32_t q = static_cast<int32_t>(std::lrint(clipped * 32767.0));
        write_le<int16_t>(os, static_cast<int16_t>(q));
      } else {
        write_le<float>(os, static_cast<float>(v));
      }
    }
  }
  if (!os) throw DataError("write_wav: short write: " + path);
}

}  // namespace desep
