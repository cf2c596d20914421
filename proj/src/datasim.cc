// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "desep/datasim.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "desep/fft.h"

namespace desep {

namespace {

constexpr int kSincHalfWidth = 32;
constexpr int kDirectOffset = kSincHalfWidth + 8;
constexpr double kTailLevel = 0.25;
constexpr int kIsoDirections = 36;

// fork streams inside one chunk; fixed so specs replay bit for bit
constexpr uint64_t kSourceStream = 1000;
constexpr uint64_t kRirStream = 2000;
constexpr uint64_t kNoiseStream = 3000;
constexpr uint64_t kNoiseRirStream = 3100;
constexpr uint64_t kIsoStream = 4000;

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = kPi * x;
  return std::sin(px) / px;
}

double mean_square(const Eigen::VectorXd& v) {
  return v.size() ? v.squaredNorm() / static_cast<double>(v.size()) : 0.0;
}

// shortest circular distance in degrees, in [0, 180]
double circular_distance(double a, double b) {
  return std::fabs(std::remainder(a - b, 360.0));
}

std::string dirname_of(const std::string& path) {
  const size_t cut = path.find_last_of('/');
  return cut == std::string::npos ? std::string(".") : path.substr(0, cut);
}

}  // namespace

void SimulatorConfig::validate() const {
  geometry.validate();
  if (sample_rate < 1) throw std::invalid_argument("datasim: sample_rate must be >= 1");
  if (!(chunk_seconds > 0.0))
    throw std::invalid_argument("datasim: chunk_seconds must be positive");
  if (reverb && (rt60_min <= 0.0 || rt60_max < rt60_min))
    throw std::invalid_argument("datasim: rt60 range must satisfy 0 < min <= max");
  if (iso_noise && iso_snr_max < iso_snr_min)
    throw std::invalid_argument("datasim: iso SNR range is inverted");
  if (min_separation_deg < 0.0 || min_separation_deg > 180.0)
    throw std::invalid_argument("datasim: min_separation_deg must be in [0, 180]");
}

void MixtureSpec::validate(const SimulatorConfig& config) const {
  const int expect = speaker_count(label);
  if (static_cast<int>(source_doas_deg.size()) != expect)
    throw std::invalid_argument(std::string("datasim: ") + track_name(label) +
                                " chunk needs " + std::to_string(expect) +
                                " source directions, got " +
                                std::to_string(source_doas_deg.size()));
  if (source_ids.size() != source_doas_deg.size())
    throw std::invalid_argument("datasim: one clip id per source is required");
  std::vector<double> dirs = source_doas_deg;
  if (use_noise) dirs.push_back(noise_doa_deg);
  for (double d : dirs)
    if (!std::isfinite(d)) throw std::invalid_argument("datasim: non-finite direction");
  for (size_t i = 0; i < dirs.size(); ++i)
    for (size_t j = i + 1; j < dirs.size(); ++j)
      if (circular_distance(dirs[i], dirs[j]) < config.min_separation_deg)
        throw std::invalid_argument(
            "datasim: directions " + std::to_string(dirs[i]) + " and " +
            std::to_string(dirs[j]) + " closer than " +
            std::to_string(config.min_separation_deg) + " deg");
  if (!std::isfinite(snr_db) || !std::isfinite(sdr_db) || !std::isfinite(iso_snr_db))
    throw std::invalid_argument("datasim: non-finite level target");
}

std::vector<CorpusEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  const std::string base = dirname_of(path);
  std::vector<CorpusEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    CorpusEntry e;
    if (!(ls >> e.id)) continue;  // blank
    if (!(ls >> e.path >> e.seconds))
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected '<id> <path> <seconds>'");
    std::string extra;
    if (ls >> extra)
      throw DataError(path + ":" + std::to_string(lineno) + ": trailing field '" +
                      extra + "'");
    if (!e.path.empty() && e.path[0] != '/') e.path = base + "/" + e.path;
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw DataError("manifest has no entries: " + path);
  return entries;
}

Eigen::MatrixXd synth_plane_rir(const ArrayGeometry& geom, double azimuth_deg,
                                int sample_rate, double rt60, Rng* rng) {
  geom.validate();
  if (sample_rate < 1) throw std::invalid_argument("rir: sample_rate must be >= 1");
  if (rt60 > 0.0 && rng == nullptr)
    throw std::invalid_argument("rir: a random source is required for the tail");
  const int mics = geom.num_mics();
  const double az = normalize_azimuth(azimuth_deg) * kPi / 180.0;
  const Eigen::RowVector3d toward(std::cos(az), std::sin(az), 0.0);
  const Eigen::RowVector3d centroid = geom.centroid();

  const int tail_len = rt60 > 0.0 ? static_cast<int>(rt60 * sample_rate) : 0;
  const int direct_len = kDirectOffset + kSincHalfWidth + 2;
  const int taps = direct_len + tail_len;
  Eigen::MatrixXd rir = Eigen::MatrixXd::Zero(mics, taps);

  for (int m = 0; m < mics; ++m) {
    const double tau =
        -((geom.mic_positions.row(m) - centroid).dot(toward)) / geom.speed_of_sound;
    const double center = kDirectOffset + tau * sample_rate;
    const int lo = std::max(0, static_cast<int>(std::ceil(center - kSincHalfWidth)));
    const int hi =
        std::min(taps - 1, static_cast<int>(std::floor(center + kSincHalfWidth)));
    for (int n = lo; n <= hi; ++n) {
      const double x = n - center;
      rir(m, n) = sinc(x) * (0.5 + 0.5 * std::cos(kPi * x / kSincHalfWidth));
    }
  }
  if (tail_len > 0) {
    // diffuse decay reaching -60 dB at rt60, independent across mics
    const int start = kDirectOffset + kSincHalfWidth + 2 + sample_rate * 5 / 1000;
    const double rate = 3.0 / (rt60 * sample_rate);
    for (int m = 0; m < mics; ++m)
      for (int n = start; n < taps; ++n)
        rir(m, n) = kTailLevel * rng->normal() * std::pow(10.0, -rate * (n - start));
  }
  return rir;
}

Eigen::MatrixXd convolve_rir(const Eigen::VectorXd& source, const Eigen::MatrixXd& rir) {
  const int n = static_cast<int>(source.size());
  const int mics = static_cast<int>(rir.rows());
  const int taps = static_cast<int>(rir.cols());
  if (n == 0 || mics == 0 || taps == 0)
    throw std::invalid_argument("convolve: empty source or response");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(mics, n);
  if (static_cast<int64_t>(n) * taps <= (1 << 22)) {
    for (int m = 0; m < mics; ++m)
      for (int t = 0; t < taps; ++t) {
        const double h = rir(m, t);
        if (h == 0.0) continue;
        const int len = n - t;
        if (len <= 0) break;
        out.row(m).segment(t, len) += h * source.head(len).transpose();
      }
    return out;
  }
  const int size = next_power_of_two(n + taps - 1);
  std::vector<double> padded(static_cast<size_t>(size), 0.0);
  for (int i = 0; i < n; ++i) padded[static_cast<size_t>(i)] = source[i];
  const std::vector<std::complex<double>> sf = rfft(padded);
  for (int m = 0; m < mics; ++m) {
    std::vector<double> hp(static_cast<size_t>(size), 0.0);
    for (int t = 0; t < taps; ++t) hp[static_cast<size_t>(t)] = rir(m, t);
    std::vector<std::complex<double>> hf = rfft(hp);
    for (size_t i = 0; i < hf.size(); ++i) hf[i] *= sf[i];
    const std::vector<double> y = irfft(hf, size);
    for (int i = 0; i < n; ++i) out(m, i) = y[static_cast<size_t>(i)];
  }
  return out;
}

Eigen::MatrixXd early_part(const Eigen::MatrixXd& rir, int sample_rate, double early_ms) {
  if (sample_rate < 1) throw std::invalid_argument("early_part: bad sample rate");
  if (early_ms < 0.0) throw std::invalid_argument("early_part: negative window");
  const int window = static_cast<int>(early_ms * sample_rate / 1000.0);
  Eigen::MatrixXd out = rir;
  for (int m = 0; m < rir.rows(); ++m) {
    int peak = 0;
    rir.row(m).cwiseAbs().maxCoeff(&peak);
    const int keep_until = peak + window;  // inclusive
    for (int t = keep_until + 1; t < rir.cols(); ++t) out(m, t) = 0.0;
  }
  return out;
}

double gain_for_snr(double signal_power, double noise_power, double snr_db) {
  if (!(signal_power > 0.0) || !(noise_power > 0.0))
    throw std::invalid_argument("gain_for_snr: powers must be positive");
  if (!std::isfinite(signal_power) || !std::isfinite(snr_db))
    throw std::invalid_argument("gain_for_snr: bad inputs");
  return std::sqrt(signal_power / (noise_power * std::pow(10.0, snr_db / 10.0)));
}

Eigen::VectorXd synth_speech(int num_samples, int sample_rate, Rng* rng) {
  if (num_samples < 1 || sample_rate < 1)
    throw std::invalid_argument("synth_speech: bad sizes");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(num_samples);
  int pos = 0;
  while (pos < num_samples) {
    const int seg = std::max(
        1, static_cast<int>(rng->uniform(0.08, 0.25) * sample_rate));
    const bool voiced = rng->uniform() < 0.85;
    if (voiced) {
      const double f0_start = rng->uniform(85.0, 280.0);
      const double f0_end = f0_start * rng->uniform(0.85, 1.2);
      const double tilt = rng->uniform(0.8, 1.6);
      const double level = rng->uniform(0.4, 1.0);
      const int harmonics = std::max(
          1, std::min(10, static_cast<int>(0.45 * sample_rate / f0_start)));
      std::vector<double> amp(harmonics), phase(harmonics);
      for (int h = 0; h < harmonics; ++h) {
        amp[static_cast<size_t>(h)] = 1.0 / std::pow(h + 1.0, tilt);
        phase[static_cast<size_t>(h)] = rng->uniform(0.0, 2.0 * kPi);
      }
      const int stop = std::min(num_samples, pos + seg);
      for (int i = pos; i < stop; ++i) {
        const double frac = static_cast<double>(i - pos) / seg;
        const double f0 = f0_start + (f0_end - f0_start) * frac;
        const double env = std::sin(kPi * frac);
        double s = 0.0;
        for (int h = 0; h < harmonics; ++h) {
          phase[static_cast<size_t>(h)] += 2.0 * kPi * (h + 1) * f0 / sample_rate;
          s += amp[static_cast<size_t>(h)] * std::sin(phase[static_cast<size_t>(h)]);
        }
        out[i] = level * env * s;
      }
    }
    pos += seg;
  }
  // breath-level floor keeps every chunk full rank
  for (int i = 0; i < num_samples; ++i) out[i] += 0.01 * rng->normal();
  const double peak = out.cwiseAbs().maxCoeff();
  if (peak > 0.0) out *= 0.5 / peak;
  return out;
}

std::vector<StageRow> default_schedule() {
  std::vector<StageRow> rows(4);
  rows[0] = {1, 5, 5.0, 10.0, true, -2.0, 2.0, false, 0.0, 0.0, 0.0, 0.0};
  rows[1] = {6, 10, 0.0, 10.0, false, 0.0, 0.0, true, 15.0, 20.0, -2.0, 2.0};
  rows[2] = {11, 15, -2.0, 10.0, false, 0.0, 0.0, true, 10.0, 20.0, -4.0, 4.0};
  rows[3] = {16, 20, -5.0, 10.0, false, 0.0, 0.0, true, 5.0, 20.0, -5.0, 5.0};
  return rows;
}

ChunkDraw sample_stage(int epoch, const std::vector<StageRow>& schedule, bool staged,
                       Rng* rng) {
  if (schedule.empty()) throw std::invalid_argument("sample_stage: empty schedule");
  if (epoch < 1) throw std::invalid_argument("sample_stage: epochs are 1-based");
  const StageRow* row = &schedule.back();
  if (staged) {
    for (const StageRow& r : schedule)
      if (epoch >= r.first_epoch && epoch <= r.last_epoch) {
        row = &r;
        break;
      }
  }
  ChunkDraw draw;
  // fixed draw order: coin, then the levels the branch needs
  const bool enhance = rng->uniform() < 0.5;
  if (enhance || (!row->has_css && !row->has_nss)) {
    draw.label = TrackLabel::kSe;
    draw.snr_db = rng->uniform(row->se_lo, row->se_hi);
  } else if (row->has_css) {
    draw.label = TrackLabel::kCss;
    draw.sdr_db = rng->uniform(row->css_lo, row->css_hi);
  } else {
    draw.label = TrackLabel::kNss;
    draw.snr_db = rng->uniform(row->nss_snr_lo, row->nss_snr_hi);
    draw.sdr_db = rng->uniform(row->nss_sdr_lo, row->nss_sdr_hi);
  }
  return draw;
}

ChunkSimulator::ChunkSimulator(SimulatorConfig config) : config_(std::move(config)) {
  config_.validate();
  if (!config_.corpus.empty()) corpus_ = read_manifest(config_.corpus);
  if (!config_.noise_corpus.empty()) noise_corpus_ = read_manifest(config_.noise_corpus);
}

MixtureSpec ChunkSimulator::draw_spec(const ChunkDraw& draw, Rng* rng) const {
  MixtureSpec spec;
  spec.label = draw.label;
  spec.snr_db = draw.snr_db;
  spec.sdr_db = draw.sdr_db;
  spec.use_noise = draw.label != TrackLabel::kCss;
  spec.use_iso = config_.iso_noise && spec.use_noise;
  const int sources = speaker_count(draw.label);

  // fixed draw order: directions, clip ids, noise id, iso level, seed
  std::vector<double> dirs;
  const int wanted = sources + (spec.use_noise ? 1 : 0);
  for (int k = 0; k < wanted; ++k) {
    bool placed = false;
    for (int tries = 0; tries < 10000 && !placed; ++tries) {
      const double cand = rng->uniform(0.0, 360.0);
      placed = true;
      for (double d : dirs)
        if (circular_distance(cand, d) < config_.min_separation_deg) {
          placed = false;
          break;
        }
      if (placed) dirs.push_back(cand);
    }
    if (!placed)
      throw std::invalid_argument(
          "datasim: cannot place " + std::to_string(wanted) +
          " directions at least " + std::to_string(config_.min_separation_deg) +
          " deg apart");
  }
  spec.source_doas_deg.assign(dirs.begin(), dirs.begin() + sources);
  if (spec.use_noise) spec.noise_doa_deg = dirs.back();

  for (int c = 0; c < sources; ++c) {
    int id;
    if (!corpus_.empty()) {
      id = static_cast<int>(rng->below(corpus_.size()));
      // two speakers should come from different clips when possible
      for (int tries = 0; tries < 100 && c > 0 && corpus_.size() > 1 &&
                          id == spec.source_ids[0];
           ++tries)
        id = static_cast<int>(rng->below(corpus_.size()));
    } else {
      id = static_cast<int>(rng->below(1u << 30));
    }
    spec.source_ids.push_back(id);
  }
  if (spec.use_noise)
    spec.noise_id = static_cast<int>(
        rng->below(noise_corpus_.empty() ? (1u << 30) : noise_corpus_.size()));
  if (spec.use_iso)
    spec.iso_snr_db = rng->uniform(config_.iso_snr_min, config_.iso_snr_max);
  spec.seed = rng->raw();
  return spec;
}

Eigen::VectorXd ChunkSimulator::fetch_clip(const std::vector<CorpusEntry>& corpus,
                                           int id, bool speech, Rng* rng) const {
  const int n = config_.chunk_samples();
  if (corpus.empty()) {
    if (speech) return synth_speech(n, config_.sample_rate, rng);
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) w[i] = rng->normal();
    return w;
  }
  if (id < 0 || id >= static_cast<int>(corpus.size()))
    throw DataError("datasim: clip id " + std::to_string(id) +
                    " outside the manifest (" + std::to_string(corpus.size()) +
                    " entries)");
  const Waveform clip = read_wav(corpus[static_cast<size_t>(id)].path);
  if (clip.sample_rate != config_.sample_rate)
    throw DataError("datasim: clip " + corpus[static_cast<size_t>(id)].path + " is " +
                    std::to_string(clip.sample_rate) + " Hz, expected " +
                    std::to_string(config_.sample_rate) +
                    " (resampling is out of scope)");
  const Eigen::VectorXd mono = clip.samples.row(0).transpose();
  const int len = static_cast<int>(mono.size());
  Eigen::VectorXd out(n);
  if (len >= n) {
    const int offset = static_cast<int>(rng->below(static_cast<uint64_t>(len - n) + 1));
    out = mono.segment(offset, n);
  } else {
    (void)rng->below(1);  // keep the draw count independent of clip length
    for (int i = 0; i < n; ++i) out[i] = mono[i % len];
  }
  return out;
}

SimulatedChunk ChunkSimulator::simulate(const MixtureSpec& spec) const {
  spec.validate(config_);
  const int n = config_.chunk_samples();
  const int mics = config_.geometry.num_mics();
  const int sources = speaker_count(spec.label);
  Rng root(spec.seed);

  std::vector<Eigen::MatrixXd> images;
  std::vector<Eigen::MatrixXd> early_images;
  for (int c = 0; c < sources; ++c) {
    Rng src_rng = root.fork(kSourceStream + static_cast<uint64_t>(c));
    const Eigen::VectorXd src = fetch_clip(corpus_, spec.source_ids[static_cast<size_t>(c)],
                                           true, &src_rng);
    Rng rir_rng = root.fork(kRirStream + static_cast<uint64_t>(c));
    const double rt60 =
        config_.reverb ? rir_rng.uniform(config_.rt60_min, config_.rt60_max) : 0.0;
    const Eigen::MatrixXd rir =
        synth_plane_rir(config_.geometry, spec.source_doas_deg[static_cast<size_t>(c)],
                        config_.sample_rate, rt60, &rir_rng);
    images.push_back(convolve_rir(src, rir));
    early_images.push_back(
        convolve_rir(src, early_part(rir, config_.sample_rate)));
  }

  // land the requested speaker level difference exactly, measured on the
  // reference channel
  if (sources == 2) {
    const double p0 = mean_square(images[0].row(0).transpose());
    const double p1 = mean_square(images[1].row(0).transpose());
    const double g = gain_for_snr(p0, p1, spec.sdr_db);
    images[1] *= g;
    early_images[1] *= g;
  }

  Eigen::MatrixXd mix = Eigen::MatrixXd::Zero(mics, n);
  for (const Eigen::MatrixXd& img : images) mix += img;
  const double speaker_power = mean_square(mix.row(0).transpose());

  if (spec.use_noise) {
    Rng noise_rng = root.fork(kNoiseStream);
    const Eigen::VectorXd noise =
        fetch_clip(noise_corpus_, spec.noise_id, false, &noise_rng);
    Rng nrir_rng = root.fork(kNoiseRirStream);
    const double rt60 =
        config_.reverb ? nrir_rng.uniform(config_.rt60_min, config_.rt60_max) : 0.0;
    const Eigen::MatrixXd nrir = synth_plane_rir(
        config_.geometry, spec.noise_doa_deg, config_.sample_rate, rt60, &nrir_rng);
    Eigen::MatrixXd v = convolve_rir(noise, nrir);
    const double pv = mean_square(v.row(0).transpose());
    mix += gain_for_snr(speaker_power, pv, spec.snr_db) * v;
  }

  if (spec.use_iso) {
    Eigen::MatrixXd iso = Eigen::MatrixXd::Zero(mics, n);
    for (int k = 0; k < kIsoDirections; ++k) {
      Rng iso_rng = root.fork(kIsoStream + static_cast<uint64_t>(k));
      Eigen::VectorXd w(n);
      for (int i = 0; i < n; ++i) w[i] = iso_rng.normal();
      const Eigen::MatrixXd rir =
          synth_plane_rir(config_.geometry, 360.0 * k / kIsoDirections,
                          config_.sample_rate, 0.0, nullptr);
      iso += convolve_rir(w, rir);
    }
    const double pi = mean_square(iso.row(0).transpose());
    mix += gain_for_snr(speaker_power, pi, spec.iso_snr_db) * iso;
  }

  SimulatedChunk chunk;
  chunk.mixture = Waveform{std::move(mix), config_.sample_rate};
  for (int c = 0; c < sources; ++c) {
    chunk.references.push_back(images[static_cast<size_t>(c)].row(0).transpose());
    chunk.early_references.push_back(
        early_images[static_cast<size_t>(c)].row(0).transpose());
  }
  chunk.spec = spec;
  return chunk;
}

}  // namespace desep
