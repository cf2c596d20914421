// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "desep/config.h"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace desep {

namespace {

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(trim(cur));
  return parts;
}

class ConfigReader {
 public:
  ConfigReader(const std::string& origin, int lineno, const std::string& key,
               const std::string& value)
      : origin_(origin), lineno_(lineno), key_(key), value_(value) {}

  [[noreturn]] void fail(const std::string& why) const {
    throw DataError(origin_ + ":" + std::to_string(lineno_) + ": key '" + key_ +
                    "': " + why + " (value '" + value_ + "')");
  }

  int as_int() const {
    try {
      size_t used = 0;
      const int v = std::stoi(value_, &used);
      if (used != value_.size()) fail("trailing characters after integer");
      return v;
    } catch (const DataError&) {
      throw;
    } catch (const std::exception&) {
      fail("not an integer");
    }
  }

  uint64_t as_u64() const {
    try {
      size_t used = 0;
      const uint64_t v = std::stoull(value_, &used);
      if (used != value_.size()) fail("trailing characters after integer");
      return v;
    } catch (const DataError&) {
      throw;
    } catch (const std::exception&) {
      fail("not an unsigned integer");
    }
  }

  double as_double() const {
    try {
      size_t used = 0;
      const double v = std::stod(value_, &used);
      if (used != value_.size()) fail("trailing characters after number");
      return v;
    } catch (const DataError&) {
      throw;
    } catch (const std::exception&) {
      fail("not a number");
    }
  }

  bool as_bool() const {
    if (value_ == "true" || value_ == "on" || value_ == "1") return true;
    if (value_ == "false" || value_ == "off" || value_ == "0") return false;
    fail("expected one of true/false/on/off/1/0");
  }

  std::vector<int> as_int_list() const {
    std::vector<int> out;
    for (const std::string& p : split(value_, ',')) {
      if (p.empty()) fail("empty list element");
      try {
        out.push_back(std::stoi(p));
      } catch (const std::exception&) {
        fail("'" + p + "' is not an integer");
      }
    }
    return out;
  }

  std::vector<std::pair<int, int>> as_pairs() const {
    std::vector<std::pair<int, int>> out;
    for (const std::string& p : split(value_, ',')) {
      const size_t dash = p.find('-');
      if (dash == std::string::npos) fail("pair '" + p + "' must look like 0-1");
      try {
        out.emplace_back(std::stoi(p.substr(0, dash)), std::stoi(p.substr(dash + 1)));
      } catch (const std::exception&) {
        fail("pair '" + p + "' must be two integers");
      }
    }
    return out;
  }

  // "x y z; x y z; ..." rows
  Eigen::MatrixXd as_positions() const {
    const std::vector<std::string> rows = split(value_, ';');
    Eigen::MatrixXd pos(static_cast<int>(rows.size()), 3);
    for (size_t r = 0; r < rows.size(); ++r) {
      std::istringstream rs(rows[r]);
      double x, y, z;
      if (!(rs >> x >> y >> z)) fail("row '" + rows[r] + "' must be three numbers");
      std::string extra;
      if (rs >> extra) fail("row '" + rows[r] + "' has trailing fields");
      pos.row(static_cast<int>(r)) << x, y, z;
    }
    return pos;
  }

  const std::string& raw() const { return value_; }

 private:
  const std::string& origin_;
  int lineno_;
  const std::string& key_;
  const std::string& value_;
};

}  // namespace

ToolkitConfig default_toolkit_config() { return ToolkitConfig{}; }

ToolkitConfig parse_config_text(const std::string& text, const std::string& origin) {
  ToolkitConfig cfg;

  // geometry is assembled last so mics/radius/positions can appear in any order
  int geom_mics = 4;
  double geom_radius = 0.05;
  double geom_c = 343.0;
  Eigen::MatrixXd geom_positions;
  bool have_positions = false;

  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        throw DataError(origin + ":" + std::to_string(lineno) +
                        ": unterminated section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "geometry" && section != "stft" && section != "wpe" &&
          section != "network" && section != "attention" && section != "datasim" &&
          section != "training")
        throw DataError(origin + ":" + std::to_string(lineno) + ": unknown section [" +
                        section + "]");
      continue;
    }

    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError(origin + ":" + std::to_string(lineno) +
                      ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw DataError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (section.empty())
      throw DataError(origin + ":" + std::to_string(lineno) + ": key '" + key +
                      "' appears before any [section]");
    const ConfigReader v(origin, lineno, key, value);

    auto unknown = [&]() {
      throw DataError(origin + ":" + std::to_string(lineno) + ": unknown key '" + key +
                      "' in section [" + section + "]");
    };

    if (section == "geometry") {
      if (key == "mics") geom_mics = v.as_int();
      else if (key == "radius") geom_radius = v.as_double();
      else if (key == "speed_of_sound") geom_c = v.as_double();
      else if (key == "positions") { geom_positions = v.as_positions(); have_positions = true; }
      else unknown();
    } else if (section == "stft") {
      if (key == "fft_size") cfg.pipeline.stft.fft_size = v.as_int();
      else if (key == "hop_size") cfg.pipeline.stft.hop_size = v.as_int();
      else if (key == "sample_rate") cfg.pipeline.stft.sample_rate = v.as_int();
      else unknown();
    } else if (section == "wpe") {
      if (key == "taps") cfg.pipeline.wpe.taps = v.as_int();
      else if (key == "delay") cfg.pipeline.wpe.delay = v.as_int();
      else if (key == "iterations") cfg.pipeline.wpe.iterations = v.as_int();
      else if (key == "variance_floor") cfg.pipeline.wpe.variance_floor = v.as_double();
      else if (key == "diagonal_loading") cfg.pipeline.wpe.diagonal_loading = v.as_double();
      else unknown();
    } else if (section == "network") {
      NetworkConfig& net = cfg.pipeline.network;
      if (key == "encoder_channels") net.encoder_channels = v.as_int_list();
      else if (key == "kernel_freq") net.kernel_freq = v.as_int();
      else if (key == "kernel_time") net.kernel_time = v.as_int();
      else if (key == "recurrent_hidden") net.recurrent_hidden = v.as_int();
      else if (key == "recurrent_layers") net.recurrent_layers = v.as_int();
      else if (key == "projection_dim") net.projection_dim = v.as_int();
      else if (key == "num_speakers") net.num_speakers = v.as_int();
      else if (key == "leaky_slope") net.leaky_slope = v.as_double();
      else if (key == "extraction_hidden") net.extraction_hidden = v.as_int();
      else if (key == "extraction_layers") net.extraction_layers = v.as_int();
      else if (key == "variance_hidden") net.variance_hidden = v.as_int();
      else unknown();
    } else if (section == "attention") {
      if (key == "embedding_dim") cfg.pipeline.attention.embedding_dim = v.as_int();
      else if (key == "angle_candidates") cfg.pipeline.attention.num_angle = v.as_int();
      else if (key == "beam_candidates") cfg.pipeline.attention.num_beam = v.as_int();
      else if (key == "pairs") cfg.pipeline.attention.pairs = v.as_pairs();
      else unknown();
    } else if (section == "datasim") {
      SimulatorConfig& sim = cfg.datasim;
      if (key == "chunk_seconds") sim.chunk_seconds = v.as_double();
      else if (key == "reverb") sim.reverb = v.as_bool();
      else if (key == "rt60_min") sim.rt60_min = v.as_double();
      else if (key == "rt60_max") sim.rt60_max = v.as_double();
      else if (key == "iso_noise") sim.iso_noise = v.as_bool();
      else if (key == "iso_snr_min") sim.iso_snr_min = v.as_double();
      else if (key == "iso_snr_max") sim.iso_snr_max = v.as_double();
      else if (key == "min_separation_deg") sim.min_separation_deg = v.as_double();
      else if (key == "corpus") sim.corpus = v.raw();
      else if (key == "noise_corpus") sim.noise_corpus = v.raw();
      else unknown();
    } else if (section == "training") {
      TrainConfig& tr = cfg.training;
      if (key == "epochs") tr.epochs = v.as_int();
      else if (key == "chunks_per_epoch") tr.chunks_per_epoch = v.as_int();
      else if (key == "batch_chunks") tr.batch_chunks = v.as_int();
      else if (key == "validation_chunks") tr.validation_chunks = v.as_int();
      else if (key == "lr") tr.lr = v.as_double();
      else if (key == "lr_decay") tr.lr_decay = v.as_double();
      else if (key == "clip_norm") tr.clip_norm = v.as_double();
      else if (key == "staged_snr") tr.staged_snr = v.as_bool();
      else if (key == "symphonic") tr.symphonic = v.as_bool();
      else if (key == "beam_feature") tr.beam_feature = v.as_bool();
      else if (key == "wpe") tr.use_wpe = v.as_bool();
      else if (key == "seed") tr.seed = v.as_u64();
      else if (key == "workers") tr.workers = v.as_int();
      else if (key == "category") {
        if (value == "dereverb") tr.category = TrainConfig::Category::kDereverb;
        else if (value == "non-dereverb") tr.category = TrainConfig::Category::kNonDereverb;
        else v.fail("expected 'dereverb' or 'non-dereverb'");
      } else unknown();
    }
  }

  // assemble the shared pieces
  ArrayGeometry geom;
  if (have_positions) {
    geom.mic_positions = geom_positions;
    geom.speed_of_sound = geom_c;
  } else {
    geom = circular_array(geom_mics, geom_radius);
    geom.speed_of_sound = geom_c;
  }
  cfg.pipeline.geometry = geom;
  cfg.datasim.geometry = geom;
  cfg.datasim.sample_rate = cfg.pipeline.stft.sample_rate;
  cfg.pipeline.beam_feature = cfg.training.beam_feature;
  cfg.pipeline.wpe_mode =
      (cfg.training.category == TrainConfig::Category::kDereverb && cfg.training.use_wpe)
          ? WpeMode::kNetwork
          : WpeMode::kOff;

  try {
    cfg.pipeline.validate();
    cfg.datasim.validate();
    cfg.training.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(origin + ": invalid configuration: " + e.what());
  }
  return cfg;
}

ToolkitConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), path);
}

}  // namespace desep
