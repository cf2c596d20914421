// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Command-line front end: simulate / wpe / features / train / separate /
// evaluate / att-dump. Exit codes: 0 success, 2 usage, 3 data, 4 numerical.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "desep/common.h"
#include "desep/config.h"
#include "desep/datasim.h"
#include "desep/dump.h"
#include "desep/losses.h"
#include "desep/pipeline.h"
#include "desep/spatial.h"
#include "desep/stft.h"
#include "desep/training.h"
#include "desep/wav.h"
#include "desep/wpe.h"

namespace desep {
namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::string fmt_short(double v) {
  std::ostringstream out;
  out << std::setprecision(6) << v;
  return out.str();
}

ToolkitConfig load_toolkit(const std::string& config_path) {
  if (config_path.empty()) return default_toolkit_config();
  return parse_config_file(config_path);
}

// [training] decides the pipeline wiring; redo it after CLI overrides.
void rewire(ToolkitConfig* tk) {
  tk->pipeline.beam_feature = tk->training.beam_feature;
  const bool dereverb = tk->training.category == TrainConfig::Category::kDereverb;
  tk->pipeline.wpe_mode =
      dereverb && tk->training.use_wpe ? WpeMode::kNetwork : WpeMode::kOff;
}

struct LoadedModel {
  ToolkitConfig toolkit;
  std::unique_ptr<Model> model;
  CheckpointMeta meta;
};

LoadedModel load_model(const std::string& config_path, const std::string& ckpt) {
  LoadedModel out;
  out.toolkit = load_toolkit(config_path);
  out.model = std::make_unique<Model>(out.toolkit.pipeline, out.toolkit.training.seed);
  ad::Adam scratch{ad::AdamConfig{}};
  out.meta = load_checkpoint(ckpt, &out.model->params(), &scratch,
                             config_signature(out.toolkit.pipeline));
  return out;
}

Eigen::VectorXd tensor_vector(const ad::Tensor& t) {
  return Eigen::Map<const Eigen::VectorXd>(t.value().data(), t.value().size());
}

Waveform read_wav_checked(const std::string& path) {
  if (!fs::exists(path)) throw DataError("no such file: " + path);
  return read_wav(path);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

// ---------------------------------------------------------------- simulate

// Level draw for a forced track: ranges come from the schedule row covering
// the epoch, or from the nearest row that carries the track.
ChunkDraw draw_for_track(const std::vector<StageRow>& schedule, int epoch,
                         bool staged, const std::string& track, Rng* rng) {
  if (track == "mix") return sample_stage(epoch, schedule, staged, rng);
  const StageRow* row = &schedule.back();
  if (staged) {
    for (const auto& r : schedule)
      if (epoch >= r.first_epoch && epoch <= r.last_epoch) {
        row = &r;
        break;
      }
  }
  ChunkDraw draw;
  if (track == "se") {
    draw.label = TrackLabel::kSe;
    draw.snr_db = row->se_lo + (row->se_hi - row->se_lo) * rng->uniform();
  } else if (track == "css") {
    const StageRow* r = row->has_css ? row : nullptr;
    if (!r)
      for (const auto& cand : schedule)
        if (cand.has_css) {
          r = &cand;
          break;
        }
    if (!r) throw DataError("simulate: no schedule row carries the css track");
    draw.label = TrackLabel::kCss;
    draw.sdr_db = r->css_lo + (r->css_hi - r->css_lo) * rng->uniform();
  } else if (track == "nss") {
    const StageRow* r = row->has_nss ? row : nullptr;
    if (!r)
      for (auto it = schedule.rbegin(); it != schedule.rend(); ++it)
        if (it->has_nss) {
          r = &*it;
          break;
        }
    if (!r) throw DataError("simulate: no schedule row carries the nss track");
    draw.label = TrackLabel::kNss;
    draw.snr_db = r->nss_snr_lo + (r->nss_snr_hi - r->nss_snr_lo) * rng->uniform();
    draw.sdr_db = r->nss_sdr_lo + (r->nss_sdr_hi - r->nss_sdr_lo) * rng->uniform();
  } else {
    throw std::invalid_argument("simulate: unknown track '" + track + "'");
  }
  return draw;
}

std::string index_name(const char* stem, int i, const char* suffix) {
  std::ostringstream out;
  out << stem << "_" << std::setfill('0') << std::setw(3) << i << suffix;
  return out.str();
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 int count, const std::string& track, int epoch, uint64_t seed,
                 bool early) {
  ToolkitConfig tk = load_toolkit(config_path);
  ChunkSimulator sim(tk.datasim);
  const bool staged = epoch >= 1;
  const int row_epoch = staged ? epoch : 1;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  Rng rng(seed);
  const auto schedule = default_schedule();

  std::ofstream manifest = open_out((fs::path(out_dir) / "manifest.txt").string());
  manifest << "# id track snr_db sdr_db doas_deg seed mixture references...\n";
  for (int i = 0; i < count; ++i) {
    ChunkDraw draw = draw_for_track(schedule, row_epoch, staged, track, &rng);
    MixtureSpec spec = sim.draw_spec(draw, &rng);
    SimulatedChunk chunk = sim.simulate(spec);

    const std::string mix_name = index_name("mix", i, ".wav");
    write_wav((fs::path(out_dir) / mix_name).string(), chunk.mixture);

    std::vector<std::string> ref_names;
    for (size_t c = 0; c < chunk.references.size(); ++c) {
      std::ostringstream stem;
      stem << "ref_" << std::setfill('0') << std::setw(3) << i << "_s" << (c + 1)
           << ".wav";
      Waveform ref;
      ref.sample_rate = tk.datasim.sample_rate;
      ref.samples = chunk.references[c].transpose();
      write_wav((fs::path(out_dir) / stem.str()).string(), ref);
      ref_names.push_back(stem.str());
      if (early) {
        std::ostringstream estem;
        estem << "early_" << std::setfill('0') << std::setw(3) << i << "_s"
              << (c + 1) << ".wav";
        Waveform er;
        er.sample_rate = tk.datasim.sample_rate;
        er.samples = chunk.early_references[c].transpose();
        write_wav((fs::path(out_dir) / estem.str()).string(), er);
      }
    }

    manifest << i << " " << track_name(spec.label) << " " << fmt(spec.snr_db) << " "
             << fmt(spec.sdr_db) << " ";
    for (size_t d = 0; d < spec.source_doas_deg.size(); ++d)
      manifest << (d ? "," : "") << fmt(spec.source_doas_deg[d]);
    manifest << " " << spec.seed << " " << mix_name;
    for (const auto& r : ref_names) manifest << " " << r;
    manifest << "\n";
  }
  manifest.close();
  std::cout << "simulate: wrote " << count << " chunk(s) to " << out_dir << "\n";
  return 0;
}

// --------------------------------------------------------------------- wpe

int cmd_wpe(const std::string& in_path, const std::string& out_path, int taps,
            int delay, int iterations, double loading, double floor, int fft,
            int hop, const std::string& ref_path, int workers) {
  Waveform wave = read_wav_checked(in_path);
  wave.validate();
  StftConfig stft_cfg;
  stft_cfg.fft_size = fft;
  stft_cfg.hop_size = hop;
  stft_cfg.sample_rate = wave.sample_rate;
  stft_cfg.validate();
  WpeConfig wpe_cfg;
  wpe_cfg.taps = taps;
  wpe_cfg.delay = delay;
  wpe_cfg.iterations = iterations;
  wpe_cfg.diagonal_loading = loading;
  wpe_cfg.variance_floor = floor;
  wpe_cfg.validate();

  Spectrogram spec = stft_multi(wave.samples, stft_cfg);
  auto [cleaned, filters] = iterative_wpe(spec, wpe_cfg, workers);
  Waveform out;
  out.sample_rate = wave.sample_rate;
  out.samples = istft_multi(cleaned, stft_cfg, static_cast<int>(wave.num_samples()));
  write_wav(out_path, out);

  const double pin = wave.samples.row(0).squaredNorm();
  const double pout = out.samples.row(0).squaredNorm();
  std::cout << "wpe: taps=" << taps << " delay=" << delay
            << " iterations=" << iterations << "\n";
  std::cout << "wpe: output/input power "
            << fmt_short(10.0 * std::log10((pout + 1e-30) / (pin + 1e-30)))
            << " dB\n";
  if (!ref_path.empty()) {
    Waveform ref = read_wav_checked(ref_path);
    const Eigen::Index n = std::min(ref.num_samples(), wave.num_samples());
    Eigen::VectorXd r = ref.samples.row(0).head(n);
    const double before = si_snr_db(wave.samples.row(0).head(n), r);
    const double after = si_snr_db(out.samples.row(0).head(n), r);
    std::cout << "wpe: si-snr " << fmt_short(before) << " dB -> " << fmt_short(after)
              << " dB (improvement " << fmt_short(after - before) << " dB)\n";
  }
  return 0;
}

// ---------------------------------------------------------------- features

int cmd_features(const std::string& config_path, const std::string& in_path,
                 const std::string& out_path, const std::string& kind) {
  ToolkitConfig tk = load_toolkit(config_path);
  Waveform wave = read_wav_checked(in_path);
  wave.validate();
  StftConfig stft_cfg = tk.pipeline.stft;
  if (wave.sample_rate != stft_cfg.sample_rate)
    throw DataError("features: input rate " + std::to_string(wave.sample_rate) +
                    " does not match configured rate " +
                    std::to_string(stft_cfg.sample_rate));
  Spectrogram spec = stft_multi(wave.samples, stft_cfg);

  const auto need_rig = [&] {
    if (wave.num_channels() != tk.pipeline.geometry.num_mics())
      throw DataError("features: input has " + std::to_string(wave.num_channels()) +
                      " channel(s) but the array has " +
                      std::to_string(tk.pipeline.geometry.num_mics()));
  };

  if (kind == "spec") {
    write_complex_dump(out_path, spec, stft_cfg);
  } else if (kind == "angle") {
    need_rig();
    AngleFeatureSet set =
        angle_features(spec, tk.pipeline.geometry,
                       doa_grid(tk.pipeline.attention.num_angle),
                       tk.pipeline.attention.pairs, stft_cfg);
    write_real_dump(out_path, set.features, stft_cfg);
  } else if (kind == "beam") {
    need_rig();
    BeamformerBank bank = design_das_bank(
        tk.pipeline.geometry, doa_grid(tk.pipeline.attention.num_beam), stft_cfg);
    write_complex_dump(out_path, beamform(spec, bank), stft_cfg);
  } else if (kind == "ipd") {
    need_rig();
    std::vector<Eigen::MatrixXd> maps;
    for (const auto& [m, n] : tk.pipeline.attention.pairs)
      maps.push_back(observed_ipd(spec, m, n));
    write_real_dump(out_path, maps, stft_cfg);
  } else {
    throw std::invalid_argument("features: unknown kind '" + kind + "'");
  }
  FeatureDumpHeader hdr = read_dump_header(out_path);
  std::cout << "features: " << kind << " " << hdr.items << " x " << hdr.rows
            << " x " << hdr.cols << (hdr.is_complex ? " complex" : " real")
            << " -> " << out_path << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::string& resume, const std::string& category,
              const std::vector<std::string>& ablate, int epochs, int64_t seed,
              int workers) {
  ToolkitConfig tk = load_toolkit(config_path);
  if (!category.empty()) {
    if (category == "dereverb")
      tk.training.category = TrainConfig::Category::kDereverb;
    else if (category == "non-dereverb")
      tk.training.category = TrainConfig::Category::kNonDereverb;
    else
      throw std::invalid_argument("train: unknown category '" + category + "'");
  }
  for (const auto& a : ablate) {
    if (a == "staged")
      tk.training.staged_snr = false;
    else if (a == "symphonic")
      tk.training.symphonic = false;
    else if (a == "beam")
      tk.training.beam_feature = false;
    else if (a == "wpe")
      tk.training.use_wpe = false;
    else
      throw std::invalid_argument("train: unknown ablation '" + a + "'");
  }
  if (epochs > 0) tk.training.epochs = epochs;
  if (seed >= 0) tk.training.seed = static_cast<uint64_t>(seed);
  if (workers > 0) tk.training.workers = workers;
  rewire(&tk);
  tk.training.validate();
  tk.pipeline.validate();

  Model model(tk.pipeline, tk.training.seed);
  Trainer trainer(&model, tk.training, tk.datasim);
  if (!resume.empty()) trainer.resume(resume);
  trainer.run(out_dir);
  std::cout << "train: finished epoch " << (trainer.next_epoch() - 1) << " at step "
            << trainer.step() << "; checkpoints in " << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------- separate

int cmd_separate(const std::string& config_path, const std::string& ckpt,
                 const std::string& in_path, const std::string& prefix) {
  LoadedModel lm = load_model(config_path, ckpt);
  Waveform wave = read_wav_checked(in_path);
  wave.validate();
  PipelineForward fwd = lm.model->forward(wave, /*train=*/false);
  for (size_t c = 0; c < fwd.speakers.size(); ++c) {
    Waveform out;
    out.sample_rate = wave.sample_rate;
    out.samples = tensor_vector(fwd.speakers[c].wave).transpose();
    const std::string path = prefix + "_s" + std::to_string(c + 1) + ".wav";
    write_wav(path, out);
    std::cout << "separate: wrote " << path << " (" << out.num_samples()
              << " samples)\n";
  }
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvalItem {
  std::string id;
  std::string track;
  std::string mix_path;
  std::vector<std::string> ref_paths;
};

std::vector<EvalItem> read_eval_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<EvalItem> items;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream row(line);
    EvalItem item;
    std::string snr, sdr, doas, seed, mix;
    if (!(row >> item.id)) continue;  // blank line
    if (!(row >> item.track >> snr >> sdr >> doas >> seed >> mix))
      throw DataError(path + ":" + std::to_string(lineno) + ": malformed row");
    item.mix_path = (base / mix).string();
    std::string ref;
    while (row >> ref) item.ref_paths.push_back((base / ref).string());
    if (item.ref_paths.empty())
      throw DataError(path + ":" + std::to_string(lineno) + ": no references");
    items.push_back(std::move(item));
  }
  if (items.empty()) throw DataError(path + ": empty manifest");
  return items;
}

int cmd_evaluate(const std::string& config_path, const std::string& ckpt,
                 const std::string& manifest_path, const std::string& out_path) {
  LoadedModel lm = load_model(config_path, ckpt);
  std::vector<EvalItem> items = read_eval_manifest(manifest_path);

  std::ostringstream csv;
  csv << "id,track,input_si_snr_db,output_si_snr_db,improvement_db\n";
  double sum_in = 0.0, sum_out = 0.0;
  for (const auto& item : items) {
    Waveform mix = read_wav_checked(item.mix_path);
    std::vector<Eigen::VectorXd> refs;
    for (const auto& rp : item.ref_paths) {
      Waveform r = read_wav_checked(rp);
      refs.push_back(r.samples.row(0));
    }
    PipelineForward fwd = lm.model->forward(mix, /*train=*/false);
    std::vector<Eigen::VectorXd> est;
    for (const auto& spk : fwd.speakers) est.push_back(tensor_vector(spk.wave));

    const Eigen::VectorXd mix0 = mix.samples.row(0);
    double in_db = 0.0, out_db = 0.0;
    if (refs.size() == 1) {
      in_db = si_snr_db(mix0, refs[0]);
      out_db = si_snr_db(est[0], refs[0]);
    } else {
      if (est.size() != refs.size())
        throw DataError("evaluate: " + item.id + " has " +
                        std::to_string(refs.size()) + " references but the model "
                        "outputs " + std::to_string(est.size()) + " branches");
      auto [loss, perm] = pit_si_snr_loss(est, refs);
      out_db = -loss;
      for (const auto& r : refs) in_db += si_snr_db(mix0, r);
      in_db /= static_cast<double>(refs.size());
    }
    sum_in += in_db;
    sum_out += out_db;
    csv << item.id << "," << item.track << "," << fmt_short(in_db) << ","
        << fmt_short(out_db) << "," << fmt_short(out_db - in_db) << "\n";
  }
  const double n = static_cast<double>(items.size());
  csv << "mean,all," << fmt_short(sum_in / n) << "," << fmt_short(sum_out / n) << ","
      << fmt_short((sum_out - sum_in) / n) << "\n";

  std::cout << csv.str();
  if (!out_path.empty()) {
    std::ofstream out = open_out(out_path);
    out << csv.str();
  }
  return 0;
}

// ---------------------------------------------------------------- att-dump

int cmd_att_dump(const std::string& config_path, const std::string& ckpt,
                 const std::string& in_path, const std::string& out_path,
                 int chunk_frames, bool beam) {
  LoadedModel lm = load_model(config_path, ckpt);
  if (beam && !lm.toolkit.pipeline.beam_feature)
    throw std::invalid_argument("att-dump: checkpoint was trained without the "
                                "steered-beam pathway");
  Waveform wave = read_wav_checked(in_path);
  wave.validate();

  std::vector<Waveform> segments;
  if (chunk_frames <= 0) {
    segments.push_back(wave);
  } else {
    const Eigen::Index seg = static_cast<Eigen::Index>(chunk_frames) *
                             lm.toolkit.pipeline.stft.hop_size;
    for (Eigen::Index start = 0; start + seg <= wave.num_samples(); start += seg) {
      Waveform w;
      w.sample_rate = wave.sample_rate;
      w.samples = wave.samples.middleCols(start, seg);
      segments.push_back(std::move(w));
    }
    if (segments.empty())
      throw DataError("att-dump: input shorter than one chunk of " +
                      std::to_string(chunk_frames) + " frames");
  }

  const std::vector<double>& grid =
      beam ? lm.model->bank().directions_deg : lm.model->angle_grid();
  std::ostringstream csv;
  csv << "chunk,speaker";
  for (double deg : grid) csv << "," << fmt_short(deg);
  csv << "\n";
  for (size_t k = 0; k < segments.size(); ++k) {
    PipelineForward fwd = lm.model->forward(segments[k], /*train=*/false);
    for (size_t c = 0; c < fwd.speakers.size(); ++c) {
      const ad::Tensor& w =
          beam ? fwd.speakers[c].beam_weights : fwd.speakers[c].angle_weights;
      csv << k << "," << (c + 1);
      for (Eigen::Index i = 0; i < w.value().size(); ++i)
        csv << "," << fmt(w.value()(i));
      csv << "\n";
    }
  }

  if (out_path.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream out = open_out(out_path);
    out << csv.str();
    std::cout << "att-dump: wrote " << (segments.size() *
                                        static_cast<size_t>(
                                            lm.toolkit.pipeline.network.num_speakers))
              << " row(s) to " << out_path << "\n";
  }
  return 0;
}

}  // namespace
}  // namespace desep

int main(int argc, char** argv) {
  using namespace desep;

  CLI::App app{"multi-channel dereverberation, enhancement and separation toolkit"};
  app.set_version_flag("--version", "desep 0.1.0");
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "synthesize mixture chunks");
  std::string sim_config, sim_out = "sim_out", sim_track = "mix";
  int sim_count = 1, sim_epoch = 0;
  uint64_t sim_seed = 1;
  bool sim_early = false;
  sim->add_option("--config", sim_config, "toolkit config file");
  sim->add_option("--out", sim_out, "output directory");
  sim->add_option("--count", sim_count, "number of chunks")->check(CLI::PositiveNumber);
  sim->add_option("--track", sim_track, "se | css | nss | mix")
      ->check(CLI::IsMember({"se", "css", "nss", "mix"}));
  sim->add_option("--epoch", sim_epoch, "curriculum row; 0 = final ranges");
  sim->add_option("--seed", sim_seed, "draw seed");
  sim->add_flag("--early", sim_early, "also write early-reflection references");

  // wpe
  auto* wpe = app.add_subcommand("wpe", "linear-prediction dereverberation");
  std::string wpe_in, wpe_out, wpe_ref;
  int wpe_taps = 10, wpe_delay = 3, wpe_iters = 3, wpe_fft = 512, wpe_hop = 256;
  int wpe_workers = 1;
  double wpe_loading = 1e-5, wpe_floor = 1e-8;
  wpe->add_option("--in", wpe_in, "input WAV")->required();
  wpe->add_option("--out", wpe_out, "output WAV")->required();
  wpe->add_option("--taps", wpe_taps, "filter length in frames");
  wpe->add_option("--delay", wpe_delay, "prediction delay in frames");
  wpe->add_option("--iters", wpe_iters, "alternation rounds");
  wpe->add_option("--loading", wpe_loading, "relative diagonal loading");
  wpe->add_option("--floor", wpe_floor, "variance floor");
  wpe->add_option("--fft", wpe_fft, "analysis size");
  wpe->add_option("--hop", wpe_hop, "analysis hop");
  wpe->add_option("--ref", wpe_ref, "clean reference WAV for an si-snr report");
  wpe->add_option("--workers", wpe_workers, "solver threads");

  // features
  auto* feat = app.add_subcommand("features", "dump analysis features");
  std::string feat_config, feat_in, feat_out, feat_kind = "spec";
  feat->add_option("--config", feat_config, "toolkit config file");
  feat->add_option("--in", feat_in, "input WAV")->required();
  feat->add_option("--out", feat_out, "output dump file")->required();
  feat->add_option("--kind", feat_kind, "spec | angle | beam | ipd")
      ->check(CLI::IsMember({"spec", "angle", "beam", "ipd"}));

  // train
  auto* train = app.add_subcommand("train", "fit the separation network");
  std::string train_config, train_out = "run", train_resume, train_category;
  std::vector<std::string> train_ablate;
  int train_epochs = 0, train_workers = 0;
  int64_t train_seed = -1;
  train->add_option("--config", train_config, "toolkit config file");
  train->add_option("--out", train_out, "run directory");
  train->add_option("--resume", train_resume, "checkpoint to continue from");
  train->add_option("--category", train_category, "dereverb | non-dereverb")
      ->check(CLI::IsMember({"dereverb", "non-dereverb"}));
  train->add_option("--ablate", train_ablate, "staged | symphonic | beam | wpe")
      ->check(CLI::IsMember({"staged", "symphonic", "beam", "wpe"}));
  train->add_option("--epochs", train_epochs, "override epoch count");
  train->add_option("--seed", train_seed, "override seed");
  train->add_option("--workers", train_workers, "parallel chunk builds");

  // separate
  auto* sep = app.add_subcommand("separate", "run the network on a mixture");
  std::string sep_config, sep_ckpt, sep_in, sep_prefix = "speaker";
  sep->add_option("--config", sep_config, "toolkit config file");
  sep->add_option("--checkpoint", sep_ckpt, "trained checkpoint")->required();
  sep->add_option("--in", sep_in, "input WAV")->required();
  sep->add_option("--out-prefix", sep_prefix, "output stem; _sN.wav is appended");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "score a checkpoint on a manifest");
  std::string eval_config, eval_ckpt, eval_manifest, eval_out;
  eval->add_option("--config", eval_config, "toolkit config file");
  eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
  eval->add_option("--manifest", eval_manifest, "simulate output manifest")->required();
  eval->add_option("--out", eval_out, "also write the CSV here");

  // att-dump
  auto* att = app.add_subcommand("att-dump", "dump attention weights as CSV");
  std::string att_config, att_ckpt, att_in, att_out;
  int att_chunk = 0;
  bool att_beam = false;
  att->add_option("--config", att_config, "toolkit config file");
  att->add_option("--checkpoint", att_ckpt, "trained checkpoint")->required();
  att->add_option("--in", att_in, "input WAV")->required();
  att->add_option("--out", att_out, "output CSV; stdout when omitted");
  att->add_option("--chunk-frames", att_chunk, "per-chunk weights, frames per chunk");
  att->add_flag("--beam", att_beam, "dump the steered-beam weights");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sim->parsed())
      return cmd_simulate(sim_config, sim_out, sim_count, sim_track, sim_epoch,
                          sim_seed, sim_early);
    if (wpe->parsed())
      return cmd_wpe(wpe_in, wpe_out, wpe_taps, wpe_delay, wpe_iters, wpe_loading,
                     wpe_floor, wpe_fft, wpe_hop, wpe_ref, wpe_workers);
    if (feat->parsed()) return cmd_features(feat_config, feat_in, feat_out, feat_kind);
    if (train->parsed())
      return cmd_train(train_config, train_out, train_resume, train_category,
                       train_ablate, train_epochs, train_seed, train_workers);
    if (sep->parsed()) return cmd_separate(sep_config, sep_ckpt, sep_in, sep_prefix);
    if (eval->parsed())
      return cmd_evaluate(eval_config, eval_ckpt, eval_manifest, eval_out);
    if (att->parsed())
      return cmd_att_dump(att_config, att_ckpt, att_in, att_out, att_chunk, att_beam);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
