// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "desep/training.h"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "desep/losses.h"

namespace desep {

namespace {

constexpr uint64_t kValidationStream = 0x7a11;

std::string fmt_double(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

void write_f32(std::ofstream& out, const Eigen::ArrayXd& values) {
  for (int64_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    out.write(reinterpret_cast<const char*>(&f), sizeof(float));
  }
}

Eigen::ArrayXd read_f32(std::ifstream& in, int64_t count, const std::string& what) {
  Eigen::ArrayXd values(count);
  for (int64_t i = 0; i < count; ++i) {
    float f = 0.0f;
    if (!in.read(reinterpret_cast<char*>(&f), sizeof(float)))
      throw DataError("checkpoint payload truncated while reading " + what);
    values[i] = static_cast<double>(f);
  }
  return values;
}

struct ArrayEntry {
  std::string name;
  ad::Shape shape;
  int64_t offset = 0;
  int64_t count = 0;
};

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("training: epochs must be >= 1");
  if (chunks_per_epoch < 1 || batch_chunks < 1 || validation_chunks < 1)
    throw std::invalid_argument("training: chunk counts must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("training: lr must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0))
    throw std::invalid_argument("training: lr_decay must be in (0, 1]");
  if (workers < 1) throw std::invalid_argument("training: workers must be >= 1");
}

void save_checkpoint(const std::string& path, const ad::ParameterSet& params,
                     ad::Adam& adam, const CheckpointMeta& meta) {
  std::vector<ArrayEntry> entries;
  int64_t offset = 0;
  auto list = [&](const std::string& name, const ad::Shape& shape, int64_t count) {
    entries.push_back({name, shape, offset, count});
    offset += count;
  };
  for (const std::string& name : params.names()) {
    ad::Tensor t = params.get(name);
    list(name, t.shape(), t.size());
  }
  for (const std::string& name : params.names()) {
    ad::Tensor t = params.get(name);
    if (!t.requires_grad()) continue;
    list("adam.m." + name, t.shape(), t.size());
    list("adam.v." + name, t.shape(), t.size());
  }

  std::ofstream mf(path);
  if (!mf) throw DataError("cannot write checkpoint manifest: " + path);
  mf << "DESEPCKPT 1\n";
  mf << "signature " << meta.signature << "\n";
  mf << "epoch " << meta.epoch << "\n";
  mf << "step " << meta.step << "\n";
  mf << "adam_steps " << adam.step_count() << "\n";
  mf << "lr " << fmt_double(meta.lr) << "\n";
  mf << "prev_val "
     << (meta.has_prev_val ? fmt_double(meta.prev_val) : std::string("none")) << "\n";
  mf << "rng " << meta.rng_state << "\n";
  mf << "arrays " << entries.size() << "\n";
  for (const ArrayEntry& e : entries) {
    mf << e.name << " f32 " << e.shape.size();
    for (int d : e.shape) mf << " " << d;
    mf << " " << e.offset << " " << e.count << "\n";
  }
  if (!mf) throw DataError("failed writing checkpoint manifest: " + path);
  mf.close();

  std::ofstream bf(path + ".bin", std::ios::binary);
  if (!bf) throw DataError("cannot write checkpoint payload: " + path + ".bin");
  auto& m = adam.first_moments();
  auto& v = adam.second_moments();
  for (const ArrayEntry& e : entries) {
    if (e.name.rfind("adam.m.", 0) == 0) {
      const std::string pname = e.name.substr(7);
      auto it = m.find(pname);
      write_f32(bf, it != m.end() ? it->second
                                  : Eigen::ArrayXd(Eigen::ArrayXd::Zero(e.count)));
    } else if (e.name.rfind("adam.v.", 0) == 0) {
      const std::string pname = e.name.substr(7);
      auto it = v.find(pname);
      write_f32(bf, it != v.end() ? it->second
                                  : Eigen::ArrayXd(Eigen::ArrayXd::Zero(e.count)));
    } else {
      write_f32(bf, params.get(e.name).value());
    }
  }
  if (!bf) throw DataError("failed writing checkpoint payload: " + path + ".bin");
}

CheckpointMeta load_checkpoint(const std::string& path, ad::ParameterSet* params,
                               ad::Adam* adam, const std::string& expected_signature) {
  std::ifstream mf(path);
  if (!mf) throw DataError("cannot open checkpoint manifest: " + path);
  std::string line;
  auto next_line = [&](const std::string& what) {
    if (!std::getline(mf, line))
      throw DataError("checkpoint manifest truncated before " + what + ": " + path);
    return line;
  };
  if (next_line("magic") != "DESEPCKPT 1")
    throw DataError("not a checkpoint manifest: " + path);

  CheckpointMeta meta;
  auto field = [&](const std::string& key) {
    next_line(key);
    if (line.rfind(key + " ", 0) != 0)
      throw DataError("checkpoint manifest: expected '" + key + "' line, got '" +
                      line + "'");
    return line.substr(key.size() + 1);
  };
  meta.signature = field("signature");
  if (meta.signature != expected_signature)
    throw DataError("checkpoint was written for a different configuration\n  theirs: " +
                    meta.signature + "\n  ours:   " + expected_signature);
  meta.epoch = std::stoi(field("epoch"));
  meta.step = std::stoll(field("step"));
  const int64_t adam_steps = std::stoll(field("adam_steps"));
  meta.lr = std::stod(field("lr"));
  const std::string pv = field("prev_val");
  meta.has_prev_val = pv != "none";
  if (meta.has_prev_val) meta.prev_val = std::stod(pv);
  meta.rng_state = field("rng");

  const int64_t count = std::stoll(field("arrays"));
  std::vector<ArrayEntry> entries;
  for (int64_t i = 0; i < count; ++i) {
    next_line("array row " + std::to_string(i));
    std::istringstream ls(line);
    ArrayEntry e;
    std::string dtype;
    int rank = 0;
    if (!(ls >> e.name >> dtype >> rank) || dtype != "f32" || rank < 0)
      throw DataError("checkpoint manifest: bad array row '" + line + "'");
    e.shape.resize(static_cast<size_t>(rank));
    for (int d = 0; d < rank; ++d)
      if (!(ls >> e.shape[static_cast<size_t>(d)]))
        throw DataError("checkpoint manifest: bad array row '" + line + "'");
    if (!(ls >> e.offset >> e.count))
      throw DataError("checkpoint manifest: bad array row '" + line + "'");
    entries.push_back(std::move(e));
  }

  std::ifstream bf(path + ".bin", std::ios::binary);
  if (!bf) throw DataError("cannot open checkpoint payload: " + path + ".bin");

  auto& m = adam->first_moments();
  auto& v = adam->second_moments();
  m.clear();
  v.clear();
  for (const ArrayEntry& e : entries) {
    bf.seekg(e.offset * static_cast<int64_t>(sizeof(float)));
    Eigen::ArrayXd values = read_f32(bf, e.count, e.name);
    if (e.name.rfind("adam.m.", 0) == 0) {
      m[e.name.substr(7)] = std::move(values);
    } else if (e.name.rfind("adam.v.", 0) == 0) {
      v[e.name.substr(7)] = std::move(values);
    } else {
      if (!params->contains(e.name))
        throw DataError("checkpoint holds unknown parameter '" + e.name + "'");
      ad::Tensor t = params->get(e.name);
      if (t.shape() != e.shape)
        throw DataError("checkpoint shape mismatch for '" + e.name + "': stored " +
                        ad::shape_str(e.shape) + ", model has " +
                        ad::shape_str(t.shape()));
      t.mutable_value() = std::move(values);
    }
  }
  adam->set_step_count(adam_steps);
  adam->set_lr(meta.lr);
  return meta;
}

Trainer::Trainer(Model* model, TrainConfig config, SimulatorConfig sim_config)
    : model_(model),
      config_(config),
      sim_(std::move(sim_config)),
      schedule_(default_schedule()),
      adam_([&] {
        ad::AdamConfig ac;
        ac.lr = config.lr;
        ac.clip_norm = config.clip_norm;
        return ac;
      }()),
      rng_(config.seed) {
  config_.validate();
}

void Trainer::resume(const std::string& checkpoint_path) {
  CheckpointMeta meta = load_checkpoint(checkpoint_path, &model_->params(), &adam_,
                                        config_signature(model_->config()));
  next_epoch_ = meta.epoch + 1;
  step_ = meta.step;
  prev_val_ = meta.prev_val;
  has_prev_val_ = meta.has_prev_val;
  rng_.load_state(meta.rng_state);
}

std::vector<MixtureSpec> Trainer::draw_epoch_specs(int epoch) {
  std::vector<MixtureSpec> specs;
  specs.reserve(static_cast<size_t>(config_.chunks_per_epoch));
  for (int i = 0; i < config_.chunks_per_epoch; ++i) {
    const ChunkDraw draw = sample_stage(epoch, schedule_, config_.staged_snr, &rng_);
    specs.push_back(sim_.draw_spec(draw, &rng_));
  }
  return specs;
}

std::vector<SimulatedChunk> Trainer::simulate_all(
    const std::vector<MixtureSpec>& specs) const {
  std::vector<SimulatedChunk> chunks(specs.size());
  parallel_for(static_cast<int64_t>(specs.size()), config_.workers,
               [&](int64_t i) { chunks[i] = sim_.simulate(specs[i]); });
  return chunks;
}

std::vector<SimulatedChunk> Trainer::validation_set() const {
  // reserved stream, final-row ranges: the held-out set never moves
  Rng vrng(mix_seed(config_.seed, kValidationStream));
  std::vector<MixtureSpec> specs;
  specs.reserve(static_cast<size_t>(config_.validation_chunks));
  for (int i = 0; i < config_.validation_chunks; ++i) {
    const ChunkDraw draw = sample_stage(1, schedule_, false, &vrng);
    specs.push_back(sim_.draw_spec(draw, &vrng));
  }
  return simulate_all(specs);
}

const std::vector<Eigen::VectorXd>& Trainer::targets_for(
    const SimulatedChunk& chunk) const {
  return config_.category == TrainConfig::Category::kDereverb
             ? chunk.early_references
             : chunk.references;
}

double Trainer::train_batch(const std::vector<SimulatedChunk>& chunks) {
  if (chunks.empty()) throw std::invalid_argument("training: empty batch");
  const int64_t n = static_cast<int64_t>(chunks.size());
  std::vector<std::unordered_map<std::string, Eigen::ArrayXd>> grads(
      static_cast<size_t>(n));
  std::vector<double> losses(static_cast<size_t>(n));
  parallel_for(n, config_.workers, [&](int64_t i) {
    PipelineForward fwd = model_->forward(chunks[static_cast<size_t>(i)].mixture, true);
    std::vector<ad::Tensor> waves;
    waves.reserve(fwd.speakers.size());
    for (const SpeakerOutput& s : fwd.speakers) waves.push_back(s.wave);
    ChunkLoss cl = symphonic_chunk_loss(chunks[static_cast<size_t>(i)].spec.label, waves,
                                        targets_for(chunks[static_cast<size_t>(i)]),
                                        config_.symphonic);
    losses[static_cast<size_t>(i)] = cl.loss.item();
    ad::Tensor scaled = ad::mul_scalar(cl.loss, 1.0 / static_cast<double>(n));
    ad::GradStore store = ad::backward(scaled);
    grads[static_cast<size_t>(i)] = ad::gradients_by_name(model_->params(), store, true);
  });

  double batch_loss = 0.0;
  for (double l : losses) batch_loss += l;
  batch_loss /= static_cast<double>(n);
  if (!std::isfinite(batch_loss)) {
    std::ostringstream msg;
    msg << "training: non-finite loss " << batch_loss << " (chunk losses:";
    for (size_t i = 0; i < losses.size(); ++i)
      msg << " " << losses[i] << "@seed=" << chunks[i].spec.seed;
    msg << ")";
    throw NumericalError(msg.str());
  }

  // merge in a fixed order, then check before touching the parameters
  std::unordered_map<std::string, Eigen::ArrayXd> total = std::move(grads[0]);
  for (int64_t i = 1; i < n; ++i)
    for (auto& [name, g] : grads[static_cast<size_t>(i)]) total[name] += g;
  for (const auto& [name, g] : total)
    if (!g.isFinite().all())
      throw NumericalError("training: non-finite gradient in '" + name + "'");

  adam_.step(&model_->params(), total);
  return batch_loss;
}

double Trainer::validation_loss(const std::vector<SimulatedChunk>& chunks) {
  if (chunks.empty()) throw std::invalid_argument("training: empty validation set");
  std::vector<double> losses(chunks.size());
  parallel_for(static_cast<int64_t>(chunks.size()), config_.workers, [&](int64_t i) {
    PipelineForward fwd = model_->forward(chunks[static_cast<size_t>(i)].mixture, false);
    std::vector<ad::Tensor> waves;
    for (const SpeakerOutput& s : fwd.speakers) waves.push_back(s.wave);
    ChunkLoss cl = symphonic_chunk_loss(chunks[static_cast<size_t>(i)].spec.label, waves,
                                        targets_for(chunks[static_cast<size_t>(i)]),
                                        config_.symphonic);
    losses[static_cast<size_t>(i)] = cl.loss.item();
  });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(losses.size());
}

void Trainer::write_metrics_row(std::ostream& out, int64_t step, int epoch,
                                double loss) {
  out << step << "," << epoch << "," << fmt_double(loss) << ","
      << fmt_double(adam_.lr()) << "\n";
}

void Trainer::run(const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::string metrics_path = out_dir + "/metrics.csv";
  const std::string val_path = out_dir + "/val_metrics.csv";
  const bool fresh = next_epoch_ == 1;
  std::ofstream metrics(metrics_path, fresh ? std::ios::trunc : std::ios::app);
  std::ofstream val_metrics(val_path, fresh ? std::ios::trunc : std::ios::app);
  if (!metrics || !val_metrics)
    throw DataError("cannot write metrics under " + out_dir);
  if (fresh) {
    metrics << "step,epoch,loss,lr\n";
    val_metrics << "step,epoch,loss,lr\n";
  }

  const std::vector<SimulatedChunk> val = validation_set();
  auto snapshot = [&](const std::string& name, int epoch) {
    CheckpointMeta meta;
    meta.epoch = epoch;
    meta.step = step_;
    meta.lr = adam_.lr();
    meta.prev_val = prev_val_;
    meta.has_prev_val = has_prev_val_;
    meta.rng_state = rng_.save_state();
    meta.signature = config_signature(model_->config());
    save_checkpoint(out_dir + "/" + name, model_->params(), adam_, meta);
  };

  for (int epoch = next_epoch_; epoch <= config_.epochs; ++epoch) {
    const std::vector<MixtureSpec> specs = draw_epoch_specs(epoch);
    const std::vector<SimulatedChunk> chunks = simulate_all(specs);
    for (size_t at = 0; at < chunks.size(); at += static_cast<size_t>(config_.batch_chunks)) {
      const size_t stop = std::min(chunks.size(), at + static_cast<size_t>(config_.batch_chunks));
      std::vector<SimulatedChunk> batch(chunks.begin() + static_cast<int64_t>(at),
                                        chunks.begin() + static_cast<int64_t>(stop));
      double loss = 0.0;
      try {
        loss = train_batch(batch);
      } catch (const NumericalError&) {
        snapshot("diagnostic.ckpt", epoch - 1);
        throw;
      }
      ++step_;
      write_metrics_row(metrics, step_, epoch, loss);
    }
    const double vloss = validation_loss(val);
    write_metrics_row(val_metrics, step_, epoch, vloss);
    if (has_prev_val_ && vloss > prev_val_) adam_.set_lr(adam_.lr() * config_.lr_decay);
    prev_val_ = vloss;
    has_prev_val_ = true;
    next_epoch_ = epoch + 1;
    snapshot("last.ckpt", epoch);
  }
  metrics.flush();
  val_metrics.flush();
}

}  // namespace desep
