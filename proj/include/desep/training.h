// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DESEP_TRAINING_H_
#define DESEP_TRAINING_H_

#include <string>
#include <vector>

#include "desep/autodiff.h"
#include "desep/datasim.h"
#include "desep/pipeline.h"

namespace desep {

struct TrainConfig {
  enum class Category { kNonDereverb, kDereverb };

  int epochs = 20;
  int chunks_per_epoch = 64;
  int batch_chunks = 4;
  int validation_chunks = 64;
  double lr = 1e-3;
  double lr_decay = 0.5;       // applied when validation loss goes up
  double clip_norm = 5.0;
  bool staged_snr = true;      // curriculum over SNR/SDR ranges
  bool symphonic = true;       // track-conditional loss routing
  bool beam_feature = true;    // steered-beam pathway (mirrored into the model)
  bool use_wpe = true;         // dereverberation front end, dereverb category only
  Category category = Category::kNonDereverb;
  uint64_t seed = 17;
  int workers = 1;

  void validate() const;
};

// Checkpoints are a text manifest `<path>` plus raw little-endian float32
// payload `<path>.bin`. Every array (parameters, running statistics,
// optimizer moments) is listed with name, shape and offset.
struct CheckpointMeta {
  int epoch = 0;               // last completed epoch
  int64_t step = 0;
  double lr = 0.0;
  double prev_val = 0.0;
  bool has_prev_val = false;
  std::string rng_state;
  std::string signature;
};

void save_checkpoint(const std::string& path, const ad::ParameterSet& params,
                     ad::Adam& adam, const CheckpointMeta& meta);
// The model must already be built with matching shapes; a signature or
// shape mismatch raises DataError.
CheckpointMeta load_checkpoint(const std::string& path, ad::ParameterSet* params,
                               ad::Adam* adam, const std::string& expected_signature);

class Trainer {
 public:
  Trainer(Model* model, TrainConfig config, SimulatorConfig sim_config);

  // Restores parameters, optimizer state and the draw stream so the run
  // continues exactly where the checkpoint left off.
  void resume(const std::string& checkpoint_path);

  // Full loop: per-epoch curriculum draws, batched steps, validation-driven
  // learning-rate decay, metrics.csv / val_metrics.csv and last.ckpt in
  // out_dir. A non-finite loss or gradient saves diagnostic.ckpt and
  // raises NumericalError.
  void run(const std::string& out_dir);

  // Pieces, exposed for focused tests and the toy-scale fit.
  std::vector<MixtureSpec> draw_epoch_specs(int epoch);
  std::vector<SimulatedChunk> simulate_all(const std::vector<MixtureSpec>& specs) const;
  std::vector<SimulatedChunk> validation_set() const;
  // One optimizer step over the batch; returns the mean chunk loss.
  double train_batch(const std::vector<SimulatedChunk>& chunks);
  double validation_loss(const std::vector<SimulatedChunk>& chunks);
  // Targets for the configured category: early-reflection images when
  // dereverberating, full reverberant images otherwise.
  const std::vector<Eigen::VectorXd>& targets_for(const SimulatedChunk& chunk) const;

  ad::Adam& optimizer() { return adam_; }
  Model& model() { return *model_; }
  const ChunkSimulator& simulator() const { return sim_; }
  int64_t step() const { return step_; }
  int next_epoch() const { return next_epoch_; }
  Rng& rng() { return rng_; }

 private:
  void write_metrics_row(std::ostream& out, int64_t step, int epoch, double loss);

  Model* model_;
  TrainConfig config_;
  ChunkSimulator sim_;
  std::vector<StageRow> schedule_;
  ad::Adam adam_;
  Rng rng_;
  int next_epoch_ = 1;
  int64_t step_ = 0;
  double prev_val_ = 0.0;
  bool has_prev_val_ = false;
};

}  // namespace desep

#endif  // DESEP_TRAINING_H_
