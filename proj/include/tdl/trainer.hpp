#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tdl/config.hpp"
#include "tdl/dataset.hpp"
#include "tdl/encoder.hpp"
#include "tdl/eval.hpp"
#include "tdl/losses.hpp"
#include "tdl/model.hpp"
#include "tdl/pseudo.hpp"
#include "tdl/rng.hpp"

namespace tdl {

/* Defaults are the desk-scale setup: 200 steps of batch 16 over 256 images. */
struct TrainConfig {
  Index epochs = 13;
  Index max_steps = 200;  // 0: no cap beyond epochs
  Index batch_size = 16;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double weight_decay = 0.0;
  LossWeights weights;
  SamplerConfig sampler = desk_sampler();  // zero counts mean SamplerConfig::defaults_for
  double temperature = 1.0;
  bool normalize = true;
  bool mean_over_patches = false;
  Index upscale = 2;
  Index embed_dim = 0;  // 0: the anchor dimension
  std::uint64_t seed = 7;
  Index jobs = 1;
  Index state_every = 0;  // also save the resumable state every N steps
  EvalConfig eval;
  std::string encoder = "synthetic";
  std::string anchors;  // anchor file; empty means <manifest dir>/anchors.tdla
  std::vector<LossWeights> lambda_grid;

  static SamplerConfig desk_sampler() {
    SamplerConfig s;
    s.n_fg = 32;
    s.n_bg = 128;
    s.samples_per_side = 10;
    return s;
  }

  void validate() const;
  void apply(const KeyValues& kv);
  KeyValues to_key_values() const;

  ModelConfig model_config(Index input_dim, Index anchor_dim) const;
  LossOptions loss_options() const;
};

/* Everything needed to continue training bit-exactly. */
struct TrainState {
  std::int64_t step = 0;
  Index epoch = 0;   // completed epochs
  Index cursor = 0;  // position within the current epoch order
  std::vector<Index> order;
  ModelParameters<double> params;
  ModelParameters<double> momentum;
  Rng rng;
  std::vector<LossBreakdown> history;
  std::vector<double> val_history;  // validation MaxBoxAcc per evaluation point
  double best_metric = -1.0;
  std::int64_t best_step = -1;
  ModelParameters<double> best_params;

  void save(const std::filesystem::path& path) const;
  static TrainState load(const std::filesystem::path& path);
};

bool operator==(const ModelParameters<double>& a, const ModelParameters<double>& b);

using StepHook = std::function<bool(const TrainState&, const LossBreakdown&, bool evaluated)>;

class Trainer {
 public:
  Trainer(TrainConfig cfg, AnchorSet<double> anchors, std::vector<Sample> train,
          std::vector<Sample> val, const Encoder& encoder);

  const TrainConfig& config() const { return cfg_; }
  const ModelConfig& model() const { return model_; }
  const AnchorSet<double>& anchors() const { return anchors_; }
  const SamplerConfig& sampler() const { return sampler_; }
  Index steps_per_epoch() const;
  std::int64_t total_steps() const;

  TrainState initial_state() const;

  /* One SGD step on the given training indices: resamples pseudo-labels for
   * every image, averages the objective over the batch and updates decoder and
   * classifier. Throws MissingCam or NonFiniteLoss. */
  LossBreakdown train_step(TrainState& state, const std::vector<Index>& batch) const;

  /// Takes the next batch of the epoch order, reshuffling at epoch start.
  std::vector<Index> next_batch(TrainState& state) const;

  /// Batch-mean objective with pseudo-labels drawn from `rng`; no update.
  LossBreakdown batch_loss(const ModelParameters<double>& params, const std::vector<Index>& batch,
                           Rng& rng) const;

  double validate(const ModelParameters<double>& params) const;

  /* Runs until total_steps(). Validation happens at every epoch end and at
   * the final step; the best-scoring parameters are kept (ties go to the later
   * step). The hook runs after every step and stops training when it returns false. */
  void fit(TrainState& state, const StepHook& hook = {}) const;

  const std::vector<EncoderOutput<double>>& train_inputs() const { return train_inputs_; }

 private:
  TrainConfig cfg_;
  ModelConfig model_;
  AnchorSet<double> anchors_;
  SamplerConfig sampler_;
  std::vector<Sample> train_;
  std::vector<Sample> val_;
  std::vector<EncoderOutput<double>> train_inputs_;
  std::vector<EncoderOutput<double>> val_inputs_;
  std::vector<Eigen::MatrixXd> pooled_cams_;  // CAMs pooled to the decoded grid
};

struct TrainOutcome {
  io::Checkpoint best;
  double best_metric = 0.0;
  LossWeights weights;
  std::filesystem::path checkpoint_path;
};

/* Trains on the "train" split of the manifest, validates on "val", and writes
 * into out_dir: train_log.jsonl, checkpoint_epoch_NNN.tdlc, state.tdlc and
 * model.tdlc (the selected model). With a lambda grid every candidate trains
 * in its own subdirectory and model.tdlc holds the best of them. */
TrainOutcome train(const std::filesystem::path& manifest, const TrainConfig& cfg,
                   const std::filesystem::path& out_dir,
                   const std::optional<std::filesystem::path>& resume = std::nullopt);

/// "1,1,1;1,0.5,0.5" -> two weight triples.
std::vector<LossWeights> parse_lambda_grid(const std::string& text);

}  // namespace tdl
