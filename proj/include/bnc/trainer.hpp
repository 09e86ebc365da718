#pragma once

// Two-stage training: mono pretraining against duplicated targets with a
// zero condition, then binaural fine-tuning with alternating discriminator
// and generator updates.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bnc/adversary.hpp"
#include "bnc/binauralizer.hpp"
#include "bnc/checkpoint.hpp"
#include "bnc/dataset.hpp"
#include "bnc/objectives.hpp"

namespace bnc {

enum class Stage { pretrain, finetune };

std::string to_string(Stage s);
Stage parse_stage(const std::string& s);

struct TrainConfig {
  Stage stage = Stage::finetune;
  Index steps = 1000;
  Index batch = 1;
  Index clip_len = 16384;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  std::uint64_t seed = 0;
  Index checkpoint_every = 0;  // 0: final checkpoint only

  // Ablation components, cumulative in the order A..E.
  bool mel_loss = true;              // A
  bool adversarial = true;           // B: hinge + feature matching, discriminator updates
  bool mono_pretrain_init = true;    // C: fine-tuning starts from a pretrain checkpoint
  bool partial_conditioning = true;  // D: FiLM on the last K blocks only (off: every block)
  bool projection_disc = true;       // E: condition enters the waveform discriminators

  LossWeights weights = LossWeights::standard();
  Index stft_fft = 0;  // 0: chosen from the sample rate
  Index stft_hop = 0;
  Index n_mels = 0;

  void validate(const ModelConfig& model) const;
  SpectralConfig spectra(const ModelConfig& model) const;
  // Architecture actually trained: film_blocks widened to every block when
  // partial conditioning is off.
  ModelConfig effective_model(const ModelConfig& model) const;

  // Level 1..5 enables A, A+B, ..., A+B+C+D+E; the rest is unchanged.
  void set_ablation_level(int level);
  int ablation_level() const;  // -1 when the toggles are not a cumulative prefix
  std::string ablation_label() const;
};

std::map<std::string, std::string> to_key_values(const TrainConfig& cfg);
void apply_key_value(TrainConfig& cfg, const std::string& key, const std::string& value);
bool is_train_key(const std::string& key);

// Splits a flat key=value map into model.* and train.* settings.
void apply_config(ModelConfig& model, TrainConfig& train, const std::map<std::string, std::string>& kv);

template <typename Scalar>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps = 1e-8) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  // Updates every trainable tensor that holds a gradient.
  void step(const ParamStore<Scalar>& params);
  std::int64_t steps() const { return t_; }

  void save(Archive& ar, const std::string& prefix) const;
  void load(const Archive& ar, const std::string& prefix, const ParamStore<Scalar>& params);

 private:
  struct Moments {
    Array<Scalar> m, v;
  };
  double lr_, b1_, b2_, eps_;
  std::int64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

template <typename Scalar>
struct Example {
  Tensor<Scalar> mono;    // [1 x T]
  Tensor<Scalar> target;  // [2 x T]
  Condition<Scalar> cond;
};

struct StepResult {
  LossReport report;
  bool disc_updated = false;
  double d_loss = 0.0;          // hinge_d before the discriminator update
  double cond_max_abs = 0.0;    // largest condition entry fed to the generator
};

template <typename Scalar>
class Trainer {
 public:
  Trainer(const ModelConfig& model, const TrainConfig& train);

  const ModelConfig& model() const { return model_; }
  const TrainConfig& config() const { return train_; }
  const SpectralConfig& spectra() const { return spectra_; }
  Generator<Scalar>& generator() { return gen_; }
  const Generator<Scalar>& generator() const { return gen_; }
  Discriminators<Scalar>& discriminators() { return disc_; }
  std::int64_t steps_done() const { return step_; }

  // Called with "disc" and "gen" right after each optimizer sub-step.
  void set_substep_hook(std::function<void(const std::string&)> hook) { hook_ = std::move(hook); }

  // Generator parameters and codebooks from a pretrain checkpoint.
  void init_from_pretrain(const Archive& ar);

  // Duplicated-mono target, zero condition, warp bypassed.
  static Example<Scalar> pretrain_example(const Tensor<Scalar>& mono, const ModelConfig& model);

  StepResult pretrain_step(const std::vector<Tensor<Scalar>>& mono_batch);
  StepResult finetune_step(const std::vector<Example<Scalar>>& batch);
  StepResult step(const std::vector<Example<Scalar>>& batch);

  // Generator loss terms without any update.
  LossReport evaluate(const std::vector<Example<Scalar>>& batch) const;

  // Full training state; `extra` is merged into the metadata.
  Archive checkpoint(const std::map<std::string, std::string>& extra = {}) const;
  void restore(const Archive& ar);

 private:
  struct GenPass {
    LossTerms<Scalar> terms;
    std::vector<RvqResult<Scalar>> rvq;
  };
  GenPass generator_pass(const std::vector<Example<Scalar>>& batch) const;
  double discriminator_update(const std::vector<Example<Scalar>>& batch);
  void ema_update(const std::vector<RvqResult<Scalar>>& rvq);
  LossWeights active_weights() const;

  ModelConfig model_;
  TrainConfig train_;
  SpectralConfig spectra_;
  Generator<Scalar> gen_;
  Discriminators<Scalar> disc_;
  Adam<Scalar> gen_opt_, disc_opt_;
  std::int64_t step_ = 0;
  std::function<void(const std::string&)> hook_;
};

struct Crop {
  std::size_t clip = 0;
  Index start = 0;
};

// Uniform random clip choice and crop offset.
class CropSampler {
 public:
  CropSampler(std::vector<Index> clip_lengths, Index crop_len, std::uint64_t seed);
  std::vector<Crop> next(Index batch);

  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::vector<Index> lengths_;
  Index crop_len_;
  std::mt19937_64 rng_;
};

template <typename Scalar>
Example<Scalar> make_example(const ClipRecord& clip, const Crop& crop, Index len, const ModelConfig& model,
                             Stage stage);

struct RunOptions {
  std::string out_dir;                 // empty: nothing written
  std::optional<Archive> resume;       // continue a run of the same stage
  std::optional<Archive> init;         // pretrain checkpoint for fine-tuning
  std::function<void(const StepResult&)> on_step;
};

struct RunResult {
  Archive final_checkpoint;
  std::vector<StepResult> steps;  // this invocation only
};

inline constexpr const char* kTraceFile = "loss_trace.csv";
inline constexpr const char* kFinalCheckpoint = "final.bnc";

// Checkpoints land in out_dir as step_<n>.bnc and final.bnc; the loss trace
// is out_dir/loss_trace.csv.
template <typename Scalar>
RunResult run(const ModelConfig& model, const TrainConfig& train, const std::vector<ClipRecord>& clips,
              const RunOptions& opts = {});

}  // namespace bnc
