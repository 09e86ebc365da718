#include "bnc/trainer.hpp"

#include <cmath>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bnc/error.hpp"

namespace bnc {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t kDiscSeedSalt = 0xd15c0000d15cULL;
constexpr std::uint64_t kSamplerSeedSalt = 0x5a3b1e5a3b1eULL;

// Keys that may change between a checkpoint and its resumption.
bool resumable_override(const std::string& key) {
  return key == "train.steps" || key == "train.checkpoint_every";
}

}  // namespace

std::string to_string(Stage s) { return s == Stage::pretrain ? "pretrain" : "finetune"; }

Stage parse_stage(const std::string& s) {
  if (s == "pretrain") return Stage::pretrain;
  if (s == "finetune") return Stage::finetune;
  throw ConfigError("unknown training stage '" + s + "' (expected pretrain or finetune)");
}

void TrainConfig::validate(const ModelConfig& model) const {
  model.validate();
  if (steps < 1) throw ConfigError("train.steps must be >= 1");
  if (batch < 1) throw ConfigError("train.batch must be >= 1");
  const Index m = model.downsampling();
  if (clip_len < m || clip_len % m != 0)
    throw ConfigError("train.clip_len " + std::to_string(clip_len) + " must be a positive multiple of the hop " +
                      std::to_string(m));
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("train.beta1 and train.beta2 must lie in [0, 1)");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  if (stft_fft < 0 || stft_hop < 0 || n_mels < 0) throw ConfigError("spectral sizes must be >= 0");
  weights.validate();
  spectra(model).validate();
}

SpectralConfig TrainConfig::spectra(const ModelConfig& model) const {
  SpectralConfig s = SpectralConfig::for_rate(model.sample_rate);
  if (stft_fft > 0) {
    s.stft.fft_size = stft_fft;
    s.stft.hop = stft_fft / 4;
  }
  if (stft_hop > 0) s.stft.hop = stft_hop;
  if (n_mels > 0) s.mel.n_mels = n_mels;
  return s;
}

ModelConfig TrainConfig::effective_model(const ModelConfig& model) const {
  ModelConfig m = model;
  if (!partial_conditioning) m.film_blocks = m.blocks();
  return m;
}

void TrainConfig::set_ablation_level(int level) {
  if (level < 1 || level > 5) throw ConfigError("ablation level must lie in 1..5, got " + std::to_string(level));
  mel_loss = level >= 1;
  adversarial = level >= 2;
  mono_pretrain_init = level >= 3;
  partial_conditioning = level >= 4;
  projection_disc = level >= 5;
}

int TrainConfig::ablation_level() const {
  const bool on[5] = {mel_loss, adversarial, mono_pretrain_init, partial_conditioning, projection_disc};
  int level = 0;
  while (level < 5 && on[level]) ++level;
  for (int i = level; i < 5; ++i)
    if (on[i]) return -1;
  return level;
}

std::string TrainConfig::ablation_label() const {
  const bool on[5] = {mel_loss, adversarial, mono_pretrain_init, partial_conditioning, projection_disc};
  std::string s;
  for (int i = 0; i < 5; ++i)
    if (on[i]) s += (s.empty() ? "" : "+") + std::string(1, char('A' + i));
  return s.empty() ? "none" : s;
}

std::map<std::string, std::string> to_key_values(const TrainConfig& c) {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"train.stage", to_string(c.stage)},
      {"train.steps", std::to_string(c.steps)},
      {"train.batch", std::to_string(c.batch)},
      {"train.clip_len", std::to_string(c.clip_len)},
      {"train.lr", fmt(c.lr)},
      {"train.beta1", fmt(c.beta1)},
      {"train.beta2", fmt(c.beta2)},
      {"train.seed", std::to_string(c.seed)},
      {"train.checkpoint_every", std::to_string(c.checkpoint_every)},
      {"train.mel_loss", b(c.mel_loss)},
      {"train.adversarial", b(c.adversarial)},
      {"train.mono_pretrain_init", b(c.mono_pretrain_init)},
      {"train.partial_conditioning", b(c.partial_conditioning)},
      {"train.projection_disc", b(c.projection_disc)},
      {"train.w_diff", fmt(c.weights.diff)},
      {"train.w_pha", fmt(c.weights.pha)},
      {"train.w_adv", fmt(c.weights.adv)},
      {"train.w_fm", fmt(c.weights.fm)},
      {"train.w_mel", fmt(c.weights.mel)},
      {"train.stft_fft", std::to_string(c.stft_fft)},
      {"train.stft_hop", std::to_string(c.stft_hop)},
      {"train.n_mels", std::to_string(c.n_mels)},
  };
}

void apply_key_value(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "train.stage") c.stage = parse_stage(value);
  else if (key == "train.steps") c.steps = parse_index(key, value);
  else if (key == "train.batch") c.batch = parse_index(key, value);
  else if (key == "train.clip_len") c.clip_len = parse_index(key, value);
  else if (key == "train.lr") c.lr = parse_double(key, value);
  else if (key == "train.beta1") c.beta1 = parse_double(key, value);
  else if (key == "train.beta2") c.beta2 = parse_double(key, value);
  else if (key == "train.seed") {
    try {
      std::size_t used = 0;
      c.seed = std::stoull(value, &used);
      if (used != value.size() || value.find_first_not_of("0123456789") != std::string::npos)
        throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw ConfigError("'" + key + "' expects an unsigned integer, got '" + value + "'");
    }
  } else if (key == "train.checkpoint_every") c.checkpoint_every = parse_index(key, value);
  else if (key == "train.mel_loss") c.mel_loss = parse_bool(key, value);
  else if (key == "train.adversarial") c.adversarial = parse_bool(key, value);
  else if (key == "train.mono_pretrain_init") c.mono_pretrain_init = parse_bool(key, value);
  else if (key == "train.partial_conditioning") c.partial_conditioning = parse_bool(key, value);
  else if (key == "train.projection_disc") c.projection_disc = parse_bool(key, value);
  else if (key == "train.w_diff") c.weights.diff = parse_double(key, value);
  else if (key == "train.w_pha") c.weights.pha = parse_double(key, value);
  else if (key == "train.w_adv") c.weights.adv = parse_double(key, value);
  else if (key == "train.w_fm") c.weights.fm = parse_double(key, value);
  else if (key == "train.w_mel") c.weights.mel = parse_double(key, value);
  else if (key == "train.stft_fft") c.stft_fft = parse_index(key, value);
  else if (key == "train.stft_hop") c.stft_hop = parse_index(key, value);
  else if (key == "train.n_mels") c.n_mels = parse_index(key, value);
  else throw ConfigError("unknown training key '" + key + "'");
}

bool is_train_key(const std::string& key) { return to_key_values(TrainConfig{}).count(key) > 0; }

void apply_config(ModelConfig& model, TrainConfig& train, const std::map<std::string, std::string>& kv) {
  for (const auto& [k, v] : kv) {
    if (is_model_key(k)) apply_key_value(model, k, v);
    else if (is_train_key(k)) apply_key_value(train, k, v);
    else throw ConfigError("unknown configuration key '" + k + "'");
  }
}

// ---------------------------------------------------------------------------

template <typename Scalar>
void Adam<Scalar>::step(const ParamStore<Scalar>& params) {
  ++t_;
  const Scalar b1 = Scalar(b1_), b2 = Scalar(b2_), lr = Scalar(lr_), eps = Scalar(eps_);
  const Scalar c1 = Scalar(1.0 - std::pow(b1_, double(t_)));
  const Scalar c2 = Scalar(1.0 - std::pow(b2_, double(t_)));
  for (const auto& e : params.entries()) {
    if (!e.trainable || !e.tensor.has_grad()) continue;
    auto it = state_.find(e.name);
    if (it == state_.end())
      it = state_.emplace(e.name, Moments{Array<Scalar>::Zero(e.tensor.numel()), Array<Scalar>::Zero(e.tensor.numel())})
               .first;
    Moments& s = it->second;
    const Array<Scalar>& g = e.tensor.grad();
    s.m = b1 * s.m + (Scalar(1) - b1) * g;
    s.v = b2 * s.v + (Scalar(1) - b2) * g.square();
    e.tensor.mutable_data() -= lr * (s.m / c1) / ((s.v / c2).sqrt() + eps);
  }
}

template <typename Scalar>
void Adam<Scalar>::save(Archive& ar, const std::string& prefix) const {
  const bool wide = sizeof(Scalar) == 8;
  for (const auto& [name, s] : state_) {
    ar.put(prefix + name + ".m", {s.m.size()}, s.m.template cast<double>(), wide);
    ar.put(prefix + name + ".v", {s.v.size()}, s.v.template cast<double>(), wide);
  }
  ar.meta[prefix + "t"] = std::to_string(t_);
}

template <typename Scalar>
void Adam<Scalar>::load(const Archive& ar, const std::string& prefix, const ParamStore<Scalar>& params) {
  state_.clear();
  t_ = parse_index(prefix + "t", ar.meta_at(prefix + "t"));
  for (const auto& e : params.entries()) {
    if (!e.trainable || !ar.has(prefix + e.name + ".m")) continue;
    const auto& m = ar.get(prefix + e.name + ".m");
    const auto& v = ar.get(prefix + e.name + ".v");
    if (m.values.size() != e.tensor.numel() || v.values.size() != e.tensor.numel())
      throw DataError("optimizer state for '" + e.name + "' does not match the parameter size");
    state_[e.name] = Moments{m.values.template cast<Scalar>(), v.values.template cast<Scalar>()};
  }
}

// ---------------------------------------------------------------------------

template <typename Scalar>
Trainer<Scalar>::Trainer(const ModelConfig& model, const TrainConfig& train)
    : model_(train.effective_model(model)),
      train_(train),
      spectra_((train.validate(model_), train.spectra(model_))),
      gen_(model_, train.seed),
      disc_(model_, mix(train.seed ^ kDiscSeedSalt), train.projection_disc),
      gen_opt_(train.lr, train.beta1, train.beta2),
      disc_opt_(train.lr, train.beta1, train.beta2) {}

template <typename Scalar>
void Trainer<Scalar>::init_from_pretrain(const Archive& ar) {
  if (!ar.meta.count("stage") || ar.meta.at("stage") != to_string(Stage::pretrain))
    throw ConfigError("initialization checkpoint is not a pretrain checkpoint");
  for (const auto& e : gen_.params().entries()) {
    const std::string key = "gen." + e.name;
    if (ar.has(key)) ar.load_into(key, e.tensor);
    else if (e.name.find(".film.") == std::string::npos)
      throw DataError("pretrain checkpoint lacks generator parameter '" + e.name + "'");
  }
  gen_.codebooks().load(ar, "rvq.");
}

template <typename Scalar>
Example<Scalar> Trainer<Scalar>::pretrain_example(const Tensor<Scalar>& mono, const ModelConfig& model) {
  if (mono.rank() != 2 || mono.dim(0) != 1) throw ShapeError("mono input must be [1 x T], got " + to_string(mono.shape()));
  const Tensor<Scalar> x = mono.detach();
  return {x, concat<Scalar>({x, x}, 0), zero_condition<Scalar>(x.dim(1), model)};
}

template <typename Scalar>
LossWeights Trainer<Scalar>::active_weights() const {
  LossWeights w = train_.weights;
  if (!train_.mel_loss) w.mel = 0;
  if (!train_.adversarial) w.adv = w.fm = 0;
  return w;
}

template <typename Scalar>
StepResult Trainer<Scalar>::pretrain_step(const std::vector<Tensor<Scalar>>& mono_batch) {
  std::vector<Example<Scalar>> batch;
  for (const auto& x : mono_batch) batch.push_back(pretrain_example(x, model_));
  return step(batch);
}

template <typename Scalar>
StepResult Trainer<Scalar>::finetune_step(const std::vector<Example<Scalar>>& batch) {
  return step(batch);
}

template <typename Scalar>
StepResult Trainer<Scalar>::step(const std::vector<Example<Scalar>>& batch) {
  if (batch.empty()) throw ConfigError("training step needs at least one example");
  for (const auto& ex : batch)
    if (ex.target.rank() != 2 || ex.target.dim(0) != 2 || ex.mono.rank() != 2 || ex.mono.dim(0) != 1 ||
        ex.mono.dim(1) != ex.target.dim(1))
      throw ShapeError("training example needs mono [1 x T] and target [2 x T]");
  clear_tape<Scalar>();
  gen_.params().zero_grad();
  disc_.params().zero_grad();

  const Scalar inv_b = Scalar(1) / Scalar(batch.size());
  std::vector<Tensor<Scalar>> fakes;
  std::vector<RvqResult<Scalar>> rvq;
  for (const auto& ex : batch) {
    auto out = gen_.forward(ex.mono, ex.cond);
    fakes.push_back(out.audio);
    rvq.push_back(std::move(out.rvq));
  }

  StepResult result;
  for (const auto& ex : batch)
    if (ex.cond.frames.numel() > 0)
      result.cond_max_abs = std::max(result.cond_max_abs, double(ex.cond.frames.data().abs().maxCoeff()));
  if (train_.adversarial) {
    Tensor<Scalar> d_loss = Tensor<Scalar>::scalar(0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto real = disc_(batch[i].target.detach(), batch[i].cond.frames);
      const auto fake = disc_(fakes[i].detach(), batch[i].cond.frames);
      d_loss = d_loss + hinge_d(logits_of(real), logits_of(fake)) * inv_b;
    }
    result.d_loss = double(d_loss.item());
    if (!std::isfinite(result.d_loss))
      throw NumericError("non-finite discriminator loss " + fmt(result.d_loss) + " at step " +
                         std::to_string(step_ + 1));
    backward(d_loss);
    disc_opt_.step(disc_.params());
    disc_.params().zero_grad();
    result.disc_updated = true;
    if (hook_) hook_("disc");
  }

  LossTerms<Scalar> terms;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = batch[i];
    const Tensor<Scalar>& y_hat = fakes[i];
    terms.diff = terms.diff + l_diff(y_hat, ex.target) * inv_b;
    terms.pha = terms.pha + l_phase(y_hat, ex.target, spectra_.stft) * inv_b;
    if (train_.mel_loss) terms.mel = terms.mel + mel_loss(y_hat, ex.target, spectra_) * inv_b;
    if (train_.adversarial) {
      std::vector<DiscOutput<Scalar>> real;
      {
        NoGradGuard<Scalar> guard;
        real = disc_(ex.target.detach(), ex.cond.frames);
      }
      const auto fake = disc_(y_hat, ex.cond.frames);
      terms.adv = terms.adv + hinge_g(logits_of(fake)) * inv_b;
      terms.fm = terms.fm + feature_matching(features_of(real), features_of(fake)) * inv_b;
    }
  }
  const GeneratorLoss<Scalar> loss = total_generator_loss(terms, active_weights(), step_ + 1);
  backward(loss.total);
  gen_opt_.step(gen_.params());
  gen_.params().zero_grad();
  disc_.params().zero_grad();
  clear_tape<Scalar>();
  if (hook_) hook_("gen");

  ema_update(rvq);
  ++step_;
  result.report = loss.report;
  return result;
}

template <typename Scalar>
void Trainer<Scalar>::ema_update(const std::vector<RvqResult<Scalar>>& rvq) {
  RvqResult<Scalar> merged;
  Index rows = 0;
  for (const auto& r : rvq) rows += r.codes.frames();
  const Index layers = rvq.front().codes.layers();
  merged.codes.fingerprint = rvq.front().codes.fingerprint;
  merged.codes.indices.resize(rows, layers);
  merged.inputs.assign(std::size_t(layers), RowMatrix<Scalar>(rows, model_.latent_dim));
  Index at = 0;
  for (const auto& r : rvq) {
    const Index n = r.codes.frames();
    merged.codes.indices.middleRows(at, n) = r.codes.indices;
    for (Index l = 0; l < layers; ++l) merged.inputs[std::size_t(l)].middleRows(at, n) = r.inputs[std::size_t(l)];
    at += n;
  }
  ema_codebook_update(gen_.codebooks(), merged, model_.ema_decay);
}

template <typename Scalar>
LossReport Trainer<Scalar>::evaluate(const std::vector<Example<Scalar>>& batch) const {
  NoGradGuard<Scalar> guard;
  if (batch.empty()) throw ConfigError("evaluation needs at least one example");
  const Scalar inv_b = Scalar(1) / Scalar(batch.size());
  LossTerms<Scalar> terms;
  for (const auto& ex : batch) {
    const Tensor<Scalar> y_hat = gen_.forward(ex.mono, ex.cond).audio;
    terms.diff = terms.diff + l_diff(y_hat, ex.target) * inv_b;
    terms.pha = terms.pha + l_phase(y_hat, ex.target, spectra_.stft) * inv_b;
    terms.mel = terms.mel + mel_loss(y_hat, ex.target, spectra_) * inv_b;
  }
  LossWeights w = train_.weights;
  w.adv = w.fm = 0;
  return total_generator_loss(terms, w, step_).report;
}

template <typename Scalar>
Archive Trainer<Scalar>::checkpoint(const std::map<std::string, std::string>& extra) const {
  Archive ar;
  gen_.save(ar);
  disc_.save(ar);
  gen_opt_.save(ar, "opt.gen.");
  disc_opt_.save(ar, "opt.disc.");
  for (const auto& [k, v] : to_key_values(model_)) ar.meta[k] = v;
  for (const auto& [k, v] : to_key_values(train_)) ar.meta[k] = v;
  ar.meta["stage"] = to_string(train_.stage);
  ar.meta["step"] = std::to_string(step_);
  ar.meta["precision"] = sizeof(Scalar) == 8 ? "f64" : "f32";
  for (const auto& [k, v] : extra) ar.meta[k] = v;
  return ar;
}

template <typename Scalar>
void Trainer<Scalar>::restore(const Archive& ar) {
  if (ar.meta_at("stage") != to_string(train_.stage))
    throw ConfigError("checkpoint stage '" + ar.meta_at("stage") + "' does not match the configured stage '" +
                      to_string(train_.stage) + "'");
  auto check = [&](const std::map<std::string, std::string>& kv) {
    for (const auto& [k, v] : kv) {
      if (resumable_override(k)) continue;
      const std::string& stored = ar.meta_at(k);
      if (stored != v) throw ConfigError("checkpoint has " + k + "=" + stored + ", configuration has " + v);
    }
  };
  check(to_key_values(model_));
  check(to_key_values(train_));
  gen_.load(ar);
  disc_.load(ar);
  gen_opt_.load(ar, "opt.gen.", gen_.params());
  disc_opt_.load(ar, "opt.disc.", disc_.params());
  step_ = parse_index("step", ar.meta_at("step"));
}

// ---------------------------------------------------------------------------

CropSampler::CropSampler(std::vector<Index> clip_lengths, Index crop_len, std::uint64_t seed)
    : lengths_(std::move(clip_lengths)), crop_len_(crop_len), rng_(seed) {
  if (lengths_.empty()) throw DataError("training needs at least one clip");
  for (std::size_t i = 0; i < lengths_.size(); ++i)
    if (lengths_[i] < crop_len_)
      throw DataError("clip " + std::to_string(i) + " has " + std::to_string(lengths_[i]) +
                      " samples, shorter than the crop length " + std::to_string(crop_len_));
}

std::vector<Crop> CropSampler::next(Index batch) {
  std::vector<Crop> out;
  for (Index b = 0; b < batch; ++b) {
    Crop c;
    c.clip = std::uniform_int_distribution<std::size_t>(0, lengths_.size() - 1)(rng_);
    c.start = std::uniform_int_distribution<Index>(0, lengths_[c.clip] - crop_len_)(rng_);
    out.push_back(c);
  }
  return out;
}

std::string CropSampler::state() const {
  std::ostringstream s;
  s << rng_;
  return s.str();
}

void CropSampler::set_state(const std::string& s) {
  std::istringstream in(s);
  in >> rng_;
  if (!in) throw DataError("malformed sampler state in checkpoint");
}

template <typename Scalar>
Example<Scalar> make_example(const ClipRecord& clip, const Crop& crop, Index len, const ModelConfig& model,
                             Stage stage) {
  if (double(clip.mono.sample_rate) != model.sample_rate)
    throw DataError("clip '" + clip.id + "' is sampled at " + std::to_string(clip.mono.sample_rate) +
                    " Hz, the model expects " + fmt(model.sample_rate));
  if (crop.start < 0 || crop.start + len > clip.mono.frames())
    throw DataError("crop exceeds clip '" + clip.id + "'");
  const RowMatrix<float> m = clip.mono.samples.block(0, crop.start, 1, len);
  Array<Scalar> mv = Eigen::Map<const Array<float>>(m.data(), m.size()).template cast<Scalar>();
  const Tensor<Scalar> mono({1, len}, std::move(mv));
  if (stage == Stage::pretrain) return Trainer<Scalar>::pretrain_example(mono, model);
  if (!clip.has_binaural()) throw DataError("clip '" + clip.id + "' has no binaural target for fine-tuning");
  if (clip.binaural->frames() != clip.mono.frames())
    throw DataError("clip '" + clip.id + "' has mono and binaural audio of different lengths");
  const RowMatrix<float> t = clip.binaural->samples.block(0, crop.start, 2, len);
  Array<Scalar> tv = Eigen::Map<const Array<float>>(t.data(), t.size()).template cast<Scalar>();
  return {mono, Tensor<Scalar>({2, len}, std::move(tv)),
          make_condition<Scalar>(clip.track, len, model, double(crop.start) / model.sample_rate)};
}

template <typename Scalar>
RunResult run(const ModelConfig& model, const TrainConfig& train, const std::vector<ClipRecord>& clips,
              const RunOptions& opts) {
  Trainer<Scalar> trainer(model, train);
  std::vector<Index> lengths;
  for (const auto& c : clips) lengths.push_back(c.mono.frames());
  CropSampler sampler(lengths, train.clip_len, mix(train.seed ^ kSamplerSeedSalt));

  if (opts.resume) {
    trainer.restore(*opts.resume);
    sampler.set_state(opts.resume->meta_at("sampler"));
  } else if (train.stage == Stage::finetune && train.mono_pretrain_init) {
    if (!opts.init) throw ConfigError("mono_pretrain_init is on but no pretrain checkpoint was given");
    trainer.init_from_pretrain(*opts.init);
  }

  namespace fs = std::filesystem;
  std::ofstream trace;
  if (!opts.out_dir.empty()) {
    fs::create_directories(opts.out_dir);
    const fs::path path = fs::path(opts.out_dir) / kTraceFile;
    const bool append = opts.resume && fs::exists(path);
    trace.open(path, append ? std::ios::app : std::ios::trunc);
    if (!trace) throw DataError("cannot write " + path.string());
    if (!append) trace << LossReport::csv_header() << '\n';
  }
  auto save = [&](const std::string& name) {
    const Archive ar = trainer.checkpoint({{"sampler", sampler.state()}});
    if (!opts.out_dir.empty()) save_archive((fs::path(opts.out_dir) / name).string(), ar);
    return ar;
  };

  RunResult result;
  while (trainer.steps_done() < train.steps) {
    std::vector<Example<Scalar>> batch;
    for (const Crop& c : sampler.next(train.batch))
      batch.push_back(make_example<Scalar>(clips[c.clip], c, train.clip_len, trainer.model(), train.stage));
    const StepResult r = trainer.step(batch);
    if (trace.is_open()) trace << r.report.csv_line() << '\n' << std::flush;
    if (opts.on_step) opts.on_step(r);
    result.steps.push_back(r);
    if (train.checkpoint_every > 0 && trainer.steps_done() % train.checkpoint_every == 0 &&
        trainer.steps_done() < train.steps)
      save("step_" + std::to_string(trainer.steps_done()) + ".bnc");
  }
  result.final_checkpoint = save(kFinalCheckpoint);
  return result;
}

#define BNC_INSTANTIATE_TRAINER(S)                                                                          \
  template class Adam<S>;                                                                                   \
  template class Trainer<S>;                                                                                \
  template Example<S> make_example<S>(const ClipRecord&, const Crop&, Index, const ModelConfig&, Stage);    \
  template RunResult run<S>(const ModelConfig&, const TrainConfig&, const std::vector<ClipRecord>&,         \
                            const RunOptions&);

BNC_INSTANTIATE_TRAINER(float)
BNC_INSTANTIATE_TRAINER(double)

}  // namespace bnc
