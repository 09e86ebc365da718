#include "bnc/binauralizer.hpp"

#include <cmath>

namespace bnc {

Eigen::Vector3d ear_position(const Pose& pose, int ear) {
  const double side = ear == 0 ? kEarOffset : -kEarOffset;
  return pose.rx_pos + pose.rx_rot * Eigen::Vector3d(0.0, side, 0.0);
}

RowMatrix<double> geometric_delays(const PoseTrack& track, Index num_samples, double sample_rate,
                                   double start_time) {
  RowMatrix<double> d(2, num_samples);
  for (Index t = 0; t < num_samples; ++t) {
    const Pose p = interpolate_pose(track, start_time + double(t) / sample_rate);
    for (int ear = 0; ear < 2; ++ear)
      d(ear, t) = (p.tx_pos - ear_position(p, ear)).norm() / kSpeedOfSound * sample_rate;
  }
  return d;
}

template <typename Scalar>
Tensor<Scalar> normalize_condition(const Tensor<Scalar>& raw, const ModelConfig& cfg) {
  if (raw.rank() != 2 || raw.dim(1) != kConditionDim)
    throw ShapeError("condition must be [len x 14], got " + to_string(raw.shape()));
  Array<Scalar> v = raw.data();
  const double ext[3] = {cfg.room_width, cfg.room_width, cfg.room_height};
  for (Index i = 0; i < raw.dim(0); ++i)
    for (Index base : {0, 7})
      for (Index k = 0; k < 3; ++k) {
        Scalar& x = v[i * kConditionDim + base + k];
        x = Scalar(2.0 * double(x) / ext[k] - 1.0);
      }
  return Tensor<Scalar>(raw.shape(), std::move(v));
}

Index condition_frames(Index num_samples, const ModelConfig& cfg) {
  return std::max<Index>(1, static_cast<Index>(std::ceil(double(num_samples) * cfg.cond_rate / cfg.sample_rate)));
}

template <typename Scalar>
Condition<Scalar> make_condition(const PoseTrack& track, Index num_samples, const ModelConfig& cfg,
                                 double start_time) {
  const Index len = condition_frames(num_samples, cfg);
  Condition<Scalar> c;
  c.frames = normalize_condition(resample_condition<Scalar>(track, len, cfg.cond_rate, start_time), cfg);
  c.delays = geometric_delays(track, num_samples, cfg.sample_rate, start_time);
  return c;
}

template <typename Scalar>
Condition<Scalar> zero_condition(Index num_samples, const ModelConfig& cfg) {
  Condition<Scalar> c;
  c.frames = Tensor<Scalar>::zeros({condition_frames(num_samples, cfg), Index(kConditionDim)});
  return c;
}

template <typename Scalar>
Tensor<Scalar> warp_positions(const Tensor<Scalar>& a, const RowMatrix<double>& delays) {
  if (a.rank() != 2 || a.dim(0) != 2 || delays.rows() != 2 || delays.cols() != a.dim(1))
    throw ShapeError("warp_positions: increments " + to_string(a.shape()) + " vs delays [" +
                     std::to_string(delays.rows()) + " x " + std::to_string(delays.cols()) + "]");
  const Index t = a.dim(1);
  Array<Scalar> scale = Array<Scalar>::Zero(2 * t), start = Array<Scalar>::Zero(2 * t), geometric(2 * t);
  for (Index ear = 0; ear < 2; ++ear) {
    start[ear * t] = geometric[ear * t] = Scalar(-delays(ear, 0));
    for (Index i = 1; i < t; ++i) {
      const Scalar gate = Scalar(std::max(0.0, 1.0 - (delays(ear, i) - delays(ear, i - 1))));
      scale[ear * t + i] = Scalar(2) * gate;
      geometric[ear * t + i] = geometric[ear * t + i - 1] + gate;
    }
  }
  const Tensor<Scalar> read =
      cumsum(sigmoid(a) * Tensor<Scalar>({2, t}, std::move(scale)) + Tensor<Scalar>({2, t}, std::move(start)));
  const Tensor<Scalar> correction = read - Tensor<Scalar>({2, t}, std::move(geometric));
  return clamp(add_channel_bias(read, mean(correction, 1) * Scalar(-1)), Scalar(0), Scalar(t - 1));
}

template <typename Scalar>
Decoder<Scalar>::Decoder(const ModelConfig& cfg, ParamStore<Scalar>& ps, std::mt19937_64& rng)
    : film_blocks_(cfg.film_blocks) {
  const Index nb = cfg.blocks();
  input_ = Conv1dLayer<Scalar>::make(ps, "dec.input", cfg.latent_dim, cfg.channels_at(nb), 7, {.padding = 3}, rng);
  for (Index j = 0; j < nb; ++j) {
    const Index c_in = cfg.channels_at(nb - j), c_out = cfg.channels_at(nb - 1 - j);
    const std::string name = "dec.block" + std::to_string(j);
    Block blk;
    blk.up = ConvTranspose1dLayer<Scalar>::make(ps, name + ".up", c_in, c_out, cfg.strides[std::size_t(nb - 1 - j)],
                                                rng);
    for (int u = 0; u < 3; ++u)
      blk.units.push_back(
          ResidualUnit<Scalar>::make(ps, name + ".res" + std::to_string(u), c_out, kResidualDilations[u], rng));
    if (j >= nb - film_blocks_)
      blk.film = LinearLayer<Scalar>::make(ps, name + ".film", cfg.cond_hidden, 2 * c_out, rng, 0.1);
    blocks_.push_back(std::move(blk));
  }
  output_ = Conv1dLayer<Scalar>::make(ps, "dec.output", cfg.base_channels, 2, 1, {}, rng);
}

template <typename Scalar>
Tensor<Scalar> Decoder<Scalar>::operator()(const Tensor<Scalar>& latents, const Tensor<Scalar>& cond_hidden) const {
  Tensor<Scalar> h = input_(transpose(latents));
  for (const auto& blk : blocks_) {
    h = blk.up(elu(h));
    for (const auto& u : blk.units) h = u(h);
    if (blk.film) {
      const Index c = h.dim(0);
      const Tensor<Scalar> gb = upsample_linear(transpose((*blk.film)(cond_hidden)), h.dim(1));
      h = film_apply(h, slice(gb, 0, 0, c) + Scalar(1), slice(gb, 0, c, c));
    }
  }
  return tanh(output_(elu(h)));
}

template <typename Scalar>
Generator<Scalar>::Generator(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_((cfg.validate(), cfg)),
      rng_(seed),
      encoder_(cfg_, params_, rng_),
      decoder_(cfg_, params_, rng_) {
  fourier_ = params_.add_fixed("cond.fourier",
                               gaussian_fourier_matrix<Scalar>(cfg_.fourier_features, cfg_.fourier_sigma, rng_));
  mlp_ = ConditionMlp<Scalar>::make(params_, "cond.mlp", 2 * cfg_.fourier_features, cfg_.cond_hidden, rng_);
  warp1_ = Conv1dLayer<Scalar>::make(params_, "warp.conv1", 2 * cfg_.fourier_features, cfg_.warp_hidden, 3,
                                     {.padding = 1}, rng_);
  warp2_ = Conv1dLayer<Scalar>::make(params_, "warp.conv2", cfg_.warp_hidden, 2, 3, {.padding = 1}, rng_, 0.0);
  books_ = Codebooks<Scalar>::uniform(cfg_.rvq_layers, cfg_.codebook_size, cfg_.latent_dim, rng_);
}

template <typename Scalar>
Tensor<Scalar> Generator<Scalar>::condition_hidden(const Condition<Scalar>& c) const {
  return mlp_(fourier_encode(c.frames, fourier_));
}

template <typename Scalar>
Tensor<Scalar> Generator<Scalar>::decode(const Tensor<Scalar>& latents, const Condition<Scalar>& c) const {
  return decoder_(latents, condition_hidden(c));
}

template <typename Scalar>
Tensor<Scalar> Generator<Scalar>::warp_field(const Condition<Scalar>& c, Index num_samples) const {
  if (!c.has_warp()) {
    Array<Scalar> p(2 * num_samples);
    for (Index t = 0; t < num_samples; ++t) p[t] = p[num_samples + t] = Scalar(t);
    return Tensor<Scalar>({2, num_samples}, std::move(p));
  }
  if (c.delays.cols() != num_samples)
    throw ShapeError("condition covers " + std::to_string(c.delays.cols()) + " samples, signal has " +
                     std::to_string(num_samples));
  const Tensor<Scalar> enc = transpose(fourier_encode(c.frames, fourier_));
  const Tensor<Scalar> a = upsample_linear(warp2_(relu(warp1_(enc))), num_samples);
  return warp_positions(a, c.delays);
}

template <typename Scalar>
Tensor<Scalar> Generator<Scalar>::render(const Tensor<Scalar>& latents, const Condition<Scalar>& c,
                                         Index num_samples) const {
  Tensor<Scalar> y = decode(latents, c);
  if (y.dim(1) < num_samples)
    throw ShapeError("decoded length " + std::to_string(y.dim(1)) + " shorter than " + std::to_string(num_samples));
  if (y.dim(1) != num_samples) y = slice(y, 1, 0, num_samples);
  if (!c.has_warp()) return y;
  return warp_apply(y, warp_field(c, num_samples));
}

template <typename Scalar>
typename Generator<Scalar>::Output Generator<Scalar>::forward(const Tensor<Scalar>& x,
                                                              const Condition<Scalar>& c) const {
  Output out;
  out.rvq = quantize(encode(x));
  out.audio = render(out.rvq.quantized, c, x.numel());
  return out;
}

template <typename Scalar>
Tensor<Scalar> Generator<Scalar>::binauralize(const CodeGrid& codes, const Condition<Scalar>& c,
                                              Index num_samples) const {
  if (!(codes.fingerprint == fingerprint()))
    throw ConfigError("code grid was produced by an incompatible codec configuration");
  return render(rvq_dequantize(codes, books_), c, num_samples);
}

template <typename Scalar>
void Generator<Scalar>::save(Archive& ar) const {
  params_.save(ar, "gen.");
  books_.save(ar, "rvq.");
}

template <typename Scalar>
void Generator<Scalar>::load(const Archive& ar) {
  params_.load(ar, "gen.");
  books_.load(ar, "rvq.");
}

#define BNC_INSTANTIATE_BINAURALIZER(S)                                                           \
  template Tensor<S> normalize_condition<S>(const Tensor<S>&, const ModelConfig&);                \
  template Condition<S> make_condition<S>(const PoseTrack&, Index, const ModelConfig&, double);   \
  template Condition<S> zero_condition<S>(Index, const ModelConfig&);                             \
  template Tensor<S> warp_positions<S>(const Tensor<S>&, const RowMatrix<double>&); \
  template class Decoder<S>;                                                                      \
  template class Generator<S>;

BNC_INSTANTIATE_BINAURALIZER(float)
BNC_INSTANTIATE_BINAURALIZER(double)

}  // namespace bnc
