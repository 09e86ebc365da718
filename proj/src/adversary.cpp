#include "bnc/adversary.hpp"

#include <algorithm>

namespace bnc {

template <typename Scalar>
Tensor<Scalar> projection_logit(const Tensor<Scalar>& phi, const Tensor<Scalar>* cond, const LinearLayer<Scalar>& head,
                                const LinearLayer<Scalar>& embed) {
  if (phi.rank() != 2) throw ShapeError("projection_logit: phi must be [frames x F], got " + to_string(phi.shape()));
  const Index frames = phi.dim(0);
  Tensor<Scalar> logit = reshape(head(phi), {frames});
  if (cond == nullptr) return logit;
  const Tensor<Scalar> c = transpose(upsample_linear(transpose(*cond), frames));
  if (c.dim(0) != frames) throw ShapeError("projection_logit: resampled condition length mismatch");
  return logit + sum(embed(c) * phi, 1);
}

template <typename Scalar>
StftDiscriminator<Scalar>::StftDiscriminator(const ModelConfig& cfg, ParamStore<Scalar>& ps, std::mt19937_64& rng)
    : stft_(cfg.disc_stft) {
  const Index c = cfg.stft_disc_channels;
  stem_ = Conv2dLayer<Scalar>::make(ps, "stft.stem", 2, c, 3, 3, {.pad_h = 1, .pad_w = 1}, rng);
  for (int u = 0; u < kUnits; ++u) {
    const Index sh = u % 2 == 0 ? 1 : 2;
    const std::string name = "stft.unit" + std::to_string(u);
    units_.push_back({Conv2dLayer<Scalar>::make(ps, name + ".conv1", c, c, 3, 3, {.pad_h = 1, .pad_w = 1}, rng),
                      Conv2dLayer<Scalar>::make(ps, name + ".conv2", c, c, 3, 3,
                                                {.stride_h = sh, .stride_w = 2, .pad_h = 1, .pad_w = 1}, rng),
                      Conv2dLayer<Scalar>::make(ps, name + ".skip", c, c, 1, 1, {.stride_h = sh, .stride_w = 2},
                                                rng)});
  }
  head_ = Conv2dLayer<Scalar>::make(ps, "stft.head", c, 1, 3, 3, {.pad_h = 1, .pad_w = 1}, rng);
}

template <typename Scalar>
DiscOutput<Scalar> StftDiscriminator<Scalar>::operator()(const Tensor<Scalar>& y) const {
  if (y.rank() != 2 || y.dim(0) != 2) throw ShapeError("stft discriminator expects [2 x T], got " + to_string(y.shape()));
  const Index t = y.dim(1);
  const Tensor<Scalar> left = stft_magnitude(reshape(slice(y, 0, 0, 1), {t}), stft_);
  const Tensor<Scalar> right = stft_magnitude(reshape(slice(y, 0, 1, 1), {t}), stft_);
  const Index frames = left.dim(0), bins = left.dim(1);
  Tensor<Scalar> h = reshape(concat<Scalar>({left, right}, 0), {2, frames, bins});
  DiscOutput<Scalar> out;
  h = leaky_relu(stem_(h));
  out.features.push_back(h);
  for (const auto& u : units_) {
    h = leaky_relu(u.conv2(leaky_relu(u.conv1(h))) + u.skip(h));
    out.features.push_back(h);
  }
  out.logits = head_(h);
  return out;
}

template <typename Scalar>
ScaleDiscriminator<Scalar>::ScaleDiscriminator(const ModelConfig& cfg, ParamStore<Scalar>& ps, const std::string& name,
                                               std::mt19937_64& rng) {
  Index c = cfg.msd_channels;
  layers_.push_back(Conv1dLayer<Scalar>::make(ps, name + ".stem", 2, c, 15, {.padding = 7}, rng));
  for (int i = 0; i < kStrided; ++i) {
    const Index next = std::min(2 * c, cfg.msd_max_channels);
    const Conv1dOptions opt{.stride = 4, .padding = cfg.msd_kernel / 2, .groups = c / 16};
    layers_.push_back(Conv1dLayer<Scalar>::make(ps, name + ".down" + std::to_string(i), c, next, cfg.msd_kernel, opt,
                                                rng));
    c = next;
  }
  layers_.push_back(Conv1dLayer<Scalar>::make(ps, name + ".post", c, c, 5, {.padding = 2}, rng));
  head_ = LinearLayer<Scalar>::make(ps, name + ".head", c, 1, rng);
  embed_ = LinearLayer<Scalar>::make(ps, name + ".embed", kConditionDim, c, rng, 0.1);
}

template <typename Scalar>
DiscOutput<Scalar> ScaleDiscriminator<Scalar>::operator()(const Tensor<Scalar>& y, const Tensor<Scalar>* cond) const {
  DiscOutput<Scalar> out;
  Tensor<Scalar> h = y;
  for (const auto& l : layers_) {
    h = leaky_relu(l(h));
    out.features.push_back(h);
  }
  out.logits = projection_logit(transpose(h), cond, head_, embed_);
  return out;
}

template <typename Scalar>
MultiScaleDiscriminator<Scalar>::MultiScaleDiscriminator(const ModelConfig& cfg, ParamStore<Scalar>& ps,
                                                         std::mt19937_64& rng) {
  for (Index f : kFactors) scales_.emplace_back(cfg, ps, "msd.x" + std::to_string(f), rng);
}

template <typename Scalar>
std::vector<DiscOutput<Scalar>> MultiScaleDiscriminator<Scalar>::operator()(const Tensor<Scalar>& y,
                                                                           const Tensor<Scalar>* cond) const {
  if (y.rank() != 2 || y.dim(0) != 2) throw ShapeError("msd expects [2 x T], got " + to_string(y.shape()));
  std::vector<DiscOutput<Scalar>> out;
  for (std::size_t i = 0; i < scales_.size(); ++i) out.push_back(scales_[i](downsample_avg(y, kFactors[i]), cond));
  return out;
}

template <typename Scalar>
Discriminators<Scalar>::Discriminators(const ModelConfig& cfg, std::uint64_t seed, bool projection)
    : rng_(seed), stft_(cfg, params_, rng_), msd_(cfg, params_, rng_), projection_(projection) {}

template <typename Scalar>
std::vector<DiscOutput<Scalar>> Discriminators<Scalar>::operator()(const Tensor<Scalar>& y,
                                                                  const Tensor<Scalar>& cond) const {
  std::vector<DiscOutput<Scalar>> out{stft_(y)};
  auto scales = msd_(y, projection_ ? &cond : nullptr);
  for (auto& s : scales) out.push_back(std::move(s));
  return out;
}

#define BNC_INSTANTIATE_ADVERSARY(S)                                                                    \
  template Tensor<S> projection_logit<S>(const Tensor<S>&, const Tensor<S>*, const LinearLayer<S>&,     \
                                         const LinearLayer<S>&);                                        \
  template class StftDiscriminator<S>;                                                                  \
  template class ScaleDiscriminator<S>;                                                                 \
  template class MultiScaleDiscriminator<S>;                                                            \
  template class Discriminators<S>;

BNC_INSTANTIATE_ADVERSARY(float)
BNC_INSTANTIATE_ADVERSARY(double)

}  // namespace bnc
