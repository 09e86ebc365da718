#include "bnc/codec.hpp"

#include <limits>

namespace bnc {

CodecFingerprint CodecFingerprint::of(const ModelConfig& cfg) {
  return {static_cast<std::uint32_t>(cfg.sample_rate), cfg.strides, cfg.rvq_layers, cfg.codebook_size};
}

Index CodecFingerprint::downsampling() const {
  Index m = 1;
  for (Index s : strides) m *= s;
  return m;
}

Index CodecFingerprint::codebook_bits() const {
  Index bits = 0;
  while ((Index{1} << bits) < codebook_size) ++bits;
  return bits;
}

template <typename Scalar>
Codebooks<Scalar> Codebooks<Scalar>::uniform(Index layers, Index size, Index dim, std::mt19937_64& rng) {
  Codebooks b;
  std::uniform_real_distribution<double> u(-1.0 / double(size), 1.0 / double(size));
  for (Index n = 0; n < layers; ++n) {
    RowMatrix<Scalar> t(size, dim);
    for (Index i = 0; i < t.size(); ++i) t.data()[i] = Scalar(u(rng));
    b.tables.push_back(std::move(t));
    b.counts.push_back(Array<Scalar>::Zero(size));
    b.sums.push_back(RowMatrix<Scalar>::Zero(size, dim));
  }
  return b;
}

template <typename Scalar>
void Codebooks<Scalar>::save(Archive& ar, const std::string& prefix) const {
  const bool wide = sizeof(Scalar) == 8;
  for (Index n = 0; n < layers(); ++n) {
    const std::string p = prefix + std::to_string(n);
    ar.put(p + ".table", {size(), dim()}, Eigen::Map<const Array<Scalar>>(tables[n].data(), tables[n].size()).template cast<double>(), wide);
    ar.put(p + ".count", {size()}, counts[n].template cast<double>(), wide);
    ar.put(p + ".sum", {size(), dim()}, Eigen::Map<const Array<Scalar>>(sums[n].data(), sums[n].size()).template cast<double>(), wide);
  }
}

template <typename Scalar>
void Codebooks<Scalar>::load(const Archive& ar, const std::string& prefix) {
  for (Index n = 0; n < layers(); ++n) {
    const std::string p = prefix + std::to_string(n);
    auto fetch = [&](const std::string& name, const Shape& shape) {
      const auto& e = ar.get(name);
      if (e.shape != shape)
        throw DataError("checkpoint entry '" + name + "' has shape " + to_string(e.shape) + ", expected " +
                        to_string(shape));
      return e.values.cast<Scalar>().eval();
    };
    const Array<Scalar> t = fetch(p + ".table", {size(), dim()});
    const Array<Scalar> s = fetch(p + ".sum", {size(), dim()});
    tables[n] = Eigen::Map<const RowMatrix<Scalar>>(t.data(), size(), dim());
    sums[n] = Eigen::Map<const RowMatrix<Scalar>>(s.data(), size(), dim());
    counts[n] = fetch(p + ".count", {size()});
  }
}

template <typename Scalar>
RvqResult<Scalar> rvq_quantize(const Tensor<Scalar>& z, const Codebooks<Scalar>& books,
                               const CodecFingerprint& fingerprint, Index layers) {
  if (z.rank() != 2 || z.dim(1) != books.dim())
    throw ShapeError("rvq_quantize: latents " + to_string(z.shape()) + " do not match codebook dimension " +
                     std::to_string(books.dim()));
  const Index n_layers = layers <= 0 ? books.layers() : std::min(layers, books.layers());
  const Index len = z.dim(0), d = z.dim(1), k = books.size();
  RvqResult<Scalar> r;
  r.codes.fingerprint = fingerprint;
  r.codes.indices = IndexGrid::Zero(len, n_layers);
  RowMatrix<Scalar> residual = z.matrix();
  RowMatrix<Scalar> quantized = RowMatrix<Scalar>::Zero(len, d);
  for (Index n = 0; n < n_layers; ++n) {
    r.inputs.push_back(residual);
    const auto& table = books.tables[n];
    double norm_sum = 0.0;
    for (Index i = 0; i < len; ++i) {
      Index best = 0;
      Scalar best_d = std::numeric_limits<Scalar>::infinity();
      for (Index j = 0; j < k; ++j) {
        const Scalar dist = (residual.row(i) - table.row(j)).squaredNorm();
        if (dist < best_d) {
          best_d = dist;
          best = j;
        }
      }
      r.codes.indices(i, n) = static_cast<std::int32_t>(best);
      quantized.row(i) += table.row(best);
      residual.row(i) -= table.row(best);
      norm_sum += double(residual.row(i).norm());
    }
    r.residual_norms.push_back(len > 0 ? norm_sum / double(len) : 0.0);
  }
  r.quantized = straight_through(z, Tensor<Scalar>(z.shape(), Eigen::Map<const Array<Scalar>>(quantized.data(), quantized.size())));
  return r;
}

template <typename Scalar>
Tensor<Scalar> rvq_dequantize(const CodeGrid& codes, const Codebooks<Scalar>& books) {
  if (codes.layers() > books.layers())
    throw DataError("code grid has " + std::to_string(codes.layers()) + " layers, codebooks have " +
                    std::to_string(books.layers()));
  const Index len = codes.frames(), d = books.dim();
  RowMatrix<Scalar> q = RowMatrix<Scalar>::Zero(len, d);
  for (Index n = 0; n < codes.layers(); ++n)
    for (Index i = 0; i < len; ++i) {
      const auto idx = codes.indices(i, n);
      if (idx < 0 || idx >= books.size())
        throw DataError("code index " + std::to_string(idx) + " at frame " + std::to_string(i) + ", layer " +
                        std::to_string(n) + " is outside the codebook");
      q.row(i) += books.tables[n].row(idx);
    }
  return Tensor<Scalar>({len, d}, Eigen::Map<const Array<Scalar>>(q.data(), q.size()));
}

template <typename Scalar>
void ema_codebook_update(Codebooks<Scalar>& books, const RvqResult<Scalar>& a, double decay) {
  if (decay < 0.0 || decay > 1.0) throw ConfigError("EMA decay must lie in [0, 1]");
  if (decay == 1.0) return;
  const Scalar g = Scalar(decay), h = Scalar(1.0 - decay);
  for (Index n = 0; n < a.codes.layers(); ++n) {
    const Index k = books.size(), d = books.dim();
    Array<Scalar> batch_count = Array<Scalar>::Zero(k);
    RowMatrix<Scalar> batch_sum = RowMatrix<Scalar>::Zero(k, d);
    for (Index i = 0; i < a.codes.frames(); ++i) {
      const auto idx = a.codes.indices(i, n);
      batch_count[idx] += Scalar(1);
      batch_sum.row(idx) += a.inputs[n].row(i);
    }
    books.counts[n] = g * books.counts[n] + h * batch_count;
    books.sums[n] = g * books.sums[n] + h * batch_sum;
    for (Index j = 0; j < k; ++j)
      if (batch_count[j] > 0 && books.counts[n][j] > 0)
        books.tables[n].row(j) = books.sums[n].row(j) / (books.counts[n][j] + Scalar(kEmaEpsilon));
  }
}

template <typename Scalar>
Encoder<Scalar>::Encoder(const ModelConfig& cfg, ParamStore<Scalar>& ps, std::mt19937_64& rng)
    : hop_(cfg.downsampling()) {
  input_ = Conv1dLayer<Scalar>::make(ps, "enc.input", 1, cfg.base_channels, 7, {.padding = 3}, rng);
  for (Index b = 0; b < cfg.blocks(); ++b) {
    const Index c = cfg.channels_at(b), s = cfg.strides[std::size_t(b)];
    const std::string name = "enc.block" + std::to_string(b);
    Block blk;
    for (int u = 0; u < 3; ++u)
      blk.units.push_back(
          ResidualUnit<Scalar>::make(ps, name + ".res" + std::to_string(u), c, kResidualDilations[u], rng));
    blk.down = Conv1dLayer<Scalar>::make(ps, name + ".down", c, 2 * c, 2 * s, {.stride = s, .padding = (s + 1) / 2},
                                         rng);
    blk.stride = s;
    blocks_.push_back(std::move(blk));
  }
  output_ = Conv1dLayer<Scalar>::make(ps, "enc.output", cfg.channels_at(cfg.blocks()), cfg.latent_dim, 1, {}, rng);
}

template <typename Scalar>
Tensor<Scalar> Encoder<Scalar>::operator()(const Tensor<Scalar>& x) const {
  if (x.rank() == 2 && x.dim(0) != 1)
    throw ShapeError("encode: expected mono input, got " + std::to_string(x.dim(0)) + " channels");
  if (x.rank() > 2 || x.numel() == 0 || (x.rank() == 0))
    throw ShapeError("encode: expected a non-empty mono signal, got " + to_string(x.shape()));
  const Index t = x.numel();
  const Index padded = (t + hop_ - 1) / hop_ * hop_;
  Tensor<Scalar> h = pad(reshape(x, {1, t}), 1, 0, padded - t);
  h = input_(h);
  for (const auto& blk : blocks_) {
    for (const auto& u : blk.units) h = u(h);
    const Index target = h.dim(1) / blk.stride;
    h = blk.down(elu(h));
    if (h.dim(1) != target) h = slice(h, 1, 0, target);
  }
  return transpose(output_(elu(h)));
}

#define BNC_INSTANTIATE_CODEC(S)                                                                              \
  template struct Codebooks<S>;                                                                               \
  template RvqResult<S> rvq_quantize<S>(const Tensor<S>&, const Codebooks<S>&, const CodecFingerprint&, Index); \
  template Tensor<S> rvq_dequantize<S>(const CodeGrid&, const Codebooks<S>&);                                 \
  template void ema_codebook_update<S>(Codebooks<S>&, const RvqResult<S>&, double);                          \
  template class Encoder<S>;

BNC_INSTANTIATE_CODEC(float)
BNC_INSTANTIATE_CODEC(double)

}  // namespace bnc
