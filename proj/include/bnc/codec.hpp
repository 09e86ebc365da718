#pragma once

// Transmitter side: convolutional encoder and residual vector quantizer.

#include <cstdint>
#include <random>
#include <vector>

#include "bnc/model_config.hpp"
#include "bnc/nn.hpp"

namespace bnc {

// Identifies the codec that produced a CodeGrid.
struct CodecFingerprint {
  std::uint32_t sample_rate = 0;
  std::vector<Index> strides;
  Index rvq_layers = 0;
  Index codebook_size = 0;

  static CodecFingerprint of(const ModelConfig& cfg);
  Index downsampling() const;
  Index codebook_bits() const;
  bool operator==(const CodecFingerprint&) const = default;
};

using IndexGrid = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct CodeGrid {
  IndexGrid indices;  // [L x N]
  CodecFingerprint fingerprint;

  Index frames() const { return indices.rows(); }
  Index layers() const { return indices.cols(); }
  bool operator==(const CodeGrid& o) const { return fingerprint == o.fingerprint && indices == o.indices; }
};

template <typename Scalar>
struct Codebooks {
  std::vector<RowMatrix<Scalar>> tables;  // N x [size x D]
  std::vector<Array<Scalar>> counts;      // EMA cluster sizes
  std::vector<RowMatrix<Scalar>> sums;    // EMA cluster sums

  static Codebooks uniform(Index layers, Index size, Index dim, std::mt19937_64& rng);

  Index layers() const { return static_cast<Index>(tables.size()); }
  Index size() const { return tables.empty() ? 0 : tables[0].rows(); }
  Index dim() const { return tables.empty() ? 0 : tables[0].cols(); }

  void save(Archive& ar, const std::string& prefix) const;
  void load(const Archive& ar, const std::string& prefix);
};

template <typename Scalar>
struct RvqResult {
  CodeGrid codes;
  Tensor<Scalar> quantized;              // [L x D], straight-through to z
  std::vector<double> residual_norms;    // mean L2 of the residual after each layer
  std::vector<RowMatrix<Scalar>> inputs; // residual entering each layer
};

// Greedy residual quantization with `layers` (<= 0: all) codebook layers.
template <typename Scalar>
RvqResult<Scalar> rvq_quantize(const Tensor<Scalar>& z, const Codebooks<Scalar>& books,
                               const CodecFingerprint& fingerprint, Index layers = 0);

template <typename Scalar>
Tensor<Scalar> rvq_dequantize(const CodeGrid& codes, const Codebooks<Scalar>& books);

// count <- decay*count + (1-decay)*n; sum <- decay*sum + (1-decay)*batch_sum;
// codeword <- sum/(count + 1e-5) for entries assigned in this batch.
template <typename Scalar>
void ema_codebook_update(Codebooks<Scalar>& books, const RvqResult<Scalar>& assignment, double decay);

inline constexpr double kEmaEpsilon = 1e-5;

// x + pointwise(elu(dilated_k7(elu(x)))), length preserving.
template <typename Scalar>
struct ResidualUnit {
  Conv1dLayer<Scalar> dilated, pointwise;

  static ResidualUnit make(ParamStore<Scalar>& ps, const std::string& name, Index channels, Index dilation,
                           std::mt19937_64& rng) {
    return {Conv1dLayer<Scalar>::make(ps, name + ".dilated", channels, channels, 7,
                                      {.dilation = dilation, .padding = 3 * dilation}, rng),
            Conv1dLayer<Scalar>::make(ps, name + ".pointwise", channels, channels, 1, {}, rng)};
  }

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return x + pointwise(elu(dilated(elu(x)))); }
};

inline constexpr Index kResidualDilations[3] = {1, 3, 9};

template <typename Scalar>
class Encoder {
 public:
  Encoder(const ModelConfig& cfg, ParamStore<Scalar>& ps, std::mt19937_64& rng);

  // x: [T] or [1 x T]; returns latents [ceil(T/M) x D].
  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const;

 private:
  struct Block {
    std::vector<ResidualUnit<Scalar>> units;
    Conv1dLayer<Scalar> down;
    Index stride;
  };

  Index hop_;
  Conv1dLayer<Scalar> input_;
  std::vector<Block> blocks_;
  Conv1dLayer<Scalar> output_;
};

}  // namespace bnc
