#pragma once

// RIFF/WAVE audio, 32-bit IEEE float little-endian on write.

#include <cstdint>
#include <string>

#include "bnc/bytes.hpp"
#include "bnc/tensor.hpp"

namespace bnc {

struct AudioBuffer {
  std::uint32_t sample_rate = 48000;
  RowMatrix<float> samples;  // [channels x frames]

  Index channels() const { return samples.rows(); }
  Index frames() const { return samples.cols(); }

  template <typename Scalar>
  Tensor<Scalar> tensor() const {
    return Tensor<Scalar>({channels(), frames()},
                          Eigen::Map<const Array<float>>(samples.data(), samples.size()).cast<Scalar>());
  }
  static AudioBuffer from_matrix(const RowMatrix<double>& m, std::uint32_t sample_rate);
  template <typename Scalar>
  static AudioBuffer from_tensor(const Tensor<Scalar>& t, std::uint32_t sample_rate) {
    if (t.rank() != 2) throw ShapeError("audio tensor must be [channels x frames], got " + to_string(t.shape()));
    return from_matrix(t.data().template cast<double>().reshaped(t.dim(1), t.dim(0)).transpose(), sample_rate);
  }
};

Bytes encode_wav(const AudioBuffer& audio);
// Accepts 32-bit float and 16-bit PCM; unknown chunks are skipped.
AudioBuffer decode_wav(const Bytes& bytes);

void write_wav(const std::string& path, const AudioBuffer& audio);
AudioBuffer read_wav(const std::string& path);

}  // namespace bnc
