#include "bnc/objectives.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "bnc/error.hpp"
#include "bnc/ops.hpp"

namespace bnc {

void LossWeights::validate() const {
  const std::pair<const char*, double> all[] = {{"diff", diff}, {"pha", pha}, {"adv", adv}, {"fm", fm}, {"mel", mel}};
  for (const auto& [name, v] : all)
    if (!std::isfinite(v) || v < 0.0)
      throw ConfigError(std::string("loss weight ") + name + " must be finite and >= 0, got " + std::to_string(v));
}

SpectralConfig SpectralConfig::for_rate(double sample_rate) {
  SpectralConfig cfg;
  Index fft = 64;
  while (double(fft) < sample_rate * 1024.0 / 48000.0) fft *= 2;
  cfg.stft = {fft, fft / 4};
  cfg.mel.sample_rate = sample_rate;
  for (cfg.mel.n_mels = 80; cfg.mel.n_mels > 8; cfg.mel.n_mels -= 8) {
    try {
      cfg.mel.validate(cfg.stft);
      break;
    } catch (const ConfigError&) {
    }
  }
  return cfg;
}

void SpectralConfig::validate() const {
  stft.validate();
  mel.validate(stft);
}

double LossReport::weighted_sum(const LossWeights& w) const {
  return w.diff * l_diff + w.pha * l_pha + w.adv * l_adv_g + w.fm * l_fm + w.mel * l_mel;
}

std::string LossReport::csv_header() { return "step,l_diff,l_pha,l_adv_g,l_fm,l_mel,total"; }

std::string LossReport::csv_line() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", static_cast<long long>(step), l_diff,
                l_pha, l_adv_g, l_fm, l_mel, total);
  return buf;
}

LossReport LossReport::parse_csv_line(const std::string& line) {
  std::istringstream in(line);
  std::string cell;
  std::vector<std::string> cells;
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (cells.size() != 7) throw DataError("loss trace line needs 7 fields, got " + std::to_string(cells.size()));
  LossReport r;
  try {
    r.step = std::stoll(cells[0]);
    double* fields[] = {&r.l_diff, &r.l_pha, &r.l_adv_g, &r.l_fm, &r.l_mel, &r.total};
    for (std::size_t i = 0; i < 6; ++i) *fields[i] = std::stod(cells[i + 1]);
  } catch (const std::exception&) {
    throw DataError("malformed loss trace line: " + line);
  }
  return r;
}

namespace {

template <typename Scalar>
void require_stereo_pair(const Tensor<Scalar>& y_hat, const Tensor<Scalar>& y, const char* op) {
  if (y_hat.rank() != 2 || y_hat.dim(0) != 2 || y_hat.shape() != y.shape())
    throw ShapeError(std::string(op) + ": expected matching [2 x T] inputs, got " + to_string(y_hat.shape()) + " and " +
                     to_string(y.shape()));
}

template <typename Scalar>
Tensor<Scalar> ear(const Tensor<Scalar>& y, Index e) {
  return reshape(slice(y, 0, e, 1), {y.dim(1)});
}

template <typename Scalar>
Tensor<Scalar> mean_of(const std::vector<Tensor<Scalar>>& terms) {
  Tensor<Scalar> acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = acc + terms[i];
  return acc / Scalar(terms.size());
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> l_diff(const Tensor<Scalar>& y_hat, const Tensor<Scalar>& y) {
  require_stereo_pair(y_hat, y, "l_diff");
  const Tensor<Scalar> d = (ear(y_hat, 0) - ear(y_hat, 1)) - (ear(y, 0) - ear(y, 1)).detach();
  return l2_norm(d) / Scalar(std::sqrt(double(y.dim(1))));
}

template <typename Scalar>
Tensor<Scalar> weighted_phase_error(const Tensor<Scalar>& phase_hat, const Tensor<Scalar>& phase,
                                    const Tensor<Scalar>& target_mag) {
  if (phase_hat.shape() != phase.shape() || phase.shape() != target_mag.shape())
    throw ShapeError("weighted_phase_error: shape mismatch");
  const Array<Scalar>& m = target_mag.data();
  Array<Scalar> w = (m > Scalar(kPhaseMaskFloor)).select(m, Scalar(0));
  const Scalar total = w.sum();
  if (!(total > Scalar(0))) return Tensor<Scalar>::scalar(0);
  w /= total;
  const Tensor<Scalar> delta = phase_hat - phase.detach();
  const Tensor<Scalar> wrapped = atan2(sin(delta), cos(delta));
  return sum(Tensor<Scalar>(phase.shape(), std::move(w)) * square(wrapped));
}

template <typename Scalar>
Tensor<Scalar> l_phase(const Tensor<Scalar>& y_hat, const Tensor<Scalar>& y, const StftConfig& stft_cfg) {
  require_stereo_pair(y_hat, y, "l_phase");
  Tensor<Scalar> acc = Tensor<Scalar>::scalar(0);
  for (Index e = 0; e < 2; ++e) {
    const Spectrum<Scalar> pred = stft(ear(y_hat, e), stft_cfg);
    const Spectrum<Scalar> target = stft(ear(y, e).detach(), stft_cfg);
    acc = acc + weighted_phase_error(pred.phase, target.phase, target.magnitude);
  }
  return acc;
}

template <typename Scalar>
Tensor<Scalar> hinge_d(const std::vector<Tensor<Scalar>>& real, const std::vector<Tensor<Scalar>>& fake) {
  if (real.empty() || real.size() != fake.size())
    throw ShapeError("hinge_d: need one real and one fake logit tensor per discriminator");
  std::vector<Tensor<Scalar>> terms;
  for (std::size_t i = 0; i < real.size(); ++i)
    terms.push_back(mean(relu(Scalar(1) - real[i])) + mean(relu(Scalar(1) + fake[i])));
  return mean_of(terms);
}

template <typename Scalar>
Tensor<Scalar> hinge_g(const std::vector<Tensor<Scalar>>& fake) {
  if (fake.empty()) throw ShapeError("hinge_g: no discriminator outputs");
  std::vector<Tensor<Scalar>> terms;
  for (const auto& f : fake) terms.push_back(mean(relu(Scalar(1) - f)));
  return mean_of(terms);
}

template <typename Scalar>
Tensor<Scalar> feature_matching(const std::vector<std::vector<Tensor<Scalar>>>& real,
                                const std::vector<std::vector<Tensor<Scalar>>>& fake) {
  if (real.empty() || real.size() != fake.size()) throw ShapeError("feature_matching: discriminator count mismatch");
  std::vector<Tensor<Scalar>> per_disc;
  for (std::size_t d = 0; d < real.size(); ++d) {
    if (real[d].empty() || real[d].size() != fake[d].size())
      throw ShapeError("feature_matching: layer count mismatch for discriminator " + std::to_string(d));
    std::vector<Tensor<Scalar>> layers;
    for (std::size_t l = 0; l < real[d].size(); ++l) {
      if (real[d][l].shape() != fake[d][l].shape())
        throw ShapeError("feature_matching: feature shape mismatch at discriminator " + std::to_string(d) +
                         " layer " + std::to_string(l));
      layers.push_back(l2_norm(real[d][l].detach() - fake[d][l]) / Scalar(real[d][l].numel()));
    }
    per_disc.push_back(mean_of(layers));
  }
  return mean_of(per_disc);
}

template <typename Scalar>
Tensor<Scalar> log_mel_l1(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) throw ShapeError("log_mel_l1: shape mismatch");
  return mean(abs(a - b));
}

template <typename Scalar>
Tensor<Scalar> mel_loss(const Tensor<Scalar>& y_hat, const Tensor<Scalar>& y, const SpectralConfig& cfg) {
  require_stereo_pair(y_hat, y, "mel_loss");
  Tensor<Scalar> acc = Tensor<Scalar>::scalar(0);
  for (Index e = 0; e < 2; ++e)
    acc = acc + log_mel_l1(mel_spectrogram(ear(y_hat, e), cfg.stft, cfg.mel),
                           mel_spectrogram(ear(y, e).detach(), cfg.stft, cfg.mel));
  return acc;
}

template <typename Scalar>
GeneratorLoss<Scalar> total_generator_loss(const LossTerms<Scalar>& t, const LossWeights& w, std::int64_t step) {
  w.validate();
  const std::pair<const char*, const Tensor<Scalar>*> named[] = {
      {"l_diff", &t.diff}, {"l_pha", &t.pha}, {"l_adv_g", &t.adv}, {"l_fm", &t.fm}, {"l_mel", &t.mel}};
  for (const auto& [name, term] : named) {
    if (!term->is_scalar()) throw ShapeError(std::string("loss term ") + name + " is not a scalar");
    if (!std::isfinite(double(term->item())))
      throw NumericError(std::string("non-finite loss term ") + name + " = " + std::to_string(double(term->item())) +
                         " at step " + std::to_string(step));
  }
  GeneratorLoss<Scalar> out;
  out.total = t.diff * Scalar(w.diff) + t.pha * Scalar(w.pha) + t.adv * Scalar(w.adv) + t.fm * Scalar(w.fm) +
              t.mel * Scalar(w.mel);
  LossReport& r = out.report;
  r.step = step;
  r.l_diff = double(t.diff.item());
  r.l_pha = double(t.pha.item());
  r.l_adv_g = double(t.adv.item());
  r.l_fm = double(t.fm.item());
  r.l_mel = double(t.mel.item());
  r.total = double(out.total.item());
  if (!std::isfinite(r.total)) throw NumericError("non-finite weighted generator loss at step " + std::to_string(step));
  return out;
}

#define BNC_INSTANTIATE_OBJECTIVES(S)                                                                               \
  template Tensor<S> l_diff<S>(const Tensor<S>&, const Tensor<S>&);                                                 \
  template Tensor<S> weighted_phase_error<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);                \
  template Tensor<S> l_phase<S>(const Tensor<S>&, const Tensor<S>&, const StftConfig&);                             \
  template Tensor<S> hinge_d<S>(const std::vector<Tensor<S>>&, const std::vector<Tensor<S>>&);                      \
  template Tensor<S> hinge_g<S>(const std::vector<Tensor<S>>&);                                                     \
  template Tensor<S> feature_matching<S>(const std::vector<std::vector<Tensor<S>>>&,                                \
                                         const std::vector<std::vector<Tensor<S>>>&);                               \
  template Tensor<S> log_mel_l1<S>(const Tensor<S>&, const Tensor<S>&);                                             \
  template Tensor<S> mel_loss<S>(const Tensor<S>&, const Tensor<S>&, const SpectralConfig&);                        \
  template GeneratorLoss<S> total_generator_loss<S>(const LossTerms<S>&, const LossWeights&, std::int64_t);

BNC_INSTANTIATE_OBJECTIVES(float)
BNC_INSTANTIATE_OBJECTIVES(double)

}  // namespace bnc
