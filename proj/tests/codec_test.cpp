#include <random>

#include "bnc/codec.hpp"
#include "bnc/grad_check.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace bnc;
using bnc::testing::random_tensor;
using T = Tensord;

namespace {

Codebooks<double> books_from(const std::vector<RowMatrix<double>>& tables) {
  Codebooks<double> b;
  for (const auto& t : tables) {
    b.tables.push_back(t);
    b.counts.push_back(Array<double>::Zero(t.rows()));
    b.sums.push_back(RowMatrix<double>::Zero(t.rows(), t.cols()));
  }
  return b;
}

CodecFingerprint fp(Index layers, Index size) { return {8000, {2, 2}, layers, size}; }

Index brute_force_nearest(const RowMatrix<double>& table, const Eigen::RowVectorXd& v) {
  Index best = 0;
  double best_d = 1e300;
  for (Index j = 0; j < table.rows(); ++j) {
    double d = 0;
    for (Index k = 0; k < table.cols(); ++k) d += (v[k] - table(j, k)) * (v[k] - table(j, k));
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("model config") {
  ModelConfig cfg;
  CHECK(cfg.downsampling() == 320);
  CHECK(cfg.codebook_bits() == 10);
  cfg.validate();
  ModelConfig::tiny().validate();
  CHECK(ModelConfig::tiny().downsampling() == 4);

  ModelConfig bad = cfg;
  bad.codebook_size = 1000;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.rvq_layers = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.film_blocks = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  ModelConfig round;
  for (const auto& [k, v] : to_key_values(ModelConfig::tiny())) apply_key_value(round, k, v);
  CHECK(to_key_values(round) == to_key_values(ModelConfig::tiny()));
  CHECK_THROWS_AS(apply_key_value(round, "model.nope", "1"), ConfigError);
  CHECK_THROWS_AS(apply_key_value(round, "model.latent_dim", "eight"), ConfigError);
  CHECK_THROWS_AS(parse_key_values("a=1\nbroken line\n", "cfg"), ConfigError);
  CHECK(parse_key_values(" a = 1 # note\n\n# only comment\nb=x", "cfg").at("a") == "1");
}

TEST_CASE("encoder shapes") {
  const ModelConfig cfg = ModelConfig::tiny();
  std::mt19937_64 rng(3);
  ParamStore<double> ps;
  const Encoder<double> enc(cfg, ps, rng);
  const Index m = cfg.downsampling();
  CHECK(enc(T::zeros({10 * m})).shape() == Shape{10, cfg.latent_dim});
  CHECK(enc(T::zeros({1, 10 * m + 1})).shape() == Shape{11, cfg.latent_dim});
  for (Index t = 1; t <= 3 * m + 1; ++t) CHECK(enc(T::zeros({t})).dim(0) == (t + m - 1) / m);
  CHECK_THROWS_AS(enc(T::zeros({0})), ShapeError);
  CHECK_THROWS_AS(enc(T::zeros({2, 16})), ShapeError);

  for (const auto& e : ps.entries()) e.tensor.mutable_data().setZero();
  const T z = enc(random_tensor({37}, rng));
  CHECK(z.data().abs().maxCoeff() == 0.0);
}

TEST_CASE("encoder with odd and unit strides keeps exact lengths") {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.strides = {1, 3, 5};
  std::mt19937_64 rng(4);
  ParamStore<double> ps;
  const Encoder<double> enc(cfg, ps, rng);
  CHECK(enc(T::zeros({15 * 4})).dim(0) == 4);
  CHECK(enc(T::zeros({15 * 4 + 7})).dim(0) == 5);
}

TEST_CASE("rvq quantize") {
  SUBCASE("two-codeword example") {
    RowMatrix<double> t(2, 2);
    t << 0, 0, 1, 1;
    const auto books = books_from({t});
    const auto r = rvq_quantize(T::from({1, 2}, {0.9, 0.8}), books, fp(1, 2));
    CHECK(r.codes.indices(0, 0) == 1);
    CHECK(r.quantized[0] == 1.0);
    CHECK(r.quantized[1] == 1.0);
  }
  SUBCASE("exact codeword has zero residual") {
    std::mt19937_64 rng(5);
    const auto books = Codebooks<double>::uniform(1, 16, 4, rng);
    const Eigen::RowVectorXd row = books.tables[0].row(9);
    const auto r = rvq_quantize(T({1, 4}, row.transpose().array()), books, fp(1, 16));
    CHECK(r.codes.indices(0, 0) == 9);
    CHECK(r.residual_norms[0] == 0.0);
  }
  SUBCASE("one layer equals exhaustive nearest-codeword search") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 1000; ++trial) {
      const Index d = 1 + trial % 6, k = 2 + trial % 15;
      Codebooks<double> books = books_from({random_tensor({k, d}, rng).matrix()});
      const T z = random_tensor({3, d}, rng);
      const auto r = rvq_quantize(z, books, fp(1, k));
      for (Index i = 0; i < 3; ++i)
        REQUIRE(r.codes.indices(i, 0) == brute_force_nearest(books.tables[0], z.matrix().row(i)));
    }
  }
  SUBCASE("residual norms never increase across layers") {
    // Random tables with a null codeword: the nearest entry is then never
    // farther than the residual itself.
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<RowMatrix<double>> tables;
      for (int n = 0; n < 6; ++n) {
        RowMatrix<double> t = random_tensor({8, 3}, rng, -1.0 / (n + 1), 1.0 / (n + 1)).matrix();
        t.row(0).setZero();
        tables.push_back(t);
      }
      const auto books = books_from(tables);
      const T z = random_tensor({5, 3}, rng);
      const auto r = rvq_quantize(z, books, fp(6, 8));
      const double start = z.matrix().rowwise().norm().mean();
      REQUIRE(r.residual_norms[0] <= start + 1e-12);
      for (std::size_t n = 1; n < r.residual_norms.size(); ++n)
        REQUIRE(r.residual_norms[n] <= r.residual_norms[n - 1] + 1e-12);

      // Prefix property: fewer layers never quantize better.
      double prev = 1e300;
      for (Index used = 1; used <= 6; ++used) {
        const auto p = rvq_quantize(z, books, fp(used, 8), used);
        const double err = (z.matrix() - p.quantized.matrix()).norm();
        REQUIRE(err <= prev + 1e-12);
        prev = err;
      }
    }
  }
  SUBCASE("dimension mismatch") {
    std::mt19937_64 rng(8);
    const auto books = Codebooks<double>::uniform(2, 4, 3, rng);
    CHECK_THROWS_AS(rvq_quantize(T::zeros({2, 4}), books, fp(2, 4)), ShapeError);
  }
}

TEST_CASE("rvq dequantize") {
  std::mt19937_64 rng(9);
  const auto books = Codebooks<double>::uniform(3, 16, 5, rng);
  const T z = random_tensor({20, 5}, rng, -0.1, 0.1);
  const auto r = rvq_quantize(z, books, fp(3, 16));
  const T back = rvq_dequantize(r.codes, books);
  CHECK((back.data() == r.quantized.data()).all());

  CodeGrid single;
  single.fingerprint = fp(1, 16);
  single.indices = IndexGrid::Constant(2, 1, 4);
  const T look = rvq_dequantize(single, books);
  for (Index k = 0; k < 5; ++k) CHECK(look[5 + k] == books.tables[0](4, k));

  auto zero_books = books;
  for (auto& t : zero_books.tables) t.row(0).setZero();
  CodeGrid zeros;
  zeros.indices = IndexGrid::Zero(4, 3);
  CHECK(rvq_dequantize(zeros, zero_books).data().abs().maxCoeff() == 0.0);

  single.indices(1, 0) = 16;
  CHECK_THROWS_AS(rvq_dequantize(single, books), DataError);
}

TEST_CASE("straight-through gradient") {
  std::mt19937_64 rng(10);
  const auto books = Codebooks<double>::uniform(2, 8, 3, rng);
  const T w = random_tensor({4, 3}, rng);
  const T z = random_tensor({4, 3}, rng, -0.2, 0.2);
  z.set_requires_grad(true);
  const auto r = rvq_quantize(z, books, fp(2, 8));
  backward(sum(r.quantized * r.quantized * w));
  const Array<double> g_st = z.grad();

  z.zero_grad();
  const T q = z + (r.quantized.detach() - z).detach();
  backward(sum(q * q * w));
  for (Index i = 0; i < z.numel(); ++i) CHECK(g_st[i] == doctest::Approx(2 * r.quantized[i] * w[i]));
  CHECK((z.grad() == g_st).all());
  clear_tape<double>();
}

TEST_CASE("ema codebook update") {
  RowMatrix<double> t(3, 2);
  t << 0.1, 0.1, -0.2, 0.0, 0.3, 0.3;
  auto make_assignment = [](const std::vector<std::pair<int, Eigen::RowVector2d>>& rows) {
    RvqResult<double> a;
    a.codes.indices = IndexGrid(Index(rows.size()), 1);
    RowMatrix<double> in(Index(rows.size()), 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      a.codes.indices(Index(i), 0) = rows[i].first;
      in.row(Index(i)) = rows[i].second;
    }
    a.inputs.push_back(in);
    return a;
  };
  const auto batch = make_assignment({{1, {1.0, 0.0}}, {1, {1.0, 0.0}}});
  SUBCASE("decay one leaves codebooks unchanged") {
    auto b = books_from({t});
    ema_codebook_update(b, batch, 1.0);
    CHECK(b.tables[0] == t);
  }
  SUBCASE("decay zero jumps to the batch mean") {
    auto b = books_from({t});
    ema_codebook_update(b, make_assignment({{2, {1.0, 2.0}}, {2, {3.0, 0.0}}}), 0.0);
    CHECK(b.tables[0](2, 0) == doctest::Approx(2.0).epsilon(1e-5));
    CHECK(b.tables[0](2, 1) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(b.tables[0].row(0) == t.row(0));
    CHECK(b.counts[0][2] == 2.0);
  }
  SUBCASE("converges to the assigned vector") {
    auto b = books_from({t});
    for (int i = 0; i < 1000; ++i) ema_codebook_update(b, batch, 0.99);
    CHECK(std::abs(b.tables[0](1, 0) - 1.0) < 1e-3);
    CHECK(std::abs(b.tables[0](1, 1)) < 1e-3);
    CHECK(b.tables[0].row(0) == t.row(0));
    CHECK((b.counts[0] >= 0).all());
  }
  SUBCASE("unassigned entries keep their codeword while counts decay") {
    auto b = books_from({t});
    ema_codebook_update(b, batch, 0.5);
    const Eigen::RowVector2d after = b.tables[0].row(1);
    ema_codebook_update(b, make_assignment({{0, {0.0, 1.0}}}), 0.5);
    CHECK(b.tables[0].row(1) == after);
    CHECK(b.counts[0][1] == doctest::Approx(0.5));
  }
  SUBCASE("invalid decay") {
    auto b = books_from({t});
    CHECK_THROWS_AS(ema_codebook_update(b, batch, 1.5), ConfigError);
  }
}

TEST_CASE("codebook checkpoint round trip") {
  std::mt19937_64 rng(12);
  auto books = Codebooks<double>::uniform(2, 4, 3, rng);
  books.counts[1][2] = 0.75;
  Archive ar;
  books.save(ar, "rvq.");
  auto other = Codebooks<double>::uniform(2, 4, 3, rng);
  other.load(parse_archive(serialize_archive(ar)), "rvq.");
  CHECK(other.tables[0] == books.tables[0]);
  CHECK(other.tables[1] == books.tables[1]);
  CHECK(other.counts[1][2] == 0.75);
}
