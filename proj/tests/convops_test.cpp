#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "edcnn/convops.hpp"
#include "edcnn/factorize.hpp"

using namespace edcnn;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Filter random_filter(int s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Vector c(s + 1);
  for (Index i = 0; i < c.size(); ++i) c[i] = unif(rng);
  return Filter(c);
}

Vector random_vec(Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = unif(rng);
  return v;
}

// direct summation of the defining formula, kept independent of the
// implementation's loop structure
Vector contracting_oracle(const Filter& w, const Vector& v) {
  const int s = w.s();
  Vector out(v.size() - s);
  for (Index j = 1; j <= out.size(); ++j) {
    double acc = 0.0;
    for (Index k = j - s; k <= j; ++k) {
      const Index widx = j - k;
      const Index vidx = k + s;
      if (vidx >= 1 && vidx <= v.size()) acc += w.at(widx) * v[vidx - 1];
    }
    out[j - 1] = acc;
  }
  return out;
}

Vector expansive_oracle(const Filter& w, const Vector& v) {
  const int s = w.s();
  Vector out(v.size() + s);
  for (Index j = 1; j <= out.size(); ++j) {
    double acc = 0.0;
    for (Index k = 1; k <= v.size(); ++k) acc += w.at(j - k) * v[k - 1];
    out[j - 1] = acc;
  }
  return out;
}

}  // namespace

TEST_CASE("contracting convolution matches direct summation") {
  const Filter w(vec({1, 1}));
  CHECK(contracting_conv(w, vec({1, 2, 3})) == vec({3, 5}));
  CHECK(contracting_conv(w, vec({1, 2, 3})) == contracting_oracle(w, vec({1, 2, 3})));
}

TEST_CASE("contracting convolution with the delta filter drops the first s entries") {
  const Filter w = Filter::delta(1);
  CHECK(contracting_conv(w, vec({4, 5, 6})) == vec({5, 6}));
}

TEST_CASE("contracting convolution of the zero vector is zero") {
  std::mt19937_64 rng(1);
  const Filter w = random_filter(3, rng);
  CHECK(contracting_conv(w, Vector::Zero(9)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("contracting convolution rejects inputs no longer than s") {
  CHECK_THROWS_AS(contracting_conv(Filter::ones(3), Vector::Zero(3)),
                  std::invalid_argument);
}

TEST_CASE("expansive convolution with the delta filter zero-pads") {
  const Filter w = Filter::delta(2);
  CHECK(expansive_conv(w, vec({1, 2, 3})) == vec({1, 2, 3, 0, 0}));
}

TEST_CASE("expansive convolution equals the polynomial product") {
  const Filter w(vec({1, 2, 3}));
  CHECK(expansive_conv(w, vec({1, 1})) == vec({1, 3, 5, 3}));
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Filter f = random_filter(1 + static_cast<int>(rng() % 6), rng);
    const Vector v = random_vec(1 + rng() % 12, rng);
    CHECK((expansive_conv(f, v) - expansive_oracle(f, v)).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("a unit impulse reproduces the filter") {
  std::mt19937_64 rng(3);
  const Filter w = random_filter(4, rng);
  Vector e1 = Vector::Zero(6);
  e1[0] = 1.0;
  const Vector out = expansive_conv(w, e1);
  CHECK(out.head(5) == w.coeffs);
  CHECK(out.tail(5).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("both convolutions are linear in the input") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    const int s = 1 + static_cast<int>(rng() % 5);
    const Filter w = random_filter(s, rng);
    const Vector a = random_vec(s + 3 + rng() % 8, rng);
    const Vector b = random_vec(a.size(), rng);
    const double alpha = 0.37;
    CHECK((expansive_conv(w, Vector(a + alpha * b)) -
           (expansive_conv(w, a) + alpha * expansive_conv(w, b)))
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
    CHECK((contracting_conv(w, Vector(a + alpha * b)) -
           (contracting_conv(w, a) + alpha * contracting_conv(w, b)))
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
  }
}

TEST_CASE("composing with the delta filter pads the other filter") {
  const Filter w2(vec({3, -1, 2}));
  const Filter composed = conv_compose(Filter::delta(2), w2);
  CHECK(composed.s() == 4);
  CHECK(composed.coeffs.head(3) == w2.coeffs);
  CHECK(composed.coeffs.tail(2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("conv_compose multiplies symbols: (1+z)(1-z) = 1-z^2") {
  const Filter composed = conv_compose(Filter(vec({1, 1})), Filter(vec({1, -1})));
  CHECK(composed.coeffs == vec({1, 0, -1}));
}

TEST_CASE("conv_compose commutes for random filter pairs") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int s = 1 + static_cast<int>(rng() % 8);
    const Filter a = random_filter(s, rng);
    const Filter b = random_filter(s, rng);
    const Filter ab = conv_compose(a, b);
    const Filter ba = conv_compose(b, a);
    CHECK((ab.coeffs - ba.coeffs).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("the symbol of a composition is the product of the symbols") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const int s = 1 + static_cast<int>(rng() % 6);
    const Filter a = random_filter(s, rng);
    const Filter b = random_filter(s, rng);
    const Vector product = convolve_full(a.coeffs, b.coeffs);
    CHECK((conv_compose(a, b).coeffs - product).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("restricted forward with a delta filter keeps nonnegative inputs") {
  const Vector x = vec({1, 2, 0.5});
  const Vector out = restricted_forward<double>({{Filter::delta(2), 0.0}}, x);
  CHECK(out == vec({1, 2, 0.5, 0, 0}));
}

TEST_CASE("restricted forward of zero input with positive bias is the constant") {
  std::mt19937_64 rng(7);
  const Filter w = random_filter(2, rng);
  const Vector out = restricted_forward<double>({{w, 0.75}}, Vector::Zero(5));
  CHECK((out.array() - 0.75).abs().maxCoeff() == 0.0);
}

TEST_CASE("restricted forward validates the shared filter width") {
  const std::vector<std::pair<Filter, double>> layers{{Filter::delta(2), 0.0},
                                                      {Filter::delta(3), 0.0}};
  CHECK_THROWS_AS(restricted_forward(layers, Vector::Zero(5)), std::invalid_argument);
}

TEST_CASE("restricted forward with synthesized biases is affine on the box") {
  // biases from the stage compiler keep every ReLU in its identity region,
  // so the two-layer map must equal the Toeplitz-product affine oracle
  std::mt19937_64 rng(8);
  const int d = 6, s = 2;
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Matrix w_dense(2, d);
  for (Index r = 0; r < w_dense.rows(); ++r)
    for (Index c = 0; c < w_dense.cols(); ++c) w_dense(r, c) = unif(rng);
  const CompiledStage stage =
      compile_dense_layer(w_dense, Vector::Zero(2), s, 1.0);
  std::vector<std::pair<Filter, double>> layers;
  for (Index l = 0; l < stage.scalar_biases.size(); ++l)
    layers.emplace_back(stage.filters[l], stage.scalar_biases[l]);

  // affine oracle: T_L ... T_1 x + sum_k T_L ... T_{k+1} b_k 1
  Matrix t_prod = Matrix::Identity(d, d);
  Vector offset = Vector::Zero(d);
  int width = d;
  for (const auto& [w, b] : layers) {
    const Matrix t = toeplitz(w, width, width + s);
    t_prod = (t * t_prod).eval();
    offset = (t * offset).eval();
    offset.array() += b;
    width += s;
  }
  for (int trial = 0; trial < 20; ++trial) {
    Vector x(d);
    for (int i = 0; i < d; ++i)
      x[i] = std::uniform_real_distribution<double>(-1, 1)(rng);
    const Vector got = restricted_forward(layers, x);
    const Vector want = t_prod * x + offset;
    CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, want.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("expansive stacks are translation equivariant") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int s = 1 + static_cast<int>(rng() % 4);
    const int layers = 1 + static_cast<int>(rng() % 6);
    const int d = 8 + static_cast<int>(rng() % 25);
    const int p = 1 + static_cast<int>(rng() % (d / 2));
    std::vector<Filter> stack;
    for (int l = 0; l < layers; ++l) stack.push_back(random_filter(s, rng));
    const SupportedVector v = SupportedVector::place(d, 1, random_vec(p, rng));
    for (int j = 1; j <= d - p + 1; ++j) {
      const auto report = equivariance_check(ConvKind::Expansive, stack, v, j);
      CHECK(report.holds);
      CHECK(report.max_abs_gap <= 1e-10);
    }
  }
}

TEST_CASE("contracting convolution breaks equivariance on edge-supported input") {
  const SupportedVector v = SupportedVector::place(10, 1, vec({1, 1}));
  const auto report =
      equivariance_check(ConvKind::Contracting, {Filter::ones(2)}, v, 3);
  CHECK_FALSE(report.holds);
  CHECK(report.max_abs_gap > 1e-6);
}

TEST_CASE("contracting convolution is equivariant when the support stays interior") {
  // start the support beyond the truncation zone and keep the shift small
  const int d = 20, p = 2, s = 2;
  std::mt19937_64 rng(10);
  const Filter w = random_filter(s, rng);
  Vector payload = random_vec(p, rng);
  const SupportedVector v = SupportedVector::place(d, s + 1, payload);
  // shifting by one keeps both supports away from either edge
  Vector moved = translate(TranslationOp(2, d), v.values);
  const Vector lhs = translate(TranslationOp(2, d - s), contracting_conv(w, v.values));
  const Vector rhs = contracting_conv(w, moved);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("equivariance_check rejects out-of-range shifts") {
  const SupportedVector v = SupportedVector::place(6, 1, vec({1, 1, 1}));
  CHECK_THROWS_AS(equivariance_check(ConvKind::Expansive, {Filter::ones(2)}, v, 5),
                  std::invalid_argument);
}

TEST_CASE("the witness search finds a contracting failure at s=2, d'=10, p=2") {
  const auto witness = find_equivariance_witness(2, 10, 2);
  REQUIRE(witness.has_value());
  const auto& [w, j] = *witness;
  const SupportedVector v = SupportedVector::place(10, 1, Vector::Ones(2));
  const auto recheck = equivariance_check(ConvKind::Contracting, {w}, v, j);
  CHECK_FALSE(recheck.holds);
  CHECK(recheck.max_abs_gap > 1e-6);
}

TEST_CASE("the witness search reports none when the shift range is empty") {
  // need d' < 2s + p for s <= j <= d'-p-s to be empty
  CHECK_FALSE(find_equivariance_witness(3, 7, 2).has_value());
}
