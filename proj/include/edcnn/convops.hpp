#pragma once

#include <algorithm>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "edcnn/core.hpp"

namespace edcnn {

enum class ConvKind { Contracting, Expansive };
enum class BiasMode { None, Scalar, Full };

/// Shape/bias/activation traits of one convolution layer. Contracting layers
/// map length d' to d'-s, expansive layers map d' to d'+s. Scalar bias adds
/// the same value to every coordinate, which keeps the layer translation
/// friendly.
struct ConvLayerKind {
  ConvKind kind = ConvKind::Expansive;
  BiasMode bias_mode = BiasMode::None;
  bool activated = true;
};

/// Convolution without padding: out[j] = sum_{i=0..s} w[i] * v[j+s-i],
/// j = 1..d'-s (1-based). The output drops s entries.
template <typename Derived>
VectorX<typename Derived::Scalar> contracting_conv(
    const FilterT<typename Derived::Scalar>& w, const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const int s = w.s();
  require(v.size() > s, "contracting convolution: input length must exceed s");
  const Index out_len = v.size() - s;
  VectorX<Scalar> out(out_len);
  for (Index m = 0; m < out_len; ++m) {
    Scalar acc(0);
    for (int i = 0; i <= s; ++i) acc += w.coeffs[i] * v.derived().coeff(m + s - i);
    out[m] = acc;
  }
  return out;
}

/// Full discrete convolution of two coefficient sequences (length a+b-1).
template <typename DerivedA, typename DerivedB>
VectorX<typename DerivedA::Scalar> convolve_full(const Eigen::MatrixBase<DerivedA>& a,
                                                 const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  VectorX<Scalar> out = VectorX<Scalar>::Zero(a.size() + b.size() - 1);
  for (Index i = 0; i < a.size(); ++i) {
    const Scalar ai = a.derived().coeff(i);
    for (Index j = 0; j < b.size(); ++j) out[i + j] += ai * b.derived().coeff(j);
  }
  return out;
}

/// Zero-padded convolution: out[j] = sum_k w[j-k] * v[k], j = 1..d'+s.
/// Equals the full polynomial product of the coefficient sequences.
template <typename Derived>
VectorX<typename Derived::Scalar> expansive_conv(
    const FilterT<typename Derived::Scalar>& w, const Eigen::MatrixBase<Derived>& v) {
  require(v.size() >= 1, "expansive convolution: input must be nonempty");
  return convolve_full(w.coeffs, v);
}

/// Composition of two filters on {0,...,s} as a filter on {0,...,2s}.
/// Commutative in either argument order.
template <typename Scalar>
FilterT<Scalar> conv_compose(const FilterT<Scalar>& w1, const FilterT<Scalar>& w2) {
  require(w1.s() == w2.s(), "conv_compose: filters must share the support bound s");
  return FilterT<Scalar>(convolve_full(w1.coeffs, w2.coeffs));
}

/// Feature extractor built from expansive layers with one shared scalar bias
/// per layer and ReLU after each layer. Widths chain d -> d+s -> d+2s -> ...
template <typename Scalar>
VectorX<Scalar> restricted_forward(
    const std::vector<std::pair<FilterT<Scalar>, Scalar>>& layers,
    const std::type_identity_t<VectorX<Scalar>>& x) {
  require(!layers.empty(), "restricted_forward: need at least one layer");
  const int s = layers.front().first.s();
  for (const auto& [w, b] : layers)
    require(w.s() == s, "restricted_forward: all filters must share s");
  VectorX<Scalar> z = x;
  for (const auto& [w, b] : layers) {
    z = expansive_conv(w, z);
    z.array() += b;
    z = z.cwiseMax(Scalar(0));
  }
  return z;
}

struct EquivarianceReport {
  bool holds = false;
  double max_abs_gap = 0.0;
};

namespace detail {

template <typename Scalar>
VectorX<Scalar> conv_stack(ConvKind kind, const std::vector<FilterT<Scalar>>& ws,
                           VectorX<Scalar> v) {
  for (const auto& w : ws)
    v = kind == ConvKind::Expansive ? expansive_conv(w, v) : contracting_conv(w, v);
  return v;
}

}  // namespace detail

/// Compares conv-then-shift against shift-then-conv for a filter stack applied
/// to a supported vector, shifting so that the support start moves to index j.
inline EquivarianceReport equivariance_check(ConvKind kind,
                                             const std::vector<Filter>& filters,
                                             const SupportedVector& v, int j,
                                             double tolerance = 1e-10) {
  require(!filters.empty(), "equivariance_check: need at least one filter");
  const int d = v.dim();
  const int p = v.support_len;
  require(j >= 1 && j <= d - p + 1, "equivariance_check: shift out of range");
  const int s = filters.front().s();
  const int layers = static_cast<int>(filters.size());
  const int d_out =
      kind == ConvKind::Expansive ? d + layers * s : d - layers * s;
  require(d_out >= 1, "equivariance_check: contracting stack consumes the whole vector");
  require(j <= d_out, "equivariance_check: shift out of range for the output length");

  const Vector base = detail::conv_stack(kind, filters, v.values);
  const Vector conv_then_shift = translate(TranslationOp(j, d_out), base);
  const Vector shift_then_conv =
      detail::conv_stack(kind, filters, translate(TranslationOp(j, d), v.values));
  const double gap = (conv_then_shift - shift_then_conv).cwiseAbs().maxCoeff();
  return {gap <= tolerance, gap};
}

/// Searches for a (filter, shift) pair violating equivariance of the
/// contracting convolution on the all-ones vector supported on {1,...,p}.
/// The shift range s <= j <= d'-p-s is where truncation provably bites;
/// outside it there may be nothing to find, hence nullopt.
inline std::optional<std::pair<Filter, int>> find_equivariance_witness(
    int s, int d_prime, int p, double min_gap = 1e-6,
    int max_candidates = 1000) {
  require(s >= 2 && s <= d_prime, "witness search: need 2 <= s <= d'");
  require(p >= 1 && p <= d_prime, "witness search: need 1 <= p <= d'");
  const int j_lo = s;
  const int j_hi = d_prime - p - s;
  if (j_lo > j_hi) return std::nullopt;

  const SupportedVector v =
      SupportedVector::place(d_prime, 1, Vector::Ones(p));
  std::mt19937_64 rng(0x5eedULL);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int candidate = 0; candidate < max_candidates; ++candidate) {
    Filter w = Filter::ones(s);
    if (candidate > 0) {
      Vector c(s + 1);
      for (Index i = 0; i < c.size(); ++i) c[i] = unif(rng);
      w = Filter(std::move(c));
    }
    for (int j = j_lo; j <= j_hi; ++j) {
      const auto report = equivariance_check(ConvKind::Contracting, {w}, v, j);
      if (!report.holds && report.max_abs_gap > min_gap) return std::make_pair(w, j);
    }
  }
  return std::nullopt;
}

}  // namespace edcnn
