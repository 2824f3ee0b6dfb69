#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <utility>

namespace edcnn {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;
using Index = Eigen::Index;

/// Thrown when a computation fails for numerical reasons (root finding,
/// diverging loss, overflowing bias ladder).
class NumericFailure : public std::runtime_error {
 public:
  explicit NumericFailure(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown on malformed external input (files, CSV rows).
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

/// A convolution filter with coefficients on {0,...,s}. Coefficients outside
/// that index range are implicitly zero.
template <typename Scalar>
struct FilterT {
  VectorX<Scalar> coeffs;  // size s+1

  explicit FilterT(VectorX<Scalar> c) : coeffs(std::move(c)) {
    require(coeffs.size() >= 2, "filter needs s >= 1, i.e. at least 2 coefficients");
  }

  int s() const { return static_cast<int>(coeffs.size()) - 1; }

  Scalar at(Index k) const {
    return (k >= 0 && k < coeffs.size()) ? coeffs[k] : Scalar(0);
  }

  static FilterT delta(int s) {
    VectorX<Scalar> c = VectorX<Scalar>::Zero(s + 1);
    c[0] = Scalar(1);
    return FilterT(std::move(c));
  }

  static FilterT ones(int s) { return FilterT(VectorX<Scalar>::Ones(s + 1)); }
};

using Filter = FilterT<double>;

/// Translation matrix of size d x d with entry (j+i, 1+i) = 1 for
/// i = 0..d-j (1-based). Applying it moves a vector's leading entries so
/// that position 1 lands on position j; j = 1 is the identity.
struct TranslationOp {
  int j;  // 1 <= j <= d
  int d;

  TranslationOp(int j_, int d_) : j(j_), d(d_) {
    require(d >= 1, "translation: dimension must be positive");
    require(j >= 1 && j <= d, "translation: need 1 <= j <= d");
  }

  Matrix matrix() const {
    Matrix a = Matrix::Zero(d, d);
    for (int i = 0; i <= d - j; ++i) a(j - 1 + i, i) = 1.0;
    return a;
  }
};

template <typename Derived>
VectorX<typename Derived::Scalar> translate(const TranslationOp& op,
                                            const Eigen::MatrixBase<Derived>& v) {
  require(v.size() == op.d, "translate: vector length does not match operator dimension");
  VectorX<typename Derived::Scalar> out = VectorX<typename Derived::Scalar>::Zero(op.d);
  const Index n = op.d - op.j + 1;
  out.segment(op.j - 1, n) = v.derived().head(n);
  return out;
}

/// A vector of length d whose support is the index window
/// {j, j+1, ..., j+p-1} (1-based); all other entries are exactly zero.
template <typename Scalar>
struct SupportedVectorT {
  VectorX<Scalar> values;
  int support_start;  // 1-based
  int support_len;

  SupportedVectorT(VectorX<Scalar> v, int start, int len)
      : values(std::move(v)), support_start(start), support_len(len) {
    require(support_start >= 1 && support_len >= 1, "support window must be nonempty");
    require(support_start + support_len <= static_cast<int>(values.size()) + 1,
            "support window exceeds vector length");
    for (Index i = 0; i < values.size(); ++i) {
      const bool inside =
          i >= support_start - 1 && i < support_start - 1 + support_len;
      if (!inside) require(values[i] == Scalar(0), "entries outside the support must be zero");
    }
  }

  int dim() const { return static_cast<int>(values.size()); }

  /// Builds the vector of length d carrying `payload` starting at `start`.
  static SupportedVectorT place(int d, int start, const VectorX<Scalar>& payload) {
    VectorX<Scalar> v = VectorX<Scalar>::Zero(d);
    require(start >= 1 && start - 1 + payload.size() <= d, "payload does not fit");
    v.segment(start - 1, payload.size()) = payload;
    return SupportedVectorT(std::move(v), start, static_cast<int>(payload.size()));
  }
};

using SupportedVector = SupportedVectorT<double>;

/// Location-based pooling: output slot k (1-based) selects input index
/// k*stride + offset; selections past the end read as zero.
struct PoolingSpec {
  int input_len;
  int stride;
  int offset;
  int output_len;

  PoolingSpec(int input_len_, int stride_, int offset_, int output_len_ = -1)
      : input_len(input_len_),
        stride(stride_),
        offset(offset_),
        output_len(output_len_ < 0 ? input_len_ / stride_ : output_len_) {
    require(input_len >= 1, "pooling: input length must be positive");
    require(stride >= 1, "pooling: stride must be positive");
    require(offset >= 0 && offset <= input_len, "pooling: need 0 <= offset <= input length");
    require(output_len >= 0, "pooling: output length must be nonnegative");
  }
};

template <typename Derived>
VectorX<typename Derived::Scalar> pool(const PoolingSpec& spec,
                                       const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  require(v.size() == spec.input_len, "pool: vector length does not match spec");
  VectorX<Scalar> out = VectorX<Scalar>::Zero(spec.output_len);
  for (int k = 1; k <= spec.output_len; ++k) {
    const Index idx = static_cast<Index>(k) * spec.stride + spec.offset;  // 1-based
    if (idx <= spec.input_len) out[k - 1] = v.derived().coeff(idx - 1);
  }
  return out;
}

/// Toeplitz realization of a coefficient sequence: entry (i, k) = seq[i-k]
/// (1-based), zero outside the stored range.
template <typename Derived>
MatrixX<typename Derived::Scalar> toeplitz_from_sequence(
    const Eigen::MatrixBase<Derived>& seq, int input_len, int output_len) {
  using Scalar = typename Derived::Scalar;
  require(input_len >= 1 && output_len >= 1, "toeplitz: dimensions must be positive");
  MatrixX<Scalar> t = MatrixX<Scalar>::Zero(output_len, input_len);
  for (Index i = 0; i < output_len; ++i)
    for (Index k = 0; k < input_len; ++k) {
      const Index m = i - k;
      if (m >= 0 && m < seq.size()) t(i, k) = seq.derived().coeff(m);
    }
  return t;
}

template <typename Scalar>
MatrixX<Scalar> toeplitz(const FilterT<Scalar>& w, int input_len, int output_len) {
  return toeplitz_from_sequence(w.coeffs, input_len, output_len);
}

}  // namespace edcnn
