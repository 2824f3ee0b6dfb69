#include "edcnn/factorize.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <sstream>

#include "edcnn/nets.hpp"
#include "json.hpp"

namespace edcnn {

using Json = nlohmann::ordered_json;
using Complex = std::complex<double>;

int SymbolPolynomial::effective_degree(double tol_factor) const {
  if (coeffs.size() == 0) return -1;
  const double scale = coeffs.cwiseAbs().maxCoeff();
  if (scale == 0.0) return -1;
  for (Index k = coeffs.size() - 1; k >= 0; --k)
    if (std::abs(coeffs[k]) > tol_factor * scale) return static_cast<int>(k);
  return -1;
}

Vector FilterCascade::product() const {
  Vector p = Vector::Ones(1);
  for (const auto& w : filters) p = convolve_full(p, w.coeffs);
  return p;
}

namespace {

// Parlett-Reinsch style balancing: scale row/column pairs by powers of two
// until the off-diagonal 1-norms stop improving.
void balance_companion(Matrix& m) {
  const Index n = m.rows();
  bool changed = true;
  while (changed) {
    changed = false;
    for (Index i = 0; i < n; ++i) {
      double row_norm = m.row(i).template lpNorm<1>() - std::abs(m(i, i));
      double col_norm = m.col(i).template lpNorm<1>() - std::abs(m(i, i));
      if (row_norm == 0.0 || col_norm == 0.0) continue;
      int exponent = 0;
      std::frexp(row_norm / col_norm, &exponent);
      exponent /= 2;
      if (exponent == 0) continue;
      const double scaled_col = std::ldexp(col_norm, exponent);
      const double scaled_row = std::ldexp(row_norm, -exponent);
      if (scaled_col + scaled_row < 0.9 * (col_norm + row_norm)) {
        changed = true;
        m.row(i) *= std::ldexp(1.0, -exponent);
        m.col(i) *= std::ldexp(1.0, exponent);
      }
    }
  }
}

Complex horner(const Vector& ascending, Complex z) {
  Complex acc(0.0, 0.0);
  for (Index k = ascending.size() - 1; k >= 0; --k) acc = acc * z + ascending[k];
  return acc;
}

Complex horner_derivative(const Vector& ascending, Complex z) {
  Complex acc(0.0, 0.0);
  for (Index k = ascending.size() - 1; k >= 1; --k)
    acc = acc * z + static_cast<double>(k) * ascending[k];
  return acc;
}

std::vector<Complex> polynomial_roots(const Vector& ascending) {
  const Index degree = ascending.size() - 1;
  Matrix companion = Matrix::Zero(degree, degree);
  companion.diagonal(-1).setOnes();
  const double lead = ascending[degree];
  for (Index i = 0; i < degree; ++i) companion(i, degree - 1) = -ascending[i] / lead;
  balance_companion(companion);
  Eigen::EigenSolver<Matrix> solver(companion, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success)
    throw NumericFailure("companion eigendecomposition did not converge");
  std::vector<Complex> roots(degree);
  for (Index i = 0; i < degree; ++i) {
    Complex r = solver.eigenvalues()[i];
    // One or two Newton corrections on the original polynomial.
    for (int it = 0; it < 2; ++it) {
      const Complex d = horner_derivative(ascending, r);
      if (d == Complex(0.0, 0.0)) break;
      r -= horner(ascending, r) / d;
    }
    roots[i] = r;
  }
  return roots;
}

// Real irreducible factors in ascending coefficients: (-r, 1) for a real
// root, (|z|^2, -2 Re z, 1) for a conjugate pair.
std::vector<Vector> real_factors(std::vector<Complex> roots) {
  std::vector<Vector> factors;
  std::vector<Complex> complex_roots;
  for (const Complex& r : roots) {
    if (std::abs(r.imag()) <= 1e-8 * (1.0 + std::abs(r))) {
      Vector lin(2);
      lin << -r.real(), 1.0;
      factors.push_back(lin);
    } else {
      complex_roots.push_back(r);
    }
  }
  std::vector<bool> used(complex_roots.size(), false);
  for (std::size_t i = 0; i < complex_roots.size(); ++i) {
    if (used[i]) continue;
    used[i] = true;
    std::size_t best = i;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t j = i + 1; j < complex_roots.size(); ++j) {
      if (used[j]) continue;
      const double dist = std::abs(complex_roots[j] - std::conj(complex_roots[i]));
      if (dist < best_dist) {
        best_dist = dist;
        best = j;
      }
    }
    if (best == i) {
      // Stray unpaired root from rounding noise; keep its real part and let
      // the refinement pass absorb the difference.
      Vector lin(2);
      lin << -complex_roots[i].real(), 1.0;
      factors.push_back(lin);
      continue;
    }
    used[best] = true;
    const Complex r = 0.5 * (complex_roots[i] + std::conj(complex_roots[best]));
    Vector quad(3);
    quad << std::norm(r), -2.0 * r.real(), 1.0;
    factors.push_back(quad);
  }
  return factors;
}

// Packs irreducible factors into groups of total degree <= s, greedily
// picking at each step the factor that keeps the l1 norm of the running
// product smallest. Conjugate pairs are never split (they arrive as
// quadratics). Every closed group has degree >= s-1, so the group count
// stays within ceil(S/(s-1)).
std::vector<std::vector<Vector>> pack_factors(std::vector<Vector> factors, int s) {
  std::vector<std::vector<Vector>> groups;
  Vector prefix = Vector::Ones(1);
  while (!factors.empty()) {
    std::vector<Vector> group;
    int capacity = s;
    while (capacity > 0) {
      std::ptrdiff_t best = -1;
      double best_cost = std::numeric_limits<double>::infinity();
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(factors.size()); ++i) {
        const int deg = static_cast<int>(factors[i].size()) - 1;
        if (deg > capacity) continue;
        const double cost = convolve_full(prefix, factors[i]).cwiseAbs().sum();
        if (cost < best_cost) {
          best_cost = cost;
          best = i;
        }
      }
      if (best < 0) break;
      prefix = convolve_full(prefix, factors[best]);
      capacity -= static_cast<int>(factors[best].size()) - 1;
      group.push_back(std::move(factors[best]));
      factors.erase(factors.begin() + best);
    }
    groups.push_back(std::move(group));
  }
  return groups;
}

Vector pad_to(const Vector& v, Index len) {
  Vector out = Vector::Zero(len);
  out.head(std::min(len, v.size())) = v.head(std::min(len, v.size()));
  return out;
}

Vector cascade_coeffs(const std::vector<Filter>& filters) {
  Vector p = Vector::Ones(1);
  for (const auto& w : filters) p = convolve_full(p, w.coeffs);
  return p;
}

// Gauss-Newton on the stacked filter coefficients, minimizing the coefficient
// residual of the cascade against the target sequence. The least-squares step
// uses the minimum-norm solution; the problem is rank deficient because
// rescaling one filter against another leaves the product unchanged.
double refine_cascade(std::vector<Filter>& filters, const Vector& target,
                      int max_iters = 10) {
  const Index len = static_cast<Index>(filters.size()) * filters.front().s() + 1;
  const Vector goal = pad_to(target, len);
  const double scale = goal.cwiseAbs().maxCoeff();
  const std::size_t num_filters = filters.size();
  const Index taps = filters.front().coeffs.size();

  auto error_of = [&](const std::vector<Filter>& fs) {
    return (pad_to(cascade_coeffs(fs), len) - goal).cwiseAbs().maxCoeff() / scale;
  };

  std::vector<Filter> best = filters;
  double best_err = error_of(filters);
  for (int it = 0; it < max_iters && best_err > 1e-15; ++it) {
    // prefix[l] = product of filters before l, suffix[l] = product after l
    std::vector<Vector> prefix(num_filters + 1), suffix(num_filters + 1);
    prefix[0] = Vector::Ones(1);
    suffix[num_filters] = Vector::Ones(1);
    for (std::size_t l = 0; l < num_filters; ++l)
      prefix[l + 1] = convolve_full(prefix[l], filters[l].coeffs);
    for (std::size_t l = num_filters; l-- > 0;)
      suffix[l] = convolve_full(filters[l].coeffs, suffix[l + 1]);

    const Vector residual = pad_to(prefix[num_filters], len) - goal;
    Matrix jac = Matrix::Zero(len, static_cast<Index>(num_filters) * taps);
    for (std::size_t l = 0; l < num_filters; ++l) {
      const Vector others = convolve_full(prefix[l], suffix[l + 1]);
      for (Index k = 0; k < taps; ++k) {
        const Index hi = std::min(len, k + others.size());
        jac.col(static_cast<Index>(l) * taps + k).segment(k, hi - k) =
            others.head(hi - k);
      }
    }
    const Vector delta =
        jac.completeOrthogonalDecomposition().solve((-residual).eval());
    for (std::size_t l = 0; l < num_filters; ++l)
      filters[l].coeffs += delta.segment(static_cast<Index>(l) * taps, taps);
    const double err = error_of(filters);
    if (err < best_err) {
      best_err = err;
      best = filters;
    }
  }
  filters = best;
  return best_err;
}

}  // namespace

FilterCascade factor_filter(const SymbolPolynomial& u, int s) {
  require(s >= 2, "factor_filter: need s >= 2");
  const int eff = u.effective_degree();
  require(eff >= 0, "factor_filter: the zero polynomial has no factorization");

  const Vector trimmed = u.coeffs.head(eff + 1);
  FilterCascade cascade;
  cascade.s = s;
  if (eff <= s) {
    cascade.filters.emplace_back(pad_to(trimmed, s + 1));
    cascade.reconstruction_error = 0.0;
    return cascade;
  }

  const auto roots = polynomial_roots(trimmed);
  auto groups = pack_factors(real_factors(roots), s);
  const int bound = (eff + s - 2) / (s - 1);  // ceil(S/(s-1))
  if (static_cast<int>(groups.size()) > bound)
    throw NumericFailure("factor_filter: packing exceeded the cascade length bound");

  // Distribute the leading coefficient geometrically across the filters so
  // no single filter carries the whole scale.
  const double lead = trimmed[eff];
  const double mag = std::pow(std::abs(lead), 1.0 / static_cast<double>(groups.size()));
  for (auto& group : groups) {
    Vector f = Vector::Ones(1);
    for (const auto& fac : group) f = convolve_full(f, fac);
    cascade.filters.emplace_back(pad_to(f * mag, s + 1));
  }
  if (lead < 0.0) cascade.filters.front().coeffs *= -1.0;

  cascade.reconstruction_error = refine_cascade(cascade.filters, trimmed);
  if (!std::isfinite(cascade.reconstruction_error))
    throw NumericFailure("factor_filter: refinement produced non-finite coefficients");
  return cascade;
}

SymbolPolynomial matrix_to_sequence(const Matrix& w) {
  const Index n = w.rows();
  const Index d = w.cols();
  require(n >= 1 && d >= 1, "matrix_to_sequence: matrix must be nonempty");
  Vector u = Vector::Zero(n * d);
  for (Index j = 1; j <= n; ++j)
    for (Index k = 1; k <= d; ++k) u[j * d - k] = w(j - 1, k - 1);
  return SymbolPolynomial{std::move(u)};
}

namespace {

constexpr double kBiasMargin = 1e-9;

struct AffineChain {
  // After l hidden layers the chain value is prefix * x + offset, with the
  // exact per-coordinate range [lo, hi] over the input box.
  Matrix prefix;
  Vector offset;
  Vector lo, hi;
};

AffineChain chain_start(Index d, const Vector& in_lo, const Vector& in_hi) {
  AffineChain c;
  c.prefix = Matrix::Identity(d, d);
  c.offset = Vector::Zero(d);
  c.lo = in_lo;
  c.hi = in_hi;
  return c;
}

// Advances the affine enclosure through one expansive convolution plus a
// constant bias. Ranges are exact because the chain is affine in x.
void chain_step(AffineChain& c, const Filter& w, double bias,
                const Vector& in_lo, const Vector& in_hi) {
  const Index rows = c.prefix.rows() + w.s();
  Matrix next(rows, c.prefix.cols());
  for (Index col = 0; col < c.prefix.cols(); ++col)
    next.col(col) = convolve_full(w.coeffs, Vector(c.prefix.col(col)));
  c.prefix = std::move(next);
  c.offset = pad_to(convolve_full(w.coeffs, c.offset), rows);
  c.offset.array() += bias;
  c.lo.resize(rows);
  c.hi.resize(rows);
  for (Index q = 0; q < rows; ++q) {
    double lo = c.offset[q], hi = c.offset[q];
    for (Index i = 0; i < c.prefix.cols(); ++i) {
      const double p = c.prefix(q, i);
      lo += p >= 0.0 ? p * in_lo[i] : p * in_hi[i];
      hi += p >= 0.0 ? p * in_hi[i] : p * in_lo[i];
    }
    c.lo[q] = lo;
    c.hi[q] = hi;
  }
}

Vector theta_padded(const Vector& theta, Index d, Index len, Index pool_offset = 0) {
  Vector out = Vector::Zero(len);
  for (Index j = 1; j <= theta.size(); ++j) {
    const Index pos = j * d - 1 + pool_offset;  // 0-based selected index
    if (pos < len) out[pos] = theta[j - 1];
  }
  return out;
}

// Offset accumulated by the biased hidden chain, evaluated like the real
// forward pass at x = 0 so the cancellation against the final bias follows
// the same floating-point path.
Vector accumulated_offset(const std::vector<Filter>& filters,
                          const Vector& scalar_biases, Index input_len) {
  Vector z = Vector::Zero(input_len);
  for (Index l = 0; l < scalar_biases.size(); ++l) {
    z = expansive_conv(filters[l], z);
    z.array() += scalar_biases[l];
    z = z.cwiseMax(0.0);
  }
  return expansive_conv(filters.back(), z);
}

CompiledStage compile_stage_impl(const Matrix& w, const Vector& theta, int s,
                                 const Vector& in_lo, const Vector& in_hi,
                                 BiasSynthesis mode) {
  const Index n = w.rows();
  const Index d = w.cols();
  require(theta.size() == n, "compile: bias length must match the row count");
  require(s >= 2 && s <= d, "compile: need 2 <= s <= input width");
  require(in_lo.size() == d && in_hi.size() == d, "compile: box must match input width");

  const int l_star = static_cast<int>((n * d + s - 2) / (s - 1));  // ceil(nd/(s-1))
  const SymbolPolynomial u = matrix_to_sequence(w);

  CompiledStage stage{.filters = {},
                      .scalar_biases = Vector::Zero(l_star - 1),
                      .final_bias = Vector(),
                      .pooling = PoolingSpec(static_cast<int>(d) + l_star * s,
                                             static_cast<int>(d), 0,
                                             static_cast<int>(n)),
                      .pooled_theta = theta};

  if (u.is_zero()) {
    // A zero map has no symbol factorization; a zero filter followed by
    // delta layers sends everything to zero and the final bias carries theta.
    stage.filters.emplace_back(Vector::Zero(s + 1));
    for (int l = 1; l < l_star; ++l) stage.filters.push_back(Filter::delta(s));
    stage.final_bias = theta_padded(theta, d, d + static_cast<Index>(l_star) * s);
    return stage;
  }

  FilterCascade cascade = factor_filter(u, s);
  if (static_cast<int>(cascade.filters.size()) > l_star)
    throw NumericFailure("compile: cascade exceeds the layer budget");
  stage.filters = std::move(cascade.filters);
  while (static_cast<int>(stage.filters.size()) < l_star)
    stage.filters.push_back(Filter::delta(s));

  if (mode == BiasSynthesis::Tight) {
    AffineChain chain = chain_start(d, in_lo, in_hi);
    for (int l = 0; l < l_star - 1; ++l) {
      chain_step(chain, stage.filters[l], 0.0, in_lo, in_hi);
      const double b = std::max(0.0, kBiasMargin - chain.lo.minCoeff());
      stage.scalar_biases[l] = b;
      chain.offset.array() += b;
      chain.lo.array() += b;
      chain.hi.array() += b;
    }
  } else {
    double level = std::max(in_lo.cwiseAbs().maxCoeff(), in_hi.cwiseAbs().maxCoeff());
    double power = 1.0;
    for (int l = 0; l < l_star - 1; ++l) {
      level *= stage.filters[l].coeffs.cwiseAbs().sum();
      stage.scalar_biases[l] = power * level;
      power *= 2.0;
      if (!std::isfinite(stage.scalar_biases[l]))
        throw NumericFailure(
            "compile: the doubling bias ladder overflowed; use tight mode");
    }
  }

  const Vector accumulated =
      accumulated_offset(stage.filters, stage.scalar_biases, d);
  stage.final_bias =
      theta_padded(theta, d, accumulated.size()) - accumulated;
  return stage;
}

}  // namespace

CompiledStage compile_dense_layer(const Matrix& w, const Vector& theta, int s,
                                  double input_bound, BiasSynthesis mode) {
  require(input_bound >= 0.0, "compile: input bound must be nonnegative");
  const Vector lo = Vector::Constant(w.cols(), -input_bound);
  const Vector hi = Vector::Constant(w.cols(), input_bound);
  return compile_stage_impl(w, theta, s, lo, hi, mode);
}

CompiledStage compile_dense_layer_boxed(const Matrix& w, const Vector& theta, int s,
                                        const Vector& input_lo, const Vector& input_hi,
                                        BiasSynthesis mode) {
  return compile_stage_impl(w, theta, s, input_lo, input_hi, mode);
}

CompiledEdcnn compile_dense_net(const DenseNet& net, int s, double input_bound,
                                BiasSynthesis mode) {
  require(!net.layers.empty(), "compile: network has no layers");
  CompiledEdcnn out;
  out.s = s;
  out.input_dim = static_cast<int>(net.layers.front().weights.cols());
  out.input_bound = input_bound;

  Vector lo = Vector::Constant(out.input_dim, -input_bound);
  Vector hi = Vector::Constant(out.input_dim, input_bound);
  for (const auto& layer : net.layers) {
    require(layer.activated, "compile: every layer of the feature map must be activated");
    require(layer.weights.cols() == lo.size(), "compile: layer widths do not chain");
    out.stages.push_back(
        compile_stage_impl(layer.weights, layer.bias, s, lo, hi, mode));

    // Exact output range of sigma(Wx + theta) over the box, widened a hair so
    // the compiled stage's rounding stays inside the next stage's box. The
    // next box is collapsed to a single sup-norm level.
    const Index n = layer.weights.rows();
    double top = 0.0;
    for (Index j = 0; j < n; ++j) {
      double h = layer.bias[j];
      for (Index i = 0; i < lo.size(); ++i) {
        const double p = layer.weights(j, i);
        h += p >= 0.0 ? p * hi[i] : p * lo[i];
      }
      top = std::max(top, h);
    }
    top = std::max(0.0, top);
    top += 1e-6 * (1.0 + top);
    lo = Vector::Zero(n);
    hi = Vector::Constant(n, top);
  }
  return out;
}

std::vector<std::pair<FilterCascade, PoolingSpec>> compile_matrix_chain(
    const std::vector<Matrix>& ws, int s) {
  require(!ws.empty(), "compile_matrix_chain: empty chain");
  require(s >= 2, "compile_matrix_chain: need s >= 2");
  std::vector<std::pair<FilterCascade, PoolingSpec>> out;
  Index width = ws.front().cols();
  for (const auto& w : ws) {
    require(w.cols() == width, "compile_matrix_chain: dimensions do not chain");
    require(s <= w.cols(), "compile_matrix_chain: need s <= every input width");
    FilterCascade cascade = factor_filter(matrix_to_sequence(w), s);
    const int expanded =
        static_cast<int>(w.cols()) + static_cast<int>(cascade.filters.size()) * s;
    out.emplace_back(std::move(cascade),
                     PoolingSpec(expanded, static_cast<int>(w.cols()), 0,
                                 static_cast<int>(w.rows())));
    width = w.rows();
  }
  return out;
}

Vector apply_matrix_chain(
    const std::vector<std::pair<FilterCascade, PoolingSpec>>& chain, const Vector& x) {
  Vector z = x;
  for (const auto& [cascade, pooling] : chain) {
    for (const auto& w : cascade.filters) z = expansive_conv(w, z);
    z = pool(pooling, z);
  }
  return z;
}

Vector stage_forward(const CompiledStage& stage, const Vector& x, int pool_offset) {
  require(x.size() == stage.input_len(), "stage forward: input width mismatch");
  require(pool_offset >= 0, "stage forward: pooling offset must be nonnegative");
  const Index d = stage.input_len();
  const Index n = stage.output_len();
  require(n * d + pool_offset <= stage.expanded_len(),
          "stage forward: pooling offset out of range");

  Vector z = x;
  for (Index l = 0; l < stage.scalar_biases.size(); ++l) {
    z = expansive_conv(stage.filters[l], z);
    z.array() += stage.scalar_biases[l];
    z = z.cwiseMax(0.0);
  }
  Vector pre = expansive_conv(stage.filters.back(), z) + stage.final_bias;
  if (pool_offset > 0) {
    // Shifted pooling reads positions j*d + offset; the dense bias has to sit
    // there instead of at j*d.
    for (Index j = 1; j <= n; ++j) {
      pre[j * d - 1] -= stage.pooled_theta[j - 1];
      pre[j * d - 1 + pool_offset] += stage.pooled_theta[j - 1];
    }
  }
  pre = pre.cwiseMax(0.0);
  const PoolingSpec spec(stage.expanded_len(), static_cast<int>(d), pool_offset,
                         static_cast<int>(n));
  return pool(spec, pre);
}

Vector forward(const CompiledEdcnn& net, const Vector& x) {
  require(x.size() == net.input_dim, "compiled forward: input width mismatch");
  Vector z = x;
  for (const auto& stage : net.stages) z = stage_forward(stage, z);
  return z;
}

InvarianceReport verify_translation_invariance(const CompiledEdcnn& net,
                                               const SupportedVector& x, int k,
                                               double tolerance) {
  require(!net.stages.empty(), "invariance: empty network");
  require(x.dim() == net.input_dim, "invariance: input width mismatch");
  require(k >= 0, "invariance: shift must be nonnegative");
  const int support_end = x.support_start + x.support_len - 1;
  require(support_end + k <= x.dim(), "invariance: shift out of range");
  require(net.stages.front().output_len() * net.stages.front().input_len() + k <=
              net.stages.front().expanded_len(),
          "invariance: the first stage admits no pooling at this offset");

  const Vector base = forward(net, x.values);
  const Vector shifted_input =
      k == 0 ? x.values : translate(TranslationOp(k + 1, x.dim()), x.values);
  Vector z = stage_forward(net.stages.front(), shifted_input, k);
  for (std::size_t i = 1; i < net.stages.size(); ++i)
    z = stage_forward(net.stages[i], z);
  const double gap = (base - z).cwiseAbs().maxCoeff();
  return {gap <= tolerance, gap};
}

ReluAffineCertificate certify_relu_affine(const CompiledStage& stage,
                                          const Vector& input_lo,
                                          const Vector& input_hi) {
  AffineChain chain = chain_start(stage.input_len(), input_lo, input_hi);
  double min_pre = std::numeric_limits<double>::infinity();
  for (Index l = 0; l < stage.scalar_biases.size(); ++l) {
    chain_step(chain, stage.filters[l], stage.scalar_biases[l], input_lo, input_hi);
    min_pre = std::min(min_pre, chain.lo.minCoeff());
    if (!(min_pre >= 0.0)) break;
  }
  if (stage.scalar_biases.size() == 0) min_pre = 0.0;
  return {min_pre >= 0.0, min_pre};
}

long filter_parameter_count(const CompiledEdcnn& net) {
  long count = 0;
  for (const auto& stage : net.stages)
    count += static_cast<long>(stage.filters.size()) * (net.s + 1);
  return count;
}

namespace {

Json vector_to_json(const Vector& v) {
  Json arr = Json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vector vector_from_json(const Json& arr) {
  Vector v(arr.size());
  Index i = 0;
  for (const auto& x : arr) v[i++] = x.get<double>();
  return v;
}

}  // namespace

std::string compiled_to_json(const CompiledEdcnn& net) {
  Json doc;
  doc["s"] = net.s;
  doc["stages"] = Json::array();
  for (const auto& stage : net.stages) {
    Json js;
    js["filters"] = Json::array();
    for (const auto& w : stage.filters) js["filters"].push_back(vector_to_json(w.coeffs));
    js["scalar_biases"] = vector_to_json(stage.scalar_biases);
    js["final_bias"] = vector_to_json(stage.final_bias);
    js["pooling"] = Json{{"stride", stage.pooling.stride},
                         {"offset", stage.pooling.offset},
                         {"output_len", stage.pooling.output_len}};
    doc["stages"].push_back(std::move(js));
  }
  doc["input_dim"] = net.input_dim;
  doc["input_bound"] = net.input_bound;
  return doc.dump(2) + "\n";
}

CompiledEdcnn compiled_from_json(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw InputError(std::string("compiled network JSON: ") + e.what());
  }
  try {
    CompiledEdcnn net;
    net.s = doc.at("s").get<int>();
    net.input_dim = doc.at("input_dim").get<int>();
    net.input_bound = doc.at("input_bound").get<double>();
    for (const auto& js : doc.at("stages")) {
      CompiledStage stage{
          .filters = {},
          .scalar_biases = vector_from_json(js.at("scalar_biases")),
          .final_bias = vector_from_json(js.at("final_bias")),
          .pooling = PoolingSpec(static_cast<int>(js.at("final_bias").size()),
                                 js.at("pooling").at("stride").get<int>(),
                                 js.at("pooling").at("offset").get<int>(),
                                 js.at("pooling").at("output_len").get<int>()),
          .pooled_theta = Vector()};
      for (const auto& f : js.at("filters")) stage.filters.emplace_back(vector_from_json(f));
      // Recover the dense bias at the pooled positions: the accumulated
      // hidden offset cancels out of final_bias there.
      const Vector accumulated = accumulated_offset(
          stage.filters, stage.scalar_biases, stage.pooling.stride);
      stage.pooled_theta = Vector::Zero(stage.pooling.output_len);
      for (Index j = 1; j <= stage.pooling.output_len; ++j) {
        const Index pos = j * stage.pooling.stride - 1;
        if (pos < stage.final_bias.size())
          stage.pooled_theta[j - 1] = stage.final_bias[pos] + accumulated[pos];
      }
      net.stages.push_back(std::move(stage));
    }
    return net;
  } catch (const Json::exception& e) {
    throw InputError(std::string("compiled network JSON: ") + e.what());
  }
}

void save_compiled(const CompiledEdcnn& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open for writing: " + path);
  out << compiled_to_json(net);
}

CompiledEdcnn load_compiled(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return compiled_from_json(buf.str());
}

}  // namespace edcnn
