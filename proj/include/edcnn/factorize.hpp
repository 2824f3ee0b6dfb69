#pragma once

#include <optional>
#include <string>
#include <vector>

#include "edcnn/convops.hpp"
#include "edcnn/core.hpp"

namespace edcnn {

/// Generating polynomial sum_k u_k z^k of a coefficient sequence.
/// Convolution of sequences corresponds to multiplication of symbols.
struct SymbolPolynomial {
  Vector coeffs;

  /// Largest index whose coefficient exceeds tol_factor * max|u_k|;
  /// -1 for the zero polynomial.
  int effective_degree(double tol_factor = 1e-12) const;
  bool is_zero(double tol_factor = 1e-12) const { return effective_degree(tol_factor) < 0; }
};

/// A long filter decomposed into short filters on {0,...,s} whose
/// composition reproduces the source sequence within reconstruction_error
/// (relative max-norm).
struct FilterCascade {
  std::vector<Filter> filters;
  int s = 0;
  double reconstruction_error = 0.0;

  /// Coefficient sequence of the composed cascade.
  Vector product() const;
};

/// Factors a symbol polynomial of effective degree S into at most
/// ceil(S/(s-1)) filters supported on {0,...,s}. Roots come from the
/// balanced companion matrix; conjugate pairs are kept together so every
/// filter stays real. The factor order is chosen to keep partial products
/// small, and a Gauss-Newton pass on the stacked coefficients absorbs the
/// remaining root-finding error.
FilterCascade factor_filter(const SymbolPolynomial& u, int s);

/// Stacks a matrix into the coefficient sequence u with u[j*d'-k] = W(j,k)
/// (1-based), so that rows d', 2d', ... of the Toeplitz realization of u
/// are exactly the rows of W.
SymbolPolynomial matrix_to_sequence(const Matrix& w);

enum class BiasSynthesis { Tight, Paper };

/// One compiled block: an expansive filter cascade with shared scalar biases
/// on the hidden layers, a full bias vector before the last activation, and
/// location-based pooling that reads off the dense layer's outputs.
struct CompiledStage {
  std::vector<Filter> filters;   // L filters on {0,...,s}
  Vector scalar_biases;          // L-1 hidden-layer biases
  Vector final_bias;             // length input_len + L*s
  PoolingSpec pooling;           // stride = input_len, offset 0

  /// Dense-layer bias seen at the pooled positions; recomputable from the
  /// stored tensors, kept to make shifted-pooling evaluation cheap.
  Vector pooled_theta;

  int input_len() const { return pooling.stride; }
  int output_len() const { return pooling.output_len; }
  int expanded_len() const { return static_cast<int>(final_bias.size()); }
};

struct CompiledEdcnn {
  int s = 0;
  std::vector<CompiledStage> stages;
  int input_dim = 0;
  double input_bound = 0.0;
};

/// Compiles sigma(W x + theta) into one expansive stage that reproduces it
/// exactly (up to rounding) on [-input_bound, input_bound]^d. Tight mode
/// chooses the hidden biases from exact affine ranges over the input box;
/// Paper mode uses the ladder b_l = 2^(l-1) * |w_l|_1 * ... * B0.
CompiledStage compile_dense_layer(const Matrix& w, const Vector& theta, int s,
                                  double input_bound,
                                  BiasSynthesis mode = BiasSynthesis::Tight);

/// Per-coordinate box variant used when chaining stages.
CompiledStage compile_dense_layer_boxed(const Matrix& w, const Vector& theta, int s,
                                        const Vector& input_lo, const Vector& input_hi,
                                        BiasSynthesis mode);

struct DenseNet;  // nets.hpp

/// Compiles every dense layer of a ReLU network, chaining each stage's pooled
/// output into the next; the per-stage input bound is propagated from the
/// previous stage's exact output range.
CompiledEdcnn compile_dense_net(const DenseNet& net, int s, double input_bound,
                                BiasSynthesis mode = BiasSynthesis::Tight);

/// Bias-free compilation of a matrix product: each factor becomes a cascade
/// plus pooling, and the pooled composition equals W_J ... W_1 x.
std::vector<std::pair<FilterCascade, PoolingSpec>> compile_matrix_chain(
    const std::vector<Matrix>& ws, int s);

Vector apply_matrix_chain(const std::vector<std::pair<FilterCascade, PoolingSpec>>& chain,
                          const Vector& x);

/// Evaluates one compiled stage. `pool_offset` shifts the pooled positions
/// and re-places the dense bias at the shifted positions; offset 0 is the
/// plain forward pass.
Vector stage_forward(const CompiledStage& stage, const Vector& x, int pool_offset = 0);

/// Full forward pass through all stages (the compiled feature extractor).
Vector forward(const CompiledEdcnn& net, const Vector& x);

struct InvarianceReport {
  bool equal = false;
  double max_abs_gap = 0.0;
};

/// Checks that translating a supported input by k positions while moving the
/// first stage's pooling offset to k leaves the network output unchanged.
InvarianceReport verify_translation_invariance(const CompiledEdcnn& net,
                                               const SupportedVector& x, int k,
                                               double tolerance = 1e-9);

struct ReluAffineCertificate {
  bool certified = false;
  double min_preactivation = 0.0;
};

/// Certifies by exact affine ranges over the input box that every hidden
/// pre-activation of the stage is nonnegative, i.e. the hidden ReLUs act as
/// the identity there.
ReluAffineCertificate certify_relu_affine(const CompiledStage& stage,
                                          const Vector& input_lo,
                                          const Vector& input_hi);

/// Number of trainable scalars in the cascade filters (the quantity the
/// 3*n*d bound speaks about).
long filter_parameter_count(const CompiledEdcnn& net);

std::string compiled_to_json(const CompiledEdcnn& net);
CompiledEdcnn compiled_from_json(const std::string& text);
void save_compiled(const CompiledEdcnn& net, const std::string& path);
CompiledEdcnn load_compiled(const std::string& path);

}  // namespace edcnn
