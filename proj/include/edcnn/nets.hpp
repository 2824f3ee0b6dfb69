#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "edcnn/convops.hpp"
#include "edcnn/core.hpp"

namespace edcnn {

/// A ReLU network given by explicit weights: affine layers plus an optional
/// linear read-out head (empty head means the network is a feature map).
struct DenseLayerValues {
  Matrix weights;
  Vector bias;
  bool activated = true;
};

struct DenseNet {
  std::vector<DenseLayerValues> layers;
  Vector head;

  Vector features(const Vector& x) const;
  double output(const Vector& x) const;
};

// --- trainable layer vocabulary ---------------------------------------------

struct DenseDesc {
  int out = 0;
  BiasMode bias = BiasMode::Full;
  bool activated = true;
  bool trainable = true;
};

struct ConvDesc {
  ConvKind kind = ConvKind::Expansive;
  int s = 2;
  BiasMode bias = BiasMode::Scalar;
  bool activated = true;
  bool trainable = true;
};

struct MaxPoolDesc {
  int size = 2;
};

struct LocationPoolDesc {
  int stride = 1;
  int offset = 0;
  int output_len = 0;
};

using LayerDesc = std::variant<DenseDesc, ConvDesc, MaxPoolDesc, LocationPoolDesc>;

struct NetworkSpec {
  int input_dim = 0;
  std::vector<LayerDesc> layers;
  bool count_head_params = true;

  /// input width followed by each layer's output width; throws if any layer
  /// would produce an empty vector.
  std::vector<int> widths() const;
};

using ConvNetSpec = NetworkSpec;

/// Scratch buffers for one forward/backward pass; reusable across samples.
struct Workspace {
  std::vector<Vector> pre;    // per layer, before activation
  std::vector<Vector> post;   // per layer, after activation/pooling
  std::vector<std::vector<int>> argmax;  // max-pool routing
  Vector features;
  Vector dz, dnext;           // backward scratch
};

/// A network with all parameters in one flat vector; layers address their
/// slices by offset. The head is a trainable linear functional on the last
/// hidden vector.
class Network {
 public:
  explicit Network(NetworkSpec spec);

  /// Fan-in scaled uniform weights, zero biases.
  void init_params(std::uint64_t seed);

  double forward(const Vector& x) const;
  double forward(const Vector& x, Workspace& ws) const;
  Vector features(const Vector& x) const;

  /// Accumulates d(upstream * output)/d(params) into `grad`; requires the
  /// workspace of the matching forward call.
  void backward(const Vector& x, double upstream, Workspace& ws,
                Vector& grad) const;

  /// Gradient by a fresh forward + backward, upstream = 1.
  Vector gradient(const Vector& x) const;

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<int>& widths() const { return widths_; }
  Vector& params() { return params_; }
  const Vector& params() const { return params_; }
  /// 1 for trainable parameter slots, 0 for frozen ones.
  const Vector& trainable_mask() const { return mask_; }

  /// Number of trainable scalars; the head counts only when the spec says so.
  long parameter_count() const;

  int feature_dim() const { return widths_.back(); }
  Index head_offset() const { return head_offset_; }

 private:
  struct Slice {
    Index weights = 0;
    Index weights_len = 0;
    Index bias = 0;
    Index bias_len = 0;
  };

  NetworkSpec spec_;
  std::vector<int> widths_;
  std::vector<Slice> slices_;
  Index head_offset_ = 0;
  Vector params_;
  Vector mask_;
};

long count_parameters(const Network& net);

/// Builds a Network holding the given dense weights (full biases).
Network network_from_dense(const DenseNet& net);
/// Extracts dense weights from an all-dense network.
DenseNet dense_from_network(const Network& net);

std::string network_to_json(const Network& net);
Network network_from_json(const std::string& text);
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

// --- experiment catalogue ----------------------------------------------------

enum class GeneratorKind { FitF1, FitF2, FitF3, F1m, F2m, LearnF1, LearnF2, LearnF3 };
enum class SupportPosition { Random, Beginning, Middle, End };

struct ArchConfig {
  std::string label;
  int depth = 1;
  NetworkSpec spec;
};

struct ExperimentDef {
  std::string name;
  GeneratorKind generator = GeneratorKind::LearnF2;
  int input_dim = 30;
  int train_size = 900;
  int test_size = 100;
  std::vector<int> m_grid;                       // sample-size sweep; empty = fixed train_size
  std::vector<ArchConfig> archs;                 // one entry per architecture x depth
  std::vector<SupportPosition> test_positions;   // one result row group per position
  bool edge_variant = false;                     // extra row group with end-supported test data
  double noise_std = 0.0;
};

/// The experiment table: architectures, depths, sample sizes and data
/// generators for every named run.
ExperimentDef build_experiment_config(const std::string& name);

std::vector<std::string> experiment_names();

/// Frozen random network used as the data-generating target of the fit_* and
/// f1m/f2m experiments; deterministic in the seed.
Network make_target_network(GeneratorKind kind, std::uint64_t seed);

}  // namespace edcnn
