#include "edcnn/nets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace edcnn {

using Json = nlohmann::ordered_json;

Vector DenseNet::features(const Vector& x) const {
  Vector z = x;
  for (const auto& layer : layers) {
    require(layer.weights.cols() == z.size(), "dense forward: width mismatch");
    z = (layer.weights * z + layer.bias).eval();
    if (layer.activated) z = z.cwiseMax(0.0);
  }
  return z;
}

double DenseNet::output(const Vector& x) const {
  const Vector z = features(x);
  require(head.size() == z.size(), "dense forward: head width mismatch");
  return head.dot(z);
}

std::vector<int> NetworkSpec::widths() const {
  require(input_dim >= 1, "network: input dimension must be positive");
  std::vector<int> w{input_dim};
  for (const auto& layer : layers) {
    const int in = w.back();
    int out = 0;
    if (const auto* d = std::get_if<DenseDesc>(&layer)) {
      require(d->out >= 1, "network: dense layer needs positive width");
      out = d->out;
    } else if (const auto* c = std::get_if<ConvDesc>(&layer)) {
      require(c->s >= 1, "network: filter length parameter must be >= 1");
      out = c->kind == ConvKind::Expansive ? in + c->s : in - c->s;
      require(out >= 1, "network: contracting layer would empty the vector");
    } else if (const auto* m = std::get_if<MaxPoolDesc>(&layer)) {
      require(m->size >= 1, "network: pool size must be positive");
      out = in / m->size;
      require(out >= 1, "network: pooling would empty the vector");
    } else {
      const auto& p = std::get<LocationPoolDesc>(layer);
      require(p.stride >= 1 && p.output_len >= 1, "network: bad location pooling");
      out = p.output_len;
    }
    w.push_back(out);
  }
  return w;
}

namespace {

Index bias_length(BiasMode mode, int out) {
  switch (mode) {
    case BiasMode::None: return 0;
    case BiasMode::Scalar: return 1;
    case BiasMode::Full: return out;
  }
  return 0;
}

inline double relu_gate(double pre, double grad) { return pre > 0.0 ? grad : 0.0; }

}  // namespace

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  widths_ = spec_.widths();
  Index offset = 0;
  slices_.reserve(spec_.layers.size());
  std::vector<double> mask_flags;
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    Slice sl;
    sl.weights = offset;
    sl.bias = offset;
    const int in = widths_[l];
    const int out = widths_[l + 1];
    bool trainable = true;
    if (const auto* d = std::get_if<DenseDesc>(&spec_.layers[l])) {
      sl.weights = offset;
      sl.weights_len = static_cast<Index>(out) * in;
      sl.bias = offset + sl.weights_len;
      sl.bias_len = bias_length(d->bias, out);
      trainable = d->trainable;
    } else if (const auto* c = std::get_if<ConvDesc>(&spec_.layers[l])) {
      sl.weights = offset;
      sl.weights_len = c->s + 1;
      sl.bias = offset + sl.weights_len;
      sl.bias_len = bias_length(c->bias, out);
      trainable = c->trainable;
    }
    offset = sl.bias + sl.bias_len;
    slices_.push_back(sl);
    for (Index i = 0; i < sl.weights_len + sl.bias_len; ++i)
      mask_flags.push_back(trainable ? 1.0 : 0.0);
  }
  head_offset_ = offset;
  const Index total = offset + widths_.back();
  params_ = Vector::Zero(total);
  mask_ = Vector::Ones(total);
  for (std::size_t i = 0; i < mask_flags.size(); ++i) mask_[i] = mask_flags[i];
}

void Network::init_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  params_.setZero();
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    const Slice& sl = slices_[l];
    if (sl.weights_len == 0) continue;
    int fan_in = widths_[l];
    if (std::holds_alternative<ConvDesc>(spec_.layers[l]))
      fan_in = static_cast<int>(sl.weights_len);
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> unif(-a, a);
    for (Index i = 0; i < sl.weights_len; ++i) params_[sl.weights + i] = unif(rng);
  }
  const double a = 1.0 / std::sqrt(static_cast<double>(widths_.back()));
  std::uniform_real_distribution<double> unif(-a, a);
  for (Index i = 0; i < widths_.back(); ++i) params_[head_offset_ + i] = unif(rng);
}

double Network::forward(const Vector& x, Workspace& ws) const {
  require(x.size() == spec_.input_dim, "network forward: input width mismatch");
  const std::size_t num_layers = spec_.layers.size();
  ws.pre.resize(num_layers);
  ws.post.resize(num_layers);
  ws.argmax.resize(num_layers);

  const Vector* z = &x;
  for (std::size_t l = 0; l < num_layers; ++l) {
    const Slice& sl = slices_[l];
    const int in = widths_[l];
    const int out = widths_[l + 1];
    Vector& pre = ws.pre[l];
    Vector& post = ws.post[l];
    pre.resize(out);
    post.resize(out);

    if (const auto* d = std::get_if<DenseDesc>(&spec_.layers[l])) {
      Eigen::Map<const Matrix> w(params_.data() + sl.weights, out, in);
      pre.noalias() = w * (*z);
      if (d->bias == BiasMode::Full)
        pre += params_.segment(sl.bias, out);
      else if (d->bias == BiasMode::Scalar)
        pre.array() += params_[sl.bias];
      post = d->activated ? pre.cwiseMax(0.0) : pre;
    } else if (const auto* c = std::get_if<ConvDesc>(&spec_.layers[l])) {
      const double* w = params_.data() + sl.weights;
      const double* v = z->data();
      const int s = c->s;
      if (c->kind == ConvKind::Expansive) {
        for (int m = 0; m < out; ++m) {
          double acc = 0.0;
          const int i_lo = std::max(0, m - s);
          const int i_hi = std::min(in - 1, m);
          for (int i = i_lo; i <= i_hi; ++i) acc += w[m - i] * v[i];
          pre[m] = acc;
        }
      } else {
        for (int m = 0; m < out; ++m) {
          double acc = 0.0;
          for (int i = 0; i <= s; ++i) acc += w[i] * v[m + s - i];
          pre[m] = acc;
        }
      }
      if (c->bias == BiasMode::Full)
        pre += params_.segment(sl.bias, out);
      else if (c->bias == BiasMode::Scalar)
        pre.array() += params_[sl.bias];
      post = c->activated ? pre.cwiseMax(0.0) : pre;
    } else if (const auto* m = std::get_if<MaxPoolDesc>(&spec_.layers[l])) {
      auto& routes = ws.argmax[l];
      routes.resize(out);
      for (int k = 0; k < out; ++k) {
        int best = k * m->size;
        for (int i = best + 1; i < (k + 1) * m->size; ++i)
          if ((*z)[i] > (*z)[best]) best = i;  // first maximal index wins ties
        routes[k] = best;
        post[k] = (*z)[best];
      }
      pre = post;
    } else {
      const auto& p = std::get<LocationPoolDesc>(spec_.layers[l]);
      for (int k = 1; k <= out; ++k) {
        const Index idx = static_cast<Index>(k) * p.stride + p.offset;
        post[k - 1] = idx <= in ? (*z)[idx - 1] : 0.0;
      }
      pre = post;
    }
    z = &post;
  }
  ws.features = *z;
  return params_.segment(head_offset_, widths_.back()).dot(*z);
}

double Network::forward(const Vector& x) const {
  Workspace ws;
  return forward(x, ws);
}

Vector Network::features(const Vector& x) const {
  Workspace ws;
  forward(x, ws);
  return ws.features;
}

void Network::backward(const Vector& x, double upstream, Workspace& ws,
                       Vector& grad) const {
  require(grad.size() == params_.size(), "backward: gradient buffer size mismatch");
  const std::size_t num_layers = spec_.layers.size();
  const int feat = widths_.back();
  const int max_width = *std::max_element(widths_.begin(), widths_.end());
  if (ws.dz.size() < max_width) ws.dz.resize(max_width);
  if (ws.dnext.size() < max_width) ws.dnext.resize(max_width);

  grad.segment(head_offset_, feat) += upstream * ws.features;
  ws.dz.head(feat) = upstream * params_.segment(head_offset_, feat);

  for (std::size_t l = num_layers; l-- > 0;) {
    const Slice& sl = slices_[l];
    const int in = widths_[l];
    const int out = widths_[l + 1];
    const Vector& z_in = l == 0 ? x : ws.post[l - 1];
    auto dz = ws.dz.head(out);
    auto dnext = ws.dnext.head(in);

    if (const auto* d = std::get_if<DenseDesc>(&spec_.layers[l])) {
      if (d->activated)
        for (int m = 0; m < out; ++m) dz[m] = relu_gate(ws.pre[l][m], dz[m]);
      Eigen::Map<const Matrix> w(params_.data() + sl.weights, out, in);
      Eigen::Map<Matrix> gw(grad.data() + sl.weights, out, in);
      gw.noalias() += dz * z_in.transpose();
      if (d->bias == BiasMode::Full)
        grad.segment(sl.bias, out) += dz;
      else if (d->bias == BiasMode::Scalar)
        grad[sl.bias] += dz.sum();
      dnext.noalias() = w.transpose() * dz;
    } else if (const auto* c = std::get_if<ConvDesc>(&spec_.layers[l])) {
      if (c->activated)
        for (int m = 0; m < out; ++m) dz[m] = relu_gate(ws.pre[l][m], dz[m]);
      const double* w = params_.data() + sl.weights;
      double* gw = grad.data() + sl.weights;
      const int s = c->s;
      if (c->kind == ConvKind::Expansive) {
        // pre[m] = sum_i w[m-i] z[i]
        for (int i = 0; i < in; ++i) {
          const double zi = z_in[i];
          double acc = 0.0;
          for (int t = 0; t <= s; ++t) {
            const double dp = dz[i + t];
            gw[t] += dp * zi;
            acc += w[t] * dp;
          }
          dnext[i] = acc;
        }
      } else {
        // pre[m] = sum_t w[t] z[m+s-t]
        dnext.setZero();
        for (int m = 0; m < out; ++m) {
          const double dp = dz[m];
          for (int t = 0; t <= s; ++t) {
            gw[t] += dp * z_in[m + s - t];
            dnext[m + s - t] += w[t] * dp;
          }
        }
      }
      if (c->bias == BiasMode::Full)
        grad.segment(sl.bias, out) += dz;
      else if (c->bias == BiasMode::Scalar)
        grad[sl.bias] += dz.sum();
    } else if (std::holds_alternative<MaxPoolDesc>(spec_.layers[l])) {
      dnext.setZero();
      for (int k = 0; k < out; ++k) dnext[ws.argmax[l][k]] += dz[k];
    } else {
      const auto& p = std::get<LocationPoolDesc>(spec_.layers[l]);
      dnext.setZero();
      for (int k = 1; k <= out; ++k) {
        const Index idx = static_cast<Index>(k) * p.stride + p.offset;
        if (idx <= in) dnext[idx - 1] += dz[k - 1];
      }
    }
    std::swap(ws.dz, ws.dnext);
  }
}

Vector Network::gradient(const Vector& x) const {
  Workspace ws;
  forward(x, ws);
  Vector grad = Vector::Zero(params_.size());
  backward(x, 1.0, ws, grad);
  return grad;
}

long Network::parameter_count() const {
  long count = 0;
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    bool trainable = true;
    if (const auto* d = std::get_if<DenseDesc>(&spec_.layers[l]))
      trainable = d->trainable;
    else if (const auto* c = std::get_if<ConvDesc>(&spec_.layers[l]))
      trainable = c->trainable;
    if (trainable) count += slices_[l].weights_len + slices_[l].bias_len;
  }
  if (spec_.count_head_params) count += widths_.back();
  return count;
}

long count_parameters(const Network& net) { return net.parameter_count(); }

Network network_from_dense(const DenseNet& dense) {
  require(!dense.layers.empty(), "network_from_dense: empty network");
  NetworkSpec spec;
  spec.input_dim = static_cast<int>(dense.layers.front().weights.cols());
  for (const auto& layer : dense.layers)
    spec.layers.push_back(DenseDesc{static_cast<int>(layer.weights.rows()),
                                    BiasMode::Full, layer.activated, true});
  Network net(std::move(spec));
  Index offset = 0;
  for (const auto& layer : dense.layers) {
    const int out = static_cast<int>(layer.weights.rows());
    const int in = static_cast<int>(layer.weights.cols());
    Eigen::Map<Matrix>(net.params().data() + offset, out, in) = layer.weights;
    offset += layer.weights.size();
    net.params().segment(offset, out) = layer.bias;
    offset += out;
  }
  if (dense.head.size() > 0) {
    require(dense.head.size() == net.feature_dim(),
            "network_from_dense: head width mismatch");
    net.params().segment(net.head_offset(), dense.head.size()) = dense.head;
  }
  return net;
}

DenseNet dense_from_network(const Network& net) {
  DenseNet dense;
  Index offset = 0;
  for (std::size_t l = 0; l < net.spec().layers.size(); ++l) {
    const auto* d = std::get_if<DenseDesc>(&net.spec().layers[l]);
    require(d != nullptr, "dense_from_network: network has non-dense layers");
    require(d->bias == BiasMode::Full, "dense_from_network: layers must carry full biases");
    const int in = net.widths()[l];
    const int out = net.widths()[l + 1];
    DenseLayerValues layer;
    layer.weights = Eigen::Map<const Matrix>(net.params().data() + offset, out, in);
    layer.bias = net.params().segment(offset + static_cast<Index>(out) * in, out);
    layer.activated = d->activated;
    dense.layers.push_back(std::move(layer));
    offset += static_cast<Index>(out) * in + out;
  }
  dense.head = net.params().segment(net.head_offset(), net.feature_dim());
  return dense;
}

// --- serialization -----------------------------------------------------------

namespace {

Json vec_json(const Vector& v) {
  Json arr = Json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vector vec_from(const Json& arr) {
  Vector v(arr.size());
  Index i = 0;
  for (const auto& x : arr) v[i++] = x.get<double>();
  return v;
}

const char* bias_mode_name(BiasMode mode) {
  switch (mode) {
    case BiasMode::None: return "none";
    case BiasMode::Scalar: return "scalar";
    case BiasMode::Full: return "full";
  }
  return "none";
}

BiasMode bias_mode_from(const std::string& name) {
  if (name == "none") return BiasMode::None;
  if (name == "scalar") return BiasMode::Scalar;
  if (name == "full") return BiasMode::Full;
  throw InputError("unknown bias mode: " + name);
}

}  // namespace

std::string network_to_json(const Network& net) {
  Json doc;
  doc["input_dim"] = net.spec().input_dim;
  doc["count_head_params"] = net.spec().count_head_params;
  doc["layers"] = Json::array();
  Index offset = 0;
  for (std::size_t l = 0; l < net.spec().layers.size(); ++l) {
    const int in = net.widths()[l];
    const int out = net.widths()[l + 1];
    Json jl;
    if (const auto* d = std::get_if<DenseDesc>(&net.spec().layers[l])) {
      jl["type"] = "dense";
      Json rows = Json::array();
      Eigen::Map<const Matrix> w(net.params().data() + offset, out, in);
      for (Index r = 0; r < out; ++r) rows.push_back(vec_json(w.row(r).transpose()));
      jl["weights"] = std::move(rows);
      offset += static_cast<Index>(out) * in;
      jl["bias_mode"] = bias_mode_name(d->bias);
      const Index blen = bias_length(d->bias, out);
      jl["bias"] = vec_json(net.params().segment(offset, blen));
      offset += blen;
      jl["activated"] = d->activated;
      jl["trainable"] = d->trainable;
    } else if (const auto* c = std::get_if<ConvDesc>(&net.spec().layers[l])) {
      jl["type"] = "conv";
      jl["kind"] = c->kind == ConvKind::Expansive ? "expansive" : "contracting";
      jl["s"] = c->s;
      jl["filter"] = vec_json(net.params().segment(offset, c->s + 1));
      offset += c->s + 1;
      jl["bias_mode"] = bias_mode_name(c->bias);
      const Index blen = bias_length(c->bias, out);
      jl["bias"] = vec_json(net.params().segment(offset, blen));
      offset += blen;
      jl["activated"] = c->activated;
      jl["trainable"] = c->trainable;
    } else if (const auto* m = std::get_if<MaxPoolDesc>(&net.spec().layers[l])) {
      jl["type"] = "max_pool";
      jl["size"] = m->size;
    } else {
      const auto& p = std::get<LocationPoolDesc>(net.spec().layers[l]);
      jl["type"] = "location_pool";
      jl["stride"] = p.stride;
      jl["offset"] = p.offset;
      jl["output_len"] = p.output_len;
    }
    doc["layers"].push_back(std::move(jl));
  }
  doc["head"] = Json{{"weights", vec_json(net.params().segment(
                                     net.head_offset(), net.feature_dim()))},
                     {"trainable", true}};
  return doc.dump(2) + "\n";
}

Network network_from_json(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw InputError(std::string("network JSON: ") + e.what());
  }
  try {
    NetworkSpec spec;
    spec.input_dim = doc.at("input_dim").get<int>();
    spec.count_head_params = doc.value("count_head_params", true);
    std::vector<Vector> weight_blobs;
    std::vector<Vector> bias_blobs;
    for (const auto& jl : doc.at("layers")) {
      const std::string type = jl.at("type").get<std::string>();
      if (type == "dense") {
        const auto& rows = jl.at("weights");
        const int out = static_cast<int>(rows.size());
        const int in = static_cast<int>(rows.front().size());
        Vector w(static_cast<Index>(out) * in);
        for (int r = 0; r < out; ++r)
          for (int cidx = 0; cidx < in; ++cidx)
            w[static_cast<Index>(cidx) * out + r] = rows[r][cidx].get<double>();
        weight_blobs.push_back(std::move(w));
        bias_blobs.push_back(vec_from(jl.at("bias")));
        spec.layers.push_back(DenseDesc{out,
                                        bias_mode_from(jl.at("bias_mode").get<std::string>()),
                                        jl.value("activated", true),
                                        jl.value("trainable", true)});
      } else if (type == "conv") {
        weight_blobs.push_back(vec_from(jl.at("filter")));
        bias_blobs.push_back(vec_from(jl.at("bias")));
        spec.layers.push_back(
            ConvDesc{jl.at("kind").get<std::string>() == "expansive"
                         ? ConvKind::Expansive
                         : ConvKind::Contracting,
                     jl.at("s").get<int>(),
                     bias_mode_from(jl.at("bias_mode").get<std::string>()),
                     jl.value("activated", true), jl.value("trainable", true)});
      } else if (type == "max_pool") {
        weight_blobs.emplace_back();
        bias_blobs.emplace_back();
        spec.layers.push_back(MaxPoolDesc{jl.at("size").get<int>()});
      } else if (type == "location_pool") {
        weight_blobs.emplace_back();
        bias_blobs.emplace_back();
        spec.layers.push_back(LocationPoolDesc{jl.at("stride").get<int>(),
                                               jl.at("offset").get<int>(),
                                               jl.at("output_len").get<int>()});
      } else {
        throw InputError("unknown layer type: " + type);
      }
    }
    Network net(std::move(spec));
    Index offset = 0;
    for (std::size_t l = 0; l < weight_blobs.size(); ++l) {
      if (weight_blobs[l].size() > 0) {
        net.params().segment(offset, weight_blobs[l].size()) = weight_blobs[l];
        offset += weight_blobs[l].size();
      }
      if (bias_blobs[l].size() > 0) {
        net.params().segment(offset, bias_blobs[l].size()) = bias_blobs[l];
        offset += bias_blobs[l].size();
      }
    }
    const auto& head = doc.at("head").at("weights");
    require(static_cast<Index>(head.size()) == net.feature_dim(),
            "network JSON: head width mismatch");
    net.params().segment(net.head_offset(), net.feature_dim()) = vec_from(head);
    return net;
  } catch (const Json::exception& e) {
    throw InputError(std::string("network JSON: ") + e.what());
  }
}

void save_network(const Network& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open for writing: " + path);
  out << network_to_json(net);
}

Network load_network(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return network_from_json(buf.str());
}

// --- experiment catalogue ----------------------------------------------------

namespace {

constexpr int kInputDim = 30;
constexpr int kFilterS = 2;    // filter size 3
constexpr int kFcUnits = 10;

NetworkSpec dense_stack(int depth, BiasMode bias) {
  NetworkSpec spec;
  spec.input_dim = kInputDim;
  spec.count_head_params = false;
  for (int l = 0; l < depth; ++l)
    spec.layers.push_back(DenseDesc{kFcUnits, bias, true, true});
  return spec;
}

// One fit block: five convolution layers sharing a kind; the first four are
// linear and bias-free, the block closes with one shared scalar bias and a
// ReLU.
void append_fit_block(NetworkSpec& spec, ConvKind kind) {
  for (int l = 0; l < 4; ++l)
    spec.layers.push_back(ConvDesc{kind, kFilterS, BiasMode::None, false, true});
  spec.layers.push_back(ConvDesc{kind, kFilterS, BiasMode::Scalar, true, true});
}

NetworkSpec fit_conv(ConvKind kind, int blocks) {
  NetworkSpec spec;
  spec.input_dim = kInputDim;
  spec.count_head_params = false;
  append_fit_block(spec, kind);
  if (kind == ConvKind::Expansive) spec.layers.push_back(MaxPoolDesc{4});
  if (blocks == 2) {
    append_fit_block(spec, kind);
    if (kind == ConvKind::Expansive) spec.layers.push_back(MaxPoolDesc{2});
  }
  return spec;
}

// Learning-experiment convolution module: shared scalar bias everywhere
// except the last convolution layer, which carries a full bias vector.
NetworkSpec learn_conv(ConvKind kind, int depth, bool add_fc, bool add_pool) {
  NetworkSpec spec;
  spec.input_dim = kInputDim;
  spec.count_head_params = false;
  for (int l = 0; l < depth; ++l) {
    const BiasMode bias = l + 1 == depth ? BiasMode::Full : BiasMode::Scalar;
    spec.layers.push_back(ConvDesc{kind, kFilterS, bias, true, true});
  }
  const int conv_out = kind == ConvKind::Expansive ? kInputDim + depth * kFilterS
                                                   : kInputDim - depth * kFilterS;
  if (add_fc) spec.layers.push_back(DenseDesc{conv_out, BiasMode::Full, true, true});
  if (add_pool) spec.layers.push_back(MaxPoolDesc{2});
  return spec;
}

NetworkSpec variant_conv(ConvKind kind, int depth, BiasMode bias) {
  NetworkSpec spec;
  spec.input_dim = kInputDim;
  spec.count_head_params = false;
  for (int l = 0; l < depth; ++l)
    spec.layers.push_back(ConvDesc{kind, kFilterS, bias, true, true});
  return spec;
}

std::vector<ArchConfig> learn_archs(const std::vector<int>& depths) {
  std::vector<ArchConfig> archs;
  for (int depth : depths) {
    archs.push_back({"dfcn", depth, dense_stack(depth, BiasMode::Full)});
    archs.push_back({"cdcnn", depth, learn_conv(ConvKind::Contracting, depth, false, false)});
    archs.push_back({"cdcnn_fc", depth, learn_conv(ConvKind::Contracting, depth, true, false)});
    archs.push_back({"edcnn", depth, learn_conv(ConvKind::Expansive, depth, false, false)});
    archs.push_back({"edcnn_pl", depth, learn_conv(ConvKind::Expansive, depth, false, true)});
  }
  return archs;
}

}  // namespace

std::vector<std::string> experiment_names() {
  return {"fit_f1",   "fit_f2",   "fit_f3",   "f1m",           "f2m",
          "learn_f1", "learn_f2", "learn_f3", "consistency_f2", "consistency_f3"};
}

ExperimentDef build_experiment_config(const std::string& name) {
  ExperimentDef def;
  def.name = name;
  def.test_positions = {SupportPosition::Random};

  if (name == "fit_f1" || name == "fit_f2" || name == "fit_f3") {
    def.generator = name == "fit_f1"   ? GeneratorKind::FitF1
                    : name == "fit_f2" ? GeneratorKind::FitF2
                                       : GeneratorKind::FitF3;
    def.train_size = 900;
    def.test_size = 100;
    def.archs = {
        {"fc-1layer", 1, dense_stack(1, BiasMode::None)},
        {"cdcnn-1block", 1, fit_conv(ConvKind::Contracting, 1)},
        {"edcnn-1block", 1, fit_conv(ConvKind::Expansive, 1)},
        {"fc-2layer", 2, dense_stack(2, BiasMode::None)},
        {"cdcnn-2block", 2, fit_conv(ConvKind::Contracting, 2)},
        {"edcnn-2block", 2, fit_conv(ConvKind::Expansive, 2)},
    };
    return def;
  }
  if (name == "f1m" || name == "f2m") {
    def.generator = name == "f1m" ? GeneratorKind::F1m : GeneratorKind::F2m;
    def.train_size = 900;
    def.test_size = 100;
    def.edge_variant = true;
    const int depth = 4;
    def.archs = {
        {"dfcn", depth, dense_stack(depth, BiasMode::Full)},
        {"cdcnn_T", depth, variant_conv(ConvKind::Contracting, depth, BiasMode::Full)},
        {"cdcnn_F", depth, variant_conv(ConvKind::Contracting, depth, BiasMode::None)},
        {"cdcnn_S", depth, variant_conv(ConvKind::Contracting, depth, BiasMode::Scalar)},
        {"edcnn_T", depth, variant_conv(ConvKind::Expansive, depth, BiasMode::Full)},
        {"edcnn_F", depth, variant_conv(ConvKind::Expansive, depth, BiasMode::None)},
        {"edcnn_S", depth, variant_conv(ConvKind::Expansive, depth, BiasMode::Scalar)},
    };
    return def;
  }
  if (name == "learn_f1" || name == "learn_f2" || name == "learn_f3") {
    def.generator = name == "learn_f1"   ? GeneratorKind::LearnF1
                    : name == "learn_f2" ? GeneratorKind::LearnF2
                                         : GeneratorKind::LearnF3;
    def.train_size = 1000;
    def.test_size = 100;
    def.archs = learn_archs({1, 2, 3, 4, 5, 6});
    if (name == "learn_f3") {
      def.noise_std = 0.1;
      def.test_positions = {SupportPosition::Beginning, SupportPosition::Middle,
                            SupportPosition::End};
    }
    return def;
  }
  if (name == "consistency_f2" || name == "consistency_f3") {
    def.m_grid = {250, 500, 1000, 2000, 4000};
    def.train_size = def.m_grid.back();
    def.test_size = 500;
    def.test_positions = {SupportPosition::Beginning};
    if (name == "consistency_f2") {
      def.generator = GeneratorKind::LearnF2;
      def.archs = learn_archs({2, 4, 6});
    } else {
      def.generator = GeneratorKind::LearnF3;
      def.noise_std = 0.1;
      def.archs = learn_archs({6});
    }
    return def;
  }
  throw std::invalid_argument("unknown experiment name: " + name);
}

Network make_target_network(GeneratorKind kind, std::uint64_t seed) {
  NetworkSpec spec;
  spec.input_dim = kInputDim;
  const int depth = 5;
  switch (kind) {
    case GeneratorKind::FitF1:
    case GeneratorKind::FitF2:
      for (int l = 0; l < depth; ++l)
        spec.layers.push_back(ConvDesc{kind == GeneratorKind::FitF1
                                           ? ConvKind::Contracting
                                           : ConvKind::Expansive,
                                       kFilterS, BiasMode::None, true, true});
      break;
    case GeneratorKind::F1m:
    case GeneratorKind::F2m:
      for (int l = 0; l < depth; ++l)
        spec.layers.push_back(ConvDesc{kind == GeneratorKind::F1m
                                           ? ConvKind::Contracting
                                           : ConvKind::Expansive,
                                       kFilterS, BiasMode::Scalar, true, true});
      break;
    case GeneratorKind::FitF3:
      for (int l = 0; l < depth; ++l)
        spec.layers.push_back(DenseDesc{kFcUnits, BiasMode::None, true, true});
      break;
    default:
      throw std::invalid_argument("make_target_network: generator has a closed form");
  }
  Network net(std::move(spec));
  net.init_params(seed);
  if (kind == GeneratorKind::F1m || kind == GeneratorKind::F2m) {
    // the modified targets add the same fixed bias after every layer
    Index offset = 0;
    for (std::size_t l = 0; l < net.spec().layers.size(); ++l) {
      offset += kFilterS + 1;
      net.params()[offset] = 0.01;
      offset += 1;
    }
  }
  return net;
}

}  // namespace edcnn
