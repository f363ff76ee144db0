#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gnncomm/autodiff.hpp"
#include "gnncomm/graph.hpp"
#include "gnncomm/layers.hpp"
#include "gnncomm/params.hpp"

namespace gnncomm {

// Edge weights for a forward pass. When `learned` is set it overrides the
// graph's numeric weights and receives gradients (rows aligned with edges).
struct EdgeWeights {
  Var learned;
  bool present() const { return learned.valid(); }
};

// Degree-normalized convolution:
//   h_i' = act( sum_{j in N(i)} ew_ji / sqrt(deg(i) deg(j)) * h_j W ).
// Degrees are in-degrees of the graph passed to forward, floored at 1 so a
// node without in-edges never divides by zero.
class GcnLayer {
 public:
  GcnLayer() = default;
  GcnLayer(Var weight, Activation act) : weight_(std::move(weight)), activation_(act) {}
  static GcnLayer create(ParamStore& store, const std::string& name, std::size_t d_in,
                         std::size_t d_out, Activation act = Activation::relu);

  std::size_t in_dim() const { return weight_.rows(); }
  std::size_t out_dim() const { return weight_.cols(); }
  Var forward(const CommGraph& g, const Var& h, const EdgeWeights& ew = {}) const;

 private:
  Var weight_;
  Activation activation_ = Activation::relu;
};

// Single-head attention layer: h_i' = sum_{j in N(i)} alpha_ji * h_j W, with
// alpha normalized per neighborhood from leaky_relu(z_j a_src + z_i a_dst),
// z = h W. No output activation. Edge weights are not used.
class GatLayer {
 public:
  GatLayer() = default;
  GatLayer(Var weight, Var attn_src, Var attn_dst)
      : weight_(std::move(weight)), attn_src_(std::move(attn_src)), attn_dst_(std::move(attn_dst)) {}
  static GatLayer create(ParamStore& store, const std::string& name, std::size_t d_in,
                         std::size_t d_out);

  std::size_t in_dim() const { return weight_.rows(); }
  std::size_t out_dim() const { return weight_.cols(); }
  Var forward(const CommGraph& g, const Var& h, const EdgeWeights& ew = {}) const;
  // Attention coefficients, one per edge of g (aligned with g.edges()).
  Var attention(const CommGraph& g, const Var& h) const;

 private:
  Var weight_;
  Var attn_src_;  // d_out x 1
  Var attn_dst_;  // d_out x 1
};

enum class Aggregator { sum, mean, max, attention };
Aggregator parse_aggregator(std::string_view name);
std::string_view to_string(Aggregator agg);

enum class MessageKind {
  mlp,            // phi = perceptron over [h_i, h_j, e_ji]
  linear_source,  // phi = h_j W
};
enum class UpdateKind {
  mlp,        // psi = perceptron over [h_i, aggregate]
  aggregate,  // psi returns the aggregate
};

struct MpnnOptions {
  std::size_t out_dim = 32;
  std::size_t hidden = 32;
  std::size_t edge_dim = 0;  // consumed by an mlp message function
  Aggregator aggregator = Aggregator::sum;
  MessageKind message = MessageKind::mlp;
  UpdateKind update = UpdateKind::mlp;
  Activation activation = Activation::relu;  // psi output; also hidden units unless identity
};

// h_i' = act( psi(h_i, AGG_{j in N(i)} phi(h_i, h_j, e_ji)) ). An empty
// neighborhood aggregates to the zero vector. Edge weights, when present,
// scale messages before sum/mean/attention aggregation.
class MpnnLayer {
 public:
  MpnnLayer() = default;
  static MpnnLayer create(ParamStore& store, const std::string& name, std::size_t d_in,
                          const MpnnOptions& opts);
  // linear_source message with explicit projection, update = aggregate.
  static MpnnLayer linear(Var projection, Aggregator agg, Activation act = Activation::identity);

  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return out_dim_; }
  const MpnnOptions& options() const { return opts_; }
  Var forward(const CommGraph& g, const Var& h, const EdgeWeights& ew = {}) const;

 private:
  std::size_t in_dim_ = 0;
  std::size_t out_dim_ = 0;
  MpnnOptions opts_;
  Mlp phi_;
  Var projection_;  // linear_source
  Mlp psi_;
  Var query_, key_;  // attention aggregator
};

using GnnLayer = std::variant<GcnLayer, GatLayer, MpnnLayer>;

std::size_t layer_in_dim(const GnnLayer& layer);
std::size_t layer_out_dim(const GnnLayer& layer);
Var layer_forward(const GnnLayer& layer, const CommGraph& g, const Var& h, const EdgeWeights& ew = {});

enum class LayerKind { gcn, gat, mpnn };
LayerKind parse_layer_kind(std::string_view name);
std::string_view to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::gcn;
  std::size_t out_dim = 32;
  Activation activation = Activation::relu;
  Aggregator aggregator = Aggregator::sum;  // mpnn only
  std::size_t hidden = 32;                  // mpnn only
  std::size_t edge_dim = 0;                 // mpnn only
};

// L >= 1 layers applied in sequence.
class GnnStack {
 public:
  GnnStack() = default;
  // Throws ConfigError when empty or when consecutive dimensions disagree.
  explicit GnnStack(std::vector<GnnLayer> layers);
  static GnnStack create(ParamStore& store, const std::string& prefix, std::size_t d_in,
                         const std::vector<LayerSpec>& specs);

  std::size_t depth() const { return layers_.size(); }
  std::size_t in_dim() const { return layer_in_dim(layers_.front()); }
  std::size_t out_dim() const { return layer_out_dim(layers_.back()); }
  // Dimension of H^(l); dim(0) is the input dimension.
  std::size_t dim(std::size_t l) const;
  const GnnLayer& layer(std::size_t l) const { return layers_.at(l); }

  // [H^(1), ..., H^(L)]; the input is not included.
  std::vector<Var> forward(const CommGraph& g, const Var& x, const EdgeWeights& ew = {}) const;

 private:
  std::vector<GnnLayer> layers_;
};

}  // namespace gnncomm
