#include "gnncomm/gnn.hpp"

#include <cmath>

#include "gnncomm/errors.hpp"

namespace gnncomm {

namespace {

struct EdgeIndex {
  std::vector<std::size_t> src, dst;
};

EdgeIndex edge_index(const CommGraph& g) {
  EdgeIndex idx;
  idx.src.reserve(g.num_edges());
  idx.dst.reserve(g.num_edges());
  for (const auto& e : g.edges()) {
    idx.src.push_back(e.src);
    idx.dst.push_back(e.dst);
  }
  return idx;
}

void check_input(const char* who, const CommGraph& g, const Var& h, std::size_t d_in) {
  if (h.rows() != g.num_nodes() || h.cols() != d_in) {
    throw DimensionError(std::string(who) + ": expected input " + std::to_string(g.num_nodes()) + "x" +
                         std::to_string(d_in) + ", got " + shape_str(h.value()));
  }
}

void check_weights(const CommGraph& g, const EdgeWeights& ew) {
  if (ew.present() && (ew.learned.rows() != g.num_edges() || ew.learned.cols() != 1)) {
    throw DimensionError("edge weights " + shape_str(ew.learned.value()) + " do not match " +
                         std::to_string(g.num_edges()) + " edges");
  }
}

// Numeric graph weights or the learned column.
Var edge_weight_column(const CommGraph& g, const EdgeWeights& ew) {
  if (ew.present()) return ew.learned;
  Matrix w(g.num_edges(), 1);
  for (std::size_t k = 0; k < g.num_edges(); ++k) w(k, 0) = g.weight(k);
  return Var(std::move(w));
}

// Non-empty in-edge groups, for per-neighborhood normalization.
std::vector<std::vector<std::size_t>> neighborhoods(const CommGraph& g) {
  std::vector<std::vector<std::size_t>> by_dst(g.num_nodes());
  for (std::size_t k = 0; k < g.num_edges(); ++k) by_dst[g.edges()[k].dst].push_back(k);
  std::vector<std::vector<std::size_t>> out;
  for (auto& s : by_dst)
    if (!s.empty()) out.push_back(std::move(s));
  return out;
}

}  // namespace

GcnLayer GcnLayer::create(ParamStore& store, const std::string& name, std::size_t d_in,
                          std::size_t d_out, Activation act) {
  return GcnLayer(store.create(name + ".w", d_in, d_out, d_in), act);
}

Var GcnLayer::forward(const CommGraph& g, const Var& h, const EdgeWeights& ew) const {
  check_input("gcn_forward", g, h, in_dim());
  check_weights(g, ew);
  const std::size_t n = g.num_nodes();
  Var z = matmul(h, weight_);
  if (g.num_edges() == 0) return activate(activation_, Var(Matrix(n, out_dim())));

  std::vector<double> deg(n, 0.0);
  for (const auto& e : g.edges()) deg[e.dst] += 1.0;
  Matrix norm(g.num_edges(), 1);
  for (std::size_t k = 0; k < g.num_edges(); ++k) {
    const auto& e = g.edges()[k];
    norm(k, 0) = 1.0 / std::sqrt(std::max(deg[e.dst], 1.0) * std::max(deg[e.src], 1.0));
  }
  Var coef = mul_constant(edge_weight_column(g, ew), norm);
  const EdgeIndex idx = edge_index(g);
  Var messages = scale_rows(gather_rows(z, idx.src), coef);
  return activate(activation_, scatter_add_rows(messages, idx.dst, n));
}

GatLayer GatLayer::create(ParamStore& store, const std::string& name, std::size_t d_in,
                          std::size_t d_out) {
  return GatLayer(store.create(name + ".w", d_in, d_out, d_in),
                  store.create(name + ".a_src", d_out, 1, d_out),
                  store.create(name + ".a_dst", d_out, 1, d_out));
}

Var GatLayer::attention(const CommGraph& g, const Var& h) const {
  check_input("gat_forward", g, h, in_dim());
  Var z = matmul(h, weight_);
  const EdgeIndex idx = edge_index(g);
  Var logits = leaky_relu(add(gather_rows(matmul(z, attn_src_), idx.src),
                              gather_rows(matmul(z, attn_dst_), idx.dst)));
  return segment_softmax(logits, neighborhoods(g));
}

Var GatLayer::forward(const CommGraph& g, const Var& h, const EdgeWeights&) const {
  check_input("gat_forward", g, h, in_dim());
  const std::size_t n = g.num_nodes();
  if (g.num_edges() == 0) return Var(Matrix(n, out_dim()));
  Var z = matmul(h, weight_);
  const EdgeIndex idx = edge_index(g);
  Var logits = leaky_relu(add(gather_rows(matmul(z, attn_src_), idx.src),
                              gather_rows(matmul(z, attn_dst_), idx.dst)));
  Var alpha = segment_softmax(logits, neighborhoods(g));
  return scatter_add_rows(scale_rows(gather_rows(z, idx.src), alpha), idx.dst, n);
}

Aggregator parse_aggregator(std::string_view name) {
  if (name == "sum" || name == "add") return Aggregator::sum;
  if (name == "mean") return Aggregator::mean;
  if (name == "max") return Aggregator::max;
  if (name == "attention") return Aggregator::attention;
  throw ConfigError("unknown aggregator '" + std::string(name) + "'");
}

std::string_view to_string(Aggregator agg) {
  switch (agg) {
    case Aggregator::sum: return "sum";
    case Aggregator::mean: return "mean";
    case Aggregator::max: return "max";
    case Aggregator::attention: return "attention";
  }
  return "sum";
}

MpnnLayer MpnnLayer::create(ParamStore& store, const std::string& name, std::size_t d_in,
                            const MpnnOptions& opts) {
  MpnnLayer l;
  l.in_dim_ = d_in;
  l.opts_ = opts;
  // Hidden units of phi and psi share the layer's nonlinearity (relu for identity layers).
  const Activation hidden_act = opts.activation == Activation::identity ? Activation::relu : opts.activation;
  if (opts.message == MessageKind::mlp) {
    l.phi_ = Mlp::create(store, name + ".phi", 2 * d_in + opts.edge_dim, {opts.hidden}, opts.out_dim,
                         hidden_act, Activation::identity);
  } else {
    l.projection_ = store.create(name + ".phi.w", d_in, opts.out_dim, d_in);
  }
  if (opts.aggregator == Aggregator::attention) {
    l.query_ = store.create(name + ".att.q", d_in, opts.hidden, d_in);
    l.key_ = store.create(name + ".att.k", d_in, opts.hidden, d_in);
  }
  if (opts.update == UpdateKind::mlp) {
    l.psi_ = Mlp::create(store, name + ".psi", d_in + opts.out_dim, {opts.hidden}, opts.out_dim,
                         hidden_act, Activation::identity);
  }
  l.out_dim_ = opts.out_dim;
  return l;
}

MpnnLayer MpnnLayer::linear(Var projection, Aggregator agg, Activation act) {
  if (agg == Aggregator::attention) throw ConfigError("linear MPNN does not support attention aggregation");
  MpnnLayer l;
  l.in_dim_ = projection.rows();
  l.out_dim_ = projection.cols();
  l.opts_.out_dim = l.out_dim_;
  l.opts_.aggregator = agg;
  l.opts_.message = MessageKind::linear_source;
  l.opts_.update = UpdateKind::aggregate;
  l.opts_.activation = act;
  l.projection_ = std::move(projection);
  return l;
}

Var MpnnLayer::forward(const CommGraph& g, const Var& h, const EdgeWeights& ew) const {
  check_input("mpnn_forward", g, h, in_dim_);
  check_weights(g, ew);
  const std::size_t n = g.num_nodes();
  const EdgeIndex idx = edge_index(g);

  Var aggregate;
  if (g.num_edges() == 0) {
    aggregate = Var(Matrix(n, out_dim_));
  } else {
    Var h_src = gather_rows(h, idx.src);
    Var messages;
    if (opts_.message == MessageKind::mlp) {
      std::vector<Var> parts{gather_rows(h, idx.dst), h_src};
      if (opts_.edge_dim > 0) {
        if (!g.has_edge_features() || g.edge_features().cols() != opts_.edge_dim) {
          throw DimensionError("mpnn_forward: message function expects edge features of width " +
                               std::to_string(opts_.edge_dim));
        }
        parts.push_back(Var(g.edge_features()));
      }
      messages = phi_.forward(concat_cols(parts));
    } else {
      messages = matmul(h_src, projection_);
    }
    if (ew.present() || g.weighted()) {
      if (opts_.aggregator != Aggregator::max) messages = scale_rows(messages, edge_weight_column(g, ew));
    }
    switch (opts_.aggregator) {
      case Aggregator::sum:
        aggregate = scatter_add_rows(messages, idx.dst, n);
        break;
      case Aggregator::mean: {
        std::vector<double> count(n, 0.0);
        for (std::size_t d : idx.dst) count[d] += 1.0;
        Matrix inv(idx.dst.size(), 1);
        for (std::size_t k = 0; k < idx.dst.size(); ++k) inv(k, 0) = 1.0 / count[idx.dst[k]];
        aggregate = scatter_add_rows(scale_rows(messages, Var(std::move(inv))), idx.dst, n);
        break;
      }
      case Aggregator::max:
        aggregate = scatter_max_rows(messages, idx.dst, n);
        break;
      case Aggregator::attention: {
        Var q = gather_rows(matmul(h, query_), idx.dst);
        Var k = gather_rows(matmul(h, key_), idx.src);
        Var logits = scale(row_dot(q, k), 1.0 / std::sqrt(static_cast<double>(opts_.hidden)));
        Var alpha = segment_softmax(logits, neighborhoods(g));
        aggregate = scatter_add_rows(scale_rows(messages, alpha), idx.dst, n);
        break;
      }
    }
  }

  if (opts_.update == UpdateKind::aggregate) return activate(opts_.activation, aggregate);
  const Var parts[] = {h, aggregate};
  return activate(opts_.activation, psi_.forward(concat_cols(parts)));
}

std::size_t layer_in_dim(const GnnLayer& layer) {
  return std::visit([](const auto& l) { return l.in_dim(); }, layer);
}

std::size_t layer_out_dim(const GnnLayer& layer) {
  return std::visit([](const auto& l) { return l.out_dim(); }, layer);
}

Var layer_forward(const GnnLayer& layer, const CommGraph& g, const Var& h, const EdgeWeights& ew) {
  return std::visit([&](const auto& l) { return l.forward(g, h, ew); }, layer);
}

LayerKind parse_layer_kind(std::string_view name) {
  if (name == "gcn") return LayerKind::gcn;
  if (name == "gat") return LayerKind::gat;
  if (name == "mpnn") return LayerKind::mpnn;
  throw ConfigError("unknown GNN layer kind '" + std::string(name) + "'");
}

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::gcn: return "gcn";
    case LayerKind::gat: return "gat";
    case LayerKind::mpnn: return "mpnn";
  }
  return "gcn";
}

GnnStack::GnnStack(std::vector<GnnLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("GNN stack needs at least one layer");
  for (std::size_t l = 1; l < layers_.size(); ++l) {
    if (layer_out_dim(layers_[l - 1]) != layer_in_dim(layers_[l])) {
      throw ConfigError("GNN stack: layer " + std::to_string(l - 1) + " outputs " +
                        std::to_string(layer_out_dim(layers_[l - 1])) + " dims but layer " +
                        std::to_string(l) + " expects " + std::to_string(layer_in_dim(layers_[l])));
    }
  }
}

GnnStack GnnStack::create(ParamStore& store, const std::string& prefix, std::size_t d_in,
                          const std::vector<LayerSpec>& specs) {
  std::vector<GnnLayer> layers;
  std::size_t d = d_in;
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const auto& s = specs[l];
    const std::string name = prefix + ".l" + std::to_string(l);
    switch (s.kind) {
      case LayerKind::gcn:
        layers.emplace_back(GcnLayer::create(store, name, d, s.out_dim, s.activation));
        break;
      case LayerKind::gat:
        layers.emplace_back(GatLayer::create(store, name, d, s.out_dim));
        break;
      case LayerKind::mpnn: {
        MpnnOptions o;
        o.out_dim = s.out_dim;
        o.hidden = s.hidden;
        o.edge_dim = s.edge_dim;
        o.aggregator = s.aggregator;
        o.activation = s.activation;
        layers.emplace_back(MpnnLayer::create(store, name, d, o));
        break;
      }
    }
    d = s.out_dim;
  }
  return GnnStack(std::move(layers));
}

std::size_t GnnStack::dim(std::size_t l) const {
  return l == 0 ? in_dim() : layer_out_dim(layers_.at(l - 1));
}

std::vector<Var> GnnStack::forward(const CommGraph& g, const Var& x, const EdgeWeights& ew) const {
  std::vector<Var> out;
  Var h = x;
  for (const auto& layer : layers_) {
    h = layer_forward(layer, g, h, ew);
    out.push_back(h);
  }
  return out;
}

}  // namespace gnncomm
