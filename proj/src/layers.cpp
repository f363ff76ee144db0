#include "gnncomm/layers.hpp"

#include "gnncomm/errors.hpp"

namespace gnncomm {

Var activate(Activation act, const Var& x) {
  switch (act) {
    case Activation::identity: return x;
    case Activation::relu: return relu(x);
    case Activation::tanh: return tanh(x);
  }
  return x;
}

Activation parse_activation(std::string_view name) {
  if (name == "identity" || name == "linear" || name == "none") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "identity";
}

Dense Dense::create(ParamStore& store, const std::string& name, std::size_t d_in, std::size_t d_out,
                    Activation act) {
  Dense d;
  d.weight = store.create(name + ".w", d_in, d_out, d_in);
  d.bias = store.create(name + ".b", 1, d_out, d_in);
  d.activation = act;
  return d;
}

Var Dense::forward(const Var& x) const {
  return activate(activation, add_row(matmul(x, weight), bias));
}

Mlp Mlp::create(ParamStore& store, const std::string& name, std::size_t d_in,
                const std::vector<std::size_t>& hidden, std::size_t d_out, Activation hidden_act,
                Activation out_act) {
  Mlp m;
  std::size_t prev = d_in;
  for (std::size_t k = 0; k < hidden.size(); ++k) {
    m.layers.push_back(Dense::create(store, name + ".l" + std::to_string(k), prev, hidden[k], hidden_act));
    prev = hidden[k];
  }
  m.layers.push_back(Dense::create(store, name + ".l" + std::to_string(hidden.size()), prev, d_out, out_act));
  return m;
}

Var Mlp::forward(const Var& x) const {
  Var h = x;
  for (const auto& l : layers) h = l.forward(h);
  return h;
}

}  // namespace gnncomm
