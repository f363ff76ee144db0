#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "gnncomm/autodiff.hpp"
#include "gnncomm/params.hpp"

namespace gnncomm {

enum class Activation { identity, relu, tanh };

Var activate(Activation act, const Var& x);
Activation parse_activation(std::string_view name);
std::string_view to_string(Activation act);

// y = act(x W + b)
struct Dense {
  Var weight;  // d_in x d_out
  Var bias;    // 1 x d_out
  Activation activation = Activation::identity;

  static Dense create(ParamStore& store, const std::string& name, std::size_t d_in, std::size_t d_out,
                      Activation act);
  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
  Var forward(const Var& x) const;
};

// Stack of Dense layers; hidden layers use `hidden_act`, the last one `out_act`.
struct Mlp {
  std::vector<Dense> layers;

  static Mlp create(ParamStore& store, const std::string& name, std::size_t d_in,
                    const std::vector<std::size_t>& hidden, std::size_t d_out, Activation hidden_act,
                    Activation out_act);
  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }
  Var forward(const Var& x) const;
};

}  // namespace gnncomm
