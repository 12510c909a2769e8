#pragma once

#include <string>

#include "ttc/params.hpp"
#include "ttc/tape.hpp"

namespace ttc {

// Single LSTM cell over 1-D vectors. Gate layout in the stacked [4H]
// preactivation is input, forget, candidate, output.
struct LstmCell {
  std::string prefix;  // parameter names: <prefix>.W_x, <prefix>.W_h, <prefix>.b
  int input_dim = 0;
  int hidden_dim = 0;

  // Creates W_x [4H x in], W_h [4H x H], b [4H].
  void create_params(ParamStore& store) const;

  // Sets the forget-gate slice of the bias to +1.
  void bias_forget_gate(ParamStore& store) const;

  struct State {
    ad::Tensor h;
    ad::Tensor c;
  };

  State zero_state(ad::Tape& tape) const;
  State step(ParamBinder& params, const ad::Tensor& x, const State& prev) const;
};

}  // namespace ttc
