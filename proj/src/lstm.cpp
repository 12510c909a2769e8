#include "ttc/lstm.hpp"

#include "ttc/common.hpp"

namespace ttc {

void LstmCell::create_params(ParamStore& store) const {
  store.create(prefix + ".W_x", {4 * hidden_dim, input_dim});
  store.create(prefix + ".W_h", {4 * hidden_dim, hidden_dim});
  store.create(prefix + ".b", {4 * hidden_dim});
}

void LstmCell::bias_forget_gate(ParamStore& store) const {
  ad::Tensor& b = store.value(prefix + ".b");
  for (int i = hidden_dim; i < 2 * hidden_dim; ++i) b.at(i) += 1.0;
}

LstmCell::State LstmCell::zero_state(ad::Tape& tape) const {
  State s;
  s.h = tape.constant(ad::Tensor::zeros({hidden_dim}));
  s.c = tape.constant(ad::Tensor::zeros({hidden_dim}));
  return s;
}

LstmCell::State LstmCell::step(ParamBinder& params, const ad::Tensor& x, const State& prev) const {
  TTC_REQUIRE(x.rank() == 1 && x.size() == input_dim,
              prefix << ": step input has shape " << ad::shape_str(x.shape) << ", expected ["
                     << input_dim << "]");
  ad::Tape& t = params.tape();
  const int h = hidden_dim;

  ad::Tensor z = t.add(t.add(t.matmul(params(prefix + ".W_x"), x),
                             t.matmul(params(prefix + ".W_h"), prev.h)),
                       params(prefix + ".b"));
  ad::Tensor i_gate = t.sigmoid(t.slice(z, 0, h));
  ad::Tensor f_gate = t.sigmoid(t.slice(z, h, h));
  ad::Tensor g_cand = t.tanh(t.slice(z, 2 * h, h));
  ad::Tensor o_gate = t.sigmoid(t.slice(z, 3 * h, h));

  State next;
  next.c = t.add(t.mul(f_gate, prev.c), t.mul(i_gate, g_cand));
  next.h = t.mul(o_gate, t.tanh(next.c));
  return next;
}

}  // namespace ttc
