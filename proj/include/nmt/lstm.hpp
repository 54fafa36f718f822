#pragma once

#include <random>
#include <utility>

#include "nmt/tensor.hpp"

namespace nmt {

// Standard LSTM cell parameters, four gates, no peepholes. The per-gate
// weights are stored as one combined matrix so a step is a single matmul:
//   w: (input_dim + hidden_dim) x (4 * hidden_dim), gate order i, f, o, g
//   b: 1 x (4 * hidden_dim)
template <class T>
struct LstmParams {
  int input_dim = 0;
  int hidden_dim = 0;
  Tensor<T> w;
  Tensor<T> b;

  static LstmParams zeros(int input_dim, int hidden_dim) {
    LstmParams p;
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    p.w = Tensor<T>::zeros(input_dim + hidden_dim, 4 * hidden_dim, true);
    p.b = Tensor<T>::zeros(1, 4 * hidden_dim, true);
    return p;
  }

  static int64_t param_count(int input_dim, int hidden_dim) {
    return 4LL * hidden_dim * (input_dim + hidden_dim + 1);
  }
};

// One LSTM step over a batch of independent streams (rows).
//   x: S x input_dim, h/c: S x hidden_dim  ->  (h2, c2), both S x hidden_dim
// Gates: i,f,o = sigmoid(affine), g = tanh(affine);
//        c2 = f*c + i*g, h2 = o*tanh(c2).
template <class T>
std::pair<Tensor<T>, Tensor<T>> lstm_step(const Tensor<T>& x,
                                          const Tensor<T>& h,
                                          const Tensor<T>& c,
                                          const LstmParams<T>& p) {
  if (x.cols() != p.input_dim)
    throw Error("lstm_step: x has " + std::to_string(x.cols()) +
                " features, params expect input_dim " +
                std::to_string(p.input_dim));
  if (h.cols() != p.hidden_dim)
    throw Error("lstm_step: h has " + std::to_string(h.cols()) +
                " features, params expect hidden_dim " +
                std::to_string(p.hidden_dim));
  if (c.cols() != p.hidden_dim)
    throw Error("lstm_step: c has " + std::to_string(c.cols()) +
                " features, params expect hidden_dim " +
                std::to_string(p.hidden_dim));
  if (x.rows() != h.rows() || x.rows() != c.rows())
    throw Error("lstm_step: row counts differ between x, h, c");

  const int hd = p.hidden_dim;
  auto z = concat_cols<T>({x, h});
  auto gates = add_bias(matmul(z, p.w), p.b);
  auto gi = sigmoid(slice_cols(gates, 0, hd));
  auto gf = sigmoid(slice_cols(gates, hd, hd));
  auto go = sigmoid(slice_cols(gates, 2 * hd, hd));
  auto gg = tanh_op(slice_cols(gates, 3 * hd, hd));
  auto c2 = add(mul(gf, c), mul(gi, gg));
  auto h2 = mul(go, tanh_op(c2));
  return {h2, c2};
}

}  // namespace nmt
