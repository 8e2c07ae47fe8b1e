#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dvio/params.hpp"
#include "dvio/tensor.hpp"
#include "dvio/util.hpp"

namespace dvio::nn {

struct Node;
using Value = std::shared_ptr<Node>;

/// One vertex of the dynamic tape. Gradients accumulate into `grad`;
/// calling backward() twice without zeroing doubles them (documented
/// accumulation semantics).
struct Node {
  Tensor value;
  Tensor grad;
  std::vector<Value> parents;
  std::function<void(Node&)> backprop;  // pulls this->grad into parents
  Parameter* param = nullptr;           // set on leaves bound to a Parameter
  const char* op = "";

  explicit Node(Tensor v) : value(std::move(v)), grad(value.shape) {}
};

/// Leaf holding a snapshot of a parameter's current value. The training loop
/// reads the leaf's grad after backward().
Value leaf(Parameter& p);
/// Leaf not bound to a parameter (inputs, targets).
Value constant(Tensor t);
Value constant_scalar(double v);

// Elementwise and reduction ops. All inputs must be finite; every op checks
// its output and raises NumericFault otherwise.
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value scale(const Value& a, double c);
Value neg(const Value& a);
Value exp_ew(const Value& a);
Value relu(const Value& a);
Value sigmoid(const Value& a);
Value tanh_ew(const Value& a);
Value sum(const Value& a);       // -> scalar
Value square_sum(const Value& a);  // -> scalar, sum of squares
Value l2_norm(const Value& a);   // -> scalar; subgradient 0 at the origin
Value l1_norm(const Value& a);   // -> scalar; sign(0) = 0
Value concat(const std::vector<Value>& parts);  // rank-1 inputs

/// out[j] = sum_i x[i] * w[i,j] + b[j]; x rank-1 [n], w [n,m], b [m].
Value dense(const Value& x, const Value& w, const Value& b);

/// Cross-correlation. x [H,W,Cin], kernel [kh,kw,Cin,Cout]; output spatial
/// extent floor((H + 2*pad - kh)/stride) + 1.
Value conv2d(const Value& x, const Value& kernel, int stride, int pad);

/// Per-channel mean over the spatial axes. x [H,W,C] -> [C].
Value global_avg_pool(const Value& x);

/// (x - mean) / sqrt(var + 1e-5) * gain + shift, statistics over the whole
/// input. Rank-1: gain/shift match the input length. Rank-3 [H,W,C]:
/// statistics still cover all elements, gain/shift are per-channel [C].
Value layer_norm(const Value& x, const Value& gain, const Value& shift);

constexpr double kLayerNormEps = 1e-5;

struct LstmState {
  Tensor hidden;
  Tensor cell;
  static LstmState zero(int hidden_size) {
    return {Tensor::zeros({hidden_size}), Tensor::zeros({hidden_size})};
  }
};

/// Gate weights for one LSTM cell; each w is [input+hidden, hidden], each b
/// [hidden]. Built from leaves of the owning parameter store.
struct LstmWeights {
  Value w_i, b_i, w_f, b_f, w_g, b_g, w_o, b_o;
};

struct LstmNodes {
  Value hidden;
  Value cell;
};

/// Standard cell: sigmoid input/forget/output gates, tanh candidate,
/// c' = f*c + i*g, h' = o * tanh(c').
LstmNodes lstm_step(const Value& x, const LstmNodes& state, const LstmWeights& w);

/// Reverse-mode pass from a scalar loss. Seeds the loss grad with 1 and
/// accumulates into every reachable node's grad (leaves included).
void backward(const Value& loss);

/// Zeroes grads of every node reachable from `root`.
void zero_grads(const Value& root);

/// Fan-in-scaled uniform initializer, bound = sqrt(1/fan_in).
Tensor fan_in_uniform(const Shape& shape, int fan_in, Rng& rng);

}  // namespace dvio::nn
