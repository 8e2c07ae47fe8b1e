#include "dvio/graph.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace dvio::nn {

namespace {

Value make_node(const char* op, Tensor value, std::vector<Value> parents,
                std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>(std::move(value));
  if (!n->value.all_finite())
    fail(ErrorKind::NumericFault, std::string("non-finite value produced by op '") + op + "'");
  n->parents = std::move(parents);
  n->backprop = std::move(backprop);
  n->op = op;
  return n;
}

void require_same_shape(const char* op, const Value& a, const Value& b) {
  if (!a->value.same_shape(b->value))
    fail(ErrorKind::DimensionMismatch, std::string(op) + ": shape mismatch " +
                                           shape_str(a->value.shape) + " vs " +
                                           shape_str(b->value.shape));
}

void require_rank(const char* op, const Value& a, int rank) {
  if (a->value.rank() != rank)
    fail(ErrorKind::DimensionMismatch,
         std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
             shape_str(a->value.shape));
}

}  // namespace

Value leaf(Parameter& p) {
  auto n = std::make_shared<Node>(p.value);
  n->param = &p;
  n->op = "leaf";
  return n;
}

Value constant(Tensor t) {
  auto n = std::make_shared<Node>(std::move(t));
  n->op = "const";
  return n;
}

Value constant_scalar(double v) { return constant(Tensor::scalar(v)); }

Value add(const Value& a, const Value& b) {
  require_same_shape("add", a, b);
  Tensor out(a->value.shape);
  for (int i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return make_node("add", std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (int i = 0; i < self.grad.size(); ++i) {
      pa.grad[i] += self.grad[i];
      pb.grad[i] += self.grad[i];
    }
  });
}

Value sub(const Value& a, const Value& b) {
  require_same_shape("sub", a, b);
  Tensor out(a->value.shape);
  for (int i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
  return make_node("sub", std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (int i = 0; i < self.grad.size(); ++i) {
      pa.grad[i] += self.grad[i];
      pb.grad[i] -= self.grad[i];
    }
  });
}

Value mul(const Value& a, const Value& b) {
  require_same_shape("mul", a, b);
  Tensor out(a->value.shape);
  for (int i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return make_node("mul", std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (int i = 0; i < self.grad.size(); ++i) {
      pa.grad[i] += self.grad[i] * pb.value[i];
      pb.grad[i] += self.grad[i] * pa.value[i];
    }
  });
}

Value scale(const Value& a, double c) {
  Tensor out(a->value.shape);
  for (int i = 0; i < out.size(); ++i) out[i] = a->value[i] * c;
  return make_node("scale", std::move(out), {a}, [c](Node& self) {
    Node& pa = *self.parents[0];
    for (int i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * c;
  });
}

Value neg(const Value& a) { return scale(a, -1.0); }

Value exp_ew(const Value& a) {
  Tensor out(a->value.shape);
  for (int i = 0; i < out.size(); ++i) out[i] = std::exp(a->value[i]);
  return make_node("exp", std::move(out), {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    for (int i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * self.value[i];
  });
}

Value relu(const Value& a) {
  Tensor out(a->value.shape);
  for (int i = 0; i < out.size(); ++i) out[i] = a->value[i] > 0.0 ? a->value[i] : 0.0;
  return make_node("relu", std::move(out), {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    for (int i = 0; i < self.grad.size(); ++i)
      if (pa.value[i] > 0.0) pa.grad[i] += self.grad[i];
  });
}

Value sigmoid(const Value& a) {
  Tensor out(a->value.shape);
  for (int i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a->value[i]));
  return make_node("sigmoid", std::move(out), {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    for (int i = 0; i < self.grad.size(); ++i) {
      double y = self.value[i];
      pa.grad[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Value tanh_ew(const Value& a) {
  Tensor out(a->value.shape);
  for (int i = 0; i < out.size(); ++i) out[i] = std::tanh(a->value[i]);
  return make_node("tanh", std::move(out), {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    for (int i = 0; i < self.grad.size(); ++i) {
      double y = self.value[i];
      pa.grad[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Value sum(const Value& a) {
  double s = 0.0;
  for (int i = 0; i < a->value.size(); ++i) s += a->value[i];
  return make_node("sum", Tensor::scalar(s), {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    for (int i = 0; i < pa.grad.size(); ++i) pa.grad[i] += self.grad[0];
  });
}

Value square_sum(const Value& a) {
  double s = 0.0;
  for (int i = 0; i < a->value.size(); ++i) s += a->value[i] * a->value[i];
  return make_node("square_sum", Tensor::scalar(s), {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    for (int i = 0; i < pa.grad.size(); ++i) pa.grad[i] += self.grad[0] * 2.0 * pa.value[i];
  });
}

Value l2_norm(const Value& a) {
  double s = 0.0;
  for (int i = 0; i < a->value.size(); ++i) s += a->value[i] * a->value[i];
  double r = std::sqrt(s);
  return make_node("l2_norm", Tensor::scalar(r), {a}, [r](Node& self) {
    if (r <= 0.0) return;  // subgradient 0 at the origin
    Node& pa = *self.parents[0];
    for (int i = 0; i < pa.grad.size(); ++i) pa.grad[i] += self.grad[0] * pa.value[i] / r;
  });
}

Value l1_norm(const Value& a) {
  double s = 0.0;
  for (int i = 0; i < a->value.size(); ++i) s += std::abs(a->value[i]);
  return make_node("l1_norm", Tensor::scalar(s), {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    for (int i = 0; i < pa.grad.size(); ++i) {
      double x = pa.value[i];
      if (x > 0.0)
        pa.grad[i] += self.grad[0];
      else if (x < 0.0)
        pa.grad[i] -= self.grad[0];
    }
  });
}

Value concat(const std::vector<Value>& parts) {
  if (parts.empty()) fail(ErrorKind::InvalidArgument, "concat: no inputs");
  int n = 0;
  for (const auto& p : parts) {
    require_rank("concat", p, 1);
    n += p->value.size();
  }
  Tensor out({n});
  int off = 0;
  for (const auto& p : parts)
    for (int i = 0; i < p->value.size(); ++i) out[off++] = p->value[i];
  return make_node("concat", std::move(out), parts, [](Node& self) {
    int off = 0;
    for (auto& p : self.parents) {
      for (int i = 0; i < p->grad.size(); ++i) p->grad[i] += self.grad[off + i];
      off += p->grad.size();
    }
  });
}

Value dense(const Value& x, const Value& w, const Value& b) {
  require_rank("dense", x, 1);
  require_rank("dense", w, 2);
  require_rank("dense", b, 1);
  int n = x->value.size();
  int m = w->value.extent(1);
  if (w->value.extent(0) != n || b->value.size() != m)
    fail(ErrorKind::DimensionMismatch, "dense: x" + shape_str(x->value.shape) + " w" +
                                           shape_str(w->value.shape) + " b" +
                                           shape_str(b->value.shape));
  Tensor out({m});
  for (int j = 0; j < m; ++j) out[j] = b->value[j];
  for (int i = 0; i < n; ++i) {
    double xi = x->value[i];
    const double* wrow = &w->value.data[static_cast<size_t>(i) * m];
    for (int j = 0; j < m; ++j) out[j] += xi * wrow[j];
  }
  return make_node("dense", std::move(out), {x, w, b}, [n, m](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node& pb = *self.parents[2];
    const double* g = self.grad.data.data();
    for (int j = 0; j < m; ++j) pb.grad[j] += g[j];
    for (int i = 0; i < n; ++i) {
      const double* wrow = &pw.value.data[static_cast<size_t>(i) * m];
      double* gwrow = &pw.grad.data[static_cast<size_t>(i) * m];
      double xi = px.value[i];
      double acc = 0.0;
      for (int j = 0; j < m; ++j) {
        acc += g[j] * wrow[j];
        gwrow[j] += xi * g[j];
      }
      px.grad[i] += acc;
    }
  });
}

Value conv2d(const Value& x, const Value& kernel, int stride, int pad) {
  require_rank("conv2d", x, 3);
  require_rank("conv2d", kernel, 4);
  if (stride <= 0) fail(ErrorKind::InvalidArgument, "conv2d: stride must be positive");
  if (pad < 0) fail(ErrorKind::InvalidArgument, "conv2d: negative padding");
  const int h = x->value.extent(0), w = x->value.extent(1), cin = x->value.extent(2);
  const int kh = kernel->value.extent(0), kw = kernel->value.extent(1);
  if (kernel->value.extent(2) != cin)
    fail(ErrorKind::DimensionMismatch, "conv2d: kernel input channels " +
                                           std::to_string(kernel->value.extent(2)) +
                                           " != input channels " + std::to_string(cin));
  const int cout = kernel->value.extent(3);
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (w + 2 * pad - kw) / stride + 1;
  if (h + 2 * pad < kh || w + 2 * pad < kw)
    fail(ErrorKind::DimensionMismatch, "conv2d: kernel larger than padded input");

  Tensor out({oh, ow, cout});
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      double* orow = &out.data[static_cast<size_t>(oy * ow + ox) * cout];
      for (int ky = 0; ky < kh; ++ky) {
        int iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kw; ++kx) {
          int ix = ox * stride + kx - pad;
          if (ix < 0 || ix >= w) continue;
          const double* xrow = &x->value.data[static_cast<size_t>(iy * w + ix) * cin];
          const double* krow =
              &kernel->value.data[static_cast<size_t>((ky * kw + kx) * cin) * cout];
          for (int ci = 0; ci < cin; ++ci) {
            double xv = xrow[ci];
            const double* kk = krow + static_cast<size_t>(ci) * cout;
            for (int co = 0; co < cout; ++co) orow[co] += xv * kk[co];
          }
        }
      }
    }
  }
  auto back = [h, w, cin, kh, kw, cout, oh, ow, stride, pad](Node& self) {
    Node& px = *self.parents[0];
    Node& pk = *self.parents[1];
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const double* grow = &self.grad.data[static_cast<size_t>(oy * ow + ox) * cout];
        for (int ky = 0; ky < kh; ++ky) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kw; ++kx) {
            int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= w) continue;
            const double* xrow = &px.value.data[static_cast<size_t>(iy * w + ix) * cin];
            double* gxrow = &px.grad.data[static_cast<size_t>(iy * w + ix) * cin];
            const double* krow = &pk.value.data[static_cast<size_t>((ky * kw + kx) * cin) * cout];
            double* gkrow = &pk.grad.data[static_cast<size_t>((ky * kw + kx) * cin) * cout];
            for (int ci = 0; ci < cin; ++ci) {
              const double* kk = krow + static_cast<size_t>(ci) * cout;
              double* gkk = gkrow + static_cast<size_t>(ci) * cout;
              double xv = xrow[ci];
              double acc = 0.0;
              for (int co = 0; co < cout; ++co) {
                acc += grow[co] * kk[co];
                gkk[co] += xv * grow[co];
              }
              gxrow[ci] += acc;
            }
          }
        }
      }
    }
  };
  return make_node("conv2d", std::move(out), {x, kernel}, back);
}

Value global_avg_pool(const Value& x) {
  require_rank("global_avg_pool", x, 3);
  const int h = x->value.extent(0), w = x->value.extent(1), c = x->value.extent(2);
  Tensor out({c});
  for (int i = 0; i < h * w; ++i)
    for (int ci = 0; ci < c; ++ci) out[ci] += x->value[i * c + ci];
  double inv = 1.0 / (h * w);
  for (int ci = 0; ci < c; ++ci) out[ci] *= inv;
  return make_node("global_avg_pool", std::move(out), {x}, [h, w, c, inv](Node& self) {
    Node& px = *self.parents[0];
    for (int i = 0; i < h * w; ++i)
      for (int ci = 0; ci < c; ++ci) px.grad[i * c + ci] += self.grad[ci] * inv;
  });
}

Value layer_norm(const Value& x, const Value& gain, const Value& shift) {
  require_same_shape("layer_norm", gain, shift);
  const int n = x->value.size();
  const int c = gain->value.size();
  if (x->value.rank() == 1) {
    if (c != n)
      fail(ErrorKind::DimensionMismatch, "layer_norm: gain length != input length");
  } else if (x->value.rank() == 3) {
    if (c != x->value.extent(2))
      fail(ErrorKind::DimensionMismatch, "layer_norm: gain length != channel count");
  } else {
    fail(ErrorKind::DimensionMismatch, "layer_norm: rank must be 1 or 3");
  }

  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += x->value[i];
  mean /= n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) {
    double d = x->value[i] - mean;
    var += d * d;
  }
  var /= n;
  double inv = 1.0 / std::sqrt(var + kLayerNormEps);

  Tensor out(x->value.shape);
  for (int i = 0; i < n; ++i) {
    double xhat = (x->value[i] - mean) * inv;
    out[i] = xhat * gain->value[i % c] + shift->value[i % c];
  }
  // channel index of flat element i is i % c for both rank-1 (c == n) and
  // rank-3 channel-last layouts.
  auto back = [n, c, mean, inv](Node& self) {
    Node& px = *self.parents[0];
    Node& pg = *self.parents[1];
    Node& ps = *self.parents[2];
    std::vector<double> gxhat(static_cast<size_t>(n));
    double sum_gxhat = 0.0, sum_gxhat_xhat = 0.0;
    for (int i = 0; i < n; ++i) {
      double xhat = (px.value[i] - mean) * inv;
      double g = self.grad[i];
      ps.grad[i % c] += g;
      pg.grad[i % c] += g * xhat;
      double gx = g * pg.value[i % c];
      gxhat[static_cast<size_t>(i)] = gx;
      sum_gxhat += gx;
      sum_gxhat_xhat += gx * xhat;
    }
    double m1 = sum_gxhat / n;
    double m2 = sum_gxhat_xhat / n;
    for (int i = 0; i < n; ++i) {
      double xhat = (px.value[i] - mean) * inv;
      px.grad[i] += inv * (gxhat[static_cast<size_t>(i)] - m1 - xhat * m2);
    }
  };
  return make_node("layer_norm", std::move(out), {x, gain, shift}, back);
}

LstmNodes lstm_step(const Value& x, const LstmNodes& state, const LstmWeights& w) {
  Value z = concat({x, state.hidden});
  Value i = sigmoid(dense(z, w.w_i, w.b_i));
  Value f = sigmoid(dense(z, w.w_f, w.b_f));
  Value g = tanh_ew(dense(z, w.w_g, w.b_g));
  Value o = sigmoid(dense(z, w.w_o, w.b_o));
  Value c_next = add(mul(f, state.cell), mul(i, g));
  Value h_next = mul(o, tanh_ew(c_next));
  return {h_next, c_next};
}

void backward(const Value& loss) {
  if (loss->value.size() != 1)
    fail(ErrorKind::InvalidArgument,
         "backward: loss must be scalar, got " + shape_str(loss->value.shape));
  // Iterative post-order DFS; tape order = reverse topological.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* parent = node->parents[idx].get();
      ++idx;
      if (!visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // Interior grads are scratch for this pass; only nodes without a backprop
  // (leaves and constants) accumulate across calls, so a second backward
  // doubles leaf gradients instead of compounding through the interior.
  for (Node* n : order)
    if (n->backprop) n->grad.fill(0.0);
  loss->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop(**it);
}

void zero_grads(const Value& root) {
  std::unordered_set<Node*> visited;
  std::vector<Node*> stack{root.get()};
  visited.insert(root.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    n->grad.fill(0.0);
    for (auto& p : n->parents)
      if (!visited.count(p.get())) {
        visited.insert(p.get());
        stack.push_back(p.get());
      }
  }
}

Tensor fan_in_uniform(const Shape& shape, int fan_in, Rng& rng) {
  if (fan_in <= 0) fail(ErrorKind::InvalidArgument, "fan_in_uniform: fan_in must be positive");
  double bound = std::sqrt(1.0 / fan_in);
  Tensor t(shape);
  for (auto& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace dvio::nn
