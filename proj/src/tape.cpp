#include "vlplab/tape.hpp"

#include <cmath>
#include <utility>

namespace vlplab {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* who) {
  if (!a.same_dims(b))
    throw Error(Errc::DimMismatch, std::string(who) + " " + a.dims_str() + " vs " + b.dims_str());
}

}  // namespace

Var GradTape::push(Tensor value, bool requires_grad, std::function<void(GradTape&)> backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Var GradTape::leaf(Tensor value) { return push(std::move(value), true, nullptr); }

Var GradTape::constant(Tensor value) { return push(std::move(value), false, nullptr); }

Tensor GradTape::grad(Var v) const {
  const Node& n = nodes_[static_cast<size_t>(v.id)];
  if (n.grad.empty()) return Tensor::zeros(n.value.dims());
  return n.grad;
}

Tensor& GradTape::grad_buf(int32_t id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.empty()) n.grad = Tensor::zeros(n.value.dims());
  return n.grad;
}

void GradTape::accumulate(int32_t id, const Tensor& delta) {
  if (!nodes_[static_cast<size_t>(id)].requires_grad) return;
  Tensor& g = grad_buf(id);
  for (int64_t i = 0; i < g.numel(); ++i) g.at(i) += delta.at(i);
}

void GradTape::backward(Var scalar_root) {
  Node& root = nodes_[static_cast<size_t>(scalar_root.id)];
  if (root.value.numel() != 1)
    throw Error(Errc::ShapeMismatch, "backward root must be scalar, got " + root.value.dims_str());
  grad_buf(scalar_root.id).at(0) = 1.0;
  for (int32_t i = scalar_root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.requires_grad && n.backward && !n.grad.empty()) n.backward(*this);
  }
}

// ---- elementwise ----

Var GradTape::add(Var a, Var b) {
  require_same(value(a), value(b), "add");
  Tensor out = vlplab::add(value(a), value(b));
  bool rg = requires_grad(a) || requires_grad(b);
  int32_t self = static_cast<int32_t>(nodes_.size());
  return push(std::move(out), rg, [self, a, b](GradTape& t) {
    const Tensor& g = t.node_grad(self);
    t.accumulate(a.id, g);
    t.accumulate(b.id, g);
  });
}

Var GradTape::sub(Var a, Var b) {
  require_same(value(a), value(b), "sub");
  Tensor out = vlplab::sub(value(a), value(b));
  bool rg = requires_grad(a) || requires_grad(b);
  int32_t self = static_cast<int32_t>(nodes_.size());
  return push(std::move(out), rg, [self, a, b](GradTape& t) {
    const Tensor& g = t.node_grad(self);
    t.accumulate(a.id, g);
    if (t.nodes_[static_cast<size_t>(b.id)].requires_grad) {
      Tensor& gb = t.grad_buf(b.id);
      for (int64_t i = 0; i < gb.numel(); ++i) gb.at(i) -= g.at(i);
    }
  });
}

Var GradTape::mul(Var a, Var b) {
  require_same(value(a), value(b), "mul");
  Tensor out = vlplab::mul(value(a), value(b));
  bool rg = requires_grad(a) || requires_grad(b);
  int32_t self = static_cast<int32_t>(nodes_.size());
  return push(std::move(out), rg, [self, a, b](GradTape& t) {
    const Tensor& g = t.node_grad(self);
    t.accumulate(a.id, vlplab::mul(g, t.node_value(b.id)));
    t.accumulate(b.id, vlplab::mul(g, t.node_value(a.id)));
  });
}

Var GradTape::scale(Var a, double c) {
  Tensor out = vlplab::scale(value(a), c);
  int32_t self = static_cast<int32_t>(nodes_.size());
  return push(std::move(out), requires_grad(a), [self, a, c](GradTape& t) {
    t.accumulate(a.id, vlplab::scale(t.node_grad(self), c));
  });
}

Var GradTape::sub_const(Var a, const Tensor& c) {
  Tensor out = vlplab::sub(value(a), c);
  int32_t self = static_cast<int32_t>(nodes_.size());
  return push(std::move(out), requires_grad(a),
              [self, a](GradTape& t) { t.accumulate(a.id, t.node_grad(self)); });
}

Var GradTape::mul_const(Var a, const Tensor& c) {
  Tensor out = vlplab::mul(value(a), c);
  int32_t self = static_cast<int32_t>(nodes_.size());
  Tensor mask = c;
  return push(std::move(out), requires_grad(a), [self, a, mask](GradTape& t) {
    t.accumulate(a.id, vlplab::mul(t.node_grad(self), mask));
  });
}

Var GradTape::relu(Var a) {
  Tensor out = value(a);
  for (int64_t i = 0; i < out.numel(); ++i)
    if (out.at(i) < 0.0) out.at(i) = 0.0;
  int32_t self = static_cast<int32_t>(nodes_.size());
  return push(std::move(out), requires_grad(a), [self, a](GradTape& t) {
    const Tensor& g = t.node_grad(self);
    const Tensor& x = t.node_value(a.id);
    Tensor d(g.dims());
    for (int64_t i = 0; i < d.numel(); ++i) d.at(i) = x.at(i) > 0.0 ? g.at(i) : 0.0;
    t.accumulate(a.id, d);
  });
}

Var GradTape::exp(Var a) {
  Tensor out(value(a).dims());
  for (int64_t i = 0; i < out.numel(); ++i) out.at(i) = std::exp(value(a).at(i));
  int32_t self = static_cast<int32_t>(nodes_.size());
  return push(std::move(out), requires_grad(a), [self, a](GradTape& t) {
    t.accumulate(a.id, vlplab::mul(t.node_grad(self), t.node_value(self)));
  });
}

// ---- linear algebra ----

Var GradTape::matmul(Var a, Var b) {
  Tensor out = vlplab::matmul(value(a), value(b));
  bool rg = requires_grad(a) || requires_grad(b);
  int32_t self = static_cast<int32_t>(nodes_.size());
  return push(std::move(out), rg, [self, a, b](GradTape& t) {
    const Tensor& g = t.node_grad(self);
    if (t.nodes_[static_cast<size_t>(a.id)].requires_grad)
      matmul_acc(g, false, t.node_value(b.id), true, 1.0, t.grad_buf(a.id));
    if (t.nodes_[static_cast<size_t>(b.id)].requires_grad)
      matmul_acc(t.node_value(a.id), true, g, false, 1.0, t.grad_buf(b.id));
  });
}

Var GradTape::transpose(Var a) {
  Tensor out = vlplab::transpose(value(a));
  int32_t self = static_cast<int32_t>(nodes_.size());
  return push(std::move(out), requires_grad(a), [self, a](GradTape& t) {
    t.accumulate(a.id, vlplab::transpose(t.node_grad(self)));
  });
}

Var GradTape::linear(Var x, Var w, Var b) {
  Tensor out = vlplab::matmul(value(x), value(w));
  if (b.valid()) {
    const Tensor& bias = value(b);
    if (bias.numel() != out.cols())
      throw Error(Errc::DimMismatch, "linear bias " + bias.dims_str());
    for (int64_t i = 0; i < out.rows(); ++i)
      for (int64_t j = 0; j < out.cols(); ++j) out.at(i, j) += bias.at(j);
  }
  bool rg = requires_grad(x) || requires_grad(w) || (b.valid() && requires_grad(b));
  int32_t self = static_cast<int32_t>(nodes_.size());
  return push(std::move(out), rg, [self, x, w, b](GradTape& t) {
    const Tensor& g = t.node_grad(self);
    if (t.nodes_[static_cast<size_t>(x.id)].requires_grad)
      matmul_acc(g, false, t.node_value(w.id), true, 1.0, t.grad_buf(x.id));
    if (t.nodes_[static_cast<size_t>(w.id)].requires_grad)
      matmul_acc(t.node_value(x.id), true, g, false, 1.0, t.grad_buf(w.id));
    if (b.valid() && t.nodes_[static_cast<size_t>(b.id)].requires_grad) {
      Tensor& gb = t.grad_buf(b.id);
      for (int64_t i = 0; i < g.rows(); ++i)
        for (int64_t j = 0; j < g.cols(); ++j) gb.at(j) += g.at(i, j);
    }
  });
}

Var GradTape::l2_normalize_rows(Var a) {
  const Tensor& x = value(a);
  Tensor out = vlplab::l2_normalize_rows(x);
  const int64_t d = x.cols();
  std::vector<double> norms(static_cast<size_t>(x.rows()));
  for (int64_t i = 0; i < x.rows(); ++i)
    norms[static_cast<size_t>(i)] = std::sqrt(dot(x.data() + i * d, x.data() + i * d, d));
  int32_t self = static_cast<int32_t>(nodes_.size());
  return push(std::move(out), requires_grad(a), [self, a, norms](GradTape& t) {
    const Tensor& g = t.node_grad(self);
    const Tensor& y = t.node_value(self);
    const int64_t dd = y.cols();
    Tensor dx(y.dims());
    for (int64_t i = 0; i < y.rows(); ++i) {
      double gy = dot(g.data() + i * dd, y.data() + i * dd, dd);
      for (int64_t j = 0; j < dd; ++j)
        dx.at(i, j) = (g.at(i, j) - gy * y.at(i, j)) / norms[static_cast<size_t>(i)];
    }
    t.accumulate(a.id, dx);
  });
}

Var GradTape::l2_normalize_cols(Var a) {
  const Tensor& x = value(a);
  Tensor out = vlplab::l2_normalize_cols(x);
  std::vector<double> norms(static_cast<size_t>(x.cols()));
  for (int64_t j = 0; j < x.cols(); ++j) {
    double s = 0.0;
    for (int64_t i = 0; i < x.rows(); ++i) s += x.at(i, j) * x.at(i, j);
    norms[static_cast<size_t>(j)] = std::sqrt(s);
  }
  int32_t self = static_cast<int32_t>(nodes_.size());
  return push(std::move(out), requires_grad(a), [self, a, norms](GradTape& t) {
    const Tensor& g = t.node_grad(self);
    const Tensor& y = t.node_value(self);
    Tensor dx(y.dims());
    for (int64_t j = 0; j < y.cols(); ++j) {
      double gy = 0.0;
      for (int64_t i = 0; i < y.rows(); ++i) gy += g.at(i, j) * y.at(i, j);
      for (int64_t i = 0; i < y.rows(); ++i)
        dx.at(i, j) = (g.at(i, j) - gy * y.at(i, j)) / norms[static_cast<size_t>(j)];
    }
    t.accumulate(a.id, dx);
  });
}

// ---- reductions / softmax ----

Var GradTape::sum_all(Var a) {
  Tensor out = Tensor::scalar(vlplab::sum(value(a)));
  int32_t self = static_cast<int32_t>(nodes_.size());
  return push(std::move(out), requires_grad(a), [self, a](GradTape& t) {
    double g = t.node_grad(self).at(0);
    if (!t.nodes_[static_cast<size_t>(a.id)].requires_grad) return;
    Tensor& ga = t.grad_buf(a.id);
    for (int64_t i = 0; i < ga.numel(); ++i) ga.at(i) += g;
  });
}

Var GradTape::mean_all(Var a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(value(a).numel()));
}

Var GradTape::softmax_rows(Var a) {
  Tensor out = vlplab::softmax_rows(value(a));
  int32_t self = static_cast<int32_t>(nodes_.size());
  return push(std::move(out), requires_grad(a), [self, a](GradTape& t) {
    const Tensor& g = t.node_grad(self);
    const Tensor& s = t.node_value(self);
    Tensor dx(s.dims());
    for (int64_t i = 0; i < s.rows(); ++i) {
      double gs = 0.0;
      for (int64_t j = 0; j < s.cols(); ++j) gs += g.at(i, j) * s.at(i, j);
      for (int64_t j = 0; j < s.cols(); ++j) dx.at(i, j) = s.at(i, j) * (g.at(i, j) - gs);
    }
    t.accumulate(a.id, dx);
  });
}

Var GradTape::cross_entropy_rows(Var logits, const Tensor& targets) {
  const Tensor& l = value(logits);
  double loss = vlplab::cross_entropy_rows(l, targets);
  Tensor probs = vlplab::softmax_rows(l);
  int32_t self = static_cast<int32_t>(nodes_.size());
  Tensor tgt = targets;
  return push(Tensor::scalar(loss), requires_grad(logits),
              [self, logits, probs, tgt](GradTape& t) {
                double g = t.node_grad(self).at(0);
                const double inv_n = 1.0 / static_cast<double>(probs.rows());
                Tensor dl(probs.dims());
                for (int64_t i = 0; i < probs.numel(); ++i)
                  dl.at(i) = g * inv_n * (probs.at(i) - tgt.at(i));
                t.accumulate(logits.id, dl);
              });
}

Var GradTape::mul_scalar(Var a, Var s) {
  if (value(s).numel() != 1) throw Error(Errc::ShapeMismatch, "mul_scalar needs 1-element scale");
  Tensor out = vlplab::scale(value(a), value(s).at(0));
  bool rg = requires_grad(a) || requires_grad(s);
  int32_t self = static_cast<int32_t>(nodes_.size());
  return push(std::move(out), rg, [self, a, s](GradTape& t) {
    const Tensor& g = t.node_grad(self);
    double sv = t.node_value(s.id).at(0);
    if (t.nodes_[static_cast<size_t>(a.id)].requires_grad)
      t.accumulate(a.id, vlplab::scale(g, sv));
    if (t.nodes_[static_cast<size_t>(s.id)].requires_grad) {
      const Tensor& x = t.node_value(a.id);
      double ds = 0.0;
      for (int64_t i = 0; i < x.numel(); ++i) ds += g.at(i) * x.at(i);
      t.grad_buf(s.id).at(0) += ds;
    }
  });
}

// ---- structured ----

Var GradTape::gather_rows(Var table, std::vector<int64_t> ids) {
  const Tensor& tb = value(table);
  if (tb.rank() != 2) throw Error(Errc::ShapeMismatch, "gather_rows table must be a matrix");
  const int64_t e = tb.cols();
  Tensor out({static_cast<int64_t>(ids.size()), e});
  for (size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= tb.rows())
      throw Error(Errc::ShapeMismatch, "gather_rows id out of range");
    for (int64_t j = 0; j < e; ++j) out.at(static_cast<int64_t>(r), j) = tb.at(ids[r], j);
  }
  int32_t self = static_cast<int32_t>(nodes_.size());
  return push(std::move(out), requires_grad(table), [self, table, ids](GradTape& t) {
    const Tensor& g = t.node_grad(self);
    Tensor& gt = t.grad_buf(table.id);
    const int64_t e = gt.cols();
    for (size_t r = 0; r < ids.size(); ++r)
      for (int64_t j = 0; j < e; ++j)
        gt.at(ids[r], j) += g.at(static_cast<int64_t>(r), j);
  });
}

Var GradTape::segment_mean(Var a, std::vector<int64_t> offsets) {
  const Tensor& x = value(a);
  const int64_t s_count = static_cast<int64_t>(offsets.size()) - 1;
  if (s_count < 1 || offsets.front() != 0 || offsets.back() != x.rows())
    throw Error(Errc::ShapeMismatch, "segment_mean offsets malformed");
  Tensor out({s_count, x.cols()});
  for (int64_t s = 0; s < s_count; ++s) {
    const int64_t lo = offsets[static_cast<size_t>(s)], hi = offsets[static_cast<size_t>(s) + 1];
    if (hi <= lo) throw Error(Errc::ShapeMismatch, "segment_mean empty segment");
    for (int64_t i = lo; i < hi; ++i)
      for (int64_t j = 0; j < x.cols(); ++j) out.at(s, j) += x.at(i, j);
    for (int64_t j = 0; j < x.cols(); ++j) out.at(s, j) /= static_cast<double>(hi - lo);
  }
  int32_t self = static_cast<int32_t>(nodes_.size());
  return push(std::move(out), requires_grad(a), [self, a, offsets](GradTape& t) {
    const Tensor& g = t.node_grad(self);
    Tensor& ga = t.grad_buf(a.id);
    for (int64_t s = 0; s + 1 < static_cast<int64_t>(offsets.size()); ++s) {
      const int64_t lo = offsets[static_cast<size_t>(s)], hi = offsets[static_cast<size_t>(s) + 1];
      const double inv = 1.0 / static_cast<double>(hi - lo);
      for (int64_t i = lo; i < hi; ++i)
        for (int64_t j = 0; j < g.cols(); ++j) ga.at(i, j) += g.at(s, j) * inv;
    }
  });
}

Var GradTape::dropout(Var a, double prob, Rng& rng) {
  if (prob < 0.0 || prob >= 1.0) throw Error(Errc::BadConfig, "dropout prob must be in [0,1)");
  const Tensor& x = value(a);
  Tensor mask(x.dims());
  const double keep_scale = 1.0 / (1.0 - prob);
  for (int64_t i = 0; i < mask.numel(); ++i)
    mask.at(i) = rng.bernoulli(prob) ? 0.0 : keep_scale;
  Tensor out = vlplab::mul(x, mask);
  int32_t self = static_cast<int32_t>(nodes_.size());
  return push(std::move(out), requires_grad(a), [self, a, mask](GradTape& t) {
    t.accumulate(a.id, vlplab::mul(t.node_grad(self), mask));
  });
}

Var GradTape::batchnorm_train(Var xv, Var gamma, Var beta, double eps, BatchNormStats* stats_out) {
  const Tensor& x = value(xv);
  const int64_t n = x.rows(), f = x.cols();
  if (value(gamma).numel() != f || value(beta).numel() != f)
    throw Error(Errc::DimMismatch, "batchnorm parameter size");
  Tensor mean({f}), var({f});
  for (int64_t j = 0; j < f; ++j) {
    double m = 0.0;
    for (int64_t i = 0; i < n; ++i) m += x.at(i, j);
    m /= static_cast<double>(n);
    double v = 0.0;
    for (int64_t i = 0; i < n; ++i) v += (x.at(i, j) - m) * (x.at(i, j) - m);
    v /= static_cast<double>(n);
    mean.at(j) = m;
    var.at(j) = v;
  }
  Tensor inv_sigma({f});
  for (int64_t j = 0; j < f; ++j) inv_sigma.at(j) = 1.0 / std::sqrt(var.at(j) + eps);
  Tensor xhat({n, f});
  Tensor out({n, f});
  const Tensor& gm = value(gamma);
  const Tensor& bt = value(beta);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < f; ++j) {
      xhat.at(i, j) = (x.at(i, j) - mean.at(j)) * inv_sigma.at(j);
      out.at(i, j) = gm.at(j) * xhat.at(i, j) + bt.at(j);
    }
  if (stats_out) {
    stats_out->mean = mean;
    stats_out->var = var;
  }
  bool rg = requires_grad(xv) || requires_grad(gamma) || requires_grad(beta);
  int32_t self = static_cast<int32_t>(nodes_.size());
  return push(std::move(out), rg, [self, xv, gamma, beta, xhat, inv_sigma](GradTape& t) {
    const Tensor& g = t.node_grad(self);
    const int64_t n = g.rows(), f = g.cols();
    const Tensor& gm = t.node_value(gamma.id);
    if (t.nodes_[static_cast<size_t>(gamma.id)].requires_grad) {
      Tensor& gg = t.grad_buf(gamma.id);
      for (int64_t j = 0; j < f; ++j) {
        double s = 0.0;
        for (int64_t i = 0; i < n; ++i) s += g.at(i, j) * xhat.at(i, j);
        gg.at(j) += s;
      }
    }
    if (t.nodes_[static_cast<size_t>(beta.id)].requires_grad) {
      Tensor& gb = t.grad_buf(beta.id);
      for (int64_t j = 0; j < f; ++j) {
        double s = 0.0;
        for (int64_t i = 0; i < n; ++i) s += g.at(i, j);
        gb.at(j) += s;
      }
    }
    if (t.nodes_[static_cast<size_t>(xv.id)].requires_grad) {
      Tensor dx({n, f});
      const double inv_n = 1.0 / static_cast<double>(n);
      for (int64_t j = 0; j < f; ++j) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int64_t i = 0; i < n; ++i) {
          const double dy = g.at(i, j) * gm.at(j);
          sum_dy += dy;
          sum_dy_xhat += dy * xhat.at(i, j);
        }
        for (int64_t i = 0; i < n; ++i) {
          const double dy = g.at(i, j) * gm.at(j);
          dx.at(i, j) =
              inv_sigma.at(j) * (dy - inv_n * sum_dy - inv_n * xhat.at(i, j) * sum_dy_xhat);
        }
      }
      t.accumulate(xv.id, dx);
    }
  });
}

Var GradTape::batchnorm_eval(Var xv, Var gamma, Var beta, const Tensor& running_mean,
                             const Tensor& running_var, double eps) {
  const Tensor& x = value(xv);
  const int64_t n = x.rows(), f = x.cols();
  Tensor inv_sigma({f});
  for (int64_t j = 0; j < f; ++j) inv_sigma.at(j) = 1.0 / std::sqrt(running_var.at(j) + eps);
  Tensor xhat({n, f});
  Tensor out({n, f});
  const Tensor& gm = value(gamma);
  const Tensor& bt = value(beta);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < f; ++j) {
      xhat.at(i, j) = (x.at(i, j) - running_mean.at(j)) * inv_sigma.at(j);
      out.at(i, j) = gm.at(j) * xhat.at(i, j) + bt.at(j);
    }
  bool rg = requires_grad(xv) || requires_grad(gamma) || requires_grad(beta);
  int32_t self = static_cast<int32_t>(nodes_.size());
  return push(std::move(out), rg, [self, xv, gamma, beta, xhat, inv_sigma](GradTape& t) {
    const Tensor& g = t.node_grad(self);
    const int64_t n = g.rows(), f = g.cols();
    const Tensor& gm = t.node_value(gamma.id);
    if (t.nodes_[static_cast<size_t>(gamma.id)].requires_grad) {
      Tensor& gg = t.grad_buf(gamma.id);
      for (int64_t j = 0; j < f; ++j)
        for (int64_t i = 0; i < n; ++i) gg.at(j) += g.at(i, j) * xhat.at(i, j);
    }
    if (t.nodes_[static_cast<size_t>(beta.id)].requires_grad) {
      Tensor& gb = t.grad_buf(beta.id);
      for (int64_t j = 0; j < f; ++j)
        for (int64_t i = 0; i < n; ++i) gb.at(j) += g.at(i, j);
    }
    if (t.nodes_[static_cast<size_t>(xv.id)].requires_grad) {
      Tensor dx({n, f});
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < f; ++j) dx.at(i, j) = g.at(i, j) * gm.at(j) * inv_sigma.at(j);
      t.accumulate(xv.id, dx);
    }
  });
}

}  // namespace vlplab
