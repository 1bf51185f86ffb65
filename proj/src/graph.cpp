#include "padst/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "padst/kernels.hpp"

namespace padst {

namespace {

using kernels::GemmShape;
using kernels::Trans;

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

template <class Real>
Real gelu_inner_scale() {
  return static_cast<Real>(0.7978845608028654);  // sqrt(2 / pi)
}

}  // namespace

template <class Real>
Var Graph<Real>::push(Tensor<Real> value, bool needs_grad) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad && record_;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <class Real>
Var Graph<Real>::constant(Tensor<Real> value) {
  return push(std::move(value), false);
}

template <class Real>
Var Graph<Real>::parameter(Parameter<Real>& p) {
  Var v = push(p.value, true);
  nodes_[v.id].param = &p;
  return v;
}

template <class Real>
Var Graph<Real>::matmul(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  require(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.rows(),
          "matmul: cannot multiply " + shape_string(av.shape()) + " by " +
              shape_string(bv.shape()));
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor<Real> out({m, n});
  kernels::parallel::gemm(GemmShape{m, n, k}, av.raw(), bv.raw(), out.raw(), false);
  Var c = push(std::move(out), needs(a) || needs(b));
  if (nodes_[c.id].needs_grad) {
    nodes_[c.id].back = [this, a, b, c, m, n, k] {
      const Real* dc = nodes_[c.id].grad.raw();
      if (needs(a)) {
        kernels::parallel::gemm(GemmShape{m, k, n, Trans::no, Trans::yes}, dc,
                                value(b).raw(), grad_of(a.id).raw(), true);
      }
      if (needs(b)) {
        kernels::parallel::gemm(GemmShape{k, n, m, Trans::yes, Trans::no}, value(a).raw(),
                                dc, grad_of(b.id).raw(), true);
      }
    };
  }
  return c;
}

template <class Real>
Var Graph<Real>::add(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  require(av.shape() == bv.shape(), "add: shape mismatch " + shape_string(av.shape()) +
                                        " vs " + shape_string(bv.shape()));
  Tensor<Real> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  Var c = push(std::move(out), needs(a) || needs(b));
  if (nodes_[c.id].needs_grad) {
    nodes_[c.id].back = [this, a, b, c] {
      const auto& dc = nodes_[c.id].grad;
      for (Var in : {a, b}) {
        if (!needs(in)) continue;
        auto& g = grad_of(in.id);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i];
      }
    };
  }
  return c;
}

template <class Real>
Var Graph<Real>::add_bias(Var x, Var bias) {
  const auto& xv = value(x);
  const auto& bv = value(bias);
  require(bv.size() == xv.cols(), "add_bias: bias " + shape_string(bv.shape()) +
                                      " does not match rows of " + shape_string(xv.shape()));
  Tensor<Real> out = xv;
  const std::size_t rows = xv.rows(), cols = xv.cols();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] += bv[j];
  Var c = push(std::move(out), needs(x) || needs(bias));
  if (nodes_[c.id].needs_grad) {
    nodes_[c.id].back = [this, x, bias, c, rows, cols] {
      const auto& dc = nodes_[c.id].grad;
      if (needs(x)) {
        auto& g = grad_of(x.id);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i];
      }
      if (needs(bias)) {
        auto& g = grad_of(bias.id);
        for (std::size_t j = 0; j < cols; ++j) {
          Real s = 0;
          for (std::size_t r = 0; r < rows; ++r) s += dc[r * cols + j];
          g[j] += s;
        }
      }
    };
  }
  return c;
}

template <class Real>
Var Graph<Real>::mul(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  require(av.shape() == bv.shape(), "mul: shape mismatch " + shape_string(av.shape()) +
                                        " vs " + shape_string(bv.shape()));
  Tensor<Real> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Var c = push(std::move(out), needs(a) || needs(b));
  if (nodes_[c.id].needs_grad) {
    nodes_[c.id].back = [this, a, b, c] {
      const auto& dc = nodes_[c.id].grad;
      if (needs(a)) {
        auto& g = grad_of(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i] * value(b)[i];
      }
      if (needs(b)) {
        auto& g = grad_of(b.id);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i] * value(a)[i];
      }
    };
  }
  return c;
}

template <class Real>
Var Graph<Real>::scale(Var x, Real factor) {
  Tensor<Real> out = value(x);
  for (auto& v : out.data()) v *= factor;
  Var c = push(std::move(out), needs(x));
  if (nodes_[c.id].needs_grad) {
    nodes_[c.id].back = [this, x, c, factor] {
      const auto& dc = nodes_[c.id].grad;
      auto& g = grad_of(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i] * factor;
    };
  }
  return c;
}

// Tanh approximation of GELU.
template <class Real>
Var Graph<Real>::gelu(Var x) {
  const Real s = gelu_inner_scale<Real>();
  const Real cubic = Real(0.044715);
  Tensor<Real> out = value(x);
  for (auto& v : out.data()) {
    const Real t = std::tanh(s * (v + cubic * v * v * v));
    v = Real(0.5) * v * (Real(1) + t);
  }
  Var c = push(std::move(out), needs(x));
  if (nodes_[c.id].needs_grad) {
    nodes_[c.id].back = [this, x, c, s, cubic] {
      const auto& dc = nodes_[c.id].grad;
      const auto& xv = value(x);
      auto& g = grad_of(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Real v = xv[i];
        const Real t = std::tanh(s * (v + cubic * v * v * v));
        const Real dt = (Real(1) - t * t) * s * (Real(1) + Real(3) * cubic * v * v);
        g[i] += dc[i] * (Real(0.5) * (Real(1) + t) + Real(0.5) * v * dt);
      }
    };
  }
  return c;
}

template <class Real>
Var Graph<Real>::softmax_rows(Var x) {
  const auto& xv = value(x);
  Tensor<Real> out(xv.shape());
  const std::size_t rows = xv.rows(), cols = xv.cols();
  kernels::parallel::softmax_rows(rows, cols, xv.raw(), out.raw());
  Var c = push(std::move(out), needs(x));
  if (nodes_[c.id].needs_grad) {
    nodes_[c.id].back = [this, x, c, rows, cols] {
      const auto& dc = nodes_[c.id].grad;
      const auto& y = nodes_[c.id].value;
      auto& g = grad_of(x.id);
      for (std::size_t r = 0; r < rows; ++r) {
        Real dot = 0;
        for (std::size_t j = 0; j < cols; ++j) dot += dc[r * cols + j] * y[r * cols + j];
        for (std::size_t j = 0; j < cols; ++j)
          g[r * cols + j] += y[r * cols + j] * (dc[r * cols + j] - dot);
      }
    };
  }
  return c;
}

template <class Real>
Var Graph<Real>::layer_norm(Var x, Var gain, Var bias, Real eps) {
  const auto& xv = value(x);
  const std::size_t rows = xv.rows(), d = xv.cols();
  require(value(gain).size() == d && value(bias).size() == d,
          "layer_norm: gain/bias must have " + std::to_string(d) + " entries, got " +
              shape_string(value(gain).shape()) + " and " + shape_string(value(bias).shape()));
  Tensor<Real> out(xv.shape());
  std::vector<Real> normed(xv.size());
  std::vector<Real> rstd(rows);
  const auto& gv = value(gain);
  const auto& bv = value(bias);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = xv.raw() + r * d;
    Real mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<Real>(d);
    Real var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<Real>(d);
    rstd[r] = Real(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const Real n = (row[j] - mean) * rstd[r];
      normed[r * d + j] = n;
      out[r * d + j] = gv[j] * n + bv[j];
    }
  }
  Var c = push(std::move(out), needs(x) || needs(gain) || needs(bias));
  if (nodes_[c.id].needs_grad) {
    nodes_[c.id].back = [this, x, gain, bias, c, rows, d, normed = std::move(normed),
                         rstd = std::move(rstd)] {
      const auto& dc = nodes_[c.id].grad;
      const auto& gv = value(gain);
      if (needs(gain) || needs(bias)) {
        for (std::size_t j = 0; j < d; ++j) {
          Real dg = 0, db = 0;
          for (std::size_t r = 0; r < rows; ++r) {
            dg += dc[r * d + j] * normed[r * d + j];
            db += dc[r * d + j];
          }
          if (needs(gain)) grad_of(gain.id)[j] += dg;
          if (needs(bias)) grad_of(bias.id)[j] += db;
        }
      }
      if (needs(x)) {
        auto& g = grad_of(x.id);
        const Real inv_d = Real(1) / static_cast<Real>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          Real mean_dn = 0, mean_dn_n = 0;
          for (std::size_t j = 0; j < d; ++j) {
            const Real dn = dc[r * d + j] * gv[j];
            mean_dn += dn;
            mean_dn_n += dn * normed[r * d + j];
          }
          mean_dn *= inv_d;
          mean_dn_n *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            const Real dn = dc[r * d + j] * gv[j];
            g[r * d + j] += rstd[r] * (dn - mean_dn - normed[r * d + j] * mean_dn_n);
          }
        }
      }
    };
  }
  return c;
}

template <class Real>
Var Graph<Real>::embedding(Var table, std::span<const int> ids) {
  const auto& tv = value(table);
  require(tv.rank() == 2, "embedding: table must be a matrix, got " + shape_string(tv.shape()));
  const std::size_t vocab = tv.rows(), d = tv.cols();
  require(!ids.empty(), "embedding: no ids");
  Tensor<Real> out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= vocab) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[r]) +
                              " outside vocabulary of " + std::to_string(vocab));
    }
    std::copy_n(tv.raw() + static_cast<std::size_t>(ids[r]) * d, d, out.raw() + r * d);
  }
  Var c = push(std::move(out), needs(table));
  if (nodes_[c.id].needs_grad) {
    nodes_[c.id].back = [this, table, c, d, ids = std::vector<int>(ids.begin(), ids.end())] {
      const auto& dc = nodes_[c.id].grad;
      auto& g = grad_of(table.id);
      for (std::size_t r = 0; r < ids.size(); ++r) {
        Real* dst = g.raw() + static_cast<std::size_t>(ids[r]) * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += dc[r * d + j];
      }
    };
  }
  return c;
}

template <class Real>
Var Graph<Real>::attention(Var q, Var k, Var v, const AttentionSpec& spec) {
  const auto& qv = value(q);
  const auto& kv = value(k);
  const auto& vv = value(v);
  const std::size_t width = qv.cols();
  require(spec.heads > 0 && width % spec.heads == 0,
          "attention: width " + std::to_string(width) + " not divisible by heads");
  require(qv.rows() == spec.batch * spec.query_len,
          "attention: queries " + shape_string(qv.shape()) + " do not match batch layout");
  require(kv.shape() == vv.shape() && kv.rows() == spec.batch * spec.key_len &&
              kv.cols() == width,
          "attention: keys " + shape_string(kv.shape()) + " / values " +
              shape_string(vv.shape()) + " do not match queries " + shape_string(qv.shape()));
  require(spec.key_lengths.size() == spec.batch, "attention: key_lengths size != batch");
  for (int len : spec.key_lengths) {
    require(len >= 1 && static_cast<std::size_t>(len) <= spec.key_len,
            "attention: key length out of range");
  }
  kernels::AttentionDims dims{spec.batch, spec.query_len, spec.key_len, spec.heads,
                              width / spec.heads, spec.causal};
  std::vector<Real> probs(spec.batch * spec.heads * spec.query_len * spec.key_len);
  Tensor<Real> out(qv.shape());
  kernels::parallel::attention_forward(dims, std::span<const int>(spec.key_lengths), qv.raw(),
                                       kv.raw(), vv.raw(), probs.data(), out.raw());
  Var c = push(std::move(out), needs(q) || needs(k) || needs(v));
  if (nodes_[c.id].needs_grad) {
    nodes_[c.id].back = [this, q, k, v, c, dims, probs = std::move(probs)] {
      const auto& qv = value(q);
      const auto& kv = value(k);
      const auto& vv = value(v);
      std::vector<Real> dq(qv.size()), dk(kv.size()), dv(vv.size());
      kernels::parallel::attention_backward(dims, qv.raw(), kv.raw(), vv.raw(), probs.data(),
                                            nodes_[c.id].grad.raw(), dq.data(), dk.data(),
                                            dv.data());
      auto accumulate = [this](Var target, const std::vector<Real>& delta) {
        if (!needs(target)) return;
        auto& g = grad_of(target.id);
        for (std::size_t i = 0; i < delta.size(); ++i) g[i] += delta[i];
      };
      accumulate(q, dq);
      accumulate(k, dk);
      accumulate(v, dv);
    };
  }
  return c;
}

template <class Real>
Var Graph<Real>::cross_entropy(Var logits, std::span<const int> targets, int pad_id) {
  const auto& lv = value(logits);
  const std::size_t rows = lv.rows(), vocab = lv.cols();
  require(targets.size() == rows, "cross_entropy: " + std::to_string(targets.size()) +
                                      " targets for logits " + shape_string(lv.shape()));
  std::size_t count = 0;
  for (int t : targets) {
    if (t == pad_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(t) +
                              " outside [0, " + std::to_string(vocab) + ")");
    }
    ++count;
  }
  std::vector<Real> probs(lv.size());
  kernels::parallel::softmax_rows(rows, vocab, lv.raw(), probs.data());
  Real loss = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] == pad_id) continue;
    const Real* row = lv.raw() + r * vocab;
    Real mx = row[0];
    for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
    Real total = 0;
    for (std::size_t j = 0; j < vocab; ++j) total += std::exp(row[j] - mx);
    loss += (mx + std::log(total)) - row[static_cast<std::size_t>(targets[r])];
  }
  if (count) loss /= static_cast<Real>(count);
  Var c = push(Tensor<Real>({1}, std::vector<Real>{loss}), needs(logits));
  if (nodes_[c.id].needs_grad && count) {
    nodes_[c.id].back = [this, logits, c, rows, vocab, count, pad_id,
                         targets = std::vector<int>(targets.begin(), targets.end()),
                         probs = std::move(probs)] {
      const Real scale = nodes_[c.id].grad[0] / static_cast<Real>(count);
      auto& g = grad_of(logits.id);
      for (std::size_t r = 0; r < rows; ++r) {
        if (targets[r] == pad_id) continue;
        for (std::size_t j = 0; j < vocab; ++j) g[r * vocab + j] += scale * probs[r * vocab + j];
        g[r * vocab + static_cast<std::size_t>(targets[r])] -= scale;
      }
    };
  }
  return c;
}

template <class Real>
Var Graph<Real>::sum(Var x) {
  Real total = 0;
  for (Real v : value(x).data()) total += v;
  Var c = push(Tensor<Real>({1}, std::vector<Real>{total}), needs(x));
  if (nodes_[c.id].needs_grad) {
    nodes_[c.id].back = [this, x, c] {
      const Real d = nodes_[c.id].grad[0];
      for (auto& g : grad_of(x.id).data()) g += d;
    };
  }
  return c;
}

template <class Real>
Var Graph<Real>::dropout(Var x, Real rate, std::mt19937_64& rng) {
  if (rate <= Real(0)) return x;
  if (rate >= Real(1)) throw std::invalid_argument("dropout: rate must be < 1");
  const auto& xv = value(x);
  std::vector<Real> keep(xv.size());
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const Real inv = Real(1) / (Real(1) - rate);
  Tensor<Real> out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) {
    keep[i] = uniform(rng) < static_cast<double>(rate) ? Real(0) : inv;
    out[i] *= keep[i];
  }
  Var c = push(std::move(out), needs(x));
  if (nodes_[c.id].needs_grad) {
    nodes_[c.id].back = [this, x, c, keep = std::move(keep)] {
      const auto& dc = nodes_[c.id].grad;
      auto& g = grad_of(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i] * keep[i];
    };
  }
  return c;
}

template <class Real>
void Graph<Real>::backward(Var loss) {
  if (!record_) throw std::logic_error("backward on a graph built without recording");
  if (backward_done_) throw std::logic_error("backward called twice on the same graph");
  if (loss.id >= nodes_.size() || value(loss).size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " +
                     shape_string(value(loss).shape()));
  }
  backward_done_ = true;
  for (std::size_t i = 0; i <= loss.id; ++i) {
    if (nodes_[i].needs_grad) nodes_[i].grad = Tensor<Real>(nodes_[i].value.shape());
  }
  if (!nodes_[loss.id].needs_grad) return;
  nodes_[loss.id].grad[0] = Real(1);
  trace_.clear();
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.needs_grad) continue;
    trace_.push_back(i);
    if (node.back) node.back();
    if (node.param) {
      auto& dst = node.param->grad;
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += node.grad[j];
    }
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace padst
