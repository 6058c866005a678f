#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpr/vec.hpp"

namespace dpr::ad {

using dpr::Vec;

/// Handle to a node on a Tape.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

/// Dense layer parameters, weight stored row-major (out x in).
struct AffineParams {
  int out = 0;
  int in = 0;
  Vec w;
  Vec b;

  static AffineParams zeros(int out_, int in_) {
    return AffineParams{out_, in_, Vec(static_cast<std::size_t>(out_) * in_, 0.0), Vec(out_, 0.0)};
  }
};

/// Plain forward application, no tape involved.
inline Vec affine_apply(const AffineParams& a, const Vec& x) {
  if (x.size() != static_cast<std::size_t>(a.in))
    throw std::invalid_argument("affine_apply: input dimension mismatch");
  Vec y(a.out);
  for (int o = 0; o < a.out; ++o) {
    double s = a.b[o];
    const double* row = a.w.data() + static_cast<std::size_t>(o) * a.in;
    for (int i = 0; i < a.in; ++i) s += row[i] * x[i];
    y[o] = s;
  }
  return y;
}

/// Reverse-mode tape over vector-valued primitives. Nodes are appended in
/// evaluation order, which is a topological order by construction; backward
/// walks them once in reverse. A tape belongs to one logical thread.
class Tape {
 public:
  Var leaf(Vec v) { return push(std::move(v), nullptr); }

  const Vec& val(Var x) const { return node(x).value; }

  /// Gradient of the last backward() seed with respect to x.
  const Vec& grad(Var x) const { return node(x).grad; }

  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(seed)/d(seed) = 1 and accumulates gradients into every earlier
  /// node. The seed must be scalar.
  void backward(Var seed) {
    const Node& s = node(seed);
    if (s.value.size() != 1)
      throw std::invalid_argument("backward: seed must be a scalar node");
    for (std::size_t i = 0; i <= static_cast<std::size_t>(seed.id); ++i)
      nodes_[i].grad.assign(nodes_[i].value.size(), 0.0);
    nodes_[seed.id].grad[0] = 1.0;
    for (std::int32_t i = seed.id; i >= 0; --i)
      if (nodes_[i].back) nodes_[i].back(*this, i);
  }

  // ----- elementwise / arithmetic -----

  Var add(Var a, Var b) {
    require_same(a, b, "add");
    Vec y = val(a);
    const Vec& vb = val(b);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += vb[i];
    return push(std::move(y), [a, b](Tape& t, std::int32_t self) {
      const Vec& g = t.nodes_[self].grad;
      accum(t.nodes_[a.id].grad, g, 1.0);
      accum(t.nodes_[b.id].grad, g, 1.0);
    });
  }

  Var sub(Var a, Var b) {
    require_same(a, b, "sub");
    Vec y = val(a);
    const Vec& vb = val(b);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= vb[i];
    return push(std::move(y), [a, b](Tape& t, std::int32_t self) {
      const Vec& g = t.nodes_[self].grad;
      accum(t.nodes_[a.id].grad, g, 1.0);
      accum(t.nodes_[b.id].grad, g, -1.0);
    });
  }

  Var mul(Var a, Var b) {
    require_same(a, b, "mul");
    Vec y = val(a);
    const Vec& vb = val(b);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= vb[i];
    return push(std::move(y), [a, b](Tape& t, std::int32_t self) {
      const Vec& g = t.nodes_[self].grad;
      const Vec& va = t.nodes_[a.id].value;
      const Vec& vb2 = t.nodes_[b.id].value;
      Vec& ga = t.nodes_[a.id].grad;
      Vec& gb = t.nodes_[b.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * vb2[i];
        gb[i] += g[i] * va[i];
      }
    });
  }

  Var scale(Var a, double c) {
    Vec y = val(a);
    for (double& x : y) x *= c;
    return push(std::move(y), [a, c](Tape& t, std::int32_t self) {
      accum(t.nodes_[a.id].grad, t.nodes_[self].grad, c);
    });
  }

  Var neg(Var a) { return scale(a, -1.0); }

  Var add_const(Var a, double c) {
    Vec y = val(a);
    for (double& x : y) x += c;
    return push(std::move(y), [a](Tape& t, std::int32_t self) {
      accum(t.nodes_[a.id].grad, t.nodes_[self].grad, 1.0);
    });
  }

  /// y = a + c with a constant vector c (e.g. frozen Gumbel noise).
  Var add_vec(Var a, const Vec& c) {
    Vec y = val(a);
    require_same_dim(y, c, "add_vec");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += c[i];
    return push(std::move(y), [a](Tape& t, std::int32_t self) {
      accum(t.nodes_[a.id].grad, t.nodes_[self].grad, 1.0);
    });
  }

  Var vexp(Var a) {
    Vec y = val(a);
    for (double& x : y) x = std::exp(x);
    return push(std::move(y), [a](Tape& t, std::int32_t self) {
      const Vec& g = t.nodes_[self].grad;
      const Vec& y2 = t.nodes_[self].value;
      Vec& ga = t.nodes_[a.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y2[i];
    });
  }

  Var vlog(Var a) {
    Vec y = val(a);
    for (double& x : y) {
      if (!(x > 0.0)) throw std::invalid_argument("vlog: inputs must be positive");
      x = std::log(x);
    }
    return push(std::move(y), [a](Tape& t, std::int32_t self) {
      const Vec& g = t.nodes_[self].grad;
      const Vec& va = t.nodes_[a.id].value;
      Vec& ga = t.nodes_[a.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / va[i];
    });
  }

  Var relu(Var a) {
    Vec y = val(a);
    for (double& x : y) x = x > 0.0 ? x : 0.0;
    return push(std::move(y), [a](Tape& t, std::int32_t self) {
      const Vec& g = t.nodes_[self].grad;
      const Vec& va = t.nodes_[a.id].value;
      Vec& ga = t.nodes_[a.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i)
        if (va[i] > 0.0) ga[i] += g[i];
    });
  }

  Var sigmoid(Var a) {
    Vec y = val(a);
    for (double& x : y) {
      if (x >= 0.0) {
        x = 1.0 / (1.0 + std::exp(-x));
      } else {
        double e = std::exp(x);
        x = e / (1.0 + e);
      }
    }
    return push(std::move(y), [a](Tape& t, std::int32_t self) {
      const Vec& g = t.nodes_[self].grad;
      const Vec& y2 = t.nodes_[self].value;
      Vec& ga = t.nodes_[a.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y2[i] * (1.0 - y2[i]);
    });
  }

  /// max(a_i, lo); subgradient 0 on the clamped side.
  Var clamp_min(Var a, double lo) {
    Vec y = val(a);
    for (double& x : y) x = x > lo ? x : lo;
    return push(std::move(y), [a, lo](Tape& t, std::int32_t self) {
      const Vec& g = t.nodes_[self].grad;
      const Vec& va = t.nodes_[a.id].value;
      Vec& ga = t.nodes_[a.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i)
        if (va[i] > lo) ga[i] += g[i];
    });
  }

  /// log(max(1 - x, eps)) elementwise; the iterative-exclusion penalty.
  Var log1m_clamped(Var a, double eps) {
    Vec y = val(a);
    for (double& x : y) x = std::log(std::max(1.0 - x, eps));
    return push(std::move(y), [a, eps](Tape& t, std::int32_t self) {
      const Vec& g = t.nodes_[self].grad;
      const Vec& va = t.nodes_[a.id].value;
      Vec& ga = t.nodes_[a.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        double rem = 1.0 - va[i];
        if (rem > eps) ga[i] -= g[i] / rem;
      }
    });
  }

  // ----- reductions / indexing -----

  Var sum(Var a) {
    Vec y{dpr::sum(val(a))};
    return push(std::move(y), [a](Tape& t, std::int32_t self) {
      double g = t.nodes_[self].grad[0];
      for (double& ga : t.nodes_[a.id].grad) ga += g;
    });
  }

  Var dot(Var a, Var b) {
    require_same(a, b, "dot");
    const Vec& va = val(a);
    const Vec& vb = val(b);
    double s = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) s += va[i] * vb[i];
    return push(Vec{s}, [a, b](Tape& t, std::int32_t self) {
      double g = t.nodes_[self].grad[0];
      const Vec& va2 = t.nodes_[a.id].value;
      const Vec& vb2 = t.nodes_[b.id].value;
      Vec& ga = t.nodes_[a.id].grad;
      Vec& gb = t.nodes_[b.id].grad;
      for (std::size_t i = 0; i < va2.size(); ++i) {
        ga[i] += g * vb2[i];
        gb[i] += g * va2[i];
      }
    });
  }

  /// Scalar y = a[i].
  Var pick(Var a, int i) {
    const Vec& va = val(a);
    if (i < 0 || static_cast<std::size_t>(i) >= va.size())
      throw std::invalid_argument("pick: index out of range");
    return push(Vec{va[i]}, [a, i](Tape& t, std::int32_t self) {
      t.nodes_[a.id].grad[i] += t.nodes_[self].grad[0];
    });
  }

  Var slice(Var a, int start, int len) {
    const Vec& va = val(a);
    if (start < 0 || len < 0 || static_cast<std::size_t>(start + len) > va.size())
      throw std::invalid_argument("slice: range out of bounds");
    Vec y(va.begin() + start, va.begin() + start + len);
    return push(std::move(y), [a, start, len](Tape& t, std::int32_t self) {
      const Vec& g = t.nodes_[self].grad;
      Vec& ga = t.nodes_[a.id].grad;
      for (int i = 0; i < len; ++i) ga[start + i] += g[i];
    });
  }

  Var concat(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat: empty list");
    Vec y;
    std::vector<Var> ps(parts.begin(), parts.end());
    for (Var p : ps) {
      const Vec& v = val(p);
      y.insert(y.end(), v.begin(), v.end());
    }
    return push(std::move(y), [ps](Tape& t, std::int32_t self) {
      const Vec& g = t.nodes_[self].grad;
      std::size_t off = 0;
      for (Var p : ps) {
        Vec& gp = t.nodes_[p.id].grad;
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
        off += gp.size();
      }
    });
  }

  Var concat(std::initializer_list<Var> parts) {
    return concat(std::span<const Var>(parts.begin(), parts.size()));
  }

  /// Max over a subset of entries; gradient flows to the first argmax.
  Var max_subset(Var a, std::span<const int> idx) {
    if (idx.empty()) throw std::invalid_argument("max_subset: empty subset");
    const Vec& va = val(a);
    int best = idx[0];
    for (int i : idx) {
      if (i < 0 || static_cast<std::size_t>(i) >= va.size())
        throw std::invalid_argument("max_subset: index out of range");
      if (va[i] > va[best]) best = i;
    }
    return push(Vec{va[best]}, [a, best](Tape& t, std::int32_t self) {
      t.nodes_[a.id].grad[best] += t.nodes_[self].grad[0];
    });
  }

  // ----- structured primitives -----

  /// y = W x + b with W row-major (out x in).
  Var affine(Var w, Var b, Var x, int out, int in) {
    const Vec& vw = val(w);
    const Vec& vb = val(b);
    const Vec& vx = val(x);
    if (vw.size() != static_cast<std::size_t>(out) * in || vb.size() != static_cast<std::size_t>(out))
      throw std::invalid_argument("affine: parameter shape mismatch");
    if (vx.size() != static_cast<std::size_t>(in))
      throw std::invalid_argument("affine: input dimension mismatch");
    Vec y(out);
    for (int o = 0; o < out; ++o) {
      double s = vb[o];
      const double* row = vw.data() + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) s += row[i] * vx[i];
      y[o] = s;
    }
    return push(std::move(y), [w, b, x, out, in](Tape& t, std::int32_t self) {
      const Vec& g = t.nodes_[self].grad;
      const Vec& vw2 = t.nodes_[w.id].value;
      const Vec& vx2 = t.nodes_[x.id].value;
      Vec& gw = t.nodes_[w.id].grad;
      Vec& gb = t.nodes_[b.id].grad;
      Vec& gx = t.nodes_[x.id].grad;
      for (int o = 0; o < out; ++o) {
        double go = g[o];
        gb[o] += go;
        const double* row = vw2.data() + static_cast<std::size_t>(o) * in;
        double* growg = gw.data() + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) {
          growg[i] += go * vx2[i];
          gx[i] += go * row[i];
        }
      }
    });
  }

  Var affine(Var w, Var b, Var x, const AffineParams& shape) {
    return affine(w, b, x, shape.out, shape.in);
  }

  Var softmax_tau(Var logits, double tau) {
    Vec y = dpr::softmax_tau(val(logits), tau);
    Var l = logits;
    return push(std::move(y), [l, tau](Tape& t, std::int32_t self) {
      const Vec& g = t.nodes_[self].grad;
      const Vec& y2 = t.nodes_[self].value;
      const Vec& vl = t.nodes_[l.id].value;
      Vec& gl = t.nodes_[l.id].grad;
      double inner = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) inner += g[i] * y2[i];
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!is_neg_inf(vl[i])) gl[i] += y2[i] * (g[i] - inner) / tau;
    });
  }

  /// Euclidean distance; gradient defined as 0 at coincident points.
  Var l2_dist(Var a, Var b) {
    require_same(a, b, "l2_dist");
    double d = dpr::l2_dist(val(a), val(b));
    return push(Vec{d}, [a, b](Tape& t, std::int32_t self) {
      double d2 = t.nodes_[self].value[0];
      if (d2 <= 0.0) return;
      double g = t.nodes_[self].grad[0] / d2;
      const Vec& va = t.nodes_[a.id].value;
      const Vec& vb = t.nodes_[b.id].value;
      Vec& ga = t.nodes_[a.id].grad;
      Vec& gb = t.nodes_[b.id].grad;
      for (std::size_t i = 0; i < va.size(); ++i) {
        double diff = (va[i] - vb[i]) * g;
        ga[i] += diff;
        gb[i] -= diff;
      }
    });
  }

  /// Manhattan distance; sign subgradient, 0 at ties.
  Var l1_dist(Var a, Var b) {
    require_same(a, b, "l1_dist");
    double d = dpr::l1_dist(val(a), val(b));
    return push(Vec{d}, [a, b](Tape& t, std::int32_t self) {
      double g = t.nodes_[self].grad[0];
      const Vec& va = t.nodes_[a.id].value;
      const Vec& vb = t.nodes_[b.id].value;
      Vec& ga = t.nodes_[a.id].grad;
      Vec& gb = t.nodes_[b.id].grad;
      for (std::size_t i = 0; i < va.size(); ++i) {
        double s = va[i] > vb[i] ? 1.0 : (va[i] < vb[i] ? -1.0 : 0.0);
        ga[i] += g * s;
        gb[i] -= g * s;
      }
    });
  }

  Var avg_pool(std::span<const Var> vs) {
    if (vs.empty()) throw std::invalid_argument("avg_pool: empty list");
    std::vector<Var> ps(vs.begin(), vs.end());
    Vec y(val(ps[0]).size(), 0.0);
    for (Var p : ps) {
      const Vec& v = val(p);
      require_same_dim(y, v, "avg_pool");
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += v[i];
    }
    double inv = 1.0 / static_cast<double>(ps.size());
    for (double& x : y) x *= inv;
    return push(std::move(y), [ps, inv](Tape& t, std::int32_t self) {
      const Vec& g = t.nodes_[self].grad;
      for (Var p : ps) accum(t.nodes_[p.id].grad, g, inv);
    });
  }

  Var avg_pool(std::initializer_list<Var> vs) {
    return avg_pool(std::span<const Var>(vs.begin(), vs.size()));
  }

  /// y = sum_i weights[i] * feats[i]; one weight per feature vector.
  Var weighted_sum(std::span<const Var> feats, Var weights) {
    const Vec& vw = val(weights);
    if (feats.size() != vw.size())
      throw std::invalid_argument("weighted_sum: one weight per vector required");
    if (feats.empty()) throw std::invalid_argument("weighted_sum: empty list");
    std::vector<Var> fs(feats.begin(), feats.end());
    Vec y(val(fs[0]).size(), 0.0);
    for (std::size_t i = 0; i < fs.size(); ++i) {
      const Vec& f = val(fs[i]);
      require_same_dim(y, f, "weighted_sum");
      for (std::size_t j = 0; j < y.size(); ++j) y[j] += vw[i] * f[j];
    }
    return push(std::move(y), [fs, weights](Tape& t, std::int32_t self) {
      const Vec& g = t.nodes_[self].grad;
      const Vec& vw2 = t.nodes_[weights.id].value;
      Vec& gw = t.nodes_[weights.id].grad;
      for (std::size_t i = 0; i < fs.size(); ++i) {
        const Vec& f = t.nodes_[fs[i].id].value;
        Vec& gf = t.nodes_[fs[i].id].grad;
        double dotv = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) {
          dotv += g[j] * f[j];
          gf[j] += g[j] * vw2[i];
        }
        gw[i] += dotv;
      }
    });
  }

  /// y = sum_t weights[idx[t]] * feats[t]; weights indexed through idx.
  Var weighted_sum_subset(std::span<const Var> feats, Var weights, std::span<const int> idx) {
    if (feats.size() != idx.size())
      throw std::invalid_argument("weighted_sum_subset: feats/idx size mismatch");
    if (feats.empty()) throw std::invalid_argument("weighted_sum_subset: empty subset");
    const Vec& vw = val(weights);
    std::vector<Var> fs(feats.begin(), feats.end());
    std::vector<int> is(idx.begin(), idx.end());
    for (int i : is)
      if (i < 0 || static_cast<std::size_t>(i) >= vw.size())
        throw std::invalid_argument("weighted_sum_subset: index out of range");
    Vec y(val(fs[0]).size(), 0.0);
    for (std::size_t t = 0; t < fs.size(); ++t) {
      const Vec& f = val(fs[t]);
      require_same_dim(y, f, "weighted_sum_subset");
      for (std::size_t j = 0; j < y.size(); ++j) y[j] += vw[is[t]] * f[j];
    }
    return push(std::move(y), [fs, is, weights](Tape& t, std::int32_t self) {
      const Vec& g = t.nodes_[self].grad;
      const Vec& vw2 = t.nodes_[weights.id].value;
      Vec& gw = t.nodes_[weights.id].grad;
      for (std::size_t k = 0; k < fs.size(); ++k) {
        const Vec& f = t.nodes_[fs[k].id].value;
        Vec& gf = t.nodes_[fs[k].id].grad;
        double dotv = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) {
          dotv += g[j] * f[j];
          gf[j] += g[j] * vw2[is[k]];
        }
        gw[is[k]] += dotv;
      }
    });
  }

  /// y[i] = scalars[group_of(i)] where groups partition [0, size).
  Var scatter_groups(std::span<const Var> scalars, const std::vector<std::vector<int>>& groups,
                     int size) {
    if (scalars.size() != groups.size())
      throw std::invalid_argument("scatter_groups: one scalar per group required");
    std::vector<Var> ss(scalars.begin(), scalars.end());
    Vec y(size, 0.0);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const Vec& v = val(ss[g]);
      if (v.size() != 1) throw std::invalid_argument("scatter_groups: scalars must be 1-dim");
      for (int i : groups[g]) {
        if (i < 0 || i >= size) throw std::invalid_argument("scatter_groups: index out of range");
        y[i] = v[0];
      }
    }
    auto groups_copy = groups;
    return push(std::move(y), [ss, groups_copy](Tape& t, std::int32_t self) {
      const Vec& g = t.nodes_[self].grad;
      for (std::size_t k = 0; k < ss.size(); ++k) {
        double s = 0.0;
        for (int i : groups_copy[k]) s += g[i];
        t.nodes_[ss[k].id].grad[0] += s;
      }
    });
  }

 private:
  struct Node {
    Vec value;
    Vec grad;
    std::function<void(Tape&, std::int32_t)> back;
  };

  Var push(Vec v, std::function<void(Tape&, std::int32_t)> back) {
    nodes_.push_back(Node{std::move(v), {}, std::move(back)});
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  const Node& node(Var x) const {
    if (!x.valid() || static_cast<std::size_t>(x.id) >= nodes_.size())
      throw std::invalid_argument("tape: invalid var handle");
    return nodes_[x.id];
  }

  void require_same(Var a, Var b, const char* op) const {
    require_same_dim(val(a), val(b), op);
  }

  static void accum(Vec& dst, const Vec& g, double c) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += c * g[i];
  }

  std::vector<Node> nodes_;
};

}  // namespace dpr::ad
