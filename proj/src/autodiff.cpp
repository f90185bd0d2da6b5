#include "tdgem/autodiff.hpp"

#include <cmath>

#include "tdgem/kernels.hpp"

namespace tdgem::ad {

namespace {

void check_same_graph(Var a, Var b) {
    if (a.graph != b.graph || a.graph == nullptr)
        throw TdgemError("autodiff: operands belong to different graphs");
}

void accum(Tensor& g, const Tensor& delta) {
    kernels::axpy(1.0, delta.data(), g.data(), g.size());
}

}  // namespace

Var Graph::constant(Tensor v) { return emit(std::move(v), false, nullptr); }

Var Graph::input(Tensor v) { return emit(std::move(v), true, nullptr); }

Var Graph::emit(Tensor val, bool requires_grad, BackwardFn back) {
    Node n;
    n.val = std::move(val);
    n.back = std::move(back);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Graph::val(Var v) const { return nodes_.at(v.id).val; }

const Tensor& Graph::grad(Var v) const { return nodes_.at(v.id).grad; }

void Graph::backward(Var root) {
    if (!root.valid() || root.graph != this) throw TdgemError("backward: bad root");
    if (nodes_[root.id].val.size() != 1)
        throw TdgemError("backward: root must be a scalar");
    for (auto& n : nodes_) {
        n.grad = Tensor(n.val.shape());
    }
    nodes_[root.id].grad[0] = 1.0;
    for (int i = root.id; i >= 0; --i) {
        if (nodes_[i].requires_grad && nodes_[i].back) nodes_[i].back(*this, i);
    }
}

void Graph::clear() { nodes_.clear(); }

// ---------------------------------------------------------------------------

namespace {

bool any_grad(std::initializer_list<Var> vs) {
    for (Var v : vs)
        if (v.graph->node_requires_grad(v.id)) return true;
    return false;
}

}  // namespace

Var add(Var a, Var b) {
    check_same_graph(a, b);
    Graph& g = *a.graph;
    const Tensor& ta = g.val(a);
    const Tensor& tb = g.val(b);
    if (!ta.same_shape(tb)) throw TdgemError("add: shape mismatch");
    Tensor out(ta.shape());
    kernels::add(ta.data(), tb.data(), out.data(), out.size());
    const int ia = a.id, ib = b.id;
    return g.emit(std::move(out), any_grad({a, b}), [ia, ib](Graph& gr, int self) {
        const Tensor& go = gr.node_grad(self);
        if (gr.node_requires_grad(ia)) accum(gr.node_grad(ia), go);
        if (gr.node_requires_grad(ib)) accum(gr.node_grad(ib), go);
    });
}

Var sub(Var a, Var b) {
    check_same_graph(a, b);
    Graph& g = *a.graph;
    const Tensor& ta = g.val(a);
    const Tensor& tb = g.val(b);
    if (!ta.same_shape(tb)) throw TdgemError("sub: shape mismatch");
    Tensor out(ta.shape());
    kernels::sub(ta.data(), tb.data(), out.data(), out.size());
    const int ia = a.id, ib = b.id;
    return g.emit(std::move(out), any_grad({a, b}), [ia, ib](Graph& gr, int self) {
        const Tensor& go = gr.node_grad(self);
        if (gr.node_requires_grad(ia)) accum(gr.node_grad(ia), go);
        if (gr.node_requires_grad(ib))
            kernels::axpy(-1.0, go.data(), gr.node_grad(ib).data(), go.size());
    });
}

Var mul(Var a, Var b) {
    check_same_graph(a, b);
    Graph& g = *a.graph;
    const Tensor& ta = g.val(a);
    const Tensor& tb = g.val(b);
    if (!ta.same_shape(tb)) throw TdgemError("mul: shape mismatch");
    Tensor out(ta.shape());
    kernels::mul(ta.data(), tb.data(), out.data(), out.size());
    const int ia = a.id, ib = b.id;
    return g.emit(std::move(out), any_grad({a, b}), [ia, ib](Graph& gr, int self) {
        const Tensor& go = gr.node_grad(self);
        const Tensor& va = gr.node_val(ia);
        const Tensor& vb = gr.node_val(ib);
        if (gr.node_requires_grad(ia)) {
            Tensor& ga = gr.node_grad(ia);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vb[i];
        }
        if (gr.node_requires_grad(ib)) {
            Tensor& gb = gr.node_grad(ib);
            for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * va[i];
        }
    });
}

Var scale(Var a, double s) {
    Graph& g = *a.graph;
    const Tensor& ta = g.val(a);
    Tensor out(ta.shape());
    kernels::scale(ta.data(), s, out.data(), out.size());
    const int ia = a.id;
    return g.emit(std::move(out), g.node_requires_grad(ia), [ia, s](Graph& gr, int self) {
        const Tensor& go = gr.node_grad(self);
        kernels::axpy(s, go.data(), gr.node_grad(ia).data(), go.size());
    });
}

Var add_scalar(Var a, double c) {
    Graph& g = *a.graph;
    Tensor out = g.val(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c;
    const int ia = a.id;
    return g.emit(std::move(out), g.node_requires_grad(ia), [ia](Graph& gr, int self) {
        accum(gr.node_grad(ia), gr.node_grad(self));
    });
}

Var abs_t(Var a) {
    Graph& g = *a.graph;
    const Tensor& ta = g.val(a);
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < ta.size(); ++i) out[i] = std::fabs(ta[i]);
    const int ia = a.id;
    return g.emit(std::move(out), g.node_requires_grad(ia), [ia](Graph& gr, int self) {
        const Tensor& go = gr.node_grad(self);
        const Tensor& va = gr.node_val(ia);
        Tensor& ga = gr.node_grad(ia);
        for (std::size_t i = 0; i < go.size(); ++i) {
            const double s = va[i] > 0.0 ? 1.0 : (va[i] < 0.0 ? -1.0 : 0.0);
            ga[i] += go[i] * s;
        }
    });
}

Var leaky_relu(Var a, double slope) {
    Graph& g = *a.graph;
    const Tensor& ta = g.val(a);
    Tensor out(ta.shape());
    kernels::leaky_relu(ta.data(), slope, out.data(), out.size());
    const int ia = a.id;
    return g.emit(std::move(out), g.node_requires_grad(ia), [ia, slope](Graph& gr, int self) {
        kernels::leaky_relu_bwd(gr.node_val(ia).data(), gr.node_grad(self).data(), slope,
                                gr.node_grad(ia).data(), gr.node_grad(self).size());
    });
}

Var tanh_t(Var a) {
    Graph& g = *a.graph;
    const Tensor& ta = g.val(a);
    Tensor out(ta.shape());
    kernels::tanh_fwd(ta.data(), out.data(), out.size());
    const int ia = a.id;
    return g.emit(std::move(out), g.node_requires_grad(ia), [ia](Graph& gr, int self) {
        kernels::tanh_bwd(gr.node_val(self).data(), gr.node_grad(self).data(),
                          gr.node_grad(ia).data(), gr.node_grad(self).size());
    });
}

Var reshape(Var a, std::vector<std::size_t> shape) {
    Graph& g = *a.graph;
    Tensor out = g.val(a).reshaped(std::move(shape));
    const int ia = a.id;
    return g.emit(std::move(out), g.node_requires_grad(ia), [ia](Graph& gr, int self) {
        accum(gr.node_grad(ia), gr.node_grad(self));
    });
}

Var slice_rows(Var a, std::size_t r0, std::size_t r1) {
    Graph& g = *a.graph;
    const Tensor& ta = g.val(a);
    const std::size_t rows = ta.rows(), cols = ta.cols();
    if (r0 >= r1 || r1 > rows) throw TdgemError("slice_rows: bad range");
    Tensor out({r1 - r0, cols});
    kernels::copy(ta.data() + r0 * cols, out.data(), (r1 - r0) * cols);
    const int ia = a.id;
    return g.emit(std::move(out), g.node_requires_grad(ia),
                  [ia, r0, cols](Graph& gr, int self) {
                      const Tensor& go = gr.node_grad(self);
                      kernels::axpy(1.0, go.data(),
                                    gr.node_grad(ia).data() + r0 * cols, go.size());
                  });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw TdgemError("concat_rows: empty input");
    Graph& g = *parts[0].graph;
    const std::size_t cols = g.val(parts[0]).cols();
    std::size_t rows = 0;
    bool rg = false;
    for (Var p : parts) {
        check_same_graph(parts[0], p);
        if (g.val(p).cols() != cols) throw TdgemError("concat_rows: column mismatch");
        rows += g.val(p).rows();
        rg = rg || g.node_requires_grad(p.id);
    }
    Tensor out({rows, cols});
    std::vector<int> ids;
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (Var p : parts) {
        const Tensor& tp = g.val(p);
        kernels::copy(tp.data(), out.data() + off, tp.size());
        ids.push_back(p.id);
        offsets.push_back(off);
        off += tp.size();
    }
    return g.emit(std::move(out), rg, [ids, offsets](Graph& gr, int self) {
        const Tensor& go = gr.node_grad(self);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (!gr.node_requires_grad(ids[i])) continue;
            Tensor& gp = gr.node_grad(ids[i]);
            kernels::axpy(1.0, go.data() + offsets[i], gp.data(), gp.size());
        }
    });
}

Var matmul(Var a, Var b) {
    check_same_graph(a, b);
    Graph& g = *a.graph;
    const Tensor& ta = g.val(a);
    const Tensor& tb = g.val(b);
    const std::size_t m = ta.rows(), k = ta.cols(), n = tb.cols();
    if (tb.rows() != k) throw TdgemError("matmul: inner dimension mismatch");
    Tensor out({m, n});
    kernels::matmul(ta.data(), tb.data(), out.data(), m, k, n);
    const int ia = a.id, ib = b.id;
    return g.emit(std::move(out), any_grad({a, b}), [ia, ib, m, k, n](Graph& gr, int self) {
        const Tensor& go = gr.node_grad(self);
        if (gr.node_requires_grad(ia)) {
            Tensor tmp({m, k});
            kernels::matmul_nt(go.data(), gr.node_val(ib).data(), tmp.data(), m, n, k);
            accum(gr.node_grad(ia), tmp);
        }
        if (gr.node_requires_grad(ib)) {
            Tensor tmp({k, n});
            kernels::matmul_tn(gr.node_val(ia).data(), go.data(), tmp.data(), m, k, n);
            accum(gr.node_grad(ib), tmp);
        }
    });
}

Var affine_rows(Var x, Var w, Var b) {
    check_same_graph(x, w);
    check_same_graph(x, b);
    Graph& g = *x.graph;
    const Tensor& tx = g.val(x);
    const Tensor& tw = g.val(w);
    const Tensor& tb = g.val(b);
    const std::size_t n = tx.rows(), din = tx.cols(), dout = tw.rows();
    if (tw.cols() != din || tb.size() != dout)
        throw TdgemError("affine_rows: dimension mismatch");
    Tensor out({n, dout});
    kernels::matmul_nt(tx.data(), tw.data(), out.data(), n, din, dout);
    for (std::size_t r = 0; r < n; ++r)
        kernels::add(out.data() + r * dout, tb.data(), out.data() + r * dout, dout);
    const int ix = x.id, iw = w.id, ib2 = b.id;
    return g.emit(std::move(out), any_grad({x, w, b}),
                  [ix, iw, ib2, n, din, dout](Graph& gr, int self) {
                      const Tensor& go = gr.node_grad(self);
                      if (gr.node_requires_grad(ix)) {
                          Tensor tmp({n, din});
                          kernels::matmul(go.data(), gr.node_val(iw).data(), tmp.data(), n,
                                          dout, din);
                          accum(gr.node_grad(ix), tmp);
                      }
                      if (gr.node_requires_grad(iw)) {
                          Tensor tmp({dout, din});
                          kernels::matmul_tn(go.data(), gr.node_val(ix).data(), tmp.data(),
                                             n, dout, din);
                          accum(gr.node_grad(iw), tmp);
                      }
                      if (gr.node_requires_grad(ib2)) {
                          Tensor& gb = gr.node_grad(ib2);
                          for (std::size_t r = 0; r < n; ++r)
                              for (std::size_t j = 0; j < dout; ++j)
                                  gb[j] += go[r * dout + j];
                      }
                  });
}

Var mul_rowvec(Var a, Var v) {
    check_same_graph(a, v);
    Graph& g = *a.graph;
    const Tensor& ta = g.val(a);
    const Tensor& tv = g.val(v);
    const std::size_t n = ta.rows(), d = ta.cols();
    if (tv.size() != d) throw TdgemError("mul_rowvec: dimension mismatch");
    Tensor out(ta.shape());
    for (std::size_t r = 0; r < n; ++r)
        kernels::mul(ta.data() + r * d, tv.data(), out.data() + r * d, d);
    const int ia = a.id, iv = v.id;
    return g.emit(std::move(out), any_grad({a, v}), [ia, iv, n, d](Graph& gr, int self) {
        const Tensor& go = gr.node_grad(self);
        const Tensor& va = gr.node_val(ia);
        const Tensor& vv = gr.node_val(iv);
        if (gr.node_requires_grad(ia)) {
            Tensor& ga = gr.node_grad(ia);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < d; ++j)
                    ga[r * d + j] += go[r * d + j] * vv[j];
        }
        if (gr.node_requires_grad(iv)) {
            Tensor& gv = gr.node_grad(iv);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < d; ++j)
                    gv[j] += go[r * d + j] * va[r * d + j];
        }
    });
}

Var add_rowvec(Var a, Var v) {
    check_same_graph(a, v);
    Graph& g = *a.graph;
    const Tensor& ta = g.val(a);
    const Tensor& tv = g.val(v);
    const std::size_t n = ta.rows(), d = ta.cols();
    if (tv.size() != d) throw TdgemError("add_rowvec: dimension mismatch");
    Tensor out(ta.shape());
    for (std::size_t r = 0; r < n; ++r)
        kernels::add(ta.data() + r * d, tv.data(), out.data() + r * d, d);
    const int ia = a.id, iv = v.id;
    return g.emit(std::move(out), any_grad({a, v}), [ia, iv, n, d](Graph& gr, int self) {
        const Tensor& go = gr.node_grad(self);
        if (gr.node_requires_grad(ia)) accum(gr.node_grad(ia), go);
        if (gr.node_requires_grad(iv)) {
            Tensor& gv = gr.node_grad(iv);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < d; ++j) gv[j] += go[r * d + j];
        }
    });
}

Var sum(Var a) {
    Graph& g = *a.graph;
    const Tensor& ta = g.val(a);
    Tensor out = Tensor::scalar(kernels::sum(ta.data(), ta.size()));
    const int ia = a.id;
    return g.emit(std::move(out), g.node_requires_grad(ia), [ia](Graph& gr, int self) {
        const double go = gr.node_grad(self)[0];
        Tensor& ga = gr.node_grad(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go;
    });
}

Var mean(Var a) {
    Graph& g = *a.graph;
    const Tensor& ta = g.val(a);
    const double inv = 1.0 / static_cast<double>(ta.size());
    Tensor out = Tensor::scalar(kernels::sum(ta.data(), ta.size()) * inv);
    const int ia = a.id;
    return g.emit(std::move(out), g.node_requires_grad(ia), [ia, inv](Graph& gr, int self) {
        const double go = gr.node_grad(self)[0] * inv;
        Tensor& ga = gr.node_grad(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go;
    });
}

Var dot(Var a, Var b) {
    check_same_graph(a, b);
    Graph& g = *a.graph;
    const Tensor& ta = g.val(a);
    const Tensor& tb = g.val(b);
    if (ta.size() != tb.size()) throw TdgemError("dot: size mismatch");
    Tensor out = Tensor::scalar(kernels::dot(ta.data(), tb.data(), ta.size()));
    const int ia = a.id, ib = b.id;
    return g.emit(std::move(out), any_grad({a, b}), [ia, ib](Graph& gr, int self) {
        const double go = gr.node_grad(self)[0];
        if (gr.node_requires_grad(ia))
            kernels::axpy(go, gr.node_val(ib).data(), gr.node_grad(ia).data(),
                          gr.node_grad(ia).size());
        if (gr.node_requires_grad(ib))
            kernels::axpy(go, gr.node_val(ia).data(), gr.node_grad(ib).data(),
                          gr.node_grad(ib).size());
    });
}

Var l2norm(Var a) {
    Graph& g = *a.graph;
    const Tensor& ta = g.val(a);
    const double nrm = std::sqrt(kernels::dot(ta.data(), ta.data(), ta.size()));
    const int ia = a.id;
    return g.emit(Tensor::scalar(nrm), g.node_requires_grad(ia),
                  [ia, nrm](Graph& gr, int self) {
                      if (nrm <= 0.0) return;  // subgradient 0 at the origin
                      const double go = gr.node_grad(self)[0] / nrm;
                      kernels::axpy(go, gr.node_val(ia).data(), gr.node_grad(ia).data(),
                                    gr.node_grad(ia).size());
                  });
}

Var div_s(Var a, Var b) {
    check_same_graph(a, b);
    Graph& g = *a.graph;
    if (g.val(a).size() != 1 || g.val(b).size() != 1)
        throw TdgemError("div_s: scalars expected");
    const double va = g.val(a)[0], vb = g.val(b)[0];
    if (vb == 0.0) throw TdgemError("div_s: division by zero");
    const int ia = a.id, ib = b.id;
    return g.emit(Tensor::scalar(va / vb), any_grad({a, b}),
                  [ia, ib, va, vb](Graph& gr, int self) {
                      const double go = gr.node_grad(self)[0];
                      if (gr.node_requires_grad(ia)) gr.node_grad(ia)[0] += go / vb;
                      if (gr.node_requires_grad(ib))
                          gr.node_grad(ib)[0] += -go * va / (vb * vb);
                  });
}

Var mul_scalar_t(Var a, Var s) {
    check_same_graph(a, s);
    Graph& g = *a.graph;
    if (g.val(s).size() != 1) throw TdgemError("mul_scalar_t: scalar expected");
    const double vs = g.val(s)[0];
    const Tensor& ta = g.val(a);
    Tensor out(ta.shape());
    kernels::scale(ta.data(), vs, out.data(), out.size());
    const int ia = a.id, is = s.id;
    return g.emit(std::move(out), any_grad({a, s}), [ia, is, vs](Graph& gr, int self) {
        const Tensor& go = gr.node_grad(self);
        if (gr.node_requires_grad(ia))
            kernels::axpy(vs, go.data(), gr.node_grad(ia).data(), go.size());
        if (gr.node_requires_grad(is))
            gr.node_grad(is)[0] +=
                kernels::dot(go.data(), gr.node_val(ia).data(), go.size());
    });
}

Var div_scalar_t(Var a, Var s) {
    check_same_graph(a, s);
    Graph& g = *a.graph;
    if (g.val(s).size() != 1) throw TdgemError("div_scalar_t: scalar expected");
    const double vs = g.val(s)[0];
    if (vs == 0.0) throw TdgemError("div_scalar_t: division by zero");
    const Tensor& ta = g.val(a);
    Tensor out(ta.shape());
    kernels::scale(ta.data(), 1.0 / vs, out.data(), out.size());
    const int ia = a.id, is = s.id;
    return g.emit(std::move(out), any_grad({a, s}), [ia, is, vs](Graph& gr, int self) {
        const Tensor& go = gr.node_grad(self);
        if (gr.node_requires_grad(ia))
            kernels::axpy(1.0 / vs, go.data(), gr.node_grad(ia).data(), go.size());
        if (gr.node_requires_grad(is))
            gr.node_grad(is)[0] += -kernels::dot(go.data(), gr.node_val(self).data(),
                                                 go.size()) /
                                   vs;
    });
}

Var pixelnorm_rows(Var x, double eps) {
    Graph& g = *x.graph;
    const Tensor& tx = g.val(x);
    const std::size_t n = tx.rows(), d = tx.cols();
    Tensor out(tx.shape());
    std::vector<double> denom(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double* row = tx.data() + r * d;
        double m = 0.0;
        for (std::size_t j = 0; j < d; ++j) m += row[j] * row[j];
        m /= static_cast<double>(d);
        denom[r] = std::sqrt(m + eps);
        kernels::scale(row, 1.0 / denom[r], out.data() + r * d, d);
    }
    const int ix = x.id;
    return g.emit(std::move(out), g.node_requires_grad(ix),
                  [ix, n, d, denom](Graph& gr, int self) {
                      const Tensor& go = gr.node_grad(self);
                      const Tensor& vx = gr.node_val(ix);
                      Tensor& gx = gr.node_grad(ix);
                      for (std::size_t r = 0; r < n; ++r) {
                          const double* row = vx.data() + r * d;
                          const double* grow = go.data() + r * d;
                          const double s = denom[r];
                          double gx_dot_x = 0.0;
                          for (std::size_t j = 0; j < d; ++j) gx_dot_x += grow[j] * row[j];
                          const double c = gx_dot_x / (static_cast<double>(d) * s * s * s);
                          for (std::size_t j = 0; j < d; ++j)
                              gx[r * d + j] += grow[j] / s - c * row[j];
                      }
                  });
}

Var rownorm_meanstd(Var y, double eps) {
    Graph& g = *y.graph;
    const Tensor& ty = g.val(y);
    const std::size_t n = ty.rows(), d = ty.cols();
    Tensor out(ty.shape());
    std::vector<double> mus(n), sigmas(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double* row = ty.data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double v = 0.0;
        for (std::size_t j = 0; j < d; ++j) v += (row[j] - mu) * (row[j] - mu);
        v /= static_cast<double>(d);
        const double sigma = std::sqrt(v);
        mus[r] = mu;
        sigmas[r] = sigma;
        const double t = sigma + eps;
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = (row[j] - mu) / t;
    }
    const int iy = y.id;
    return g.emit(std::move(out), g.node_requires_grad(iy),
                  [iy, n, d, mus, sigmas, eps](Graph& gr, int self) {
                      const Tensor& go = gr.node_grad(self);
                      const Tensor& vy = gr.node_val(iy);
                      Tensor& gy = gr.node_grad(iy);
                      for (std::size_t r = 0; r < n; ++r) {
                          const double* row = vy.data() + r * d;
                          const double* grow = go.data() + r * d;
                          const double mu = mus[r], sigma = sigmas[r];
                          const double t = sigma + eps;
                          double gmean = 0.0, gc = 0.0;
                          for (std::size_t j = 0; j < d; ++j) {
                              gmean += grow[j];
                              gc += grow[j] * (row[j] - mu);
                          }
                          gmean /= static_cast<double>(d);
                          // the sigma path vanishes identically when the row
                          // is constant (all centered values are 0)
                          const double k =
                              sigma > 0.0
                                  ? gc / (static_cast<double>(d) * sigma * t * t)
                                  : 0.0;
                          for (std::size_t j = 0; j < d; ++j)
                              gy[r * d + j] +=
                                  (grow[j] - gmean) / t - k * (row[j] - mu);
                      }
                  });
}

Var layernorm_vec(Var x, double eps) {
    Graph& g = *x.graph;
    const Tensor& tx = g.val(x);
    const std::size_t d = tx.size();
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += tx[j];
    mu /= static_cast<double>(d);
    double v = 0.0;
    for (std::size_t j = 0; j < d; ++j) v += (tx[j] - mu) * (tx[j] - mu);
    v /= static_cast<double>(d);
    const double t = std::sqrt(v + eps);
    Tensor out(tx.shape());
    for (std::size_t j = 0; j < d; ++j) out[j] = (tx[j] - mu) / t;
    const int ix = x.id;
    return g.emit(std::move(out), g.node_requires_grad(ix),
                  [ix, d, mu, t](Graph& gr, int self) {
                      const Tensor& go = gr.node_grad(self);
                      const Tensor& vx = gr.node_val(ix);
                      Tensor& gx = gr.node_grad(ix);
                      double gmean = 0.0, gc = 0.0;
                      for (std::size_t j = 0; j < d; ++j) {
                          gmean += go[j];
                          gc += go[j] * (vx[j] - mu);
                      }
                      gmean /= static_cast<double>(d);
                      const double k = gc / (static_cast<double>(d) * t * t * t);
                      for (std::size_t j = 0; j < d; ++j)
                          gx[j] += (go[j] - gmean) / t - k * (vx[j] - mu);
                  });
}

Var normalize_vec(Var v, double eps) {
    Graph& g = *v.graph;
    const Tensor& tv = g.val(v);
    const double nrm = std::sqrt(kernels::dot(tv.data(), tv.data(), tv.size()));
    const double t = nrm + eps;
    Tensor out(tv.shape());
    kernels::scale(tv.data(), 1.0 / t, out.data(), out.size());
    const int iv = v.id;
    return g.emit(std::move(out), g.node_requires_grad(iv),
                  [iv, nrm, t](Graph& gr, int self) {
                      const Tensor& go = gr.node_grad(self);
                      const Tensor& vv = gr.node_val(iv);
                      Tensor& gv = gr.node_grad(iv);
                      const double gdotv =
                          kernels::dot(go.data(), vv.data(), go.size());
                      const double k =
                          nrm > 0.0 ? gdotv / (nrm * t * t) : 0.0;
                      for (std::size_t j = 0; j < go.size(); ++j)
                          gv[j] += go[j] / t - k * vv[j];
                  });
}

Var signed_to_unit(Var a) {
    Graph& g = *a.graph;
    const Tensor& ta = g.val(a);
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < ta.size(); ++i) {
        double u = 0.5 * (ta[i] + 1.0);
        out[i] = u < 0.0 ? 0.0 : (u > 1.0 ? 1.0 : u);
    }
    const int ia = a.id;
    return g.emit(std::move(out), g.node_requires_grad(ia), [ia](Graph& gr, int self) {
        kernels::axpy(0.5, gr.node_grad(self).data(), gr.node_grad(ia).data(),
                      gr.node_grad(self).size());
    });
}

Var srgb_to_lab(Var rgb_unit) {
    Graph& g = *rgb_unit.graph;
    const Tensor& ta = g.val(rgb_unit);
    if (ta.size() % 3 != 0) throw TdgemError("srgb_to_lab: size must be divisible by 3");
    Tensor out(ta.shape());
    kernels::srgb_to_lab(ta.data(), out.data(), ta.size() / 3);
    const int ia = rgb_unit.id;
    return g.emit(std::move(out), g.node_requires_grad(ia), [ia](Graph& gr, int self) {
        const Tensor& go = gr.node_grad(self);
        kernels::srgb_to_lab_bwd(gr.node_val(ia).data(), go.data(),
                                 gr.node_grad(ia).data(), go.size() / 3);
    });
}

Var masked_mean_channels(Var pixels, const Tensor& mask) {
    Graph& g = *pixels.graph;
    const Tensor& tp = g.val(pixels);
    if (tp.size() != mask.size() * 3)
        throw TdgemError("masked_mean_channels: mask/pixel count mismatch");
    const double wsum = kernels::sum(mask.data(), mask.size());
    if (!(wsum > 0.0)) throw TdgemError("masked_mean_channels: empty mask");
    Tensor out({3});
    for (std::size_t p = 0; p < mask.size(); ++p)
        for (std::size_t c = 0; c < 3; ++c) out[c] += mask[p] * tp[3 * p + c];
    for (std::size_t c = 0; c < 3; ++c) out[c] /= wsum;
    const int ip = pixels.id;
    Tensor mask_copy = mask;
    return g.emit(std::move(out), g.node_requires_grad(ip),
                  [ip, mask_copy, wsum](Graph& gr, int self) {
                      const Tensor& go = gr.node_grad(self);
                      Tensor& gp = gr.node_grad(ip);
                      for (std::size_t p = 0; p < mask_copy.size(); ++p) {
                          const double w = mask_copy[p] / wsum;
                          if (w == 0.0) continue;
                          for (std::size_t c = 0; c < 3; ++c)
                              gp[3 * p + c] += go[c] * w;
                      }
                  });
}

Var channel_mean_rows(Var img, std::size_t height, std::size_t width,
                      std::size_t r0, std::size_t r1) {
    Graph& g = *img.graph;
    const Tensor& ti = g.val(img);
    if (ti.size() != height * width * 3) throw TdgemError("channel_mean_rows: bad image");
    if (r0 >= r1 || r1 > height) throw TdgemError("channel_mean_rows: bad row range");
    const double inv = 1.0 / (static_cast<double>(r1 - r0) * width);
    Tensor out({3});
    for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = 0; c < width; ++c)
            for (std::size_t ch = 0; ch < 3; ++ch)
                out[ch] += ti[(r * width + c) * 3 + ch];
    for (std::size_t ch = 0; ch < 3; ++ch) out[ch] *= inv;
    const int ii = img.id;
    return g.emit(std::move(out), g.node_requires_grad(ii),
                  [ii, width, r0, r1, inv](Graph& gr, int self) {
                      const Tensor& go = gr.node_grad(self);
                      Tensor& gi = gr.node_grad(ii);
                      for (std::size_t r = r0; r < r1; ++r)
                          for (std::size_t c = 0; c < width; ++c)
                              for (std::size_t ch = 0; ch < 3; ++ch)
                                  gi[(r * width + c) * 3 + ch] += go[ch] * inv;
                  });
}

Var mul_mask_bcast(Var img, const Tensor& mask) {
    Graph& g = *img.graph;
    const Tensor& ti = g.val(img);
    if (ti.size() != mask.size() * 3)
        throw TdgemError("mul_mask_bcast: mask/pixel count mismatch");
    Tensor out(ti.shape());
    for (std::size_t p = 0; p < mask.size(); ++p)
        for (std::size_t c = 0; c < 3; ++c) out[3 * p + c] = ti[3 * p + c] * mask[p];
    const int ii = img.id;
    Tensor mask_copy = mask;
    return g.emit(std::move(out), g.node_requires_grad(ii),
                  [ii, mask_copy](Graph& gr, int self) {
                      const Tensor& go = gr.node_grad(self);
                      Tensor& gi = gr.node_grad(ii);
                      for (std::size_t p = 0; p < mask_copy.size(); ++p)
                          for (std::size_t c = 0; c < 3; ++c)
                              gi[3 * p + c] += go[3 * p + c] * mask_copy[p];
                  });
}

Var avgpool2d(Var img, std::size_t height, std::size_t width, std::size_t fh,
              std::size_t fw) {
    Graph& g = *img.graph;
    const Tensor& ti = g.val(img);
    if (ti.size() != height * width * 3) throw TdgemError("avgpool2d: bad image size");
    if (height % fh != 0 || width % fw != 0)
        throw TdgemError("avgpool2d: pool factor must divide the image size");
    const std::size_t oh = height / fh, ow = width / fw;
    const double inv = 1.0 / static_cast<double>(fh * fw);
    Tensor out({oh, ow, 3});
    for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t c = 0; c < ow; ++c)
            for (std::size_t ch = 0; ch < 3; ++ch) {
                double s = 0.0;
                for (std::size_t dr = 0; dr < fh; ++dr)
                    for (std::size_t dc = 0; dc < fw; ++dc)
                        s += ti[((r * fh + dr) * width + c * fw + dc) * 3 + ch];
                out[(r * ow + c) * 3 + ch] = s * inv;
            }
    const int ii = img.id;
    return g.emit(std::move(out), g.node_requires_grad(ii),
                  [ii, width, fh, fw, oh, ow, inv](Graph& gr, int self) {
                      const Tensor& go = gr.node_grad(self);
                      Tensor& gi = gr.node_grad(ii);
                      for (std::size_t r = 0; r < oh; ++r)
                          for (std::size_t c = 0; c < ow; ++c)
                              for (std::size_t ch = 0; ch < 3; ++ch) {
                                  const double gv = go[(r * ow + c) * 3 + ch] * inv;
                                  for (std::size_t dr = 0; dr < fh; ++dr)
                                      for (std::size_t dc = 0; dc < fw; ++dc)
                                          gi[((r * fh + dr) * width + c * fw + dc) * 3 +
                                             ch] += gv;
                              }
                  });
}

Var mse(Var a, Var b) {
    Var d = sub(a, b);
    return mean(mul(d, d));
}

Var cosine_similarity(Var a, Var b) {
    Graph& g = *a.graph;
    const double na = std::sqrt(kernels::dot(g.val(a).data(), g.val(a).data(),
                                             g.val(a).size()));
    const double nb = std::sqrt(kernels::dot(g.val(b).data(), g.val(b).data(),
                                             g.val(b).size()));
    if (na <= 0.0 || nb <= 0.0)
        throw TdgemError("cosine_similarity: zero-norm vector");
    return div_s(dot(a, b), mul(l2norm(a), l2norm(b)));
}

}  // namespace tdgem::ad
