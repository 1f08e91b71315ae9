#include "techcoach/graph.hpp"

#include <algorithm>
#include <cmath>

namespace techcoach {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}
}  // namespace

int Graph::make_node(Tensor value, bool needs_grad, std::function<void()> fn) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.backward_fn = std::move(fn);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Graph::grad_ref(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty() && n.value.numel() > 0) n.grad = Tensor(n.value.shape());
    return n.grad;
}

Var Graph::constant(Tensor value) { return Var{this, make_node(std::move(value), false)}; }

Var Graph::param(Param& p) {
    Param* pp = &p;
    Graph* g = this;
    int id = make_node(p.value, true);
    nodes_.back().backward_fn = [g, pp, id]() {
        const Tensor& gr = g->nodes_[static_cast<size_t>(id)].grad;
        for (int64_t i = 0; i < gr.numel(); ++i) pp->grad[i] += gr[i];
    };
    return Var{this, id};
}

Var Graph::add(Var a, Var b) {
    check_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
    bool ng = needs_grad(a) || needs_grad(b);
    Graph* g = this;
    int ia = a.id, ib = b.id;
    int id = make_node(std::move(out), ng);
    if (ng) nodes_.back().backward_fn = [g, ia, ib, id]() {
        const Tensor& gr = g->nodes_[static_cast<size_t>(id)].grad;
        if (g->nodes_[static_cast<size_t>(ia)].needs_grad) {
            Tensor& ga = g->grad_ref(ia);
            for (int64_t i = 0; i < gr.numel(); ++i) ga[i] += gr[i];
        }
        if (g->nodes_[static_cast<size_t>(ib)].needs_grad) {
            Tensor& gb = g->grad_ref(ib);
            for (int64_t i = 0; i < gr.numel(); ++i) gb[i] += gr[i];
        }
    };
    return Var{this, id};
}

Var Graph::sub(Var a, Var b) {
    check_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
    bool ng = needs_grad(a) || needs_grad(b);
    Graph* g = this;
    int ia = a.id, ib = b.id;
    int id = make_node(std::move(out), ng);
    if (ng) nodes_.back().backward_fn = [g, ia, ib, id]() {
        const Tensor& gr = g->nodes_[static_cast<size_t>(id)].grad;
        if (g->nodes_[static_cast<size_t>(ia)].needs_grad) {
            Tensor& ga = g->grad_ref(ia);
            for (int64_t i = 0; i < gr.numel(); ++i) ga[i] += gr[i];
        }
        if (g->nodes_[static_cast<size_t>(ib)].needs_grad) {
            Tensor& gb = g->grad_ref(ib);
            for (int64_t i = 0; i < gr.numel(); ++i) gb[i] -= gr[i];
        }
    };
    return Var{this, id};
}

Var Graph::mul(Var a, Var b) {
    check_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
    bool ng = needs_grad(a) || needs_grad(b);
    Graph* g = this;
    int ia = a.id, ib = b.id;
    int id = make_node(std::move(out), ng);
    if (ng) nodes_.back().backward_fn = [g, ia, ib, id]() {
        const Tensor& gr = g->nodes_[static_cast<size_t>(id)].grad;
        const Tensor& av = g->nodes_[static_cast<size_t>(ia)].value;
        const Tensor& bv2 = g->nodes_[static_cast<size_t>(ib)].value;
        if (g->nodes_[static_cast<size_t>(ia)].needs_grad) {
            Tensor& ga = g->grad_ref(ia);
            for (int64_t i = 0; i < gr.numel(); ++i) ga[i] += gr[i] * bv2[i];
        }
        if (g->nodes_[static_cast<size_t>(ib)].needs_grad) {
            Tensor& gb = g->grad_ref(ib);
            for (int64_t i = 0; i < gr.numel(); ++i) gb[i] += gr[i] * av[i];
        }
    };
    return Var{this, id};
}

Var Graph::scale(Var a, double c) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= c;
    bool ng = needs_grad(a);
    Graph* g = this;
    int ia = a.id;
    int id = make_node(std::move(out), ng);
    if (ng) nodes_.back().backward_fn = [g, ia, id, c]() {
        const Tensor& gr = g->nodes_[static_cast<size_t>(id)].grad;
        Tensor& ga = g->grad_ref(ia);
        for (int64_t i = 0; i < gr.numel(); ++i) ga[i] += c * gr[i];
    };
    return Var{this, id};
}

Var Graph::add_scalar(Var a, double c) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += c;
    bool ng = needs_grad(a);
    Graph* g = this;
    int ia = a.id;
    int id = make_node(std::move(out), ng);
    if (ng) nodes_.back().backward_fn = [g, ia, id]() {
        const Tensor& gr = g->nodes_[static_cast<size_t>(id)].grad;
        Tensor& ga = g->grad_ref(ia);
        for (int64_t i = 0; i < gr.numel(); ++i) ga[i] += gr[i];
    };
    return Var{this, id};
}

Var Graph::square(Var a) { return mul(a, a); }

Var Graph::gelu(Var a) {
    const Tensor& av = a.value();
    Tensor out(av.shape());
    for (int64_t i = 0; i < av.numel(); ++i) {
        double x = av[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    bool ng = needs_grad(a);
    Graph* g = this;
    int ia = a.id;
    int id = make_node(std::move(out), ng);
    if (ng) nodes_.back().backward_fn = [g, ia, id]() {
        const Tensor& gr = g->nodes_[static_cast<size_t>(id)].grad;
        const Tensor& av2 = g->nodes_[static_cast<size_t>(ia)].value;
        Tensor& ga = g->grad_ref(ia);
        for (int64_t i = 0; i < gr.numel(); ++i) {
            double x = av2[i];
            double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            ga[i] += gr[i] * (cdf + x * pdf);
        }
    };
    return Var{this, id};
}

Var Graph::matmul(Var a, Var b) {
    Tensor out;
    linalg::matmul_nn(a.value(), b.value(), out);
    bool ng = needs_grad(a) || needs_grad(b);
    Graph* g = this;
    int ia = a.id, ib = b.id;
    int id = make_node(std::move(out), ng);
    if (ng) nodes_.back().backward_fn = [g, ia, ib, id]() {
        const Tensor& gr = g->nodes_[static_cast<size_t>(id)].grad;
        const Tensor& av = g->nodes_[static_cast<size_t>(ia)].value;
        const Tensor& bv = g->nodes_[static_cast<size_t>(ib)].value;
        if (g->nodes_[static_cast<size_t>(ia)].needs_grad) {
            Tensor da;
            linalg::matmul_nt(gr, bv, da);
            Tensor& ga = g->grad_ref(ia);
            for (int64_t i = 0; i < da.numel(); ++i) ga[i] += da[i];
        }
        if (g->nodes_[static_cast<size_t>(ib)].needs_grad) {
            Tensor db;
            linalg::matmul_tn(av, gr, db);
            Tensor& gb = g->grad_ref(ib);
            for (int64_t i = 0; i < db.numel(); ++i) gb[i] += db[i];
        }
    };
    return Var{this, id};
}

Var Graph::matmul_nt(Var a, Var b) {
    Tensor out;
    linalg::matmul_nt(a.value(), b.value(), out);
    bool ng = needs_grad(a) || needs_grad(b);
    Graph* g = this;
    int ia = a.id, ib = b.id;
    int id = make_node(std::move(out), ng);
    if (ng) nodes_.back().backward_fn = [g, ia, ib, id]() {
        const Tensor& gr = g->nodes_[static_cast<size_t>(id)].grad;
        const Tensor& av = g->nodes_[static_cast<size_t>(ia)].value;
        const Tensor& bv = g->nodes_[static_cast<size_t>(ib)].value;
        if (g->nodes_[static_cast<size_t>(ia)].needs_grad) {
            Tensor da;
            linalg::matmul_nn(gr, bv, da);
            Tensor& ga = g->grad_ref(ia);
            for (int64_t i = 0; i < da.numel(); ++i) ga[i] += da[i];
        }
        if (g->nodes_[static_cast<size_t>(ib)].needs_grad) {
            Tensor db;
            linalg::matmul_tn(gr, av, db);
            Tensor& gb = g->grad_ref(ib);
            for (int64_t i = 0; i < db.numel(); ++i) gb[i] += db[i];
        }
    };
    return Var{this, id};
}

Var Graph::add_rowvec(Var x, Var v) {
    const Tensor& xv = x.value();
    const Tensor& vv = v.value();
    const int n = xv.dim(0), d = xv.cols();
    if (vv.numel() != d) throw std::invalid_argument("add_rowvec: width mismatch");
    Tensor out = xv;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out[static_cast<int64_t>(i) * d + j] += vv[j];
    bool ng = needs_grad(x) || needs_grad(v);
    Graph* g = this;
    int ix = x.id, iv = v.id;
    int id = make_node(std::move(out), ng);
    if (ng) nodes_.back().backward_fn = [g, ix, iv, id, n, d]() {
        const Tensor& gr = g->nodes_[static_cast<size_t>(id)].grad;
        if (g->nodes_[static_cast<size_t>(ix)].needs_grad) {
            Tensor& gx = g->grad_ref(ix);
            for (int64_t i = 0; i < gr.numel(); ++i) gx[i] += gr[i];
        }
        if (g->nodes_[static_cast<size_t>(iv)].needs_grad) {
            Tensor& gv = g->grad_ref(iv);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) gv[j] += gr[static_cast<int64_t>(i) * d + j];
        }
    };
    return Var{this, id};
}

Var Graph::linear(Var x, Var w, Var b) { return add_rowvec(matmul(x, w), b); }

Var Graph::reshape(Var a, Shape shape) {
    Tensor out = a.value().reshaped(shape);
    bool ng = needs_grad(a);
    Graph* g = this;
    int ia = a.id;
    int id = make_node(std::move(out), ng);
    if (ng) nodes_.back().backward_fn = [g, ia, id]() {
        const Tensor& gr = g->nodes_[static_cast<size_t>(id)].grad;
        Tensor& ga = g->grad_ref(ia);
        for (int64_t i = 0; i < gr.numel(); ++i) ga[i] += gr[i];
    };
    return Var{this, id};
}

Var Graph::gather_rows(Var x, std::vector<int> idx) {
    const Tensor& xv = x.value();
    const int d = xv.cols();
    const int n = xv.dim(0);
    Shape out_shape = xv.shape();
    out_shape[0] = static_cast<int>(idx.size());
    Tensor out(out_shape);
    for (size_t i = 0; i < idx.size(); ++i) {
        int r = idx[i];
        if (r < 0 || r >= n) throw std::out_of_range("gather_rows: index out of range");
        std::copy(xv.data() + static_cast<size_t>(r) * d, xv.data() + static_cast<size_t>(r + 1) * d,
                  out.data() + i * static_cast<size_t>(d));
    }
    bool ng = needs_grad(x);
    Graph* g = this;
    int ix = x.id;
    int id = make_node(std::move(out), ng);
    if (ng) nodes_.back().backward_fn = [g, ix, id, idx = std::move(idx), d]() {
        const Tensor& gr = g->nodes_[static_cast<size_t>(id)].grad;
        Tensor& gx = g->grad_ref(ix);
        for (size_t i = 0; i < idx.size(); ++i) {
            const double* src = gr.data() + i * static_cast<size_t>(d);
            double* dst = gx.data() + static_cast<size_t>(idx[i]) * d;
            for (int j = 0; j < d; ++j) dst[j] += src[j];
        }
    };
    return Var{this, id};
}

Var Graph::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    const int d = parts[0].value().cols();
    int total = 0;
    bool ng = false;
    for (const Var& p : parts) {
        if (p.value().cols() != d) throw std::invalid_argument("concat_rows: width mismatch");
        total += p.value().dim(0);
        ng = ng || needs_grad(p);
    }
    Tensor out({total, d});
    int row = 0;
    std::vector<int> ids, offsets, counts;
    for (const Var& p : parts) {
        const Tensor& pv = p.value();
        std::copy(pv.data(), pv.data() + pv.numel(), out.data() + static_cast<size_t>(row) * d);
        ids.push_back(p.id);
        offsets.push_back(row);
        counts.push_back(pv.dim(0));
        row += pv.dim(0);
    }
    Graph* g = this;
    int id = make_node(std::move(out), ng);
    if (ng) nodes_.back().backward_fn = [g, id, ids, offsets, counts, d]() {
        const Tensor& gr = g->nodes_[static_cast<size_t>(id)].grad;
        for (size_t k = 0; k < ids.size(); ++k) {
            if (!g->nodes_[static_cast<size_t>(ids[k])].needs_grad) continue;
            Tensor& gp = g->grad_ref(ids[k]);
            const double* src = gr.data() + static_cast<size_t>(offsets[k]) * d;
            for (int64_t i = 0; i < static_cast<int64_t>(counts[k]) * d; ++i) gp[i] += src[i];
        }
    };
    return Var{this, id};
}

Var Graph::slice_cols(Var x, int c0, int c1) {
    const Tensor& xv = x.value();
    const int n = xv.dim(0), d = xv.dim(1);
    if (c0 < 0 || c1 > d || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
    const int w = c1 - c0;
    Tensor out({n, w});
    for (int i = 0; i < n; ++i)
        std::copy(xv.data() + static_cast<size_t>(i) * d + c0, xv.data() + static_cast<size_t>(i) * d + c1,
                  out.data() + static_cast<size_t>(i) * w);
    bool ng = needs_grad(x);
    Graph* g = this;
    int ix = x.id;
    int id = make_node(std::move(out), ng);
    if (ng) nodes_.back().backward_fn = [g, ix, id, n, d, c0, w]() {
        const Tensor& gr = g->nodes_[static_cast<size_t>(id)].grad;
        Tensor& gx = g->grad_ref(ix);
        for (int i = 0; i < n; ++i) {
            const double* src = gr.data() + static_cast<size_t>(i) * w;
            double* dst = gx.data() + static_cast<size_t>(i) * d + c0;
            for (int j = 0; j < w; ++j) dst[j] += src[j];
        }
    };
    return Var{this, id};
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    const int n = parts[0].value().dim(0);
    int total = 0;
    bool ng = false;
    for (const Var& p : parts) {
        if (p.value().dim(0) != n) throw std::invalid_argument("concat_cols: row mismatch");
        total += p.value().dim(1);
        ng = ng || needs_grad(p);
    }
    Tensor out({n, total});
    std::vector<int> ids, offsets, widths;
    int col = 0;
    for (const Var& p : parts) {
        const Tensor& pv = p.value();
        const int w = pv.dim(1);
        for (int i = 0; i < n; ++i)
            std::copy(pv.data() + static_cast<size_t>(i) * w, pv.data() + static_cast<size_t>(i + 1) * w,
                      out.data() + static_cast<size_t>(i) * total + col);
        ids.push_back(p.id);
        offsets.push_back(col);
        widths.push_back(w);
        col += w;
    }
    Graph* g = this;
    int id = make_node(std::move(out), ng);
    if (ng) nodes_.back().backward_fn = [g, id, ids, offsets, widths, n, total]() {
        const Tensor& gr = g->nodes_[static_cast<size_t>(id)].grad;
        for (size_t k = 0; k < ids.size(); ++k) {
            if (!g->nodes_[static_cast<size_t>(ids[k])].needs_grad) continue;
            Tensor& gp = g->grad_ref(ids[k]);
            const int w = widths[k];
            for (int i = 0; i < n; ++i) {
                const double* src = gr.data() + static_cast<size_t>(i) * total + offsets[k];
                double* dst = gp.data() + static_cast<size_t>(i) * w;
                for (int j = 0; j < w; ++j) dst[j] += src[j];
            }
        }
    };
    return Var{this, id};
}

Var Graph::zero_rows(Var x, const std::vector<int>& rows) {
    const Tensor& xv = x.value();
    const int d = xv.cols();
    Tensor out = xv;
    for (int r : rows) {
        if (r < 0 || r >= xv.dim(0)) throw std::out_of_range("zero_rows: index out of range");
        std::fill(out.data() + static_cast<size_t>(r) * d, out.data() + static_cast<size_t>(r + 1) * d, 0.0);
    }
    bool ng = needs_grad(x);
    Graph* g = this;
    int ix = x.id;
    int id = make_node(std::move(out), ng);
    if (ng) nodes_.back().backward_fn = [g, ix, id, rows, d]() {
        Tensor gr = g->nodes_[static_cast<size_t>(id)].grad;  // copy, then blank zeroed rows
        for (int r : rows)
            std::fill(gr.data() + static_cast<size_t>(r) * d, gr.data() + static_cast<size_t>(r + 1) * d, 0.0);
        Tensor& gx = g->grad_ref(ix);
        for (int64_t i = 0; i < gr.numel(); ++i) gx[i] += gr[i];
    };
    return Var{this, id};
}

Var Graph::softmax_rows(Var x, const Tensor* additive_mask) {
    const Tensor& xv = x.value();
    const int n = xv.dim(0), m = xv.dim(1);
    if (additive_mask && !(additive_mask->dim(0) == n && additive_mask->dim(1) == m))
        throw std::invalid_argument("softmax_rows: mask shape mismatch");
    Tensor out({n, m});
    for (int i = 0; i < n; ++i) {
        double mx = -1e300;
        for (int j = 0; j < m; ++j) {
            double v = xv.at(i, j) + (additive_mask ? additive_mask->at(i, j) : 0.0);
            mx = std::max(mx, v);
        }
        double z = 0.0;
        for (int j = 0; j < m; ++j) {
            double v = xv.at(i, j) + (additive_mask ? additive_mask->at(i, j) : 0.0);
            double e = std::exp(v - mx);
            out.at(i, j) = e;
            z += e;
        }
        for (int j = 0; j < m; ++j) out.at(i, j) /= z;
    }
    bool ng = needs_grad(x);
    Graph* g = this;
    int ix = x.id;
    int id = make_node(std::move(out), ng);
    if (ng) nodes_.back().backward_fn = [g, ix, id, n, m]() {
        const Tensor& gr = g->nodes_[static_cast<size_t>(id)].grad;
        const Tensor& y = g->nodes_[static_cast<size_t>(id)].value;
        Tensor& gx = g->grad_ref(ix);
        for (int i = 0; i < n; ++i) {
            double dot = 0.0;
            for (int j = 0; j < m; ++j) dot += gr.at(i, j) * y.at(i, j);
            for (int j = 0; j < m; ++j) gx.at(i, j) += y.at(i, j) * (gr.at(i, j) - dot);
        }
    };
    return Var{this, id};
}

Var Graph::layer_norm(Var x, Var gamma, Var beta, double eps) {
    const Tensor& xv = x.value();
    const int n = xv.dim(0), d = xv.cols();
    const Tensor& gv = gamma.value();
    const Tensor& bv = beta.value();
    if (gv.numel() != d || bv.numel() != d) throw std::invalid_argument("layer_norm: affine width mismatch");
    Tensor out({n, d});
    Tensor xhat({n, d});
    Tensor inv_std({n});
    for (int i = 0; i < n; ++i) {
        const double* row = xv.data() + static_cast<size_t>(i) * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += row[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            double c = row[j] - mean;
            var += c * c;
        }
        var /= d;
        double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (int j = 0; j < d; ++j) {
            double h = (row[j] - mean) * is;
            xhat.at(i, j) = h;
            out.at(i, j) = h * gv[j] + bv[j];
        }
    }
    bool ng = needs_grad(x) || needs_grad(gamma) || needs_grad(beta);
    Graph* g = this;
    int ix = x.id, ig = gamma.id, ib = beta.id;
    int id = make_node(std::move(out), ng);
    if (ng) nodes_.back().backward_fn = [g, ix, ig, ib, id, n, d, xhat = std::move(xhat),
                                         inv_std = std::move(inv_std)]() {
        const Tensor& gr = g->nodes_[static_cast<size_t>(id)].grad;
        const Tensor& gv2 = g->nodes_[static_cast<size_t>(ig)].value;
        if (g->nodes_[static_cast<size_t>(ig)].needs_grad) {
            Tensor& gg = g->grad_ref(ig);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) gg[j] += gr.at(i, j) * xhat.at(i, j);
        }
        if (g->nodes_[static_cast<size_t>(ib)].needs_grad) {
            Tensor& gb = g->grad_ref(ib);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) gb[j] += gr.at(i, j);
        }
        if (g->nodes_[static_cast<size_t>(ix)].needs_grad) {
            Tensor& gx = g->grad_ref(ix);
            for (int i = 0; i < n; ++i) {
                double sum_dh = 0.0, sum_dh_h = 0.0;
                for (int j = 0; j < d; ++j) {
                    double dh = gr.at(i, j) * gv2[j];
                    sum_dh += dh;
                    sum_dh_h += dh * xhat.at(i, j);
                }
                for (int j = 0; j < d; ++j) {
                    double dh = gr.at(i, j) * gv2[j];
                    gx.at(i, j) += inv_std[i] * (dh - sum_dh / d - xhat.at(i, j) * sum_dh_h / d);
                }
            }
        }
    };
    return Var{this, id};
}

Var Graph::sum_all(Var a) {
    const Tensor& av = a.value();
    double s = 0.0;
    for (int64_t i = 0; i < av.numel(); ++i) s += av[i];
    bool ng = needs_grad(a);
    Graph* g = this;
    int ia = a.id;
    int id = make_node(Tensor({1}, {s}), ng);
    if (ng) nodes_.back().backward_fn = [g, ia, id]() {
        double gr = g->nodes_[static_cast<size_t>(id)].grad[0];
        Tensor& ga = g->grad_ref(ia);
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += gr;
    };
    return Var{this, id};
}

Var Graph::mean_all(Var a) {
    int64_t n = a.value().numel();
    return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

Var Graph::cross_entropy_rows(Var logits, const std::vector<int>& rows, const std::vector<int>& targets) {
    if (rows.size() != targets.size() || rows.empty())
        throw std::invalid_argument("cross_entropy_rows: rows/targets mismatch or empty");
    const Tensor& lv = logits.value();
    const int vocab = lv.dim(1);
    double total = 0.0;
    for (size_t k = 0; k < rows.size(); ++k) {
        const double* row = lv.data() + static_cast<size_t>(rows[k]) * vocab;
        double mx = row[0];
        for (int j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < vocab; ++j) z += std::exp(row[j] - mx);
        total += (std::log(z) + mx) - row[targets[k]];
    }
    total /= static_cast<double>(rows.size());
    bool ng = needs_grad(logits);
    Graph* g = this;
    int il = logits.id;
    int id = make_node(Tensor({1}, {total}), ng);
    if (ng) nodes_.back().backward_fn = [g, il, id, rows, targets, vocab]() {
        double gr = g->nodes_[static_cast<size_t>(id)].grad[0];
        const Tensor& lv2 = g->nodes_[static_cast<size_t>(il)].value;
        Tensor& gl = g->grad_ref(il);
        const double inv = 1.0 / static_cast<double>(rows.size());
        for (size_t k = 0; k < rows.size(); ++k) {
            const double* row = lv2.data() + static_cast<size_t>(rows[k]) * vocab;
            double* gout = gl.data() + static_cast<size_t>(rows[k]) * vocab;
            double mx = row[0];
            for (int j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
            double z = 0.0;
            for (int j = 0; j < vocab; ++j) z += std::exp(row[j] - mx);
            for (int j = 0; j < vocab; ++j) {
                double p = std::exp(row[j] - mx) / z;
                gout[j] += gr * inv * (p - (j == targets[k] ? 1.0 : 0.0));
            }
        }
    };
    return Var{this, id};
}

Var Graph::weighted_row_distance(Var a, const Tensor& target, const std::vector<double>& w, bool squared) {
    const Tensor& av = a.value();
    const int n = av.dim(0), d = av.cols();
    if (!av.same_shape(target)) throw std::invalid_argument("weighted_row_distance: target shape mismatch");
    if (static_cast<int>(w.size()) != n) throw std::invalid_argument("weighted_row_distance: weight count mismatch");
    Tensor dists({n});
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double sq = 0.0;
        for (int j = 0; j < d; ++j) {
            double c = av[static_cast<int64_t>(i) * d + j] - target[static_cast<int64_t>(i) * d + j];
            sq += c * c;
        }
        double dist = squared ? sq : std::sqrt(sq);
        dists[i] = dist;
        total += w[static_cast<size_t>(i)] * dist;
    }
    bool ng = needs_grad(a);
    Graph* g = this;
    int ia = a.id;
    int id = make_node(Tensor({1}, {total}), ng);
    if (ng) nodes_.back().backward_fn = [g, ia, id, target, w, squared, n, d, dists = std::move(dists)]() {
        double gr = g->nodes_[static_cast<size_t>(id)].grad[0];
        const Tensor& av2 = g->nodes_[static_cast<size_t>(ia)].value;
        Tensor& ga = g->grad_ref(ia);
        for (int i = 0; i < n; ++i) {
            double wi = w[static_cast<size_t>(i)];
            if (wi == 0.0) continue;
            for (int j = 0; j < d; ++j) {
                double c = av2[static_cast<int64_t>(i) * d + j] - target[static_cast<int64_t>(i) * d + j];
                double dv;
                if (squared) {
                    dv = 2.0 * c;
                } else {
                    dv = dists[i] > 0.0 ? c / dists[i] : 0.0;
                }
                ga[static_cast<int64_t>(i) * d + j] += gr * wi * dv;
            }
        }
    };
    return Var{this, id};
}

void Graph::backward(Var loss) {
    Node& ln = nodes_[static_cast<size_t>(loss.id)];
    if (ln.value.numel() != 1) throw std::invalid_argument("backward: loss must be a single element");
    grad_ref(loss.id)[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.needs_grad || n.grad.empty() || !n.backward_fn) continue;
        n.backward_fn();
    }
}

}  // namespace techcoach
