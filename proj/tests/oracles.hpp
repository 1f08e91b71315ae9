#pragma once

// Plain-loop reference implementations, written independently of the graph
// ops so the tests compare two derivations of the same math. Storage uses
// Tensor, arithmetic is all hand-rolled here.

#include <algorithm>
#include <cmath>
#include <vector>

#include "techcoach/tensor.hpp"

namespace refcalc {

using techcoach::Tensor;

inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    const int n = x.dim(0), d = x.dim(1), m = w.dim(1);
    Tensor out({n, m});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
            double s = b[j];
            for (int k = 0; k < d; ++k) s += x.at(i, k) * w.at(k, j);
            out.at(i, j) = s;
        }
    return out;
}

inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         double eps = 1e-5) {
    const int n = x.dim(0), d = x.dim(1);
    Tensor out({n, d});
    for (int i = 0; i < n; ++i) {
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += x.at(i, j);
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (x.at(i, j) - mean) * (x.at(i, j) - mean);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < d; ++j) out.at(i, j) = (x.at(i, j) - mean) * inv * gamma[j] + beta[j];
    }
    return out;
}

inline double gelu(double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); }

inline Tensor ffn(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                  const Tensor& b2) {
    Tensor h = linear(x, w1, b1);
    for (int64_t i = 0; i < h.numel(); ++i) h[i] = gelu(h[i]);
    return linear(h, w2, b2);
}

// Multi-head scaled-dot-product attention over already-projected inputs.
inline Tensor attention(const Tensor& q_in, const Tensor& kv_in, const Tensor& wq,
                        const Tensor& bq, const Tensor& wk, const Tensor& bk, const Tensor& wv,
                        const Tensor& bv, const Tensor& wo, const Tensor& bo, int heads,
                        const Tensor* additive_mask = nullptr) {
    Tensor q = linear(q_in, wq, bq);
    Tensor k = linear(kv_in, wk, bk);
    Tensor v = linear(kv_in, wv, bv);
    const int lq = q.dim(0), lk = k.dim(0), d = q.dim(1), dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor merged({lq, d});
    std::vector<double> logits(static_cast<size_t>(lk));
    for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        for (int i = 0; i < lq; ++i) {
            for (int j = 0; j < lk; ++j) {
                double s = 0.0;
                for (int c = 0; c < dh; ++c) s += q.at(i, off + c) * k.at(j, off + c);
                logits[static_cast<size_t>(j)] =
                    s * inv_sqrt + (additive_mask ? additive_mask->at(i, j) : 0.0);
            }
            const double mx = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (int j = 0; j < lk; ++j) z += std::exp(logits[static_cast<size_t>(j)] - mx);
            for (int c = 0; c < dh; ++c) {
                double s = 0.0;
                for (int j = 0; j < lk; ++j)
                    s += std::exp(logits[static_cast<size_t>(j)] - mx) / z * v.at(j, off + c);
                merged.at(i, off + c) = s;
            }
        }
    }
    return linear(merged, wo, bo);
}

// Independent statement of the coaching visibility rules, decided pairwise.
inline bool mask_allows(int q, int k, int text_len, int n_tp, int n_vid) {
    const int score = text_len;
    const int tp0 = text_len + 1;
    const int vid0 = tp0 + n_tp;
    auto is_text = [&](int p) { return p < text_len; };
    auto is_tp = [&](int p) { return p >= tp0 && p < vid0; };
    auto is_vid = [&](int p) { return p >= vid0; };

    if (is_vid(q)) return is_vid(k);
    if (is_tp(q)) return k == q || is_vid(k);
    if (q == score) return k == score || is_tp(k) || is_vid(k);
    return (is_text(k) && k <= q) || k == score || is_tp(k) || is_vid(k);
}

inline Tensor enumerate_mask(int text_len, int n_tp, int n_vid) {
    const int total = text_len + 1 + n_tp + n_vid;
    Tensor out({total, total});
    for (int q = 0; q < total; ++q)
        for (int k = 0; k < total; ++k)
            out.at(q, k) = mask_allows(q, k, text_len, n_tp, n_vid) ? 1.0 : 0.0;
    return out;
}

}  // namespace refcalc
