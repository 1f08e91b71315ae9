#include "techcoach/tensor.hpp"

namespace techcoach::linalg {

void matmul_nn(const Tensor& a, const Tensor& b, Tensor& c) {
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) throw std::invalid_argument("matmul_nn: inner dimensions disagree");
    c = Tensor({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (int i = 0; i < m; ++i) {
        double* crow = pc + static_cast<size_t>(i) * n;
        const double* arow = pa + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = pb + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c) {
    const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (b.dim(1) != k) throw std::invalid_argument("matmul_nt: inner dimensions disagree");
    c = Tensor({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (int i = 0; i < m; ++i) {
        const double* arow = pa + static_cast<size_t>(i) * k;
        double* crow = pc + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = pb + static_cast<size_t>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = s;
        }
    }
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c) {
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != m) throw std::invalid_argument("matmul_tn: outer dimensions disagree");
    c = Tensor({k, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (int i = 0; i < m; ++i) {
        const double* arow = pa + static_cast<size_t>(i) * k;
        const double* brow = pb + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = pc + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace techcoach::linalg
