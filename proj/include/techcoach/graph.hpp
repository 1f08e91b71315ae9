#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "techcoach/tensor.hpp"

namespace techcoach {

// A trainable tensor. `grad` is accumulated by Graph::backward and consumed
// by the optimizer; it always has the shape of `value` once registered.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { grad.fill(0.0); }
    int64_t numel() const { return value.numel(); }
};

class Graph;

// Handle to a node on the tape. Cheap to copy; valid while the Graph lives.
struct Var {
    Graph* g = nullptr;
    int id = -1;

    bool valid() const { return g != nullptr && id >= 0; }
    const Tensor& value() const;
    const Shape& shape() const;
    int rows() const { return value().rows(); }
    int cols() const { return value().cols(); }
};

// Reverse-mode tape. Nodes are created in topological order by construction;
// backward() walks them in reverse. One Graph per forward pass; parameters
// outlive the graph and receive gradient contributions via param().
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // --- node creation ---------------------------------------------------
    Var constant(Tensor value);             // no gradient flows
    Var param(Param& p);                    // leaf; backward adds into p.grad

    // --- elementwise -----------------------------------------------------
    Var add(Var a, Var b);                  // same shape
    Var sub(Var a, Var b);                  // same shape
    Var mul(Var a, Var b);                  // same shape
    Var scale(Var a, double c);
    Var add_scalar(Var a, double c);
    Var square(Var a);
    Var gelu(Var a);                        // exact erf form

    // --- matrix ----------------------------------------------------------
    Var matmul(Var a, Var b);               // [m,k] x [k,n]
    Var matmul_nt(Var a, Var b);            // [m,k] x [n,k]^T
    Var add_rowvec(Var x, Var v);           // x [n,d] + broadcast v [d]
    Var linear(Var x, Var w, Var b);        // matmul + bias
    Var reshape(Var a, Shape shape);

    // --- structure -------------------------------------------------------
    Var gather_rows(Var x, std::vector<int> idx);      // also embedding lookup
    Var concat_rows(const std::vector<Var>& parts);
    Var slice_cols(Var x, int c0, int c1);
    Var concat_cols(const std::vector<Var>& parts);
    Var zero_rows(Var x, const std::vector<int>& rows); // rows become exact 0

    // --- normalization / attention pieces ---------------------------------
    // Softmax over the last axis of a [n,m] matrix. `additive_mask`, when
    // given, is added to the logits first (0 = keep, large negative = drop).
    Var softmax_rows(Var x, const Tensor* additive_mask = nullptr);
    Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

    // --- reductions / losses ----------------------------------------------
    Var sum_all(Var a);                     // -> [1]
    Var mean_all(Var a);                    // -> [1]
    // Mean cross-entropy over the selected rows of [n,V] logits against
    // integer targets (one per selected row).
    Var cross_entropy_rows(Var logits, const std::vector<int>& rows,
                           const std::vector<int>& targets);
    // sum_i w[i] * ||a_i - target_i||_2 over rows; `squared` swaps in the
    // squared distance. Subgradient 0 at coincident rows.
    Var weighted_row_distance(Var a, const Tensor& target, const std::vector<double>& w,
                              bool squared = false);

    // --- execution ---------------------------------------------------------
    // Seeds d(loss)/d(loss)=1 at `loss` (must be a single element) and
    // accumulates into every reachable Param::grad.
    void backward(Var loss);

    const Tensor& value(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }
    const Tensor& grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].grad; }
    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;               // allocated lazily during backward
        bool needs_grad = false;
        std::function<void()> backward_fn;  // pulls from this->grad into inputs
    };

    friend struct Var;

    int make_node(Tensor value, bool needs_grad, std::function<void()> fn = nullptr);
    Tensor& grad_ref(int id);
    bool needs_grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].needs_grad; }

    std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return g->value(*this); }
inline const Shape& Var::shape() const { return g->value(*this).shape(); }

}  // namespace techcoach
