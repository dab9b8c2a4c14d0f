#pragma once

#include "editprop/errors.hpp"
#include "editprop/tensor.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

namespace editprop::ad {

using editprop::Mat;

// One tape node. val is always populated; grad is allocated lazily during
// the backward pass. backward closures accumulate into parent grads.
template <typename S>
struct Node {
    Mat<S> val;
    Mat<S> grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::function<void(Node<S>&)> backward;
    std::vector<std::shared_ptr<Node<S>>> parents;

    void ensure_grad() {
        if (!has_grad) {
            grad = Mat<S>::Zero(val.rows(), val.cols());
            has_grad = true;
        }
    }

    // Takes by value so the first contribution is moved, not zero-filled
    // and added.
    void accumulate(Mat<S> g) {
        if (!has_grad) {
            grad = std::move(g);
            has_grad = true;
        } else {
            grad += g;
        }
    }
};

template <typename S>
using NodeP = std::shared_ptr<Node<S>>;

// Dynamic computation graph over matrices. Creation order doubles as the
// topological order, so backward is a single reverse sweep.
template <typename S>
class Graph {
public:
    NodeP<S> constant(Mat<S> v) {
        auto n = std::make_shared<Node<S>>();
        n->val = std::move(v);
        order_.push_back(n);
        return n;
    }

    NodeP<S> leaf(Mat<S> v) {
        auto n = constant(std::move(v));
        n->requires_grad = true;
        return n;
    }

    NodeP<S> matmul(NodeP<S> a, NodeP<S> b) {
        Mat<S> v;
        v.noalias() = a->val * b->val;
        return make(std::move(v), {a, b}, [a, b](Node<S>& n) {
            if (a->requires_grad) a->accumulate(n.grad * b->val.transpose());
            if (b->requires_grad) b->accumulate(a->val.transpose() * n.grad);
        });
    }

    // a * b^T without materializing the transpose in the graph.
    NodeP<S> matmul_nt(NodeP<S> a, NodeP<S> b) {
        Mat<S> v;
        v.noalias() = a->val * b->val.transpose();
        return make(std::move(v), {a, b}, [a, b](Node<S>& n) {
            if (a->requires_grad) a->accumulate(n.grad * b->val);
            if (b->requires_grad) b->accumulate(n.grad.transpose() * a->val);
        });
    }

    NodeP<S> add(NodeP<S> a, NodeP<S> b) {
        if (a->val.rows() != b->val.rows() || a->val.cols() != b->val.cols()) {
            throw ShapeError("autodiff add: shape mismatch");
        }
        return make(a->val + b->val, {a, b}, [a, b](Node<S>& n) {
            if (a->requires_grad) a->accumulate(n.grad);
            if (b->requires_grad) b->accumulate(n.grad);
        });
    }

    // Adds a 1×d row to every row of a.
    NodeP<S> add_row(NodeP<S> a, NodeP<S> row) {
        if (row->val.rows() != 1 || row->val.cols() != a->val.cols()) {
            throw ShapeError("autodiff add_row: bias shape mismatch");
        }
        Mat<S> v = a->val;
        v.rowwise() += row->val.row(0);
        return make(std::move(v), {a, row}, [a, row](Node<S>& n) {
            if (a->requires_grad) a->accumulate(n.grad);
            if (row->requires_grad) row->accumulate(n.grad.colwise().sum());
        });
    }

    NodeP<S> scale(NodeP<S> a, S s) {
        return make(Mat<S>(a->val * s), {a}, [a, s](Node<S>& n) {
            if (a->requires_grad) a->accumulate(n.grad * s);
        });
    }

    NodeP<S> slice_cols(NodeP<S> a, int start, int n_cols) {
        if (start < 0 || start + n_cols > a->val.cols()) {
            throw ShapeError("autodiff slice_cols: out of range");
        }
        return make(Mat<S>(a->val.middleCols(start, n_cols)), {a},
                    [a, start, n_cols](Node<S>& n) {
                        if (a->requires_grad) {
                            a->ensure_grad();
                            a->grad.middleCols(start, n_cols) += n.grad;
                        }
                    });
    }

    NodeP<S> concat_cols(const std::vector<NodeP<S>>& parts) {
        if (parts.empty()) throw ShapeError("autodiff concat_cols: no parts");
        std::ptrdiff_t cols = 0;
        for (const auto& p : parts) cols += p->val.cols();
        Mat<S> v(parts[0]->val.rows(), cols);
        std::ptrdiff_t off = 0;
        for (const auto& p : parts) {
            v.middleCols(off, p->val.cols()) = p->val;
            off += p->val.cols();
        }
        return make(std::move(v), parts, [parts](Node<S>& n) {
            std::ptrdiff_t off = 0;
            for (const auto& p : parts) {
                if (p->requires_grad) p->accumulate(n.grad.middleCols(off, p->val.cols()));
                off += p->val.cols();
            }
        });
    }

    // Rowwise layer norm with affine parameters. gamma/beta are frozen and
    // captured by value; gradients flow to x only.
    NodeP<S> layer_norm(NodeP<S> x, Mat<S> gamma, Mat<S> beta, S eps = S(1e-5)) {
        const auto rows = x->val.rows();
        const auto cols = x->val.cols();
        Mat<S> xhat(rows, cols);
        Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std(rows);
        for (std::ptrdiff_t i = 0; i < rows; ++i) {
            const S mean = x->val.row(i).mean();
            const S var = (x->val.row(i).array() - mean).square().mean();
            const S inv = S(1) / std::sqrt(var + eps);
            inv_std(i) = inv;
            xhat.row(i) = ((x->val.row(i).array() - mean) * inv).matrix();
        }
        Mat<S> v = xhat;
        for (std::ptrdiff_t i = 0; i < rows; ++i) {
            v.row(i) = xhat.row(i).cwiseProduct(gamma.row(0)) + beta.row(0);
        }
        return make(std::move(v), {x},
                    [x, xhat = std::move(xhat), inv_std = std::move(inv_std),
                     gamma = std::move(gamma)](Node<S>& n) {
                        if (!x->requires_grad) return;
                        const auto cols = x->val.cols();
                        Mat<S> dx(x->val.rows(), cols);
                        for (std::ptrdiff_t i = 0; i < x->val.rows(); ++i) {
                            Eigen::Matrix<S, 1, Eigen::Dynamic> gh =
                                n.grad.row(i).cwiseProduct(gamma.row(0));
                            const S m1 = gh.mean();
                            const S m2 = gh.cwiseProduct(xhat.row(i)).mean();
                            dx.row(i) =
                                ((gh.array() - m1 - xhat.row(i).array() * m2) * inv_std(i))
                                    .matrix();
                        }
                        x->accumulate(dx);
                    });
    }

    // Fused attention probabilities: softmax_rows(q·k^T · scale). One N×N
    // value and one N×N temporary in backward instead of three of each.
    NodeP<S> attn_probs(NodeP<S> q, NodeP<S> k, S scale) {
        Mat<S> p;
        p.noalias() = q->val * k->val.transpose();
        p *= scale;
        for (std::ptrdiff_t i = 0; i < p.rows(); ++i) {
            auto row = p.row(i).array();
            row -= row.maxCoeff();
            row = row.exp();
            row /= row.sum();
        }
        return make(std::move(p), {q, k}, [q, k, scale](Node<S>& n) {
            if (!q->requires_grad && !k->requires_grad) return;
            Mat<S> ds(n.val.rows(), n.val.cols());
            for (std::ptrdiff_t i = 0; i < n.val.rows(); ++i) {
                const S dot = n.grad.row(i).cwiseProduct(n.val.row(i)).sum();
                ds.row(i) = ((n.grad.row(i).array() - dot) * n.val.row(i).array()).matrix();
            }
            ds *= scale;
            if (q->requires_grad) q->accumulate(ds * k->val);
            if (k->requires_grad) k->accumulate(ds.transpose() * q->val);
        });
    }

    NodeP<S> softmax_rows(NodeP<S> x) {
        Mat<S> v = x->val;
        for (std::ptrdiff_t i = 0; i < v.rows(); ++i) {
            const S mx = v.row(i).maxCoeff();
            v.row(i) = (v.row(i).array() - mx).exp().matrix();
            v.row(i) /= v.row(i).sum();
        }
        return make(std::move(v), {x}, [x](Node<S>& n) {
            if (!x->requires_grad) return;
            Mat<S> dx(n.val.rows(), n.val.cols());
            for (std::ptrdiff_t i = 0; i < n.val.rows(); ++i) {
                const S dot = n.grad.row(i).cwiseProduct(n.val.row(i)).sum();
                dx.row(i) = ((n.grad.row(i).array() - dot) * n.val.row(i).array()).matrix();
            }
            x->accumulate(dx);
        });
    }

    NodeP<S> gelu(NodeP<S> x) {
        constexpr S inv_sqrt2 = S(0.7071067811865475);
        constexpr S inv_sqrt2pi = S(0.3989422804014327);
        Mat<S> v = x->val.unaryExpr([&](S t) {
            return t * S(0.5) * (S(1) + std::erf(t * inv_sqrt2));
        });
        return make(std::move(v), {x}, [x, inv_sqrt2, inv_sqrt2pi](Node<S>& n) {
            if (!x->requires_grad) return;
            Mat<S> dx = x->val.unaryExpr([&](S t) {
                const S cdf = S(0.5) * (S(1) + std::erf(t * inv_sqrt2));
                const S pdf = inv_sqrt2pi * std::exp(S(-0.5) * t * t);
                return cdf + t * pdf;
            });
            x->accumulate(dx.cwiseProduct(n.grad));
        });
    }

    // Mean squared error against a frozen target; yields a 1×1 node.
    NodeP<S> mean_sq_err(NodeP<S> pred, Mat<S> target) {
        if (pred->val.rows() != target.rows() || pred->val.cols() != target.cols()) {
            throw ShapeError("autodiff mean_sq_err: shape mismatch");
        }
        const S n_elems = S(target.size());
        Mat<S> diff = pred->val - target;
        Mat<S> v(1, 1);
        v(0, 0) = diff.array().square().sum() / n_elems;
        return make(std::move(v), {pred},
                    [pred, diff = std::move(diff), n_elems](Node<S>& n) {
                        if (!pred->requires_grad) return;
                        pred->accumulate(diff * (S(2) * n.grad(0, 0) / n_elems));
                    });
    }

    void backward(const NodeP<S>& loss) {
        if (loss->val.rows() != 1 || loss->val.cols() != 1) {
            throw ShapeError("backward expects a scalar loss node");
        }
        loss->ensure_grad();
        loss->grad(0, 0) = S(1);
        for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
            Node<S>& n = **it;
            if (n.backward && n.has_grad) n.backward(n);
        }
    }

    std::size_t size() const { return order_.size(); }

private:
    NodeP<S> make(Mat<S> v, std::vector<NodeP<S>> parents, std::function<void(Node<S>&)> back) {
        auto n = std::make_shared<Node<S>>();
        n->val = std::move(v);
        for (const auto& p : parents) n->requires_grad |= p->requires_grad;
        if (n->requires_grad) {
            n->parents = std::move(parents);
            n->backward = std::move(back);
        }
        order_.push_back(n);
        return n;
    }

    std::vector<NodeP<S>> order_;
};

} // namespace editprop::ad
