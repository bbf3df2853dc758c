#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "reeflora/tensor.hpp"

namespace reeflora {

// Tape-free reverse-mode engine: every op eagerly computes its value and
// links to its parents, so the DAG itself is the tape. backward() walks it
// once in reverse topological order.
//
// Gradient semantics: leaf nodes (requires_grad == true) accumulate across
// backward() calls until zero_grad(); interior gradients are transient and
// rewritten by each call. Frozen leaves never receive a gradient at all.
template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // absent (empty) until first accumulation
    bool requires_grad = false;
    bool needs_grad = false;  // true if this node or any ancestor requires grad
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backprop;
    std::uint64_t visit_tag = 0;

    bool is_leaf() const { return parents.empty(); }
    bool has_grad() const { return !grad.data.empty(); }

    Tensor<T>& ensure_grad() {
        if (!has_grad()) grad = Tensor<T>(value.shape);
        return grad;
    }
    void zero_grad() { grad = Tensor<T>(); }
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
NodePtr<T> make_leaf(Tensor<T> value, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->needs_grad = requires_grad;
    return n;
}

template <typename T>
NodePtr<T> make_op(Tensor<T> value, std::vector<NodePtr<T>> parents) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents) {
        if (p->needs_grad) {
            n->needs_grad = true;
            break;
        }
    }
    return n;
}

namespace detail {

template <typename T>
void axpy(Tensor<T>& acc, const Tensor<T>& g, T scale = T(1)) {
    for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += scale * g.data[i];
}

template <typename T>
Tensor<T> col_sums(const Tensor<T>& m) {
    Tensor<T> out({m.shape[1]});
    for (std::int64_t i = 0; i < m.shape[0]; ++i)
        for (std::int64_t j = 0; j < m.shape[1]; ++j) out[j] += m.at(i, j);
    return out;
}

// Rank-1 tensors pass through row-wise ops as a single row.
inline std::pair<std::int64_t, std::int64_t> as_rows(const Shape& s) {
    if (s.size() == 1) return {1, s[0]};
    if (s.size() == 2) return {s[0], s[1]};
    throw DimensionError("row-wise op requires rank 1 or 2, got shape " + shape_str(s));
}

inline std::uint64_t next_visit_tag() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
}

}  // namespace detail

// --------------------------------------------------------------------------
// backward
// --------------------------------------------------------------------------

template <typename T>
void backward(const NodePtr<T>& loss) {
    if (loss->value.size() != 1) {
        throw ContractError("backward requires a scalar loss, got shape " +
                            shape_str(loss->value.shape));
    }
    if (!loss->needs_grad) return;

    const std::uint64_t tag = detail::next_visit_tag();
    std::vector<Node<T>*> order;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    loss->visit_tag = tag;
    while (!stack.empty()) {
        Node<T>* node = stack.back().first;
        Node<T>* child = nullptr;
        while (stack.back().second < node->parents.size()) {
            Node<T>* p = node->parents[stack.back().second++].get();
            if (p->needs_grad && p->visit_tag != tag) {
                p->visit_tag = tag;
                child = p;
                break;
            }
        }
        if (child) {
            stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Interior gradients are per-call scratch; leaf gradients persist so that
    // repeated backward calls accumulate.
    for (Node<T>* n : order) {
        if (!n->is_leaf()) n->grad = Tensor<T>(n->value.shape);
    }
    loss->ensure_grad();
    loss->grad.data[0] += T(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backprop && n->has_grad()) n->backprop();
    }
}

namespace detail {

// Accumulate into a parent, honoring the needs_grad pruning.
template <typename T>
void accumulate(const NodePtr<T>& parent, const Tensor<T>& contribution, T scale = T(1)) {
    if (!parent->needs_grad) return;
    axpy(parent->ensure_grad(), contribution, scale);
}

}  // namespace detail

// --------------------------------------------------------------------------
// Primitive ops
// --------------------------------------------------------------------------

template <typename T>
NodePtr<T> matmul(const NodePtr<T>& a, const NodePtr<T>& b) {
    auto out = make_op(gemm_nn(a->value, b->value), {a, b});
    if (out->needs_grad) {
        out->backprop = [a, b, self = out.get()]() {
            if (a->needs_grad) detail::axpy(a->ensure_grad(), gemm_nt(self->grad, b->value));
            if (b->needs_grad) detail::axpy(b->ensure_grad(), gemm_tn(a->value, self->grad));
        };
    }
    return out;
}

// out = x . w^T (+ bias per row). x: N x K, w: D x K, bias: D.
template <typename T>
NodePtr<T> linear(const NodePtr<T>& x, const NodePtr<T>& w, const NodePtr<T>& bias = nullptr) {
    Tensor<T> v = gemm_nt(x->value, w->value);
    if (bias) {
        if (bias->value.rank() != 1 || bias->value.shape[0] != v.shape[1]) {
            throw DimensionError("linear bias shape " + shape_str(bias->value.shape) +
                                 " does not match output " + shape_str(v.shape));
        }
        for (std::int64_t i = 0; i < v.shape[0]; ++i)
            for (std::int64_t j = 0; j < v.shape[1]; ++j) v.at(i, j) += bias->value[j];
    }
    std::vector<NodePtr<T>> parents = {x, w};
    if (bias) parents.push_back(bias);
    auto out = make_op(std::move(v), std::move(parents));
    if (out->needs_grad) {
        out->backprop = [x, w, bias, self = out.get()]() {
            if (x->needs_grad) detail::axpy(x->ensure_grad(), gemm_nn(self->grad, w->value));
            if (w->needs_grad) detail::axpy(w->ensure_grad(), gemm_tn(self->grad, x->value));
            if (bias && bias->needs_grad)
                detail::axpy(bias->ensure_grad(), detail::col_sums(self->grad));
        };
    }
    return out;
}

template <typename T>
NodePtr<T> add(const NodePtr<T>& a, const NodePtr<T>& b) {
    if (!a->value.same_shape(b->value)) {
        throw DimensionError("add shape mismatch: " + shape_str(a->value.shape) + " vs " +
                             shape_str(b->value.shape));
    }
    Tensor<T> v = a->value;
    detail::axpy(v, b->value);
    auto out = make_op(std::move(v), {a, b});
    if (out->needs_grad) {
        out->backprop = [a, b, self = out.get()]() {
            detail::accumulate(a, self->grad);
            detail::accumulate(b, self->grad);
        };
    }
    return out;
}

template <typename T>
NodePtr<T> sub(const NodePtr<T>& a, const NodePtr<T>& b) {
    if (!a->value.same_shape(b->value)) {
        throw DimensionError("sub shape mismatch: " + shape_str(a->value.shape) + " vs " +
                             shape_str(b->value.shape));
    }
    Tensor<T> v = a->value;
    detail::axpy(v, b->value, T(-1));
    auto out = make_op(std::move(v), {a, b});
    if (out->needs_grad) {
        out->backprop = [a, b, self = out.get()]() {
            detail::accumulate(a, self->grad);
            detail::accumulate(b, self->grad, T(-1));
        };
    }
    return out;
}

template <typename T>
NodePtr<T> mul(const NodePtr<T>& a, const NodePtr<T>& b) {
    if (!a->value.same_shape(b->value)) {
        throw DimensionError("mul shape mismatch: " + shape_str(a->value.shape) + " vs " +
                             shape_str(b->value.shape));
    }
    Tensor<T> v = a->value;
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] *= b->value.data[i];
    auto out = make_op(std::move(v), {a, b});
    if (out->needs_grad) {
        out->backprop = [a, b, self = out.get()]() {
            if (a->needs_grad) {
                Tensor<T>& ga = a->ensure_grad();
                for (std::size_t i = 0; i < ga.data.size(); ++i)
                    ga.data[i] += self->grad.data[i] * b->value.data[i];
            }
            if (b->needs_grad) {
                Tensor<T>& gb = b->ensure_grad();
                for (std::size_t i = 0; i < gb.data.size(); ++i)
                    gb.data[i] += self->grad.data[i] * a->value.data[i];
            }
        };
    }
    return out;
}

template <typename T>
NodePtr<T> scale(const NodePtr<T>& a, T c) {
    Tensor<T> v = a->value;
    for (auto& x : v.data) x *= c;
    auto out = make_op(std::move(v), {a});
    if (out->needs_grad) {
        out->backprop = [a, c, self = out.get()]() { detail::accumulate(a, self->grad, c); };
    }
    return out;
}

// m: R x C plus a length-C vector added to every row.
template <typename T>
NodePtr<T> add_bias(const NodePtr<T>& m, const NodePtr<T>& v) {
    if (m->value.rank() != 2 || v->value.rank() != 1 || m->value.shape[1] != v->value.shape[0]) {
        throw DimensionError("add_bias expects R x C and C, got " + shape_str(m->value.shape) +
                             " and " + shape_str(v->value.shape));
    }
    Tensor<T> out_v = m->value;
    for (std::int64_t i = 0; i < out_v.shape[0]; ++i)
        for (std::int64_t j = 0; j < out_v.shape[1]; ++j) out_v.at(i, j) += v->value[j];
    auto out = make_op(std::move(out_v), {m, v});
    if (out->needs_grad) {
        out->backprop = [m, v, self = out.get()]() {
            detail::accumulate(m, self->grad);
            if (v->needs_grad) detail::axpy(v->ensure_grad(), detail::col_sums(self->grad));
        };
    }
    return out;
}

template <typename T>
NodePtr<T> transpose(const NodePtr<T>& a) {
    auto out = make_op(transpose2d(a->value), {a});
    if (out->needs_grad) {
        out->backprop = [a, self = out.get()]() {
            if (a->needs_grad) detail::axpy(a->ensure_grad(), transpose2d(self->grad));
        };
    }
    return out;
}

template <typename T>
NodePtr<T> reshape(const NodePtr<T>& a, Shape new_shape) {
    if (numel(new_shape) != a->value.size()) {
        throw DimensionError("reshape " + shape_str(a->value.shape) + " -> " +
                             shape_str(new_shape) + " changes element count");
    }
    Tensor<T> v(new_shape, a->value.data);
    auto out = make_op(std::move(v), {a});
    if (out->needs_grad) {
        out->backprop = [a, self = out.get()]() {
            if (!a->needs_grad) return;
            Tensor<T>& ga = a->ensure_grad();
            for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += self->grad.data[i];
        };
    }
    return out;
}

template <typename T>
NodePtr<T> slice_rows(const NodePtr<T>& a, std::int64_t start, std::int64_t len) {
    const auto& s = a->value.shape;
    if (a->value.rank() != 2 || start < 0 || len < 1 || start + len > s[0]) {
        throw DimensionError("slice_rows [" + std::to_string(start) + ", " +
                             std::to_string(start + len) + ") out of range for " + shape_str(s));
    }
    Tensor<T> v({len, s[1]});
    std::copy_n(a->value.data.begin() + start * s[1], len * s[1], v.data.begin());
    auto out = make_op(std::move(v), {a});
    if (out->needs_grad) {
        out->backprop = [a, start, self = out.get()]() {
            if (!a->needs_grad) return;
            Tensor<T>& ga = a->ensure_grad();
            const std::int64_t c = ga.shape[1];
            for (std::int64_t i = 0; i < self->grad.shape[0]; ++i)
                for (std::int64_t j = 0; j < c; ++j) ga.at(start + i, j) += self->grad.at(i, j);
        };
    }
    return out;
}

template <typename T>
NodePtr<T> slice_cols(const NodePtr<T>& a, std::int64_t start, std::int64_t len) {
    const auto& s = a->value.shape;
    if (a->value.rank() != 2 || start < 0 || len < 1 || start + len > s[1]) {
        throw DimensionError("slice_cols [" + std::to_string(start) + ", " +
                             std::to_string(start + len) + ") out of range for " + shape_str(s));
    }
    Tensor<T> v({s[0], len});
    for (std::int64_t i = 0; i < s[0]; ++i)
        std::copy_n(a->value.data.begin() + i * s[1] + start, len, v.data.begin() + i * len);
    auto out = make_op(std::move(v), {a});
    if (out->needs_grad) {
        out->backprop = [a, start, self = out.get()]() {
            if (!a->needs_grad) return;
            Tensor<T>& ga = a->ensure_grad();
            for (std::int64_t i = 0; i < self->grad.shape[0]; ++i)
                for (std::int64_t j = 0; j < self->grad.shape[1]; ++j)
                    ga.at(i, start + j) += self->grad.at(i, j);
        };
    }
    return out;
}

template <typename T>
NodePtr<T> concat_rows(const std::vector<NodePtr<T>>& parts) {
    if (parts.empty()) throw ContractError("concat_rows needs at least one input");
    const std::int64_t c = parts[0]->value.shape.back();
    std::int64_t total = 0;
    for (const auto& p : parts) {
        auto [r, pc] = detail::as_rows(p->value.shape);
        if (pc != c) {
            throw DimensionError("concat_rows column mismatch: " + shape_str(p->value.shape));
        }
        total += r;
    }
    Tensor<T> v({total, c});
    std::int64_t row = 0;
    for (const auto& p : parts) {
        std::copy(p->value.data.begin(), p->value.data.end(), v.data.begin() + row * c);
        row += detail::as_rows(p->value.shape).first;
    }
    auto out = make_op(std::move(v), parts);
    if (out->needs_grad) {
        out->backprop = [parts, c, self = out.get()]() {
            std::int64_t row = 0;
            for (const auto& p : parts) {
                const std::int64_t r = detail::as_rows(p->value.shape).first;
                if (p->needs_grad) {
                    Tensor<T>& gp = p->ensure_grad();
                    for (std::int64_t i = 0; i < r * c; ++i)
                        gp.data[static_cast<std::size_t>(i)] +=
                            self->grad.data[static_cast<std::size_t>(row * c + i)];
                }
                row += r;
            }
        };
    }
    return out;
}

template <typename T>
NodePtr<T> concat_cols(const std::vector<NodePtr<T>>& parts) {
    if (parts.empty()) throw ContractError("concat_cols needs at least one input");
    const std::int64_t r = parts[0]->value.shape[0];
    std::int64_t total = 0;
    for (const auto& p : parts) {
        if (p->value.rank() != 2 || p->value.shape[0] != r) {
            throw DimensionError("concat_cols row mismatch: " + shape_str(p->value.shape));
        }
        total += p->value.shape[1];
    }
    Tensor<T> v({r, total});
    std::int64_t col = 0;
    for (const auto& p : parts) {
        const std::int64_t pc = p->value.shape[1];
        for (std::int64_t i = 0; i < r; ++i)
            std::copy_n(p->value.data.begin() + i * pc, pc, v.data.begin() + i * total + col);
        col += pc;
    }
    auto out = make_op(std::move(v), parts);
    if (out->needs_grad) {
        out->backprop = [parts, r, total, self = out.get()]() {
            std::int64_t col = 0;
            for (const auto& p : parts) {
                const std::int64_t pc = p->value.shape[1];
                if (p->needs_grad) {
                    Tensor<T>& gp = p->ensure_grad();
                    for (std::int64_t i = 0; i < r; ++i)
                        for (std::int64_t j = 0; j < pc; ++j)
                            gp.at(i, j) += self->grad.at(i, col + j);
                }
                col += pc;
            }
        };
    }
    return out;
}

// Scalar pick by flat index; shape {1} output.
template <typename T>
NodePtr<T> select(const NodePtr<T>& a, std::int64_t flat_index) {
    if (flat_index < 0 || flat_index >= a->value.size()) {
        throw DimensionError("select index " + std::to_string(flat_index) + " out of range for " +
                             shape_str(a->value.shape));
    }
    Tensor<T> v({1});
    v.data[0] = a->value.data[static_cast<std::size_t>(flat_index)];
    auto out = make_op(std::move(v), {a});
    if (out->needs_grad) {
        out->backprop = [a, flat_index, self = out.get()]() {
            if (a->needs_grad)
                a->ensure_grad().data[static_cast<std::size_t>(flat_index)] += self->grad.data[0];
        };
    }
    return out;
}

template <typename T>
NodePtr<T> sum_all(const NodePtr<T>& a) {
    T acc = T(0);
    for (T x : a->value.data) acc += x;
    Tensor<T> v({1});
    v.data[0] = acc;
    auto out = make_op(std::move(v), {a});
    if (out->needs_grad) {
        out->backprop = [a, self = out.get()]() {
            if (!a->needs_grad) return;
            Tensor<T>& ga = a->ensure_grad();
            const T g = self->grad.data[0];
            for (auto& x : ga.data) x += g;
        };
    }
    return out;
}

template <typename T>
NodePtr<T> mean_all(const NodePtr<T>& a) {
    const T inv_n = T(1) / static_cast<T>(a->value.size());
    T acc = T(0);
    for (T x : a->value.data) acc += x;
    Tensor<T> v({1});
    v.data[0] = acc * inv_n;
    auto out = make_op(std::move(v), {a});
    if (out->needs_grad) {
        out->backprop = [a, inv_n, self = out.get()]() {
            if (!a->needs_grad) return;
            Tensor<T>& ga = a->ensure_grad();
            const T g = self->grad.data[0] * inv_n;
            for (auto& x : ga.data) x += g;
        };
    }
    return out;
}

// Softmax along the last axis (each row becomes a probability vector).
template <typename T>
NodePtr<T> softmax_rows(const NodePtr<T>& a) {
    auto [rows, cols] = detail::as_rows(a->value.shape);
    Tensor<T> v = a->value;
    for (std::int64_t i = 0; i < rows; ++i) {
        T* row = v.data.data() + i * cols;
        T mx = row[0];
        for (std::int64_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        T sum = T(0);
        for (std::int64_t j = 0; j < cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        const T inv = T(1) / sum;
        for (std::int64_t j = 0; j < cols; ++j) row[j] *= inv;
    }
    auto out = make_op(std::move(v), {a});
    if (out->needs_grad) {
        out->backprop = [a, rows, cols, self = out.get()]() {
            if (!a->needs_grad) return;
            Tensor<T>& ga = a->ensure_grad();
            for (std::int64_t i = 0; i < rows; ++i) {
                const T* s = self->value.data.data() + i * cols;
                const T* g = self->grad.data.data() + i * cols;
                T dot = T(0);
                for (std::int64_t j = 0; j < cols; ++j) dot += g[j] * s[j];
                T* d = ga.data.data() + i * cols;
                for (std::int64_t j = 0; j < cols; ++j) d[j] += s[j] * (g[j] - dot);
            }
        };
    }
    return out;
}

// Standardize each row (population variance) then scale/shift: gamma * xhat + beta.
template <typename T>
NodePtr<T> layer_norm(const NodePtr<T>& x, const NodePtr<T>& gamma, const NodePtr<T>& beta,
                      T eps = T(1e-6)) {
    auto [rows, cols] = detail::as_rows(x->value.shape);
    if (gamma->value.rank() != 1 || gamma->value.shape[0] != cols ||
        !gamma->value.same_shape(beta->value)) {
        throw DimensionError("layer_norm gamma/beta shape " + shape_str(gamma->value.shape) +
                             " does not match last axis of " + shape_str(x->value.shape));
    }
    if (!(eps > T(0))) throw ContractError("layer_norm eps must be positive");

    auto xhat = std::make_shared<Tensor<T>>(x->value.shape);
    auto inv_sigma = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
    Tensor<T> v = x->value;
    for (std::int64_t i = 0; i < rows; ++i) {
        const T* row = x->value.data.data() + i * cols;
        T mean = T(0);
        for (std::int64_t j = 0; j < cols; ++j) mean += row[j];
        mean /= static_cast<T>(cols);
        T var = T(0);
        for (std::int64_t j = 0; j < cols; ++j) {
            const T d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<T>(cols);
        const T inv = T(1) / std::sqrt(var + eps);
        (*inv_sigma)[static_cast<std::size_t>(i)] = inv;
        T* xh = xhat->data.data() + i * cols;
        T* ov = v.data.data() + i * cols;
        for (std::int64_t j = 0; j < cols; ++j) {
            xh[j] = (row[j] - mean) * inv;
            ov[j] = gamma->value[j] * xh[j] + beta->value[j];
        }
    }
    auto out = make_op(std::move(v), {x, gamma, beta});
    if (out->needs_grad) {
        out->backprop = [x, gamma, beta, xhat, inv_sigma, rows, cols, self = out.get()]() {
            for (std::int64_t i = 0; i < rows; ++i) {
                const T* g = self->grad.data.data() + i * cols;
                const T* xh = xhat->data.data() + i * cols;
                if (gamma->needs_grad) {
                    Tensor<T>& gg = gamma->ensure_grad();
                    for (std::int64_t j = 0; j < cols; ++j) gg[j] += g[j] * xh[j];
                }
                if (beta->needs_grad) {
                    Tensor<T>& gb = beta->ensure_grad();
                    for (std::int64_t j = 0; j < cols; ++j) gb[j] += g[j];
                }
                if (x->needs_grad) {
                    const T inv = (*inv_sigma)[static_cast<std::size_t>(i)];
                    T mean_gg = T(0), mean_ggx = T(0);
                    for (std::int64_t j = 0; j < cols; ++j) {
                        const T ggj = g[j] * gamma->value[j];
                        mean_gg += ggj;
                        mean_ggx += ggj * xh[j];
                    }
                    mean_gg /= static_cast<T>(cols);
                    mean_ggx /= static_cast<T>(cols);
                    Tensor<T>& gx = x->ensure_grad();
                    T* d = gx.data.data() + i * cols;
                    for (std::int64_t j = 0; j < cols; ++j) {
                        const T ggj = g[j] * gamma->value[j];
                        d[j] += inv * (ggj - mean_gg - xh[j] * mean_ggx);
                    }
                }
            }
        };
    }
    return out;
}

namespace detail {

// tanh approximation of GELU; the 0.044715 cubic coefficient is part of the
// definition and must not be tuned, otherwise reference values drift.
inline constexpr double kGeluCubic = 0.044715;

template <typename T>
inline T gelu_scalar(T x) {
    const T k = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
    const T u = k * (x + static_cast<T>(kGeluCubic) * x * x * x);
    return T(0.5) * x * (T(1) + std::tanh(u));
}

template <typename T>
inline T gelu_grad_scalar(T x) {
    const T k = static_cast<T>(0.7978845608028654);
    const T a = static_cast<T>(kGeluCubic);
    const T u = k * (x + a * x * x * x);
    const T t = std::tanh(u);
    const T du = k * (T(1) + T(3) * a * x * x);
    return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
}

template <typename T>
inline T sigmoid_scalar(T x) {
    if (x >= T(0)) {
        return T(1) / (T(1) + std::exp(-x));
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
}

}  // namespace detail

template <typename T>
NodePtr<T> gelu(const NodePtr<T>& a) {
    Tensor<T> v = a->value;
    for (auto& x : v.data) x = detail::gelu_scalar(x);
    auto out = make_op(std::move(v), {a});
    if (out->needs_grad) {
        out->backprop = [a, self = out.get()]() {
            if (!a->needs_grad) return;
            Tensor<T>& ga = a->ensure_grad();
            for (std::size_t i = 0; i < ga.data.size(); ++i)
                ga.data[i] += self->grad.data[i] * detail::gelu_grad_scalar(a->value.data[i]);
        };
    }
    return out;
}

template <typename T>
NodePtr<T> sigmoid(const NodePtr<T>& a) {
    Tensor<T> v = a->value;
    for (auto& x : v.data) x = detail::sigmoid_scalar(x);
    auto out = make_op(std::move(v), {a});
    if (out->needs_grad) {
        out->backprop = [a, self = out.get()]() {
            if (!a->needs_grad) return;
            Tensor<T>& ga = a->ensure_grad();
            for (std::size_t i = 0; i < ga.data.size(); ++i) {
                const T s = self->value.data[i];
                ga.data[i] += self->grad.data[i] * s * (T(1) - s);
            }
        };
    }
    return out;
}

// Binary cross-entropy from logits, summed over classes and averaged over
// rows (samples). Uses the fused log-sigmoid form, so no probability ever
// has to be clamped on the training path. d/dz = (sigmoid(z) - y) / rows.
template <typename T>
NodePtr<T> bce_with_logits(const NodePtr<T>& logits, const Tensor<T>& targets) {
    if (!logits->value.same_shape(targets)) {
        throw DimensionError("bce_with_logits target shape " + shape_str(targets.shape) +
                             " does not match logits " + shape_str(logits->value.shape));
    }
    auto [rows, cols] = detail::as_rows(logits->value.shape);
    T acc = T(0);
    for (std::int64_t i = 0; i < rows * cols; ++i) {
        const T z = logits->value[i];
        const T y = targets[i];
        // max(z,0) - z*y + log(1 + exp(-|z|))
        acc += std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    Tensor<T> v({1});
    v.data[0] = acc / static_cast<T>(rows);
    auto out = make_op(std::move(v), {logits});
    if (out->needs_grad) {
        auto y = std::make_shared<Tensor<T>>(targets);
        out->backprop = [logits, y, rows, self = out.get()]() {
            if (!logits->needs_grad) return;
            Tensor<T>& g = logits->ensure_grad();
            const T gs = self->grad.data[0] / static_cast<T>(rows);
            for (std::size_t i = 0; i < g.data.size(); ++i) {
                const T s = detail::sigmoid_scalar(logits->value.data[i]);
                g.data[i] += gs * (s - y->data[i]);
            }
        };
    }
    return out;
}

// --------------------------------------------------------------------------
// Finite-difference gradient checking (f64 only)
// --------------------------------------------------------------------------

struct GradCheckReport {
    double max_rel_error = 0.0;
    bool pass = false;
};

// fn must rebuild the computation from the current parameter values and
// return the scalar loss node. Central differences, per-element relative
// error |a - n| / max(|a|, |n|, 1e-12).
inline GradCheckReport finite_diff_check(const std::function<NodePtr<double>()>& fn,
                                         std::span<const NodePtr<double>> params,
                                         double h = 1e-5, double tol = 1e-6) {
    for (const auto& p : params) p->zero_grad();
    backward(fn());

    std::vector<Tensor<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        analytic.push_back(p->has_grad() ? p->grad : Tensor<double>(p->value.shape));
    }

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<double>& theta = params[pi]->value;
        for (std::size_t i = 0; i < theta.data.size(); ++i) {
            const double saved = theta.data[i];
            theta.data[i] = saved + h;
            const double f_plus = fn()->value.data[0];
            theta.data[i] = saved - h;
            const double f_minus = fn()->value.data[0];
            theta.data[i] = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * h);
            const double a = analytic[pi].data[i];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
            report.max_rel_error = std::max(report.max_rel_error, rel);
        }
    }
    report.pass = report.max_rel_error <= tol;
    return report;
}

}  // namespace reeflora
