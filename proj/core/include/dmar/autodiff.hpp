#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "dmar/error.hpp"

namespace dmar::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

/// Dense row-major tensor of rank <= 4.
template <class T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s, T fill = T{}) : shape(std::move(s)), data(shape_numel(shape), fill) { check(); }
    Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) { check(); }

    std::size_t size() const noexcept { return data.size(); }
    std::size_t rank() const noexcept { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.assign(data.begin(), data.end());
        return out;
    }

private:
    void check() const {
        if (shape.size() > 4) throw ShapeError("tensor rank above 4: " + shape_str(shape));
        if (data.size() != shape_numel(shape)) throw ShapeError("tensor buffer does not match shape " + shape_str(shape));
    }
};

/// Handle to a node of a Graph.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
    bool valid() const noexcept { return id != static_cast<std::size_t>(-1); }
};

/// Tape of primitive applications. Nodes are appended in evaluation order, so
/// the tape is topologically sorted by construction and backward walks it in
/// reverse. Gradient buffers exist only for nodes that depend on a parameter.
template <class T>
class Graph {
public:
    using Backward = std::function<void(Graph&, std::size_t self)>;

    Var constant(Tensor<T> value) { return append(std::move(value), false, {}); }
    Var parameter(Tensor<T> value) { return append(std::move(value), true, {}); }

    /// Records a custom primitive. `fn` receives the node's own index and must
    /// add its input gradients through grad_buffer().
    Var push(Tensor<T> value, const std::vector<Var>& inputs, Backward fn) {
        bool req = false;
        for (auto v : inputs) req = req || node(v).requires_grad;
        return append(std::move(value), req, req ? std::move(fn) : Backward{});
    }

    const Tensor<T>& value(Var v) const { return node(v).value; }
    const Shape& shape(Var v) const { return node(v).value.shape; }
    bool requires_grad(Var v) const { return node(v).requires_grad; }
    bool has_grad(Var v) const { return !node(v).grad.empty(); }

    /// Accumulated gradient; zeros when nothing reached the node.
    Tensor<T> grad(Var v) const {
        const auto& n = node(v);
        if (n.grad.empty()) return Tensor<T>(n.value.shape);
        return Tensor<T>(n.value.shape, n.grad);
    }

    /// Gradient flowing into node `self` during backward.
    const std::vector<T>& out_grad(std::size_t self) const { return nodes_[self].grad; }

    /// Lazily zero-initialised gradient buffer of an input that requires grad.
    std::vector<T>& grad_buffer(Var v) {
        auto& n = node(v);
        if (!n.requires_grad) throw ParameterError("grad_buffer on a node that does not require grad");
        if (n.grad.empty()) n.grad.assign(n.value.size(), T{});
        return n.grad;
    }

    void backward(Var root) {
        if (node(root).value.size() != 1) throw ShapeError("backward needs a scalar root, got " + shape_str(shape(root)));
        if (!node(root).requires_grad) return;
        grad_buffer(root)[0] += T{1};
        for (std::size_t i = root.id + 1; i-- > 0;) {
            auto& n = nodes_[i];
            if (n.fn && !n.grad.empty()) n.fn(*this, i);
        }
    }

    void zero_grad() {
        for (auto& n : nodes_) n.grad.clear();
    }

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> value;
        bool requires_grad = false;
        Backward fn;
        std::vector<T> grad;
    };

    Var append(Tensor<T> value, bool req, Backward fn) {
        nodes_.push_back(Node{std::move(value), req, std::move(fn), {}});
        return Var{nodes_.size() - 1};
    }
    Node& node(Var v) {
        if (v.id >= nodes_.size()) throw ParameterError("invalid graph handle");
        return nodes_[v.id];
    }
    const Node& node(Var v) const {
        if (v.id >= nodes_.size()) throw ParameterError("invalid graph handle");
        return nodes_[v.id];
    }

    std::vector<Node> nodes_;
};

// Primitives. Shapes are checked eagerly and raise ShapeError.

/// [m,k] x [k,n] -> [m,n]
template <class T> Var matmul(Graph<T>& g, Var a, Var b);
template <class T> Var add(Graph<T>& g, Var a, Var b);
template <class T> Var sub(Graph<T>& g, Var a, Var b);
/// Elementwise product.
template <class T> Var mul(Graph<T>& g, Var a, Var b);
template <class T> Var scale(Graph<T>& g, Var a, T s);
template <class T> Var add_scalar(Graph<T>& g, Var a, T s);
/// Sum of all elements, shape {1}.
template <class T> Var sum(Graph<T>& g, Var a);
template <class T> Var mean(Graph<T>& g, Var a);
/// Rank-2 transpose.
template <class T> Var transpose(Graph<T>& g, Var a);
template <class T> Var reshape(Graph<T>& g, Var a, Shape shape);
template <class T> Var concat(Graph<T>& g, const std::vector<Var>& parts, std::size_t axis);
/// Half-open range [begin, end) along `axis`.
template <class T> Var slice(Graph<T>& g, Var a, std::size_t axis, std::size_t begin, std::size_t end);
/// out[i] = a[index[i]], reshaped to `shape`.
template <class T> Var gather(Graph<T>& g, Var a, const std::vector<std::size_t>& index, Shape shape);

/// a viewed as [rows, n] plus a length-n vector on every row (bias add).
template <class T> Var add_row(Graph<T>& g, Var a, Var row);
/// a viewed as [rows, n] times a length-n vector on every row.
template <class T> Var mul_row(Graph<T>& g, Var a, Var row);

template <class T> Var softmax(Graph<T>& g, Var a);
/// (x - mean) / sqrt(var + eps) over the last axis, no affine.
template <class T> Var layer_norm_core(Graph<T>& g, Var a, T eps = T(1e-6));
/// (x - mean) / (std + eps) over the last axis (population std).
template <class T> Var standardize_rows(Graph<T>& g, Var a, T eps = T(1e-6));
template <class T> Var silu(Graph<T>& g, Var a);
template <class T> Var sigmoid(Graph<T>& g, Var a);
template <class T> Var abs(Graph<T>& g, Var a);

/// Stride-1 3x3 cross-correlation, reflect padding (edge not repeated).
/// x: [C,H,W], k: [O,C,3,3], bias: [O] or an invalid Var.
template <class T> Var conv2d_3x3(Graph<T>& g, Var x, Var k, Var bias = Var{});
/// 2x2 mean pooling with stride 2 on [C,H,W]; H and W must be even.
template <class T> Var avg_pool2(Graph<T>& g, Var x);

/// Axial 2-D rotary embedding on [n, d] split into `n_heads` equal heads.
/// Within a head the first ceil(P/2) of the P = d_head/2 adjacent pairs rotate
/// with the row coordinate and the rest with the column coordinate.
template <class T>
Var rope2d(Graph<T>& g, Var x, const std::vector<std::array<double, 2>>& positions, std::size_t n_heads,
           double base = 10000.0);

/// Cosine similarity of matching rows of two [n, c] tensors -> [n]; rows with
/// a zero vector on either side give 0.
template <class T> Var row_cosine(Graph<T>& g, Var a, Var b);

}  // namespace dmar::ad
