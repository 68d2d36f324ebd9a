#include "dmar/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dmar::ad {

std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

template <class T>
void require_same(const Graph<T>& g, Var a, Var b, const char* op) {
    require(g.shape(a) == g.shape(b),
            std::string(op) + ": shape mismatch " + shape_str(g.shape(a)) + " vs " + shape_str(g.shape(b)));
}

template <class T>
void require_rank(const Graph<T>& g, Var a, std::size_t r, const char* op) {
    require(g.shape(a).size() == r, std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                                        shape_str(g.shape(a)));
}

// Row-major product kernel C[m,n] (+)= A[m,k] B[k,n] with optional transposes.
// Each output element is reduced in a fixed order, so results do not depend on
// the thread count.
template <class T>
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const T* A, const T* B, T* C,
          bool accumulate) {
    const bool big = m * n * k > (1u << 16);
#pragma omp parallel for schedule(static) if (big)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        T* crow = C + i * n;
        if (!accumulate) std::fill(crow, crow + n, T{});
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = ta ? A[p * m + i] : A[i * k + p];
            if (aip == T{}) continue;
            if (!tb) {
                const T* brow = B + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
            } else {
                for (std::size_t j = 0; j < n; ++j) crow[j] += aip * B[j * k + p];
            }
        }
    }
}

template <class T>
Var unary(Graph<T>& g, Var a, T (*f)(T), T (*df)(T, T)) {
    const auto& x = g.value(a);
    Tensor<T> out(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return g.push(std::move(out), {a}, [a, df](Graph<T>& gr, std::size_t self) {
        if (!gr.requires_grad(a)) return;
        const auto& go = gr.out_grad(self);
        const auto& xv = gr.value(a).data;
        const auto& yv = gr.value(Var{self}).data;
        auto& ga = gr.grad_buffer(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * df(xv[i], yv[i]);
    });
}

template <class T>
T sigmoid_f(T x) {
    return x >= T{} ? T{1} / (T{1} + std::exp(-x)) : std::exp(x) / (T{1} + std::exp(x));
}

inline std::size_t reflect(long i, std::size_t n) {
    const long ln = static_cast<long>(n);
    if (i < 0) return static_cast<std::size_t>(-i);
    if (i >= ln) return static_cast<std::size_t>(2 * ln - 2 - i);
    return static_cast<std::size_t>(i);
}

}  // namespace

template <class T>
Var matmul(Graph<T>& g, Var a, Var b) {
    require_rank(g, a, 2, "matmul");
    require_rank(g, b, 2, "matmul");
    const auto& A = g.value(a);
    const auto& B = g.value(b);
    const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    require(B.dim(0) == k, "matmul: inner dims differ " + shape_str(A.shape) + " x " + shape_str(B.shape));
    Tensor<T> out({m, n});
    gemm(false, false, m, n, k, A.data.data(), B.data.data(), out.data.data(), false);
    return g.push(std::move(out), {a, b}, [a, b, m, n, k](Graph<T>& gr, std::size_t self) {
        const T* go = gr.out_grad(self).data();
        if (gr.requires_grad(a))  // dA = dC B^T
            gemm(false, true, m, k, n, go, gr.value(b).data.data(), gr.grad_buffer(a).data(), true);
        if (gr.requires_grad(b))  // dB = A^T dC
            gemm(true, false, k, n, m, gr.value(a).data.data(), go, gr.grad_buffer(b).data(), true);
    });
}

template <class T>
Var add(Graph<T>& g, Var a, Var b) {
    require_same(g, a, b, "add");
    Tensor<T> out = g.value(a);
    const auto& y = g.value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
    return g.push(std::move(out), {a, b}, [a, b](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.out_grad(self);
        for (Var v : {a, b}) {
            if (!gr.requires_grad(v)) continue;
            auto& gv = gr.grad_buffer(v);
            for (std::size_t i = 0; i < go.size(); ++i) gv[i] += go[i];
        }
    });
}

template <class T>
Var sub(Graph<T>& g, Var a, Var b) {
    require_same(g, a, b, "sub");
    Tensor<T> out = g.value(a);
    const auto& y = g.value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
    return g.push(std::move(out), {a, b}, [a, b](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.out_grad(self);
        if (gr.requires_grad(a)) {
            auto& ga = gr.grad_buffer(a);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        }
        if (gr.requires_grad(b)) {
            auto& gb = gr.grad_buffer(b);
            for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
        }
    });
}

template <class T>
Var mul(Graph<T>& g, Var a, Var b) {
    require_same(g, a, b, "mul");
    Tensor<T> out = g.value(a);
    const auto& y = g.value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
    return g.push(std::move(out), {a, b}, [a, b](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.out_grad(self);
        if (gr.requires_grad(a)) {
            const auto& yv = gr.value(b).data;
            auto& ga = gr.grad_buffer(a);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * yv[i];
        }
        if (gr.requires_grad(b)) {
            const auto& xv = gr.value(a).data;
            auto& gb = gr.grad_buffer(b);
            for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * xv[i];
        }
    });
}

template <class T>
Var scale(Graph<T>& g, Var a, T s) {
    Tensor<T> out = g.value(a);
    for (auto& v : out.data) v *= s;
    return g.push(std::move(out), {a}, [a, s](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.out_grad(self);
        auto& ga = gr.grad_buffer(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * s;
    });
}

template <class T>
Var add_scalar(Graph<T>& g, Var a, T s) {
    Tensor<T> out = g.value(a);
    for (auto& v : out.data) v += s;
    return g.push(std::move(out), {a}, [a](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.out_grad(self);
        auto& ga = gr.grad_buffer(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    });
}

template <class T>
Var sum(Graph<T>& g, Var a) {
    const auto& x = g.value(a);
    T acc{};
    for (auto v : x.data) acc += v;
    return g.push(Tensor<T>({1}, std::vector<T>{acc}), {a}, [a](Graph<T>& gr, std::size_t self) {
        const T go = gr.out_grad(self)[0];
        for (auto& v : gr.grad_buffer(a)) v += go;
    });
}

template <class T>
Var mean(Graph<T>& g, Var a) {
    const auto n = g.value(a).size();
    require(n > 0, "mean: empty tensor");
    return scale(g, sum(g, a), T{1} / static_cast<T>(n));
}

template <class T>
Var transpose(Graph<T>& g, Var a) {
    require_rank(g, a, 2, "transpose");
    const auto& x = g.value(a);
    const std::size_t m = x.dim(0), n = x.dim(1);
    Tensor<T> out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
    return g.push(std::move(out), {a}, [a, m, n](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.out_grad(self);
        auto& ga = gr.grad_buffer(a);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += go[j * m + i];
    });
}

template <class T>
Var reshape(Graph<T>& g, Var a, Shape shape) {
    require(shape_numel(shape) == g.value(a).size(),
            "reshape: " + shape_str(g.shape(a)) + " -> " + shape_str(shape) + " changes the element count");
    Tensor<T> out(std::move(shape), g.value(a).data);
    return g.push(std::move(out), {a}, [a](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.out_grad(self);
        auto& ga = gr.grad_buffer(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    });
}

namespace {

// View of a shape around `axis`: outer x axis_len x inner.
struct AxisView {
    std::size_t outer = 1, len = 1, inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
    AxisView v;
    for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
    v.len = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
    return v;
}

}  // namespace

template <class T>
Var concat(Graph<T>& g, const std::vector<Var>& parts, std::size_t axis) {
    require(!parts.empty(), "concat: no inputs");
    Shape out_shape = g.shape(parts[0]);
    require(axis < out_shape.size(), "concat: axis out of range");
    std::vector<std::size_t> lens;
    out_shape[axis] = 0;
    for (Var p : parts) {
        Shape s = g.shape(p);
        require(s.size() == out_shape.size(), "concat: rank mismatch");
        lens.push_back(s[axis]);
        out_shape[axis] += s[axis];
        s[axis] = out_shape[axis];
        require(s == out_shape, "concat: shapes differ off the concat axis");
    }
    Tensor<T> out(out_shape);
    const AxisView ov = axis_view(out_shape, axis);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& x = g.value(parts[k]);
        for (std::size_t o = 0; o < ov.outer; ++o)
            std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(o * lens[k] * ov.inner), lens[k] * ov.inner,
                        out.data.begin() + static_cast<std::ptrdiff_t>((o * ov.len + offset) * ov.inner));
        offset += lens[k];
    }
    return g.push(std::move(out), parts, [parts, lens, ov](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.out_grad(self);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            if (gr.requires_grad(parts[k])) {
                auto& gp = gr.grad_buffer(parts[k]);
                for (std::size_t o = 0; o < ov.outer; ++o)
                    for (std::size_t i = 0; i < lens[k] * ov.inner; ++i)
                        gp[o * lens[k] * ov.inner + i] += go[(o * ov.len + offset) * ov.inner + i];
            }
            offset += lens[k];
        }
    });
}

template <class T>
Var slice(Graph<T>& g, Var a, std::size_t axis, std::size_t begin, std::size_t end) {
    const Shape& s = g.shape(a);
    require(axis < s.size(), "slice: axis out of range");
    require(begin < end && end <= s[axis], "slice: bad range on axis of length " + std::to_string(s[axis]));
    Shape out_shape = s;
    out_shape[axis] = end - begin;
    const AxisView iv = axis_view(s, axis);
    const std::size_t len = end - begin;
    Tensor<T> out(out_shape);
    const auto& x = g.value(a);
    for (std::size_t o = 0; o < iv.outer; ++o)
        std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>((o * iv.len + begin) * iv.inner), len * iv.inner,
                    out.data.begin() + static_cast<std::ptrdiff_t>(o * len * iv.inner));
    return g.push(std::move(out), {a}, [a, iv, begin, len](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.out_grad(self);
        auto& ga = gr.grad_buffer(a);
        for (std::size_t o = 0; o < iv.outer; ++o)
            for (std::size_t i = 0; i < len * iv.inner; ++i)
                ga[(o * iv.len + begin) * iv.inner + i] += go[o * len * iv.inner + i];
    });
}

template <class T>
Var gather(Graph<T>& g, Var a, const std::vector<std::size_t>& index, Shape shape) {
    require(shape_numel(shape) == index.size(), "gather: index count does not match the output shape");
    const auto& x = g.value(a);
    Tensor<T> out(std::move(shape));
    for (std::size_t i = 0; i < index.size(); ++i) {
        require(index[i] < x.size(), "gather: index out of range");
        out[i] = x[index[i]];
    }
    return g.push(std::move(out), {a}, [a, index](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.out_grad(self);
        auto& ga = gr.grad_buffer(a);
        for (std::size_t i = 0; i < index.size(); ++i) ga[index[i]] += go[i];
    });
}

template <class T>
Var add_row(Graph<T>& g, Var a, Var row) {
    const auto& x = g.value(a);
    const auto& r = g.value(row);
    const std::size_t n = r.size();
    require(n > 0 && !x.shape.empty() && x.shape.back() == n,
            "add_row: " + shape_str(x.shape) + " + " + shape_str(r.shape));
    Tensor<T> out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += r[i % n];
    return g.push(std::move(out), {a, row}, [a, row, n](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.out_grad(self);
        if (gr.requires_grad(a)) {
            auto& ga = gr.grad_buffer(a);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        }
        if (gr.requires_grad(row)) {
            auto& gb = gr.grad_buffer(row);
            for (std::size_t i = 0; i < go.size(); ++i) gb[i % n] += go[i];
        }
    });
}

template <class T>
Var mul_row(Graph<T>& g, Var a, Var row) {
    const auto& x = g.value(a);
    const auto& r = g.value(row);
    const std::size_t n = r.size();
    require(n > 0 && !x.shape.empty() && x.shape.back() == n,
            "mul_row: " + shape_str(x.shape) + " * " + shape_str(r.shape));
    Tensor<T> out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= r[i % n];
    return g.push(std::move(out), {a, row}, [a, row, n](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.out_grad(self);
        if (gr.requires_grad(a)) {
            const auto& rv = gr.value(row).data;
            auto& ga = gr.grad_buffer(a);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * rv[i % n];
        }
        if (gr.requires_grad(row)) {
            const auto& xv = gr.value(a).data;
            auto& gb = gr.grad_buffer(row);
            for (std::size_t i = 0; i < go.size(); ++i) gb[i % n] += go[i] * xv[i];
        }
    });
}

template <class T>
Var softmax(Graph<T>& g, Var a) {
    const auto& x = g.value(a);
    require(!x.shape.empty() && x.shape.back() > 0, "softmax: empty last axis");
    const std::size_t n = x.shape.back(), rows = x.size() / n;
    Tensor<T> out(x.shape);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xi = x.data.data() + r * n;
        T* yi = out.data.data() + r * n;
        const T mx = *std::max_element(xi, xi + n);
        T z{};
        for (std::size_t j = 0; j < n; ++j) z += (yi[j] = std::exp(xi[j] - mx));
        for (std::size_t j = 0; j < n; ++j) yi[j] /= z;
    }
    return g.push(std::move(out), {a}, [a, n, rows](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.out_grad(self);
        const auto& y = gr.value(Var{self}).data;
        auto& ga = gr.grad_buffer(a);
        for (std::size_t r = 0; r < rows; ++r) {
            T dot{};
            for (std::size_t j = 0; j < n; ++j) dot += go[r * n + j] * y[r * n + j];
            for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += y[r * n + j] * (go[r * n + j] - dot);
        }
    });
}

template <class T>
Var layer_norm_core(Graph<T>& g, Var a, T eps) {
    const auto& x = g.value(a);
    require(!x.shape.empty() && x.shape.back() > 0, "layer_norm_core: empty feature axis");
    const std::size_t n = x.shape.back(), rows = x.size() / n;
    Tensor<T> out(x.shape);
    std::vector<T> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xi = x.data.data() + r * n;
        T mu{};
        for (std::size_t j = 0; j < n; ++j) mu += xi[j];
        mu /= static_cast<T>(n);
        T var{};
        for (std::size_t j = 0; j < n; ++j) var += (xi[j] - mu) * (xi[j] - mu);
        var /= static_cast<T>(n);
        inv_std[r] = T{1} / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) out[r * n + j] = (xi[j] - mu) * inv_std[r];
    }
    return g.push(std::move(out), {a}, [a, n, rows, inv_std](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.out_grad(self);
        const auto& y = gr.value(Var{self}).data;
        auto& ga = gr.grad_buffer(a);
        for (std::size_t r = 0; r < rows; ++r) {
            T mg{}, mgy{};
            for (std::size_t j = 0; j < n; ++j) {
                mg += go[r * n + j];
                mgy += go[r * n + j] * y[r * n + j];
            }
            mg /= static_cast<T>(n);
            mgy /= static_cast<T>(n);
            for (std::size_t j = 0; j < n; ++j)
                ga[r * n + j] += inv_std[r] * (go[r * n + j] - mg - y[r * n + j] * mgy);
        }
    });
}

template <class T>
Var standardize_rows(Graph<T>& g, Var a, T eps) {
    const auto& x = g.value(a);
    require(!x.shape.empty() && x.shape.back() > 0, "standardize_rows: empty feature axis");
    const std::size_t n = x.shape.back(), rows = x.size() / n;
    Tensor<T> out(x.shape);
    std::vector<T> sd(rows), centred(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xi = x.data.data() + r * n;
        T mu{};
        for (std::size_t j = 0; j < n; ++j) mu += xi[j];
        mu /= static_cast<T>(n);
        T var{};
        for (std::size_t j = 0; j < n; ++j) {
            centred[r * n + j] = xi[j] - mu;
            var += centred[r * n + j] * centred[r * n + j];
        }
        sd[r] = std::sqrt(var / static_cast<T>(n));
        for (std::size_t j = 0; j < n; ++j) out[r * n + j] = centred[r * n + j] / (sd[r] + eps);
    }
    return g.push(std::move(out), {a}, [a, n, rows, sd, centred, eps](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.out_grad(self);
        auto& ga = gr.grad_buffer(a);
        const T tn = static_cast<T>(n);
        for (std::size_t r = 0; r < rows; ++r) {
            const T d = sd[r] + eps;
            T mg{}, gc{};
            for (std::size_t j = 0; j < n; ++j) {
                mg += go[r * n + j];
                gc += go[r * n + j] * centred[r * n + j];
            }
            mg /= tn;
            const T k = sd[r] > T{} ? gc / (tn * sd[r] * d * d) : T{};
            for (std::size_t j = 0; j < n; ++j)
                ga[r * n + j] += (go[r * n + j] - mg) / d - centred[r * n + j] * k;
        }
    });
}

template <class T>
Var silu(Graph<T>& g, Var a) {
    return unary<T>(
        g, a, [](T x) { return x * sigmoid_f(x); },
        [](T x, T) {
            const T s = sigmoid_f(x);
            return s * (T{1} + x * (T{1} - s));
        });
}

template <class T>
Var sigmoid(Graph<T>& g, Var a) {
    return unary<T>(g, a, [](T x) { return sigmoid_f(x); }, [](T, T y) { return y * (T{1} - y); });
}

template <class T>
Var abs(Graph<T>& g, Var a) {
    return unary<T>(
        g, a, [](T x) { return std::abs(x); },
        [](T x, T) { return x > T{} ? T{1} : (x < T{} ? T{-1} : T{}); });
}

template <class T>
Var conv2d_3x3(Graph<T>& g, Var x, Var k, Var bias) {
    require_rank(g, x, 3, "conv2d_3x3");
    require_rank(g, k, 4, "conv2d_3x3");
    const auto& X = g.value(x);
    const auto& K = g.value(k);
    const std::size_t C = X.dim(0), H = X.dim(1), W = X.dim(2), O = K.dim(0);
    require(K.dim(1) == C && K.dim(2) == 3 && K.dim(3) == 3,
            "conv2d_3x3: kernel " + shape_str(K.shape) + " does not fit input " + shape_str(X.shape));
    require(H >= 2 && W >= 2, "conv2d_3x3: reflect padding needs H, W >= 2");
    if (bias.valid()) require(g.value(bias).shape == Shape{O}, "conv2d_3x3: bias must have shape [O]");

    // Reflected neighbour index tables.
    std::vector<std::size_t> ry(3 * H), rx(3 * W);
    for (std::size_t y = 0; y < H; ++y)
        for (int d = 0; d < 3; ++d) ry[y * 3 + d] = reflect(static_cast<long>(y) + d - 1, H);
    for (std::size_t xx = 0; xx < W; ++xx)
        for (int d = 0; d < 3; ++d) rx[xx * 3 + d] = reflect(static_cast<long>(xx) + d - 1, W);

    Tensor<T> out({O, H, W});
    const T* Xd = X.data.data();
    const T* Kd = K.data.data();
    const T* Bd = bias.valid() ? g.value(bias).data.data() : nullptr;
#pragma omp parallel for schedule(static) if (O * C * H * W > (1u << 14))
    for (std::ptrdiff_t oo = 0; oo < static_cast<std::ptrdiff_t>(O); ++oo) {
        const auto o = static_cast<std::size_t>(oo);
        T* od = out.data.data() + o * H * W;
        std::fill(od, od + H * W, Bd ? Bd[o] : T{});
        for (std::size_t c = 0; c < C; ++c) {
            const T* kc = Kd + (o * C + c) * 9;
            const T* xc = Xd + c * H * W;
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t xx = 0; xx < W; ++xx) {
                    T acc{};
                    for (int dy = 0; dy < 3; ++dy)
                        for (int dx = 0; dx < 3; ++dx)
                            acc += kc[dy * 3 + dx] * xc[ry[y * 3 + dy] * W + rx[xx * 3 + dx]];
                    od[y * W + xx] += acc;
                }
        }
    }
    std::vector<Var> inputs{x, k};
    if (bias.valid()) inputs.push_back(bias);
    return g.push(std::move(out), inputs, [x, k, bias, C, H, W, O, ry, rx](Graph<T>& gr, std::size_t self) {
        const T* go = gr.out_grad(self).data();
        if (bias.valid() && gr.requires_grad(bias)) {
            auto& gb = gr.grad_buffer(bias);
            for (std::size_t o = 0; o < O; ++o)
                for (std::size_t i = 0; i < H * W; ++i) gb[o] += go[o * H * W + i];
        }
        if (gr.requires_grad(k)) {
            const T* Xd = gr.value(x).data.data();
            T* gk = gr.grad_buffer(k).data();
#pragma omp parallel for schedule(static) if (O * C * H * W > (1u << 14))
            for (std::ptrdiff_t oo = 0; oo < static_cast<std::ptrdiff_t>(O); ++oo) {
                const auto o = static_cast<std::size_t>(oo);
                for (std::size_t c = 0; c < C; ++c) {
                    const T* xc = Xd + c * H * W;
                    for (int dy = 0; dy < 3; ++dy)
                        for (int dx = 0; dx < 3; ++dx) {
                            T acc{};
                            for (std::size_t y = 0; y < H; ++y)
                                for (std::size_t xx = 0; xx < W; ++xx)
                                    acc += go[o * H * W + y * W + xx] * xc[ry[y * 3 + dy] * W + rx[xx * 3 + dx]];
                            gk[(o * C + c) * 9 + dy * 3 + dx] += acc;
                        }
                }
            }
        }
        if (gr.requires_grad(x)) {
            const T* Kd = gr.value(k).data.data();
            T* gx = gr.grad_buffer(x).data();
#pragma omp parallel for schedule(static) if (O * C * H * W > (1u << 14))
            for (std::ptrdiff_t cc = 0; cc < static_cast<std::ptrdiff_t>(C); ++cc) {
                const auto c = static_cast<std::size_t>(cc);
                T* gxc = gx + c * H * W;
                for (std::size_t o = 0; o < O; ++o) {
                    const T* kc = Kd + (o * C + c) * 9;
                    for (std::size_t y = 0; y < H; ++y)
                        for (std::size_t xx = 0; xx < W; ++xx) {
                            const T gv = go[o * H * W + y * W + xx];
                            for (int dy = 0; dy < 3; ++dy)
                                for (int dx = 0; dx < 3; ++dx)
                                    gxc[ry[y * 3 + dy] * W + rx[xx * 3 + dx]] += kc[dy * 3 + dx] * gv;
                        }
                }
            }
        }
    });
}

template <class T>
Var avg_pool2(Graph<T>& g, Var x) {
    require_rank(g, x, 3, "avg_pool2");
    const auto& X = g.value(x);
    const std::size_t C = X.dim(0), H = X.dim(1), W = X.dim(2);
    require(H % 2 == 0 && W % 2 == 0 && H > 0 && W > 0, "avg_pool2: spatial dims must be even");
    const std::size_t h = H / 2, w = W / 2;
    Tensor<T> out({C, h, w});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx) {
                const T* p = X.data.data() + c * H * W + 2 * y * W + 2 * xx;
                out[(c * h + y) * w + xx] = (p[0] + p[1] + p[W] + p[W + 1]) * T(0.25);
            }
    return g.push(std::move(out), {x}, [x, C, H, W, h, w](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.out_grad(self);
        auto& gx = gr.grad_buffer(x);
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx) {
                    const T v = go[(c * h + y) * w + xx] * T(0.25);
                    const std::size_t base = c * H * W + 2 * y * W + 2 * xx;
                    gx[base] += v;
                    gx[base + 1] += v;
                    gx[base + W] += v;
                    gx[base + W + 1] += v;
                }
    });
}

template <class T>
Var rope2d(Graph<T>& g, Var x, const std::vector<std::array<double, 2>>& positions, std::size_t n_heads,
           double base) {
    require_rank(g, x, 2, "rope2d");
    const auto& X = g.value(x);
    const std::size_t n = X.dim(0), d = X.dim(1);
    require(n_heads > 0 && d % (2 * n_heads) == 0, "rope2d: model dim must be divisible by 2 * heads");
    require(positions.size() == n, "rope2d: one position per token required");
    const std::size_t dh = d / n_heads, pairs = dh / 2, row_pairs = (pairs + 1) / 2, col_pairs = pairs - row_pairs;

    // cos/sin per (token, pair), shared by all heads.
    std::vector<T> cs(n * pairs), sn(n * pairs);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < pairs; ++j) {
            const bool is_row = j < row_pairs;
            const std::size_t jj = is_row ? j : j - row_pairs;
            const double count = static_cast<double>(is_row ? row_pairs : col_pairs);
            const double theta = std::pow(base, -static_cast<double>(jj) / count);
            const double phi = positions[t][is_row ? 0 : 1] * theta;
            cs[t * pairs + j] = static_cast<T>(std::cos(phi));
            sn[t * pairs + j] = static_cast<T>(std::sin(phi));
        }

    Tensor<T> out({n, d});
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t h = 0; h < n_heads; ++h)
            for (std::size_t j = 0; j < pairs; ++j) {
                const std::size_t i0 = t * d + h * dh + 2 * j;
                const T c = cs[t * pairs + j], s = sn[t * pairs + j];
                out[i0] = X[i0] * c - X[i0 + 1] * s;
                out[i0 + 1] = X[i0] * s + X[i0 + 1] * c;
            }
    return g.push(std::move(out), {x}, [x, n, d, n_heads, dh, pairs, cs, sn](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.out_grad(self);
        auto& gx = gr.grad_buffer(x);
        for (std::size_t t = 0; t < n; ++t)
            for (std::size_t h = 0; h < n_heads; ++h)
                for (std::size_t j = 0; j < pairs; ++j) {
                    const std::size_t i0 = t * d + h * dh + 2 * j;
                    const T c = cs[t * pairs + j], s = sn[t * pairs + j];
                    gx[i0] += go[i0] * c + go[i0 + 1] * s;
                    gx[i0 + 1] += -go[i0] * s + go[i0 + 1] * c;
                }
    });
}

template <class T>
Var row_cosine(Graph<T>& g, Var a, Var b) {
    require_same(g, a, b, "row_cosine");
    require_rank(g, a, 2, "row_cosine");
    const auto& A = g.value(a);
    const auto& B = g.value(b);
    const std::size_t n = A.dim(0), c = A.dim(1);
    std::vector<T> na(n), nb(n);
    Tensor<T> out({n});
    for (std::size_t r = 0; r < n; ++r) {
        T dot{}, aa{}, bb{};
        for (std::size_t j = 0; j < c; ++j) {
            dot += A[r * c + j] * B[r * c + j];
            aa += A[r * c + j] * A[r * c + j];
            bb += B[r * c + j] * B[r * c + j];
        }
        na[r] = std::sqrt(aa);
        nb[r] = std::sqrt(bb);
        out[r] = (na[r] > T{} && nb[r] > T{}) ? dot / (na[r] * nb[r]) : T{};
    }
    return g.push(std::move(out), {a, b}, [a, b, n, c, na, nb](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.out_grad(self);
        const auto& A = gr.value(a).data;
        const auto& B = gr.value(b).data;
        const auto& cosv = gr.value(Var{self}).data;
        for (int side = 0; side < 2; ++side) {
            const Var v = side == 0 ? a : b;
            if (!gr.requires_grad(v)) continue;
            const auto& P = side == 0 ? A : B;  // differentiated argument
            const auto& Q = side == 0 ? B : A;
            const auto& np = side == 0 ? na : nb;
            const auto& nq = side == 0 ? nb : na;
            auto& gv = gr.grad_buffer(v);
            for (std::size_t r = 0; r < n; ++r) {
                if (!(np[r] > T{} && nq[r] > T{})) continue;
                const T inv = T{1} / (np[r] * nq[r]);
                const T k = cosv[r] / (np[r] * np[r]);
                for (std::size_t j = 0; j < c; ++j)
                    gv[r * c + j] += go[r] * (Q[r * c + j] * inv - P[r * c + j] * k);
            }
        }
    });
}

#define DMAR_AD_INSTANTIATE(T)                                                                            \
    template Var matmul<T>(Graph<T>&, Var, Var);                                                          \
    template Var add<T>(Graph<T>&, Var, Var);                                                             \
    template Var sub<T>(Graph<T>&, Var, Var);                                                             \
    template Var mul<T>(Graph<T>&, Var, Var);                                                             \
    template Var scale<T>(Graph<T>&, Var, T);                                                             \
    template Var add_scalar<T>(Graph<T>&, Var, T);                                                        \
    template Var sum<T>(Graph<T>&, Var);                                                                  \
    template Var mean<T>(Graph<T>&, Var);                                                                 \
    template Var transpose<T>(Graph<T>&, Var);                                                            \
    template Var reshape<T>(Graph<T>&, Var, Shape);                                                       \
    template Var concat<T>(Graph<T>&, const std::vector<Var>&, std::size_t);                              \
    template Var slice<T>(Graph<T>&, Var, std::size_t, std::size_t, std::size_t);                         \
    template Var gather<T>(Graph<T>&, Var, const std::vector<std::size_t>&, Shape);                       \
    template Var add_row<T>(Graph<T>&, Var, Var);                                                         \
    template Var mul_row<T>(Graph<T>&, Var, Var);                                                         \
    template Var softmax<T>(Graph<T>&, Var);                                                              \
    template Var layer_norm_core<T>(Graph<T>&, Var, T);                                                   \
    template Var standardize_rows<T>(Graph<T>&, Var, T);                                                  \
    template Var silu<T>(Graph<T>&, Var);                                                                 \
    template Var sigmoid<T>(Graph<T>&, Var);                                                              \
    template Var abs<T>(Graph<T>&, Var);                                                                  \
    template Var conv2d_3x3<T>(Graph<T>&, Var, Var, Var);                                                 \
    template Var avg_pool2<T>(Graph<T>&, Var);                                                            \
    template Var rope2d<T>(Graph<T>&, Var, const std::vector<std::array<double, 2>>&, std::size_t, double); \
    template Var row_cosine<T>(Graph<T>&, Var, Var);

DMAR_AD_INSTANTIATE(float)
DMAR_AD_INSTANTIATE(double)

}  // namespace dmar::ad
