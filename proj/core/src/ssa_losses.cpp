#include "dmar/ssa_losses.hpp"

#include <algorithm>
#include <cmath>

#include "dmar/error.hpp"
#include "dmar/rng.hpp"

namespace dmar {

using ad::Graph;
using ad::Shape;
using ad::Tensor;
using ad::Var;

namespace {

Tensor<double> uniform(Shape s, double bound, SeqRng& rng) {
    Tensor<double> t(std::move(s));
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

constexpr double kWinLo = -1000.0;
constexpr double kWinHi = 3000.0;

}  // namespace

template <class T>
TeacherStub<T>::TeacherStub(std::uint64_t seed, std::size_t channels) : seed_(seed), channels_(channels) {
    if (channels == 0) throw ParameterError("loss.teacher_channels must be positive");
    SeqRng rng(mix64(seed ^ 0x7EAC4E5ULL));
    const std::size_t widths[4] = {1, 8, 16, channels};
    for (int s = 0; s < 3; ++s) {
        const double bound = std::sqrt(6.0 / static_cast<double>(9 * widths[s]));
        weights_.push_back(uniform({widths[s + 1], widths[s], 3, 3}, bound, rng).template cast<T>());
        weights_.push_back(uniform({widths[s + 1]}, 0.1, rng).template cast<T>());
    }
}

template <class T>
Var TeacherStub<T>::features(Graph<T>& g, Var image_hu) const {
    const auto& img = g.value(image_hu);
    if (img.rank() != 2) throw ShapeError("teacher: expected an [H, W] image");
    const std::size_t h = img.dim(0), w = img.dim(1);
    if (h < min_side() || w < min_side() || h % stride() != 0 || w % stride() != 0)
        throw ParameterError("teacher: input side must be a multiple of " + std::to_string(stride()) +
                             " and at least " + std::to_string(min_side()));
    // The teacher is frozen and only ever sees targets, so its input enters as a constant.
    Tensor<T> x({1, h, w});
    for (std::size_t i = 0; i < img.size(); ++i)
        x[i] = static_cast<T>((std::clamp(static_cast<double>(img[i]), kWinLo, kWinHi) - kWinLo) / (kWinHi - kWinLo));
    Var f = g.constant(std::move(x));
    for (std::size_t s = 0; s < 3; ++s) {
        const Var k = g.constant(weights_[2 * s]);
        const Var b = g.constant(weights_[2 * s + 1]);
        f = ad::avg_pool2(g, ad::silu(g, ad::conv2d_3x3(g, f, k, b)));
    }
    return f;
}

template <class T>
Tensor<T> teacher_features(const Image& hu, const FeatureExtractor<T>& teacher) {
    Graph<T> g;
    Tensor<T> x({hu.rows, hu.cols});
    for (std::size_t i = 0; i < hu.size(); ++i) x[i] = static_cast<T>(hu.data[i]);
    return g.value(teacher.features(g, g.constant(std::move(x))));
}

std::vector<double> bilinear_resize_matrix(std::size_t h_in, std::size_t w_in, std::size_t h_out, std::size_t w_out) {
    if (!h_in || !w_in || !h_out || !w_out) throw ParameterError("bilinear_resize_matrix: empty grid");
    auto axis = [](std::size_t n_in, std::size_t n_out) {
        // weights[o * n_in + i]
        std::vector<double> wts(n_out * n_in, 0.0);
        const double ratio = static_cast<double>(n_in) / static_cast<double>(n_out);
        for (std::size_t o = 0; o < n_out; ++o) {
            double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
            src = std::clamp(src, 0.0, static_cast<double>(n_in - 1));
            const auto i0 = static_cast<std::size_t>(std::floor(src));
            const std::size_t i1 = std::min(i0 + 1, n_in - 1);
            const double t = src - static_cast<double>(i0);
            wts[o * n_in + i0] += 1.0 - t;
            wts[o * n_in + i1] += t;
        }
        return wts;
    };
    const auto wy = axis(h_in, h_out);
    const auto wx = axis(w_in, w_out);
    const std::size_t n_in = h_in * w_in, n_out = h_out * w_out;
    std::vector<double> m(n_in * n_out, 0.0);
    for (std::size_t oy = 0; oy < h_out; ++oy)
        for (std::size_t ox = 0; ox < w_out; ++ox)
            for (std::size_t iy = 0; iy < h_in; ++iy) {
                const double a = wy[oy * h_in + iy];
                if (a == 0.0) continue;
                for (std::size_t ix = 0; ix < w_in; ++ix) {
                    const double b = wx[ox * w_in + ix];
                    if (b != 0.0) m[(iy * w_in + ix) * n_out + oy * w_out + ox] += a * b;
                }
            }
    return m;
}

ProjectorT<Tensor<double>> init_projector(std::size_t dim, std::size_t teacher_channels, std::uint64_t seed) {
    SeqRng rng(mix64(seed ^ 0x9A0EC7ULL));
    const double bound = 1.0 / std::sqrt(static_cast<double>(9 * dim));
    ProjectorT<Tensor<double>> p;
    p.kernel = uniform({teacher_channels, dim, 3, 3}, bound, rng);
    p.bias = uniform({teacher_channels}, bound, rng);
    return p;
}

template <class T>
Var project_student(Graph<T>& g, Var tokens, std::size_t grid_h, std::size_t grid_w, std::size_t out_h,
                    std::size_t out_w, const ProjectorT<Var>& proj) {
    const auto& s = g.shape(tokens);
    if (s.size() != 2 || s[0] != grid_h * grid_w) throw ShapeError("project_student: tokens do not match the grid");
    const std::size_t d = s[1];
    const Var fmap = ad::transpose(g, tokens);  // [d, n]
    Var resized = fmap;
    if (grid_h != out_h || grid_w != out_w) {
        const auto m = bilinear_resize_matrix(grid_h, grid_w, out_h, out_w);
        const Var r = g.constant(Tensor<T>({grid_h * grid_w, out_h * out_w}, std::vector<T>(m.begin(), m.end())));
        resized = ad::matmul(g, fmap, r);
    }
    const Var grid = ad::reshape(g, resized, {d, out_h, out_w});
    return ad::conv2d_3x3(g, grid, proj.kernel, proj.bias);
}

template <class T>
Var spatial_normalize(Graph<T>& g, Var f, T eps) {
    const Shape s = g.shape(f);
    if (s.size() != 3 || s[1] * s[2] < 2) throw ShapeError("spatial_normalize: expected [C, H, W] with H*W >= 2");
    const Var flat = ad::reshape(g, f, {s[0], s[1] * s[2]});
    return ad::reshape(g, ad::standardize_rows(g, flat, eps), s);
}

template <class T>
Var ssa_loss(Graph<T>& g, Var student_proj, Var teacher) {
    const Shape s = g.shape(student_proj);
    if (s != g.shape(teacher))
        throw ShapeError("ssa_loss: " + ad::shape_str(s) + " vs " + ad::shape_str(g.shape(teacher)));
    if (s.size() != 3) throw ShapeError("ssa_loss: expected [C, H, W] maps");
    const std::size_t c = s[0], hw = s[1] * s[2];
    auto per_location = [&](Var f) { return ad::transpose(g, ad::reshape(g, spatial_normalize(g, f), {c, hw})); };
    const Var cos = ad::row_cosine(g, per_location(student_proj), per_location(teacher));
    return ad::add_scalar(g, ad::scale(g, ad::mean(g, cos), T(-1)), T(1));
}

template <class T>
Var sobel_gradients(Graph<T>& g, Var image) {
    const Shape s = g.shape(image);
    if (s.size() != 2 || s[0] < 3 || s[1] < 3) throw ShapeError("sobel_gradients: expected an image of side >= 3");
    const Tensor<T> k({2, 1, 3, 3}, std::vector<T>{-1, 0, 1, -2, 0, 2, -1, 0, 1,    // gx
                                                   -1, -2, -1, 0, 0, 0, 1, 2, 1});  // gy
    return ad::conv2d_3x3(g, ad::reshape(g, image, {1, s[0], s[1]}), g.constant(k));
}

Mask2 dilate(const Mask2& mask, int radius) {
    if (radius < 0) throw ParameterError("loss.roi_dilation must be >= 0");
    Mask2 out(mask.rows, mask.cols, mask.spacing_mm, 0);
    const long rows = static_cast<long>(mask.rows), cols = static_cast<long>(mask.cols);
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c) {
            if (!mask(static_cast<std::size_t>(r), static_cast<std::size_t>(c))) continue;
            for (long dr = -radius; dr <= radius; ++dr)
                for (long dc = -radius; dc <= radius; ++dc) {
                    if (dr * dr + dc * dc > static_cast<long>(radius) * radius) continue;
                    const long rr = r + dr, cc = c + dc;
                    if (rr >= 0 && rr < rows && cc >= 0 && cc < cols)
                        out(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) = 1;
                }
        }
    return out;
}

template <class T>
Var edge_loss(Graph<T>& g, Var x_pred, Var x_gt, const Mask2& roi) {
    const Shape s = g.shape(x_pred);
    if (s != g.shape(x_gt)) throw ShapeError("edge_loss: shape mismatch");
    if (s.size() != 2 || roi.rows != s[0] || roi.cols != s[1]) throw ShapeError("edge_loss: ROI shape mismatch");
    std::size_t n_roi = 0;
    Tensor<T> gate({2, s[0], s[1]});
    for (std::size_t i = 0; i < roi.size(); ++i)
        if (roi.data[i]) {
            gate[i] = gate[roi.size() + i] = T(1);
            ++n_roi;
        }
    if (n_roi == 0) return g.constant(Tensor<T>({1}));
    const Var diff = ad::sub(g, sobel_gradients(g, x_pred), sobel_gradients(g, x_gt));
    const Var masked = ad::mul(g, ad::abs(g, diff), g.constant(std::move(gate)));
    return ad::scale(g, ad::sum(g, masked), T(1) / static_cast<T>(n_roi));
}

template <class T>
Var manifold_loss(Graph<T>& g, Var x_pred, Var x_gt) {
    if (g.shape(x_pred) != g.shape(x_gt)) throw ShapeError("manifold_loss: shape mismatch");
    return ad::mean(g, ad::abs(g, ad::sub(g, x_pred, x_gt)));
}

void LossWeights::validate() const {
    if (!(lambda_ssa >= 0.0) || !(lambda_edge >= 0.0)) throw ParameterError("loss weights must be >= 0");
}

template <class T>
LossTerms total_loss(Graph<T>& g, Var x_pred, Var x_gt, Var student_proj, Var teacher, const Mask2& roi,
                     const LossWeights& w) {
    w.validate();
    LossTerms t;
    t.manifold = manifold_loss(g, x_pred, x_gt);
    t.ssa = ssa_loss(g, student_proj, teacher);
    t.edge = edge_loss(g, x_pred, x_gt, roi);
    t.total = ad::add(g, ad::add(g, t.manifold, ad::scale(g, t.ssa, static_cast<T>(w.lambda_ssa))),
                      ad::scale(g, t.edge, static_cast<T>(w.lambda_edge)));
    return t;
}

#define DMAR_SSA_INSTANTIATE(T)                                                                           \
    template class TeacherStub<T>;                                                                        \
    template Tensor<T> teacher_features<T>(const Image&, const FeatureExtractor<T>&);                     \
    template Var project_student<T>(Graph<T>&, Var, std::size_t, std::size_t, std::size_t, std::size_t,   \
                                    const ProjectorT<Var>&);                                              \
    template Var spatial_normalize<T>(Graph<T>&, Var, T);                                                 \
    template Var ssa_loss<T>(Graph<T>&, Var, Var);                                                        \
    template Var sobel_gradients<T>(Graph<T>&, Var);                                                      \
    template Var edge_loss<T>(Graph<T>&, Var, Var, const Mask2&);                                         \
    template Var manifold_loss<T>(Graph<T>&, Var, Var);                                                   \
    template LossTerms total_loss<T>(Graph<T>&, Var, Var, Var, Var, const Mask2&, const LossWeights&);

DMAR_SSA_INSTANTIATE(float)
DMAR_SSA_INSTANTIATE(double)

}  // namespace dmar
