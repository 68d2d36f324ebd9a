#pragma once

#include <cstdint>
#include <vector>

#include "dmar/autodiff.hpp"
#include "dmar/volume.hpp"

namespace dmar {

/// Anything that maps an HU image [H, W] to a [C, h, w] feature map inside a graph.
template <class T>
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual ad::Var features(ad::Graph<T>& g, ad::Var image_hu) const = 0;
    virtual std::size_t channels() const = 0;
    /// Spatial downsampling factor of the output grid.
    virtual std::size_t stride() const = 0;
};

/// Frozen seeded conv encoder: three stages of conv3x3 + silu + 2x2 mean pool
/// (8 -> 16 -> C_t channels) after the [-1000, 3000] HU window. Its weights
/// enter every graph as constants.
template <class T>
class TeacherStub final : public FeatureExtractor<T> {
public:
    TeacherStub(std::uint64_t seed, std::size_t channels = 16);

    ad::Var features(ad::Graph<T>& g, ad::Var image_hu) const override;
    std::size_t channels() const override { return channels_; }
    std::size_t stride() const override { return 8; }
    std::uint64_t seed() const { return seed_; }
    const std::vector<ad::Tensor<T>>& weights() const { return weights_; }

    /// Minimum input side accepted by features().
    std::size_t min_side() const { return 8 * stride(); }

private:
    std::uint64_t seed_;
    std::size_t channels_;
    std::vector<ad::Tensor<T>> weights_;  // k0, b0, k1, b1, k2, b2
};

/// Teacher features of a plain HU image.
template <class T>
ad::Tensor<T> teacher_features(const Image& hu, const FeatureExtractor<T>& teacher);

/// Constant [n_in, n_out] matrix resampling an (h_in, w_in) grid to
/// (h_out, w_out) by bilinear interpolation at pixel centres.
std::vector<double> bilinear_resize_matrix(std::size_t h_in, std::size_t w_in, std::size_t h_out, std::size_t w_out);

template <class L>
struct ProjectorT {
    L kernel;  // [C_t, d, 3, 3]
    L bias;    // [C_t]
};

ProjectorT<ad::Tensor<double>> init_projector(std::size_t dim, std::size_t teacher_channels, std::uint64_t seed);

/// Student tokens [n, d] on a (grid_h, grid_w) patch grid -> [d, grid] map,
/// bilinearly resized to (out_h, out_w), then conv3x3 to C_t channels.
template <class T>
ad::Var project_student(ad::Graph<T>& g, ad::Var tokens, std::size_t grid_h, std::size_t grid_w, std::size_t out_h,
                        std::size_t out_w, const ProjectorT<ad::Var>& proj);

/// Per channel (F - mean) / (std + eps) over the spatial axes of [C, H, W].
template <class T>
ad::Var spatial_normalize(ad::Graph<T>& g, ad::Var f, T eps = T(1e-6));

/// 1 - mean over locations of the channel-vector cosine of the spatially
/// normalised maps.
template <class T>
ad::Var ssa_loss(ad::Graph<T>& g, ad::Var student_proj, ad::Var teacher);

/// [H, W] -> [2, H, W] holding (gx, gy), reflect padding.
template <class T>
ad::Var sobel_gradients(ad::Graph<T>& g, ad::Var image);

/// Binary dilation with a disk of the given radius (pixels).
Mask2 dilate(const Mask2& mask, int radius);

/// Mean over ROI pixels of |gx_p - gx_t| + |gy_p - gy_t|; an empty ROI gives 0.
template <class T>
ad::Var edge_loss(ad::Graph<T>& g, ad::Var x_pred, ad::Var x_gt, const Mask2& roi);

/// Mean absolute error.
template <class T>
ad::Var manifold_loss(ad::Graph<T>& g, ad::Var x_pred, ad::Var x_gt);

struct LossWeights {
    double lambda_ssa = 0.2;
    double lambda_edge = 0.1;
    void validate() const;
};

struct LossTerms {
    ad::Var total, manifold, ssa, edge;
};

template <class T>
LossTerms total_loss(ad::Graph<T>& g, ad::Var x_pred, ad::Var x_gt, ad::Var student_proj, ad::Var teacher,
                     const Mask2& roi, const LossWeights& w = {});

}  // namespace dmar
