#include "dmar/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "dmar/error.hpp"

namespace dmar {

namespace {

void check_pair(const Image& a, const Image& b, double data_range, const char* op) {
    if (!a.same_shape(b)) throw ShapeError(std::string(op) + ": image shapes differ");
    if (!(data_range > 0.0)) throw ParameterError(std::string(op) + ": data_range must be positive");
}

// Valid-mode separable Gaussian filter.
Image filter_valid(const Image& src, const std::vector<double>& k) {
    const std::size_t n = k.size();
    const std::size_t rows = src.rows - n + 1, cols = src.cols - n + 1;
    Image tmp(src.rows, cols);
    for (std::size_t r = 0; r < src.rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += k[i] * src(r, c + i);
            tmp(r, c) = acc;
        }
    Image out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += k[i] * tmp(r + i, c);
            out(r, c) = acc;
        }
    return out;
}

}  // namespace

double psnr(const Image& a, const Image& b, double data_range) {
    check_pair(a, b, data_range, "psnr");
    if (a.size() == 0) throw ShapeError("psnr: empty image");
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        se += d * d;
    }
    if (se == 0.0) return kPsnrIdentical;
    const double mse = se / static_cast<double>(a.size());
    return 20.0 * std::log10(data_range) - 10.0 * std::log10(mse);
}

double ssim(const Image& a, const Image& b, double data_range) {
    check_pair(a, b, data_range, "ssim");
    constexpr std::size_t win = 11;
    if (a.rows < win || a.cols < win) throw ShapeError("ssim: images must be at least 11x11");
    std::vector<double> k(win);
    double ks = 0.0;
    for (std::size_t i = 0; i < win; ++i) {
        const double x = static_cast<double>(i) - 5.0;
        ks += (k[i] = std::exp(-x * x / (2.0 * 1.5 * 1.5)));
    }
    for (auto& v : k) v /= ks;

    Image aa = a, bb = b, ab = a;
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa.data[i] = a.data[i] * a.data[i];
        bb.data[i] = b.data[i] * b.data[i];
        ab.data[i] = a.data[i] * b.data[i];
    }
    const Image mu_a = filter_valid(a, k), mu_b = filter_valid(b, k);
    const Image s_aa = filter_valid(aa, k), s_bb = filter_valid(bb, k), s_ab = filter_valid(ab, k);
    const double c1 = std::pow(0.01 * data_range, 2), c2 = std::pow(0.03 * data_range, 2);
    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a.data[i], mb = mu_b.data[i];
        const double va = s_aa.data[i] - ma * ma, vb = s_bb.data[i] - mb * mb, cov = s_ab.data[i] - ma * mb;
        acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return acc / static_cast<double>(mu_a.size());
}

Image prepare_for_metrics(const Image& img, const Image& reference, const Mask2* metal, const MetricWindow& w) {
    if (!img.same_shape(reference)) throw ShapeError("prepare_for_metrics: shape mismatch");
    if (metal && (metal->rows != img.rows || metal->cols != img.cols))
        throw ShapeError("prepare_for_metrics: metal mask shape mismatch");
    Image out = img;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = (metal && metal->data[i]) ? reference.data[i] : img.data[i];
        out.data[i] = std::clamp(v, w.lo, w.hi);
    }
    return out;
}

}  // namespace dmar
