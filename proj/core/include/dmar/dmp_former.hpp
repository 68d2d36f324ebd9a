#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dmar/autodiff.hpp"
#include "dmar/volume.hpp"

namespace dmar {

struct DmpConfig {
    std::size_t side = 64;
    std::size_t patch = 16;
    std::size_t dim = 128;
    std::size_t depth = 4;
    std::size_t heads = 4;
    double ffn_ratio = 8.0 / 3.0;
    int tap_layer = -1;  // zero-based block index; negative = depth - 2

    void validate() const;
    std::size_t grid() const { return side / patch; }
    std::size_t n_tokens() const { return grid() * grid(); }
    std::size_t patch_pixels() const { return patch * patch; }
    std::size_t hidden() const;
    std::size_t tap() const;
};

template <class L>
struct LinearT {
    L weight;  // [in, out]
    L bias;    // [out]
};

template <class L>
struct BlockT {
    LinearT<L> modulation;  // d -> 4d: gamma_attn, beta_attn, gamma_ffn, beta_ffn
    LinearT<L> qkv;         // d -> 3d
    LinearT<L> attn_out;    // d -> d
    LinearT<L> gate;        // d -> hidden
    LinearT<L> up;          // d -> hidden
    LinearT<L> down;        // hidden -> d
};

/// Parameter set, generic over the leaf type (tensor storage or graph handle).
template <class L>
struct DmpParamsT {
    LinearT<L> patch_embed;  // 2 p^2 -> d
    LinearT<L> cond_patch;   // p^2 -> d
    LinearT<L> cond_fc1;     // d -> d
    LinearT<L> cond_fc2;     // d -> d
    std::vector<BlockT<L>> blocks;
    L final_gamma;  // [d]
    L final_beta;   // [d]
    LinearT<L> head;  // d -> p^2

    /// Calls f(name, leaf) for every leaf in a fixed order.
    template <class F>
    void visit(F&& f) {
        visit_impl(*this, f);
    }
    template <class F>
    void visit(F&& f) const {
        visit_impl(*this, f);
    }

    template <class Self, class F>
    static void visit_impl(Self& s, F& f) {
        auto lin = [&](const std::string& n, auto& l) {
            f(n + ".weight", l.weight);
            f(n + ".bias", l.bias);
        };
        lin("patch_embed", s.patch_embed);
        lin("cond_patch", s.cond_patch);
        lin("cond_fc1", s.cond_fc1);
        lin("cond_fc2", s.cond_fc2);
        for (std::size_t i = 0; i < s.blocks.size(); ++i) {
            const std::string p = "blocks." + std::to_string(i) + ".";
            lin(p + "modulation", s.blocks[i].modulation);
            lin(p + "qkv", s.blocks[i].qkv);
            lin(p + "attn_out", s.blocks[i].attn_out);
            lin(p + "gate", s.blocks[i].gate);
            lin(p + "up", s.blocks[i].up);
            lin(p + "down", s.blocks[i].down);
        }
        f(std::string("final.gamma"), s.final_gamma);
        f(std::string("final.beta"), s.final_beta);
        lin("head", s.head);
    }
};

template <class T>
using DmpParams = DmpParamsT<ad::Tensor<T>>;
using DmpVars = DmpParamsT<ad::Var>;

/// Seeded initialisation. Weights and biases of the embedders, QKV and the
/// SwiGLU input maps draw U(-1/sqrt(fan_in), 1/sqrt(fan_in)); the modulation
/// maps, both sublayer output projections and the head start at exactly zero.
DmpParams<double> init_dmp_params(const DmpConfig& cfg, std::uint64_t seed);

template <class T, class U>
DmpParams<T> cast_params(const DmpParams<U>& p) {
    DmpParams<T> out;
    out.blocks.resize(p.blocks.size());
    std::vector<ad::Tensor<T>*> dst;
    out.visit([&](const std::string&, ad::Tensor<T>& t) { dst.push_back(&t); });
    std::size_t i = 0;
    p.visit([&](const std::string&, const ad::Tensor<U>& t) { *dst[i++] = t.template cast<T>(); });
    return out;
}

/// Registers every tensor as a graph parameter (or constant).
template <class T>
DmpVars bind_params(ad::Graph<T>& g, const DmpParams<T>& p, bool trainable = true);

/// Flat list of the bound handles in visit order.
std::vector<ad::Var> leaves(DmpVars& v);

struct TokenGrid {
    ad::Var tokens;                                  // [n_tokens, d]
    std::vector<std::array<double, 2>> positions;   // (row, col) per token
};

/// Row-major (row, col) positions of the patch grid.
std::vector<std::array<double, 2>> grid_positions(const DmpConfig& cfg);

/// Gather indices from a side x side image into [n_tokens, p^2] patches.
std::vector<std::size_t> patch_index(const DmpConfig& cfg);
/// Inverse of patch_index: image pixel -> position in the patch tensor.
std::vector<std::size_t> unpatch_index(const DmpConfig& cfg);

// Flow helpers: z_t = t x + (1 - t) y and v = x - y.
Image interpolate_state(const Image& x, const Image& y, double t);
Image flow_velocity(const Image& x, const Image& y);

template <class T>
TokenGrid patch_embed(ad::Graph<T>& g, ad::Var y, ad::Var m_edge, const DmpVars& p, const DmpConfig& cfg);

/// c = fc2(silu(fc1(mean over tokens of the mask patch embedding))), shape [1, d].
template <class T>
ad::Var condition_embed(ad::Graph<T>& g, ad::Var m_edge, const DmpVars& p, const DmpConfig& cfg);

/// gamma * layer_norm_core(h) + beta with [d]-sized (or [1, d]) gamma and beta.
template <class T>
ad::Var adaln_apply(ad::Graph<T>& g, ad::Var h, ad::Var gamma, ad::Var beta);

/// AdaLN of sublayer `which` (0 = attention, 1 = FFN) of one block.
template <class T>
ad::Var adaln(ad::Graph<T>& g, ad::Var h, ad::Var c, const BlockT<ad::Var>& block, int which, std::size_t dim);

/// Multi-head attention with axial 2-D RoPE on Q and K. When `probs` is given
/// it receives one [n, n] probability matrix per head.
template <class T>
ad::Var rope_attention(ad::Graph<T>& g, const TokenGrid& h, const BlockT<ad::Var>& block, const DmpConfig& cfg,
                       std::vector<ad::Tensor<T>>* probs = nullptr);

template <class T>
ad::Var swiglu_ffn(ad::Graph<T>& g, ad::Var h, const BlockT<ad::Var>& block);

/// h_hat = Attn(AdaLN(h, c)) + h; h_out = FFN(AdaLN(h_hat, c)) + h_hat.
template <class T>
ad::Var dmp_block(ad::Graph<T>& g, const TokenGrid& h, ad::Var c, const BlockT<ad::Var>& block, const DmpConfig& cfg);

struct DmpOutputs {
    ad::Var x_pred;                     // [side, side]
    ad::Var tap;                        // [n_tokens, d], output of block cfg.tap()
    ad::Var tokens_in;                  // patch embedding
    std::vector<ad::Var> block_outputs;
    ad::Var condition;                  // [1, d]
};

template <class T>
DmpOutputs dmp_forward(ad::Graph<T>& g, ad::Var y, ad::Var m_edge, const DmpVars& p, const DmpConfig& cfg);

/// Value-only convenience: network input images are [side, side] tensors.
template <class T>
ad::Tensor<T> dmp_predict(const DmpParams<T>& p, const ad::Tensor<T>& y, const ad::Tensor<T>& m_edge,
                          const DmpConfig& cfg);

/// HU window used for network inputs and targets: [-1000, 3000] -> [0, 1].
inline constexpr double kWindowLo = -1000.0;
inline constexpr double kWindowHi = 3000.0;

template <class T>
ad::Tensor<T> to_network(const Image& hu);
template <class T>
ad::Tensor<T> mask_to_network(const Mask2& m);
template <class T>
Image from_network(const ad::Tensor<T>& t, double spacing_mm);

}  // namespace dmar
