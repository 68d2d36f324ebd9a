#include "dmar/dmp_former.hpp"

#include <algorithm>
#include <cmath>

#include "dmar/error.hpp"
#include "dmar/rng.hpp"

namespace dmar {

using ad::Graph;
using ad::Shape;
using ad::Tensor;
using ad::Var;

void DmpConfig::validate() const {
    if (patch == 0 || side == 0 || side % patch != 0)
        throw ParameterError("model.side must be a positive multiple of model.patch");
    if (depth < 1) throw ParameterError("model.depth must be >= 1");
    if (heads == 0 || dim == 0 || dim % (2 * heads) != 0)
        throw ParameterError("model.dim must be divisible by 2 * model.heads");
    if (!(ffn_ratio > 0.0)) throw ParameterError("model.ffn_ratio must be positive");
    if (tap_layer >= static_cast<int>(depth)) throw ParameterError("model.tap_layer must be below model.depth");
}

std::size_t DmpConfig::hidden() const {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(dim) * ffn_ratio)));
}

std::size_t DmpConfig::tap() const {
    if (tap_layer >= 0) return static_cast<std::size_t>(tap_layer);
    return depth >= 2 ? depth - 2 : 0;
}

namespace {

Tensor<double> uniform(Shape s, double bound, SeqRng& rng) {
    Tensor<double> t(std::move(s));
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

LinearT<Tensor<double>> linear_init(std::size_t in, std::size_t out, SeqRng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    LinearT<Tensor<double>> l;
    l.weight = uniform({in, out}, bound, rng);
    l.bias = uniform({out}, bound, rng);
    return l;
}

LinearT<Tensor<double>> linear_zero(std::size_t in, std::size_t out) {
    return {Tensor<double>({in, out}), Tensor<double>({out})};
}

template <class T>
Var linear(Graph<T>& g, Var x, const LinearT<Var>& l) {
    return ad::add_row(g, ad::matmul(g, x, l.weight), l.bias);
}

}  // namespace

DmpParams<double> init_dmp_params(const DmpConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SeqRng rng(seed);
    const std::size_t d = cfg.dim, pp = cfg.patch_pixels(), hid = cfg.hidden();
    DmpParams<double> p;
    p.patch_embed = linear_init(2 * pp, d, rng);
    p.cond_patch = linear_init(pp, d, rng);
    p.cond_fc1 = linear_init(d, d, rng);
    p.cond_fc2 = linear_init(d, d, rng);
    for (std::size_t l = 0; l < cfg.depth; ++l) {
        BlockT<Tensor<double>> b;
        b.modulation = linear_zero(d, 4 * d);
        b.qkv = linear_init(d, 3 * d, rng);
        b.attn_out = linear_zero(d, d);
        b.gate = linear_init(d, hid, rng);
        b.up = linear_init(d, hid, rng);
        b.down = linear_zero(hid, d);
        p.blocks.push_back(std::move(b));
    }
    p.final_gamma = Tensor<double>({d}, 1.0);
    p.final_beta = Tensor<double>({d}, 0.0);
    p.head = linear_zero(d, pp);
    return p;
}

template <class T>
DmpVars bind_params(Graph<T>& g, const DmpParams<T>& p, bool trainable) {
    DmpVars v;
    v.blocks.resize(p.blocks.size());
    std::vector<Var*> slots;
    v.visit([&](const std::string&, Var& leaf) { slots.push_back(&leaf); });
    std::size_t i = 0;
    p.visit([&](const std::string&, const Tensor<T>& t) {
        *slots[i++] = trainable ? g.parameter(t) : g.constant(t);
    });
    return v;
}

std::vector<Var> leaves(DmpVars& v) {
    std::vector<Var> out;
    v.visit([&](const std::string&, Var& leaf) { out.push_back(leaf); });
    return out;
}

std::vector<std::array<double, 2>> grid_positions(const DmpConfig& cfg) {
    std::vector<std::array<double, 2>> pos;
    for (std::size_t r = 0; r < cfg.grid(); ++r)
        for (std::size_t c = 0; c < cfg.grid(); ++c) pos.push_back({static_cast<double>(r), static_cast<double>(c)});
    return pos;
}

std::vector<std::size_t> patch_index(const DmpConfig& cfg) {
    const std::size_t gsz = cfg.grid(), p = cfg.patch, side = cfg.side;
    std::vector<std::size_t> idx;
    idx.reserve(side * side);
    for (std::size_t gr = 0; gr < gsz; ++gr)
        for (std::size_t gc = 0; gc < gsz; ++gc)
            for (std::size_t i = 0; i < p; ++i)
                for (std::size_t j = 0; j < p; ++j) idx.push_back((gr * p + i) * side + gc * p + j);
    return idx;
}

std::vector<std::size_t> unpatch_index(const DmpConfig& cfg) {
    const auto fwd = patch_index(cfg);
    std::vector<std::size_t> inv(fwd.size());
    for (std::size_t k = 0; k < fwd.size(); ++k) inv[fwd[k]] = k;
    return inv;
}

Image interpolate_state(const Image& x, const Image& y, double t) {
    if (!x.same_shape(y)) throw ShapeError("interpolate_state: shape mismatch");
    if (!(t >= 0.0 && t <= 1.0)) throw ParameterError("interpolate_state: t must lie in [0, 1]");
    Image z = x;
    for (std::size_t i = 0; i < z.size(); ++i) z.data[i] = t * x.data[i] + (1.0 - t) * y.data[i];
    return z;
}

Image flow_velocity(const Image& x, const Image& y) {
    if (!x.same_shape(y)) throw ShapeError("flow_velocity: shape mismatch");
    Image v = x;
    for (std::size_t i = 0; i < v.size(); ++i) v.data[i] = x.data[i] - y.data[i];
    return v;
}

namespace {

template <class T>
void check_image(const Graph<T>& g, Var img, const DmpConfig& cfg, const char* what) {
    if (g.shape(img) != Shape{cfg.side, cfg.side})
        throw ParameterError(std::string(what) + " must be " + std::to_string(cfg.side) + "x" +
                             std::to_string(cfg.side) + ", got " + ad::shape_str(g.shape(img)));
}

template <class T>
Var patches(Graph<T>& g, Var img, const DmpConfig& cfg) {
    return ad::gather(g, img, patch_index(cfg), {cfg.n_tokens(), cfg.patch_pixels()});
}

}  // namespace

template <class T>
TokenGrid patch_embed(Graph<T>& g, Var y, Var m_edge, const DmpVars& p, const DmpConfig& cfg) {
    cfg.validate();
    check_image(g, y, cfg, "patch_embed: image");
    check_image(g, m_edge, cfg, "patch_embed: mask");
    const Var both = ad::concat(g, {patches(g, y, cfg), patches(g, m_edge, cfg)}, 1);
    return TokenGrid{linear(g, both, p.patch_embed), grid_positions(cfg)};
}

template <class T>
Var condition_embed(Graph<T>& g, Var m_edge, const DmpVars& p, const DmpConfig& cfg) {
    check_image(g, m_edge, cfg, "condition_embed: mask");
    const Var emb = linear(g, patches(g, m_edge, cfg), p.cond_patch);
    const std::size_t n = cfg.n_tokens();
    const Var pool = g.constant(Tensor<T>({1, n}, T(1) / static_cast<T>(n)));
    const Var pooled = ad::matmul(g, pool, emb);
    return linear(g, ad::silu(g, linear(g, pooled, p.cond_fc1)), p.cond_fc2);
}

template <class T>
Var adaln_apply(Graph<T>& g, Var h, Var gamma, Var beta) {
    return ad::add_row(g, ad::mul_row(g, ad::layer_norm_core(g, h), gamma), beta);
}

template <class T>
Var adaln(Graph<T>& g, Var h, Var c, const BlockT<Var>& block, int which, std::size_t dim) {
    if (g.value(c).size() != dim) throw ShapeError("adaln: condition size differs from the model dim");
    const Var mod = linear(g, ad::silu(g, c), block.modulation);
    const std::size_t off = which == 0 ? 0 : 2 * dim;
    const Var gamma = ad::slice(g, mod, 1, off, off + dim);
    const Var beta = ad::slice(g, mod, 1, off + dim, off + 2 * dim);
    return adaln_apply(g, h, gamma, beta);
}

template <class T>
Var rope_attention(Graph<T>& g, const TokenGrid& h, const BlockT<Var>& block, const DmpConfig& cfg,
                   std::vector<Tensor<T>>* probs) {
    const std::size_t d = cfg.dim, nh = cfg.heads;
    if (nh == 0 || d % (2 * nh) != 0) throw ParameterError("rope_attention: dim must be divisible by 2 * heads");
    const std::size_t dh = d / nh;
    const Var qkv = linear(g, h.tokens, block.qkv);
    const Var q = ad::rope2d(g, ad::slice(g, qkv, 1, 0, d), h.positions, nh);
    const Var k = ad::rope2d(g, ad::slice(g, qkv, 1, d, 2 * d), h.positions, nh);
    const Var v = ad::slice(g, qkv, 1, 2 * d, 3 * d);
    const T inv_sqrt = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh)));
    std::vector<Var> heads;
    if (probs) probs->clear();
    for (std::size_t i = 0; i < nh; ++i) {
        const Var qh = ad::slice(g, q, 1, i * dh, (i + 1) * dh);
        const Var kh = ad::slice(g, k, 1, i * dh, (i + 1) * dh);
        const Var vh = ad::slice(g, v, 1, i * dh, (i + 1) * dh);
        const Var logits = ad::scale(g, ad::matmul(g, qh, ad::transpose(g, kh)), inv_sqrt);
        const Var pr = ad::softmax(g, logits);
        if (probs) probs->push_back(g.value(pr));
        heads.push_back(ad::matmul(g, pr, vh));
    }
    const Var merged = nh == 1 ? heads[0] : ad::concat(g, heads, 1);
    return linear(g, merged, block.attn_out);
}

template <class T>
Var swiglu_ffn(Graph<T>& g, Var h, const BlockT<Var>& block) {
    const Var gate = ad::silu(g, linear(g, h, block.gate));
    const Var up = linear(g, h, block.up);
    return linear(g, ad::mul(g, gate, up), block.down);
}

template <class T>
Var dmp_block(Graph<T>& g, const TokenGrid& h, Var c, const BlockT<Var>& block, const DmpConfig& cfg) {
    const TokenGrid normed{adaln(g, h.tokens, c, block, 0, cfg.dim), h.positions};
    const Var h_hat = ad::add(g, rope_attention(g, normed, block, cfg), h.tokens);
    const Var f = adaln(g, h_hat, c, block, 1, cfg.dim);
    return ad::add(g, swiglu_ffn(g, f, block), h_hat);
}

template <class T>
DmpOutputs dmp_forward(Graph<T>& g, Var y, Var m_edge, const DmpVars& p, const DmpConfig& cfg) {
    cfg.validate();
    if (p.blocks.size() != cfg.depth) throw ShapeError("dmp_forward: parameter depth differs from config");
    DmpOutputs out;
    TokenGrid h = patch_embed(g, y, m_edge, p, cfg);
    out.tokens_in = h.tokens;
    out.condition = condition_embed(g, m_edge, p, cfg);
    for (std::size_t l = 0; l < cfg.depth; ++l) {
        h.tokens = dmp_block(g, h, out.condition, p.blocks[l], cfg);
        out.block_outputs.push_back(h.tokens);
        if (l == cfg.tap()) out.tap = h.tokens;
    }
    const Var normed = adaln_apply(g, h.tokens, p.final_gamma, p.final_beta);
    const Var pix = linear(g, normed, p.head);  // [n_tokens, p^2]
    out.x_pred = ad::gather(g, pix, unpatch_index(cfg), {cfg.side, cfg.side});
    return out;
}

template <class T>
Tensor<T> dmp_predict(const DmpParams<T>& p, const Tensor<T>& y, const Tensor<T>& m_edge, const DmpConfig& cfg) {
    Graph<T> g;
    const DmpVars v = bind_params(g, p, false);
    const auto out = dmp_forward(g, g.constant(y), g.constant(m_edge), v, cfg);
    return g.value(out.x_pred);
}

template <class T>
Tensor<T> to_network(const Image& hu) {
    Tensor<T> t({hu.rows, hu.cols});
    for (std::size_t i = 0; i < hu.size(); ++i)
        t[i] = static_cast<T>((std::clamp(hu.data[i], kWindowLo, kWindowHi) - kWindowLo) / (kWindowHi - kWindowLo));
    return t;
}

template <class T>
Tensor<T> mask_to_network(const Mask2& m) {
    Tensor<T> t({m.rows, m.cols});
    for (std::size_t i = 0; i < m.size(); ++i) t[i] = m.data[i] ? T(1) : T(0);
    return t;
}

template <class T>
Image from_network(const Tensor<T>& t, double spacing_mm) {
    if (t.rank() != 2) throw ShapeError("from_network: expected a 2-D tensor");
    Image img(t.dim(0), t.dim(1), spacing_mm);
    for (std::size_t i = 0; i < img.size(); ++i)
        img.data[i] = static_cast<double>(t[i]) * (kWindowHi - kWindowLo) + kWindowLo;
    return img;
}

#define DMAR_DMP_INSTANTIATE(T)                                                                              \
    template DmpVars bind_params<T>(Graph<T>&, const DmpParams<T>&, bool);                                         \
    template TokenGrid patch_embed<T>(Graph<T>&, Var, Var, const DmpVars&, const DmpConfig&);                \
    template Var condition_embed<T>(Graph<T>&, Var, const DmpVars&, const DmpConfig&);                       \
    template Var adaln_apply<T>(Graph<T>&, Var, Var, Var);                                                   \
    template Var adaln<T>(Graph<T>&, Var, Var, const BlockT<Var>&, int, std::size_t);                        \
    template Var rope_attention<T>(Graph<T>&, const TokenGrid&, const BlockT<Var>&, const DmpConfig&,        \
                                   std::vector<Tensor<T>>*);                                                 \
    template Var swiglu_ffn<T>(Graph<T>&, Var, const BlockT<Var>&);                                          \
    template Var dmp_block<T>(Graph<T>&, const TokenGrid&, Var, const BlockT<Var>&, const DmpConfig&);       \
    template DmpOutputs dmp_forward<T>(Graph<T>&, Var, Var, const DmpVars&, const DmpConfig&);               \
    template Tensor<T> dmp_predict<T>(const DmpParams<T>&, const Tensor<T>&, const Tensor<T>&,               \
                                      const DmpConfig&);                                                     \
    template Tensor<T> to_network<T>(const Image&);                                                          \
    template Tensor<T> mask_to_network<T>(const Mask2&);                                                     \
    template Image from_network<T>(const Tensor<T>&, double);

DMAR_DMP_INSTANTIATE(float)
DMAR_DMP_INSTANTIATE(double)

}  // namespace dmar
