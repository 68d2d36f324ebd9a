#include <cmath>

#include "doctest.h"
#include "dmar/dmp_former.hpp"
#include "dmar/error.hpp"
#include "dmar/gradcheck.hpp"
#include "dmar/gradcheck_suite.hpp"
#include "dmar/parallel.hpp"
#include "dmar/rng.hpp"

using namespace dmar;
using namespace dmar::ad;

namespace {

DmpConfig small_cfg() {
    DmpConfig c;
    c.side = 32;
    c.patch = 8;
    c.dim = 16;
    c.depth = 3;
    c.heads = 2;
    return c;
}

Tensor<double> image_tensor(std::size_t side, std::uint64_t seed) {
    Tensor<double> t({side, side});
    SeqRng rng(seed);
    for (auto& v : t.data) v = rng.uniform();
    return t;
}

Tensor<double> mask_tensor(std::size_t side) {
    Tensor<double> t({side, side});
    for (std::size_t r = side / 4; r < side / 2; ++r) t[r * side + side / 3] = 1.0;
    return t;
}

double max_diff(const Tensor<double>& a, const Tensor<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("config validation") {
    DmpConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.n_tokens() == 16);
    CHECK(c.tap() == 2);
    c.patch = 10;
    CHECK_THROWS(c.validate());
    c = {};
    c.heads = 3;
    CHECK_THROWS(c.validate());
    c = {};
    c.depth = 0;
    CHECK_THROWS(c.validate());
}

TEST_CASE("grid positions cover the patch grid row-major") {
    DmpConfig c;
    const auto pos = grid_positions(c);
    REQUIRE(pos.size() == 16);
    for (std::size_t i = 0; i < 16; ++i) {
        CHECK(pos[i][0] == static_cast<double>(i / 4));
        CHECK(pos[i][1] == static_cast<double>(i % 4));
    }
}

TEST_CASE("patch and unpatch indices are inverse permutations") {
    const DmpConfig c = small_cfg();
    const auto fwd = patch_index(c), inv = unpatch_index(c);
    REQUIRE(fwd.size() == c.side * c.side);
    for (std::size_t i = 0; i < fwd.size(); ++i) CHECK(inv[fwd[i]] == i);
    // Token t, pixel k sits at row (t / g) * p + k / p.
    const std::size_t g = c.grid(), p = c.patch;
    const std::size_t t = 5, k = 19;
    CHECK(fwd[t * p * p + k] == ((t / g) * p + k / p) * c.side + (t % g) * p + k % p);
}

TEST_CASE("zero-initialised layers are exactly zero") {
    const auto p = init_dmp_params(small_cfg(), 1);
    for (const auto& b : p.blocks) {
        for (const auto* t : {&b.modulation.weight, &b.modulation.bias, &b.attn_out.weight, &b.attn_out.bias,
                              &b.down.weight, &b.down.bias})
            CHECK(std::all_of(t->data.begin(), t->data.end(), [](double v) { return v == 0.0; }));
    }
    CHECK(std::all_of(p.head.weight.data.begin(), p.head.weight.data.end(), [](double v) { return v == 0.0; }));
    CHECK(init_dmp_params(small_cfg(), 1).patch_embed.weight.data == p.patch_embed.weight.data);
    CHECK_FALSE(init_dmp_params(small_cfg(), 2).patch_embed.weight.data == p.patch_embed.weight.data);
}

TEST_CASE("at initialisation the prediction is zero and every block is the identity") {
    const DmpConfig c = small_cfg();
    const auto p = cast_params<float>(init_dmp_params(c, 3));
    Graph<float> g;
    const DmpVars v = bind_params(g, p, false);
    const Var y = g.constant(image_tensor(c.side, 4).cast<float>());
    const Var m = g.constant(mask_tensor(c.side).cast<float>());
    const DmpOutputs out = dmp_forward(g, y, m, v, c);
    CHECK(g.shape(out.x_pred) == Shape{c.side, c.side});
    for (float x : g.value(out.x_pred).data) CHECK(x == 0.0f);
    REQUIRE(out.block_outputs.size() == c.depth);
    const auto& in = g.value(out.tokens_in);
    for (auto b : out.block_outputs) {
        const auto& h = g.value(b);
        for (std::size_t i = 0; i < h.size(); ++i) CHECK(std::abs(h[i] - in[i]) <= 1e-6f);
    }
    CHECK(g.shape(out.tap) == Shape{c.n_tokens(), c.dim});
}

TEST_CASE("adaln forced values") {
    Graph<double> g;
    Tensor<double> h({4, 8});
    SeqRng rng(5);
    for (auto& v : h.data) v = rng.uniform(-2.0, 2.0);
    const Var hv = g.constant(h);
    const auto ln = g.value(layer_norm_core(g, hv));
    const auto id = g.value(adaln_apply(g, hv, g.constant(Tensor<double>({8}, 1.0)), g.constant(Tensor<double>({8}))));
    for (std::size_t i = 0; i < ln.size(); ++i) CHECK(id[i] == doctest::Approx(ln[i]));
    const auto k = g.value(adaln_apply(g, hv, g.constant(Tensor<double>({8}, 0.0)), g.constant(Tensor<double>({8}, 3.0))));
    for (double v : k.data) CHECK(v == 3.0);
}

TEST_CASE("attention probabilities are invariant to a global position shift") {
    const DmpConfig c = small_cfg();
    const auto p = randomized_params(c, 6, 0.3);
    Graph<double> g;
    const DmpVars v = bind_params(g, p, false);
    Tensor<double> tok({c.n_tokens(), c.dim});
    SeqRng rng(7);
    for (auto& x : tok.data) x = rng.uniform(-1.0, 1.0);
    TokenGrid a{g.constant(tok), grid_positions(c)};
    TokenGrid b = a;
    for (auto& q : b.positions) q = {q[0] + 3.0, q[1] - 7.5};
    std::vector<Tensor<double>> pa, pb;
    rope_attention(g, a, v.blocks[0], c, &pa);
    rope_attention(g, b, v.blocks[0], c, &pb);
    REQUIRE(pa.size() == c.heads);
    for (std::size_t h = 0; h < c.heads; ++h) CHECK(max_diff(pa[h], pb[h]) < 1e-5);
}

TEST_CASE("single-token attention returns the projected value") {
    DmpConfig c;
    c.side = 16;
    c.patch = 16;
    c.dim = 8;
    c.depth = 1;
    c.heads = 2;
    const auto p = randomized_params(c, 8, 0.5);
    Graph<double> g;
    const DmpVars v = bind_params(g, p, false);
    Tensor<double> tok({1, 8});
    SeqRng rng(9);
    for (auto& x : tok.data) x = rng.uniform(-1.0, 1.0);
    const Var t = g.constant(tok);
    const Var out = rope_attention(g, TokenGrid{t, {{0.0, 0.0}}}, v.blocks[0], c);
    // V = last third of the QKV map.
    const Var qkv = add_row(g, matmul(g, t, v.blocks[0].qkv.weight), v.blocks[0].qkv.bias);
    const Var val = slice(g, qkv, 1, 16, 24);
    const Var expected = add_row(g, matmul(g, val, v.blocks[0].attn_out.weight), v.blocks[0].attn_out.bias);
    CHECK(max_diff(g.value(out), g.value(expected)) < 1e-12);
}

TEST_CASE("swiglu of zero with zero biases is zero") {
    const DmpConfig c = small_cfg();
    auto p = randomized_params(c, 10, 0.5);
    for (auto* l : {&p.blocks[0].gate, &p.blocks[0].up, &p.blocks[0].down})
        std::fill(l->bias.data.begin(), l->bias.data.end(), 0.0);
    Graph<double> g;
    const DmpVars v = bind_params(g, p, false);
    const Var out = swiglu_ffn(g, g.constant(Tensor<double>({3, c.dim})), v.blocks[0]);
    for (double x : g.value(out).data) CHECK(x == 0.0);
}

TEST_CASE("a change in one patch changes only its token") {
    const DmpConfig c = small_cfg();
    const auto p = randomized_params(c, 11, 0.3);
    Graph<double> g;
    const DmpVars v = bind_params(g, p, false);
    auto y = image_tensor(c.side, 12);
    const Var m = g.constant(mask_tensor(c.side));
    const auto a = g.value(patch_embed(g, g.constant(y), m, v, c).tokens);
    y[(c.patch + 2) * c.side + 3] += 1.0;  // token at grid (1, 0)
    const auto b = g.value(patch_embed(g, g.constant(y), m, v, c).tokens);
    for (std::size_t t = 0; t < c.n_tokens(); ++t) {
        double d = 0.0;
        for (std::size_t k = 0; k < c.dim; ++k) d = std::max(d, std::abs(a[t * c.dim + k] - b[t * c.dim + k]));
        if (t == c.grid()) CHECK(d > 0.0);
        else CHECK(d == 0.0);
    }
}

TEST_CASE("condition of a zero mask with zero embedder bias is the MLP of zero") {
    const DmpConfig c = small_cfg();
    auto p = randomized_params(c, 13, 0.3);
    std::fill(p.cond_patch.bias.data.begin(), p.cond_patch.bias.data.end(), 0.0);
    Graph<double> g;
    const DmpVars v = bind_params(g, p, false);
    const Var cv = condition_embed(g, g.constant(Tensor<double>({c.side, c.side})), v, c);
    // fc2(silu(fc1(0))) = fc2(silu(b1))
    const Var zero = g.constant(Tensor<double>({1, c.dim}));
    const Var h = silu(g, add_row(g, matmul(g, zero, v.cond_fc1.weight), v.cond_fc1.bias));
    const Var expected = add_row(g, matmul(g, h, v.cond_fc2.weight), v.cond_fc2.bias);
    CHECK(max_diff(g.value(cv), g.value(expected)) < 1e-15);
}

TEST_CASE("forward is deterministic across runs and thread counts") {
    const DmpConfig c = small_cfg();
    const auto p = randomized_params(c, 14, 0.2);
    const auto y = image_tensor(c.side, 15), m = mask_tensor(c.side);
    const int before = num_threads();
    set_num_threads(1);
    const auto a = dmp_predict(p, y, m, c);
    set_num_threads(4);
    const auto b = dmp_predict(p, y, m, c);
    set_num_threads(before);
    CHECK(a.data == b.data);
    CHECK(dmp_predict(p, y, m, c).data == a.data);
}

TEST_CASE("flow helpers") {
    Image x(2, 2, 1.0), y(2, 2, 1.0);
    x.data = {1, 2, 3, 4};
    y.data = {0, 0, 1, 1};
    CHECK(interpolate_state(x, y, 1.0).data == x.data);
    CHECK(interpolate_state(x, y, 0.0).data == y.data);
    CHECK(interpolate_state(x, y, 0.5).data == std::vector<double>{0.5, 1.0, 2.0, 2.5});
    CHECK(flow_velocity(x, y).data == std::vector<double>{1, 2, 2, 3});
}

TEST_CASE("network window mapping") {
    Image hu(1, 3, 1.0);
    hu.data = {-1000.0, 1000.0, 3000.0};
    const auto t = to_network<double>(hu);
    CHECK(t.data == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(from_network(t, 1.0).data == hu.data);
}

TEST_CASE("full model gradcheck on a parameter subset") {
    for (const auto& e : run_gradcheck_suite(7, 1e-4, true))
        if (e.name.find("dmp_former") != std::string::npos) {
            CHECK(e.report.passed);
            CHECK(e.report.checked >= 100);
        }
}
