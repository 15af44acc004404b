#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "hynd/filtergen.hpp"
#include "hynd/hyena.hpp"
#include "hynd/numcore.hpp"
#include "hynd/ops.hpp"
#include "hynd/tape.hpp"

using namespace hynd;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = dist(rng);
    return Tensor::from_data(std::move(shape), std::move(values));
}

void fill(Tensor& t, const std::vector<double>& values) {
    auto out = t.data_mut();
    REQUIRE(out.size() == values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i];
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape() == b.shape());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    return worst;
}

// Delta kernels, forced unit gates, identity projections: the mixer collapses
// to the identity map and any deviation is numerical noise.
void make_identity(HyenaLayer& layer) {
    const std::size_t channels = layer.config().channels;
    const std::size_t order = layer.config().order;
    const std::size_t streams = (order + 1) * channels;

    std::vector<double> w(streams * channels, 0.0);
    std::vector<double> b(streams, 0.0);
    for (std::size_t c = 0; c < channels; ++c) w[c * channels + c] = 1.0;
    for (std::size_t s = channels; s < streams; ++s) b[s] = 1.0;
    fill(layer.in_proj_weight, w);
    fill(layer.in_proj_bias, b);

    std::vector<double> taps(layer.short_filter.numel(), 0.0);
    const std::size_t per_stream = layer.short_filter.numel() / streams;
    for (std::size_t s = 0; s < streams; ++s) taps[s * per_stream] = 1.0;
    fill(layer.short_filter, taps);

    std::vector<double> out_w(channels * channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) out_w[c * channels + c] = 1.0;
    fill(layer.out_proj_weight, out_w);
    fill(layer.out_proj_bias, std::vector<double>(channels, 0.0));
}

std::vector<Tensor> delta_kernels(std::size_t order, std::size_t channels, const Shape& spatial) {
    std::vector<Tensor> kernels;
    const std::size_t volume = shape_numel(spatial);
    for (std::size_t n = 0; n < order; ++n) {
        std::vector<double> values(channels * volume, 0.0);
        for (std::size_t c = 0; c < channels; ++c) values[c * volume] = 1.0;
        Shape shape{channels};
        for (std::size_t len : spatial) shape.push_back(len);
        kernels.push_back(Tensor::from_data(std::move(shape), std::move(values)));
    }
    return kernels;
}

} // namespace

TEST_CASE("forward preserves shape across variants and grids") {
    NoTapeScope quiet;
    for (HyenaVariant variant :
         {HyenaVariant::hyena_1d, HyenaVariant::hyena_nd, HyenaVariant::hyena_nd_product}) {
        HyenaConfig cfg;
        cfg.channels = 3;
        cfg.order = 2;
        cfg.variant = variant;
        cfg.axes_hint = {4, 6};
        HyenaLayer layer(cfg, 7);
        Tensor u = random_tensor({2, 4, 6, 3}, 11);
        Tensor y = layer.forward(u);
        CHECK(y.shape() == u.shape());
    }

    HyenaConfig one_d;
    one_d.channels = 2;
    one_d.order = 3;
    one_d.axes_hint = {10};
    one_d.window = WindowVariant::one_d;
    HyenaLayer layer(one_d, 3);
    Tensor u = random_tensor({2, 10, 2}, 5);
    CHECK(layer.forward(u).shape() == u.shape());

    CHECK_THROWS(layer.forward(random_tensor({2, 10, 3}, 5))); // wrong channels
    CHECK_THROWS(layer.forward(random_tensor({2, 4, 6, 2}, 5))); // wrong rank for 1-D layer
}

TEST_CASE("identity composition reproduces the input exactly") {
    NoTapeScope quiet;
    HyenaConfig cfg;
    cfg.channels = 3;
    cfg.order = 2;
    cfg.axes_hint = {4, 5};
    HyenaLayer layer(cfg, 1);
    make_identity(layer);
    layer.set_explicit_kernels(delta_kernels(cfg.order, cfg.channels, {4, 5}));

    Tensor u = random_tensor({2, 4, 5, 3}, 9);
    CHECK(max_abs_diff(layer.forward(u), u) < 1e-9);

    // Clearing the seam restores the implicit generator: output departs from u.
    layer.set_explicit_kernels({});
    CHECK(max_abs_diff(layer.forward(u), u) > 1e-4);
}

TEST_CASE("causal layer never lets information flow against either axis") {
    NoTapeScope quiet;
    HyenaConfig cfg;
    cfg.channels = 2;
    cfg.order = 2;
    cfg.axes_hint = {5, 6};
    HyenaLayer layer(cfg, 21);
    layer.set_training(false);

    Tensor u = random_tensor({1, 5, 6, 2}, 33);
    Tensor base = layer.forward(u);

    const std::size_t pi = 2, pj = 3; // perturbed site
    Tensor bumped = u.detached_copy();
    bumped.data_mut()[(pi * 6 + pj) * 2] += 0.5;
    Tensor moved = layer.forward(bumped);

    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 6; ++j) {
            double delta = 0.0;
            for (std::size_t c = 0; c < 2; ++c) {
                std::size_t flat = (i * 6 + j) * 2 + c;
                delta = std::max(delta, std::abs(moved.data()[flat] - base.data()[flat]));
            }
            bool in_cone = i >= pi && j >= pj;
            if (in_cone && i == pi && j == pj) CHECK(delta > 1e-6);
            if (!in_cone) CHECK(delta < 1e-9);
        }
    }
}

TEST_CASE("raster-order causality for the 1-D variant on a grid") {
    NoTapeScope quiet;
    HyenaConfig cfg;
    cfg.channels = 2;
    cfg.order = 2;
    cfg.variant = HyenaVariant::hyena_1d;
    cfg.axes_hint = {4, 4};
    HyenaLayer layer(cfg, 2);
    layer.set_training(false);

    Tensor u = random_tensor({1, 4, 4, 2}, 17);
    Tensor base = layer.forward(u);
    const std::size_t token = 6; // flat raster index
    Tensor bumped = u.detached_copy();
    bumped.data_mut()[token * 2 + 1] += 0.25;
    Tensor moved = layer.forward(bumped);

    for (std::size_t t = 0; t < 16; ++t) {
        double delta = 0.0;
        for (std::size_t c = 0; c < 2; ++c)
            delta = std::max(delta,
                             std::abs(moved.data()[t * 2 + c] - base.data()[t * 2 + c]));
        if (t < token) CHECK(delta < 1e-9);
        if (t == token) CHECK(delta > 1e-6);
    }
}

TEST_CASE("two_dir mixes information from both sides of a site") {
    NoTapeScope quiet;
    HyenaConfig cfg;
    cfg.channels = 2;
    cfg.order = 2;
    cfg.axes_hint = {6, 6};
    cfg.direction = Direction::two_dir;
    HyenaLayer layer(cfg, 4);
    layer.set_training(false);

    Tensor u = random_tensor({1, 6, 6, 2}, 8);
    Tensor base = layer.forward(u);
    Tensor bumped = u.detached_copy();
    bumped.data_mut()[(3 * 6 + 3) * 2] += 0.5; // center-ish site
    Tensor moved = layer.forward(bumped);

    double before = 0.0, after = 0.0; // strictly earlier / strictly later sites
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j)
            for (std::size_t c = 0; c < 2; ++c) {
                double d = std::abs(moved.data()[(i * 6 + j) * 2 + c] -
                                    base.data()[(i * 6 + j) * 2 + c]);
                if (i < 3 && j < 3) before = std::max(before, d);
                if (i > 3 && j > 3) after = std::max(after, d);
            }
    CHECK(before > 1e-8); // a causal layer would leave these untouched
    CHECK(after > 1e-8);

    CHECK_THROWS(HyenaLayer(
        [] { HyenaConfig c; c.order = 1; c.direction = Direction::two_dir; return c; }(), 0));
}

TEST_CASE("direction wrappers share the core and price as specified") {
    HyenaConfig cfg;
    cfg.channels = 5;
    cfg.order = 2;
    cfg.axes_hint = {4, 4};
    HyenaLayer causal(cfg, 12);
    const std::size_t base_count = causal.parameter_count();

    HyenaLayer two = wrap_multidirectional(causal, Direction::two_dir, 99);
    CHECK(two.parameter_count() == base_count);
    CHECK(two.in_proj_weight.data().data() == causal.in_proj_weight.data().data());

    HyenaLayer four = wrap_multidirectional(causal, Direction::four_dir, 99);
    const std::size_t c = cfg.channels;
    CHECK(four.parameter_count() == base_count + 4 * c + 4 * c * c);
    CHECK(four.out_proj_weight.data().data() == causal.out_proj_weight.data().data());

    NoTapeScope quiet;
    Tensor u = random_tensor({1, 4, 4, 5}, 3);
    CHECK(four.forward(u).shape() == u.shape());
    CHECK_THROWS(four.forward(random_tensor({1, 4, 8, 5}, 3))); // square grids only

    // Editing a shared core weight must move the wrapped layer's output.
    Tensor y0 = four.forward(u);
    causal.out_proj_bias.data_mut()[0] += 1.0;
    Tensor y1 = four.forward(u);
    CHECK(max_abs_diff(y0, y1) > 1e-3);
}

TEST_CASE("parameter count does not depend on the grid") {
    HyenaConfig small;
    small.channels = 4;
    small.order = 2;
    small.axes_hint = {8, 8};
    HyenaConfig large = small;
    large.axes_hint = {16, 16};

    HyenaLayer a(small, 5);
    HyenaLayer b(large, 5);
    CHECK(a.parameter_count() == b.parameter_count());

    // One layer must evaluate both grids; kernels follow the input size.
    NoTapeScope quiet;
    CHECK(a.forward(random_tensor({1, 8, 8, 4}, 1)).shape() == Shape{1, 8, 8, 4});
    CHECK(a.forward(random_tensor({1, 16, 16, 4}, 1)).shape() == Shape{1, 16, 16, 4});
    CHECK(a.kernel_slice(0, {8, 8}).shape() == Shape{4, 8, 8});
    CHECK(a.kernel_slice(1, {16, 16}).shape() == Shape{4, 16, 16});
}

TEST_CASE("evaluation mode memoizes kernels per grid size") {
    HyenaConfig cfg;
    cfg.channels = 2;
    cfg.order = 2;
    cfg.axes_hint = {4, 4};
    HyenaLayer layer(cfg, 6);
    layer.set_training(false);

    NoTapeScope quiet;
    Tensor u = random_tensor({1, 4, 4, 2}, 2);
    reset_ffn_evaluations();
    Tensor y1 = layer.forward(u);
    const std::uint64_t first = ffn_evaluations();
    CHECK(first > 0);
    Tensor y2 = layer.forward(u);
    CHECK(ffn_evaluations() == first); // cache hit: generator never re-ran
    CHECK(max_abs_diff(y1, y2) == 0.0);

    layer.set_training(true);
    layer.forward(u);
    CHECK(ffn_evaluations() > first); // training always rebuilds
}

TEST_CASE("gradients of every layer parameter match finite differences") {
    HyenaConfig cfg;
    cfg.channels = 2;
    cfg.order = 2;
    cfg.axes_hint = {4, 4};
    HyenaLayer layer(cfg, 31);

    Tensor u = random_tensor({1, 4, 4, 2}, 13, -0.5, 0.5);
    Tensor target = Tensor::zeros({1, 4, 4, 2});
    auto params = layer.parameters();
    std::vector<std::string> names(params.size());
    for (std::size_t i = 0; i < names.size(); ++i) names[i] = "p" + std::to_string(i);

    auto report = check_gradients([&] { return ops::mse(layer.forward(u), target); }, params,
                                  names, 1e-5, 1e-4);
    INFO("worst ", report.worst_param, " rel ", report.max_rel_err);
    CHECK(report.pass);
    CHECK(report.entries_checked > 1000);
}

TEST_CASE("gradients flow for product variant and two_dir mode") {
    HyenaConfig cfg;
    cfg.channels = 2;
    cfg.order = 2;
    cfg.axes_hint = {3, 4};
    cfg.variant = HyenaVariant::hyena_nd_product;
    cfg.direction = Direction::two_dir;
    HyenaLayer layer(cfg, 77);

    Tensor u = random_tensor({1, 3, 4, 2}, 5, -0.5, 0.5);
    Tensor target = Tensor::zeros({1, 3, 4, 2});
    auto params = layer.parameters();
    std::vector<std::string> names(params.size());
    for (std::size_t i = 0; i < names.size(); ++i) names[i] = "p" + std::to_string(i);

    auto report = check_gradients([&] { return ops::mse(layer.forward(u), target); }, params,
                                  names, 1e-5, 1e-4);
    INFO("worst ", report.worst_param, " rel ", report.max_rel_err);
    CHECK(report.pass);
}

TEST_CASE("configuration errors are rejected up front") {
    HyenaConfig cfg;
    cfg.short_filter_size = 4;
    CHECK_THROWS(HyenaLayer(cfg, 0));

    HyenaConfig four;
    four.axes_hint = {8};
    four.direction = Direction::four_dir;
    CHECK_THROWS(HyenaLayer(four, 0)); // needs a 2-D grid

    CHECK_THROWS(short_conv(random_tensor({1, 4, 2}, 0), random_tensor({2, 4}, 1)));

    HyenaConfig ok;
    HyenaLayer layer(ok, 0);
    CHECK_THROWS(layer.kernel_slice(ok.order, {8, 8})); // step out of range
    CHECK_THROWS(layer.set_explicit_kernels(delta_kernels(1, ok.channels, {8, 8})));
}

TEST_CASE("degenerate length-1 axes are legal") {
    NoTapeScope quiet;
    HyenaConfig cfg;
    cfg.channels = 2;
    cfg.order = 2;
    cfg.axes_hint = {1, 5};
    HyenaLayer layer(cfg, 10);
    Tensor u = random_tensor({2, 1, 5, 2}, 20);
    CHECK(layer.forward(u).shape() == u.shape());
}

TEST_CASE("short_conv free function matches the token-space primitive") {
    NoTapeScope quiet;
    Tensor stream = random_tensor({2, 3, 4, 2}, 40);
    Tensor weights = random_tensor({2, 3, 3}, 41);
    Tensor via_wrapper = short_conv(stream, weights);
    Tensor tokens = ops::reshape(stream, {2, 12, 2});
    Tensor direct = ops::reshape(ops::short_conv(tokens, weights, {3, 4}), {2, 3, 4, 2});
    CHECK(max_abs_diff(via_wrapper, direct) == 0.0);
}
