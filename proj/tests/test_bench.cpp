#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "hynd/bench.hpp"

using namespace hynd;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string temp_path(const std::string& name) { return "/tmp/hynd_bench_" + name; }

std::size_t count_occurrences(const std::string& haystack, const std::string& needle) {
    std::size_t count = 0;
    for (std::size_t pos = haystack.find(needle); pos != std::string::npos;
         pos = haystack.find(needle, pos + needle.size()))
        ++count;
    return count;
}

// Writes `records` synthetic 3073-byte label+pixels records.
void write_records(const std::string& path, const std::vector<unsigned char>& labels) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    for (std::size_t r = 0; r < labels.size(); ++r) {
        out.put(static_cast<char>(labels[r]));
        for (std::size_t i = 0; i < 3072; ++i)
            out.put(static_cast<char>((r * 3072 + i) % 251));
    }
}

} // namespace

TEST_CASE("csv writer emits header and rows") {
    ReportTable table;
    table.columns = {"tokens", "mixer", "peak_bytes", "live_bytes", "param_count"};
    table.rows = {{"64", "attention", "100", "10", "5"}, {"256", "hyena", "200", "20", "5"}};
    const std::string path = temp_path("table.csv");
    write_csv(table, path);
    CHECK(slurp(path) ==
          "tokens,mixer,peak_bytes,live_bytes,param_count\n"
          "64,attention,100,10,5\n"
          "256,hyena,200,20,5\n");
}

TEST_CASE("csv writer with no rows emits just the header") {
    ReportTable table;
    table.columns = {"a", "b"};
    const std::string path = temp_path("empty.csv");
    write_csv(table, path);
    CHECK(slurp(path) == "a,b\n");
}

TEST_CASE("csv writer rejects malformed tables") {
    ReportTable ragged;
    ragged.columns = {"a", "b"};
    ragged.rows = {{"1"}};
    CHECK_THROWS(write_csv(ragged, temp_path("ragged.csv")));

    ReportTable dirty;
    dirty.columns = {"a"};
    dirty.rows = {{"x,y"}};
    CHECK_THROWS(write_csv(dirty, temp_path("dirty.csv")));
}

TEST_CASE("record loader decodes labels and scales pixels") {
    const std::string path = temp_path("records.bin");
    write_records(path, {3, 7});
    LabeledData loaded = load_cifar(path);
    CHECK(loaded.class_count == 10);
    REQUIRE(loaded.data.size() == 2);
    CHECK(loaded.data.labels[0] == 3);
    CHECK(loaded.data.labels[1] == 7);
    REQUIRE(loaded.data.images.shape() == Shape{2, 32, 32, 3});

    // Record bytes are channel-major; the tensor is channel-last. Pixel p of
    // channel c in record r was written as (r*3072 + c*1024 + p) % 251.
    auto pixel = [&](std::size_t r, std::size_t row, std::size_t col, std::size_t c) {
        return loaded.data.images.at(std::vector<std::size_t>{r, row, col, c});
    };
    CHECK(pixel(0, 0, 0, 0) == doctest::Approx(0.0 / 255.0));
    CHECK(pixel(0, 0, 1, 0) == doctest::Approx(1.0 / 255.0));
    CHECK(pixel(0, 0, 0, 1) == doctest::Approx((1024 % 251) / 255.0));
    CHECK(pixel(0, 0, 0, 2) == doctest::Approx((2048 % 251) / 255.0));
    CHECK(pixel(1, 0, 0, 0) == doctest::Approx((3072 % 251) / 255.0));

    LabeledData limited = load_cifar(path, 1);
    CHECK(limited.data.size() == 1);
}

TEST_CASE("record loader maps byte 255 to exactly 1.0") {
    const std::string path = temp_path("bright.bin");
    std::ofstream out(path, std::ios::binary);
    out.put(0);
    for (std::size_t i = 0; i < 3072; ++i) out.put(static_cast<char>(255));
    out.close();
    LabeledData loaded = load_cifar(path);
    CHECK(loaded.data.images.at(std::vector<std::size_t>{0, 0, 0, 0}) == 1.0);
    CHECK(loaded.data.images.at(std::vector<std::size_t>{0, 31, 31, 2}) == 1.0);
}

TEST_CASE("record loader rejects bad files") {
    const std::string truncated = temp_path("truncated.bin");
    {
        std::ofstream out(truncated, std::ios::binary);
        for (std::size_t i = 0; i < 3072; ++i) out.put(7); // one byte short
    }
    CHECK_THROWS(load_cifar(truncated));
    CHECK_THROWS(load_cifar(temp_path("does_not_exist.bin")));

    const std::string bad_label = temp_path("bad_label.bin");
    write_records(bad_label, {12});
    CHECK_THROWS(load_cifar(bad_label)); // label 12 with 10 classes
    CHECK(load_cifar(bad_label, 0, 13).data.labels[0] == 12);
}

TEST_CASE("synthetic stripes are deterministic, balanced, and in range") {
    LabeledData a = synth_dataset(5, 25, 4);
    LabeledData b = synth_dataset(5, 25, 4);
    LabeledData c = synth_dataset(6, 25, 4);
    REQUIRE(a.data.size() == 25);
    CHECK(a.class_count == 4);
    CHECK(a.data.images.shape() == Shape{25, 32, 32, 3});

    CHECK(a.data.labels == b.data.labels);
    bool identical = true, differs_from_c = false;
    for (std::size_t i = 0; i < a.data.images.numel(); ++i) {
        identical = identical && a.data.images.data()[i] == b.data.images.data()[i];
        differs_from_c = differs_from_c || a.data.images.data()[i] != c.data.images.data()[i];
    }
    CHECK(identical);
    CHECK(differs_from_c);

    std::vector<std::size_t> counts(4, 0);
    for (std::size_t label : a.data.labels) ++counts[label];
    CHECK(counts == std::vector<std::size_t>{7, 6, 6, 6}); // 25 = 4*6 + 1
    for (double v : a.data.images.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    CHECK_THROWS(synth_dataset(0, 8, 1));
    CHECK_THROWS(synth_dataset(0, 0, 4));
}

TEST_CASE("svg chart contains one polyline and legend entry per series") {
    std::vector<ChartSeries> series{
        {"attention", {{64, 1e4}, {256, 2e5}, {1024, 4e6}}},
        {"hyena", {{64, 8e3}, {256, 4e4}, {1024, 2e5}}},
    };
    const std::string path = temp_path("chart.svg");
    write_svg_chart(series, "peak memory", "tokens", "bytes", true, path);
    const std::string svg = slurp(path);
    CHECK(count_occurrences(svg, "<polyline") == 2);
    CHECK(svg.find("attention") != std::string::npos);
    CHECK(svg.find("hyena") != std::string::npos);
    CHECK(svg.find("peak memory") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);

    CHECK_THROWS(write_svg_chart({{"bad", {{0.0, 1.0}}}}, "t", "x", "y", true,
                                 temp_path("bad.svg")));
    // Linear charts accept non-positive coordinates.
    write_svg_chart({{"ok", {{0.0, -1.0}, {1.0, 1.0}}}}, "t", "x", "y", false,
                    temp_path("linear.svg"));
    CHECK(slurp(temp_path("linear.svg")).find("<polyline") != std::string::npos);
}

TEST_CASE("kernel fitting reduces the loss and reports a separability floor") {
    FitKernelResult dense = fit_kernel(FilterVariant::implicit_nd, {4, 4}, 60, 0.05, 11);
    REQUIRE(dense.losses.size() == 60);
    CHECK(dense.terminal_loss == dense.losses.back());
    CHECK(dense.terminal_loss < dense.losses.front());
    CHECK(dense.rank1_floor > 0.0); // random 4x4 targets are never rank 1

    FitKernelResult line = fit_kernel(FilterVariant::implicit_1d, {6}, 60, 0.05, 11);
    CHECK(line.terminal_loss < line.losses.front());
    CHECK(line.rank1_floor == 0.0); // no separability constraint on one axis

    CHECK_THROWS(fit_kernel(FilterVariant::implicit_1d, {}, 10, 0.05, 1));
    CHECK_THROWS(fit_kernel(FilterVariant::implicit_1d, {6}, 0, 0.05, 1));
}

TEST_CASE("memory benchmark reports token-independent parameter counts") {
    for (const std::string mixer : {"attention", "hyena", "hyena_1d", "hyena_product"}) {
        auto rows = bench_mem({16, 64}, mixer, 8, 2, 3);
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].mixer == mixer);
        CHECK(rows[0].tokens == 16);
        CHECK(rows[1].tokens == 64);
        CHECK(rows[0].param_count > 0);
        CHECK(rows[0].param_count == rows[1].param_count);
        CHECK(rows[0].peak_bytes > 0);
        CHECK(rows[1].peak_bytes > rows[0].peak_bytes);
    }
    CHECK_THROWS(bench_mem({12}, "hyena", 8, 2, 3)); // not a square grid
    CHECK_THROWS(bench_mem({16}, "mamba", 8, 2, 3));
    CHECK_THROWS(bench_mem({}, "hyena", 8, 2, 3));
}

TEST_CASE("time benchmark returns one median per token count") {
    auto rows = bench_time({16, 64}, "hyena_1d", 8, 2, 3, 1, 3);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].median_ms >= 0.0);
    CHECK(rows[1].median_ms >= 0.0);
    CHECK(rows[0].mixer == "hyena_1d");
    CHECK_THROWS(bench_time({16}, "hyena", 8, 2, 3, 1, 0));
}

TEST_CASE("log-log slope recovers exact power laws") {
    std::vector<std::pair<double, double>> quadratic{{2, 12}, {4, 48}, {8, 192}, {16, 768}};
    CHECK(log_log_slope(quadratic) == doctest::Approx(2.0).epsilon(1e-9));
    std::vector<std::pair<double, double>> linear{{64, 640}, {256, 2560}, {1024, 10240}};
    CHECK(log_log_slope(linear) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_THROWS(log_log_slope({{1.0, 1.0}}));
    CHECK_THROWS(log_log_slope({{1.0, -1.0}, {2.0, 4.0}}));
}
