#include "hynd/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <stdexcept>

#include "hynd/memory.hpp"
#include "hynd/numcore.hpp"
#include "hynd/ops.hpp"
#include "hynd/tape.hpp"

namespace hynd {

namespace {

[[noreturn]] void fail(const std::string& why) { throw std::invalid_argument("bench: " + why); }

void need(bool ok, const std::string& why) {
    if (!ok) fail(why);
}

Tensor random_tokens(Shape shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = dist(rng);
    return Tensor::from_data(std::move(shape), std::move(values));
}

} // namespace

LabeledData load_cifar(const std::string& path, std::size_t limit, std::size_t class_count) {
    constexpr std::size_t kRecord = 3073; // label byte + 32*32*3 pixels
    constexpr std::size_t kSide = 32;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("bench: cannot read " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    need(!bytes.empty(), path + " is empty");
    need(bytes.size() % kRecord == 0,
         path + " length is not a multiple of the 3073-byte record");

    std::size_t records = bytes.size() / kRecord;
    if (limit > 0) records = std::min(records, limit);

    LabeledData out;
    out.class_count = class_count;
    out.data.labels.resize(records);
    std::vector<double> pixels(records * kSide * kSide * 3);
    for (std::size_t r = 0; r < records; ++r) {
        const unsigned char* rec = bytes.data() + r * kRecord;
        need(rec[0] < class_count, "label byte out of range in record " + std::to_string(r));
        out.data.labels[r] = rec[0];
        // Records are channel-major; tensors are channel-last.
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t p = 0; p < kSide * kSide; ++p)
                pixels[(r * kSide * kSide + p) * 3 + c] =
                    static_cast<double>(rec[1 + c * kSide * kSide + p]) / 255.0;
    }
    out.data.images = Tensor::from_data({records, kSide, kSide, 3}, std::move(pixels));
    return out;
}

LabeledData synth_dataset(std::uint64_t seed, std::size_t count, std::size_t classes) {
    need(classes >= 2, "need at least two classes");
    need(count >= 1, "need at least one sample");
    constexpr std::size_t kSide = 32;
    constexpr double kPi = 3.14159265358979323846;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    LabeledData out;
    out.class_count = classes;
    out.data.labels.resize(count);
    std::vector<double> pixels(count * kSide * kSide * 3);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t label = i % classes; // exact balance
        out.data.labels[i] = label;
        const double angle = kPi * static_cast<double>(label) / static_cast<double>(classes);
        const double freq = 2.0 + 2.0 * unit(rng);
        const double phase = 2.0 * kPi * unit(rng);
        const double ci = std::cos(angle), si = std::sin(angle);
        for (std::size_t row = 0; row < kSide; ++row)
            for (std::size_t col = 0; col < kSide; ++col) {
                const double proj = ci * static_cast<double>(row) + si * static_cast<double>(col);
                const double wave =
                    0.5 + 0.45 * std::sin(2.0 * kPi * freq * proj / kSide + phase);
                for (std::size_t c = 0; c < 3; ++c) {
                    const double noisy = wave + 0.03 * (unit(rng) - 0.5);
                    pixels[((i * kSide + row) * kSide + col) * 3 + c] =
                        std::clamp(noisy, 0.0, 1.0);
                }
            }
    }
    out.data.images = Tensor::from_data({count, kSide, kSide, 3}, std::move(pixels));
    return out;
}

// ---- report emission ---------------------------------------------------------

void write_csv(const ReportTable& table, const std::string& path) {
    need(!table.columns.empty(), "csv needs at least one column");
    auto check_cell = [](const std::string& cell) {
        need(cell.find(',') == std::string::npos && cell.find('\n') == std::string::npos,
             "csv cells must not contain commas or newlines");
    };
    std::ofstream out(path);
    if (!out) throw std::runtime_error("bench: cannot write " + path);
    for (std::size_t i = 0; i < table.columns.size(); ++i) {
        check_cell(table.columns[i]);
        out << table.columns[i] << (i + 1 < table.columns.size() ? "," : "\n");
    }
    for (const auto& row : table.rows) {
        need(row.size() == table.columns.size(), "csv row width differs from the header");
        for (std::size_t i = 0; i < row.size(); ++i) {
            check_cell(row[i]);
            out << row[i] << (i + 1 < row.size() ? "," : "\n");
        }
    }
    if (!out) throw std::runtime_error("bench: failed while writing " + path);
}

namespace {

std::string format_number(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

} // namespace

void write_svg_chart(const std::vector<ChartSeries>& series, const std::string& title,
                     const std::string& x_label, const std::string& y_label, bool log_log,
                     const std::string& path) {
    const double width = 640, height = 440;
    const double left = 80, right = width - 170, top = 50, bottom = height - 60;

    auto tx = [log_log](double v) {
        if (!log_log) return v;
        if (v <= 0.0) fail("log chart needs positive coordinates");
        return std::log10(v);
    };

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            xmin = std::min(xmin, tx(x));
            xmax = std::max(xmax, tx(x));
            ymin = std::min(ymin, tx(y));
            ymax = std::max(ymax, tx(y));
        }
    if (xmin > xmax) { xmin = 0; xmax = 1; ymin = 0; ymax = 1; } // empty chart
    if (xmax - xmin < 1e-12) { xmin -= 0.5; xmax += 0.5; }
    if (ymax - ymin < 1e-12) { ymin -= 0.5; ymax += 0.5; }

    auto px = [&](double v) { return left + (tx(v) - xmin) / (xmax - xmin) * (right - left); };
    auto py = [&](double v) { return bottom - (tx(v) - ymin) / (ymax - ymin) * (bottom - top); };

    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("bench: cannot write " + path);

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << width << " " << height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << (left + right) / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-size=\"15\">" << title << "</text>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right << "\" y2=\""
        << bottom << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
        << bottom << "\" stroke=\"black\"/>\n";

    for (int tick = 0; tick <= 4; ++tick) {
        const double fx = xmin + (xmax - xmin) * tick / 4.0;
        const double fy = ymin + (ymax - ymin) * tick / 4.0;
        const double gx = left + (right - left) * tick / 4.0;
        const double gy = bottom - (bottom - top) * tick / 4.0;
        const double vx = log_log ? std::pow(10.0, fx) : fx;
        const double vy = log_log ? std::pow(10.0, fy) : fy;
        out << "<line x1=\"" << gx << "\" y1=\"" << bottom << "\" x2=\"" << gx << "\" y2=\""
            << bottom + 4 << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << gx << "\" y=\"" << bottom + 18 << "\" text-anchor=\"middle\">"
            << format_number(vx) << "</text>\n";
        out << "<line x1=\"" << left - 4 << "\" y1=\"" << gy << "\" x2=\"" << left << "\" y2=\""
            << gy << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << left - 8 << "\" y=\"" << gy + 4 << "\" text-anchor=\"end\">"
            << format_number(vy) << "</text>\n";
    }
    out << "<text x=\"" << (left + right) / 2 << "\" y=\"" << height - 14
        << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
    out << "<text x=\"20\" y=\"" << (top + bottom) / 2 << "\" text-anchor=\"middle\" "
        << "transform=\"rotate(-90 20 " << (top + bottom) / 2 << ")\">" << y_label
        << "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kColors[s % (sizeof kColors / sizeof kColors[0])];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const auto& [x, y] : series[s].points) out << px(x) << "," << py(y) << " ";
        out << "\"/>\n";
        for (const auto& [x, y] : series[s].points)
            out << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\""
                << color << "\"/>\n";
        const double ly = top + 18 * static_cast<double>(s);
        out << "<line x1=\"" << right + 12 << "\" y1=\"" << ly << "\" x2=\"" << right + 34
            << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << right + 40 << "\" y=\"" << ly + 4 << "\">" << series[s].label
            << "</text>\n";
    }
    out << "</svg>\n";
    if (!out) throw std::runtime_error("bench: failed while writing " + path);
}

// ---- experiments ---------------------------------------------------------------

FitKernelResult fit_kernel(FilterVariant variant, const Shape& axes, std::size_t steps,
                           double lr, std::uint64_t seed) {
    need(!axes.empty(), "fit_kernel needs at least one axis");
    need(steps >= 1, "fit_kernel needs at least one step");

    // Fixed random target, one channel; the window stays out of the way so
    // the fit measures the generator alone.
    Tensor target = random_tokens(axes, seed + 0x7a11);
    auto spec = make_implicit_filter_spec(variant, 1, 1, axes, seed, 32, WindowVariant::none);

    FitKernelResult result;
    if (axes.size() == 2) {
        const std::vector<double> sv = singular_values(target);
        double tail = 0.0;
        for (std::size_t i = 1; i < sv.size(); ++i) tail += sv[i] * sv[i];
        result.rank1_floor = tail / static_cast<double>(target.numel());
    }

    auto params = spec.parameters();
    Adam opt(params, AdamConfig{lr, 0.9, 0.999, 1e-8});
    Shape kernel_shape{1};
    for (std::size_t len : axes) kernel_shape.push_back(len);
    Tensor shaped_target = Tensor::from_data(
        kernel_shape, std::vector<double>(target.data().begin(), target.data().end()));

    result.losses.reserve(steps);
    for (std::size_t step = 0; step < steps; ++step) {
        GradTape tape;
        TapeScope scope(tape);
        Tensor loss = ops::mse(build_kernel(spec, axes, 0), shaped_target);
        result.losses.push_back(loss.value());
        opt.step(gradient_of(loss, params));
    }
    result.terminal_loss = result.losses.back();
    return result;
}

namespace {

struct BenchBlock {
    Block block;
    Shape spatial;
};

BenchBlock make_bench_block(std::size_t tokens, const std::string& mixer, std::size_t channels,
                            std::size_t heads, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-0.05, 0.05);
    auto init = [&](Shape shape) {
        std::vector<double> values(shape_numel(shape));
        for (double& v : values) v = dist(rng);
        return Tensor::from_data(std::move(shape), std::move(values), true);
    };

    BenchBlock out;
    Block& block = out.block;
    if (mixer == "attention") {
        block.kind = MixerKind::attention;
        block.attention = make_attention_mixer(channels, heads, rng());
        out.spatial = {tokens};
    } else if (mixer == "hyena" || mixer == "hyena_product" || mixer == "hyena_1d") {
        HyenaConfig cfg;
        cfg.channels = channels;
        cfg.order = 2;
        if (mixer == "hyena_1d") {
            cfg.variant = HyenaVariant::hyena_1d;
            cfg.axes_hint = {tokens};
            cfg.window = WindowVariant::one_d;
            out.spatial = {tokens};
        } else {
            const auto side = static_cast<std::size_t>(std::llround(std::sqrt(
                static_cast<double>(tokens))));
            need(side * side == tokens, "grid mixers need square token counts");
            cfg.variant = mixer == "hyena" ? HyenaVariant::hyena_nd
                                           : HyenaVariant::hyena_nd_product;
            cfg.axes_hint = {side, side};
            out.spatial = {side, side};
        }
        block.kind = mixer == "hyena_product" ? MixerKind::hyena_2d_product
                                              : (mixer == "hyena_1d" ? MixerKind::hyena_1d
                                                                      : MixerKind::hyena_2d);
        block.hyena.emplace(cfg, rng());
    } else {
        fail("unknown mixer '" + mixer + "' (attention | hyena | hyena_1d | hyena_product)");
    }
    block.norm1_gamma = Tensor::full({channels}, 1.0, true);
    block.norm1_beta = Tensor::zeros({channels}, true);
    block.norm2_gamma = Tensor::full({channels}, 1.0, true);
    block.norm2_beta = Tensor::zeros({channels}, true);
    block.mlp_w1 = init({4 * channels, channels});
    block.mlp_b1 = Tensor::zeros({4 * channels}, true);
    block.mlp_w2 = init({channels, 4 * channels});
    block.mlp_b2 = Tensor::zeros({channels}, true);
    return out;
}

} // namespace

std::vector<MemRow> bench_mem(const std::vector<std::size_t>& token_counts,
                              const std::string& mixer, std::size_t channels,
                              std::size_t heads, std::uint64_t seed) {
    need(!token_counts.empty(), "bench_mem needs at least one token count");
    std::vector<MemRow> rows;
    for (std::size_t tokens : token_counts) {
        BenchBlock bb = make_bench_block(tokens, mixer, channels, heads, seed);
        auto params = bb.block.parameters();

        MemRow row;
        row.tokens = tokens;
        row.mixer = mixer;
        for (const Tensor& p : params) row.param_count += p.numel();

        Tensor input = random_tokens({1, tokens, channels}, seed + tokens);
        Tensor zero_target = Tensor::zeros({1, tokens, channels});
        reset_peak_memory();
        const std::uint64_t before = memory_stats().live_bytes;
        {
            GradTape tape;
            TapeScope scope(tape);
            Tensor loss = ops::mse(bb.block.forward(input, bb.spatial), zero_target);
            gradient_of(loss, params);
        }
        row.peak_bytes = memory_stats().peak_bytes - before;
        row.live_bytes = before;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<TimeRow> bench_time(const std::vector<std::size_t>& token_counts,
                                const std::string& mixer, std::size_t channels,
                                std::size_t heads, std::uint64_t seed, std::size_t warmups,
                                std::size_t repeats) {
    need(!token_counts.empty(), "bench_time needs at least one token count");
    need(repeats >= 1, "bench_time needs at least one repetition");
    std::vector<TimeRow> rows;
    for (std::size_t tokens : token_counts) {
        BenchBlock bb = make_bench_block(tokens, mixer, channels, heads, seed);
        if (bb.block.hyena) bb.block.hyena->set_training(false);
        Tensor input = random_tokens({1, tokens, channels}, seed + tokens);

        NoTapeScope quiet;
        for (std::size_t i = 0; i < warmups; ++i) bb.block.forward(input, bb.spatial);
        std::vector<double> samples(repeats);
        for (double& sample : samples) {
            const auto start = std::chrono::steady_clock::now();
            bb.block.forward(input, bb.spatial);
            const auto stop = std::chrono::steady_clock::now();
            sample = std::chrono::duration<double, std::milli>(stop - start).count();
        }
        std::sort(samples.begin(), samples.end());
        const double median = repeats % 2 == 1
                                  ? samples[repeats / 2]
                                  : 0.5 * (samples[repeats / 2 - 1] + samples[repeats / 2]);
        rows.push_back({tokens, mixer, median});
    }
    return rows;
}

double log_log_slope(const std::vector<std::pair<double, double>>& points) {
    need(points.size() >= 2, "slope needs at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [x, y] : points) {
        need(x > 0.0 && y > 0.0, "log-log slope needs positive points");
        const double lx = std::log(x), ly = std::log(y);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double n = static_cast<double>(points.size());
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

} // namespace hynd
