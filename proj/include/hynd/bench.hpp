#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hynd/backbone.hpp"
#include "hynd/filtergen.hpp"

namespace hynd {

/// Dataset plus the label alphabet size (backbone training only needs the
/// former; loaders validate against the latter).
struct LabeledData {
    Dataset data;
    std::size_t class_count = 0;
};

/// Concatenated 3073-byte records: label byte, then 3072 channel-major pixel
/// bytes scaled by 1/255. limit = 0 loads everything.
LabeledData load_cifar(const std::string& path, std::size_t limit = 0,
                       std::size_t class_count = 10);

/// Oriented stripe patterns on a 32x32 canvas; the class is the stripe
/// orientation bucket. Exactly balanced (`i % classes`) and bit-identical
/// per seed.
LabeledData synth_dataset(std::uint64_t seed, std::size_t count, std::size_t classes);

// ---- report emission ---------------------------------------------------------

struct ReportTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

/// Header plus rows; every row must match the column count.
void write_csv(const ReportTable& table, const std::string& path);

struct ChartSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;
};

/// Self-contained SVG line chart; log_log switches both axes to log10 (all
/// coordinates must then be positive).
void write_svg_chart(const std::vector<ChartSeries>& series, const std::string& title,
                     const std::string& x_label, const std::string& y_label, bool log_log,
                     const std::string& path);

// ---- experiments ---------------------------------------------------------------

struct FitKernelResult {
    std::vector<double> losses;
    double terminal_loss = 0.0;
    /// Mean-squared error of the best rank-1 approximation of the target
    /// (singular-value tail energy / element count); separable generators
    /// can never fit below this.
    double rank1_floor = 0.0;
};

/// Fits an implicit generator to a fixed random target kernel over the given
/// axes by gradient descent on the generator parameters.
FitKernelResult fit_kernel(FilterVariant variant, const Shape& axes, std::size_t steps,
                           double lr, std::uint64_t seed);

struct MemRow {
    std::size_t tokens = 0;
    std::string mixer;
    std::uint64_t peak_bytes = 0;
    std::uint64_t live_bytes = 0;
    std::size_t param_count = 0;
};

/// Peak tensor bytes allocated across one forward+backward of a single mixer
/// block at each token count (batch 1). mixer: attention | hyena | hyena_1d |
/// hyena_product; the hyena grid kinds need square token counts.
std::vector<MemRow> bench_mem(const std::vector<std::size_t>& token_counts,
                              const std::string& mixer, std::size_t channels,
                              std::size_t heads, std::uint64_t seed);

struct TimeRow {
    std::size_t tokens = 0;
    std::string mixer;
    double median_ms = 0.0;
};

/// Median wall-clock of `repeats` eval-mode block forwards after `warmups`
/// discarded runs.
std::vector<TimeRow> bench_time(const std::vector<std::size_t>& token_counts,
                                const std::string& mixer, std::size_t channels,
                                std::size_t heads, std::uint64_t seed,
                                std::size_t warmups = 2, std::size_t repeats = 5);

/// Least-squares slope of log(y) against log(x); the memory-scaling
/// certificates compare it against linear/quadratic references.
double log_log_slope(const std::vector<std::pair<double, double>>& points);

} // namespace hynd
