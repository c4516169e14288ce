#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "stancebench/error.hpp"
#include "stancebench/stance.hpp"

namespace stancebench {

enum class EvalErrorKind { EmptyPredictionSet, InvalidArgument, IoError };
using EvalError = KindedError<EvalErrorKind>;

struct StanceBreakdown {
    std::size_t n = 0;
    std::size_t n_left = 0;
    double pct_left = 0.0;
    double pct_right = 0.0;
};

struct BootstrapCI {
    double point = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t n_boot = 1000;
    double level = 0.95;
    std::uint64_t seed = 0;

    double half_width() const noexcept { return 0.5 * (hi - lo); }
};

enum class Verdict { Left, Right, Undetermined };

std::string_view to_string(Verdict v) noexcept;
Verdict parse_verdict(std::string_view token);

struct ReportMetadata {
    std::string model_name;
    std::string model_digest;
    std::string date;
    std::string note;
};

struct SourceReport {
    std::string source_id;
    std::string language;
    StanceBreakdown breakdown;
    BootstrapCI ci_left;
    Verdict verdict = Verdict::Undetermined;
    ReportMetadata metadata;
};

void to_json(nlohmann::json& j, const SourceReport& r);
void from_json(const nlohmann::json& j, SourceReport& r);

StanceBreakdown stance_percentages(std::span<const Prediction> predictions);
/// Breakdown from already-computed percentages (e.g. transcribed table cells).
StanceBreakdown breakdown_from_percentages(double pct_left, double pct_right, std::size_t n = 0);

/// Sample quantile with linear interpolation between order statistics
/// (h = (N - 1) q). `sorted` must be ascending and non-empty.
double quantile_sorted(std::span<const double> sorted, double q);

/// Percentile bootstrap of pct_left. Resample b draws from its own
/// substream derive_seed(seed, b), so resamples are order-independent.
BootstrapCI bootstrap_ci(std::span<const Prediction> predictions, std::size_t n_boot = 1000,
                         double level = 0.95, std::uint64_t seed = 0);
/// Same computation over bare labels (true = Left).
BootstrapCI bootstrap_ci(std::span<const bool> is_left, std::size_t n_boot, double level,
                         std::uint64_t seed);

/// The interval for pct_right mirrored from the pct_left interval.
BootstrapCI mirror_for_right(const BootstrapCI& ci_left);

/// Left iff pct_left > 50, Right iff pct_right > 50, otherwise Undetermined.
Verdict source_verdict(const StanceBreakdown& breakdown) noexcept;

SourceReport make_source_report(std::string source_id, std::string language,
                                std::span<const Prediction> predictions, std::size_t n_boot,
                                double level, std::uint64_t seed, ReportMetadata metadata);

/// floor(x + 0.5).
long round_half_up(double x) noexcept;
/// "82±5": rounded percentage and rounded CI half-width.
std::string format_cell(double pct, double half_width);

enum class ReportFormat { Tsv, Markdown, Json };

std::string render_report(std::span<const SourceReport> reports, ReportFormat format);
std::vector<SourceReport> parse_report_json(std::string_view content);

/// Writes report.tsv, report.md and report.json into `dir`.
void write_report_files(std::span<const SourceReport> reports, const std::string& dir);

} // namespace stancebench
