#include "stancebench/evalrep.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "stancebench/rng.hpp"

namespace stancebench {

namespace {

std::string cell_pair(const SourceReport& r, bool left) {
    const double pct = left ? r.breakdown.pct_left : r.breakdown.pct_right;
    return format_cell(pct, r.ci_left.half_width());
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw EvalError(EvalErrorKind::IoError, "cannot write " + path.string());
    out << content;
    if (!out) throw EvalError(EvalErrorKind::IoError, "write failed for " + path.string());
}

} // namespace

std::string_view to_string(Verdict v) noexcept {
    switch (v) {
    case Verdict::Left: return "Left";
    case Verdict::Right: return "Right";
    case Verdict::Undetermined: return "Undetermined";
    }
    return "Undetermined";
}

Verdict parse_verdict(std::string_view token) {
    if (token == "Left") return Verdict::Left;
    if (token == "Right") return Verdict::Right;
    if (token == "Undetermined") return Verdict::Undetermined;
    throw EvalError(EvalErrorKind::InvalidArgument, "unknown verdict '" + std::string(token) + "'");
}

void to_json(nlohmann::json& j, const SourceReport& r) {
    j = nlohmann::json{
        {"source_id", r.source_id},
        {"language", r.language},
        {"n", r.breakdown.n},
        {"n_left", r.breakdown.n_left},
        {"pct_left", r.breakdown.pct_left},
        {"pct_right", r.breakdown.pct_right},
        {"ci_left",
         {{"point", r.ci_left.point},
          {"lo", r.ci_left.lo},
          {"hi", r.ci_left.hi},
          {"n_boot", r.ci_left.n_boot},
          {"level", r.ci_left.level},
          {"seed", r.ci_left.seed}}},
        {"verdict", to_string(r.verdict)},
        {"model", r.metadata.model_name},
        {"model_digest", r.metadata.model_digest},
        {"date", r.metadata.date},
        {"note", r.metadata.note},
    };
}

void from_json(const nlohmann::json& j, SourceReport& r) {
    r.source_id = j.at("source_id").get<std::string>();
    r.language = j.at("language").get<std::string>();
    r.breakdown.n = j.at("n").get<std::size_t>();
    r.breakdown.n_left = j.at("n_left").get<std::size_t>();
    r.breakdown.pct_left = j.at("pct_left").get<double>();
    r.breakdown.pct_right = j.at("pct_right").get<double>();
    const auto& ci = j.at("ci_left");
    r.ci_left.point = ci.at("point").get<double>();
    r.ci_left.lo = ci.at("lo").get<double>();
    r.ci_left.hi = ci.at("hi").get<double>();
    r.ci_left.n_boot = ci.at("n_boot").get<std::size_t>();
    r.ci_left.level = ci.at("level").get<double>();
    r.ci_left.seed = ci.at("seed").get<std::uint64_t>();
    r.verdict = parse_verdict(j.at("verdict").get<std::string>());
    r.metadata.model_name = j.value("model", "");
    r.metadata.model_digest = j.value("model_digest", "");
    r.metadata.date = j.value("date", "");
    r.metadata.note = j.value("note", "");
}

StanceBreakdown stance_percentages(std::span<const Prediction> predictions) {
    if (predictions.empty()) {
        throw EvalError(EvalErrorKind::EmptyPredictionSet, "no predictions");
    }
    StanceBreakdown b;
    b.n = predictions.size();
    b.n_left = static_cast<std::size_t>(std::count_if(
        predictions.begin(), predictions.end(), [](const Prediction& p) { return p.stance == Stance::Left; }));
    b.pct_left = 100.0 * static_cast<double>(b.n_left) / static_cast<double>(b.n);
    b.pct_right = 100.0 * static_cast<double>(b.n - b.n_left) / static_cast<double>(b.n);
    return b;
}

StanceBreakdown breakdown_from_percentages(double pct_left, double pct_right, std::size_t n) {
    if (!(pct_left >= 0.0 && pct_left <= 100.0 && pct_right >= 0.0 && pct_right <= 100.0) ||
        std::abs(pct_left + pct_right - 100.0) > 1e-9) {
        throw EvalError(EvalErrorKind::InvalidArgument, "percentages must lie in [0,100] and sum to 100");
    }
    StanceBreakdown b;
    b.n = n;
    b.n_left = static_cast<std::size_t>(std::llround(pct_left * static_cast<double>(n) / 100.0));
    b.pct_left = pct_left;
    b.pct_right = pct_right;
    return b;
}

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw EvalError(EvalErrorKind::InvalidArgument, "quantile of empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw EvalError(EvalErrorKind::InvalidArgument, "quantile outside [0,1]");
    const double h = static_cast<double>(sorted.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

BootstrapCI bootstrap_ci(std::span<const bool> is_left, std::size_t n_boot, double level, std::uint64_t seed) {
    if (is_left.empty()) throw EvalError(EvalErrorKind::EmptyPredictionSet, "no predictions");
    if (n_boot == 0 || !(level > 0.0 && level < 1.0)) {
        throw EvalError(EvalErrorKind::InvalidArgument, "n_boot must be >= 1 and level in (0,1)");
    }
    const std::size_t n = is_left.size();
    const auto n_left = static_cast<std::size_t>(std::count(is_left.begin(), is_left.end(), true));
    std::vector<double> stats(n_boot);
    for (std::size_t b = 0; b < n_boot; ++b) {
        Rng rng(derive_seed(seed, b));
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) count += is_left[rng.uniform_index(n)] ? 1 : 0;
        stats[b] = 100.0 * static_cast<double>(count) / static_cast<double>(n);
    }
    std::sort(stats.begin(), stats.end());
    BootstrapCI ci;
    ci.point = 100.0 * static_cast<double>(n_left) / static_cast<double>(n);
    ci.lo = std::min(quantile_sorted(stats, (1.0 - level) / 2.0), ci.point);
    ci.hi = std::max(quantile_sorted(stats, 1.0 - (1.0 - level) / 2.0), ci.point);
    ci.n_boot = n_boot;
    ci.level = level;
    ci.seed = seed;
    return ci;
}

BootstrapCI bootstrap_ci(std::span<const Prediction> predictions, std::size_t n_boot, double level,
                         std::uint64_t seed) {
    std::vector<char> flags;
    flags.reserve(predictions.size());
    for (const auto& p : predictions) flags.push_back(p.stance == Stance::Left);
    auto bools = std::make_unique<bool[]>(flags.size());
    std::copy(flags.begin(), flags.end(), bools.get());
    return bootstrap_ci(std::span<const bool>(bools.get(), flags.size()), n_boot, level, seed);
}

BootstrapCI mirror_for_right(const BootstrapCI& ci_left) {
    BootstrapCI r = ci_left;
    r.point = 100.0 - ci_left.point;
    r.lo = 100.0 - ci_left.hi;
    r.hi = 100.0 - ci_left.lo;
    return r;
}

Verdict source_verdict(const StanceBreakdown& breakdown) noexcept {
    if (breakdown.pct_left > 50.0) return Verdict::Left;
    if (breakdown.pct_right > 50.0) return Verdict::Right;
    return Verdict::Undetermined;
}

SourceReport make_source_report(std::string source_id, std::string language, std::span<const Prediction> predictions,
                                std::size_t n_boot, double level, std::uint64_t seed, ReportMetadata metadata) {
    SourceReport r;
    r.source_id = std::move(source_id);
    r.language = std::move(language);
    r.breakdown = stance_percentages(predictions);
    r.ci_left = bootstrap_ci(predictions, n_boot, level, seed);
    r.verdict = source_verdict(r.breakdown);
    r.metadata = std::move(metadata);
    return r;
}

long round_half_up(double x) noexcept {
    return static_cast<long>(std::floor(x + 0.5));
}

std::string format_cell(double pct, double half_width) {
    return std::to_string(round_half_up(pct)) + "±" + std::to_string(round_half_up(half_width));
}

std::string render_report(std::span<const SourceReport> reports, ReportFormat format) {
    switch (format) {
    case ReportFormat::Json: {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& r : reports) j.push_back(r);
        return j.dump(2) + "\n";
    }
    case ReportFormat::Tsv: {
        std::string out = "source_id\tlanguage\tmodel\tn\tleft\tright\tverdict\n";
        for (const auto& r : reports) {
            out += r.source_id + '\t' + r.language + '\t' + r.metadata.model_name + '\t' +
                   std::to_string(r.breakdown.n) + '\t' + cell_pair(r, true) + '\t' + cell_pair(r, false) + '\t' +
                   std::string(to_string(r.verdict)) + '\n';
        }
        return out;
    }
    case ReportFormat::Markdown: {
        std::string out = "| Source | Language | Model | n | Left | Right |\n"
                          "|---|---|---|---:|---:|---:|\n";
        for (const auto& r : reports) {
            std::string left = cell_pair(r, true);
            std::string right = cell_pair(r, false);
            if (r.verdict == Verdict::Left) left = "**" + left + "**";
            if (r.verdict == Verdict::Right) right = "**" + right + "**";
            out += "| " + r.source_id + " | " + r.language + " | " + r.metadata.model_name + " | " +
                   std::to_string(r.breakdown.n) + " | " + left + " | " + right + " |\n";
        }
        return out;
    }
    }
    return {};
}

std::vector<SourceReport> parse_report_json(std::string_view content) {
    const auto j = nlohmann::json::parse(content);
    return j.get<std::vector<SourceReport>>();
}

void write_report_files(std::span<const SourceReport> reports, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw EvalError(EvalErrorKind::IoError, "cannot create " + dir + ": " + ec.message());
    const std::filesystem::path base(dir);
    write_file(base / "report.tsv", render_report(reports, ReportFormat::Tsv));
    write_file(base / "report.md", render_report(reports, ReportFormat::Markdown));
    write_file(base / "report.json", render_report(reports, ReportFormat::Json));
}

} // namespace stancebench
