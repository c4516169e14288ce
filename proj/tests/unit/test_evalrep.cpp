#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"

#include "stancebench/evalrep.hpp"

using namespace stancebench;

namespace {

std::vector<Prediction> preds(std::size_t n_left, std::size_t n_right) {
    std::vector<Prediction> out;
    for (std::size_t i = 0; i < n_left + n_right; ++i) {
        const bool left = i < n_left;
        out.push_back({"a" + std::to_string(i), left ? Stance::Left : Stance::Right, left ? 0.9 : 0.1});
    }
    return out;
}

SourceReport sample_report(std::string id, std::size_t l, std::size_t r, std::uint64_t seed) {
    const auto p = preds(l, r);
    return make_source_report(std::move(id), "en", p, 200, 0.95, seed, {"en-mono", "abc123", "2026-01-02", ""});
}

} // namespace

TEST_CASE("stance percentages") {
    auto b = stance_percentages(preds(82, 18));
    CHECK(b.n == 100);
    CHECK(b.n_left == 82);
    CHECK(b.pct_left == 82.0);
    CHECK(b.pct_right == 18.0);
    b = stance_percentages(preds(7, 0));
    CHECK(b.pct_left == 100.0);
    CHECK(b.pct_right == 0.0);
    b = stance_percentages(preds(1, 2));
    CHECK(b.pct_left == doctest::Approx(100.0 / 3).epsilon(1e-15));
    CHECK(b.pct_left + b.pct_right == doctest::Approx(100.0).epsilon(1e-15));
    CHECK_THROWS_AS(stance_percentages({}), EvalError);
    CHECK_THROWS_AS(breakdown_from_percentages(60, 50), EvalError);
    CHECK_THROWS_AS(breakdown_from_percentages(-1, 101), EvalError);
}

TEST_CASE("quantile interpolation") {
    const std::vector<double> s{1, 2, 3, 4};
    CHECK(quantile_sorted(s, 0.0) == 1.0);
    CHECK(quantile_sorted(s, 1.0) == 4.0);
    CHECK(quantile_sorted(s, 0.5) == 2.5);
    CHECK(quantile_sorted(s, 0.25) == doctest::Approx(1.75));
}

TEST_CASE("bootstrap interval") {
    const auto all_left = bootstrap_ci(preds(30, 0), 500, 0.95, 1);
    CHECK(all_left.lo == 100.0);
    CHECK(all_left.hi == 100.0);
    CHECK(all_left.point == 100.0);

    const auto p = preds(82, 18);
    const auto ci = bootstrap_ci(p, 1000, 0.95, 7);
    CHECK(ci.point == 82.0);
    CHECK(ci.lo <= ci.point);
    CHECK(ci.point <= ci.hi);
    // normal approximation: 1.96 * sqrt(.82 * .18 / 100) * 100 = 7.5
    CHECK(ci.half_width() > 6.0);
    CHECK(ci.half_width() < 9.0);

    const auto again = bootstrap_ci(p, 1000, 0.95, 7);
    CHECK(again.lo == ci.lo);
    CHECK(again.hi == ci.hi);

    const auto wide = bootstrap_ci(p, 1000, 0.99, 7);
    const auto narrow = bootstrap_ci(p, 1000, 0.90, 7);
    CHECK(wide.lo <= ci.lo);
    CHECK(ci.lo <= narrow.lo);
    CHECK(narrow.hi <= ci.hi);
    CHECK(ci.hi <= wide.hi);

    // independent resampling oracle
    std::vector<double> stats;
    for (std::size_t b = 0; b < 1000; ++b) {
        Rng rng(derive_seed(7, b));
        int c = 0;
        for (int i = 0; i < 100; ++i) c += rng.uniform_index(100) < 82 ? 1 : 0;
        stats.push_back(c);
    }
    std::sort(stats.begin(), stats.end());
    auto q = [&](double x) {
        const double h = 999 * x;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        return stats[lo] + (h - lo) * (stats[std::min<std::size_t>(lo + 1, 999)] - stats[lo]);
    };
    CHECK(ci.lo == doctest::Approx(std::min(q(0.025), 82.0)).epsilon(1e-12));
    CHECK(ci.hi == doctest::Approx(std::max(q(0.975), 82.0)).epsilon(1e-12));

    const auto r = mirror_for_right(ci);
    CHECK(r.point == 18.0);
    CHECK(r.lo == doctest::Approx(100 - ci.hi));
    CHECK(r.hi == doctest::Approx(100 - ci.lo));

    CHECK_THROWS_AS(bootstrap_ci(p, 100, 1.5, 1), EvalError);
    CHECK_THROWS_AS(bootstrap_ci(p, 0, 0.95, 1), EvalError);
}

TEST_CASE("verdict rule") {
    CHECK(source_verdict(breakdown_from_percentages(50.0, 50.0)) == Verdict::Undetermined);
    CHECK(source_verdict(breakdown_from_percentages(50.5, 49.5)) == Verdict::Left);
    CHECK(source_verdict(breakdown_from_percentages(49.0, 51.0)) == Verdict::Right);
    CHECK(source_verdict(stance_percentages(preds(2, 2))) == Verdict::Undetermined);

    // invariant under permutation; exactly one verdict per cell
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        auto p = preds(rng.uniform_index(20), rng.uniform_index(20) + 1);
        const auto v = source_verdict(stance_percentages(p));
        rng.shuffle(p.begin(), p.end());
        CHECK(source_verdict(stance_percentages(p)) == v);
        const auto b = stance_percentages(p);
        const int hits = (b.pct_left > 50) + (b.pct_right > 50) + (b.pct_left == 50);
        CHECK(hits == 1);
    }
    for (auto v : {Verdict::Left, Verdict::Right, Verdict::Undetermined}) CHECK(parse_verdict(to_string(v)) == v);
}

TEST_CASE("cell formatting") {
    CHECK(round_half_up(4.5) == 5);
    CHECK(round_half_up(4.49) == 4);
    CHECK(format_cell(82.0, 4.6) == "82±5");
    CHECK(format_cell(17.5, 0.4) == "18±0");
    CHECK(format_cell(100.0, 0.0) == "100±0");
}

TEST_CASE("report rendering and round trip") {
    CHECK(render_report({}, ReportFormat::Tsv) == "source_id\tlanguage\tmodel\tn\tleft\tright\tverdict\n");

    const std::vector<SourceReport> reps{sample_report("src_a", 82, 18, 1), sample_report("src_b", 10, 30, 2),
                                         sample_report("src_c", 5, 5, 3)};
    CHECK(reps[0].verdict == Verdict::Left);
    CHECK(reps[1].verdict == Verdict::Right);
    CHECK(reps[2].verdict == Verdict::Undetermined);

    const auto tsv = render_report(reps, ReportFormat::Tsv);
    CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 4);
    const auto md = render_report(reps, ReportFormat::Markdown);
    CHECK(md.find("**82±") != std::string::npos);
    CHECK(md.find("**75±") != std::string::npos);
    CHECK(md.find("**25±") == std::string::npos);

    const auto js = render_report(reps, ReportFormat::Json);
    const auto back = parse_report_json(js);
    REQUIRE(back.size() == 3);
    CHECK(render_report(back, ReportFormat::Json) == js);
    CHECK(back[1].source_id == "src_b");
    CHECK(back[1].metadata.model_digest == "abc123");
    CHECK(back[0].ci_left.lo == reps[0].ci_left.lo);

    testutil::TempDir dir;
    write_report_files(reps, dir.path().string());
    CHECK(testutil::read_file(dir.file("report.json")) == js);
    CHECK(testutil::read_file(dir.file("report.tsv")) == tsv);
    CHECK(testutil::read_file(dir.file("report.md")) == md);
}
