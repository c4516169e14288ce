#include <sys/wait.h>

#include <cstdlib>

#include "doctest.h"
#include "helpers.hpp"

#include "stancebench/hashing.hpp"
#include "stancebench/pipeline.hpp"
#include "stancebench/probe.hpp"

using namespace stancebench;
namespace fs = std::filesystem;

namespace {

const fs::path kSynthetic = fs::path(STANCEBENCH_DATA_DIR) / "synthetic";

// Digest of report.json for the synthetic corpus at seed 7.
const std::string kSyntheticReportDigest = "47f1c0415951292f302f48d8208e86f85f3fcb80279af6dd4d13f82a479e3c66";

nlohmann::json synthetic_json(const fs::path& out) {
    auto j = nlohmann::json::parse(testutil::read_file((kSynthetic / "config.json").string()));
    j["paths"]["output_dir"] = out.string();
    return j;
}

nlohmann::json minimal_json() {
    return {{"paths",
             {{"manifest", (kSynthetic / "manifest.tsv").string()},
              {"articles", (kSynthetic / "articles.jsonl").string()}}}};
}

int run_cli(const std::string& args) {
    const int rc = std::system((std::string(STANCEBENCH_CLI) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

} // namespace

TEST_CASE("config defaults and validation") {
    testutil::TempDir dir;
    const auto c = config_from_json(minimal_json(), dir.path());
    CHECK(c.n_boot == 1000);
    CHECK(c.level == 0.95);
    CHECK(c.topic_counts == std::vector<std::size_t>{10, 15});
    CHECK(c.backend.kind == BackendKind::HashedNgram);
    CHECK(c.train.batch_size == 8);
    CHECK(c.train.weight_decay == 0.01);
    CHECK(c.lda_seed != c.split_seed);
    CHECK(c.to_json().at("eval").at("n_boot") == 1000);

    const auto o1 = config_from_json(minimal_json(), dir.path(), 99);
    const auto o2 = config_from_json(minimal_json(), dir.path(), 99);
    CHECK(o1.seed == 99);
    CHECK(o1.lda_seed == o2.lda_seed);
    CHECK(o1.lda_seed != c.lda_seed);

    auto missing = minimal_json();
    missing["paths"]["manifest"] = (dir.path() / "nope.tsv").string();
    try {
        config_from_json(missing, dir.path());
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.kind() == ConfigErrorKind::MissingPath);
        CHECK(e.field() == "paths.manifest");
    }
    auto bad_level = minimal_json();
    bad_level["eval"]["level"] = 1.5;
    try {
        config_from_json(bad_level, dir.path());
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.kind() == ConfigErrorKind::InvalidValue);
        CHECK(e.field() == "eval.level");
    }
    testutil::write_file(dir.file("broken.json"), "{ not json");
    try {
        validate_config(dir.file("broken.json"));
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.kind() == ConfigErrorKind::ParseError);
    }
    for (auto cmd : {Command::Ingest, Command::Clean, Command::Topics, Command::Filter, Command::Split,
                     Command::Train, Command::Eval, Command::Probe, Command::Report, Command::Pipeline})
        CHECK(parse_command(to_string(cmd)) == cmd);
    CHECK(!parse_command("deploy").has_value());
}

TEST_CASE("stages refuse to run without their inputs") {
    testutil::TempDir dir;
    auto j = minimal_json();
    j["paths"]["output_dir"] = (dir.path() / "out").string();
    const auto c = config_from_json(j, dir.path());
    try {
        run_stage(Command::Eval, c, {false, true});
        FAIL("expected MissingArtifact");
    } catch (const PipelineError& e) {
        CHECK(e.kind() == PipelineErrorKind::MissingArtifact);
    }
    CHECK(run_command(Command::Train, c, {false, true}) == 3);

    fs::create_directories(dir.path() / "out");
    testutil::write_file((dir.path() / "out" / "run.lock").string(), "");
    CHECK(run_command(Command::Ingest, c, {false, true}) == 4);
}

TEST_CASE("pipeline on the synthetic corpus") {
    testutil::TempDir dir;
    const auto whole = config_from_json(synthetic_json(dir.path() / "whole"), kSynthetic);
    REQUIRE(run_command(Command::Pipeline, whole, {false, true}) == 0);
    const auto report = (dir.path() / "whole" / "report" / "report.json").string();
    REQUIRE(fs::exists(report));
    CHECK(!fs::exists(dir.path() / "whole" / "run.lock"));
    CHECK(fs::exists(dir.path() / "whole" / "provenance.json"));
    CHECK(sha256_file(report) == kSyntheticReportDigest);

    const auto reports = nlohmann::json::parse(testutil::read_file(report));
    REQUIRE(reports.size() == 4);
    for (const auto& r : reports) {
        const std::string src = r.at("source_id");
        const std::string expected = src.back() == 't' && src[src.size() - 2] == 'l' ? "Left" : "Right";
        CHECK_MESSAGE(r.at("verdict") == expected, src);
    }

    // running the stages one by one gives the same report
    const auto staged = config_from_json(synthetic_json(dir.path() / "staged"), kSynthetic);
    for (auto cmd : {Command::Ingest, Command::Clean, Command::Topics, Command::Filter, Command::Split,
                     Command::Train, Command::Eval, Command::Report})
        REQUIRE(run_command(cmd, staged, {false, true}) == 0);
    CHECK(sha256_file((dir.path() / "staged" / "report" / "report.json").string()) == kSyntheticReportDigest);
}

TEST_CASE("generated articles from a probe run") {
    testutil::TempDir dir;
    const fs::path run = dir.path() / "chatgpt-a";
    fs::create_directories(run);
    std::ofstream out(run / "generations.jsonl");
    for (int i = 1; i <= 101; ++i) {
        GenerationRecord r;
        r.run_tag = "chatgpt-a";
        r.subject_index = i;
        r.language = "en";
        r.prompt = "p";
        r.response = "generated article text";
        out << nlohmann::json(r).dump() << "\n";
    }
    out.close();
    const auto arts = articles_from_run(run);
    REQUIRE(arts.size() == 101);
    std::set<std::string> ids;
    for (const auto& a : arts) {
        CHECK(a.source_id == "chatgpt-a");
        CHECK(!a.label.has_value());
        CHECK(a.split == Split::Test);
        ids.insert(a.article_id);
    }
    CHECK(ids.size() == 101);
}

TEST_CASE("command-line exit codes") {
    testutil::TempDir dir;
    auto j = minimal_json();
    j["paths"]["output_dir"] = (dir.path() / "out").string();
    testutil::write_file(dir.file("cfg.json"), j.dump());
    CHECK(run_cli("report --config " + dir.file("cfg.json")) == 3);
    CHECK(run_cli("ingest --config " + dir.file("cfg.json") + " --quiet") == 0);
    CHECK(fs::exists(dir.path() / "out" / "ingest" / "articles.jsonl"));
    testutil::write_file(dir.file("bad.json"), "{\"eval\": {\"level\": 2}}");
    CHECK(run_cli("ingest --config " + dir.file("bad.json")) == 2);
    CHECK(run_cli("ingest") != 0);
}
