#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"

#include "stancebench/corpus.hpp"
#include "stancebench/rng.hpp"

using namespace stancebench;
using testutil::make_article;

namespace {

const char* kHeader = "source_id\tname\turl_domain\tcountry\tlanguage\tstance\trating_provider\n";

std::vector<SourceRecord> two_sources() {
    return parse_source_manifest(std::string(kHeader) + "slate\tSlate\tslate.com\tUSA\ten\tL\tAllSides\n"
                                                        "fox\tFox News\tfoxnews.com\tUSA\ten\tR\tAllSides\n");
}

template <typename F>
CorpusErrorKind corpus_error_kind(F&& f) {
    try {
        f();
    } catch (const CorpusError& e) {
        return e.kind();
    }
    FAIL("expected CorpusError");
    return CorpusErrorKind::ParseError;
}

} // namespace

TEST_CASE("manifest row maps to a source record") {
    const auto rows =
        parse_source_manifest(std::string(kHeader) + "slate\tSlate\tslate.com\tUSA\ten\tL\tAllSides\n");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].source_id == "slate");
    CHECK(rows[0].url_domain == "slate.com");
    CHECK(rows[0].stance == Stance::Left);
    CHECK(rows[0].rating_provider == "AllSides");
}

TEST_CASE("manifest validation errors") {
    CHECK(corpus_error_kind([] {
              parse_source_manifest(std::string(kHeader) + "a\tA\tslate.com\tUSA\ten\tL\tX\n"
                                                           "b\tB\tslate.com\tUSA\ten\tR\tX\n");
          }) == CorpusErrorKind::DuplicateDomain);
    CHECK(corpus_error_kind([] {
              parse_source_manifest(std::string(kHeader) + "a\tA\ta.com\tUSA\ten\tL\tX\n"
                                                           "a\tB\tb.com\tUSA\ten\tR\tX\n");
          }) == CorpusErrorKind::DuplicateSource);
    CHECK(corpus_error_kind([] {
              parse_source_manifest(std::string(kHeader) + "a\tA\ta.com\tUSA\ten\tCenter\tX\n");
          }) == CorpusErrorKind::UnknownStance);
    CHECK(corpus_error_kind([] {
              parse_source_manifest(std::string(kHeader) + "a\tA\ta.com\tUSA\tfr\tL\tX\n", {"en", "de"});
          }) == CorpusErrorKind::UnknownLanguage);
    CHECK(corpus_error_kind([] { parse_source_manifest("source_id\tname\n"); }) == CorpusErrorKind::ParseError);
    CHECK(corpus_error_kind([] { load_source_manifest("/nonexistent/manifest.tsv"); }) ==
          CorpusErrorKind::MissingFile);
}

TEST_CASE("manifest at the scale of a 47-source national list") {
    std::string content = kHeader;
    for (int i = 0; i < 47; ++i) {
        content += "s" + std::to_string(i) + "\tPaper " + std::to_string(i) + "\tpaper" + std::to_string(i) +
                   ".com\tUSA\ten\t" + (i % 2 ? "R" : "L") + "\tAllSides\n";
    }
    CHECK(parse_source_manifest(content).size() == 47);
}

TEST_CASE("domain normalization") {
    CHECK(normalize_domain("https://www.Slate.com/x/y?z=1") == "slate.com");
    CHECK(normalize_domain("slate.com") == "slate.com");
    CHECK(normalize_domain("http://user@news.example.org:8080/") == "news.example.org");
    CHECK(normalize_domain("WWW.FOXNEWS.COM.") == "foxnews.com");
}

TEST_CASE("source index resolves subdomains to the longest suffix") {
    const auto sources = parse_source_manifest(std::string(kHeader) + "a\tA\texample.com\tUSA\ten\tL\tX\n"
                                                                      "b\tB\tnews.example.com\tUSA\ten\tR\tX\n");
    SourceIndex idx(sources);
    REQUIRE(idx.resolve("example.com"));
    CHECK(idx.resolve("example.com")->source_id == "a");
    CHECK(idx.resolve("blog.example.com")->source_id == "a");
    CHECK(idx.resolve("eu.news.example.com")->source_id == "b");
    CHECK(idx.resolve("badexample.com") == nullptr);
    CHECK(idx.by_id("b")->url_domain == "news.example.com");
}

TEST_CASE("ingest applies distant supervision labels") {
    const auto sources = two_sources();
    std::istringstream in(
        R"({"domain":"https://www.slate.com/a","text":"one two three"})"
        "\n"
        R"({"domain":"foxnews.com","text":"four five","id":"f1"})"
        "\n"
        R"({"domain":"nosuchpaper.example","text":"x"})"
        "\n"
        R"({"domain":"foxnews.com","text":"dup","id":"f1"})"
        "\n");
    const auto res = ingest_articles_from(in, sources);
    REQUIRE(res.articles.size() == 2);
    CHECK(res.articles[0].label == Stance::Left);
    CHECK(res.articles[0].source_id == "slate");
    CHECK(res.articles[0].language == "en");
    CHECK(res.articles[0].word_count == 3);
    CHECK(res.articles[0].article_id == make_article_id("slate.com", "one two three"));
    CHECK(res.articles[0].article_id.size() == 16);
    CHECK(res.articles[1].label == Stance::Right);
    CHECK(res.articles[1].article_id == "f1");
    CHECK(res.stats.skipped_unknown == 1);
    CHECK(res.stats.duplicates == 1);
    CHECK(res.stats.unknown_domains.contains("nosuchpaper.example"));
}

TEST_CASE("unknown source under the abort policy") {
    const auto sources = two_sources();
    std::istringstream in(R"({"domain":"nosuchpaper.example","text":"x"})"
                          "\n");
    CHECK(corpus_error_kind([&] { ingest_articles_from(in, sources, UnknownSourcePolicy::Abort); }) ==
          CorpusErrorKind::UnknownSource);
}

TEST_CASE("malformed ingest records carry the line number") {
    const auto sources = two_sources();
    std::istringstream in(R"({"domain":"slate.com","text":"ok"})"
                          "\n{not json\n");
    try {
        ingest_articles_from(in, sources);
        FAIL("expected error");
    } catch (const CorpusError& e) {
        CHECK(e.kind() == CorpusErrorKind::MalformedRecord);
        CHECK(e.line() == 2);
    }
}

TEST_CASE("article json round trip") {
    auto a = make_article("x1", "slate", "en", Stance::Left, "some words here");
    a.clean_text = "some words";
    a.topic_k10 = 3;
    a.split = Split::Val;
    nlohmann::json j = a;
    const auto b = j.get<Article>();
    CHECK(b.article_id == a.article_id);
    CHECK(b.clean_text == a.clean_text);
    CHECK(b.topic_k10 == 3);
    CHECK_FALSE(b.topic_k15.has_value());
    CHECK(b.split == Split::Val);
    CHECK(b.label == Stance::Left);

    auto u = make_article("g1", "gpt-v1", "en", std::nullopt);
    CHECK_FALSE(nlohmann::json(u).get<Article>().label.has_value());
}

TEST_CASE("balanced split on four articles") {
    std::vector<Article> arts{make_article("1", "a", "en", Stance::Left), make_article("2", "a", "en", Stance::Left),
                              make_article("3", "b", "en", Stance::Right), make_article("4", "b", "en", Stance::Right)};
    SplitSpec spec{1, 11, {}};
    const auto s = balanced_split(arts, spec);
    auto count = [](const std::vector<Article>& v, Stance st) {
        return std::count_if(v.begin(), v.end(), [&](const Article& a) { return a.label == st; });
    };
    CHECK(count(s.val, Stance::Left) == 1);
    CHECK(count(s.val, Stance::Right) == 1);
    CHECK(count(s.train, Stance::Left) == 1);
    CHECK(count(s.train, Stance::Right) == 1);
}

TEST_CASE("balanced split invariants on a skewed multilingual corpus") {
    std::vector<Article> arts;
    Rng rng(4);
    for (int i = 0; i < 900; ++i) {
        const std::string lang = i % 3 == 0 ? "es" : "en";
        const Stance st = rng.bernoulli(0.65) ? Stance::Left : Stance::Right;
        arts.push_back(make_article("a" + std::to_string(i), st == Stance::Left ? "l" : "r", lang, st));
    }
    arts.push_back(make_article("t1", "test", "en", Stance::Left));
    SplitSpec spec{40, 99, {"test"}};
    const auto s1 = balanced_split(arts, spec);
    const auto s2 = balanced_split(arts, spec);

    std::set<std::string> train_ids, val_ids;
    std::map<std::pair<std::string, int>, int> tr, va;
    for (const auto& a : s1.train) {
        train_ids.insert(a.article_id);
        ++tr[{a.language, static_cast<int>(*a.label)}];
        CHECK(a.split == Split::Train);
    }
    for (const auto& a : s1.val) {
        val_ids.insert(a.article_id);
        ++va[{a.language, static_cast<int>(*a.label)}];
        CHECK(a.split == Split::Val);
    }
    for (const std::string lang : {"en", "es"}) {
        CHECK(va[{lang, 0}] == 40);
        CHECK(va[{lang, 1}] == 40);
        CHECK(std::abs(tr[{lang, 0}] - tr[{lang, 1}]) <= 1);
    }
    for (const auto& id : val_ids) CHECK_FALSE(train_ids.contains(id));
    CHECK_FALSE(train_ids.contains("t1"));
    CHECK_FALSE(val_ids.contains("t1"));

    REQUIRE(s1.train.size() == s2.train.size());
    for (std::size_t i = 0; i < s1.train.size(); ++i) CHECK(s1.train[i].article_id == s2.train[i].article_id);

    const auto test = select_test_articles(arts, spec);
    REQUIRE(test.size() == 1);
    CHECK(test[0].split == Split::Test);
}

TEST_CASE("validation larger than the class pool") {
    std::vector<Article> arts{make_article("1", "a", "en", Stance::Left), make_article("2", "b", "en", Stance::Right)};
    CHECK(corpus_error_kind([&] { balanced_split(arts, SplitSpec{2, 0, {}}); }) ==
          CorpusErrorKind::InsufficientArticles);
}

TEST_CASE("articles jsonl round trip") {
    testutil::TempDir dir;
    std::vector<Article> arts{make_article("1", "a", "en", Stance::Left, "é ü \"quoted\"\nnewline"),
                              make_article("2", "b", "de", Stance::Right)};
    write_articles_jsonl(dir.file("a.jsonl"), arts);
    const auto back = read_articles_jsonl(dir.file("a.jsonl"));
    REQUIRE(back.size() == 2);
    CHECK(back[0].raw_text == arts[0].raw_text);
    CHECK(back[1].language == "de");
}
