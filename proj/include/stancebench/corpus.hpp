#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "stancebench/error.hpp"

namespace stancebench {

enum class Stance { Left, Right };

std::string_view to_string(Stance s) noexcept;
/// Accepts "L"/"R" and "Left"/"Right" (case-insensitive).
std::optional<Stance> parse_stance(std::string_view token);

enum class CorpusErrorKind {
    MissingFile,
    ParseError,
    DuplicateDomain,
    DuplicateSource,
    UnknownStance,
    UnknownLanguage,
    UnknownSource,
    MalformedRecord,
    InsufficientArticles,
};

class CorpusError : public KindedError<CorpusErrorKind> {
public:
    CorpusError(CorpusErrorKind kind, const std::string& message, std::size_t line = 0)
        : KindedError(kind, message), line_(line) {}
    /// 1-based input line for parse failures, 0 otherwise.
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

struct SourceRecord {
    std::string source_id;
    std::string name;
    std::string url_domain;
    std::string country;
    std::string language;
    Stance stance = Stance::Left;
    std::string rating_provider;
};

enum class Split { Unassigned, Train, Val, Test };

std::string_view to_string(Split s) noexcept;
Split parse_split(std::string_view token);

struct Article {
    std::string article_id;
    std::string source_id;
    std::string language;
    std::string raw_text;
    std::optional<std::string> clean_text;
    std::size_t word_count = 0;
    // Unset only for unrated sources (generated text from a probed model).
    std::optional<Stance> label;
    std::optional<int> topic_k10;
    std::optional<int> topic_k15;
    Split split = Split::Unassigned;

    /// Text handed to downstream stages: clean_text when present.
    const std::string& text() const noexcept { return clean_text ? *clean_text : raw_text; }
};

void to_json(nlohmann::json& j, const Article& a);
void from_json(const nlohmann::json& j, Article& a);

struct SplitSpec {
    std::size_t val_size_per_class = 1500;
    std::uint64_t seed = 0;
    std::set<std::string> test_source_ids;
};

struct TrainValSplit {
    std::vector<Article> train;
    std::vector<Article> val;
};

enum class UnknownSourcePolicy { Skip, Abort };

struct IngestStats {
    std::size_t lines = 0;
    std::size_t accepted = 0;
    std::size_t skipped_unknown = 0;
    std::size_t duplicates = 0;
    std::set<std::string> unknown_domains;
};

struct IngestResult {
    std::vector<Article> articles;
    IngestStats stats;
};

/// Lowercases, strips scheme, "www.", port and path: "https://www.Slate.com/x" -> "slate.com".
std::string normalize_domain(std::string_view url);

/// Whitespace-delimited token count (ASCII whitespace).
std::size_t count_words(std::string_view text);

/// Reads the tab-separated source manifest. When `languages` is non-empty,
/// rows in any other language are rejected.
std::vector<SourceRecord> load_source_manifest(const std::string& path,
                                               const std::set<std::string>& languages = {});
std::vector<SourceRecord> parse_source_manifest(std::string_view content,
                                                const std::set<std::string>& languages = {});

/// Maps a (possibly sub-)domain to the manifest source owning it: the longest
/// manifest url_domain that equals the domain or is a dot-suffix of it.
class SourceIndex {
public:
    explicit SourceIndex(std::span<const SourceRecord> sources);
    const SourceRecord* resolve(std::string_view domain) const;
    const SourceRecord* by_id(std::string_view source_id) const;
    std::span<const SourceRecord> sources() const noexcept { return sources_; }

private:
    std::vector<SourceRecord> sources_;
};

IngestResult ingest_articles(const std::string& path, std::span<const SourceRecord> sources,
                             UnknownSourcePolicy policy = UnknownSourcePolicy::Skip);
IngestResult ingest_articles_from(std::istream& in, std::span<const SourceRecord> sources,
                                  UnknownSourcePolicy policy = UnknownSourcePolicy::Skip);

std::string make_article_id(std::string_view url_domain, std::string_view text);

/// Per language: val gets exactly val_size_per_class articles of each class,
/// train gets an equal number of each class from the remainder.
TrainValSplit balanced_split(std::span<const Article> articles, const SplitSpec& spec);

/// Articles from the held-out test sources, tagged Split::Test.
std::vector<Article> select_test_articles(std::span<const Article> articles, const SplitSpec& spec);

std::vector<Article> read_articles_jsonl(const std::string& path);
void write_articles_jsonl(const std::string& path, std::span<const Article> articles);

} // namespace stancebench
