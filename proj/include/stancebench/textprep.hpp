#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "stancebench/corpus.hpp"
#include "stancebench/error.hpp"

namespace stancebench {

inline constexpr std::size_t kMinArticleWords = 20;
inline constexpr std::size_t kMaxArticleWords = 2000;

enum class TextprepErrorKind { EmptyInput, SourceMismatch, MissingFile };
using TextprepError = KindedError<TextprepErrorKind>;

/// keep <=> 20 <= word_count <= 2000, evaluated on the raw (uncleaned) text.
constexpr bool keep_by_length(std::size_t word_count) noexcept {
    return word_count >= kMinArticleWords && word_count <= kMaxArticleWords;
}
bool filter_by_length(const Article& article) noexcept;

/// Trims and collapses internal whitespace runs to one space.
std::string normalize_line(std::string_view line);
/// Normalizes every line and drops blank ones; lines joined with '\n'.
std::string normalize_text(std::string_view text);
std::vector<std::string> normalized_lines(std::string_view text);

struct BoilerplateProfile {
    std::string source_id;
    std::set<std::string> lines;
    double min_doc_fraction = 0.30;
    std::size_t min_doc_count = 5;
};

inline constexpr double kDefaultBoilerplateFraction = 0.30;
inline constexpr std::size_t kDefaultBoilerplateCount = 5;

/// Flags normalized lines that occur in at least min_doc_fraction of the
/// source's articles and in at least min_doc_count of them.
BoilerplateProfile detect_boilerplate(std::span<const Article> articles,
                                      double min_doc_fraction = kDefaultBoilerplateFraction,
                                      std::size_t min_doc_count = kDefaultBoilerplateCount);

/// clean_text := normalized text minus profile lines. Works from clean_text
/// when already set, so applying it twice is a no-op.
Article strip_boilerplate(const Article& article, const BoilerplateProfile& profile);

class StopwordList {
public:
    StopwordList() = default;
    explicit StopwordList(std::unordered_set<std::string> words) : words_(std::move(words)) {}

    /// One token per line; blank lines and lines starting with '#' ignored.
    static StopwordList load(const std::string& path);
    /// `<dir>/<language>.txt`; an absent file yields an empty list.
    static StopwordList for_language(const std::string& dir, std::string_view language);

    bool contains(std::string_view token) const;
    std::size_t size() const noexcept { return words_.size(); }

private:
    std::unordered_set<std::string> words_;
};

struct TokenStream {
    std::vector<std::string> tokens;
    std::string language;
};

/// Lowercased runs of letters/digits; everything else separates tokens and is dropped.
std::vector<std::string> word_tokens(std::string_view text);

TokenStream tokenize(std::string_view text, std::string_view language,
                     const StopwordList& stopwords);

} // namespace stancebench
