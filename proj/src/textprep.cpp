#include "stancebench/textprep.hpp"

#include <fstream>
#include <unordered_map>

#include "utf8.hpp"

namespace stancebench {

namespace {

bool is_ascii_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

} // namespace

bool filter_by_length(const Article& article) noexcept {
    return keep_by_length(article.word_count);
}

std::string normalize_line(std::string_view line) {
    std::string out;
    out.reserve(line.size());
    bool pending_space = false;
    for (char c : line) {
        if (is_ascii_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(c);
    }
    return out;
}

std::vector<std::string> normalized_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        auto line = normalize_line(text.substr(start, end - start));
        if (!line.empty()) lines.push_back(std::move(line));
        start = end + 1;
    }
    return lines;
}

std::string normalize_text(std::string_view text) {
    std::string out;
    for (const auto& line : normalized_lines(text)) {
        if (!out.empty()) out.push_back('\n');
        out += line;
    }
    return out;
}

BoilerplateProfile detect_boilerplate(std::span<const Article> articles, double min_doc_fraction,
                                      std::size_t min_doc_count) {
    if (articles.empty()) {
        throw TextprepError(TextprepErrorKind::EmptyInput, "detect_boilerplate: no articles");
    }
    BoilerplateProfile profile;
    profile.source_id = articles.front().source_id;
    profile.min_doc_fraction = min_doc_fraction;
    profile.min_doc_count = min_doc_count;

    std::unordered_map<std::string, std::size_t> doc_freq;
    for (const auto& a : articles) {
        if (a.source_id != profile.source_id) {
            throw TextprepError(TextprepErrorKind::SourceMismatch,
                                "detect_boilerplate: mixed sources '" + profile.source_id +
                                    "' and '" + a.source_id + "'");
        }
        auto lines = normalized_lines(a.raw_text);
        std::sort(lines.begin(), lines.end());
        lines.erase(std::unique(lines.begin(), lines.end()), lines.end());
        for (auto& line : lines) ++doc_freq[std::move(line)];
    }
    const double n = static_cast<double>(articles.size());
    for (const auto& [line, df] : doc_freq) {
        if (static_cast<double>(df) + 1e-9 >= min_doc_fraction * n && df >= min_doc_count) {
            profile.lines.insert(line);
        }
    }
    return profile;
}

Article strip_boilerplate(const Article& article, const BoilerplateProfile& profile) {
    if (article.source_id != profile.source_id) {
        throw TextprepError(TextprepErrorKind::SourceMismatch,
                            "strip_boilerplate: article source '" + article.source_id +
                                "' vs profile '" + profile.source_id + "'");
    }
    Article out = article;
    std::string clean;
    for (const auto& line : normalized_lines(article.text())) {
        if (profile.lines.contains(line)) continue;
        if (!clean.empty()) clean.push_back('\n');
        clean += line;
    }
    out.clean_text = std::move(clean);
    return out;
}

StopwordList StopwordList::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw TextprepError(TextprepErrorKind::MissingFile, "cannot open stopword list " + path);
    }
    std::unordered_set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        const auto norm = normalize_line(line);
        if (norm.empty() || norm.front() == '#') continue;
        for (auto& t : word_tokens(norm)) words.insert(std::move(t));
    }
    return StopwordList(std::move(words));
}

StopwordList StopwordList::for_language(const std::string& dir, std::string_view language) {
    const std::string path = dir + "/" + std::string(language) + ".txt";
    std::ifstream probe(path);
    if (!probe) return {};
    return load(path);
}

bool StopwordList::contains(std::string_view token) const {
    return words_.contains(std::string(token));
}

std::vector<std::string> word_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const char32_t cp = utf8::decode(text, pos);
        if (utf8::is_word_char(cp)) {
            utf8::append(current, utf8::to_lower(cp));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

TokenStream tokenize(std::string_view text, std::string_view language, const StopwordList& stopwords) {
    TokenStream stream;
    stream.language = std::string(language);
    for (auto& t : word_tokens(text)) {
        if (!stopwords.contains(t)) stream.tokens.push_back(std::move(t));
    }
    return stream;
}

} // namespace stancebench
