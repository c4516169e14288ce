#include "stancebench/corpus.hpp"

#include <array>
#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "stancebench/hashing.hpp"
#include "stancebench/rng.hpp"

namespace stancebench {

using nlohmann::json;

namespace {

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string_view trim(std::string_view s) {
    const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

constexpr std::array<std::string_view, 7> kManifestColumns{
    "source_id", "name", "url_domain", "country", "language", "stance", "rating_provider"};

} // namespace

std::string_view to_string(Stance s) noexcept {
    return s == Stance::Left ? "L" : "R";
}

std::optional<Stance> parse_stance(std::string_view token) {
    const auto t = ascii_lower(trim(token));
    if (t == "l" || t == "left") return Stance::Left;
    if (t == "r" || t == "right") return Stance::Right;
    return std::nullopt;
}

std::string_view to_string(Split s) noexcept {
    switch (s) {
        case Split::Unassigned: return "unassigned";
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "unassigned";
}

Split parse_split(std::string_view token) {
    if (token == "train") return Split::Train;
    if (token == "val") return Split::Val;
    if (token == "test") return Split::Test;
    return Split::Unassigned;
}

void to_json(json& j, const Article& a) {
    j = json{{"id", a.article_id},
             {"source_id", a.source_id},
             {"language", a.language},
             {"raw_text", a.raw_text},
             {"word_count", a.word_count},
             {"split", to_string(a.split)}};
    if (a.clean_text) j["clean_text"] = *a.clean_text;
    if (a.label) j["label"] = to_string(*a.label);
    if (a.topic_k10) j["topic_k10"] = *a.topic_k10;
    if (a.topic_k15) j["topic_k15"] = *a.topic_k15;
}

void from_json(const json& j, Article& a) {
    a.article_id = j.at("id").get<std::string>();
    a.source_id = j.at("source_id").get<std::string>();
    a.language = j.at("language").get<std::string>();
    a.raw_text = j.at("raw_text").get<std::string>();
    a.word_count = j.at("word_count").get<std::size_t>();
    a.split = parse_split(j.value("split", std::string{"unassigned"}));
    a.clean_text.reset();
    a.label.reset();
    a.topic_k10.reset();
    a.topic_k15.reset();
    if (auto it = j.find("clean_text"); it != j.end()) a.clean_text = it->get<std::string>();
    if (auto it = j.find("label"); it != j.end()) a.label = parse_stance(it->get<std::string>());
    if (auto it = j.find("topic_k10"); it != j.end()) a.topic_k10 = it->get<int>();
    if (auto it = j.find("topic_k15"); it != j.end()) a.topic_k15 = it->get<int>();
}

std::string normalize_domain(std::string_view url) {
    std::string s = ascii_lower(trim(url));
    if (const auto pos = s.find("://"); pos != std::string::npos) {
        s.erase(0, pos + 3);
    }
    if (const auto pos = s.find_first_of("/?#"); pos != std::string::npos) {
        s.erase(pos);
    }
    if (const auto pos = s.find('@'); pos != std::string::npos) {
        s.erase(0, pos + 1);
    }
    if (const auto pos = s.find(':'); pos != std::string::npos) {
        s.erase(pos);
    }
    if (s.rfind("www.", 0) == 0) {
        s.erase(0, 4);
    }
    while (!s.empty() && s.back() == '.') {
        s.pop_back();
    }
    return s;
}

std::size_t count_words(std::string_view text) {
    std::size_t count = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
        if (space) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++count;
        }
    }
    return count;
}

std::vector<SourceRecord> parse_source_manifest(std::string_view content,
                                                const std::set<std::string>& languages) {
    std::vector<SourceRecord> records;
    std::unordered_set<std::string> domains;
    std::unordered_set<std::string> ids;
    std::array<std::size_t, kManifestColumns.size()> column_of{};
    bool have_header = false;
    std::size_t n_columns = 0;

    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= content.size()) {
        auto end = content.find('\n', start);
        if (end == std::string_view::npos) end = content.size();
        std::string_view line = content.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty() || line.front() == '#') {
            if (end == content.size()) break;
            continue;
        }

        const auto fields = split_tabs(line);
        if (!have_header) {
            n_columns = fields.size();
            for (std::size_t c = 0; c < kManifestColumns.size(); ++c) {
                const auto it = std::find_if(fields.begin(), fields.end(), [&](std::string_view f) {
                    return trim(f) == kManifestColumns[c];
                });
                if (it == fields.end()) {
                    throw CorpusError(CorpusErrorKind::ParseError,
                                      "manifest header lacks column '" +
                                          std::string(kManifestColumns[c]) + "'",
                                      line_no);
                }
                column_of[c] = static_cast<std::size_t>(it - fields.begin());
            }
            have_header = true;
            if (end == content.size()) break;
            continue;
        }
        if (fields.size() != n_columns) {
            throw CorpusError(CorpusErrorKind::ParseError,
                              "manifest line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(n_columns) + " columns, got " +
                                  std::to_string(fields.size()),
                              line_no);
        }
        auto field = [&](std::size_t c) { return std::string(trim(fields[column_of[c]])); };

        SourceRecord rec;
        rec.source_id = field(0);
        rec.name = field(1);
        rec.url_domain = normalize_domain(field(2));
        rec.country = field(3);
        rec.language = ascii_lower(field(4));
        rec.rating_provider = field(6);
        const auto stance_token = field(5);
        const auto stance = parse_stance(stance_token);
        if (!stance) {
            throw CorpusError(CorpusErrorKind::UnknownStance,
                              "manifest line " + std::to_string(line_no) + ": unknown stance '" +
                                  stance_token + "'",
                              line_no);
        }
        rec.stance = *stance;
        if (rec.source_id.empty() || rec.url_domain.empty()) {
            throw CorpusError(CorpusErrorKind::ParseError,
                              "manifest line " + std::to_string(line_no) +
                                  ": empty source_id or url_domain",
                              line_no);
        }
        if (!languages.empty() && !languages.contains(rec.language)) {
            throw CorpusError(CorpusErrorKind::UnknownLanguage,
                              "manifest line " + std::to_string(line_no) + ": language '" +
                                  rec.language + "' not configured",
                              line_no);
        }
        if (!domains.insert(rec.url_domain).second) {
            throw CorpusError(CorpusErrorKind::DuplicateDomain,
                              "duplicate url_domain '" + rec.url_domain + "'", line_no);
        }
        if (!ids.insert(rec.source_id).second) {
            throw CorpusError(CorpusErrorKind::DuplicateSource,
                              "duplicate source_id '" + rec.source_id + "'", line_no);
        }
        records.push_back(std::move(rec));
        if (end == content.size()) break;
    }
    if (!have_header) {
        throw CorpusError(CorpusErrorKind::ParseError, "manifest has no header", 0);
    }
    return records;
}

std::vector<SourceRecord> load_source_manifest(const std::string& path,
                                               const std::set<std::string>& languages) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CorpusError(CorpusErrorKind::MissingFile, "cannot open manifest " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_source_manifest(ss.str(), languages);
}

SourceIndex::SourceIndex(std::span<const SourceRecord> sources)
    : sources_(sources.begin(), sources.end()) {}

const SourceRecord* SourceIndex::resolve(std::string_view domain) const {
    const std::string d = normalize_domain(domain);
    const SourceRecord* best = nullptr;
    for (const auto& s : sources_) {
        const auto& sd = s.url_domain;
        const bool match =
            d == sd || (d.size() > sd.size() && d.ends_with(sd) && d[d.size() - sd.size() - 1] == '.');
        if (match && (!best || sd.size() > best->url_domain.size())) {
            best = &s;
        }
    }
    return best;
}

const SourceRecord* SourceIndex::by_id(std::string_view source_id) const {
    for (const auto& s : sources_) {
        if (s.source_id == source_id) return &s;
    }
    return nullptr;
}

std::string make_article_id(std::string_view url_domain, std::string_view text) {
    std::string key(url_domain);
    key.push_back('\0');
    key += sha256_hex(text);
    return sha256_hex(key).substr(0, 16);
}

IngestResult ingest_articles_from(std::istream& in, std::span<const SourceRecord> sources,
                                  UnknownSourcePolicy policy) {
    const SourceIndex index(sources);
    IngestResult result;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        ++result.stats.lines;

        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw CorpusError(CorpusErrorKind::MalformedRecord,
                              "articles line " + std::to_string(line_no) + ": " + e.what(), line_no);
        }
        const auto str_field = [&](const char* key, bool required) -> std::optional<std::string> {
            const auto it = rec.find(key);
            if (it == rec.end() || it->is_null()) {
                if (required) {
                    throw CorpusError(CorpusErrorKind::MalformedRecord,
                                      "articles line " + std::to_string(line_no) + ": missing '" +
                                          key + "'",
                                      line_no);
                }
                return std::nullopt;
            }
            if (!it->is_string()) {
                throw CorpusError(CorpusErrorKind::MalformedRecord,
                                  "articles line " + std::to_string(line_no) + ": '" + key +
                                      "' is not a string",
                                  line_no);
            }
            return it->get<std::string>();
        };
        if (!rec.is_object()) {
            throw CorpusError(CorpusErrorKind::MalformedRecord,
                              "articles line " + std::to_string(line_no) + ": not an object", line_no);
        }
        const auto domain = *str_field("domain", true);
        const auto text = *str_field("text", true);
        const auto language = str_field("language", false);
        const auto id = str_field("id", false);

        const SourceRecord* source = index.resolve(domain);
        if (!source) {
            if (policy == UnknownSourcePolicy::Abort) {
                throw CorpusError(CorpusErrorKind::UnknownSource,
                                  "articles line " + std::to_string(line_no) + ": unknown domain '" +
                                      domain + "'",
                                  line_no);
            }
            ++result.stats.skipped_unknown;
            result.stats.unknown_domains.insert(normalize_domain(domain));
            continue;
        }

        Article a;
        a.article_id = id && !id->empty() ? *id : make_article_id(source->url_domain, text);
        a.source_id = source->source_id;
        a.language = language && !language->empty() ? ascii_lower(*language) : source->language;
        a.raw_text = text;
        a.word_count = count_words(text);
        a.label = source->stance;
        if (!seen_ids.insert(a.article_id).second) {
            ++result.stats.duplicates;
            continue;
        }
        result.articles.push_back(std::move(a));
        ++result.stats.accepted;
    }
    return result;
}

IngestResult ingest_articles(const std::string& path, std::span<const SourceRecord> sources,
                             UnknownSourcePolicy policy) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CorpusError(CorpusErrorKind::MissingFile, "cannot open articles " + path);
    }
    return ingest_articles_from(in, sources, policy);
}

TrainValSplit balanced_split(std::span<const Article> articles, const SplitSpec& spec) {
    // language -> class -> indices into `articles`, in input order
    std::map<std::string, std::array<std::vector<std::size_t>, 2>> pools;
    for (std::size_t i = 0; i < articles.size(); ++i) {
        const auto& a = articles[i];
        if (!a.label || spec.test_source_ids.contains(a.source_id)) continue;
        pools[a.language][*a.label == Stance::Left ? 0 : 1].push_back(i);
    }

    std::vector<char> tag(articles.size(), 0); // 1 = train, 2 = val
    for (auto& [language, classes] : pools) {
        for (int c = 0; c < 2; ++c) {
            if (classes[c].size() < spec.val_size_per_class) {
                throw CorpusError(CorpusErrorKind::InsufficientArticles,
                                  "language '" + language + "' class " +
                                      std::string(to_string(c == 0 ? Stance::Left : Stance::Right)) +
                                      ": " + std::to_string(classes[c].size()) +
                                      " articles, need " + std::to_string(spec.val_size_per_class));
            }
        }
        std::array<std::vector<std::size_t>, 2> shuffled = classes;
        for (int c = 0; c < 2; ++c) {
            Rng rng(derive_seed(spec.seed, fnv1a64(language) ^ static_cast<std::uint64_t>(c)));
            rng.shuffle(shuffled[c].begin(), shuffled[c].end());
        }
        const std::size_t train_per_class =
            std::min(shuffled[0].size(), shuffled[1].size()) - spec.val_size_per_class;
        for (int c = 0; c < 2; ++c) {
            for (std::size_t i = 0; i < spec.val_size_per_class; ++i) tag[shuffled[c][i]] = 2;
            for (std::size_t i = 0; i < train_per_class; ++i) {
                tag[shuffled[c][spec.val_size_per_class + i]] = 1;
            }
        }
    }

    TrainValSplit out;
    for (std::size_t i = 0; i < articles.size(); ++i) {
        if (tag[i] == 1) {
            out.train.push_back(articles[i]);
            out.train.back().split = Split::Train;
        } else if (tag[i] == 2) {
            out.val.push_back(articles[i]);
            out.val.back().split = Split::Val;
        }
    }
    return out;
}

std::vector<Article> select_test_articles(std::span<const Article> articles, const SplitSpec& spec) {
    std::vector<Article> out;
    for (const auto& a : articles) {
        if (spec.test_source_ids.contains(a.source_id)) {
            out.push_back(a);
            out.back().split = Split::Test;
        }
    }
    return out;
}

std::vector<Article> read_articles_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CorpusError(CorpusErrorKind::MissingFile, "cannot open " + path);
    }
    std::vector<Article> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(json::parse(line).get<Article>());
        } catch (const json::exception& e) {
            throw CorpusError(CorpusErrorKind::MalformedRecord,
                              path + ":" + std::to_string(line_no) + ": " + e.what(), line_no);
        }
    }
    return out;
}

void write_articles_jsonl(const std::string& path, std::span<const Article> articles) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw CorpusError(CorpusErrorKind::MissingFile, "cannot write " + path);
    }
    for (const auto& a : articles) {
        out << json(a).dump() << '\n';
    }
}

} // namespace stancebench
