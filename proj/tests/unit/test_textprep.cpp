#include <clocale>
#include <cwctype>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "helpers.hpp"

#include "stancebench/rng.hpp"
#include "stancebench/textprep.hpp"

using namespace stancebench;
using testutil::make_article;

TEST_CASE("length filter boundaries") {
    CHECK_FALSE(keep_by_length(0));
    CHECK_FALSE(keep_by_length(19));
    CHECK(keep_by_length(20));
    CHECK(keep_by_length(2000));
    CHECK_FALSE(keep_by_length(2001));
    auto a = make_article("1", "s", "en", Stance::Left, "");
    CHECK_FALSE(filter_by_length(a));
}

TEST_CASE("line normalization") {
    CHECK(normalize_line("  a \t b   c ") == "a b c");
    CHECK(normalize_text("x  y\n\n  \n z\r\n") == "x y\nz");
}

namespace {

std::vector<Article> source_with_line(const std::string& line, int with, int total) {
    std::vector<Article> out;
    for (int i = 0; i < total; ++i) {
        std::string text = "body text number " + std::to_string(i) + "\n";
        if (i < with) text += line + "\n";
        out.push_back(make_article(std::to_string(i), "src", "en", Stance::Left, text));
    }
    return out;
}

} // namespace

TEST_CASE("boilerplate flagged by document frequency") {
    CHECK(detect_boilerplate(source_with_line("Subscribe now", 9, 10)).lines.contains("Subscribe now"));
    CHECK_FALSE(detect_boilerplate(source_with_line("Subscribe now", 1, 10)).lines.contains("Subscribe now"));
    // 3 of 10 meets the fraction but not the count of 5
    CHECK_FALSE(detect_boilerplate(source_with_line("Subscribe now", 3, 10)).lines.contains("Subscribe now"));
}

TEST_CASE("boilerplate detection matches a brute-force line count") {
    // 50-article source; line j appears in exactly j articles, around both thresholds
    Rng rng(77);
    const int n = 50;
    std::vector<std::string> texts(n);
    for (int j = 1; j <= 30; ++j) {
        std::vector<int> docs(n);
        for (int i = 0; i < n; ++i) docs[i] = i;
        rng.shuffle(docs.begin(), docs.end());
        for (int k = 0; k < j; ++k) {
            // repeat inside one doc sometimes; document frequency must count it once
            texts[docs[k]] += "  shared   line " + std::to_string(j) + "\n";
            if (k % 4 == 0) texts[docs[k]] += "shared line " + std::to_string(j) + "\n";
        }
    }
    std::vector<Article> arts;
    for (int i = 0; i < n; ++i) {
        texts[i] += "unique " + std::to_string(i) + "\n";
        arts.push_back(make_article(std::to_string(i), "src", "en", Stance::Left, texts[i]));
    }

    for (const auto& [frac, count] : std::vector<std::pair<double, std::size_t>>{
             {0.30, 5}, {0.10, 5}, {0.10, 12}, {0.5, 1}, {0.02, 1}}) {
        // oracle: count documents containing each normalized line, no shared code path
        std::map<std::string, int> df;
        for (const auto& t : texts) {
            std::set<std::string> seen;
            std::string cur;
            std::istringstream in(t);
            while (std::getline(in, cur)) {
                std::string norm;
                bool space = false;
                for (char c : cur) {
                    if (c == ' ' || c == '\t') {
                        space = !norm.empty();
                    } else {
                        if (space) norm += ' ';
                        space = false;
                        norm += c;
                    }
                }
                if (!norm.empty()) seen.insert(norm);
            }
            for (const auto& s : seen) ++df[s];
        }
        std::set<std::string> expected;
        for (const auto& [line, d] : df) {
            if (d * 100 >= static_cast<int>(frac * 100 + 0.5) * n && d >= static_cast<int>(count)) expected.insert(line);
        }
        const auto profile = detect_boilerplate(arts, frac, count);
        CHECK(profile.lines == expected);
    }
}

TEST_CASE("stripping boilerplate") {
    auto arts = source_with_line("Subscribe now", 9, 10);
    const auto profile = detect_boilerplate(arts);
    const auto once = strip_boilerplate(arts[0], profile);
    CHECK(once.clean_text == "body text number 0");
    const auto twice = strip_boilerplate(once, profile);
    CHECK(twice.clean_text == once.clean_text);

    auto all_boiler = make_article("x", "src", "en", Stance::Left, "Subscribe now\n");
    CHECK(strip_boilerplate(all_boiler, profile).clean_text == "");

    BoilerplateProfile empty;
    empty.source_id = "src";
    auto messy = make_article("y", "src", "en", Stance::Left, "  a   b \n\n c ");
    CHECK(strip_boilerplate(messy, empty).clean_text == "a b\nc");

    BoilerplateProfile other;
    other.source_id = "elsewhere";
    CHECK_THROWS_AS(strip_boilerplate(messy, other), TextprepError);
}

TEST_CASE("tokenizer basics") {
    const StopwordList de(std::unordered_set<std::string>{"die"});
    CHECK(tokenize("Die Zeit!", "de", de).tokens == std::vector<std::string>{"zeit"});
    CHECK(tokenize("", "en", StopwordList{}).tokens.empty());
    CHECK(word_tokens("ÁRBOL, Straße; l'habitatge 2023") ==
          std::vector<std::string>{"árbol", "straße", "l", "habitatge", "2023"});
    CHECK(word_tokens("ΑΘΗΝΑ Москва") == std::vector<std::string>{"αθηνα", "москва"});
}

TEST_CASE("shipped stopword lists load") {
    for (const std::string lang : {"en", "de", "es", "ca"}) {
        const auto sw = StopwordList::for_language(STANCEBENCH_DATA_DIR "/stopwords", lang);
        CHECK(sw.size() > 50);
    }
    CHECK(StopwordList::for_language(STANCEBENCH_DATA_DIR "/stopwords", "xx").size() == 0);
    CHECK(StopwordList::for_language(STANCEBENCH_DATA_DIR "/stopwords", "en").contains("the"));
}

namespace {

// Reference tokenizer: the C library's wide-character classification under a
// UTF-8 locale; shares no code with the library's tables.
std::vector<std::string> reference_tokens(const std::string& text) {
    std::mbstate_t state{};
    const char* src = text.c_str();
    std::wstring wide(text.size() + 1, L'\0');
    const std::size_t n = std::mbsrtowcs(wide.data(), &src, wide.size(), &state);
    REQUIRE(n != static_cast<std::size_t>(-1));
    wide.resize(n);
    std::vector<std::string> out;
    std::wstring cur;
    auto flush = [&] {
        if (cur.empty()) return;
        std::string utf8(cur.size() * 4 + 1, '\0');
        std::mbstate_t st{};
        const wchar_t* w = cur.c_str();
        const std::size_t m = std::wcsrtombs(utf8.data(), &w, utf8.size(), &st);
        utf8.resize(m);
        out.push_back(utf8);
        cur.clear();
    };
    for (wchar_t c : wide) {
        if (std::iswalnum(static_cast<wint_t>(c))) {
            cur.push_back(static_cast<wchar_t>(std::towlower(static_cast<wint_t>(c))));
        } else {
            flush();
        }
    }
    flush();
    return out;
}

} // namespace

TEST_CASE("tokenizer agrees with a locale-based reference on 100 corpus lines") {
    const char* prev = std::setlocale(LC_ALL, nullptr);
    const std::string saved = prev ? prev : "C";
    if (!std::setlocale(LC_ALL, "C.UTF-8") && !std::setlocale(LC_ALL, "en_US.UTF-8")) {
        MESSAGE("no UTF-8 locale available; skipping reference comparison");
        return;
    }
    std::vector<std::string> pool{
        "Die Bundesregierung plant höhere Ausgaben für Straßen und Brücken.",
        "¿Quién pagará la factura? «Nadie», respondió el ministro de Economía.",
        "El preu de l'habitatge s'ha disparat a Barcelona: un 12,5% més car.",
        "ÜBER 3.000 MENSCHEN DEMONSTRIERTEN AM SAMSTAG IN MÜNCHEN!",
        "La col·lecció d'art contemporani obre les portes el dissabte.",
        "Président Macron's visit — announced Tuesday — was cut short (again).",
        "Él dijo: «Año tras año, la misma canción»… y se fue.",
        "Ça coûte 20 € — naïve façade, coöperation, rôle.",
        "Œuvre, Æsir and Ørsted: Scandinavian & French ligatures.",
        "Ελλάδα και Κύπρος: ΣΥΝΑΝΤΗΣΗ στην Αθήνα.",
        "Москва и САНКТ-ПЕТЕРБУРГ обсуждают бюджет.",
        "tabs\tand\tnewlines\nmixed   with  spaces",
    };
    std::ifstream in(STANCEBENCH_DATA_DIR "/synthetic/articles.jsonl");
    std::string line;
    while (std::getline(in, line) && pool.size() < 400) {
        const auto text = nlohmann::json::parse(line).at("text").get<std::string>();
        std::istringstream lines(text);
        std::string l;
        while (std::getline(lines, l)) pool.push_back(l);
    }
    Rng rng(2024);
    std::size_t compared = 0;
    for (int i = 0; i < 100; ++i) {
        const std::string& sample = i < 12 ? pool[static_cast<std::size_t>(i)] : pool[rng.uniform_index(pool.size())];
        CHECK_MESSAGE(word_tokens(sample) == reference_tokens(sample), sample);
        ++compared;
    }
    CHECK(compared == 100);
    std::setlocale(LC_ALL, saved.c_str());
}
