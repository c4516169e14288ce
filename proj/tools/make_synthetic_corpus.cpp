// Writes the small bilingual corpus under data/synthetic used by the smoke
// and determinism tests. Output is a pure function of the seed.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "stancebench/rng.hpp"

using stancebench::Rng;

namespace {

using Words = std::vector<std::string>;

struct LanguageKit {
    std::string code;
    Words function_words;
    std::vector<Words> themes; // economy, international, sports, culture
    Words left;
    Words right;
    std::string subscribe;
    std::string copyright;
};

Words split(const std::string& s) {
    Words out;
    std::size_t i = 0;
    while (i < s.size()) {
        const auto j = s.find(' ', i);
        out.push_back(s.substr(i, j == std::string::npos ? std::string::npos : j - i));
        if (j == std::string::npos) break;
        i = j + 1;
    }
    return out;
}

LanguageKit english() {
    return {"en",
            split("the of and to in a that is for on with as was by at from it this be are has have its"),
            {split("tax budget government economy inflation wages jobs market percent unemployment spending deficit "
                   "pension housing minister parliament policy reform debt prices"),
             split("border migrants treaty embassy summit sanctions foreign war refugees diplomats alliance troops "
                   "conflict negotiations ceasefire envoy president nations asylum military"),
             split("match goal season coach team league striker championship tournament stadium fans score referee "
                   "victory defeat midfielder transfer trophy cup players"),
             split("film festival album concert actor director premiere gallery novel series music singer theatre "
                   "exhibition award audience critics band museum streaming")},
            split("workers unions inequality welfare climate solidarity progressive affordable renewable diversity "
                  "regulation equality tenants nurses emissions"),
            split("taxpayers enterprise freedom security tradition family deregulation sovereignty competitiveness "
                  "entrepreneurs defence patriots values privatisation incentives"),
            "Subscribe to the newsletter of {name} for daily updates",
            "Copyright {name} all rights reserved"};
}

LanguageKit spanish() {
    return {"es",
            split("el la de que y en los las un una por con para del al se su es como más"),
            {split("impuestos presupuesto gobierno economía inflación salarios empleo mercado porcentaje paro gasto "
                   "déficit pensiones vivienda ministro congreso política reforma deuda precios"),
             split("frontera migrantes tratado embajada cumbre sanciones exterior guerra refugiados diplomáticos "
                   "alianza tropas conflicto negociaciones armisticio enviado presidente naciones asilo ejército"),
             split("partido gol temporada entrenador equipo liga delantero campeonato torneo estadio aficionados "
                   "marcador árbitro victoria derrota centrocampista fichaje trofeo copa jugadores"),
             split("película festival álbum concierto actor director estreno galería novela serie música cantante "
                   "teatro exposición premio público críticos banda museo plataforma")},
            split("trabajadores sindicatos desigualdad bienestar clima solidaridad progresista asequible renovables "
                  "diversidad regulación igualdad inquilinos enfermeras emisiones"),
            split("contribuyentes empresa libertad seguridad tradición familia desregulación soberanía "
                  "competitividad emprendedores defensa patriotas valores privatización incentivos"),
            "Suscríbete al boletín de {name} para recibir noticias",
            "Copyright {name} todos los derechos reservados"};
}

struct SourceSpec {
    std::string id;
    std::string name;
    std::string domain;
    std::string language;
    char stance;
    bool test;
    int articles;
};

std::string replace_name(std::string templ, const std::string& name) {
    const auto pos = templ.find("{name}");
    return templ.replace(pos, 6, name);
}

const std::string& pick(const Words& w, Rng& rng) { return w[rng.uniform_index(w.size())]; }

std::string sentence(const LanguageKit& kit, std::size_t theme, char stance, Rng& rng) {
    const bool political = theme < 2;
    const std::size_t len = 9 + rng.uniform_index(6);
    std::string s;
    for (std::size_t i = 0; i < len; ++i) {
        const double u = rng.uniform01();
        std::string w;
        if (u < 0.40) {
            w = pick(kit.function_words, rng);
        } else if (u < (political ? 0.78 : 0.92)) {
            // occasional off-theme word keeps topics from being perfectly separable
            w = rng.bernoulli(0.9) ? pick(kit.themes[theme], rng) : pick(kit.themes[rng.uniform_index(4)], rng);
        } else {
            const bool own_side = rng.bernoulli(0.75);
            const bool left = (stance == 'L') == own_side;
            w = pick(left ? kit.left : kit.right, rng);
        }
        if (!s.empty()) s.push_back(' ');
        s += w;
    }
    s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s + ".";
}

std::string article(const LanguageKit& kit, const SourceSpec& src, std::size_t theme, std::size_t paragraphs,
                    Rng& rng) {
    std::string text;
    if (rng.bernoulli(0.85)) text += replace_name(kit.subscribe, src.name) + "\n";
    for (std::size_t p = 0; p < paragraphs; ++p) {
        const std::size_t n = 2 + rng.uniform_index(2);
        for (std::size_t i = 0; i < n; ++i) {
            if (i) text += ' ';
            text += sentence(kit, theme, src.stance, rng);
        }
        text += '\n';
    }
    if (rng.bernoulli(0.9)) text += replace_name(kit.copyright, src.name) + "\n";
    return text;
}

} // namespace

int main(int argc, char** argv) {
    const std::filesystem::path out = argc > 1 ? argv[1] : STANCEBENCH_DATA_DIR "/synthetic";
    const std::uint64_t seed = argc > 2 ? std::stoull(argv[2]) : 20231;
    std::filesystem::create_directories(out);

    const std::vector<SourceSpec> sources{
        {"en_l1", "The Daily Ledger", "dailyledger.example", "en", 'L', false, 55},
        {"en_l2", "Northern Voice", "northernvoice.example", "en", 'L', false, 55},
        {"en_l3", "People's Courier", "peoplescourier.example", "en", 'L', false, 55},
        {"en_r1", "The Standard Post", "standardpost.example", "en", 'R', false, 55},
        {"en_r2", "Heritage Times", "heritagetimes.example", "en", 'R', false, 55},
        {"en_r3", "National Herald", "nationalherald.example", "en", 'R', false, 55},
        {"en_lt", "Morning Progress", "morningprogress.example", "en", 'L', true, 40},
        {"en_rt", "Evening Sentinel", "eveningsentinel.example", "en", 'R', true, 40},
        {"es_l1", "Diario Popular", "diariopopular.example", "es", 'L', false, 55},
        {"es_l2", "La Voz Obrera", "lavozobrera.example", "es", 'L', false, 55},
        {"es_l3", "El Mirador", "elmirador.example", "es", 'L', false, 55},
        {"es_r1", "La Gaceta Nacional", "gacetanacional.example", "es", 'R', false, 55},
        {"es_r2", "El Baluarte", "elbaluarte.example", "es", 'R', false, 55},
        {"es_r3", "Crónica Liberal", "cronicaliberal.example", "es", 'R', false, 55},
        {"es_lt", "El Progreso", "elprogreso.example", "es", 'L', true, 40},
        {"es_rt", "La Razón del Sur", "razondelsur.example", "es", 'R', true, 40},
    };

    {
        std::ofstream m(out / "manifest.tsv");
        m << "# synthetic sources; stances are invented\n";
        m << "source_id\tname\turl_domain\tcountry\tlanguage\tstance\trating_provider\n";
        for (const auto& s : sources) {
            m << s.id << '\t' << s.name << '\t' << s.domain << '\t' << (s.language == "en" ? "US" : "ES") << '\t'
              << s.language << '\t' << s.stance << "\tsynthetic\n";
        }
    }

    const LanguageKit en = english();
    const LanguageKit es = spanish();
    Rng rng(seed);
    std::ofstream a(out / "articles.jsonl");
    std::size_t serial = 0;
    auto emit = [&](const std::string& domain, const std::string& text, bool with_id) {
        nlohmann::json j{{"domain", domain}, {"text", text}};
        if (with_id) j["id"] = "syn" + std::to_string(serial);
        ++serial;
        a << j.dump() << '\n';
    };
    for (const auto& s : sources) {
        const LanguageKit& kit = s.language == "en" ? en : es;
        for (int i = 0; i < s.articles; ++i) {
            // 55% political themes
            const double u = rng.uniform01();
            const std::size_t theme = u < 0.30 ? 0 : u < 0.55 ? 1 : u < 0.78 ? 2 : 3;
            const std::string url = (i % 3 == 0 ? "https://www." : "http://") + s.domain + "/news/" + std::to_string(i);
            emit(url, article(kit, s, theme, 3 + rng.uniform_index(4), rng), i % 2 == 0);
        }
        // one too short and, for the first source per language, one too long
        emit("https://" + s.domain + "/brief", sentence(kit, 0, s.stance, rng), true);
        if (s.id.ends_with("_l1")) emit("https://" + s.domain + "/longread", article(kit, s, 0, 90, rng), true);
    }
    emit("https://unknown-outlet.example/x", article(en, sources[0], 0, 3, rng), true);
    std::cout << "wrote " << serial << " records to " << out.string() << '\n';
    return 0;
}
