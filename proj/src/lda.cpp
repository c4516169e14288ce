#include "stancebench/lda.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "stancebench/special.hpp"

namespace stancebench {

using nlohmann::json;

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::vector<std::size_t> doc_frequency)
    : tokens_(std::move(tokens)), doc_frequency_(std::move(doc_frequency)) {
    if (doc_frequency_.size() != tokens_.size()) {
        doc_frequency_.resize(tokens_.size(), 0);
    }
    ids_.reserve(tokens_.size());
    for (std::uint32_t i = 0; i < tokens_.size(); ++i) {
        if (!ids_.emplace(tokens_[i], i).second) {
            throw LdaError(LdaErrorKind::BadModelFile, "duplicate vocabulary token '" + tokens_[i] + "'");
        }
    }
}

std::optional<std::uint32_t> Vocabulary::id_of(std::string_view token) const {
    const auto it = ids_.find(std::string(token));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::uint32_t> Vocabulary::encode(std::span<const std::string> tokens) const {
    std::vector<std::uint32_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) {
        if (const auto it = ids_.find(t); it != ids_.end()) ids.push_back(it->second);
    }
    return ids;
}

Vocabulary build_vocabulary(std::span<const TokenStream> docs, std::size_t min_doc_freq) {
    std::map<std::string, std::size_t> df;
    std::size_t total_tokens = 0;
    for (const auto& doc : docs) {
        std::vector<std::string> unique(doc.tokens.begin(), doc.tokens.end());
        std::sort(unique.begin(), unique.end());
        unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
        for (auto& t : unique) ++df[std::move(t)];
        total_tokens += doc.tokens.size();
    }
    if (total_tokens == 0) {
        throw LdaError(LdaErrorKind::EmptyCorpus, "build_vocabulary: corpus has no tokens");
    }
    std::vector<std::string> tokens;
    std::vector<std::size_t> freq;
    for (const auto& [token, count] : df) { // std::map iterates in byte order
        if (count >= min_doc_freq) {
            tokens.push_back(token);
            freq.push_back(count);
        }
    }
    return Vocabulary(std::move(tokens), std::move(freq));
}

LdaState LdaState::initialize(std::vector<WordIds> docs, std::size_t vocab_size, std::size_t num_topics,
                              std::uint64_t seed, double alpha_sum, double beta) {
    if (num_topics == 0) {
        throw LdaError(LdaErrorKind::EmptyCorpus, "initialize: K must be >= 1");
    }
    Rng rng(seed);
    std::vector<std::vector<int>> z(docs.size());
    for (std::size_t d = 0; d < docs.size(); ++d) {
        z[d].resize(docs[d].size());
        for (auto& zi : z[d]) zi = static_cast<int>(rng.uniform_index(num_topics));
    }
    std::vector<double> alpha(num_topics, alpha_sum / static_cast<double>(num_topics));
    LdaState state = from_assignments(std::move(docs), std::move(z), vocab_size, std::move(alpha), beta, seed);
    state.rng_ = rng;
    return state;
}

LdaState LdaState::from_assignments(std::vector<WordIds> docs, std::vector<std::vector<int>> z,
                                    std::size_t vocab_size, std::vector<double> alpha, double beta,
                                    std::uint64_t seed) {
    std::size_t tokens = 0;
    for (const auto& d : docs) tokens += d.size();
    if (docs.empty() || tokens == 0) {
        throw LdaError(LdaErrorKind::EmptyCorpus, "LDA state needs at least one token");
    }
    if (z.size() != docs.size()) {
        throw LdaError(LdaErrorKind::EmptyCorpus, "assignment/document count mismatch");
    }
    LdaState s;
    s.num_topics_ = alpha.size();
    s.vocab_size_ = vocab_size;
    s.num_tokens_ = tokens;
    s.seed_ = seed;
    s.beta_ = beta;
    s.docs_ = std::move(docs);
    s.z_ = std::move(z);
    s.rng_ = Rng(seed);
    for (std::size_t d = 0; d < s.docs_.size(); ++d) {
        if (s.z_[d].size() != s.docs_[d].size()) {
            throw LdaError(LdaErrorKind::EmptyCorpus, "assignment length mismatch in doc " + std::to_string(d));
        }
        for (std::size_t i = 0; i < s.docs_[d].size(); ++i) {
            if (s.docs_[d][i] >= vocab_size) {
                throw LdaError(LdaErrorKind::EmptyCorpus, "word id out of range");
            }
            if (s.z_[d][i] < 0 || static_cast<std::size_t>(s.z_[d][i]) >= s.num_topics_) {
                throw LdaError(LdaErrorKind::EmptyCorpus, "topic id out of range");
            }
        }
    }
    s.set_alpha(std::move(alpha));
    s.rebuild_counts();
    s.scratch_.resize(s.num_topics_);
    return s;
}

void LdaState::rebuild_counts() {
    const std::size_t K = num_topics_;
    n_dk_.assign(docs_.size() * K, 0);
    n_wk_.assign(vocab_size_ * K, 0);
    n_k_.assign(K, 0);
    for (std::size_t d = 0; d < docs_.size(); ++d) {
        for (std::size_t i = 0; i < docs_[d].size(); ++i) {
            const auto k = static_cast<std::size_t>(z_[d][i]);
            ++n_dk_[d * K + k];
            ++n_wk_[docs_[d][i] * K + k];
            ++n_k_[k];
        }
    }
}

bool LdaState::counts_match_assignments() const {
    LdaState copy;
    copy.num_topics_ = num_topics_;
    copy.vocab_size_ = vocab_size_;
    copy.docs_ = docs_;
    copy.z_ = z_;
    copy.rebuild_counts();
    return copy.n_dk_ == n_dk_ && copy.n_wk_ == n_wk_ && copy.n_k_ == n_k_;
}

void LdaState::set_alpha(std::vector<double> alpha) {
    if (alpha.size() != num_topics_) {
        throw LdaError(LdaErrorKind::EmptyCorpus, "alpha length must equal K");
    }
    alpha_ = std::move(alpha);
    alpha_total_ = std::accumulate(alpha_.begin(), alpha_.end(), 0.0);
}

double LdaState::phi(std::size_t k, std::size_t w) const {
    return (n_kw(k, w) + beta_) / (n_k_[k] + static_cast<double>(vocab_size_) * beta_);
}

std::vector<double> LdaState::conditional(std::size_t d, std::size_t pos) const {
    const std::size_t K = num_topics_;
    const std::uint32_t w = docs_[d][pos];
    const auto own = static_cast<std::size_t>(z_[d][pos]);
    const double vbeta = static_cast<double>(vocab_size_) * beta_;
    std::vector<double> p(K);
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const int self = k == own ? 1 : 0;
        p[k] = (n_dk_[d * K + k] - self + alpha_[k]) * (n_wk_[w * K + k] - self + beta_) /
               (n_k_[k] - self + vbeta);
        total += p[k];
    }
    for (auto& v : p) v /= total;
    return p;
}

void LdaState::sweep(const SiteObserver& observer) {
    const std::size_t K = num_topics_;
    const double vbeta = static_cast<double>(vocab_size_) * beta_;
    std::vector<double>& cum = scratch_;
    std::vector<double> normalized;
    if (observer) normalized.resize(K);

    for (std::size_t d = 0; d < docs_.size(); ++d) {
        int* doc_counts = &n_dk_[d * K];
        const WordIds& words = docs_[d];
        std::vector<int>& zd = z_[d];
        for (std::size_t i = 0; i < words.size(); ++i) {
            const std::uint32_t w = words[i];
            int* word_counts = &n_wk_[static_cast<std::size_t>(w) * K];
            const auto old = static_cast<std::size_t>(zd[i]);
            --doc_counts[old];
            --word_counts[old];
            --n_k_[old];

            double total = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                total += (doc_counts[k] + alpha_[k]) * (word_counts[k] + beta_) / (n_k_[k] + vbeta);
                cum[k] = total;
            }
            if (observer) {
                double prev = 0.0;
                for (std::size_t k = 0; k < K; ++k) {
                    normalized[k] = (cum[k] - prev) / total;
                    prev = cum[k];
                }
                observer(normalized);
            }
            const double u = rng_.uniform01() * total;
            std::size_t k = 0;
            while (k + 1 < K && cum[k] <= u) ++k;

            zd[i] = static_cast<int>(k);
            ++doc_counts[k];
            ++word_counts[k];
            ++n_k_[k];
        }
    }
    ++iteration_;
}

void LdaState::optimize_alpha(double tolerance, std::size_t max_rounds) {
    const std::size_t K = num_topics_;
    // Histograms of nonzero counts: value -> number of documents.
    std::vector<std::map<int, std::size_t>> topic_hist(K);
    std::map<int, std::size_t> length_hist;
    for (std::size_t d = 0; d < docs_.size(); ++d) {
        const int len = n_d(d);
        if (len == 0) continue;
        ++length_hist[len];
        for (std::size_t k = 0; k < K; ++k) {
            const int c = n_dk_[d * K + k];
            if (c > 0) ++topic_hist[k][c];
        }
    }
    if (length_hist.empty()) return;

    std::vector<double> alpha = alpha_;
    for (std::size_t round = 0; round < max_rounds; ++round) {
        const double total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
        double denom = 0.0;
        const double psi_total = digamma(total);
        for (const auto& [len, count] : length_hist) {
            denom += static_cast<double>(count) * (digamma(len + total) - psi_total);
        }
        double max_rel = 0.0;
        std::vector<double> next(K);
        for (std::size_t k = 0; k < K; ++k) {
            double numer = 0.0;
            const double psi_a = digamma(alpha[k]);
            for (const auto& [c, count] : topic_hist[k]) {
                numer += static_cast<double>(count) * (digamma(c + alpha[k]) - psi_a);
            }
            next[k] = std::max(alpha[k] * numer / denom, 1e-6);
            max_rel = std::max(max_rel, std::abs(next[k] - alpha[k]) / alpha[k]);
        }
        alpha = std::move(next);
        if (max_rel < tolerance) break;
    }
    set_alpha(std::move(alpha));
}

LdaState init_lda_state(std::vector<WordIds> docs, const Vocabulary& vocab, std::size_t num_topics,
                        std::uint64_t seed) {
    return LdaState::initialize(std::move(docs), vocab.size(), num_topics, seed);
}

void gibbs_sweep(LdaState& state) { state.sweep(); }

void optimize_alpha(LdaState& state) { state.optimize_alpha(); }

LdaState train_lda(std::vector<WordIds> docs, std::size_t vocab_size, const LdaConfig& config,
                   const std::function<void(const LdaState&)>& on_sweep) {
    LdaState state = LdaState::initialize(std::move(docs), vocab_size, config.num_topics, config.seed,
                                          config.alpha_sum, config.beta);
    for (std::size_t s = 0; s < config.sweeps; ++s) {
        state.sweep();
        if (config.optimize_interval > 0 && state.iteration() > config.burn_in &&
            state.iteration() % config.optimize_interval == 0) {
            state.optimize_alpha();
        }
        if (on_sweep) on_sweep(state);
    }
    return state;
}

double dirichlet_multinomial_log_likelihood(const LdaState& state, std::span<const double> alpha) {
    const std::size_t K = state.num_topics();
    const double total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    double ll = 0.0;
    for (std::size_t d = 0; d < state.num_docs(); ++d) {
        ll += std::lgamma(total) - std::lgamma(state.n_d(d) + total);
        for (std::size_t k = 0; k < K; ++k) {
            ll += std::lgamma(state.n_dk(d, k) + alpha[k]) - std::lgamma(alpha[k]);
        }
    }
    return ll;
}

TopicModel freeze(const LdaState& state, Vocabulary vocab) {
    TopicModel m;
    m.num_topics = state.num_topics();
    m.beta = state.beta();
    m.iteration = state.iteration();
    m.seed = state.seed();
    m.alpha.assign(state.alpha().begin(), state.alpha().end());
    m.n_wk.resize(state.vocab_size() * m.num_topics);
    m.n_k.resize(m.num_topics);
    for (std::size_t w = 0; w < state.vocab_size(); ++w) {
        for (std::size_t k = 0; k < m.num_topics; ++k) {
            m.n_wk[w * m.num_topics + k] = state.n_kw(k, w);
        }
    }
    for (std::size_t k = 0; k < m.num_topics; ++k) m.n_k[k] = state.n_k(k);
    m.vocab = std::move(vocab);
    if (m.vocab.size() != state.vocab_size()) {
        throw LdaError(LdaErrorKind::BadModelFile, "vocabulary size does not match state");
    }
    return m;
}

void save_topic_model(const TopicModel& model, const std::string& path) {
    const std::size_t K = model.num_topics;
    const std::size_t V = model.vocab_size();
    json n_kw = json::array();
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<int> row(V);
        for (std::size_t w = 0; w < V; ++w) row[w] = model.n_kw(k, w);
        n_kw.push_back(std::move(row));
    }
    std::vector<std::size_t> df(V);
    for (std::uint32_t w = 0; w < V; ++w) df[w] = model.vocab.doc_frequency(w);
    const json j{{"format", "stancebench-lda"},
                 {"version", 1},
                 {"K", K},
                 {"V", V},
                 {"beta", model.beta},
                 {"iteration", model.iteration},
                 {"seed", model.seed},
                 {"alpha", model.alpha},
                 {"vocabulary", model.vocab.tokens()},
                 {"doc_frequency", df},
                 {"n_kw", n_kw}};
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw LdaError(LdaErrorKind::BadModelFile, "cannot write " + path);
    out << j.dump() << '\n';
}

TopicModel load_topic_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LdaError(LdaErrorKind::BadModelFile, "cannot open " + path);
    try {
        const json j = json::parse(in);
        if (j.at("format") != "stancebench-lda" || j.at("version") != 1) {
            throw LdaError(LdaErrorKind::BadModelFile, path + ": unsupported topic model format");
        }
        TopicModel m;
        m.num_topics = j.at("K").get<std::size_t>();
        const auto V = j.at("V").get<std::size_t>();
        m.beta = j.at("beta").get<double>();
        m.iteration = j.at("iteration").get<std::size_t>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.alpha = j.at("alpha").get<std::vector<double>>();
        m.vocab = Vocabulary(j.at("vocabulary").get<std::vector<std::string>>(),
                             j.at("doc_frequency").get<std::vector<std::size_t>>());
        const auto& rows = j.at("n_kw");
        if (m.alpha.size() != m.num_topics || m.vocab.size() != V || rows.size() != m.num_topics) {
            throw LdaError(LdaErrorKind::BadModelFile, path + ": inconsistent dimensions");
        }
        m.n_wk.assign(V * m.num_topics, 0);
        m.n_k.assign(m.num_topics, 0);
        for (std::size_t k = 0; k < m.num_topics; ++k) {
            const auto row = rows[k].get<std::vector<int>>();
            if (row.size() != V) throw LdaError(LdaErrorKind::BadModelFile, path + ": bad n_kw row");
            for (std::size_t w = 0; w < V; ++w) {
                m.n_wk[w * m.num_topics + k] = row[w];
                m.n_k[k] += row[w];
            }
        }
        return m;
    } catch (const json::exception& e) {
        throw LdaError(LdaErrorKind::BadModelFile, path + ": " + e.what());
    }
}

TopicReport top_keywords(const LdaState& state, const Vocabulary& vocab, std::size_t n) {
    const std::size_t K = state.num_topics();
    const std::size_t V = state.vocab_size();
    n = std::min(n, V);
    TopicReport report;
    std::vector<std::uint32_t> order(V);
    for (std::size_t k = 0; k < K; ++k) {
        std::iota(order.begin(), order.end(), 0u);
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                          [&](std::uint32_t a, std::uint32_t b) {
                              const int ca = state.n_kw(k, a);
                              const int cb = state.n_kw(k, b);
                              return ca != cb ? ca > cb : a < b;
                          });
        TopicSummary summary;
        summary.id = static_cast<int>(k);
        summary.share = static_cast<double>(state.n_k(k)) / static_cast<double>(state.num_tokens());
        for (std::size_t i = 0; i < n; ++i) {
            summary.keywords.emplace_back(vocab.token(order[i]), state.phi(k, order[i]));
        }
        report.topics.push_back(std::move(summary));
    }
    return report;
}

void add_source_topic_counts(TopicReport& report, std::span<const Article> articles, std::size_t num_topics,
                             bool use_k15) {
    for (const auto& a : articles) {
        const auto& topic = use_k15 ? a.topic_k15 : a.topic_k10;
        if (!topic || *topic < 0 || static_cast<std::size_t>(*topic) >= num_topics) continue;
        auto& row = report.source_topic_counts[a.source_id];
        row.resize(num_topics, 0);
        ++row[static_cast<std::size_t>(*topic)];
    }
}

std::string render_keywords_tsv(const TopicReport& report) {
    std::ostringstream out;
    out << "topic\tshare\tkeywords\n";
    for (const auto& t : report.topics) {
        out << t.id << '\t' << t.share << '\t';
        for (std::size_t i = 0; i < t.keywords.size(); ++i) {
            if (i) out << ' ';
            out << t.keywords[i].first;
        }
        out << '\n';
    }
    return out.str();
}

std::string render_source_topic_tsv(const TopicReport& report, std::size_t num_topics) {
    std::ostringstream out;
    out << "source_id";
    for (std::size_t k = 0; k < num_topics; ++k) out << '\t' << k;
    out << '\n';
    for (const auto& [source, counts] : report.source_topic_counts) {
        out << source;
        for (std::size_t k = 0; k < num_topics; ++k) out << '\t' << (k < counts.size() ? counts[k] : 0);
        out << '\n';
    }
    return out.str();
}

std::size_t argmax_lowest(std::span<const int> counts) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < counts.size(); ++k) {
        if (counts[k] > counts[best]) best = k;
    }
    return best;
}

int infer_dominant_topic(const TokenStream& doc, const TopicModel& model, std::uint64_t seed,
                         std::size_t sweeps) {
    const auto words = model.vocab.encode(doc.tokens);
    if (words.empty()) {
        throw LdaError(LdaErrorKind::EmptyDocument, "document has no in-vocabulary tokens");
    }
    const std::size_t K = model.num_topics;
    const double vbeta = static_cast<double>(model.vocab_size()) * model.beta;
    Rng rng(seed);
    std::vector<int> z(words.size());
    std::vector<int> counts(K, 0);
    for (auto& zi : z) {
        zi = static_cast<int>(rng.uniform_index(K));
        ++counts[static_cast<std::size_t>(zi)];
    }
    std::vector<double> cum(K);
    for (std::size_t s = 0; s < sweeps; ++s) {
        for (std::size_t i = 0; i < words.size(); ++i) {
            --counts[static_cast<std::size_t>(z[i])];
            const int* word_counts = &model.n_wk[static_cast<std::size_t>(words[i]) * K];
            double total = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                total += (counts[k] + model.alpha[k]) * (word_counts[k] + model.beta) / (model.n_k[k] + vbeta);
                cum[k] = total;
            }
            const double u = rng.uniform01() * total;
            std::size_t k = 0;
            while (k + 1 < K && cum[k] <= u) ++k;
            z[i] = static_cast<int>(k);
            ++counts[k];
        }
    }
    return static_cast<int>(argmax_lowest(counts));
}

TopicSelection parse_topic_selection(const json& j, std::string_view language) {
    const json* body = &j;
    if (!j.contains("k10") && !j.contains("k15")) {
        const auto it = j.find(std::string(language));
        if (language.empty() || it == j.end()) {
            throw LdaError(LdaErrorKind::BadSelection,
                           "topic selection has no entry for language '" + std::string(language) + "'");
        }
        body = &*it;
    }
    TopicSelection sel;
    const auto read = [&](const char* key, std::set<int>& into) {
        const auto it = body->find(key);
        if (it == body->end()) return;
        if (!it->is_array()) throw LdaError(LdaErrorKind::BadSelection, std::string(key) + " must be an array");
        for (const auto& v : *it) {
            if (!v.is_number_integer() || v.get<int>() < 0) {
                throw LdaError(LdaErrorKind::BadSelection, std::string(key) + " holds a non-topic id");
            }
            into.insert(v.get<int>());
        }
    };
    read("k10", sel.selected_k10);
    read("k15", sel.selected_k15);
    return sel;
}

TopicSelection load_topic_selection(const std::string& path, std::string_view language) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LdaError(LdaErrorKind::BadSelection, "cannot open topic selection " + path);
    try {
        return parse_topic_selection(json::parse(in), language);
    } catch (const json::exception& e) {
        throw LdaError(LdaErrorKind::BadSelection, path + ": " + e.what());
    }
}

TopicFilterResult filter_by_topics(std::span<const Article> articles, const TopicSelection& selection) {
    TopicFilterResult result;
    result.total = articles.size();
    for (const auto& a : articles) {
        if (!a.topic_k10 || !a.topic_k15) {
            throw LdaError(LdaErrorKind::MissingTopicAssignment,
                           "article '" + a.article_id + "' lacks a topic assignment");
        }
        if (selection.selected_k10.contains(*a.topic_k10) || selection.selected_k15.contains(*a.topic_k15)) {
            result.kept.push_back(a);
        }
    }
    result.filtered_out_fraction =
        result.total == 0 ? 0.0
                          : static_cast<double>(result.total - result.kept.size()) / static_cast<double>(result.total);
    return result;
}

} // namespace stancebench
