#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stancebench/corpus.hpp"
#include "stancebench/error.hpp"
#include "stancebench/rng.hpp"
#include "stancebench/textprep.hpp"

namespace stancebench {

enum class LdaErrorKind { EmptyCorpus, EmptyDocument, MissingTopicAssignment, BadModelFile, BadSelection };
using LdaError = KindedError<LdaErrorKind>;

class Vocabulary {
public:
    Vocabulary() = default;
    /// Ids follow the order of `tokens`, which must be unique.
    Vocabulary(std::vector<std::string> tokens, std::vector<std::size_t> doc_frequency);

    std::size_t size() const noexcept { return tokens_.size(); }
    std::optional<std::uint32_t> id_of(std::string_view token) const;
    const std::string& token(std::uint32_t id) const { return tokens_.at(id); }
    std::size_t doc_frequency(std::uint32_t id) const { return doc_frequency_.at(id); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    /// In-vocabulary ids of `tokens`, in order; unknown tokens dropped.
    std::vector<std::uint32_t> encode(std::span<const std::string> tokens) const;

private:
    std::vector<std::string> tokens_;
    std::vector<std::size_t> doc_frequency_;
    std::unordered_map<std::string, std::uint32_t> ids_;
};

/// Keeps tokens occurring in at least min_doc_freq documents; ids assigned
/// in lexicographic (byte) order.
Vocabulary build_vocabulary(std::span<const TokenStream> docs, std::size_t min_doc_freq = 1);

using WordIds = std::vector<std::uint32_t>;

struct LdaConfig {
    std::size_t num_topics = 10;
    double alpha_sum = 5.0; // initial alpha_k = alpha_sum / K
    double beta = 0.01;
    std::size_t sweeps = 1000;
    std::size_t burn_in = 50;
    std::size_t optimize_interval = 10; // 0 disables alpha optimization
    std::uint64_t seed = 0;
};

/// Collapsed Gibbs sampler state. Count tables are always the exact tallies
/// of the assignment vector z.
class LdaState {
public:
    LdaState() = default;

    /// Uniform-random initial assignments from a generator seeded with `seed`.
    static LdaState initialize(std::vector<WordIds> docs, std::size_t vocab_size,
                               std::size_t num_topics, std::uint64_t seed,
                               double alpha_sum = 5.0, double beta = 0.01);

    /// State with caller-supplied assignments (counts rebuilt from them).
    static LdaState from_assignments(std::vector<WordIds> docs, std::vector<std::vector<int>> z,
                                     std::size_t vocab_size, std::vector<double> alpha,
                                     double beta, std::uint64_t seed = 0);

    std::size_t num_topics() const noexcept { return num_topics_; }
    std::size_t vocab_size() const noexcept { return vocab_size_; }
    std::size_t num_docs() const noexcept { return docs_.size(); }
    std::size_t num_tokens() const noexcept { return num_tokens_; }
    std::size_t iteration() const noexcept { return iteration_; }
    std::uint64_t seed() const noexcept { return seed_; }
    double beta() const noexcept { return beta_; }
    std::span<const double> alpha() const noexcept { return alpha_; }

    const std::vector<WordIds>& docs() const noexcept { return docs_; }
    const std::vector<std::vector<int>>& assignments() const noexcept { return z_; }

    int n_dk(std::size_t d, std::size_t k) const { return n_dk_[d * num_topics_ + k]; }
    int n_kw(std::size_t k, std::size_t w) const { return n_wk_[w * num_topics_ + k]; }
    int n_k(std::size_t k) const { return n_k_[k]; }
    int n_d(std::size_t d) const { return static_cast<int>(docs_[d].size()); }

    /// Normalized p(z_i = k | rest) for token `pos` of document `d`, with
    /// that token's own assignment excluded from the counts.
    std::vector<double> conditional(std::size_t d, std::size_t pos) const;

    /// Resamples every token once, in document order.
    using SiteObserver = std::function<void(std::span<const double>)>;
    void sweep(const SiteObserver& observer = {});

    /// Minka fixed-point update of the asymmetric Dirichlet prior.
    void optimize_alpha(double tolerance = 1e-5, std::size_t max_rounds = 100);
    void set_alpha(std::vector<double> alpha);

    /// Topic-word probability (n_kw + beta) / (n_k + V beta).
    double phi(std::size_t k, std::size_t w) const;

    /// Rebuilds all count tables from z and compares; true when identical.
    bool counts_match_assignments() const;

private:
    void rebuild_counts();

    std::size_t num_topics_ = 0;
    std::size_t vocab_size_ = 0;
    std::size_t num_tokens_ = 0;
    std::size_t iteration_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<double> alpha_;
    double alpha_total_ = 0.0;
    double beta_ = 0.01;
    std::vector<WordIds> docs_;
    std::vector<std::vector<int>> z_;
    std::vector<int> n_dk_; // doc-major  [d * K + k]
    std::vector<int> n_wk_; // word-major [w * K + k]
    std::vector<int> n_k_;
    std::vector<double> scratch_;
    Rng rng_;
};

/// Free-function spelling of the sampler operations.
LdaState init_lda_state(std::vector<WordIds> docs, const Vocabulary& vocab, std::size_t num_topics,
                        std::uint64_t seed);
void gibbs_sweep(LdaState& state);
void optimize_alpha(LdaState& state);

/// init + `sweeps` sweeps, optimizing alpha every optimize_interval sweeps
/// once past burn_in. `on_sweep` is called after each sweep.
LdaState train_lda(std::vector<WordIds> docs, std::size_t vocab_size, const LdaConfig& config,
                   const std::function<void(const LdaState&)>& on_sweep = {});

/// Dirichlet-multinomial log evidence of the doc-topic counts under `alpha`.
double dirichlet_multinomial_log_likelihood(const LdaState& state, std::span<const double> alpha);

/// Topic-word tables frozen for fold-in inference.
struct TopicModel {
    std::size_t num_topics = 0;
    double beta = 0.01;
    std::size_t iteration = 0;
    std::uint64_t seed = 0;
    std::vector<double> alpha;
    std::vector<int> n_wk; // word-major
    std::vector<int> n_k;
    Vocabulary vocab;

    std::size_t vocab_size() const noexcept { return vocab.size(); }
    int n_kw(std::size_t k, std::size_t w) const { return n_wk[w * num_topics + k]; }
};

TopicModel freeze(const LdaState& state, Vocabulary vocab);

void save_topic_model(const TopicModel& model, const std::string& path);
TopicModel load_topic_model(const std::string& path);

struct TopicSummary {
    int id = 0;
    double share = 0.0; // fraction of corpus tokens assigned to the topic
    std::vector<std::pair<std::string, double>> keywords;
};

struct TopicReport {
    std::vector<TopicSummary> topics;
    // source_id -> article count per topic
    std::map<std::string, std::vector<std::size_t>> source_topic_counts;
};

/// Per topic, the n words of highest phi in descending order (ties by word id).
TopicReport top_keywords(const LdaState& state, const Vocabulary& vocab, std::size_t n = 30);
void add_source_topic_counts(TopicReport& report, std::span<const Article> articles,
                             std::size_t num_topics, bool use_k15);
std::string render_keywords_tsv(const TopicReport& report);
std::string render_source_topic_tsv(const TopicReport& report, std::size_t num_topics);

/// Lowest index among maximal entries.
std::size_t argmax_lowest(std::span<const int> counts);

inline constexpr std::size_t kInferenceSweeps = 20;

/// Fold-in: samples the document's assignments against frozen topic-word
/// counts and returns the argmax of its final doc-topic counts.
int infer_dominant_topic(const TokenStream& doc, const TopicModel& model, std::uint64_t seed,
                         std::size_t sweeps = kInferenceSweeps);

struct TopicSelection {
    std::set<int> selected_k10;
    std::set<int> selected_k15;
};

/// Accepts the flat form {"k10": [...], "k15": [...]} or a per-language map
/// {"en": {"k10": ...}, ...}; `language` picks the entry in the latter.
TopicSelection parse_topic_selection(const nlohmann::json& j, std::string_view language = {});
TopicSelection load_topic_selection(const std::string& path, std::string_view language = {});

struct TopicFilterResult {
    std::vector<Article> kept;
    std::size_t total = 0;
    double filtered_out_fraction = 0.0;
};

/// Keeps an article when its K=10 topic or its K=15 topic is selected.
TopicFilterResult filter_by_topics(std::span<const Article> articles, const TopicSelection& selection);

} // namespace stancebench
