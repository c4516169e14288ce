#include "stancebench/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "stancebench/evalrep.hpp"
#include "stancebench/hashing.hpp"
#include "stancebench/lda.hpp"
#include "stancebench/probe.hpp"
#include "stancebench/rng.hpp"
#include "stancebench/textprep.hpp"

namespace stancebench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kVersion = "0.1.0";

// Stream ids for seeds derived from the top-level seed.
enum SeedStream : std::uint64_t { kLdaStream = 1, kSplitStream = 2, kTrainStream = 3, kEvalStream = 4 };

const std::set<std::string> kKnownLanguages{"en", "de", "es", "ca"};

// ---------- config helpers ----------

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& field_prefix) {
    if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(ConfigErrorKind::InvalidValue, field_prefix + key, e.what());
    }
}

const json& section(const json& j, const char* key) {
    static const json empty = json::object();
    if (!j.contains(key)) return empty;
    const json& s = j.at(key);
    if (!s.is_object()) throw ConfigError(ConfigErrorKind::InvalidValue, key, "must be an object");
    return s;
}

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    const fs::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

void require_exists(const fs::path& p, const std::string& field) {
    if (!fs::exists(p)) throw ConfigError(ConfigErrorKind::MissingPath, field, "no such path: " + p.string());
}

void require(bool ok, const std::string& field, const std::string& reason) {
    if (!ok) throw ConfigError(ConfigErrorKind::InvalidValue, field, reason);
}

std::string path_str(const fs::path& p) { return p.string(); }

// ---------- stage helpers ----------

class StageContext {
public:
    StageContext(const RunConfig& config, const RunOptions& options) : config_(config), options_(options) {}

    const RunConfig& config() const { return config_; }
    const RunOptions& options() const { return options_; }
    fs::path out(const std::string& rel) const { return config_.output_dir / rel; }

    void log(const std::string& msg) const {
        if (!options_.quiet) std::cerr << "[stancebench] " << msg << '\n';
    }

private:
    const RunConfig& config_;
    const RunOptions& options_;
};

fs::path need(const StageContext& ctx, std::string_view stage, const std::string& rel) {
    const fs::path p = ctx.out(rel);
    if (!fs::exists(p)) {
        throw PipelineError(PipelineErrorKind::MissingArtifact, std::string(stage), "expected " + p.string());
    }
    return p;
}

void write_text(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_articles(const fs::path& path, std::span<const Article> articles) {
    fs::create_directories(path.parent_path());
    write_articles_jsonl(path.string(), articles);
}

std::uint64_t string_stream(std::string_view s) { return fnv1a64(s); }

// Languages in config order that actually occur in `articles`.
std::vector<std::string> present_languages(const RunConfig& c, std::span<const Article> articles) {
    std::set<std::string> seen;
    for (const auto& a : articles) seen.insert(a.language);
    std::vector<std::string> out;
    for (const auto& l : c.languages) {
        if (seen.contains(l)) out.push_back(l);
    }
    return out;
}

std::vector<ModelSpec> effective_models(const RunConfig& c, std::span<const Article> train_articles) {
    if (!c.models.empty()) return c.models;
    std::vector<ModelSpec> out;
    for (const auto& l : present_languages(c, train_articles)) out.push_back({l, {l}, std::nullopt});
    return out;
}

bool model_covers(const ModelSpec& m, const std::string& lang) {
    return std::find(m.languages.begin(), m.languages.end(), lang) != m.languages.end();
}

// ---------- stages ----------

void stage_ingest(const StageContext& ctx) {
    const auto& c = ctx.config();
    const std::set<std::string> langs(c.languages.begin(), c.languages.end());
    const auto sources = load_source_manifest(path_str(c.manifest), langs);
    std::vector<Article> all;
    std::set<std::string> ids;
    json stats = json::array();
    for (const auto& path : c.articles) {
        auto result = ingest_articles(path_str(path), sources, c.unknown_source);
        std::size_t cross_file_duplicates = 0;
        for (auto& a : result.articles) {
            if (!langs.contains(a.language)) continue;
            if (!ids.insert(a.article_id).second) {
                ++cross_file_duplicates;
                continue;
            }
            all.push_back(std::move(a));
        }
        stats.push_back({{"file", path.filename().string()},
                         {"lines", result.stats.lines},
                         {"accepted", result.stats.accepted},
                         {"skipped_unknown_source", result.stats.skipped_unknown},
                         {"duplicates", result.stats.duplicates + cross_file_duplicates},
                         {"unknown_domains", result.stats.unknown_domains}});
    }
    write_articles(ctx.out("ingest/articles.jsonl"), all);
    write_json(ctx.out("ingest/stats.json"), stats);
    ctx.log("ingest: " + std::to_string(all.size()) + " articles");
}

void stage_clean(const StageContext& ctx) {
    const auto& c = ctx.config();
    const auto articles = read_articles_jsonl(path_str(need(ctx, "clean", "ingest/articles.jsonl")));
    std::map<std::string, std::vector<Article>> by_source;
    std::size_t too_short = 0;
    std::size_t too_long = 0;
    for (const auto& a : articles) {
        if (!filter_by_length(a)) {
            ++(a.word_count < kMinArticleWords ? too_short : too_long);
            continue;
        }
        by_source[a.source_id].push_back(a);
    }
    std::map<std::string, BoilerplateProfile> profiles;
    json bp = json::object();
    for (const auto& [source, docs] : by_source) {
        profiles[source] = detect_boilerplate(docs, c.boilerplate_fraction, c.boilerplate_count);
        bp[source] = {{"documents", docs.size()}, {"lines", profiles[source].lines}};
    }
    std::vector<Article> cleaned;
    for (const auto& a : articles) {
        if (!filter_by_length(a)) continue;
        cleaned.push_back(strip_boilerplate(a, profiles.at(a.source_id)));
    }
    write_articles(ctx.out("clean/articles.jsonl"), cleaned);
    write_json(ctx.out("clean/boilerplate.json"),
               {{"min_doc_fraction", c.boilerplate_fraction}, {"min_doc_count", c.boilerplate_count}, {"sources", bp}});
    write_json(ctx.out("clean/stats.json"), {{"input", articles.size()},
                                             {"kept", cleaned.size()},
                                             {"dropped_short", too_short},
                                             {"dropped_long", too_long}});
    ctx.log("clean: kept " + std::to_string(cleaned.size()) + " of " + std::to_string(articles.size()));
}

void stage_topics(const StageContext& ctx) {
    const auto& c = ctx.config();
    auto articles = read_articles_jsonl(path_str(need(ctx, "topics", "clean/articles.jsonl")));
    json summary = json::object();
    for (const auto& lang : present_languages(c, articles)) {
        std::vector<std::size_t> idx;
        std::vector<TokenStream> streams;
        const auto stopwords = StopwordList::for_language(path_str(c.stopwords_dir), lang);
        for (std::size_t i = 0; i < articles.size(); ++i) {
            if (articles[i].language != lang) continue;
            idx.push_back(i);
            streams.push_back(tokenize(articles[i].text(), lang, stopwords));
        }
        const Vocabulary vocab = build_vocabulary(streams, c.lda_min_doc_freq);
        std::vector<WordIds> docs;
        docs.reserve(streams.size());
        for (const auto& s : streams) docs.push_back(vocab.encode(s.tokens));

        json lang_summary = json::object();
        for (std::size_t slot = 0; slot < c.topic_counts.size(); ++slot) {
            const std::size_t K = c.topic_counts[slot];
            LdaConfig cfg;
            cfg.num_topics = K;
            cfg.alpha_sum = c.lda_alpha_sum;
            cfg.beta = c.lda_beta;
            cfg.sweeps = c.lda_sweeps;
            cfg.burn_in = c.lda_burn_in;
            cfg.optimize_interval = c.lda_optimize_interval;
            cfg.seed = derive_seed(c.lda_seed, string_stream(lang) ^ K);
            const auto t0 = std::chrono::steady_clock::now();
            const LdaState state = train_lda(docs, vocab.size(), cfg);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

            for (std::size_t d = 0; d < docs.size(); ++d) {
                std::vector<int> row(K);
                for (std::size_t k = 0; k < K; ++k) row[k] = state.n_dk(d, k);
                const int topic = static_cast<int>(argmax_lowest(row));
                (slot == 0 ? articles[idx[d]].topic_k10 : articles[idx[d]].topic_k15) = topic;
            }
            std::vector<Article> lang_articles;
            for (auto i : idx) lang_articles.push_back(articles[i]);
            TopicReport report = top_keywords(state, vocab, c.lda_keywords);
            add_source_topic_counts(report, lang_articles, K, slot == 1);

            const std::string dir = "topics/" + lang + "/k" + std::to_string(K) + "/";
            fs::create_directories(ctx.out(dir));
            save_topic_model(freeze(state, vocab), path_str(ctx.out(dir + "model.json")));
            write_text(ctx.out(dir + "keywords.tsv"), render_keywords_tsv(report));
            write_text(ctx.out(dir + "source_topic.tsv"), render_source_topic_tsv(report, K));
            lang_summary["k" + std::to_string(K)] = {{"documents", docs.size()},
                                                     {"vocabulary", vocab.size()},
                                                     {"tokens", state.num_tokens()},
                                                     {"alpha", std::vector<double>(state.alpha().begin(), state.alpha().end())}};
            ctx.log("topics: " + lang + " K=" + std::to_string(K) + " on " + std::to_string(docs.size()) +
                    " docs in " + std::to_string(secs) + " s");
        }
        summary[lang] = lang_summary;
    }
    write_articles(ctx.out("topics/articles.jsonl"), articles);
    write_json(ctx.out("topics/summary.json"),
               {{"sweeps", c.lda_sweeps}, {"burn_in", c.lda_burn_in}, {"optimize_interval", c.lda_optimize_interval},
                {"languages", summary}});
}

void stage_filter(const StageContext& ctx) {
    const auto& c = ctx.config();
    const auto articles = read_articles_jsonl(path_str(need(ctx, "filter", "topics/articles.jsonl")));
    if (c.selection.empty()) {
        throw PipelineError(PipelineErrorKind::MissingArtifact, "filter",
                            "no topic selection configured (paths.selection); inspect topics/*/keywords.tsv and write one");
    }
    std::vector<Article> kept;
    json report = json::object();
    for (const auto& lang : present_languages(c, articles)) {
        std::vector<Article> subset;
        for (const auto& a : articles) {
            if (a.language == lang) subset.push_back(a);
        }
        const auto selection = load_topic_selection(path_str(c.selection), lang);
        auto result = filter_by_topics(subset, selection);
        report[lang] = {{"total", result.total},
                        {"kept", result.kept.size()},
                        {"filtered_out_fraction", result.filtered_out_fraction},
                        {"selected_k10", selection.selected_k10},
                        {"selected_k15", selection.selected_k15}};
        for (auto& a : result.kept) kept.push_back(std::move(a));
        ctx.log("filter: " + lang + " kept " + std::to_string(report[lang]["kept"].get<std::size_t>()) + " of " +
                std::to_string(result.total));
    }
    // keep the input order across languages
    std::map<std::string, std::size_t> order;
    for (std::size_t i = 0; i < articles.size(); ++i) order[articles[i].article_id] = i;
    std::sort(kept.begin(), kept.end(),
              [&](const Article& a, const Article& b) { return order.at(a.article_id) < order.at(b.article_id); });
    write_articles(ctx.out("filter/articles.jsonl"), kept);
    write_json(ctx.out("filter/report.json"), report);
}

void stage_split(const StageContext& ctx) {
    const auto& c = ctx.config();
    const auto articles = read_articles_jsonl(path_str(need(ctx, "split", "filter/articles.jsonl")));
    SplitSpec spec;
    spec.val_size_per_class = c.val_size_per_class;
    spec.seed = c.split_seed;
    spec.test_source_ids = {c.test_sources.begin(), c.test_sources.end()};
    const auto tv = balanced_split(articles, spec);
    const auto test = select_test_articles(articles, spec);
    write_articles(ctx.out("split/train.jsonl"), tv.train);
    write_articles(ctx.out("split/val.jsonl"), tv.val);
    write_articles(ctx.out("split/test.jsonl"), test);

    std::map<std::string, std::map<std::string, std::map<std::string, std::size_t>>> stats;
    auto tally = [&](std::span<const Article> set, const char* name) {
        for (const auto& a : set) {
            const std::string key = a.label ? std::string(to_string(*a.label)) : "unrated";
            ++stats[a.language][name][key];
        }
    };
    tally(tv.train, "train");
    tally(tv.val, "val");
    tally(test, "test");
    write_json(ctx.out("split/stats.json"), stats);
    ctx.log("split: train " + std::to_string(tv.train.size()) + ", val " + std::to_string(tv.val.size()) + ", test " +
            std::to_string(test.size()));
}

std::vector<LabeledExample> to_examples(std::span<const Article> articles, const ModelSpec& m,
                                        const BackendConfig& backend, const EmbeddingStore* store) {
    std::vector<LabeledExample> out;
    for (const auto& a : articles) {
        if (!a.label || !model_covers(m, a.language)) continue;
        out.push_back({featurize(a, backend, store), *a.label});
    }
    return out;
}

std::optional<EmbeddingStore> load_embeddings(const RunConfig& c) {
    if (c.backend.kind != BackendKind::PrecomputedEmbedding) return std::nullopt;
    return EmbeddingStore::load(path_str(c.embeddings), c.backend.dim);
}

void stage_train(const StageContext& ctx) {
    const auto& c = ctx.config();
    const auto train_articles = read_articles_jsonl(path_str(need(ctx, "train", "split/train.jsonl")));
    const auto val_articles = read_articles_jsonl(path_str(need(ctx, "train", "split/val.jsonl")));
    const auto store = load_embeddings(c);
    const EmbeddingStore* store_ptr = store ? &*store : nullptr;
    for (const auto& m : effective_models(c, train_articles)) {
        const auto train_set = to_examples(train_articles, m, c.backend, store_ptr);
        const auto val_set = to_examples(val_articles, m, c.backend, store_ptr);
        TrainConfig tc = c.train;
        tc.peak_lr = c.peak_lr.value_or(default_peak_lr(c.backend.kind));
        tc.epochs = m.epochs.value_or(m.languages.size() == 1 ? default_epochs(m.languages.front()) : c.train.epochs);
        tc.seed = derive_seed(c.train.seed, string_stream(m.name));
        const auto t0 = std::chrono::steady_clock::now();
        const StanceModel model = train(train_set, val_set, c.backend, tc);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        const std::string dir = "train/" + m.name + "/";
        save_model(model, path_str(ctx.out(dir + "model.bin")));
        json evals = json::array();
        for (const auto& e : model.metadata.evals) evals.push_back({{"step", e.step}, {"accuracy", e.accuracy}});
        write_json(ctx.out(dir + "metadata.json"),
                   {{"model", m.name},
                    {"languages", m.languages},
                    {"train_examples", train_set.size()},
                    {"val_examples", val_set.size()},
                    {"epochs", tc.epochs},
                    {"batch_size", tc.batch_size},
                    {"peak_lr", tc.peak_lr},
                    {"warmup_fraction", tc.warmup_fraction},
                    {"warmup_fraction_is_default", tc.warmup_fraction == 0.06},
                    {"warmup_steps", model.metadata.warmup_steps},
                    {"total_steps", model.metadata.total_steps},
                    {"best_step", model.metadata.best_step},
                    {"best_val_accuracy", model.metadata.best_val_accuracy},
                    {"evals", evals},
                    {"seed", tc.seed},
                    {"digest", model_digest(model)}});
        ctx.log("train: " + m.name + " best val acc " + std::to_string(model.metadata.best_val_accuracy) + " at step " +
                std::to_string(model.metadata.best_step) + "/" + std::to_string(model.metadata.total_steps) + " (" +
                std::to_string(secs) + " s)");
    }
}

std::vector<fs::path> ilm_run_dirs(const RunConfig& c) {
    std::vector<fs::path> dirs = c.ilm_runs;
    if (c.probe_enabled && !c.probe_run_tag.empty()) {
        const fs::path probe_dir = c.probe_runs_dir / c.probe_run_tag;
        if (fs::exists(probe_dir / "generations.jsonl") &&
            std::find(dirs.begin(), dirs.end(), probe_dir) == dirs.end()) {
            dirs.push_back(probe_dir);
        }
    }
    return dirs;
}

std::vector<Article> ilm_articles(const RunConfig& c) {
    std::vector<Article> out;
    for (const auto& dir : ilm_run_dirs(c)) {
        auto run = articles_from_run(dir);
        out.insert(out.end(), std::make_move_iterator(run.begin()), std::make_move_iterator(run.end()));
    }
    return out;
}

void stage_eval(const StageContext& ctx) {
    const auto& c = ctx.config();
    const auto train_articles = read_articles_jsonl(path_str(need(ctx, "eval", "split/train.jsonl")));
    auto test = read_articles_jsonl(path_str(need(ctx, "eval", "split/test.jsonl")));
    const auto ilm = ilm_articles(c);
    test.insert(test.end(), ilm.begin(), ilm.end());
    const auto store = load_embeddings(c);
    const EmbeddingStore* store_ptr = store ? &*store : nullptr;

    std::vector<SourceReport> reports;
    for (const auto& m : effective_models(c, train_articles)) {
        const fs::path model_path = need(ctx, "eval", "train/" + m.name + "/model.bin");
        const StanceModel model = load_model(path_str(model_path));
        const std::string digest = model_digest(model);

        std::map<std::pair<std::string, std::string>, std::vector<Prediction>> groups;
        for (const auto& a : test) {
            if (!c.cross_lingual && !model_covers(m, a.language)) continue;
            // generated articles without a stored embedding cannot be scored by the precomputed backend
            if (!a.label && store_ptr && !store_ptr->find(a.article_id)) continue;
            groups[{a.language, a.source_id}].push_back(predict(model, a, store_ptr));
        }
        for (const auto& [key, preds] : groups) {
            const auto& [lang, source] = key;
            write_text(ctx.out("eval/" + m.name + "/" + source + "." + lang + ".predictions.tsv"),
                       render_predictions_tsv(preds));
            ReportMetadata md{m.name, digest, c.report_date, ""};
            const std::uint64_t seed =
                derive_seed(c.eval_seed, string_stream(m.name + '\0' + source + '\0' + lang));
            reports.push_back(make_source_report(source, lang, preds, c.n_boot, c.level, seed, md));
        }
        ctx.log("eval: " + m.name + " scored " + std::to_string(groups.size()) + " source/language groups");
    }
    json j = json::array();
    for (const auto& r : reports) j.push_back(r);
    write_json(ctx.out("eval/reports.json"), j);
}

void stage_probe(const StageContext& ctx) {
    const auto& c = ctx.config();
    if (!c.probe_enabled) {
        ctx.log("probe: disabled in config, skipping");
        return;
    }
    const auto subjects = load_subjects(path_str(c.probe_subjects));
    if (subjects.size() != kSubjectCount) {
        throw ProbeError(ProbeErrorKind::BadSubjects, "expected " + std::to_string(kSubjectCount) + " subjects, got " +
                                                          std::to_string(subjects.size()));
    }
    const auto templates = load_templates(path_str(c.probe_templates));
    const auto jobs = build_prompts(subjects, c.probe_languages, templates);

    ClientConfig cc;
    cc.model = c.probe_model;
    if (const char* key = std::getenv(c.probe_api_key_env.c_str())) cc.api_key = key;
    cc.max_attempts = c.probe_max_attempts;
    cc.requests_per_second = c.probe_rate;
    auto limiter = std::make_shared<RateLimiter>(c.probe_rate);
    GenerationClient client(make_http_transport(c.probe_endpoint, std::chrono::milliseconds(c.probe_timeout_ms)),
                            make_adapter(c.probe_adapter), cc, {}, limiter);
    CollectOptions opts;
    opts.run_tag = c.probe_run_tag;
    opts.runs_dir = path_str(c.probe_runs_dir);
    opts.resume = ctx.options().resume;
    opts.max_in_flight = c.probe_max_in_flight;
    opts.endpoint = c.probe_endpoint;
    const auto summary = collect_run(jobs, client, opts);
    ctx.log("probe: " + std::to_string(summary.succeeded) + " new records, " + std::to_string(summary.skipped_existing) +
            " already present, " + std::to_string(summary.failures.size()) + " failed");
}

void stage_report(const StageContext& ctx) {
    const auto reports = parse_report_json(read_text(need(ctx, "report", "eval/reports.json")));
    write_report_files(reports, path_str(ctx.out("report")));
    ctx.log("report: " + std::to_string(reports.size()) + " rows written to " + path_str(ctx.out("report")));
}

void run_single(Command command, const StageContext& ctx) {
    switch (command) {
    case Command::Ingest: stage_ingest(ctx); break;
    case Command::Clean: stage_clean(ctx); break;
    case Command::Topics: stage_topics(ctx); break;
    case Command::Filter: stage_filter(ctx); break;
    case Command::Split: stage_split(ctx); break;
    case Command::Train: stage_train(ctx); break;
    case Command::Probe: stage_probe(ctx); break;
    case Command::Eval: stage_eval(ctx); break;
    case Command::Report: stage_report(ctx); break;
    case Command::Pipeline: break;
    }
}

// Digests of each stage's outputs for provenance.json.
json stage_digests(const fs::path& dir) {
    json out = json::object();
    if (!fs::exists(dir)) return out;
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out[fs::relative(f, dir).generic_string()] = sha256_file(f.string());
    return out;
}

void update_provenance(const StageContext& ctx, Command stage, double seconds) {
    const fs::path path = ctx.out("provenance.json");
    json prov = json::object();
    if (fs::exists(path)) {
        try {
            prov = json::parse(read_text(path));
        } catch (const json::exception&) {
            prov = json::object();
        }
    }
    prov["tool"] = "stancebench";
    prov["version"] = kVersion;
    prov["config"] = ctx.config().to_json();
    const std::string name(to_string(stage));
    prov["stages"][name] = {{"seconds", seconds},
                            {"finished", utc_timestamp()},
                            {"outputs", stage_digests(ctx.out(name))}};
    write_json(path, prov);
}

class RunLock {
public:
    explicit RunLock(const fs::path& out_dir) : path_(out_dir / "run.lock") {
        fs::create_directories(out_dir);
        file_ = std::fopen(path_.string().c_str(), "wx");
        if (!file_) {
            throw PipelineError(PipelineErrorKind::Locked, "lock",
                                path_.string() + " exists; another run is active (remove it if stale)");
        }
        std::fprintf(file_, "%s\n", utc_timestamp().c_str());
        std::fflush(file_);
    }
    ~RunLock() {
        std::fclose(file_);
        std::error_code ec;
        fs::remove(path_, ec);
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    fs::path path_;
    std::FILE* file_ = nullptr;
};

} // namespace

std::vector<Article> articles_from_run(const fs::path& run_dir) {
    std::vector<Article> out;
    for (const auto& r : read_generations(path_str(run_dir))) {
        Article a;
        a.source_id = r.run_tag;
        a.language = r.language;
        a.raw_text = r.response;
        a.word_count = count_words(r.response);
        a.article_id = r.run_tag + ":" + r.language + ":" + std::to_string(r.subject_index);
        a.split = Split::Test;
        out.push_back(std::move(a));
    }
    return out;
}

json RunConfig::to_json() const {
    json models_j = json::array();
    for (const auto& m : models) {
        json mj{{"name", m.name}, {"languages", m.languages}};
        if (m.epochs) mj["epochs"] = *m.epochs;
        models_j.push_back(mj);
    }
    std::vector<std::string> article_paths;
    for (const auto& p : articles) article_paths.push_back(p.string());
    std::vector<std::string> ilm;
    for (const auto& p : ilm_runs) ilm.push_back(p.string());
    return json{
        {"seed", seed},
        {"languages", languages},
        {"paths",
         {{"manifest", manifest.string()},
          {"articles", article_paths},
          {"stopwords", stopwords_dir.string()},
          {"output_dir", output_dir.string()},
          {"selection", selection.string()}}},
        {"ingest", {{"unknown_source", unknown_source == UnknownSourcePolicy::Skip ? "skip" : "abort"}}},
        {"clean", {{"boilerplate_fraction", boilerplate_fraction}, {"boilerplate_count", boilerplate_count}}},
        {"lda",
         {{"topic_counts", topic_counts},
          {"sweeps", lda_sweeps},
          {"burn_in", lda_burn_in},
          {"optimize_interval", lda_optimize_interval},
          {"alpha_sum", lda_alpha_sum},
          {"beta", lda_beta},
          {"min_doc_freq", lda_min_doc_freq},
          {"keywords", lda_keywords},
          {"seed", lda_seed}}},
        {"split", {{"val_size_per_class", val_size_per_class}, {"test_sources", test_sources}, {"seed", split_seed}}},
        {"train",
         {{"backend", backend.kind == BackendKind::HashedNgram ? "hashed" : "precomputed"},
          {"dim", backend.dim},
          {"max_ngram", backend.max_ngram},
          {"embeddings", embeddings.string()},
          {"batch_size", train.batch_size},
          {"peak_lr", peak_lr ? json(*peak_lr) : json(default_peak_lr(backend.kind))},
          {"epochs", train.epochs},
          {"warmup_fraction", train.warmup_fraction},
          {"weight_decay", train.weight_decay},
          {"eval_every", train.eval_every},
          {"hidden", train.hidden},
          {"dropout", train.dropout_p},
          {"seed", train.seed},
          {"models", models_j}}},
        {"eval",
         {{"n_boot", n_boot},
          {"level", level},
          {"seed", eval_seed},
          {"ilm_runs", ilm},
          {"cross_lingual", cross_lingual},
          {"report_date", report_date}}},
        {"probe",
         {{"enabled", probe_enabled},
          {"endpoint", probe_endpoint},
          {"adapter", probe_adapter},
          {"model", probe_model},
          {"run_tag", probe_run_tag},
          {"languages", probe_languages},
          {"subjects", probe_subjects.string()},
          {"templates", probe_templates.string()},
          {"runs_dir", probe_runs_dir.string()},
          {"api_key_env", probe_api_key_env},
          {"rate", probe_rate},
          {"max_attempts", probe_max_attempts},
          {"max_in_flight", probe_max_in_flight},
          {"timeout_ms", probe_timeout_ms}}},
    };
}

RunConfig config_from_json(const json& j, const fs::path& base_dir, std::optional<std::uint64_t> seed_override) {
    if (!j.is_object()) throw ConfigError(ConfigErrorKind::ParseError, "config", "top level must be an object");
    RunConfig c;
    c.seed = seed_override.value_or(get_or<std::uint64_t>(j, "seed", c.seed, ""));
    c.languages = get_or(j, "languages", c.languages, "");
    require(!c.languages.empty(), "languages", "must be non-empty");
    for (const auto& l : c.languages) require(kKnownLanguages.contains(l), "languages", "unsupported language '" + l + "'");

    const json& paths = section(j, "paths");
    const auto manifest = get_or<std::string>(paths, "manifest", "", "paths.");
    if (manifest.empty()) throw ConfigError(ConfigErrorKind::MissingPath, "paths.manifest", "required");
    c.manifest = resolve(base_dir, manifest);
    require_exists(c.manifest, "paths.manifest");
    std::vector<std::string> article_paths;
    if (paths.contains("articles") && paths["articles"].is_string()) {
        article_paths.push_back(paths["articles"].get<std::string>());
    } else {
        article_paths = get_or<std::vector<std::string>>(paths, "articles", {}, "paths.");
    }
    if (article_paths.empty()) throw ConfigError(ConfigErrorKind::MissingPath, "paths.articles", "required");
    for (const auto& p : article_paths) {
        c.articles.push_back(resolve(base_dir, p));
        require_exists(c.articles.back(), "paths.articles");
    }
    const auto stop = get_or<std::string>(paths, "stopwords", "", "paths.");
    if (!stop.empty()) {
        c.stopwords_dir = resolve(base_dir, stop);
        require_exists(c.stopwords_dir, "paths.stopwords");
    }
    c.output_dir = resolve(base_dir, get_or<std::string>(paths, "output_dir", "out", "paths."));
    const auto sel = get_or<std::string>(paths, "selection", "", "paths.");
    if (!sel.empty()) {
        c.selection = resolve(base_dir, sel);
        require_exists(c.selection, "paths.selection");
    }

    const json& ingest = section(j, "ingest");
    const auto policy = get_or<std::string>(ingest, "unknown_source", "skip", "ingest.");
    require(policy == "skip" || policy == "abort", "ingest.unknown_source", "must be 'skip' or 'abort'");
    c.unknown_source = policy == "skip" ? UnknownSourcePolicy::Skip : UnknownSourcePolicy::Abort;

    const json& clean = section(j, "clean");
    c.boilerplate_fraction = get_or(clean, "boilerplate_fraction", c.boilerplate_fraction, "clean.");
    c.boilerplate_count = get_or(clean, "boilerplate_count", c.boilerplate_count, "clean.");
    require(c.boilerplate_fraction > 0.0 && c.boilerplate_fraction <= 1.0, "clean.boilerplate_fraction",
            "must lie in (0, 1]");

    const json& lda = section(j, "lda");
    c.topic_counts = get_or(lda, "topic_counts", c.topic_counts, "lda.");
    require(c.topic_counts.size() == 2, "lda.topic_counts", "exactly two topic counts are required");
    require(c.topic_counts[0] >= 1 && c.topic_counts[1] >= 1, "lda.topic_counts", "must be >= 1");
    c.lda_sweeps = get_or(lda, "sweeps", c.lda_sweeps, "lda.");
    c.lda_burn_in = get_or(lda, "burn_in", c.lda_burn_in, "lda.");
    c.lda_optimize_interval = get_or(lda, "optimize_interval", c.lda_optimize_interval, "lda.");
    c.lda_alpha_sum = get_or(lda, "alpha_sum", c.lda_alpha_sum, "lda.");
    c.lda_beta = get_or(lda, "beta", c.lda_beta, "lda.");
    c.lda_min_doc_freq = get_or(lda, "min_doc_freq", c.lda_min_doc_freq, "lda.");
    c.lda_keywords = get_or(lda, "keywords", c.lda_keywords, "lda.");
    c.lda_seed = get_or(lda, "seed", derive_seed(c.seed, kLdaStream), "lda.");
    if (seed_override) c.lda_seed = derive_seed(c.seed, kLdaStream);
    require(c.lda_sweeps >= 1, "lda.sweeps", "must be >= 1");
    require(c.lda_alpha_sum > 0.0, "lda.alpha_sum", "must be > 0");
    require(c.lda_beta > 0.0, "lda.beta", "must be > 0");

    const json& split = section(j, "split");
    c.val_size_per_class = get_or(split, "val_size_per_class", c.val_size_per_class, "split.");
    c.test_sources = get_or(split, "test_sources", c.test_sources, "split.");
    c.split_seed = get_or(split, "seed", derive_seed(c.seed, kSplitStream), "split.");
    if (seed_override) c.split_seed = derive_seed(c.seed, kSplitStream);
    require(c.val_size_per_class >= 1, "split.val_size_per_class", "must be >= 1");

    const json& tr = section(j, "train");
    const auto backend = get_or<std::string>(tr, "backend", "hashed", "train.");
    if (backend == "hashed") {
        c.backend = BackendConfig::hashed(get_or<std::size_t>(tr, "dim", std::size_t{1} << 12, "train."),
                                          get_or<std::size_t>(tr, "max_ngram", 2, "train."));
        require(c.backend.max_ngram >= 1, "train.max_ngram", "must be >= 1");
    } else if (backend == "precomputed") {
        c.backend = BackendConfig::precomputed(get_or<std::size_t>(tr, "dim", 1024, "train."));
        const auto emb = get_or<std::string>(tr, "embeddings", "", "train.");
        if (emb.empty()) throw ConfigError(ConfigErrorKind::MissingPath, "train.embeddings", "required for precomputed backend");
        c.embeddings = resolve(base_dir, emb);
        require_exists(c.embeddings, "train.embeddings");
    } else {
        throw ConfigError(ConfigErrorKind::InvalidValue, "train.backend", "must be 'hashed' or 'precomputed'");
    }
    require(c.backend.dim >= 1, "train.dim", "must be >= 1");
    c.train.batch_size = get_or(tr, "batch_size", c.train.batch_size, "train.");
    if (tr.contains("peak_lr")) c.peak_lr = get_or<double>(tr, "peak_lr", 0.0, "train.");
    c.train.epochs = get_or(tr, "epochs", c.train.epochs, "train.");
    c.train.warmup_fraction = get_or(tr, "warmup_fraction", c.train.warmup_fraction, "train.");
    c.train.weight_decay = get_or(tr, "weight_decay", c.train.weight_decay, "train.");
    c.train.eval_every = get_or(tr, "eval_every", c.train.eval_every, "train.");
    c.train.hidden = get_or(tr, "hidden", c.train.hidden, "train.");
    c.train.dropout_p = get_or(tr, "dropout", c.train.dropout_p, "train.");
    c.train.seed = get_or(tr, "seed", derive_seed(c.seed, kTrainStream), "train.");
    if (seed_override) c.train.seed = derive_seed(c.seed, kTrainStream);
    require(c.train.batch_size >= 1, "train.batch_size", "must be >= 1");
    require(c.train.epochs >= 1, "train.epochs", "must be >= 1");
    require(c.train.hidden >= 1, "train.hidden", "must be >= 1");
    require(c.train.warmup_fraction >= 0.0 && c.train.warmup_fraction < 1.0, "train.warmup_fraction",
            "must lie in [0, 1)");
    require(c.train.dropout_p >= 0.0 && c.train.dropout_p < 1.0, "train.dropout", "must lie in [0, 1)");
    require(!c.peak_lr || *c.peak_lr > 0.0, "train.peak_lr", "must be > 0");
    if (tr.contains("models")) {
        for (const auto& mj : tr.at("models")) {
            ModelSpec m;
            m.name = get_or<std::string>(mj, "name", "", "train.models.");
            m.languages = get_or<std::vector<std::string>>(mj, "languages", {}, "train.models.");
            if (mj.contains("epochs")) m.epochs = get_or<std::size_t>(mj, "epochs", 1, "train.models.");
            require(!m.name.empty() && m.name.find('/') == std::string::npos, "train.models.name",
                    "must be a non-empty file-name-safe string");
            require(!m.languages.empty(), "train.models.languages", "must be non-empty");
            c.models.push_back(std::move(m));
        }
    }

    const json& ev = section(j, "eval");
    c.n_boot = get_or(ev, "n_boot", c.n_boot, "eval.");
    c.level = get_or(ev, "level", c.level, "eval.");
    c.eval_seed = get_or(ev, "seed", derive_seed(c.seed, kEvalStream), "eval.");
    if (seed_override) c.eval_seed = derive_seed(c.seed, kEvalStream);
    require(c.n_boot >= 1, "eval.n_boot", "must be >= 1");
    require(c.level > 0.0 && c.level < 1.0, "eval.level", "must lie in (0, 1)");
    for (const auto& p : get_or<std::vector<std::string>>(ev, "ilm_runs", {}, "eval.")) {
        c.ilm_runs.push_back(resolve(base_dir, p));
        require_exists(c.ilm_runs.back(), "eval.ilm_runs");
    }
    c.cross_lingual = get_or(ev, "cross_lingual", c.cross_lingual, "eval.");
    c.report_date = get_or(ev, "report_date", c.report_date, "eval.");

    const json& pr = section(j, "probe");
    c.probe_enabled = get_or(pr, "enabled", c.probe_enabled, "probe.");
    c.probe_endpoint = get_or(pr, "endpoint", c.probe_endpoint, "probe.");
    c.probe_adapter = get_or(pr, "adapter", c.probe_adapter, "probe.");
    c.probe_model = get_or(pr, "model", c.probe_model, "probe.");
    c.probe_run_tag = get_or(pr, "run_tag", c.probe_run_tag, "probe.");
    c.probe_languages = get_or(pr, "languages", c.probe_languages, "probe.");
    c.probe_subjects = resolve(base_dir, get_or<std::string>(pr, "subjects", STANCEBENCH_DATA_DIR "/subjects.tsv", "probe."));
    c.probe_templates =
        resolve(base_dir, get_or<std::string>(pr, "templates", STANCEBENCH_DATA_DIR "/prompt_templates.json", "probe."));
    c.probe_runs_dir = resolve(base_dir, get_or<std::string>(pr, "runs_dir", (c.output_dir / "probe" / "runs").string(), "probe."));
    c.probe_api_key_env = get_or(pr, "api_key_env", c.probe_api_key_env, "probe.");
    c.probe_rate = get_or(pr, "rate", c.probe_rate, "probe.");
    c.probe_max_attempts = get_or(pr, "max_attempts", c.probe_max_attempts, "probe.");
    c.probe_max_in_flight = get_or(pr, "max_in_flight", c.probe_max_in_flight, "probe.");
    c.probe_timeout_ms = get_or(pr, "timeout_ms", c.probe_timeout_ms, "probe.");
    if (c.probe_enabled) {
        require(!c.probe_endpoint.empty(), "probe.endpoint", "required when probe is enabled");
        require(!c.probe_run_tag.empty(), "probe.run_tag", "required when probe is enabled");
        require(c.probe_max_attempts >= 1, "probe.max_attempts", "must be >= 1");
        require(c.probe_max_in_flight >= 1, "probe.max_in_flight", "must be >= 1");
        require(c.probe_rate >= 0.0, "probe.rate", "must be >= 0");
        require_exists(c.probe_subjects, "probe.subjects");
        require_exists(c.probe_templates, "probe.templates");
        make_adapter(c.probe_adapter);
    }
    return c;
}

RunConfig validate_config(const fs::path& path, std::optional<std::uint64_t> seed_override) {
    if (!fs::exists(path)) throw ConfigError(ConfigErrorKind::MissingPath, "config", "no such file: " + path.string());
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw ConfigError(ConfigErrorKind::ParseError, "config", e.what());
    }
    RunConfig c = config_from_json(j, fs::absolute(path).parent_path(), seed_override);
    c.config_path = fs::absolute(path);
    return c;
}

std::string_view to_string(Command c) noexcept {
    switch (c) {
    case Command::Ingest: return "ingest";
    case Command::Clean: return "clean";
    case Command::Topics: return "topics";
    case Command::Filter: return "filter";
    case Command::Split: return "split";
    case Command::Train: return "train";
    case Command::Eval: return "eval";
    case Command::Probe: return "probe";
    case Command::Report: return "report";
    case Command::Pipeline: return "pipeline";
    }
    return "pipeline";
}

std::optional<Command> parse_command(std::string_view name) {
    for (auto c : {Command::Ingest, Command::Clean, Command::Topics, Command::Filter, Command::Split, Command::Train,
                   Command::Eval, Command::Probe, Command::Report, Command::Pipeline}) {
        if (to_string(c) == name) return c;
    }
    return std::nullopt;
}

void run_stage(Command command, const RunConfig& config, const RunOptions& options) {
    StageContext ctx(config, options);
    fs::create_directories(config.output_dir);
    write_json(ctx.out("config.effective.json"), config.to_json());
    const std::vector<Command> stages =
        command == Command::Pipeline
            ? std::vector<Command>{Command::Ingest, Command::Clean, Command::Topics, Command::Filter, Command::Split,
                                   Command::Train, Command::Probe, Command::Eval, Command::Report}
            : std::vector<Command>{command};
    for (auto stage : stages) {
        const std::string name(to_string(stage));
        const auto t0 = std::chrono::steady_clock::now();
        try {
            run_single(stage, ctx);
        } catch (const PipelineError&) {
            throw;
        } catch (const std::exception& e) {
            throw PipelineError(PipelineErrorKind::StageFailure, name, e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        update_provenance(ctx, stage, secs);
        ctx.log(name + " finished in " + std::to_string(secs) + " s");
    }
}

int run_command(Command command, const RunConfig& config, const RunOptions& options) {
    try {
        RunLock lock(config.output_dir);
        run_stage(command, config, options);
        return 0;
    } catch (const PipelineError& e) {
        std::cerr << "stancebench: " << e.what() << '\n';
        return e.kind() == PipelineErrorKind::MissingArtifact ? 3 : (e.kind() == PipelineErrorKind::Locked ? 4 : 1);
    } catch (const std::exception& e) {
        std::cerr << "stancebench: " << e.what() << '\n';
        return 1;
    }
}

} // namespace stancebench
