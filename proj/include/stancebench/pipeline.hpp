#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "stancebench/corpus.hpp"
#include "stancebench/error.hpp"
#include "stancebench/stance.hpp"

namespace stancebench {

enum class ConfigErrorKind { ParseError, MissingPath, InvalidValue };

class ConfigError : public KindedError<ConfigErrorKind> {
public:
    ConfigError(ConfigErrorKind kind, std::string field, const std::string& reason)
        : KindedError(kind, field + ": " + reason), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

enum class PipelineErrorKind { StageFailure, MissingArtifact, Locked };

class PipelineError : public KindedError<PipelineErrorKind> {
public:
    PipelineError(PipelineErrorKind kind, std::string stage, const std::string& message)
        : KindedError(kind, stage + ": " + message), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

struct ModelSpec {
    std::string name;
    std::vector<std::string> languages;
    std::optional<std::size_t> epochs;
};

struct RunConfig {
    std::filesystem::path config_path;
    std::uint64_t seed = 42;
    std::vector<std::string> languages{"en", "de", "es", "ca"};

    // paths
    std::filesystem::path manifest;
    std::vector<std::filesystem::path> articles;
    std::filesystem::path stopwords_dir;
    std::filesystem::path output_dir;
    std::filesystem::path selection;

    // ingest / clean
    UnknownSourcePolicy unknown_source = UnknownSourcePolicy::Skip;
    double boilerplate_fraction = 0.30;
    std::size_t boilerplate_count = 5;

    // lda
    std::vector<std::size_t> topic_counts{10, 15};
    std::size_t lda_sweeps = 1000;
    std::size_t lda_burn_in = 50;
    std::size_t lda_optimize_interval = 10;
    double lda_alpha_sum = 5.0;
    double lda_beta = 0.01;
    std::size_t lda_min_doc_freq = 2;
    std::size_t lda_keywords = 30;
    std::uint64_t lda_seed = 0;

    // split
    std::size_t val_size_per_class = 1500;
    std::vector<std::string> test_sources;
    std::uint64_t split_seed = 0;

    // train
    BackendConfig backend;
    std::filesystem::path embeddings;
    TrainConfig train;
    std::optional<double> peak_lr; // unset -> per-backend default
    std::vector<ModelSpec> models;  // empty -> one model per training language

    // eval
    std::size_t n_boot = 1000;
    double level = 0.95;
    std::uint64_t eval_seed = 0;
    std::vector<std::filesystem::path> ilm_runs;
    bool cross_lingual = false;
    std::string report_date;

    // probe
    bool probe_enabled = false;
    std::string probe_endpoint;
    std::string probe_adapter = "generic";
    std::string probe_model = "unknown";
    std::string probe_run_tag;
    std::vector<std::string> probe_languages{"en", "de", "es", "ca"};
    std::filesystem::path probe_subjects;
    std::filesystem::path probe_templates;
    std::filesystem::path probe_runs_dir;
    std::string probe_api_key_env = "STANCEBENCH_API_KEY";
    double probe_rate = 1.0;
    std::size_t probe_max_attempts = 5;
    std::size_t probe_max_in_flight = 1;
    std::size_t probe_timeout_ms = 60000;

    /// Effective configuration with every default filled in.
    nlohmann::json to_json() const;
};

/// Parses, fills defaults, resolves relative paths against the config
/// file's directory and checks every invariant.
RunConfig validate_config(const std::filesystem::path& path,
                          std::optional<std::uint64_t> seed_override = std::nullopt);
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir,
                           std::optional<std::uint64_t> seed_override = std::nullopt);

/// Articles generated in one probe run directory; each run_tag becomes an
/// unrated source and every record a test article.
std::vector<Article> articles_from_run(const std::filesystem::path& run_dir);

enum class Command { Ingest, Clean, Topics, Filter, Split, Train, Eval, Probe, Report, Pipeline };

std::string_view to_string(Command c) noexcept;
std::optional<Command> parse_command(std::string_view name);

struct RunOptions {
    bool resume = false;
    bool quiet = false;
};

/// Runs one stage (or all, for Pipeline). Throws PipelineError.
void run_stage(Command command, const RunConfig& config, const RunOptions& options = {});

/// run_stage wrapped with the output-dir lock, error reporting and an exit code.
int run_command(Command command, const RunConfig& config, const RunOptions& options = {});

} // namespace stancebench
