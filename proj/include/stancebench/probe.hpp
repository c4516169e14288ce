#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "stancebench/error.hpp"

namespace stancebench {

enum class ProbeErrorKind {
    BadTemplate,
    BadSubjects,
    AuthError,
    ExhaustedRetries,
    RequestRejected,
    EmptyResponse,
    RunExists,
    IncompleteSession,
    InvalidAnswer,
    InvalidScore,
    IoError,
};

class ProbeError : public KindedError<ProbeErrorKind> {
public:
    ProbeError(ProbeErrorKind kind, const std::string& message, int status = 0)
        : KindedError(kind, message), status_(status) {}
    /// Last HTTP status seen (0 when none / not applicable, -1 transport failure).
    int status() const noexcept { return status_; }

private:
    int status_;
};

inline constexpr std::string_view kSubjectSlot = "[SUBJECT]";
inline constexpr std::size_t kSubjectCount = 101;

struct PromptSubject {
    int index = 0;
    std::map<std::string, std::string> text; // language -> subject phrase
};

/// TSV with header `index en de es ca` (any language columns after index).
std::vector<PromptSubject> parse_subjects_tsv(std::string_view content);
std::vector<PromptSubject> load_subjects(const std::string& path);

/// language -> template with exactly one [SUBJECT] slot.
using PromptTemplates = std::map<std::string, std::string>;
PromptTemplates load_templates(const std::string& path);

struct PromptJob {
    int subject_index = 0;
    std::string language;
    std::string prompt;
};

/// Substitutes the subject into the template; BadTemplate unless exactly one slot.
std::string fill_template(std::string_view templ, std::string_view subject);

/// One job per (subject, language), ordered by subject index then by the
/// order of `languages`.
std::vector<PromptJob> build_prompts(std::span<const PromptSubject> subjects,
                                     std::span<const std::string> languages,
                                     const PromptTemplates& templates);

struct HttpResponse {
    int status = 0; // -1 on transport failure
    std::string body;
};

/// POST transport; swapped out in tests.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post_json(const std::string& body,
                                   const std::map<std::string, std::string>& headers) = 0;
};

/// cpp-httplib backed transport for "http(s)://host[:port]/path" endpoints.
std::unique_ptr<HttpTransport> make_http_transport(const std::string& endpoint_url,
                                                   std::chrono::milliseconds timeout);

/// Converts between prompts and a vendor's request/response JSON.
class RequestAdapter {
public:
    virtual ~RequestAdapter() = default;
    virtual nlohmann::json encode(std::string_view prompt, std::string_view model) const = 0;
    /// Empty optional when the response carries no text.
    virtual std::optional<std::string> decode(const nlohmann::json& response) const = 0;
};

/// {"prompt": str} -> {"text": str}
std::unique_ptr<RequestAdapter> make_generic_adapter();
/// OpenAI-style chat completions: messages[] -> choices[0].message.content
std::unique_ptr<RequestAdapter> make_chat_adapter();
std::unique_ptr<RequestAdapter> make_adapter(std::string_view name);

/// Token bucket; thread-safe. Clock and sleep are injectable.
class RateLimiter {
public:
    using Clock = std::function<std::chrono::steady_clock::time_point()>;
    using Sleeper = std::function<void(std::chrono::nanoseconds)>;

    RateLimiter(double requests_per_second, double burst = 1.0, Clock clock = {},
                Sleeper sleeper = {});
    void acquire();

private:
    double rate_;
    double burst_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
    Clock clock_;
    Sleeper sleeper_;
    std::mutex mutex_;
};

struct ClientConfig {
    std::string model = "unknown";
    std::string api_key; // sent as "Authorization: Bearer <key>" when non-empty
    std::size_t max_attempts = 5;
    std::chrono::milliseconds initial_backoff{1000};
    std::chrono::milliseconds max_backoff{30000};
    double requests_per_second = 1.0;
};

struct GenerationRecord {
    std::string run_tag;
    int subject_index = 0;
    std::string language;
    std::string prompt;
    std::string response;
    std::string model;
    std::string timestamp;
    std::size_t attempts = 0;
};

void to_json(nlohmann::json& j, const GenerationRecord& r);
void from_json(const nlohmann::json& j, GenerationRecord& r);

class GenerationClient {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    GenerationClient(std::unique_ptr<HttpTransport> transport, std::unique_ptr<RequestAdapter> adapter,
                     ClientConfig config, Sleeper sleeper = {},
                     std::shared_ptr<RateLimiter> limiter = {});

    /// Retries 429, 408, 5xx and transport failures with exponential backoff;
    /// 401/403 raise AuthError immediately; other 4xx raise RequestRejected.
    GenerationRecord generate(const PromptJob& job, std::string_view run_tag);

    const ClientConfig& config() const noexcept { return config_; }
    std::size_t requests_sent() const noexcept { return requests_sent_; }

private:
    std::unique_ptr<HttpTransport> transport_;
    std::unique_ptr<RequestAdapter> adapter_;
    ClientConfig config_;
    Sleeper sleeper_;
    std::shared_ptr<RateLimiter> limiter_;
    std::mutex mutex_;
    std::size_t requests_sent_ = 0;
};

GenerationRecord generate_article(const PromptJob& job, GenerationClient& client,
                                  std::string_view run_tag);

struct CollectOptions {
    std::string run_tag;
    std::string runs_dir = "runs";
    bool resume = false;
    std::size_t max_in_flight = 1;
    std::string endpoint; // manifest metadata only
};

struct FailedJob {
    int subject_index = 0;
    std::string language;
    std::string error;
};

struct RunSummary {
    std::string run_dir;
    std::size_t issued = 0;
    std::size_t skipped_existing = 0;
    std::size_t succeeded = 0;
    std::vector<FailedJob> failures;
};

/// Persists records to <runs_dir>/<run_tag>/generations.jsonl and writes
/// manifest.json. With resume, jobs already recorded are not reissued.
/// An AuthError aborts the run after the manifest is written.
RunSummary collect_run(std::span<const PromptJob> jobs, GenerationClient& client,
                       const CollectOptions& options);

std::vector<GenerationRecord> read_generations(const std::string& run_dir);

enum class PcAnswer { StronglyAgree, Agree, Disagree, StronglyDisagree };
std::string_view to_string(PcAnswer a) noexcept;
std::optional<PcAnswer> parse_pc_answer(std::string_view token);

inline constexpr std::size_t kPcPropositionCount = 62;

struct PcProposition {
    int index = 0;
    std::string language;
    std::string text;
};

/// TSV `index language text`, no header required (a header line starting with "index" is skipped).
std::vector<PcProposition> load_pc_propositions(const std::string& path);

struct PcScores {
    double economic = 0.0; // [-10, 10]
    double social = 0.0;   // [-10, 10]
};

struct PcSession {
    std::string model_tag;
    std::string language;
    std::vector<PcProposition> propositions;
    std::vector<PcAnswer> answers;
    std::optional<PcScores> reported_scores;
    std::string timestamp;
};

void to_json(nlohmann::json& j, const PcSession& s);
void from_json(const nlohmann::json& j, PcSession& s);

struct PcSessionInput {
    std::string model_tag;
    std::string language;
    std::vector<PcProposition> propositions;
    std::vector<std::string> answers;
    std::optional<PcScores> reported_scores;
    std::string timestamp;
};

/// Validates answer count and vocabulary. Scores are stored as entered.
PcSession record_pc_answers(const PcSessionInput& input);
void append_pc_session(const PcSession& session, const std::string& run_dir);
std::vector<PcSession> read_pc_sessions(const std::string& run_dir);

std::string utc_timestamp();

} // namespace stancebench
