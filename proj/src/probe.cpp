#include "stancebench/probe.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "httplib.h"

namespace stancebench {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
    return out;
}

std::string read_file(const std::string& path, ProbeErrorKind kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ProbeError(kind, "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool retryable(int status) {
    return status < 0 || status == 408 || status == 429 || (status >= 500 && status <= 599);
}

class HttplibTransport final : public HttpTransport {
public:
    HttplibTransport(std::string origin, std::string path, std::chrono::milliseconds timeout)
        : origin_(std::move(origin)), path_(std::move(path)), timeout_(timeout) {}

    HttpResponse post_json(const std::string& body, const std::map<std::string, std::string>& headers) override {
        httplib::Client client(origin_);
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);
        client.set_write_timeout(timeout_);
        httplib::Headers h;
        for (const auto& [k, v] : headers) {
            if (k != "Content-Type") h.emplace(k, v);
        }
        auto res = client.Post(path_, h, body, "application/json");
        if (!res) return {-1, httplib::to_string(res.error())};
        return {res->status, res->body};
    }

private:
    std::string origin_;
    std::string path_;
    std::chrono::milliseconds timeout_;
};

class GenericAdapter final : public RequestAdapter {
public:
    nlohmann::json encode(std::string_view prompt, std::string_view model) const override {
        nlohmann::json j{{"prompt", prompt}};
        if (!model.empty()) j["model"] = model;
        return j;
    }
    std::optional<std::string> decode(const nlohmann::json& response) const override {
        if (!response.is_object() || !response.contains("text") || !response["text"].is_string()) return std::nullopt;
        return response["text"].get<std::string>();
    }
};

class ChatAdapter final : public RequestAdapter {
public:
    nlohmann::json encode(std::string_view prompt, std::string_view model) const override {
        return {{"model", model}, {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
    }
    std::optional<std::string> decode(const nlohmann::json& response) const override {
        try {
            const auto& content = response.at("choices").at(0).at("message").at("content");
            if (content.is_string()) return content.get<std::string>();
        } catch (const nlohmann::json::exception&) {
        }
        return std::nullopt;
    }
};

std::string normalize_answer_token(std::string_view token) {
    std::string out;
    for (char c : token) {
        if (c == ' ' || c == '_' || c == '-') continue;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

void write_manifest(const fs::path& dir, const nlohmann::json& manifest) {
    const auto tmp = dir / "manifest.json.tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw ProbeError(ProbeErrorKind::IoError, "cannot write " + tmp.string());
        out << manifest.dump(2) << '\n';
    }
    fs::rename(tmp, dir / "manifest.json");
}

} // namespace

std::vector<PromptSubject> parse_subjects_tsv(std::string_view content) {
    std::istringstream in{std::string(content)};
    std::string line;
    std::vector<std::string> header;
    std::vector<PromptSubject> out;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r" || line[0] == '#') continue;
        auto cols = split_tabs(line);
        if (header.empty()) {
            if (cols.size() < 2 || cols[0] != "index") {
                throw ProbeError(ProbeErrorKind::BadSubjects, "subjects header must start with 'index'");
            }
            header = std::move(cols);
            continue;
        }
        if (cols.size() != header.size()) {
            throw ProbeError(ProbeErrorKind::BadSubjects, "wrong column count in subjects line: " + line);
        }
        PromptSubject s;
        try {
            s.index = std::stoi(cols[0]);
        } catch (const std::exception&) {
            throw ProbeError(ProbeErrorKind::BadSubjects, "bad subject index: " + cols[0]);
        }
        for (std::size_t c = 1; c < cols.size(); ++c) {
            if (cols[c].empty()) {
                throw ProbeError(ProbeErrorKind::BadSubjects,
                                 "subject " + cols[0] + " has no " + header[c] + " translation");
            }
            s.text[header[c]] = cols[c];
        }
        out.push_back(std::move(s));
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i].index != static_cast<int>(i) + 1) {
            throw ProbeError(ProbeErrorKind::BadSubjects, "subject indices must be dense and start at 1");
        }
    }
    return out;
}

std::vector<PromptSubject> load_subjects(const std::string& path) {
    return parse_subjects_tsv(read_file(path, ProbeErrorKind::BadSubjects));
}

PromptTemplates load_templates(const std::string& path) {
    const auto content = read_file(path, ProbeErrorKind::BadTemplate);
    PromptTemplates out;
    try {
        const auto j = nlohmann::json::parse(content);
        for (const auto& [lang, t] : j.items()) out[lang] = t.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ProbeError(ProbeErrorKind::BadTemplate, "bad templates file " + path + ": " + e.what());
    }
    return out;
}

std::string fill_template(std::string_view templ, std::string_view subject) {
    const auto pos = templ.find(kSubjectSlot);
    if (pos == std::string_view::npos || templ.find(kSubjectSlot, pos + 1) != std::string_view::npos) {
        throw ProbeError(ProbeErrorKind::BadTemplate,
                         "template must contain exactly one " + std::string(kSubjectSlot) + ": " + std::string(templ));
    }
    std::string out(templ.substr(0, pos));
    out += subject;
    out += templ.substr(pos + kSubjectSlot.size());
    return out;
}

std::vector<PromptJob> build_prompts(std::span<const PromptSubject> subjects, std::span<const std::string> languages,
                                     const PromptTemplates& templates) {
    for (const auto& lang : languages) {
        if (!templates.contains(lang)) throw ProbeError(ProbeErrorKind::BadTemplate, "no template for " + lang);
        fill_template(templates.at(lang), "");
    }
    std::vector<PromptSubject> ordered(subjects.begin(), subjects.end());
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const PromptSubject& a, const PromptSubject& b) { return a.index < b.index; });
    std::vector<PromptJob> jobs;
    for (const auto& s : ordered) {
        for (const auto& lang : languages) {
            const auto it = s.text.find(lang);
            if (it == s.text.end()) {
                throw ProbeError(ProbeErrorKind::BadSubjects,
                                 "subject " + std::to_string(s.index) + " has no " + lang + " translation");
            }
            jobs.push_back({s.index, lang, fill_template(templates.at(lang), it->second)});
        }
    }
    return jobs;
}

std::unique_ptr<HttpTransport> make_http_transport(const std::string& endpoint_url, std::chrono::milliseconds timeout) {
    const auto scheme_end = endpoint_url.find("://");
    if (scheme_end == std::string::npos) {
        throw ProbeError(ProbeErrorKind::RequestRejected, "endpoint must be an http(s) URL: " + endpoint_url);
    }
    const auto path_start = endpoint_url.find('/', scheme_end + 3);
    std::string origin = endpoint_url.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : endpoint_url.substr(path_start);
    return std::make_unique<HttplibTransport>(std::move(origin), std::move(path), timeout);
}

std::unique_ptr<RequestAdapter> make_generic_adapter() { return std::make_unique<GenericAdapter>(); }
std::unique_ptr<RequestAdapter> make_chat_adapter() { return std::make_unique<ChatAdapter>(); }

std::unique_ptr<RequestAdapter> make_adapter(std::string_view name) {
    if (name == "generic") return make_generic_adapter();
    if (name == "chat") return make_chat_adapter();
    throw ProbeError(ProbeErrorKind::RequestRejected, "unknown adapter '" + std::string(name) + "'");
}

RateLimiter::RateLimiter(double requests_per_second, double burst, Clock clock, Sleeper sleeper)
    : rate_(requests_per_second),
      burst_(std::max(burst, 1.0)),
      tokens_(std::max(burst, 1.0)),
      clock_(clock ? std::move(clock) : Clock([] { return std::chrono::steady_clock::now(); })),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::nanoseconds d) { std::this_thread::sleep_for(d); })) {
    last_ = clock_();
}

void RateLimiter::acquire() {
    if (rate_ <= 0.0) return;
    std::lock_guard lock(mutex_);
    while (true) {
        const auto now = clock_();
        const double elapsed = std::chrono::duration<double>(now - last_).count();
        last_ = now;
        tokens_ = std::min(burst_, tokens_ + elapsed * rate_);
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        const double wait = (1.0 - tokens_) / rate_;
        sleeper_(std::chrono::nanoseconds(static_cast<std::int64_t>(std::ceil(wait * 1e9))));
    }
}

void to_json(nlohmann::json& j, const GenerationRecord& r) {
    j = nlohmann::json{{"run_tag", r.run_tag},   {"subject_index", r.subject_index}, {"language", r.language},
                       {"prompt", r.prompt},     {"response", r.response},           {"model", r.model},
                       {"timestamp", r.timestamp}, {"attempts", r.attempts}};
}

void from_json(const nlohmann::json& j, GenerationRecord& r) {
    r.run_tag = j.at("run_tag").get<std::string>();
    r.subject_index = j.at("subject_index").get<int>();
    r.language = j.at("language").get<std::string>();
    r.prompt = j.at("prompt").get<std::string>();
    r.response = j.at("response").get<std::string>();
    r.model = j.value("model", "");
    r.timestamp = j.value("timestamp", "");
    r.attempts = j.value("attempts", std::size_t{0});
}

GenerationClient::GenerationClient(std::unique_ptr<HttpTransport> transport, std::unique_ptr<RequestAdapter> adapter,
                                   ClientConfig config, Sleeper sleeper, std::shared_ptr<RateLimiter> limiter)
    : transport_(std::move(transport)),
      adapter_(adapter ? std::move(adapter) : make_generic_adapter()),
      config_(std::move(config)),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })),
      limiter_(std::move(limiter)) {
    if (config_.max_attempts == 0) config_.max_attempts = 1;
}

GenerationRecord GenerationClient::generate(const PromptJob& job, std::string_view run_tag) {
    const std::string body = adapter_->encode(job.prompt, config_.model).dump();
    std::map<std::string, std::string> headers{{"Content-Type", "application/json"}};
    if (!config_.api_key.empty()) headers["Authorization"] = "Bearer " + config_.api_key;

    auto backoff = config_.initial_backoff;
    int last_status = 0;
    for (std::size_t attempt = 1; attempt <= config_.max_attempts; ++attempt) {
        if (limiter_) limiter_->acquire();
        const HttpResponse res = transport_->post_json(body, headers);
        {
            std::lock_guard lock(mutex_);
            ++requests_sent_;
        }
        last_status = res.status;
        if (res.status == 401 || res.status == 403) {
            throw ProbeError(ProbeErrorKind::AuthError, "endpoint rejected credentials (HTTP " +
                                                            std::to_string(res.status) + ")", res.status);
        }
        if (res.status >= 200 && res.status < 300) {
            std::optional<std::string> text;
            try {
                text = adapter_->decode(nlohmann::json::parse(res.body));
            } catch (const nlohmann::json::exception&) {
            }
            if (!text || text->empty()) {
                throw ProbeError(ProbeErrorKind::EmptyResponse, "response carried no text", res.status);
            }
            GenerationRecord r;
            r.run_tag = std::string(run_tag);
            r.subject_index = job.subject_index;
            r.language = job.language;
            r.prompt = job.prompt;
            r.response = std::move(*text);
            r.model = config_.model;
            r.timestamp = utc_timestamp();
            r.attempts = attempt;
            return r;
        }
        if (!retryable(res.status)) {
            throw ProbeError(ProbeErrorKind::RequestRejected,
                             "request rejected (HTTP " + std::to_string(res.status) + "): " + res.body, res.status);
        }
        if (attempt < config_.max_attempts) {
            sleeper_(backoff);
            backoff = std::min(backoff * 2, config_.max_backoff);
        }
    }
    throw ProbeError(ProbeErrorKind::ExhaustedRetries,
                     "gave up after " + std::to_string(config_.max_attempts) + " attempts (last status " +
                         std::to_string(last_status) + ")",
                     last_status);
}

GenerationRecord generate_article(const PromptJob& job, GenerationClient& client, std::string_view run_tag) {
    return client.generate(job, run_tag);
}

RunSummary collect_run(std::span<const PromptJob> jobs, GenerationClient& client, const CollectOptions& options) {
    if (options.run_tag.empty()) throw ProbeError(ProbeErrorKind::IoError, "run_tag must be non-empty");
    const fs::path dir = fs::path(options.runs_dir) / options.run_tag;
    const fs::path gen_path = dir / "generations.jsonl";
    const bool exists = fs::exists(dir / "manifest.json") || fs::exists(gen_path);
    if (exists && !options.resume) {
        throw ProbeError(ProbeErrorKind::RunExists, "run '" + options.run_tag + "' already exists in " + dir.string());
    }
    fs::create_directories(dir);

    std::set<std::pair<int, std::string>> done;
    if (exists) {
        for (const auto& r : read_generations(dir.string())) done.emplace(r.subject_index, r.language);
    }

    RunSummary summary;
    summary.run_dir = dir.string();
    std::vector<const PromptJob*> pending;
    for (const auto& job : jobs) {
        if (done.contains({job.subject_index, job.language})) {
            ++summary.skipped_existing;
        } else {
            pending.push_back(&job);
        }
    }

    nlohmann::json manifest;
    if (fs::exists(dir / "manifest.json")) {
        try {
            manifest = nlohmann::json::parse(read_file((dir / "manifest.json").string(), ProbeErrorKind::IoError));
        } catch (const nlohmann::json::exception&) {
            manifest = nlohmann::json::object();
        }
    }
    const std::string now = utc_timestamp();
    manifest["run_tag"] = options.run_tag;
    manifest["model"] = client.config().model;
    manifest["endpoint"] = options.endpoint;
    manifest["job_count"] = jobs.size();
    if (!manifest.contains("collection_start")) manifest["collection_start"] = now;
    manifest["last_session_start"] = now;
    manifest["status"] = "running";
    write_manifest(dir, manifest);

    std::ofstream out(gen_path, std::ios::app);
    if (!out) throw ProbeError(ProbeErrorKind::IoError, "cannot append to " + gen_path.string());
    std::mutex io_mutex;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::exception_ptr fatal;

    auto worker = [&] {
        while (!abort.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= pending.size()) return;
            const PromptJob& job = *pending[i];
            try {
                const auto record = client.generate(job, options.run_tag);
                const std::string line = nlohmann::json(record).dump();
                std::lock_guard lock(io_mutex);
                out << line << '\n';
                out.flush();
                ++summary.issued;
                ++summary.succeeded;
            } catch (const ProbeError& e) {
                std::lock_guard lock(io_mutex);
                ++summary.issued;
                if (e.kind() == ProbeErrorKind::AuthError) {
                    if (!fatal) fatal = std::current_exception();
                    abort.store(true);
                    return;
                }
                summary.failures.push_back({job.subject_index, job.language, e.what()});
            }
        }
    };

    const std::size_t n_workers = std::clamp<std::size_t>(options.max_in_flight, 1, std::max<std::size_t>(pending.size(), 1));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    out.close();

    std::sort(summary.failures.begin(), summary.failures.end(), [](const FailedJob& a, const FailedJob& b) {
        return std::tie(a.subject_index, a.language) < std::tie(b.subject_index, b.language);
    });
    manifest["collection_end"] = utc_timestamp();
    manifest["records"] = done.size() + summary.succeeded;
    manifest["failures"] = summary.failures.size();
    manifest["status"] = fatal ? "aborted" : (summary.failures.empty() ? "complete" : "partial");
    write_manifest(dir, manifest);
    if (fatal) std::rethrow_exception(fatal);
    return summary;
}

std::vector<GenerationRecord> read_generations(const std::string& run_dir) {
    const fs::path path = fs::path(run_dir) / "generations.jsonl";
    std::vector<GenerationRecord> out;
    if (!fs::exists(path)) return out;
    std::ifstream in(path);
    if (!in) throw ProbeError(ProbeErrorKind::IoError, "cannot read " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line).get<GenerationRecord>());
        } catch (const nlohmann::json::exception&) {
            // A torn final line from an interrupted run is dropped; its job gets reissued.
            if (in.peek() == std::char_traits<char>::eof()) break;
            throw ProbeError(ProbeErrorKind::IoError, path.string() + ":" + std::to_string(lineno) + ": malformed record");
        }
    }
    return out;
}

std::string_view to_string(PcAnswer a) noexcept {
    switch (a) {
    case PcAnswer::StronglyAgree: return "StronglyAgree";
    case PcAnswer::Agree: return "Agree";
    case PcAnswer::Disagree: return "Disagree";
    case PcAnswer::StronglyDisagree: return "StronglyDisagree";
    }
    return "Agree";
}

std::optional<PcAnswer> parse_pc_answer(std::string_view token) {
    const auto t = normalize_answer_token(token);
    if (t == "stronglyagree") return PcAnswer::StronglyAgree;
    if (t == "agree") return PcAnswer::Agree;
    if (t == "disagree") return PcAnswer::Disagree;
    if (t == "stronglydisagree") return PcAnswer::StronglyDisagree;
    return std::nullopt;
}

std::vector<PcProposition> load_pc_propositions(const std::string& path) {
    std::istringstream in(read_file(path, ProbeErrorKind::IoError));
    std::string line;
    std::vector<PcProposition> out;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r" || line.rfind("index", 0) == 0) continue;
        const auto cols = split_tabs(line);
        if (cols.size() != 3) throw ProbeError(ProbeErrorKind::IoError, "bad proposition line: " + line);
        try {
            out.push_back({std::stoi(cols[0]), cols[1], cols[2]});
        } catch (const std::exception&) {
            throw ProbeError(ProbeErrorKind::IoError, "bad proposition index: " + cols[0]);
        }
    }
    return out;
}

void to_json(nlohmann::json& j, const PcSession& s) {
    nlohmann::json props = nlohmann::json::array();
    for (const auto& p : s.propositions) props.push_back({{"index", p.index}, {"language", p.language}, {"text", p.text}});
    nlohmann::json answers = nlohmann::json::array();
    for (auto a : s.answers) answers.push_back(to_string(a));
    j = nlohmann::json{{"model_tag", s.model_tag}, {"language", s.language}, {"propositions", props},
                       {"answers", answers},       {"timestamp", s.timestamp}};
    if (s.reported_scores) {
        j["reported_scores"] = {{"economic", s.reported_scores->economic}, {"social", s.reported_scores->social}};
    } else {
        j["reported_scores"] = nullptr;
    }
}

void from_json(const nlohmann::json& j, PcSession& s) {
    s.model_tag = j.at("model_tag").get<std::string>();
    s.language = j.at("language").get<std::string>();
    s.timestamp = j.value("timestamp", "");
    s.propositions.clear();
    for (const auto& p : j.at("propositions")) {
        s.propositions.push_back({p.at("index").get<int>(), p.at("language").get<std::string>(),
                                  p.at("text").get<std::string>()});
    }
    s.answers.clear();
    for (const auto& a : j.at("answers")) {
        const auto parsed = parse_pc_answer(a.get<std::string>());
        if (!parsed) throw ProbeError(ProbeErrorKind::InvalidAnswer, "invalid answer '" + a.get<std::string>() + "'");
        s.answers.push_back(*parsed);
    }
    s.reported_scores.reset();
    if (j.contains("reported_scores") && !j["reported_scores"].is_null()) {
        s.reported_scores = PcScores{j["reported_scores"].at("economic").get<double>(),
                                     j["reported_scores"].at("social").get<double>()};
    }
}

PcSession record_pc_answers(const PcSessionInput& input) {
    if (input.answers.size() != kPcPropositionCount) {
        throw ProbeError(ProbeErrorKind::IncompleteSession,
                         "expected " + std::to_string(kPcPropositionCount) + " answers, got " +
                             std::to_string(input.answers.size()));
    }
    if (input.propositions.size() != kPcPropositionCount) {
        throw ProbeError(ProbeErrorKind::IncompleteSession,
                         "expected " + std::to_string(kPcPropositionCount) + " propositions, got " +
                             std::to_string(input.propositions.size()));
    }
    PcSession s;
    s.model_tag = input.model_tag;
    s.language = input.language;
    s.propositions = input.propositions;
    for (const auto& token : input.answers) {
        const auto a = parse_pc_answer(token);
        if (!a) throw ProbeError(ProbeErrorKind::InvalidAnswer, "invalid answer '" + token + "'");
        s.answers.push_back(*a);
    }
    if (input.reported_scores) {
        const auto& sc = *input.reported_scores;
        auto in_range = [](double v) { return v >= -10.0 && v <= 10.0; };
        if (!in_range(sc.economic) || !in_range(sc.social)) {
            throw ProbeError(ProbeErrorKind::InvalidScore, "scores must lie in [-10, 10]");
        }
        s.reported_scores = sc;
    }
    s.timestamp = input.timestamp.empty() ? utc_timestamp() : input.timestamp;
    return s;
}

void append_pc_session(const PcSession& session, const std::string& run_dir) {
    fs::create_directories(run_dir);
    const fs::path path = fs::path(run_dir) / "pc_sessions.jsonl";
    std::ofstream out(path, std::ios::app);
    if (!out) throw ProbeError(ProbeErrorKind::IoError, "cannot append to " + path.string());
    out << nlohmann::json(session).dump() << '\n';
}

std::vector<PcSession> read_pc_sessions(const std::string& run_dir) {
    const fs::path path = fs::path(run_dir) / "pc_sessions.jsonl";
    std::vector<PcSession> out;
    if (!fs::exists(path)) return out;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line).get<PcSession>());
        } catch (const nlohmann::json::exception& e) {
            throw ProbeError(ProbeErrorKind::IoError, "malformed session in " + path.string() + ": " + e.what());
        }
    }
    return out;
}

std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace stancebench
