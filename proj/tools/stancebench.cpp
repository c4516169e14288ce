// Command-line front end: one subcommand per pipeline stage.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "stancebench/pipeline.hpp"
#include "stancebench/probe.hpp"

using namespace stancebench;

namespace {

int record_pc(const std::string& propositions, const std::string& answers_path, const std::string& model_tag,
              const std::string& language, const std::vector<double>& scores, const std::string& run_dir) {
    PcSessionInput in;
    in.model_tag = model_tag;
    in.language = language;
    for (auto& p : load_pc_propositions(propositions)) {
        if (p.language == language) in.propositions.push_back(std::move(p));
    }
    std::ifstream f(answers_path);
    if (!f) throw ProbeError(ProbeErrorKind::IoError, "cannot open " + answers_path);
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) in.answers.push_back(line);
    }
    if (scores.size() == 2) in.reported_scores = PcScores{scores[0], scores[1]};
    const auto session = record_pc_answers(in);
    append_pc_session(session, run_dir);
    std::cout << "recorded " << session.answers.size() << " answers for " << model_tag << " (" << language << ")\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"stancebench: political stance classification of media sources"};
    app.require_subcommand(1);

    std::string config_path;
    bool resume = false;
    bool quiet = false;
    std::optional<std::uint64_t> seed;
    std::string endpoint, run_tag;
    std::optional<double> rate;
    std::optional<std::size_t> max_attempts;

    std::vector<std::pair<CLI::App*, Command>> stage_cmds;
    for (auto c : {Command::Ingest, Command::Clean, Command::Topics, Command::Filter, Command::Split, Command::Train,
                   Command::Eval, Command::Probe, Command::Report, Command::Pipeline}) {
        auto* sub = app.add_subcommand(std::string(to_string(c)),
                                       c == Command::Pipeline ? "run every stage in order" : "run the " +
                                                                                               std::string(to_string(c)) +
                                                                                               " stage");
        sub->add_option("--config", config_path, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_flag("--resume", resume, "continue an interrupted probe run");
        sub->add_option("--seed", seed, "override the top-level seed");
        sub->add_flag("-q,--quiet", quiet, "suppress progress logging");
        if (c == Command::Probe || c == Command::Pipeline) {
            sub->add_option("--endpoint", endpoint, "generation endpoint URL");
            sub->add_option("--run-tag", run_tag, "name of the probe run");
            sub->add_option("--rate", rate, "requests per second");
            sub->add_option("--max-attempts", max_attempts, "attempts per request");
        }
        stage_cmds.emplace_back(sub, c);
    }

    std::string propositions, answers, model_tag, language = "en", run_dir;
    std::vector<double> scores;
    auto* pc = app.add_subcommand("pc-record", "store a Political Compass questionnaire session");
    pc->add_option("--propositions", propositions, "TSV: index, language, text")->required()->check(CLI::ExistingFile);
    pc->add_option("--answers", answers, "one answer per line")->required()->check(CLI::ExistingFile);
    pc->add_option("--model-tag", model_tag, "model or run tag")->required();
    pc->add_option("--language", language, "questionnaire language");
    pc->add_option("--scores", scores, "reported economic and social scores")->expected(2);
    pc->add_option("--run-dir", run_dir, "directory holding pc_sessions.jsonl")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (pc->parsed()) return record_pc(propositions, answers, model_tag, language, scores, run_dir);
        for (const auto& [sub, cmd] : stage_cmds) {
            if (!sub->parsed()) continue;
            RunConfig config = validate_config(config_path, seed);
            if (!endpoint.empty()) config.probe_endpoint = endpoint;
            if (!run_tag.empty()) config.probe_run_tag = run_tag;
            if (rate) config.probe_rate = *rate;
            if (max_attempts) config.probe_max_attempts = *max_attempts;
            if (cmd == Command::Probe && !config.probe_endpoint.empty() && !config.probe_run_tag.empty()) {
                config.probe_enabled = true;
            }
            return run_command(cmd, config, RunOptions{resume, quiet});
        }
    } catch (const ConfigError& e) {
        std::cerr << "stancebench: config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "stancebench: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
