// cafe: batch evaluation, reward scoring and the reward service.
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "cafe/cafe.h"
#include "json.hpp"

using json = nlohmann::json;

namespace {

constexpr int kExitError = 1;
constexpr int kExitThreshold = 3;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

struct JudgeFlags {
    std::string endpoint;
    std::string mock;
    std::string fixture;
    std::uint64_t seed = 0;
    std::string model = "judge";
    double timeout = 60.0;
    int retries = 3;
    int max_inflight = 8;
    bool snap = false;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--judge-endpoint", endpoint, "Judge base URL (default: $JUDGE_BASE_URL)");
        cmd->add_option("--mock", mock, "Use the offline mock judge")
            ->check(CLI::IsMember({"rubric_hash", "echo_fixture"}));
        cmd->add_option("--fixture", fixture, "Recorded replies for --mock echo_fixture");
        cmd->add_option("--seed", seed, "Mock judge seed");
        cmd->add_option("--judge-model", model, "Model name sent to the judge")->capture_default_str();
        cmd->add_option("--timeout", timeout, "Judge request timeout in seconds")->capture_default_str();
        cmd->add_option("--retries", retries, "Judge retries on transport errors, 429 and 5xx")
            ->capture_default_str();
        cmd->add_option("--max-inflight", max_inflight, "Concurrent judge requests")->capture_default_str();
        cmd->add_flag("--snap-scores", snap, "Round judge scores to the 0.1 grid");
    }

    void write(json& o) const {
        if (!endpoint.empty()) o["judge_endpoint"] = endpoint;
        if (!mock.empty()) o["mock"] = mock;
        if (!fixture.empty()) o["fixture"] = fixture;
        o["seed"] = seed;
        o["judge_model"] = model;
        o["timeout"] = timeout;
        o["retries"] = retries;
        o["max_inflight"] = max_inflight;
        o["snap_scores"] = snap;
    }
};

using CommandFn = cafe_status (*)(const char*, char**);

int run(CommandFn fn, const json& options) {
    char* summary = nullptr;
    cafe_status st = fn(options.dump().c_str(), &summary);
    if (summary) {
        std::cout << summary << '\n';
        cafe_string_free(summary);
    }
    if (st == CAFE_OK) return 0;
    std::cerr << "cafe: " << cafe_status_name(st) << ": " << cafe_last_error() << '\n';
    return st == CAFE_E_THRESHOLD ? kExitThreshold : kExitError;
}

int serve(const json& options) {
    cafe_service* svc = nullptr;
    int port = 0;
    cafe_status st = cafe_service_start(options.dump().c_str(), &svc, &port);
    if (st != CAFE_OK) {
        std::cerr << "cafe: " << cafe_status_name(st) << ": " << cafe_last_error() << '\n';
        return kExitError;
    }
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "cafe: listening on " << options.value("host", "127.0.0.1") << ':' << port << std::endl;
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    cafe_service_free(svc);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Audio reasoning fidelity metrics and MPAR2 rewards"};
    app.set_version_flag("--version", std::string(cafe_version()));
    app.require_subcommand(1);

    json opts = json::object();
    JudgeFlags judge;
    std::string dataset, traces, out, extractions, weights, score_malformed = "off", counter = "whitespace";
    double max_flagged = 0.05, bin_width = 40.0, bin_origin = 0.0;

    auto* extract = app.add_subcommand("extract", "Judge-extract event categories for each trace");
    auto* reward = app.add_subcommand("reward", "Score traces with the full reward stack");
    for (auto* cmd : {extract, reward}) {
        cmd->add_option("--dataset", dataset, "Samples JSONL")->required()->check(CLI::ExistingFile);
        cmd->add_option("--traces", traces, "Traces JSONL")->required()->check(CLI::ExistingFile);
        cmd->add_option("--out", out, "Output JSONL (resumed when present)")->required();
        cmd->add_option("--max-flagged-frac", max_flagged, "Exit 3 when more records than this are flagged")
            ->capture_default_str();
        judge.add_to(cmd);
    }
    reward->add_option("--weights", weights, "JSON overrides, e.g. '{\"mu\":0}'");
    reward->add_option("--score-malformed", score_malformed, "Score sections of traces that fail the format")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    reward->add_option("--token-counter", counter)->check(CLI::IsMember({"whitespace", "chars_div4"}));

    auto* eval = app.add_subcommand("eval", "Aggregate extractions into a fidelity report");
    eval->add_option("--extractions", extractions, "Output of extract")->required()->check(CLI::ExistingFile);
    eval->add_option("--traces", traces)->required()->check(CLI::ExistingFile);
    eval->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
    eval->add_option("--out", out, "Prefix for .json, .metrics.csv and .bins.csv")->required();
    eval->add_option("--bin-width", bin_width)->capture_default_str();
    eval->add_option("--bin-origin", bin_origin)->capture_default_str();
    eval->add_option("--token-counter", counter)->check(CLI::IsMember({"whitespace", "chars_div4"}));

    std::string host = "127.0.0.1";
    int port = 8080;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP reward service");
    serve_cmd->add_option("--host", host)->capture_default_str();
    serve_cmd->add_option("--port", port)->capture_default_str();
    serve_cmd->add_option("--dataset", dataset, "Samples addressable by sample_id")->check(CLI::ExistingFile);
    serve_cmd->add_option("--weights", weights);
    serve_cmd->add_option("--score-malformed", score_malformed)->check(CLI::IsMember({"on", "off"}));
    judge.add_to(serve_cmd);

    auto* filter = app.add_subcommand("filter", "Cold-start data filters");
    filter->require_subcommand(1);
    std::string rollouts, scores;
    double t_reason = 8.0, t_review = 8.0;
    auto* difficulty = filter->add_subcommand("difficulty", "Drop samples every rollout agrees on");
    difficulty->add_option("--rollouts", rollouts, "JSONL {sample_id, k, n_correct}")->required()->check(CLI::ExistingFile);
    difficulty->add_option("--out", out)->required();
    auto* qa = filter->add_subcommand("qa", "Judge-rated reasoning depth, KEEP when score >= 4");
    qa->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
    qa->add_option("--out", out)->required();
    qa->add_option("--max-flagged-frac", max_flagged)->capture_default_str();
    judge.add_to(qa);
    auto* cot = filter->add_subcommand("cot", "Threshold reasoning/review pair scores");
    cot->add_option("--scores", scores, "JSONL {sample_id, reply:\"a/b\"}")->required()->check(CLI::ExistingFile);
    cot->add_option("--out", out)->required();
    cot->add_option("--t-reason", t_reason)->capture_default_str();
    cot->add_option("--t-review", t_review)->capture_default_str();

    std::string replies;
    auto* gen = app.add_subcommand("gen-parse", "Parse generated multiple-choice questions");
    gen->add_option("--replies", replies, "JSONL {id, reply}")->required()->check(CLI::ExistingFile);
    gen->add_option("--out", out)->required();

    std::string pool, aspects, edges;
    std::size_t target = 0;
    std::uint64_t seed = 0;
    auto* balance = app.add_subcommand("balance", "Stratified sample by aspect and duration");
    balance->add_option("--pool", pool, "JSONL {sample_id, aspect, duration_s}")->required()->check(CLI::ExistingFile);
    balance->add_option("--out", out)->required();
    balance->add_option("--target", target)->required();
    balance->add_option("--aspects", aspects, "Comma-separated; default: aspects in pool order");
    balance->add_option("--edges", edges, "Comma-separated duration edges in seconds")->default_str("0,10,30");
    balance->add_option("--seed", seed);

    std::string template_name, bindings;
    auto* render = app.add_subcommand("render", "Print a judge prompt");
    render->add_option("template", template_name)->required();
    render->add_option("--bindings", bindings, "JSON object of placeholder values");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitError;
    }

    auto split = [](const std::string& s) {
        std::vector<std::string> parts;
        std::string cur;
        for (char c : s + ",") {
            if (c == ',') {
                if (!cur.empty()) parts.push_back(cur);
                cur.clear();
            } else if (c != ' ') {
                cur += c;
            }
        }
        return parts;
    };

    try {
        if (extract->parsed() || reward->parsed()) {
            opts["dataset"] = dataset;
            opts["traces"] = traces;
            opts["out"] = out;
            opts["max_flagged_frac"] = max_flagged;
            judge.write(opts);
            if (extract->parsed()) return run(cafe_cmd_extract, opts);
            if (!weights.empty()) opts["weights"] = weights;
            opts["score_malformed"] = score_malformed == "on";
            opts["token_counter"] = counter;
            return run(cafe_cmd_reward, opts);
        }
        if (eval->parsed()) {
            opts = {{"extractions", extractions}, {"traces", traces},       {"dataset", dataset},
                    {"out", out},                 {"bin_width", bin_width}, {"bin_origin", bin_origin},
                    {"token_counter", counter}};
            char* report = nullptr;
            cafe_status st = cafe_cmd_eval(opts.dump().c_str(), &report);
            cafe_string_free(report);
            if (st == CAFE_OK) {
                std::cout << out << ".json\n" << out << ".metrics.csv\n" << out << ".bins.csv\n";
                return 0;
            }
            std::cerr << "cafe: " << cafe_status_name(st) << ": " << cafe_last_error() << '\n';
            return kExitError;
        }
        if (serve_cmd->parsed()) {
            opts["host"] = host;
            opts["port"] = port;
            if (!dataset.empty()) opts["dataset"] = dataset;
            if (!weights.empty()) opts["weights"] = weights;
            opts["score_malformed"] = score_malformed == "on";
            judge.write(opts);
            return serve(opts);
        }
        if (difficulty->parsed()) return run(cafe_cmd_filter_difficulty, {{"rollouts", rollouts}, {"out", out}});
        if (qa->parsed()) {
            opts = {{"dataset", dataset}, {"out", out}, {"max_flagged_frac", max_flagged}};
            judge.write(opts);
            return run(cafe_cmd_filter_qa, opts);
        }
        if (cot->parsed())
            return run(cafe_cmd_filter_cot, {{"scores", scores}, {"out", out}, {"t_reason", t_reason}, {"t_review", t_review}});
        if (gen->parsed()) return run(cafe_cmd_gen_parse, {{"replies", replies}, {"out", out}});
        if (balance->parsed()) {
            opts = {{"pool", pool}, {"out", out}, {"target", target}, {"seed", seed}};
            if (!aspects.empty()) opts["aspects"] = split(aspects);
            std::vector<double> e;
            for (const auto& p : split(edges.empty() ? "0,10,30" : edges)) e.push_back(std::stod(p));
            opts["edges"] = e;
            return run(cafe_cmd_balance, opts);
        }
        if (render->parsed()) {
            char* text = nullptr;
            cafe_status st = cafe_render_template(template_name.c_str(), bindings.c_str(), &text);
            if (st != CAFE_OK) {
                std::cerr << "cafe: " << cafe_status_name(st) << ": " << cafe_last_error() << '\n';
                return kExitError;
            }
            std::cout << text;
            cafe_string_free(text);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "cafe: " << e.what() << '\n';
        return kExitError;
    }
    return kExitError;
}
