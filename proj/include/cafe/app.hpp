#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cafe/judge.hpp"
#include "cafe/metrics.hpp"
#include "cafe/pipeline.hpp"
#include "cafe/reward.hpp"
#include "cafe/trace.hpp"

namespace cafe::app {

namespace fs = std::filesystem;

std::string_view version();

struct JudgeConfig {
    std::optional<std::string> endpoint;     // falls back to JUDGE_BASE_URL
    std::optional<std::string> mock_policy;  // "rubric_hash" | "echo_fixture"
    std::optional<fs::path> fixture;
    std::uint64_t seed = 0;
    std::string model = "judge";
    double timeout_s = 60.0;
    int retries = 3;
    int max_inflight = 8;
    bool snap_scores = false;
};

std::shared_ptr<judge::Judge> make_judge(const JudgeConfig& cfg);
judge::GatewayOptions gateway_options(const JudgeConfig& cfg);

struct RunSummary {
    std::size_t total = 0;
    std::size_t written = 0;  // records produced by this run
    std::size_t skipped = 0;  // records reused from an earlier run
    std::size_t flagged = 0;  // records in the final output that carry a judge flag
    std::uint64_t judge_calls = 0;
    bool threshold_exceeded = false;

    nlohmann::ordered_json to_json() const;
};

struct BatchOptions {
    fs::path dataset;
    fs::path traces;
    fs::path out;
    JudgeConfig judge;
    double max_flagged_frac = 0.05;
};

RunSummary cmd_extract(const BatchOptions& o);

struct RewardOptions : BatchOptions {
    reward::RewardWeights weights;
    reward::ScoreOptions scoring;
};

RunSummary cmd_reward(const RewardOptions& o);

struct EvalOptions {
    fs::path extractions;
    fs::path traces;
    fs::path dataset;
    fs::path out_prefix;  // writes PREFIX.json, PREFIX.metrics.csv, PREFIX.bins.csv
    metrics::BinSpec bins;
    trace::TokenCounter counter = trace::TokenCounter::whitespace;
};

nlohmann::ordered_json cmd_eval(const EvalOptions& o);

struct DifficultyOptions {
    fs::path rollouts;
    fs::path out;
};
RunSummary cmd_filter_difficulty(const DifficultyOptions& o);

struct QaFilterOptions {
    fs::path dataset;
    fs::path out;
    JudgeConfig judge;
    double max_flagged_frac = 0.05;
};
RunSummary cmd_filter_qa(const QaFilterOptions& o);

struct CotFilterOptions {
    fs::path scores;  // JSONL {sample_id, reply:"a/b"} or {sample_id, reasoning_score, review_score}
    fs::path out;
    pipeline::CotThresholds thresholds;
};
RunSummary cmd_filter_cot(const CotFilterOptions& o);

struct GenParseOptions {
    fs::path replies;  // JSONL {id, reply}
    fs::path out;
};
RunSummary cmd_gen_parse(const GenParseOptions& o);

struct BalanceCmdOptions {
    fs::path pool;  // JSONL {sample_id, aspect, duration_s, ...}
    fs::path out;
    pipeline::BalanceOptions balance;
};
RunSummary cmd_balance(const BalanceCmdOptions& o);

/// Renders a template with bindings given as a JSON object of strings.
std::string cmd_render(std::string_view template_name, const nlohmann::json& bindings);

// Record builders shared by the batch commands and the service.
nlohmann::ordered_json extraction_record(const model::TraceRecord& t,
                                         const judge::EventExtraction& e, const std::string& judge);
std::string extraction_prompt(const model::AudioQASample& s, const trace::ParsedTrace& t);
nlohmann::ordered_json reward_record(const model::TraceRecord& t, const reward::RewardBreakdown& b);

/// True when any flag marks an unavailable judge component.
bool judge_flagged(const std::vector<std::string>& flags);

/// Six-decimal rounding used for every report number.
double round6(double x);

}  // namespace cafe::app
