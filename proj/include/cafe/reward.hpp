#pragma once

#include <string>
#include <vector>

#include "cafe/judge.hpp"
#include "cafe/model.hpp"
#include "cafe/trace.hpp"

namespace cafe::reward {

struct RewardWeights {
    double theta = 0.7;
    double mu = 0.5;
    double alpha = 1.5;
    double beta = 1.0;
    double gamma = 1.5;
    double delta = 0.1;

    void validate() const;
    bool operator==(const RewardWeights&) const = default;
};

/// Applies the keys present in `overrides` on top of `base`. Unknown keys
/// and non-numeric values raise invalid_argument.
RewardWeights merge_weights(const RewardWeights& base, const nlohmann::json& overrides);
nlohmann::ordered_json to_json(const RewardWeights& w);

struct ComponentScores {
    double perception = 0.0;
    std::vector<double> step_scores;
    double all_reason = 0.0;
    double review = 0.0;
    int acc = 0;
    int format = 0;

    void validate() const;
};

struct RewardBreakdown {
    double r_perception = 0.0;
    double r_spr = 0.0;
    double r_rea = 0.0;
    double r_format = 0.0;
    double r_all = 0.0;
    std::vector<std::string> flags;
    std::vector<double> step_scores;

    bool flagged() const { return !flags.empty(); }
    bool operator==(const RewardBreakdown&) const = default;
};

nlohmann::ordered_json to_json(const RewardBreakdown& b);
RewardBreakdown breakdown_from_json(const nlohmann::json& j);

/// Geometric mean in log space. Zero when the list is empty or holds a zero.
double geometric_mean(const std::vector<double>& scores);

RewardBreakdown combine(const ComponentScores& scores, const RewardWeights& w = {});

// Judge prompts for each scored component.
std::string perception_prompt(const trace::ParsedTrace& t, const model::AudioQASample& s);
std::string step_prompt(const trace::ParsedTrace& t, const model::AudioQASample& s, std::size_t i);
std::string chain_prompt(const trace::ParsedTrace& t, const model::AudioQASample& s);
std::string review_prompt(const trace::ParsedTrace& t, const model::AudioQASample& s);

// Each throws JudgeError / JudgeFormatError when the judge stays unavailable.
double score_perception(const trace::ParsedTrace& t, const model::AudioQASample& s,
                        judge::JudgeGateway& g);
std::vector<double> score_steps(const trace::ParsedTrace& t, const model::AudioQASample& s,
                                judge::JudgeGateway& g);
double score_chain(const trace::ParsedTrace& t, const model::AudioQASample& s,
                   judge::JudgeGateway& g);
double score_review(const trace::ParsedTrace& t, const model::AudioQASample& s,
                    judge::JudgeGateway& g);

int accuracy(const trace::ParsedTrace& t, const model::AudioQASample& s);
/// 1 iff the strict parse succeeded with at least one step and non-empty
/// perception, review and answer.
int format_reward(const trace::ParseResult& strict_result);

struct ScoreOptions {
    bool score_malformed = false;
    trace::TokenCounter counter = trace::TokenCounter::whitespace;
};

/// Full pipeline for one (sample, trace). Judge calls for the components
/// run concurrently; a component whose judge stays unavailable scores 0 and
/// adds a flag.
RewardBreakdown score_trace(const model::AudioQASample& sample, std::string_view raw_text,
                            judge::JudgeGateway& gateway, const RewardWeights& w = {},
                            const ScoreOptions& options = {});

}  // namespace cafe::reward
