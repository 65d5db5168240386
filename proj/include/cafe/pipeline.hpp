#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cafe/judge.hpp"
#include "cafe/model.hpp"

namespace cafe::pipeline {

enum class Decision { keep, discard };
std::string_view to_string(Decision d);

struct FilterVerdict {
    Decision decision = Decision::discard;
    std::string reason;
    std::optional<double> score;
};

nlohmann::ordered_json to_json(const FilterVerdict& v);

struct RolloutRecord {
    std::string sample_id;
    int k = 16;
    int n_correct = 0;

    void validate() const;
};

RolloutRecord rollout_from_json(const nlohmann::json& j);

/// DISCARD when every rollout agrees (all correct or all wrong).
FilterVerdict difficulty_filter(const RolloutRecord& r);

/// Applies the score rule to a parsed {analysis, score, decision} reply.
/// The judge's own decision string never overrides the score.
FilterVerdict qa_verdict(const nlohmann::ordered_json& reply);
FilterVerdict qa_filter(const model::AudioQASample& sample, judge::JudgeGateway& gateway);
std::string qa_filter_prompt(const model::AudioQASample& sample);

struct CotThresholds {
    double reasoning = 8.0;
    double review = 8.0;
};

FilterVerdict cot_filter(const judge::PairScore& pair, const CotThresholds& t = {});

struct GeneratedMcq {
    std::string question;
    std::vector<model::Choice> choices;  // A-D
    std::string answer_key;
};

struct Unsuitable {};

using GenerationOutcome = std::variant<GeneratedMcq, Unsuitable>;

inline constexpr std::string_view kUnsuitableSentinel = "Not suitable for this hallucination type";

/// Throws Error(parse) when the reply holds neither the sentinel nor a full
/// Question / A.-D. / Correct answer block.
GenerationOutcome parse_generated_qa(std::string_view reply);
nlohmann::ordered_json to_json(const GenerationOutcome& outcome);

struct PoolItem {
    std::string sample_id;
    std::string aspect;
    double duration_s = 0.0;
};

struct BalanceOptions {
    std::size_t target_total = 0;
    std::vector<std::string> aspects;
    std::vector<double> duration_edges{0.0, 10.0, 30.0};  // last bucket is open-ended
    std::uint64_t seed = 0;
};

/// Indices into `pool` of the selected subset, in pool order.
std::vector<std::size_t> balanced_sample(const std::vector<PoolItem>& pool, const BalanceOptions& options);

}  // namespace cafe::pipeline
