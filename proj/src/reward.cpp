#include "cafe/reward.hpp"

#include <algorithm>
#include <cmath>
#include <future>

#include "cafe/error.hpp"
#include "cafe/prompts.hpp"

namespace cafe::reward {

namespace {

constexpr double kLogFloor = 1e-300;

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

bool judge_failure(const Error& e) {
    return e.code() == ErrorCode::judge || e.code() == ErrorCode::judge_format;
}

std::string step_text(const trace::SubStep& step) {
    return "Sub-question: " + step.sub_question + "\nAnswer: " + step.sub_answer;
}

double ask_score(judge::JudgeGateway& g, const std::string& prompt) {
    return g.ask_scalar(prompt).value;
}

}  // namespace

void RewardWeights::validate() const {
    for (double v : {theta, mu, alpha, beta, gamma, delta})
        if (!std::isfinite(v) || v < 0.0)
            throw Error(ErrorCode::invalid_argument, "reward weights must be finite and >= 0");
    if (theta > 1.0) throw Error(ErrorCode::invalid_argument, "theta must be in [0, 1]");
}

RewardWeights merge_weights(const RewardWeights& base, const nlohmann::json& overrides) {
    if (overrides.is_null()) return base;
    if (!overrides.is_object()) throw Error(ErrorCode::invalid_argument, "weights must be a JSON object");
    RewardWeights w = base;
    for (auto it = overrides.begin(); it != overrides.end(); ++it) {
        double* slot = nullptr;
        const auto& k = it.key();
        if (k == "theta") slot = &w.theta;
        else if (k == "mu") slot = &w.mu;
        else if (k == "alpha") slot = &w.alpha;
        else if (k == "beta") slot = &w.beta;
        else if (k == "gamma") slot = &w.gamma;
        else if (k == "delta") slot = &w.delta;
        else throw Error(ErrorCode::invalid_argument, "unknown weight " + k);
        if (!it->is_number()) throw Error(ErrorCode::invalid_argument, "weight " + k + " must be a number");
        *slot = it->get<double>();
    }
    w.validate();
    return w;
}

nlohmann::ordered_json to_json(const RewardWeights& w) {
    return {{"theta", w.theta}, {"mu", w.mu},       {"alpha", w.alpha},
            {"beta", w.beta},   {"gamma", w.gamma}, {"delta", w.delta}};
}

void ComponentScores::validate() const {
    bool ok = in_unit(perception) && in_unit(all_reason) && in_unit(review) &&
              (acc == 0 || acc == 1) && (format == 0 || format == 1) &&
              std::all_of(step_scores.begin(), step_scores.end(), in_unit);
    if (!ok) throw Error(ErrorCode::invalid_argument, "component score out of bounds");
}

nlohmann::ordered_json to_json(const RewardBreakdown& b) {
    return {{"r_perception", b.r_perception}, {"r_spr", b.r_spr},   {"r_rea", b.r_rea},
            {"r_format", b.r_format},         {"r_all", b.r_all},   {"flags", b.flags},
            {"step_scores", b.step_scores}};
}

RewardBreakdown breakdown_from_json(const nlohmann::json& j) {
    RewardBreakdown b;
    try {
        b.r_perception = j.at("r_perception").get<double>();
        b.r_spr = j.at("r_spr").get<double>();
        b.r_rea = j.at("r_rea").get<double>();
        b.r_format = j.at("r_format").get<double>();
        b.r_all = j.at("r_all").get<double>();
        b.flags = j.at("flags").get<std::vector<std::string>>();
        b.step_scores = j.at("step_scores").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse, std::string("reward breakdown: ") + e.what());
    }
    return b;
}

double geometric_mean(const std::vector<double>& scores) {
    if (scores.empty()) return 0.0;
    double log_sum = 0.0;
    double lo = scores.front(), hi = scores.front();
    for (double s : scores) {
        if (s == 0.0) return 0.0;
        log_sum += std::log(std::max(s, kLogFloor));
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    double gm = std::exp(log_sum / static_cast<double>(scores.size()));
    return std::clamp(gm, lo, hi);
}

RewardBreakdown combine(const ComponentScores& s, const RewardWeights& w) {
    RewardBreakdown b;
    const double gm = geometric_mean(s.step_scores);
    b.r_perception = s.perception;
    b.r_spr = w.theta * gm + (1.0 - w.theta) * s.all_reason;
    b.r_rea = s.acc * (1.0 + w.mu * s.review);
    b.r_format = s.format;
    b.r_all = w.alpha * b.r_perception + w.beta * b.r_spr + w.gamma * b.r_rea + w.delta * b.r_format;
    b.step_scores = s.step_scores;
    return b;
}

std::string perception_prompt(const trace::ParsedTrace& t, const model::AudioQASample& s) {
    return judge::render_template(judge::TemplateId::perception_score,
                                  {{"caption_text", s.caption},
                                   {"question_text", model::question_with_choices(s)},
                                   {"answer_text", model::answer_with_letter(s)},
                                   {"cot_text", t.perception_text}});
}

std::string step_prompt(const trace::ParsedTrace& t, const model::AudioQASample& s, std::size_t i) {
    if (i >= t.steps.size()) throw Error(ErrorCode::invalid_argument, "step index out of range");
    std::string history;
    for (std::size_t j = 0; j < i; ++j) {
        if (!history.empty()) history += '\n';
        history += std::to_string(t.steps[j].index) + ". " + step_text(t.steps[j]);
    }
    if (history.empty()) history = "None";
    return judge::render_template(judge::TemplateId::step_score,
                                  {{"caption_text", s.caption},
                                   {"question_text", model::question_with_choices(s)},
                                   {"history_text", history},
                                   {"current_step_text", step_text(t.steps[i])}});
}

std::string chain_prompt(const trace::ParsedTrace& t, const model::AudioQASample& s) {
    return judge::render_template(judge::TemplateId::holistic_score,
                                  {{"caption_text", s.caption},
                                   {"question_text", model::question_with_choices(s)},
                                   {"answer_text", model::answer_with_letter(s)},
                                   {"full_reasoning", t.reasoning_text}});
}

std::string review_prompt(const trace::ParsedTrace& t, const model::AudioQASample& s) {
    return judge::render_template(judge::TemplateId::review_score,
                                  {{"caption_text", t.perception_text},
                                   {"ground_truth_text", s.caption},
                                   {"question_text", model::question_with_choices(s)},
                                   {"answer_text", model::answer_with_letter(s)},
                                   {"reasoning_text", t.reasoning_text},
                                   {"review_text", t.review_text}});
}

double score_perception(const trace::ParsedTrace& t, const model::AudioQASample& s,
                        judge::JudgeGateway& g) {
    if (t.perception_text.empty()) return 0.0;
    return ask_score(g, perception_prompt(t, s));
}

std::vector<double> score_steps(const trace::ParsedTrace& t, const model::AudioQASample& s,
                                judge::JudgeGateway& g) {
    std::vector<std::future<double>> pending;
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        if (t.steps[i].empty()) {
            std::promise<double> zero;
            zero.set_value(0.0);
            pending.push_back(zero.get_future());
            continue;
        }
        pending.push_back(std::async(std::launch::async, [&, i] { return ask_score(g, step_prompt(t, s, i)); }));
    }
    std::vector<double> scores;
    std::exception_ptr first_error;
    for (auto& f : pending) {
        try {
            scores.push_back(f.get());
        } catch (...) {
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);
    return scores;
}

double score_chain(const trace::ParsedTrace& t, const model::AudioQASample& s, judge::JudgeGateway& g) {
    if (t.reasoning_text.empty()) return 0.0;
    return ask_score(g, chain_prompt(t, s));
}

double score_review(const trace::ParsedTrace& t, const model::AudioQASample& s, judge::JudgeGateway& g) {
    if (t.review_text.empty()) return 0.0;
    return ask_score(g, review_prompt(t, s));
}

int accuracy(const trace::ParsedTrace& t, const model::AudioQASample& s) {
    auto letter = trace::extract_answer(t, s.choices);
    return letter && *letter == s.answer_key ? 1 : 0;
}

int format_reward(const trace::ParseResult& r) {
    if (!r.strict || !r.ok()) return 0;
    const auto& t = *r.trace;
    bool ok = !t.steps.empty() && !t.perception.empty() && t.review.complete() &&
              !t.final_answer.empty();
    return ok ? 1 : 0;
}

RewardBreakdown score_trace(const model::AudioQASample& sample, std::string_view raw_text,
                            judge::JudgeGateway& gateway, const RewardWeights& w,
                            const ScoreOptions& options) {
    w.validate();
    auto strict = trace::parse_mpar2(raw_text, {true, options.counter});
    ComponentScores scores;
    scores.format = format_reward(strict);
    if (scores.format == 0 && !options.score_malformed) {
        auto b = combine(scores, w);
        b.flags.push_back("malformed");
        return b;
    }
    trace::ParsedTrace parsed =
        strict.ok() ? *strict.trace : *trace::parse_mpar2(raw_text, {false, options.counter}).trace;
    scores.acc = accuracy(parsed, sample);

    auto launch = [&](auto fn) { return std::async(std::launch::async, fn); };
    auto perception = launch([&] { return score_perception(parsed, sample, gateway); });
    auto steps = launch([&] { return score_steps(parsed, sample, gateway); });
    auto chain = launch([&] { return score_chain(parsed, sample, gateway); });
    auto review = launch([&] { return scores.acc ? score_review(parsed, sample, gateway) : 0.0; });

    std::vector<std::string> flags;
    auto collect = [&](auto& fut, auto& slot, const char* flag) {
        try {
            slot = fut.get();
        } catch (const Error& e) {
            if (!judge_failure(e)) throw;
            flags.emplace_back(flag);
        }
    };
    collect(perception, scores.perception, "perception_unavailable");
    collect(steps, scores.step_scores, "steps_unavailable");
    collect(chain, scores.all_reason, "chain_unavailable");
    collect(review, scores.review, "review_unavailable");
    if (scores.format == 0) flags.insert(flags.begin(), "malformed");

    auto b = combine(scores, w);
    b.flags = std::move(flags);
    return b;
}

}  // namespace cafe::reward
