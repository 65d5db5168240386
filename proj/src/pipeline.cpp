#include "cafe/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <regex>

#include "cafe/error.hpp"
#include "cafe/prompts.hpp"

namespace cafe::pipeline {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Decision d) { return d == Decision::keep ? "KEEP" : "DISCARD"; }

ojson to_json(const FilterVerdict& v) {
    ojson j{{"decision", to_string(v.decision)}, {"reason", v.reason}};
    j["score"] = v.score ? ojson(*v.score) : ojson(nullptr);
    return j;
}

void RolloutRecord::validate() const {
    if (k < 1) throw Error(ErrorCode::invalid_argument, "rollout k must be >= 1");
    if (n_correct < 0 || n_correct > k)
        throw Error(ErrorCode::invalid_argument, "n_correct must be in [0, k]");
}

RolloutRecord rollout_from_json(const nlohmann::json& j) {
    RolloutRecord r;
    try {
        r.sample_id = j.at("sample_id").get<std::string>();
        if (j.contains("k")) r.k = j.at("k").get<int>();
        r.n_correct = j.at("n_correct").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse, std::string("rollout record: ") + e.what());
    }
    r.validate();
    return r;
}

FilterVerdict difficulty_filter(const RolloutRecord& r) {
    r.validate();
    if (r.n_correct == 0) return {Decision::discard, "all " + std::to_string(r.k) + " rollouts incorrect", std::nullopt};
    if (r.n_correct == r.k) return {Decision::discard, "all " + std::to_string(r.k) + " rollouts correct", std::nullopt};
    return {Decision::keep,
            std::to_string(r.n_correct) + " of " + std::to_string(r.k) + " rollouts correct",
            std::nullopt};
}

FilterVerdict qa_verdict(const ojson& reply) {
    auto it = reply.find("score");
    if (it == reply.end()) throw JudgeFormatError("QA filter reply has no score");
    double score = 0.0;
    if (it->is_number()) {
        score = it->get<double>();
    } else if (it->is_string()) {
        try {
            std::size_t used = 0;
            score = std::stod(it->get<std::string>(), &used);
        } catch (const std::exception&) {
            throw JudgeFormatError("QA filter score is not a number");
        }
    } else {
        throw JudgeFormatError("QA filter score is not a number");
    }
    if (!(score >= 1.0 && score <= 5.0)) throw JudgeFormatError("QA filter score out of range [1, 5]");

    FilterVerdict v;
    v.score = score;
    v.decision = score >= 4.0 ? Decision::keep : Decision::discard;
    v.reason = "score " + nlohmann::json(score).dump() + (score >= 4.0 ? " >= 4" : " < 4");
    if (auto d = reply.find("decision"); d != reply.end() && d->is_string()) {
        std::string said = d->get<std::string>();
        std::transform(said.begin(), said.end(), said.begin(), [](unsigned char c) { return std::toupper(c); });
        if (said.find(to_string(v.decision)) == std::string::npos)
            v.reason += "; judge decision '" + d->get<std::string>() + "' overridden by score rule";
    }
    return v;
}

std::string qa_filter_prompt(const model::AudioQASample& sample) {
    return judge::render_template(
        judge::TemplateId::qa_filter,
        {{"caption", sample.caption},
         {"question", model::question_with_choices(sample) + "\nAnswer: " + model::answer_with_letter(sample)}});
}

FilterVerdict qa_filter(const model::AudioQASample& sample, judge::JudgeGateway& gateway) {
    return gateway.ask_parsed(qa_filter_prompt(sample), [](const std::string& reply) {
        return qa_verdict(judge::extract_json_object(reply));
    });
}

FilterVerdict cot_filter(const judge::PairScore& pair, const CotThresholds& t) {
    auto in_range = [](double v) { return v >= 0.0 && v <= 10.0; };
    if (!in_range(pair.reasoning_score) || !in_range(pair.review_score))
        throw Error(ErrorCode::invalid_argument, "pair score out of range [0, 10]");
    FilterVerdict v;
    v.score = pair.reasoning_score;
    bool reasoning_ok = pair.reasoning_score >= t.reasoning;
    bool review_ok = pair.review_score >= t.review;
    v.decision = reasoning_ok && review_ok ? Decision::keep : Decision::discard;
    auto num = [](double x) { return nlohmann::json(x).dump(); };
    v.reason = "reasoning " + num(pair.reasoning_score) + (reasoning_ok ? " >= " : " < ") + num(t.reasoning) +
               ", review " + num(pair.review_score) + (review_ok ? " >= " : " < ") + num(t.review);
    return v;
}

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// Offset of the option marker `X.` or `X)` at or after `from`, preceded by
// whitespace or start of text.
std::optional<std::pair<std::size_t, std::size_t>> find_option(const std::string& text, char letter,
                                                               std::size_t from) {
    for (std::size_t i = from; i + 1 < text.size(); ++i) {
        if (text[i] != letter || (text[i + 1] != '.' && text[i + 1] != ')')) continue;
        if (i > 0 && !std::isspace(static_cast<unsigned char>(text[i - 1]))) continue;
        if (i + 2 < text.size() && !std::isspace(static_cast<unsigned char>(text[i + 2]))) continue;
        return std::make_pair(i, i + 2);
    }
    return std::nullopt;
}

}  // namespace

GenerationOutcome parse_generated_qa(std::string_view reply) {
    if (reply.find(kUnsuitableSentinel) != std::string_view::npos) return Unsuitable{};
    std::string text(reply);
    text.erase(std::remove(text.begin(), text.end(), '*'), text.end());

    static const std::regex question_re(R"(question\s*:)", std::regex::icase);
    static const std::regex answer_re(R"(correct\s+answer\s*:\s*\(?\s*([A-Da-d])\b)", std::regex::icase);
    static const std::regex choice_label(R"(\s*choices?\s*:\s*$)", std::regex::icase);

    std::smatch qm;
    if (!std::regex_search(text, qm, question_re))
        throw Error(ErrorCode::parse, "generated QA has no Question: line");
    const std::size_t q_begin = static_cast<std::size_t>(qm.position(0) + qm.length(0));

    std::smatch am;
    std::size_t answer_pos = text.size();
    std::string key;
    if (std::regex_search(text, am, answer_re)) {
        answer_pos = static_cast<std::size_t>(am.position(0));
        key = am.str(1);
        key[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(key[0])));
    }

    GeneratedMcq mcq;
    std::vector<std::pair<std::size_t, std::size_t>> markers;
    std::size_t from = q_begin;
    for (char letter : {'A', 'B', 'C', 'D'}) {
        auto m = find_option(text, letter, from);
        if (!m || m->first >= answer_pos)
            throw Error(ErrorCode::parse, std::string("generated QA is missing option ") + letter);
        markers.push_back(*m);
        from = m->second;
    }
    mcq.question = std::regex_replace(text.substr(q_begin, markers[0].first - q_begin), choice_label, "");
    mcq.question = trim(mcq.question);
    if (mcq.question.empty()) throw Error(ErrorCode::parse, "generated QA has an empty question");
    for (std::size_t i = 0; i < markers.size(); ++i) {
        std::size_t end = i + 1 < markers.size() ? markers[i + 1].first : answer_pos;
        std::string body = trim(std::string_view(text).substr(markers[i].second, end - markers[i].second));
        if (body.empty())
            throw Error(ErrorCode::parse, std::string("generated QA option ") + "ABCD"[i] + " is empty");
        mcq.choices.push_back({std::string(1, "ABCD"[i]), body});
    }
    if (key.empty()) throw Error(ErrorCode::parse, "generated QA has no Correct answer: line");
    mcq.answer_key = key;
    return mcq;
}

ojson to_json(const GenerationOutcome& outcome) {
    if (std::holds_alternative<Unsuitable>(outcome)) return {{"kind", "unsuitable"}};
    const auto& mcq = std::get<GeneratedMcq>(outcome);
    ojson choices = ojson::array();
    for (const auto& c : mcq.choices) choices.push_back({c.letter, c.text});
    return {{"kind", "mcq"}, {"question", mcq.question}, {"choices", choices}, {"answer_key", mcq.answer_key}};
}

namespace {

// Unbiased draw in [0, n) by rejection.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    for (;;) {
        std::uint64_t x = rng();
        if (x < limit) return x % n;
    }
}

std::size_t bucket_of(double duration, const std::vector<double>& edges) {
    std::size_t b = 0;
    while (b + 1 < edges.size() && duration >= edges[b + 1]) ++b;
    return b;
}

}  // namespace

std::vector<std::size_t> balanced_sample(const std::vector<PoolItem>& pool, const BalanceOptions& o) {
    if (o.aspects.empty()) throw Error(ErrorCode::invalid_argument, "balanced sampling needs at least one aspect");
    if (o.duration_edges.empty()) throw Error(ErrorCode::invalid_argument, "duration edges must not be empty");
    if (!std::is_sorted(o.duration_edges.begin(), o.duration_edges.end()) ||
        std::adjacent_find(o.duration_edges.begin(), o.duration_edges.end()) != o.duration_edges.end())
        throw Error(ErrorCode::invalid_argument, "duration edges must be strictly increasing");

    const std::size_t n_aspects = o.aspects.size();
    const std::size_t n_buckets = o.duration_edges.size();
    const std::size_t n_cells = n_aspects * n_buckets;
    std::vector<std::vector<std::size_t>> members(n_cells);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        auto a = std::find(o.aspects.begin(), o.aspects.end(), pool[i].aspect);
        if (a == o.aspects.end()) continue;
        if (pool[i].duration_s < o.duration_edges.front()) continue;
        std::size_t cell = static_cast<std::size_t>(a - o.aspects.begin()) * n_buckets +
                           bucket_of(pool[i].duration_s, o.duration_edges);
        members[cell].push_back(i);
    }
    std::size_t eligible = 0;
    for (const auto& m : members) eligible += m.size();
    if (o.target_total > eligible)
        throw Error(ErrorCode::invalid_argument, "target " + std::to_string(o.target_total) +
                                                     " unreachable: only " + std::to_string(eligible) +
                                                     " eligible items");

    std::vector<std::size_t> alloc(n_cells, o.target_total / n_cells);
    std::size_t remainder = o.target_total % n_cells;
    std::vector<bool> got_extra(n_cells, false);
    for (std::size_t k = 0; k < remainder; ++k) {
        std::size_t a = k % n_aspects;
        std::optional<std::size_t> best;
        for (std::size_t b = 0; b < n_buckets; ++b) {
            std::size_t c = a * n_buckets + b;
            if (got_extra[c]) continue;
            if (!best || members[c].size() > members[*best].size()) best = c;
        }
        got_extra[*best] = true;
        ++alloc[*best];
    }

    std::size_t shortfall = 0;
    for (std::size_t c = 0; c < n_cells; ++c)
        if (alloc[c] > members[c].size()) {
            shortfall += alloc[c] - members[c].size();
            alloc[c] = members[c].size();
        }
    auto aspect_total = [&](std::size_t a) {
        std::size_t t = 0;
        for (std::size_t b = 0; b < n_buckets; ++b) t += alloc[a * n_buckets + b];
        return t;
    };
    for (; shortfall > 0; --shortfall) {
        std::optional<std::size_t> best;
        std::pair<std::size_t, std::size_t> best_key;
        for (std::size_t c = 0; c < n_cells; ++c) {
            if (alloc[c] >= members[c].size()) continue;
            std::pair<std::size_t, std::size_t> key{aspect_total(c / n_buckets), alloc[c]};
            if (!best || key < best_key) {
                best = c;
                best_key = key;
            }
        }
        ++alloc[*best];
    }

    std::mt19937_64 rng(o.seed);
    std::vector<std::size_t> chosen;
    for (std::size_t c = 0; c < n_cells; ++c) {
        auto& m = members[c];
        for (std::size_t i = 0; i < alloc[c]; ++i) {
            std::size_t j = i + static_cast<std::size_t>(bounded(rng, m.size() - i));
            std::swap(m[i], m[j]);
            chosen.push_back(m[i]);
        }
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

}  // namespace cafe::pipeline
