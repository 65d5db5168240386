#include "cafe/judge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <regex>

#include "cafe/prompts.hpp"

namespace cafe::judge {

using ojson = nlohmann::ordered_json;

namespace {

constexpr std::string_view kExtractionKeys[] = {"all_reasoning_events", "matched_events",
                                                "error_matched",        "error_use",
                                                "neutral_events",       "missed_events"};

std::vector<std::string>& list_for(EventExtraction& e, std::string_view key) {
    if (key == "all_reasoning_events") return e.all_reasoning_events;
    if (key == "matched_events") return e.matched_events;
    if (key == "error_matched") return e.error_matched;
    if (key == "error_use") return e.error_use;
    if (key == "neutral_events") return e.neutral_events;
    return e.missed_events;
}

const std::vector<std::string>& list_for(const EventExtraction& e, std::string_view key) {
    return list_for(const_cast<EventExtraction&>(e), key);
}

std::string trim_copy(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// Reasoning judges sometimes prepend a <think>...</think> block.
std::string strip_think(std::string_view reply) {
    static const std::regex think(R"(<\s*think\s*>[\s\S]*?<\s*/\s*think\s*>)", std::regex::icase);
    return std::regex_replace(std::string(reply), think, "");
}

std::string unfence(const std::string& text) {
    auto open = text.find("```");
    if (open == std::string::npos) return text;
    auto line_end = text.find('\n', open);
    if (line_end == std::string::npos) return text;
    auto close = text.find("```", line_end);
    if (close == std::string::npos) return text.substr(line_end + 1);
    return text.substr(line_end + 1, close - line_end - 1);
}

std::string relax_json(const std::string& text) {
    static const std::regex bare_key(R"(([{,]\s*)([A-Za-z_][A-Za-z0-9_]*)\s*:)");
    static const std::regex bare_word(R"((:\s*)([A-Za-z_][A-Za-z0-9_]*)(\s*[,}\n]))");
    std::string out = std::regex_replace(text, bare_key, "$1\"$2\":");
    std::string quoted;
    auto begin = std::sregex_iterator(out.begin(), out.end(), bare_word);
    std::size_t last = 0;
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        std::string word = m[2].str();
        quoted += out.substr(last, static_cast<std::size_t>(m.position(0)) - last);
        if (word == "true" || word == "false" || word == "null")
            quoted += m.str(0);
        else
            quoted += m[1].str() + "\"" + word + "\"" + m[3].str();
        last = static_cast<std::size_t>(m.position(0) + m.length(0));
    }
    quoted += out.substr(last);
    return quoted;
}

}  // namespace

// ---------------------------------------------------------------------------
// Reply grammars
// ---------------------------------------------------------------------------

ScalarScore parse_scalar_score(std::string_view reply, bool snap) {
    static const std::regex number(R"([-+]?(?:\d+(?:\.\d*)?|\.\d+))");
    std::string text = strip_think(reply);
    std::smatch m;
    if (!std::regex_search(text, m, number))
        throw JudgeFormatError("no score found in judge reply: " + trim_copy(text).substr(0, 80));
    double value = std::strtod(m.str(0).c_str(), nullptr);
    if (!(value >= 0.0 && value <= 1.0))
        throw JudgeFormatError("score " + m.str(0) + " out of range [0, 1]");
    if (snap) value = std::round(value * 10.0) / 10.0;
    return {value};
}

PairScore parse_pair_score(std::string_view reply) {
    static const std::regex pair(R"(([-+]?\d+(?:\.\d+)?)\s*/\s*([-+]?\d+(?:\.\d+)?))");
    std::string text = strip_think(reply);
    std::smatch m;
    if (!std::regex_search(text, m, pair))
        throw JudgeFormatError("malformed pair score: expected 'a/b', got: " +
                               trim_copy(text).substr(0, 80));
    PairScore p{std::strtod(m.str(1).c_str(), nullptr), std::strtod(m.str(2).c_str(), nullptr)};
    auto in_range = [](double v) { return v >= 0.0 && v <= 10.0; };
    if (!in_range(p.reasoning_score) || !in_range(p.review_score))
        throw JudgeFormatError("pair score " + m.str(0) + " out of range [0, 10]");
    return p;
}

ojson extract_json_object(std::string_view reply) {
    std::string text = unfence(strip_think(reply));
    auto open = text.find('{');
    auto close = text.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open)
        throw JudgeFormatError("no JSON object found in judge reply");
    std::string candidate = text.substr(open, close - open + 1);
    for (const auto& attempt : {candidate, relax_json(candidate)}) {
        try {
            auto j = ojson::parse(attempt);
            if (j.is_object()) return j;
        } catch (const ojson::parse_error&) {
        }
    }
    throw JudgeFormatError("no JSON object found in judge reply");
}

std::string fold_event(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

void check_extraction_invariants(EventExtraction& e) {
    std::vector<std::string> all;
    for (const auto& a : e.all_reasoning_events) all.push_back(fold_event(a));
    auto contained = [&](const std::string& item) {
        auto f = fold_event(item);
        return std::any_of(all.begin(), all.end(), [&](const std::string& a) {
            return a == f || (!f.empty() && a.find(f) != std::string::npos) ||
                   (!a.empty() && f.find(a) != std::string::npos);
        });
    };
    for (std::string_view key : {"matched_events", "error_matched", "error_use", "neutral_events"}) {
        for (const auto& item : list_for(e, key))
            if (!contained(item))
                e.diagnostics.push_back(std::string(key) + " item '" + item +
                                        "' not in all_reasoning_events");
    }
    for (const auto& missed : e.missed_events) {
        auto f = fold_event(missed);
        for (const auto& matched : e.matched_events)
            if (fold_event(matched) == f) {
                e.diagnostics.push_back("missed_events item '" + missed +
                                        "' also listed in matched_events");
                break;
            }
    }
}

EventExtraction parse_event_extraction(std::string_view reply) {
    auto j = extract_json_object(reply);
    EventExtraction e;
    for (auto key : kExtractionKeys) {
        auto it = j.find(std::string(key));
        if (it == j.end() || it->is_null()) {
            e.diagnostics.push_back("missing key " + std::string(key) + "; treated as empty");
            continue;
        }
        if (!it->is_array())
            throw JudgeFormatError("key " + std::string(key) + " must be a list");
        auto& list = list_for(e, key);
        for (const auto& item : *it) {
            if (!item.is_string())
                throw JudgeFormatError("key " + std::string(key) + " must hold strings");
            auto s = trim_copy(item.get<std::string>());
            if (!s.empty()) list.push_back(std::move(s));
        }
    }
    check_extraction_invariants(e);
    return e;
}

ojson to_json(const EventExtraction& e, bool with_diagnostics) {
    ojson j;
    for (auto key : kExtractionKeys) j[std::string(key)] = list_for(e, key);
    if (with_diagnostics) j["diagnostics"] = e.diagnostics;
    return j;
}

EventExtraction extraction_from_json(const ojson& j) {
    if (!j.is_object()) throw Error(ErrorCode::invalid_argument, "extraction must be an object");
    EventExtraction e;
    for (auto key : kExtractionKeys) {
        auto it = j.find(std::string(key));
        if (it == j.end()) continue;
        if (!it->is_array())
            throw Error(ErrorCode::invalid_argument, "extraction key " + std::string(key) +
                                                         " must be a list");
        list_for(e, key) = it->get<std::vector<std::string>>();
    }
    if (auto it = j.find("diagnostics"); it != j.end() && it->is_array())
        e.diagnostics = it->get<std::vector<std::string>>();
    return e;
}

// ---------------------------------------------------------------------------
// Endpoint configuration
// ---------------------------------------------------------------------------

JudgeEndpoint JudgeEndpoint::from_environment() {
    JudgeEndpoint e;
    if (const char* url = std::getenv("JUDGE_BASE_URL")) e.base_url = url;
    if (const char* key = std::getenv("JUDGE_API_KEY")) e.auth_token = key;
    return e;
}

void JudgeEndpoint::validate() const {
    if (base_url.empty()) throw Error(ErrorCode::invalid_argument, "judge base_url is empty");
    if (!(timeout_s > 0.0)) throw Error(ErrorCode::invalid_argument, "judge timeout must be > 0");
    if (max_retries < 0 || max_retries > 100)
        throw Error(ErrorCode::invalid_argument, "judge max_retries must be in [0, 100]");
    if (!(temperature >= 0.0 && temperature <= 2.0))
        throw Error(ErrorCode::invalid_argument, "judge temperature must be in [0, 2]");
}

// ---------------------------------------------------------------------------
// Mock judge
// ---------------------------------------------------------------------------

std::optional<MockPolicy> parse_mock_policy(std::string_view name) {
    if (name == "echo_fixture") return MockPolicy::echo_fixture;
    if (name == "rubric_hash") return MockPolicy::rubric_hash;
    return std::nullopt;
}

std::string prompt_key(std::string_view prompt) { return hex64(fnv1a64(prompt)); }

MockJudge::MockJudge(std::uint64_t seed, MockPolicy policy, std::map<std::string, std::string> fixtures)
    : seed_(seed), policy_(policy), fixtures_(std::move(fixtures)) {}

std::map<std::string, std::string> MockJudge::load_fixtures(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open fixture file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::parse, "fixture file " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::parse, "fixture file must hold a JSON object");
    std::map<std::string, std::string> out;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!it->is_string())
            throw Error(ErrorCode::parse, "fixture reply for " + it.key() + " must be a string");
        out[it.key()] = it->get<std::string>();
    }
    return out;
}

std::string MockJudge::complete(const std::string& prompt) {
    std::lock_guard lock(mutex_);
    ++calls_;
    if (policy_ == MockPolicy::rubric_hash) {
        std::string salted = std::to_string(seed_) + "\n" + prompt;
        auto bucket = fnv1a64(salted) % 11;
        char buf[8];
        std::snprintf(buf, sizeof buf, "%.1f", static_cast<double>(bucket) / 10.0);
        return buf;
    }
    auto key = prompt_key(prompt);
    auto it = fixtures_.find(key);
    if (it == fixtures_.end()) throw JudgeError("fixture miss for prompt " + key);
    return it->second;
}

std::string MockJudge::describe() const {
    return policy_ == MockPolicy::rubric_hash ? "mock:rubric_hash" : "mock:echo_fixture";
}

std::uint64_t MockJudge::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

void MockJudge::add_fixture(std::string_view prompt, std::string reply) {
    std::lock_guard lock(mutex_);
    fixtures_[prompt_key(prompt)] = std::move(reply);
}

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

InflightLimiter::InflightLimiter(int limit) : limit_(std::max(1, limit)) {}

void InflightLimiter::acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return active_ < limit_; });
    ++active_;
    peak_ = std::max(peak_, active_);
}

void InflightLimiter::release() {
    {
        std::lock_guard lock(mutex_);
        --active_;
    }
    cv_.notify_one();
}

int InflightLimiter::peak() const {
    std::lock_guard lock(mutex_);
    return peak_;
}

JudgeGateway::JudgeGateway(std::shared_ptr<Judge> judge, GatewayOptions options)
    : judge_(std::move(judge)), options_(options), limiter_(options.max_inflight) {
    if (!judge_) throw Error(ErrorCode::invalid_argument, "gateway needs a judge");
}

std::string JudgeGateway::ask(const std::string& prompt) {
    limiter_.acquire();
    struct Release {
        InflightLimiter& l;
        ~Release() { l.release(); }
    } release{limiter_};
    return judge_->complete(prompt);
}

ScalarScore JudgeGateway::ask_scalar(const std::string& prompt) {
    return ask_parsed(prompt, [&](const std::string& r) {
        return parse_scalar_score(r, options_.snap_scores);
    });
}

PairScore JudgeGateway::ask_pair(const std::string& prompt) {
    return ask_parsed(prompt, [](const std::string& r) { return parse_pair_score(r); });
}

EventExtraction JudgeGateway::ask_extraction(const std::string& prompt) {
    return ask_parsed(prompt, [](const std::string& r) { return parse_event_extraction(r); });
}

}  // namespace cafe::judge
