#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cafe/error.hpp"
#include "json.hpp"

namespace cafe::judge {

// ---------------------------------------------------------------------------
// Reply grammars
// ---------------------------------------------------------------------------

struct ScalarScore {
    double value = 0.0;  // in [0, 1]
};

struct PairScore {
    double reasoning_score = 0.0;  // in [0, 10]
    double review_score = 0.0;     // in [0, 10]
};

struct EventExtraction {
    std::vector<std::string> all_reasoning_events;
    std::vector<std::string> matched_events;
    std::vector<std::string> error_matched;
    std::vector<std::string> error_use;
    std::vector<std::string> neutral_events;
    std::vector<std::string> missed_events;
    std::vector<std::string> diagnostics;

    bool operator==(const EventExtraction&) const = default;
};

nlohmann::ordered_json to_json(const EventExtraction& e, bool with_diagnostics = true);
EventExtraction extraction_from_json(const nlohmann::ordered_json& j);

/// First decimal number in the reply (after dropping any <think> block).
/// Throws JudgeFormatError when absent or outside [0, 1].
ScalarScore parse_scalar_score(std::string_view reply, bool snap = false);
/// `a/b` with both in [0, 10]. Throws JudgeFormatError otherwise.
PairScore parse_pair_score(std::string_view reply);
/// The six-list JSON object, optionally fenced and with bare keys.
EventExtraction parse_event_extraction(std::string_view reply);

/// Locates and parses the first JSON object in a judge reply. Tolerates code
/// fences and unquoted keys. Throws JudgeFormatError when none parses.
nlohmann::ordered_json extract_json_object(std::string_view reply);

/// Appends diagnostics for containment/disjointness violations.
void check_extraction_invariants(EventExtraction& e);

/// Lower-cased, trimmed, inner whitespace collapsed.
std::string fold_event(std::string_view text);

// ---------------------------------------------------------------------------
// Judges
// ---------------------------------------------------------------------------

class Judge {
public:
    virtual ~Judge() = default;
    /// Sends one prompt and returns the reply text. Throws JudgeError.
    virtual std::string complete(const std::string& prompt) = 0;
    /// Short identity used in fingerprints, e.g. "http:qwen3-32b" or "mock:rubric_hash".
    virtual std::string describe() const = 0;
    virtual bool is_mock() const { return false; }
};

struct JudgeEndpoint {
    std::string base_url;
    std::string model_name = "judge";
    std::string auth_token;
    double timeout_s = 60.0;
    int max_retries = 3;
    double temperature = 0.0;
    double backoff_base_s = 0.5;
    double backoff_max_s = 30.0;

    /// JUDGE_BASE_URL and JUDGE_API_KEY, when set.
    static JudgeEndpoint from_environment();
    void validate() const;
};

/// OpenAI-style chat-completions client over cpp-httplib.
class HttpJudge final : public Judge {
public:
    explicit HttpJudge(JudgeEndpoint endpoint);
    std::string complete(const std::string& prompt) override;
    std::string describe() const override;

    /// Network attempts made so far, across all calls.
    std::uint64_t attempts() const { return attempts_.load(); }
    const JudgeEndpoint& endpoint() const { return endpoint_; }

    static nlohmann::json request_body(const JudgeEndpoint& endpoint, const std::string& prompt);
    /// choices[0].message.content; throws JudgeError on a non-JSON or empty reply.
    static std::string reply_content(const std::string& body);

private:
    JudgeEndpoint endpoint_;
    std::string scheme_host_port_;
    std::string path_prefix_;
    std::atomic<std::uint64_t> attempts_{0};
};

enum class MockPolicy { echo_fixture, rubric_hash };
std::optional<MockPolicy> parse_mock_policy(std::string_view name);

/// Key under which echo fixtures store a prompt's reply.
std::string prompt_key(std::string_view prompt);

/// Deterministic offline judge. echo_fixture replays replies keyed by
/// prompt_key(); rubric_hash answers (hash(seed, prompt) mod 11) / 10.
class MockJudge final : public Judge {
public:
    MockJudge(std::uint64_t seed, MockPolicy policy,
              std::map<std::string, std::string> fixtures = {});
    static std::map<std::string, std::string> load_fixtures(const std::filesystem::path& path);

    std::string complete(const std::string& prompt) override;
    std::string describe() const override;
    bool is_mock() const override { return true; }

    std::uint64_t calls() const;
    void add_fixture(std::string_view prompt, std::string reply);

private:
    std::uint64_t seed_;
    MockPolicy policy_;
    std::map<std::string, std::string> fixtures_;
    mutable std::mutex mutex_;
    std::uint64_t calls_ = 0;
};

/// Bounds the number of concurrent judge calls.
class InflightLimiter {
public:
    explicit InflightLimiter(int limit);
    void acquire();
    void release();
    int limit() const { return limit_; }
    int peak() const;

private:
    int limit_;
    int active_ = 0;
    int peak_ = 0;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
};

struct GatewayOptions {
    int max_inflight = 8;
    int format_reasks = 1;
    bool snap_scores = false;
};

/// Shared front door to a judge: in-flight limit, one re-ask on malformed
/// replies, and typed helpers for each reply grammar.
class JudgeGateway {
public:
    JudgeGateway(std::shared_ptr<Judge> judge, GatewayOptions options = {});

    std::string ask(const std::string& prompt);

    template <class Parser>
    auto ask_parsed(const std::string& prompt, Parser&& parse) {
        for (int attempt = 0;; ++attempt) {
            std::string reply = ask(prompt);
            try {
                return parse(reply);
            } catch (const JudgeFormatError&) {
                if (attempt >= options_.format_reasks) throw;
            }
        }
    }

    ScalarScore ask_scalar(const std::string& prompt);
    PairScore ask_pair(const std::string& prompt);
    EventExtraction ask_extraction(const std::string& prompt);

    Judge& judge() { return *judge_; }
    const Judge& judge() const { return *judge_; }
    const GatewayOptions& options() const { return options_; }
    const InflightLimiter& limiter() const { return limiter_; }

private:
    std::shared_ptr<Judge> judge_;
    GatewayOptions options_;
    InflightLimiter limiter_;
};

}  // namespace cafe::judge
