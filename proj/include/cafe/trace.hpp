#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cafe/model.hpp"

namespace cafe::trace {

enum class TokenCounter { whitespace, chars_div4 };

std::optional<TokenCounter> parse_token_counter(std::string_view name);
std::string_view to_string(TokenCounter counter);

/// whitespace: maximal non-whitespace runs. chars_div4: ceil(bytes / 4).
std::size_t count_tokens(std::string_view text, TokenCounter counter = TokenCounter::whitespace);

struct PerceptionEvent {
    std::optional<double> start_s;
    std::optional<double> end_s;
    std::string description;

    bool timed() const { return start_s.has_value() && end_s.has_value(); }
    bool operator==(const PerceptionEvent&) const = default;
};

struct SubStep {
    int index = 0;  // 1-based
    std::string sub_question;
    std::string sub_answer;

    bool empty() const { return sub_question.empty() && sub_answer.empty(); }
    bool operator==(const SubStep&) const = default;
};

struct ReviewBlock {
    std::string evidence_check;
    std::string logic_check;

    bool complete() const { return !evidence_check.empty() && !logic_check.empty(); }
    bool operator==(const ReviewBlock&) const = default;
};

/// A model output decomposed into its perception, reasoning and review
/// stages. The `*_text` members keep each section's trimmed raw content,
/// which is what judges see.
struct ParsedTrace {
    std::vector<PerceptionEvent> perception;
    std::vector<SubStep> steps;
    ReviewBlock review;
    std::string final_answer;
    std::string perception_text;
    std::string reasoning_text;
    std::string review_text;
    std::size_t token_len = 0;

    bool operator==(const ParsedTrace&) const = default;
};

/// Equality over the structured sections only (events, steps, review, answer).
bool sections_equal(const ParsedTrace& a, const ParsedTrace& b);

struct Diagnostic {
    std::string tag;  // tag the message is about; empty when not tag-specific
    std::size_t offset = 0;  // byte offset into the raw text
    std::string message;
};

std::string to_string(const Diagnostic& d);

struct ParseResult {
    std::optional<ParsedTrace> trace;  // absent only when a strict parse fails
    std::vector<Diagnostic> diagnostics;
    bool strict = false;

    bool ok() const { return trace.has_value(); }
};

struct ParseOptions {
    bool strict = false;
    TokenCounter counter = TokenCounter::whitespace;
};

/// Parses `<thinking><perception>..</perception><reasoning>..</reasoning>
/// <review>..</review></thinking><answer>..</answer>`. Tags are matched
/// case-insensitively and may carry whitespace inside the angle brackets.
ParseResult parse_mpar2(std::string_view raw, const ParseOptions& options = {});
inline ParseResult parse_mpar2(const model::TraceRecord& record, const ParseOptions& options = {}) {
    return parse_mpar2(record.raw_text, options);
}

/// Everything the model wrote before answering: perception, reasoning and
/// review joined by blank lines.
std::string reasoning_path(const ParsedTrace& trace);

/// Letter of the first choice matched by (1) a standalone uppercase letter
/// token in the answer, then (2) a case-insensitive occurrence of a choice's
/// text. Returns nullopt when neither rule matches.
std::optional<std::string> extract_answer(std::string_view final_answer,
                                          const std::vector<model::Choice>& choices);
inline std::optional<std::string> extract_answer(const ParsedTrace& trace,
                                                 const std::vector<model::Choice>& choices) {
    return extract_answer(trace.final_answer, choices);
}

/// Deterministic text in the grammar accepted by parse_mpar2.
std::string canonicalize(const ParsedTrace& trace);

/// Shortest decimal form that reads back to the same double.
std::string format_seconds(double seconds);

}  // namespace cafe::trace
