#include "cafe/trace.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <regex>
#include <sstream>

namespace cafe::trace {

namespace {

constexpr std::array<std::string_view, 6> kTagNames = {"thinking", "perception", "reasoning",
                                                      "review",   "answer",     "think"};

struct Tag {
    std::string name;
    bool closing = false;
    std::size_t begin = 0;  // offset of '<'
    std::size_t end = 0;    // offset one past '>'
};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string tag_text(const std::string& name, bool closing) {
    return std::string(closing ? "</" : "<") + name + ">";
}

std::vector<Tag> scan_tags(std::string_view raw) {
    std::vector<Tag> tags;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] != '<') continue;
        std::size_t j = i + 1;
        while (j < raw.size() && is_space(raw[j])) ++j;
        bool closing = false;
        if (j < raw.size() && raw[j] == '/') {
            closing = true;
            ++j;
            while (j < raw.size() && is_space(raw[j])) ++j;
        }
        std::size_t name_begin = j;
        while (j < raw.size() && std::isalpha(static_cast<unsigned char>(raw[j]))) ++j;
        std::string name = lower(raw.substr(name_begin, j - name_begin));
        while (j < raw.size() && is_space(raw[j])) ++j;
        if (j >= raw.size() || raw[j] != '>') continue;
        if (std::find(kTagNames.begin(), kTagNames.end(), name) == kTagNames.end()) continue;
        tags.push_back({name, closing, i, j + 1});
        i = j;
    }
    return tags;
}

// Expected tag sequence of a well-formed trace.
const std::vector<std::pair<std::string, bool>>& expected_sequence() {
    static const std::vector<std::pair<std::string, bool>> seq = {
        {"thinking", false},  {"perception", false}, {"perception", true}, {"reasoning", false},
        {"reasoning", true},  {"review", false},     {"review", true},     {"thinking", true},
        {"answer", false},    {"answer", true}};
    return seq;
}

std::vector<Diagnostic> diagnose_structure(const std::vector<Tag>& tags, std::size_t raw_size) {
    std::vector<Diagnostic> out;
    for (std::string_view name : {"thinking", "perception", "reasoning", "review", "answer"}) {
        std::vector<const Tag*> opens, closes;
        for (const auto& t : tags) {
            if (t.name != name) continue;
            (t.closing ? closes : opens).push_back(&t);
        }
        std::string n(name);
        if (opens.empty() && closes.empty()) {
            out.push_back({n, raw_size, "missing " + tag_text(n, false) + " tag"});
            continue;
        }
        if (opens.size() > 1)
            out.push_back({n, opens[1]->begin, "duplicate " + tag_text(n, false) + " tag"});
        if (closes.size() > 1)
            out.push_back({n, closes[1]->begin, "duplicate " + tag_text(n, true) + " tag"});
        if (!opens.empty() && closes.empty())
            out.push_back({n, opens[0]->begin, "unclosed " + tag_text(n, false) + " tag"});
        if (opens.empty() && !closes.empty())
            out.push_back({n, closes[0]->begin, tag_text(n, true) + " without opening tag"});
    }
    if (!out.empty()) return out;

    // Every tag appears once; the order must still match.
    const auto& expected = expected_sequence();
    std::vector<const Tag*> relevant;
    for (const auto& t : tags)
        if (t.name != "think") relevant.push_back(&t);
    for (std::size_t i = 0; i < relevant.size() && i < expected.size(); ++i) {
        if (relevant[i]->name != expected[i].first || relevant[i]->closing != expected[i].second) {
            out.push_back({relevant[i]->name, relevant[i]->begin,
                           tag_text(relevant[i]->name, relevant[i]->closing) +
                               " out of order or mis-nested"});
            break;
        }
    }
    return out;
}

struct Section {
    std::size_t open = std::string_view::npos;  // offset of the opening tag
    std::size_t begin = 0;
    std::size_t end = 0;
    bool closed = false;
    bool found() const { return open != std::string_view::npos; }
};

// First opening tag of `name` and its first matching close. An unclosed section
// extends to the next recognised opening tag (or to the end of the text).
Section find_section(const std::vector<Tag>& tags, std::string_view name, std::size_t raw_size) {
    Section s;
    for (std::size_t i = 0; i < tags.size(); ++i) {
        if (tags[i].name != name || tags[i].closing) continue;
        s.open = tags[i].begin;
        s.begin = tags[i].end;
        s.end = raw_size;
        for (std::size_t k = i + 1; k < tags.size(); ++k) {
            if (tags[k].name == name && tags[k].closing) {
                s.end = tags[k].begin;
                s.closed = true;
                return s;
            }
        }
        for (std::size_t k = i + 1; k < tags.size(); ++k) {
            if (!tags[k].closing && tags[k].name != "thinking" && tags[k].name != "think") {
                s.end = tags[k].begin;
                break;
            }
        }
        return s;
    }
    return s;
}

bool read_double(std::string_view text, double& value) {
    text = trim(text);
    if (!text.empty() && (text.back() == 's' || text.back() == 'S')) text.remove_suffix(1);
    text = trim(text);
    if (text.empty()) return false;
    if (text.front() == '+') text.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    return ec == std::errc() && ptr == text.data() + text.size();
}

// Splits on sequential list markers "1.", "2.", ... that sit at the start of
// the text or after whitespace and are followed by whitespace or '['.
std::vector<std::string_view> split_numbered(std::string_view text, bool& found_markers) {
    std::vector<std::size_t> marker_pos, content_pos;
    int next = 1;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) continue;
        if (i > 0 && !is_space(text[i - 1])) continue;
        std::size_t j = i;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        if (j >= text.size() || text[j] != '.') continue;
        std::size_t after = j + 1;
        if (after < text.size() && !is_space(text[after]) && text[after] != '[') continue;
        int number = 0;
        std::from_chars(text.data() + i, text.data() + j, number);
        if (number != next) continue;
        ++next;
        marker_pos.push_back(i);
        content_pos.push_back(after);
        i = j;
    }
    std::vector<std::string_view> items;
    found_markers = !marker_pos.empty();
    if (!found_markers) {
        std::size_t start = 0;
        while (start <= text.size()) {
            std::size_t nl = text.find('\n', start);
            if (nl == std::string_view::npos) nl = text.size();
            auto line = trim(text.substr(start, nl - start));
            if (!line.empty()) items.push_back(line);
            start = nl + 1;
        }
        return items;
    }
    auto prefix = trim(text.substr(0, marker_pos.front()));
    if (!prefix.empty()) items.push_back(prefix);
    for (std::size_t k = 0; k < marker_pos.size(); ++k) {
        std::size_t stop = k + 1 < marker_pos.size() ? marker_pos[k + 1] : text.size();
        items.push_back(trim(text.substr(content_pos[k], stop - content_pos[k])));
    }
    return items;
}

std::vector<PerceptionEvent> parse_perception(std::string_view content, std::size_t base,
                                              std::vector<Diagnostic>& diags) {
    std::vector<PerceptionEvent> events;
    bool numbered = false;
    for (auto item : split_numbered(content, numbered)) {
        std::size_t offset = base + static_cast<std::size_t>(item.data() - content.data());
        if (item.empty()) {
            diags.push_back({"perception", offset, "empty perception event dropped"});
            continue;
        }
        PerceptionEvent ev;
        ev.description = std::string(item);
        if (item.front() == '[') {
            auto close = item.find(']');
            const char* problem = "non-numeric timestamp bracket; event kept as untimed";
            if (close != std::string_view::npos) {
                auto inside = item.substr(1, close - 1);
                auto comma = inside.find(',');
                double a = 0, b = 0;
                if (comma != std::string_view::npos && read_double(inside.substr(0, comma), a) &&
                    read_double(inside.substr(comma + 1), b)) {
                    auto rest = trim(item.substr(close + 1));
                    if (!rest.empty() && rest.front() == ':') rest = trim(rest.substr(1));
                    if (a > b) {
                        problem = "event start after end; kept as untimed";
                    } else if (rest.empty()) {
                        problem = "timed event without description";
                        ev.description.clear();
                    } else {
                        problem = nullptr;
                        ev.start_s = a;
                        ev.end_s = b;
                        ev.description = std::string(rest);
                    }
                }
            }
            if (problem) diags.push_back({"perception", offset, problem});
        }
        if (ev.description.empty()) continue;
        events.push_back(std::move(ev));
    }
    return events;
}

std::string_view strip_trailing_marker(std::string_view s) {
    s = trim(s);
    std::size_t i = s.size();
    if (i == 0 || s[i - 1] != '.') return s;
    std::size_t j = i - 1;
    std::size_t digits_end = j;
    while (j > 0 && std::isdigit(static_cast<unsigned char>(s[j - 1]))) --j;
    if (j == digits_end) return s;
    if (j > 0 && !is_space(s[j - 1])) return s;
    return trim(s.substr(0, j));
}

struct Anchor {
    std::size_t begin;
    std::size_t end;
    int kind;
};

std::vector<Anchor> find_anchors(std::string_view text, const std::vector<std::regex>& patterns) {
    std::vector<Anchor> anchors;
    std::string s(text);
    for (int kind = 0; kind < static_cast<int>(patterns.size()); ++kind) {
        for (auto it = std::sregex_iterator(s.begin(), s.end(), patterns[kind]);
             it != std::sregex_iterator(); ++it) {
            auto pos = static_cast<std::size_t>(it->position(0));
            anchors.push_back({pos, pos + static_cast<std::size_t>(it->length(0)), kind});
        }
    }
    std::sort(anchors.begin(), anchors.end(),
              [](const Anchor& a, const Anchor& b) { return a.begin < b.begin; });
    return anchors;
}

const std::regex& sub_question_re() {
    static const std::regex re(R"(sub[- ]?question\s*:)", std::regex::icase);
    return re;
}
const std::regex& answer_label_re() {
    static const std::regex re(R"(answer\s*:)", std::regex::icase);
    return re;
}

std::vector<SubStep> parse_steps(std::string_view content, std::size_t base,
                                 std::vector<Diagnostic>& diags) {
    std::vector<SubStep> steps;
    auto anchors = find_anchors(content, {sub_question_re()});
    if (anchors.empty()) {
        if (!trim(content).empty())
            diags.push_back({"reasoning", base, "no Sub-question steps found"});
        return steps;
    }
    for (std::size_t k = 0; k < anchors.size(); ++k) {
        std::size_t stop = k + 1 < anchors.size() ? anchors[k + 1].begin : content.size();
        auto segment = content.substr(anchors[k].end, stop - anchors[k].end);
        if (k + 1 < anchors.size()) segment = strip_trailing_marker(segment);
        SubStep step;
        step.index = static_cast<int>(k) + 1;
        std::string seg(segment);
        std::smatch m;
        if (std::regex_search(seg, m, answer_label_re())) {
            step.sub_question = std::string(trim(std::string_view(seg).substr(0, m.position(0))));
            step.sub_answer = std::string(
                trim(std::string_view(seg).substr(static_cast<std::size_t>(m.position(0) + m.length(0)))));
        } else {
            step.sub_question = std::string(trim(seg));
            diags.push_back({"reasoning", base + anchors[k].begin,
                             "step " + std::to_string(step.index) + " has no Answer"});
        }
        steps.push_back(std::move(step));
    }
    return steps;
}

ReviewBlock parse_review(std::string_view content, std::size_t base,
                         std::vector<Diagnostic>& diags) {
    static const std::regex evidence(R"(evidence\s+check\s*:)", std::regex::icase);
    static const std::regex logic(R"(logic\s+check\s*:)", std::regex::icase);
    ReviewBlock block;
    auto anchors = find_anchors(content, {evidence, logic});
    bool seen[2] = {false, false};
    for (std::size_t k = 0; k < anchors.size(); ++k) {
        int kind = anchors[k].kind;
        if (seen[kind]) continue;
        seen[kind] = true;
        std::size_t stop = k + 1 < anchors.size() ? anchors[k + 1].begin : content.size();
        auto segment = content.substr(anchors[k].end, stop - anchors[k].end);
        if (k + 1 < anchors.size()) segment = strip_trailing_marker(segment);
        (kind == 0 ? block.evidence_check : block.logic_check) = std::string(trim(segment));
    }
    if (!seen[0]) diags.push_back({"review", base, "no Evidence Check in review"});
    if (!seen[1]) diags.push_back({"review", base, "no Logic Check in review"});
    return block;
}

std::string fallback_answer(std::string_view text) {
    static const std::regex marker(R"(reasoning\s*:)", std::regex::icase);
    std::string s(text);
    std::smatch m;
    if (std::regex_search(s, m, marker)) {
        auto head = trim(std::string_view(s).substr(0, static_cast<std::size_t>(m.position(0))));
        if (!head.empty()) return std::string(head);
    }
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = trim(text.substr(start, nl - start));
        if (!line.empty()) return std::string(line);
        start = nl + 1;
    }
    return {};
}

void finish(ParsedTrace& t, TokenCounter counter) {
    t.token_len = count_tokens(t.perception_text + "\n" + t.reasoning_text + "\n" + t.review_text,
                               counter);
}

std::string_view slice(std::string_view raw, const Section& s) {
    return trim(raw.substr(s.begin, s.end - s.begin));
}

std::size_t slice_offset(std::string_view raw, const Section& s) {
    auto content = slice(raw, s);
    return content.empty() ? s.begin : static_cast<std::size_t>(content.data() - raw.data());
}

}  // namespace

std::optional<TokenCounter> parse_token_counter(std::string_view name) {
    if (name == "whitespace") return TokenCounter::whitespace;
    if (name == "chars_div4") return TokenCounter::chars_div4;
    return std::nullopt;
}

std::string_view to_string(TokenCounter counter) {
    return counter == TokenCounter::whitespace ? "whitespace" : "chars_div4";
}

std::size_t count_tokens(std::string_view text, TokenCounter counter) {
    if (counter == TokenCounter::chars_div4) return (text.size() + 3) / 4;
    std::size_t n = 0;
    bool in_token = false;
    for (char c : text) {
        bool space = is_space(c);
        if (!space && !in_token) ++n;
        in_token = !space;
    }
    return n;
}

bool sections_equal(const ParsedTrace& a, const ParsedTrace& b) {
    return a.perception == b.perception && a.steps == b.steps && a.review == b.review &&
           a.final_answer == b.final_answer;
}

std::string to_string(const Diagnostic& d) {
    std::string out = d.message;
    if (!d.tag.empty()) out = "[" + d.tag + "] " + out;
    return out + " (byte " + std::to_string(d.offset) + ")";
}

ParseResult parse_mpar2(std::string_view raw, const ParseOptions& options) {
    ParseResult result;
    result.strict = options.strict;
    auto tags = scan_tags(raw);

    if (options.strict) {
        result.diagnostics = diagnose_structure(tags, raw.size());
        if (!result.diagnostics.empty()) return result;
    }

    auto thinking = find_section(tags, "thinking", raw.size());
    auto think = find_section(tags, "think", raw.size());
    auto perception = find_section(tags, "perception", raw.size());
    auto reasoning = find_section(tags, "reasoning", raw.size());
    auto review = find_section(tags, "review", raw.size());
    auto answer = find_section(tags, "answer", raw.size());

    ParsedTrace t;
    auto& diags = result.diagnostics;

    if (answer.found()) {
        t.final_answer = std::string(slice(raw, answer));
        if (!answer.closed) diags.push_back({"answer", answer.open, "unclosed <answer> tag"});
    }
    if (options.strict && t.final_answer.empty()) {
        diags.push_back({"answer", answer.open, "empty <answer> tag"});
        return result;
    }

    if (!options.strict) {
        if (!thinking.found() && !think.found())
            diags.push_back({"thinking", 0, "no thinking block"});
        if (!answer.found()) diags.push_back({"answer", raw.size(), "no answer tag"});
        for (auto* s : {&thinking, &perception, &reasoning, &review})
            if (s->found() && !s->closed) {
                auto name = s == &thinking ? "thinking"
                            : s == &perception ? "perception"
                            : s == &reasoning  ? "reasoning"
                                               : "review";
                diags.push_back({name, s->open, std::string("unclosed <") + name + "> tag"});
            }
    }

    if (perception.found()) {
        t.perception_text = std::string(slice(raw, perception));
        t.perception = parse_perception(t.perception_text, slice_offset(raw, perception), diags);
    } else if (!options.strict && (thinking.found() || reasoning.found())) {
        diags.push_back({"perception", 0, "missing <perception> section"});
    }

    if (reasoning.found()) {
        t.reasoning_text = std::string(slice(raw, reasoning));
        t.steps = parse_steps(t.reasoning_text, slice_offset(raw, reasoning), diags);
    } else {
        // Free-form output: the enclosing thinking block, or the whole text.
        const Section* block = thinking.found() ? &thinking : think.found() ? &think : nullptr;
        if (block && !perception.found() && !review.found()) {
            t.reasoning_text = std::string(slice(raw, *block));
        } else if (!block && !perception.found() && !review.found()) {
            std::string text(raw);
            if (answer.found()) {
                std::size_t stop = answer.end;
                if (answer.closed) {
                    auto close = raw.find('>', answer.end);
                    stop = close == std::string_view::npos ? raw.size() : close + 1;
                }
                text = std::string(raw.substr(0, answer.open)) + std::string(raw.substr(stop));
            }
            t.reasoning_text = std::string(trim(text));
        } else {
            diags.push_back({"reasoning", 0, "missing <reasoning> section"});
        }
        if (!t.reasoning_text.empty())
            t.steps = parse_steps(t.reasoning_text, 0, diags);
    }

    if (review.found()) {
        t.review_text = std::string(slice(raw, review));
        t.review = parse_review(t.review_text, slice_offset(raw, review), diags);
    } else if (!options.strict && (thinking.found() || reasoning.found())) {
        diags.push_back({"review", 0, "missing <review> section"});
    }

    if (!answer.found() && !options.strict) t.final_answer = fallback_answer(raw);

    finish(t, options.counter);
    result.trace = std::move(t);
    return result;
}

std::string reasoning_path(const ParsedTrace& trace) {
    std::string out;
    for (const std::string* part : {&trace.perception_text, &trace.reasoning_text, &trace.review_text}) {
        if (part->empty()) continue;
        if (!out.empty()) out += "\n\n";
        out += *part;
    }
    return out;
}

std::optional<std::string> extract_answer(std::string_view final_answer,
                                          const std::vector<model::Choice>& choices) {
    auto is_alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
    for (std::size_t i = 0; i < final_answer.size();) {
        if (!is_alnum(final_answer[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < final_answer.size() && is_alnum(final_answer[j])) ++j;
        if (j - i == 1 && std::isupper(static_cast<unsigned char>(final_answer[i]))) {
            for (const auto& c : choices)
                if (c.letter.size() == 1 && c.letter[0] == final_answer[i]) return c.letter;
        }
        i = j;
    }
    auto haystack = lower(final_answer);
    for (const auto& c : choices) {
        auto needle = lower(trim(c.text));
        if (needle.empty()) continue;
        for (auto pos = haystack.find(needle); pos != std::string::npos;
             pos = haystack.find(needle, pos + 1)) {
            bool left = pos == 0 || !is_alnum(haystack[pos - 1]);
            std::size_t after = pos + needle.size();
            bool right = after >= haystack.size() || !is_alnum(haystack[after]);
            if (left && right) return c.letter;
        }
    }
    return std::nullopt;
}

std::string format_seconds(double seconds) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), seconds);
    return std::string(buf.data(), ptr);
}

std::string canonicalize(const ParsedTrace& trace) {
    std::ostringstream out;
    out << "<thinking>\n<perception>\n";
    int n = 1;
    for (const auto& ev : trace.perception) {
        out << n++ << ". ";
        if (ev.timed())
            out << '[' << format_seconds(*ev.start_s) << ", " << format_seconds(*ev.end_s) << "]: ";
        out << ev.description << '\n';
    }
    out << "</perception>\n<reasoning>\n";
    for (const auto& step : trace.steps) {
        out << step.index << ". Sub-question: " << step.sub_question << "\n Answer: "
            << step.sub_answer << '\n';
    }
    out << "</reasoning>\n<review>\n";
    out << "1. Evidence Check: " << trace.review.evidence_check << '\n';
    out << "2. Logic Check: " << trace.review.logic_check << '\n';
    out << "</review>\n</thinking>\n<answer>\n" << trace.final_answer << "\n</answer>\n";
    return out.str();
}

}  // namespace cafe::trace
