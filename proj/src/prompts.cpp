#include "cafe/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <utility>

#include "cafe/error.hpp"

namespace cafe::judge {

namespace resources {
extern const std::pair<std::string_view, std::string_view> kPromptBodies[];
extern const std::size_t kPromptBodyCount;
}  // namespace resources

namespace {

constexpr std::pair<TemplateId, std::string_view> kNames[] = {
    {TemplateId::caption, "caption"},
    {TemplateId::event_extraction, "event_extraction"},
    {TemplateId::perception_score, "perception_score"},
    {TemplateId::step_score, "step_score"},
    {TemplateId::holistic_score, "holistic_score"},
    {TemplateId::review_score, "review_score"},
    {TemplateId::qa_filter, "qa_filter"},
    {TemplateId::cot_filter, "cot_filter"},
    {TemplateId::qa_gen_counting, "qa_gen_counting"},
    {TemplateId::qa_gen_pitch, "qa_gen_pitch"},
    {TemplateId::qa_gen_rhythm, "qa_gen_rhythm"},
    {TemplateId::qa_gen_temporal, "qa_gen_temporal"},
    {TemplateId::qa_gen_timbre, "qa_gen_timbre"},
    {TemplateId::cot_generate, "cot_generate"},
    {TemplateId::timed_caption, "timed_caption"},
    {TemplateId::inference_lalm, "inference_lalm"},
    {TemplateId::inference_larm, "inference_larm"},
    {TemplateId::rl_implicit, "rl_implicit"},
    {TemplateId::rl_explicit, "rl_explicit"},
};

constexpr std::pair<std::string_view, std::string_view> kPlaceholderDocs[] = {
    {"QUESTION", "question text followed by its lettered choices"},
    {"CORRECT_ANSWER", "gold answer as 'letter. text'"},
    {"GROUND_TRUTH_CAPTION", "ground-truth audio caption"},
    {"MODEL_REASONING", "model reasoning path (perception, reasoning and review sections)"},
    {"CHOICES", "lettered choices, one per line"},
    {"caption_text", "audio caption the judge treats as reference"},
    {"question_text", "question text followed by its lettered choices"},
    {"answer_text", "gold answer as 'letter. text'"},
    {"cot_text", "content of the model's perception section"},
    {"history_text", "previous sub-question/answer steps, one numbered step per line"},
    {"current_step_text", "the sub-question/answer step being scored"},
    {"full_reasoning", "content of the model's reasoning section"},
    {"ground_truth_text", "ground-truth audio caption"},
    {"reasoning_text", "content of the model's reasoning section"},
    {"review_text", "content of the model's review section"},
    {"caption", "audio caption of the generated QA pair"},
    {"question", "generated question, choices and answer"},
    {"events_description", "chronological list of ground-truth audio events"},
    {"ORIGINAL_QUESTION", "question text followed by its lettered choices"},
    {"FINAL_ANSWER", "gold answer"},
    {"caption_w_time", "timestamped caption of the audio"},
    {"sub_question_list_generated", "sub-question/answer chain to be structured or audited"},
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Returns the identifier inside `{{...}}` at `pos`, and its total length.
std::optional<std::pair<std::string_view, std::size_t>> placeholder_at(std::string_view body,
                                                                       std::size_t pos) {
    if (body.compare(pos, 2, "{{") != 0) return std::nullopt;
    std::size_t i = pos + 2;
    if (i >= body.size() || !ident_start(body[i])) return std::nullopt;
    std::size_t j = i;
    while (j < body.size() && ident_char(body[j])) ++j;
    if (body.compare(j, 2, "}}") != 0) return std::nullopt;
    return std::make_pair(body.substr(i, j - i), j + 2 - pos);
}

std::vector<PromptTemplate> build_templates() {
    std::vector<PromptTemplate> out;
    for (auto [id, name] : kNames) {
        std::string_view body;
        for (std::size_t i = 0; i < resources::kPromptBodyCount; ++i)
            if (resources::kPromptBodies[i].first == name) body = resources::kPromptBodies[i].second;
        if (body.empty())
            throw Error(ErrorCode::internal, "prompt resource missing: " + std::string(name));
        out.push_back({id, name, body, find_placeholders(body)});
    }
    return out;
}

}  // namespace

const std::vector<PromptTemplate>& all_templates() {
    static const std::vector<PromptTemplate> templates = build_templates();
    return templates;
}

const PromptTemplate& get_template(TemplateId id) {
    for (const auto& t : all_templates())
        if (t.id == id) return t;
    throw Error(ErrorCode::invalid_argument, "unknown template id");
}

std::optional<TemplateId> parse_template_id(std::string_view name) {
    for (auto [id, n] : kNames)
        if (n == name) return id;
    return std::nullopt;
}

std::string_view describe_placeholder(std::string_view name) {
    for (auto [n, doc] : kPlaceholderDocs)
        if (n == name) return doc;
    return {};
}

std::vector<std::string> find_placeholders(std::string_view body) {
    std::vector<std::string> names;
    for (std::size_t pos = body.find("{{"); pos != std::string_view::npos;
         pos = body.find("{{", pos + 1)) {
        if (auto ph = placeholder_at(body, pos)) {
            std::string name(ph->first);
            if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
        }
    }
    return names;
}

std::string render_text(std::string_view body, const Bindings& bindings) {
    std::string out;
    out.reserve(body.size());
    std::size_t pos = 0;
    while (pos < body.size()) {
        std::size_t next = body.find("{{", pos);
        if (next == std::string_view::npos) {
            out.append(body.substr(pos));
            break;
        }
        out.append(body.substr(pos, next - pos));
        auto ph = placeholder_at(body, next);
        if (!ph) {
            out.push_back('{');
            pos = next + 1;
            continue;
        }
        auto it = bindings.find(ph->first);
        if (it == bindings.end())
            throw Error(ErrorCode::invalid_argument,
                        "missing binding for placeholder " + std::string(ph->first));
        out.append(it->second);
        pos = next + ph->second;
    }
    return out;
}

std::string render_template(TemplateId id, const Bindings& bindings) {
    return render_text(get_template(id).body, bindings);
}

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::string template_hash(TemplateId id) { return hex64(fnv1a64(get_template(id).body)); }

}  // namespace cafe::judge
