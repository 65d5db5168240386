#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cafe::judge {

enum class TemplateId {
    caption,
    event_extraction,
    perception_score,
    step_score,
    holistic_score,
    review_score,
    qa_filter,
    cot_filter,
    qa_gen_counting,
    qa_gen_pitch,
    qa_gen_rhythm,
    qa_gen_temporal,
    qa_gen_timbre,
    cot_generate,
    timed_caption,
    inference_lalm,
    inference_larm,
    rl_implicit,
    rl_explicit,
};

struct PromptTemplate {
    TemplateId id;
    std::string_view name;
    std::string_view body;
    std::vector<std::string> placeholders;  // in order of first appearance
};

using Bindings = std::map<std::string, std::string, std::less<>>;

const std::vector<PromptTemplate>& all_templates();
const PromptTemplate& get_template(TemplateId id);
std::optional<TemplateId> parse_template_id(std::string_view name);

/// What a placeholder name is bound to, for every name used by the bodies.
std::string_view describe_placeholder(std::string_view name);

/// Placeholders are `{{NAME}}` with NAME an identifier. Each one is replaced
/// once; substituted values are not re-scanned. Throws invalid_argument naming
/// the first unbound placeholder.
std::string render_text(std::string_view body, const Bindings& bindings);
std::string render_template(TemplateId id, const Bindings& bindings);
std::vector<std::string> find_placeholders(std::string_view body);

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t value);
/// Hex FNV-1a of a template body; part of report fingerprints.
std::string template_hash(TemplateId id);

}  // namespace cafe::judge
