#include <set>

#include "cafe/error.hpp"
#include "cafe/prompts.hpp"
#include "doctest.h"

using namespace cafe;
using namespace cafe::judge;

TEST_SUITE("prompts") {

TEST_CASE("every template is embedded and parseable by name") {
    std::set<std::string_view> names;
    for (const auto& t : all_templates()) {
        CHECK_FALSE(t.body.empty());
        CHECK(parse_template_id(t.name) == t.id);
        CHECK(&get_template(t.id) == &t);
        names.insert(t.name);
    }
    CHECK(names.size() == 19);
    CHECK_FALSE(parse_template_id("nope").has_value());
}

TEST_CASE("every placeholder is documented") {
    for (const auto& t : all_templates())
        for (const auto& p : t.placeholders) CHECK_MESSAGE(!describe_placeholder(p).empty(), t.name, " ", p);
}

TEST_CASE("appendix headings survive embedding") {
    auto has = [](TemplateId id, std::string_view text) {
        return get_template(id).body.find(text) != std::string_view::npos;
    };
    CHECK(has(TemplateId::event_extraction, "Output Format (JSON Only)"));
    CHECK(has(TemplateId::perception_score, "expert audio perception evaluator"));
    CHECK(has(TemplateId::step_score, "is empty, return 0.0"));
    CHECK(has(TemplateId::holistic_score, "Holistic Logical Architecture"));
    CHECK(has(TemplateId::review_score, "Score 0.0 IMMEDIATELY"));
    CHECK(has(TemplateId::qa_filter, "KEEP(Score >= 4)"));
    for (auto id : {TemplateId::qa_gen_counting, TemplateId::qa_gen_pitch, TemplateId::qa_gen_rhythm,
                    TemplateId::qa_gen_temporal, TemplateId::qa_gen_timbre})
        CHECK(has(id, "Not suitable for this hallucination type"));
}

TEST_CASE("event extraction rendering") {
    auto out = render_template(TemplateId::event_extraction, {{"QUESTION", "Q?"},
                                                              {"CORRECT_ANSWER", "B. dog"},
                                                              {"GROUND_TRUTH_CAPTION", "a dog barks"},
                                                              {"MODEL_REASONING", "I hear a dog"}});
    CHECK(out.find("Q?") != std::string::npos);
    CHECK(out.find("Output Format (JSON Only)") != std::string::npos);
    CHECK(out.find("{{") == std::string::npos);
}

TEST_CASE("missing binding names the placeholder") {
    CHECK_THROWS_WITH_AS(render_template(TemplateId::perception_score, {{"question_text", "q"}}),
                         doctest::Contains("caption_text"), Error);
}

TEST_CASE("zero placeholders is the identity") {
    const auto& t = get_template(TemplateId::caption);
    REQUIRE(t.placeholders.empty());
    CHECK(render_template(TemplateId::caption, {}) == t.body);
}

TEST_CASE("substitution is single pass") {
    CHECK(render_text("a {{X}} b {{X}}", {{"X", "{{X}}"}}) == "a {{X}} b {{X}}");
    CHECK(render_text("{{ X }} {x-y} {{", {}) == "{{ X }} {x-y} {{");
    CHECK(find_placeholders("{{A}} {{B}} {{A}} {{1x}}") == std::vector<std::string>{"A", "B"});
}

TEST_CASE("rendering is idempotent") {
    for (const auto& t : all_templates()) {
        Bindings b;
        for (const auto& p : t.placeholders) b[p] = "value of " + p;
        auto once = render_template(t.id, b);
        CHECK(render_text(once, {}) == once);
    }
}

TEST_CASE("fnv1a64") {
    CHECK(hex64(fnv1a64("")) == "cbf29ce484222325");
    CHECK(hex64(fnv1a64("a")) == "af63dc4c8601ec8c");
    CHECK(hex64(fnv1a64("foobar")) == "85944171f73967e8");
    CHECK(template_hash(TemplateId::caption).size() == 16);
}

}
