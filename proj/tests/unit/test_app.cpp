#include <fstream>

#include "../support.hpp"
#include "cafe/app.hpp"
#include "cafe/error.hpp"
#include "doctest.h"

using namespace cafe;
using namespace cafe::app;

namespace {

const fs::path kE2E = fs::path(CAFE_TEST_DATA_DIR) / "e2e";

BatchOptions e2e_extract(const testing::TempDir& dir) {
    BatchOptions o;
    o.dataset = kE2E / "dataset.jsonl";
    o.traces = kE2E / "traces.jsonl";
    o.out = dir / "extractions.jsonl";
    o.judge.mock_policy = "echo_fixture";
    o.judge.fixture = kE2E / "fixtures.json";
    return o;
}

EvalOptions e2e_eval(const testing::TempDir& dir) {
    EvalOptions o;
    o.extractions = dir / "extractions.jsonl";
    o.traces = kE2E / "traces.jsonl";
    o.dataset = kE2E / "dataset.jsonl";
    o.out_prefix = dir / "report";
    return o;
}

// Small corpus: two samples, three traces.
struct SmallCorpus {
    testing::TempDir dir;
    fs::path dataset = dir / "dataset.jsonl";
    fs::path traces = dir / "traces.jsonl";

    SmallCorpus() {
        auto s1 = testing::dog_sample("s1"), s2 = testing::dog_sample("s2");
        testing::write_file(dataset, model::to_json(s1).dump() + "\n" + model::to_json(s2).dump() + "\n");
        testing::write_file(traces, testing::trace_json("s1", "m", 0, testing::kWellFormed) + "\n" +
                                        testing::trace_json("s2", "m", 0, testing::kWellFormed) + "\n" +
                                        testing::trace_json("s2", "m", 1, "free text, answer A") + "\n");
    }
};

}  // namespace

TEST_SUITE("app") {

TEST_CASE("mock extraction and eval reproduce the golden report") {
    testing::TempDir dir;
    auto summary = cmd_extract(e2e_extract(dir));
    CHECK(summary.total == 100);
    CHECK(summary.written == 100);
    CHECK(summary.flagged == 1);
    CHECK(summary.judge_calls == 100);
    CHECK_FALSE(summary.threshold_exceeded);
    cmd_eval(e2e_eval(dir));
    for (const char* ext : {".json", ".metrics.csv", ".bins.csv"})
        CHECK(testing::read_file(dir / (std::string("report") + ext)) ==
              testing::read_file(kE2E / (std::string("golden") + ext)));
}

TEST_CASE("extraction resumes after an interruption") {
    testing::TempDir dir;
    auto o = e2e_extract(dir);
    cmd_extract(o);
    auto complete = testing::read_file(o.out);

    auto again = cmd_extract(o);
    CHECK(again.skipped == 99);
    CHECK(again.written == 1);
    CHECK(again.judge_calls == 1);
    CHECK(testing::read_file(o.out) == complete);

    auto lines = testing::read_lines(o.out);
    std::string partial;
    for (std::size_t i = 0; i < 60; ++i) partial += lines[i] + "\n";
    partial += lines[60].substr(0, lines[60].size() / 2);
    testing::write_file(o.out, partial);
    auto resumed = cmd_extract(o);
    CHECK(resumed.skipped == 59);
    CHECK(resumed.written == 41);
    CHECK(resumed.judge_calls == 41);
    CHECK(testing::read_file(o.out) == complete);
}

TEST_CASE("missing fixtures exceed the flag threshold") {
    testing::TempDir dir;
    auto o = e2e_extract(dir);
    testing::write_file(dir / "empty.json", "{}");
    o.judge.fixture = dir / "empty.json";
    auto summary = cmd_extract(o);
    CHECK(summary.flagged == 100);
    CHECK(summary.threshold_exceeded);
    auto first = nlohmann::json::parse(testing::read_lines(o.out).front());
    CHECK(first["flags"] == nlohmann::json{"extraction_unavailable"});
    CHECK(first["error"].get<std::string>().find("fixture miss") != std::string::npos);

    o.max_flagged_frac = 1.0;
    CHECK_FALSE(cmd_extract(o).threshold_exceeded);
    o.max_flagged_frac = 1.5;
    CHECK_THROWS_AS(cmd_extract(o), Error);
}

TEST_CASE("eval errors and bin widths") {
    testing::TempDir dir;
    cmd_extract(e2e_extract(dir));

    auto o = e2e_eval(dir);
    auto narrow = cmd_eval(o);
    o.bins.width = 80.0;
    auto wide = cmd_eval(o);
    REQUIRE(narrow["models"].size() == 2);
    for (std::size_t m = 0; m < 2; ++m) {
        CHECK(narrow["models"][m]["bins"].size() >= wide["models"][m]["bins"].size());
        CHECK(narrow["models"][m]["micro"] == wide["models"][m]["micro"]);
        std::int64_t total = 0;
        for (const auto& b : wide["models"][m]["bins"]) total += b["n"].get<std::int64_t>();
        CHECK(total == narrow["models"][m]["n"].get<std::int64_t>());
    }
    CHECK(wide["fingerprint"]["bin_width"] == 80.0);

    auto lines = testing::read_lines(kE2E / "dataset.jsonl");
    std::string dropped = nlohmann::json::parse(lines[3])["id"];
    std::string rest;
    for (std::size_t i = 0; i < lines.size(); ++i)
        if (i != 3) rest += lines[i] + "\n";
    testing::write_file(dir / "short.jsonl", rest);
    o.dataset = dir / "short.jsonl";
    try {
        cmd_eval(o);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::not_found);
        CHECK(std::string(e.what()).find(dropped) != std::string::npos);
    }
}

TEST_CASE("reward batch resumes without judge calls") {
    SmallCorpus c;
    RewardOptions o;
    o.dataset = c.dataset;
    o.traces = c.traces;
    o.out = c.dir / "rewards.jsonl";
    o.judge.mock_policy = "rubric_hash";
    o.judge.seed = 3;
    auto first = cmd_reward(o);
    CHECK(first.total == 3);
    CHECK(first.written == 3);
    CHECK(first.judge_calls > 0);
    auto text = testing::read_file(o.out);
    auto lines = testing::read_lines(o.out);
    REQUIRE(lines.size() == 3);
    auto malformed = nlohmann::ordered_json::parse(lines[2]);
    CHECK(malformed["flags"] == nlohmann::json{"malformed"});
    CHECK(malformed["r_all"] == 0.0);
    std::vector<std::string> keys;
    for (auto it = malformed.begin(); it != malformed.end(); ++it) keys.push_back(it.key());
    CHECK(keys == std::vector<std::string>{"sample_id", "model_id", "run_index", "r_perception", "r_spr", "r_rea",
                                           "r_format", "r_all", "flags", "step_scores"});

    auto second = cmd_reward(o);
    CHECK(second.skipped == 3);
    CHECK(second.written == 0);
    CHECK(second.judge_calls == 0);
    CHECK(testing::read_file(o.out) == text);
}

TEST_CASE("batch input errors") {
    SmallCorpus c;
    BatchOptions o;
    o.dataset = c.dataset;
    o.traces = c.traces;
    o.out = c.dir / "x.jsonl";
    o.judge.mock_policy = "echo_fixture";
    CHECK_THROWS_WITH(cmd_extract(o), doctest::Contains("fixture"));
    o.judge.mock_policy = "telepathy";
    CHECK_THROWS_WITH(cmd_extract(o), doctest::Contains("unknown mock policy"));
    o.judge.mock_policy = "rubric_hash";
    testing::write_file(c.traces, testing::trace_json("s9", "m", 0, "x") + "\n");
    try {
        cmd_extract(o);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::not_found);
        CHECK(std::string(e.what()).find("s9") != std::string::npos);
    }
}

TEST_CASE("filter commands") {
    testing::TempDir dir;
    std::string rollouts;
    for (int n = 0; n <= 16; ++n)
        rollouts += nlohmann::json{{"sample_id", "r" + std::to_string(n)}, {"k", 16}, {"n_correct", n}}.dump() + "\n";
    testing::write_file(dir / "rollouts.jsonl", rollouts);
    auto d = cmd_filter_difficulty({dir / "rollouts.jsonl", dir / "difficulty.jsonl"});
    CHECK(d.total == 17);
    auto lines = testing::read_lines(dir / "difficulty.jsonl");
    REQUIRE(lines.size() == 17);
    int kept = 0;
    for (const auto& l : lines) kept += nlohmann::json::parse(l)["decision"] == "KEEP";
    CHECK(kept == 15);

    testing::write_file(dir / "scores.jsonl", R"({"sample_id":"a","reply":"9/8"})" "\n"
                                              R"({"sample_id":"b","reasoning_score":7,"review_score":9})" "\n"
                                              R"({"sample_id":"c","reply":"nine"})" "\n");
    auto cot = cmd_filter_cot({dir / "scores.jsonl", dir / "cot.jsonl", {}});
    CHECK(cot.total == 3);
    auto cot_lines = testing::read_lines(dir / "cot.jsonl");
    REQUIRE(cot_lines.size() == 3);
    CHECK(nlohmann::json::parse(cot_lines[0])["decision"] == "KEEP");
    CHECK(nlohmann::json::parse(cot_lines[1])["decision"] == "DISCARD");
    CHECK(nlohmann::json::parse(cot_lines[2])["flags"] == nlohmann::json{"malformed_reply"});

    testing::write_file(dir / "replies.jsonl",
                        nlohmann::json{{"id", 1}, {"reply", "Question: q?\nA. a\nB. b\nC. c\nD. d\nCorrect answer: D"}}.dump() +
                            "\n" + nlohmann::json{{"id", 2}, {"reply", "Not suitable for this hallucination type"}}.dump() +
                            "\n" + nlohmann::json{{"id", 3}, {"reply", "gibberish"}}.dump() + "\n");
    cmd_gen_parse({dir / "replies.jsonl", dir / "gen.jsonl"});
    auto gen = testing::read_lines(dir / "gen.jsonl");
    REQUIRE(gen.size() == 3);
    CHECK(nlohmann::json::parse(gen[0])["answer_key"] == "D");
    CHECK(nlohmann::json::parse(gen[1])["kind"] == "unsuitable");
    CHECK(nlohmann::json::parse(gen[2])["kind"] == "error");

    SmallCorpus c;
    QaFilterOptions q{c.dataset, c.dir / "qa.jsonl", {}, 1.0};
    q.judge.mock_policy = "rubric_hash";
    auto qa = cmd_filter_qa(q);
    CHECK(qa.total == 2);
    CHECK(qa.flagged == 2);
    for (const auto& l : testing::read_lines(c.dir / "qa.jsonl"))
        CHECK(nlohmann::json::parse(l)["flags"] == nlohmann::json{"judge_unavailable"});
}

TEST_CASE("balance command") {
    testing::TempDir dir;
    std::string pool;
    for (int i = 0; i < 60; ++i)
        pool += nlohmann::json{{"sample_id", "p" + std::to_string(i)},
                               {"aspect", i % 2 ? "pitch" : "rhythm"},
                               {"duration_s", (i % 30) * 1.5}}
                    .dump() +
                "\n";
    testing::write_file(dir / "pool.jsonl", pool);
    BalanceCmdOptions o{dir / "pool.jsonl", dir / "out.jsonl", {12, {}, {0.0, 10.0, 30.0}, 5}};
    auto s = cmd_balance(o);
    CHECK(s.written == 12);
    auto first = testing::read_file(dir / "out.jsonl");
    cmd_balance(o);
    CHECK(testing::read_file(dir / "out.jsonl") == first);
}

TEST_CASE("render command") {
    auto text = cmd_render("caption", nlohmann::json::object());
    CHECK_FALSE(text.empty());
    CHECK_THROWS_WITH(cmd_render("nope", nlohmann::json::object()), doctest::Contains("unknown template"));
    CHECK_THROWS_WITH(cmd_render("qa_filter", nlohmann::json{{"caption", "c"}}), doctest::Contains("missing binding"));
    CHECK_THROWS(cmd_render("qa_filter", nlohmann::json{{"caption", 1}, {"question", "q"}}));
}

TEST_CASE("round6") {
    CHECK(round6(0.1234567) == 0.123457);
    CHECK(round6(2.0 / 3.0) == 0.666667);
    CHECK(round6(-0.0000004) == -0.0);
}

}
