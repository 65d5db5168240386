#include <sstream>

#include "../support.hpp"
#include "cafe/error.hpp"
#include "cafe/model.hpp"
#include "doctest.h"

using namespace cafe;
using namespace cafe::model;

namespace {

const char* kMinimal =
    R"({"id":"s1","question":"Q?","choices":[["A","cat"],["B","dog"]],"answer_key":"B","caption":"a dog barks","domain_tag":"sound"})";

std::string error_of(const std::string& text) {
    std::istringstream in(text);
    try {
        read_dataset(in);
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("minimal record loads") {
    std::istringstream in(std::string(kMinimal) + "\n");
    auto samples = read_dataset(in);
    REQUIRE(samples.size() == 1);
    const auto& s = samples[0];
    CHECK(s.id == "s1");
    CHECK(s.choices.size() == 2);
    CHECK(s.answer_key == "B");
    CHECK(s.answer_text() == "dog");
    CHECK(s.domain_tag == DomainTag::sound);
    CHECK_FALSE(s.difficulty_tag.has_value());
}

TEST_CASE("answer key outside the choices") {
    std::string line = kMinimal;
    line.replace(line.find(R"("answer_key":"B")"), 16, R"("answer_key":"C")");
    CHECK(error_of(line).find("answer_key not among choices") != std::string::npos);
}

TEST_CASE("duplicate id reports the id") {
    CHECK(error_of(std::string(kMinimal) + "\n" + kMinimal + "\n").find("duplicate id s1") != std::string::npos);
}

TEST_CASE("malformed line carries its line number") {
    auto msg = error_of(std::string(kMinimal) + "\n{not json\n");
    CHECK(msg.find("line 2") != std::string::npos);
}

TEST_CASE("choice rules") {
    auto s = testing::dog_sample();
    CHECK_NOTHROW(validate(s));
    s.choices = {{"A", "cat"}};
    CHECK_THROWS_AS(validate(s), Error);
    s = testing::dog_sample();
    s.choices = {{"B", "cat"}, {"A", "dog"}};
    CHECK_THROWS(validate(s));
    s = testing::dog_sample();
    s.choices = {{"A", "cat"}, {"G", "dog"}};
    CHECK_THROWS(validate(s));
    s = testing::dog_sample();
    s.caption.clear();
    CHECK_THROWS(validate(s));
    s = testing::dog_sample();
    s.duration_s = -1.0;
    CHECK_THROWS(validate(s));
}

TEST_CASE("lower-case letters are normalised") {
    std::string line = kMinimal;
    line.replace(line.find(R"("answer_key":"B")"), 16, R"("answer_key":"b")");
    line.replace(line.find(R"(["B","dog"])"), 11, R"(["b","dog"])");
    std::istringstream in(line);
    auto s = read_dataset(in).at(0);
    CHECK(s.answer_key == "B");
    CHECK(s.choices[1].letter == "B");
}

TEST_CASE("round trip keeps unknown keys and CRLF input") {
    std::string line = kMinimal;
    line.insert(line.size() - 1, R"(,"difficulty_tag":"hard","task_tag":"single-source","duration_s":9.5,"audio_ref":"x.wav","vendor":{"k":[1,2]})");
    std::istringstream in(line + "\r\n\r\n");
    auto samples = read_dataset(in);
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].extra["vendor"]["k"][1] == 2);
    std::ostringstream out;
    write_dataset(out, samples);
    std::istringstream again(out.str());
    CHECK(read_dataset(again) == samples);
}

TEST_CASE("round trip over generated samples") {
    std::mt19937_64 rng(7);
    std::vector<AudioQASample> samples;
    for (int i = 0; i < 40; ++i) {
        AudioQASample s;
        s.id = "g" + std::to_string(i);
        s.question = "question " + std::to_string(i) + " with \"quotes\" and \\ slashes";
        int n = 2 + static_cast<int>(rng() % 5);
        for (int k = 0; k < n; ++k) s.choices.push_back({std::string(1, static_cast<char>('A' + k)), "opt" + std::to_string(k)});
        s.answer_key = s.choices[rng() % s.choices.size()].letter;
        s.caption = "caption événement " + std::to_string(i);
        s.domain_tag = static_cast<DomainTag>(rng() % 4);
        if (rng() % 2) s.difficulty_tag = static_cast<DifficultyTag>(rng() % 3);
        if (rng() % 2) s.task_tag = "task" + std::to_string(rng() % 3);
        if (rng() % 2) s.duration_s = static_cast<double>(rng() % 1000) / 8.0;
        samples.push_back(s);
    }
    std::ostringstream out;
    write_dataset(out, samples);
    std::istringstream in(out.str());
    CHECK(read_dataset(in) == samples);
}

TEST_CASE("traces") {
    std::istringstream one(testing::trace_json("s1", "m", 0, "text") + "\n");
    auto traces = read_traces(one);
    REQUIRE(traces.size() == 1);
    CHECK(key_of(traces[0]) == TraceKey{"s1", "m", 0});

    std::istringstream dup(testing::trace_json("s1", "m", 0, "a") + "\n" + testing::trace_json("s1", "m", 0, "b") + "\n");
    CHECK_THROWS_WITH_AS(read_traces(dup), doctest::Contains("duplicate trace s1/m/0"), Error);

    std::istringstream missing(R"({"sample_id":"s1","model_id":"m","run_index":0})");
    CHECK_THROWS_WITH_AS(read_traces(missing), doctest::Contains("raw_text"), Error);

    std::istringstream negative(R"({"sample_id":"s1","model_id":"m","run_index":-1,"raw_text":""})");
    CHECK_THROWS(read_traces(negative));
}

TEST_CASE("judge-facing renderings") {
    auto s = testing::dog_sample();
    CHECK(question_with_choices(s) == "Which animal is heard?\nA. cat\nB. dog");
    CHECK(answer_with_letter(s) == "B. dog");
}

TEST_CASE("missing file is an io error") {
    try {
        load_dataset("/nonexistent/cafe/data.jsonl");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::io);
    }
}

}
