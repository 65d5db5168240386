#include "cafe/model.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "cafe/error.hpp"

namespace cafe::model {

namespace {

const std::set<std::string, std::less<>> kSampleKeys = {
    "id",          "question",       "choices",  "answer_key", "caption",  "domain_tag",
    "difficulty_tag", "task_tag",    "duration_s", "audio_ref"};

const std::set<std::string, std::less<>> kTraceKeys = {"sample_id", "model_id", "run_index",
                                                       "raw_text"};

[[noreturn]] void invalid(const std::string& message) {
    throw Error(ErrorCode::invalid_argument, message);
}

const json& require(const json& j, std::string_view key) {
    auto it = j.find(key);
    if (it == j.end()) invalid("missing field " + std::string(key));
    return *it;
}

std::string require_string(const json& j, std::string_view key) {
    const json& v = require(j, key);
    if (!v.is_string()) invalid("field " + std::string(key) + " must be a string");
    return v.get<std::string>();
}

std::optional<std::string> optional_string(const json& j, std::string_view key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) invalid("field " + std::string(key) + " must be a string");
    return it->get<std::string>();
}

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    return in;
}

}  // namespace

std::string_view to_string(DomainTag tag) {
    switch (tag) {
        case DomainTag::sound: return "sound";
        case DomainTag::music: return "music";
        case DomainTag::speech: return "speech";
        case DomainTag::mixed: return "mixed";
    }
    return "sound";
}

std::string_view to_string(DifficultyTag tag) {
    switch (tag) {
        case DifficultyTag::easy: return "easy";
        case DifficultyTag::medium: return "medium";
        case DifficultyTag::hard: return "hard";
    }
    return "easy";
}

std::optional<DomainTag> parse_domain_tag(std::string_view text) {
    for (auto tag : {DomainTag::sound, DomainTag::music, DomainTag::speech, DomainTag::mixed})
        if (to_string(tag) == text) return tag;
    return std::nullopt;
}

std::optional<DifficultyTag> parse_difficulty_tag(std::string_view text) {
    for (auto tag : {DifficultyTag::easy, DifficultyTag::medium, DifficultyTag::hard})
        if (to_string(tag) == text) return tag;
    return std::nullopt;
}

const std::string& AudioQASample::answer_text() const {
    for (const auto& c : choices)
        if (c.letter == answer_key) return c.text;
    invalid("answer_key not among choices");
}

TraceKey key_of(const TraceRecord& trace) {
    return {trace.sample_id, trace.model_id, trace.run_index};
}

std::string to_string(const TraceKey& key) {
    return std::get<0>(key) + "/" + std::get<1>(key) + "/" + std::to_string(std::get<2>(key));
}

void validate(const AudioQASample& s) {
    if (s.id.empty()) invalid("id must be non-empty");
    if (s.choices.size() < 2 || s.choices.size() > 6)
        invalid("sample " + s.id + ": choices must have 2-6 entries");
    char previous = 0;
    for (const auto& c : s.choices) {
        if (c.letter.size() != 1 || c.letter[0] < 'A' || c.letter[0] > 'F')
            invalid("sample " + s.id + ": choice letter '" + c.letter + "' not in A-F");
        if (c.letter[0] <= previous)
            invalid("sample " + s.id + ": choice letters must be distinct and in order");
        previous = c.letter[0];
    }
    auto hits = std::count_if(s.choices.begin(), s.choices.end(),
                              [&](const Choice& c) { return c.letter == s.answer_key; });
    if (hits != 1) invalid("sample " + s.id + ": answer_key not among choices");
    if (s.caption.empty()) invalid("sample " + s.id + ": caption must be non-empty");
    if (s.duration_s && !(*s.duration_s >= 0.0))
        invalid("sample " + s.id + ": duration_s must be non-negative");
}

AudioQASample sample_from_json(const json& j) {
    if (!j.is_object()) invalid("sample record must be a JSON object");
    AudioQASample s;
    s.id = require_string(j, "id");
    s.question = require_string(j, "question");
    const json& choices = require(j, "choices");
    if (!choices.is_array()) invalid("field choices must be a list");
    for (const auto& c : choices) {
        if (!c.is_array() || c.size() != 2 || !c[0].is_string() || !c[1].is_string())
            invalid("each choice must be a [letter, text] pair");
        s.choices.push_back({upper(c[0].get<std::string>()), c[1].get<std::string>()});
    }
    s.answer_key = upper(require_string(j, "answer_key"));
    s.caption = require_string(j, "caption");
    auto domain = require_string(j, "domain_tag");
    auto parsed_domain = parse_domain_tag(domain);
    if (!parsed_domain) invalid("unknown domain_tag " + domain);
    s.domain_tag = *parsed_domain;
    if (auto d = optional_string(j, "difficulty_tag")) {
        auto parsed = parse_difficulty_tag(*d);
        if (!parsed) invalid("unknown difficulty_tag " + *d);
        s.difficulty_tag = parsed;
    }
    s.task_tag = optional_string(j, "task_tag");
    if (auto it = j.find("duration_s"); it != j.end() && !it->is_null()) {
        if (!it->is_number()) invalid("field duration_s must be a number");
        s.duration_s = it->get<double>();
    }
    s.audio_ref = optional_string(j, "audio_ref");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!kSampleKeys.contains(it.key())) s.extra[it.key()] = it.value();
    validate(s);
    return s;
}

json to_json(const AudioQASample& s) {
    json j;
    j["id"] = s.id;
    j["question"] = s.question;
    json choices = json::array();
    for (const auto& c : s.choices) choices.push_back(json::array({c.letter, c.text}));
    j["choices"] = std::move(choices);
    j["answer_key"] = s.answer_key;
    j["caption"] = s.caption;
    j["domain_tag"] = to_string(s.domain_tag);
    if (s.difficulty_tag) j["difficulty_tag"] = to_string(*s.difficulty_tag);
    if (s.task_tag) j["task_tag"] = *s.task_tag;
    if (s.duration_s) j["duration_s"] = *s.duration_s;
    if (s.audio_ref) j["audio_ref"] = *s.audio_ref;
    for (auto it = s.extra.begin(); it != s.extra.end(); ++it) j[it.key()] = it.value();
    return j;
}

TraceRecord trace_from_json(const json& j) {
    if (!j.is_object()) invalid("trace record must be a JSON object");
    TraceRecord t;
    t.sample_id = require_string(j, "sample_id");
    t.model_id = require_string(j, "model_id");
    t.raw_text = require_string(j, "raw_text");
    const json& run = require(j, "run_index");
    if (!run.is_number_integer() || run.get<std::int64_t>() < 0)
        invalid("field run_index must be a non-negative integer");
    t.run_index = run.get<std::int64_t>();
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!kTraceKeys.contains(it.key())) t.extra[it.key()] = it.value();
    return t;
}

json to_json(const TraceRecord& t) {
    json j;
    j["sample_id"] = t.sample_id;
    j["model_id"] = t.model_id;
    j["run_index"] = t.run_index;
    j["raw_text"] = t.raw_text;
    for (auto it = t.extra.begin(); it != t.extra.end(); ++it) j[it.key()] = it.value();
    return j;
}

void for_each_jsonl(std::istream& in, const std::function<void(std::size_t, const json&)>& fn) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::parse,
                        "line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        try {
            fn(line_no, j);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::invalid_argument)
                throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.what());
            throw;
        }
    }
}

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const json&)>& fn) {
    auto in = open_input(path);
    for_each_jsonl(in, fn);
}

std::vector<AudioQASample> read_dataset(std::istream& in) {
    std::vector<AudioQASample> samples;
    std::set<std::string, std::less<>> seen;
    for_each_jsonl(in, [&](std::size_t, const json& j) {
        auto s = sample_from_json(j);
        if (!seen.insert(s.id).second) invalid("duplicate id " + s.id);
        samples.push_back(std::move(s));
    });
    return samples;
}

std::vector<AudioQASample> load_dataset(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_dataset(in);
}

void write_dataset(std::ostream& out, const std::vector<AudioQASample>& samples) {
    for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

std::vector<TraceRecord> read_traces(std::istream& in) {
    std::vector<TraceRecord> traces;
    std::set<TraceKey> seen;
    for_each_jsonl(in, [&](std::size_t, const json& j) {
        auto t = trace_from_json(j);
        if (!seen.insert(key_of(t)).second)
            invalid("duplicate trace " + to_string(key_of(t)));
        traces.push_back(std::move(t));
    });
    return traces;
}

std::vector<TraceRecord> load_traces(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_traces(in);
}

void write_traces(std::ostream& out, const std::vector<TraceRecord>& traces) {
    for (const auto& t : traces) out << to_json(t).dump() << '\n';
}

std::string question_with_choices(const AudioQASample& s) {
    std::ostringstream out;
    out << s.question;
    for (const auto& c : s.choices) out << '\n' << c.letter << ". " << c.text;
    return out.str();
}

std::string answer_with_letter(const AudioQASample& s) {
    return s.answer_key + ". " + s.answer_text();
}

}  // namespace cafe::model
