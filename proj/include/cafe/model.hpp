#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "json.hpp"

namespace cafe::model {

using json = nlohmann::ordered_json;

enum class DomainTag { sound, music, speech, mixed };
enum class DifficultyTag { easy, medium, hard };

std::string_view to_string(DomainTag tag);
std::string_view to_string(DifficultyTag tag);
std::optional<DomainTag> parse_domain_tag(std::string_view text);
std::optional<DifficultyTag> parse_difficulty_tag(std::string_view text);

struct Choice {
    std::string letter;  // single uppercase letter A-F
    std::string text;

    bool operator==(const Choice&) const = default;
};

/// One benchmark item. `extra` holds JSON keys this toolkit does not know
/// about; they survive a load/serialize round trip untouched.
struct AudioQASample {
    std::string id;
    std::string question;
    std::vector<Choice> choices;
    std::string answer_key;
    std::string caption;
    DomainTag domain_tag = DomainTag::sound;
    std::optional<DifficultyTag> difficulty_tag;
    std::optional<std::string> task_tag;
    std::optional<double> duration_s;
    std::optional<std::string> audio_ref;
    json extra = json::object();

    bool operator==(const AudioQASample&) const = default;

    /// Text of the choice labelled `answer_key`.
    const std::string& answer_text() const;
};

struct TraceRecord {
    std::string sample_id;
    std::string model_id;
    std::string raw_text;
    std::int64_t run_index = 0;
    json extra = json::object();

    bool operator==(const TraceRecord&) const = default;
};

/// (sample_id, model_id, run_index): the identity of one model output.
using TraceKey = std::tuple<std::string, std::string, std::int64_t>;
TraceKey key_of(const TraceRecord& trace);
std::string to_string(const TraceKey& key);

// Validation throws cafe::Error(invalid_argument) naming the violated rule.
void validate(const AudioQASample& sample);

AudioQASample sample_from_json(const json& j);
json to_json(const AudioQASample& sample);
TraceRecord trace_from_json(const json& j);
json to_json(const TraceRecord& trace);

std::vector<AudioQASample> read_dataset(std::istream& in);
std::vector<AudioQASample> load_dataset(const std::filesystem::path& path);
void write_dataset(std::ostream& out, const std::vector<AudioQASample>& samples);

std::vector<TraceRecord> read_traces(std::istream& in);
std::vector<TraceRecord> load_traces(const std::filesystem::path& path);
void write_traces(std::ostream& out, const std::vector<TraceRecord>& traces);

/// Calls `fn(line_number, object)` for every non-blank line. CRLF endings are
/// accepted. Malformed JSON raises a parse error carrying the line number.
void for_each_jsonl(std::istream& in, const std::function<void(std::size_t, const json&)>& fn);
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const json&)>& fn);

/// Question followed by one "X. text" line per choice, as shown to judges.
std::string question_with_choices(const AudioQASample& sample);
/// "B. dog" form of the gold answer.
std::string answer_with_letter(const AudioQASample& sample);

}  // namespace cafe::model
