#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cafe/model.hpp"
#include "cafe/trace.hpp"

namespace testing {

namespace fs = std::filesystem;

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("cafe_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << text;
}

inline std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

inline std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream f(path);
    std::vector<std::string> lines;
    for (std::string line; std::getline(f, line);)
        if (!line.empty()) lines.push_back(line);
    return lines;
}

// {"id":"s1", ..., choices A:cat B:dog, answer B}
inline cafe::model::AudioQASample dog_sample(const std::string& id = "s1") {
    cafe::model::AudioQASample s;
    s.id = id;
    s.question = "Which animal is heard?";
    s.choices = {{"A", "cat"}, {"B", "dog"}};
    s.answer_key = "B";
    s.caption = "a dog barks twice near a road";
    s.domain_tag = cafe::model::DomainTag::sound;
    return s;
}

inline const char* kWellFormed =
    "<thinking><perception>1. [0.0, 2.5]: dog barking</perception><reasoning>1. Sub-question: what "
    "animal? Answer: a dog</reasoning><review>1. Evidence Check: barking confirmed 2. Logic Check: "
    "consistent</review></thinking><answer>B</answer>";

inline std::string trace_json(const std::string& sample_id, const std::string& model_id, int run,
                              const std::string& raw) {
    return cafe::model::json{
        {"sample_id", sample_id}, {"model_id", model_id}, {"run_index", run}, {"raw_text", raw}}
        .dump();
}

// Random traces in the tagged grammar, with noisy tag spelling and layout.
class TraceGenerator {
public:
    explicit TraceGenerator(std::uint64_t seed) : rng_(seed) {}

    std::string phrase(int min_words, int max_words) {
        static const char* words[] = {"dog",   "bark",  "rain", "low",   "hum",    "bright", "bell",
                                      "voice", "crowd", "far",  "steady", "second", "engine", "soft",
                                      "piano", "loud",  "wind", "tone",  "rhythm", "pitch"};
        int n = uniform(min_words, max_words);
        std::string out;
        for (int i = 0; i < n; ++i) {
            if (i) out += ' ';
            out += words[uniform(0, static_cast<int>(std::size(words)) - 1)];
        }
        return out;
    }

    std::string tag(const std::string& name, bool closing) {
        std::string n = name;
        if (coin(0.2))
            for (auto& c : n) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        std::string pad = coin(0.15) ? " " : "";
        return std::string("<") + (closing ? "/" : "") + pad + n + pad + ">";
    }

    std::string sep() {
        switch (uniform(0, 3)) {
            case 0: return "";
            case 1: return " ";
            case 2: return "\n";
            default: return "\n\n";
        }
    }

    std::string trace() {
        std::string perception;
        int events = uniform(1, 5);
        double t = 0.0;
        for (int i = 1; i <= events; ++i) {
            if (i > 1) perception += coin(0.7) ? "\n" : " ";
            perception += std::to_string(i) + ". ";
            if (coin(0.7)) {
                double d = uniform(1, 16) / 4.0;
                perception += "[" + cafe::trace::format_seconds(t) + ", " + cafe::trace::format_seconds(t + d) +
                              "]: ";
                t += d;
            }
            perception += phrase(1, 5);
        }
        std::string reasoning;
        int steps = uniform(1, 5);
        for (int i = 1; i <= steps; ++i) {
            if (i > 1) reasoning += coin(0.7) ? "\n" : " ";
            reasoning += std::to_string(i) + ". Sub-question: " + phrase(1, 6) + "?" +
                         (coin(0.5) ? "\n Answer: " : " Answer: ") + phrase(1, 6);
        }
        std::string review = "1. Evidence Check: " + phrase(1, 6) + (coin(0.5) ? "\n" : " ") +
                             "2. Logic Check: " + phrase(1, 6);
        std::string answer = coin(0.5) ? std::string(1, static_cast<char>('A' + uniform(0, 3))) : phrase(1, 3);
        return tag("thinking", false) + sep() + tag("perception", false) + sep() + perception + sep() +
               tag("perception", true) + sep() + tag("reasoning", false) + sep() + reasoning + sep() +
               tag("reasoning", true) + sep() + tag("review", false) + sep() + review + sep() +
               tag("review", true) + sep() + tag("thinking", true) + sep() + tag("answer", false) +
               answer + tag("answer", true);
    }

    struct Mutation {
        std::string text;
        std::string tag;  // lower-case name of the deleted or duplicated tag
    };

    // Deletes one tag occurrence or inserts a copy of one at another tag boundary.
    Mutation mutate(const std::string& raw) {
        static const std::regex tag_re(R"(<\s*/?\s*([A-Za-z]+)\s*>)");
        std::vector<std::pair<std::size_t, std::size_t>> spans;
        std::vector<std::string> names;
        for (auto it = std::sregex_iterator(raw.begin(), raw.end(), tag_re); it != std::sregex_iterator(); ++it) {
            spans.emplace_back(static_cast<std::size_t>(it->position(0)), static_cast<std::size_t>(it->length(0)));
            std::string n = (*it)[1];
            for (auto& c : n) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            names.push_back(n);
        }
        int pick = uniform(0, static_cast<int>(spans.size()) - 1);
        auto [pos, len] = spans[static_cast<std::size_t>(pick)];
        Mutation m;
        m.tag = names[static_cast<std::size_t>(pick)];
        if (coin(0.5)) {
            m.text = raw.substr(0, pos) + raw.substr(pos + len);
        } else {
            auto [at, at_len] = spans[static_cast<std::size_t>(uniform(0, static_cast<int>(spans.size()) - 1))];
            std::size_t insert = coin(0.5) ? at : at + at_len;
            m.text = raw.substr(0, insert) + raw.substr(pos, len) + raw.substr(insert);
        }
        return m;
    }

    int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }
    std::mt19937_64& rng() { return rng_; }

private:
    std::mt19937_64 rng_;
};

}  // namespace testing
