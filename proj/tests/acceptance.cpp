// Prints one PASS/FAIL line per acceptance criterion; exits nonzero on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "cafe/app.hpp"
#include "cafe/error.hpp"
#include "cafe/service.hpp"
#include "httplib.h"
#include "support.hpp"

using namespace cafe;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = true;
    std::string detail;

    void fail(const std::string& why) {
        if (pass) detail = why;
        pass = false;
    }
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Outcome reward_oracle() {
    Outcome o;
    std::mt19937_64 rng(1001);
    std::uniform_real_distribution<double> u(0.0, 1.0), wu(0.0, 3.0);
    std::vector<std::pair<reward::ComponentScores, reward::RewardWeights>> cases;
    for (int i = 0; i < 1000; ++i) {
        reward::ComponentScores s;
        s.perception = u(rng);
        s.step_scores.resize(rng() % 9);
        for (auto& x : s.step_scores) x = rng() % 10 == 0 ? 0.0 : u(rng);
        s.all_reason = u(rng);
        s.review = u(rng);
        s.acc = static_cast<int>(rng() % 2);
        s.format = static_cast<int>(rng() % 2);
        reward::RewardWeights w = i % 2 ? reward::RewardWeights{} : reward::RewardWeights{u(rng), wu(rng), wu(rng), wu(rng), wu(rng), wu(rng)};
        cases.emplace_back(s, w);
    }
    double worst = 0.0;
    auto t0 = Clock::now();
    for (const auto& [s, w] : cases) {
        double gm = 0.0;
        if (!s.step_scores.empty()) {
            long double prod = 1.0L;
            for (double v : s.step_scores) prod *= v;
            gm = static_cast<double>(std::pow(prod, 1.0L / s.step_scores.size()));
        }
        double spr = w.theta * gm + (1.0 - w.theta) * s.all_reason;
        double rea = s.acc ? 1.0 + w.mu * s.review : 0.0;
        double expected = w.alpha * s.perception + w.beta * spr + w.gamma * rea + w.delta * s.format;
        worst = std::max(worst, std::fabs(reward::combine(s, w).r_all - expected));
    }
    double elapsed = seconds_since(t0);
    if (worst > 1e-12) o.fail("max deviation " + fmt("%.3g", worst));
    if (elapsed >= 1.0) o.fail("took " + fmt("%.3f", elapsed) + " s");
    if (o.pass) o.detail = "1000 cases, max deviation " + fmt("%.3g", worst) + ", " + fmt("%.4f", elapsed) + " s";
    return o;
}

Outcome gating_law() {
    Outcome o;
    for (int k = 0; k <= 10; ++k) {
        reward::ComponentScores s{1.0, {1.0}, 1.0, k / 10.0, 0, 1};
        if (reward::combine(s).r_rea != 0.0) o.fail("review " + fmt("%.1f", k / 10.0) + " leaks through");
    }
    if (o.pass) o.detail = "11 review levels";
    return o;
}

Outcome geometric_mean_laws() {
    Outcome o;
    std::mt19937_64 rng(1003);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> xs(1 + rng() % 16);
        for (auto& x : xs) x = u(rng);
        double gm = reward::geometric_mean(xs);
        auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
        if (gm < *lo || gm > *hi) o.fail("gm outside [min, max]");
        std::vector<double> same(xs.size(), xs[0]);
        if (std::fabs(reward::geometric_mean(same) - xs[0]) > 1e-12) o.fail("identical steps drift");
        xs[rng() % xs.size()] = 0.0;
        if (reward::geometric_mean(xs) != 0.0) o.fail("zero step not absorbing");
    }
    if (o.pass) o.detail = "1000 lists";
    return o;
}

Outcome max_reward() {
    Outcome o;
    reward::ComponentScores s{1.0, {1.0, 1.0, 1.0}, 1.0, 1.0, 1, 1};
    double r = reward::combine(s).r_all;
    if (r != 4.85) o.fail("r_all = " + fmt("%.17g", r));
    else o.detail = "r_all = 4.85";
    return o;
}

Outcome metric_identity() {
    Outcome o;
    enum Cat { mat, hal, misuse, neu, miss };
    std::mt19937_64 rng(1005);
    int checked = 0;
    while (checked < 1000) {
        metrics::EventCounts c{rng() % 12, rng() % 12, rng() % 12, rng() % 12, rng() % 12};
        std::vector<Cat> events;
        for (std::size_t i = 0; i < c.n_mat; ++i) events.push_back(mat);
        for (std::size_t i = 0; i < c.n_hal; ++i) events.push_back(hal);
        for (std::size_t i = 0; i < c.n_misuse; ++i) events.push_back(misuse);
        for (std::size_t i = 0; i < c.n_neu; ++i) events.push_back(neu);
        for (std::size_t i = 0; i < c.n_miss; ++i) events.push_back(miss);
        std::shuffle(events.begin(), events.end(), rng);
        std::size_t pred = 0, tgt = 0, in_pred[4] = {0, 0, 0, 0}, missed = 0;
        for (Cat e : events) {
            bool mentioned = e != miss;
            bool required = e == mat || e == miss;
            pred += mentioned;
            tgt += required;
            if (mentioned) ++in_pred[e];
            if (e == miss) ++missed;
        }
        auto m = metrics::compute_metrics(c);
        if (m.n_pred != pred || m.n_tgt != tgt) o.fail("space sizes differ");
        auto ratio = [](std::size_t a, std::size_t b) { return b ? std::optional<double>(double(a) / double(b)) : std::nullopt; };
        if (m.acc_per != ratio(in_pred[mat], pred) || m.err_per != ratio(in_pred[hal], pred) ||
            m.err_use != ratio(in_pred[misuse], pred) || m.err_omit != ratio(missed, tgt))
            o.fail("ratio differs from re-derivation");
        if (pred == 0) continue;
        double sum = *m.acc_per + *m.err_per + *m.err_use + double(c.n_neu) / double(m.n_pred);
        if (std::fabs(sum - 1.0) > 1e-12) o.fail("identity off by " + fmt("%.3g", sum - 1.0));
        ++checked;
    }
    if (o.pass) o.detail = "1000 count vectors";
    return o;
}

Outcome pearson_oracle() {
    Outcome o;
    std::mt19937_64 rng(1006);
    std::normal_distribution<double> g(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t n = 5 + rng() % 46;
        std::vector<double> xs(n), ys(n);
        double slope = g(rng);
        for (std::size_t i = 0; i < n; ++i) {
            xs[i] = 10.0 * g(rng) + 3.0;
            ys[i] = slope * xs[i] + 5.0 * g(rng);
        }
        long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (std::size_t i = 0; i < n; ++i) {
            sx += xs[i];
            sy += ys[i];
            sxx += (long double)xs[i] * xs[i];
            syy += (long double)ys[i] * ys[i];
            sxy += (long double)xs[i] * ys[i];
        }
        long double cov = n * sxy - sx * sy;
        long double r = cov / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
        worst = std::max(worst, std::fabs(metrics::pearson(xs, ys).r - static_cast<double>(r)));
    }
    if (worst > 1e-9) o.fail("max deviation " + fmt("%.3g", worst));
    double r = metrics::pearson({1, 2, 3}, {2, 1, 3}).r;
    if (r != 0.5) o.fail("pearson([1,2,3],[2,1,3]) = " + fmt("%.17g", r));
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> xs, up, down;
        double a = std::fabs(g(rng)) + 0.05, b = g(rng);
        for (int i = 0; i < 5 + trial % 40; ++i) {
            xs.push_back(g(rng) * 7.0);
            up.push_back(a * xs.back() + b);
            down.push_back(-a * xs.back() + b);
        }
        if (std::fabs(metrics::pearson(xs, up).r - 1.0) > 1e-12 || std::fabs(metrics::pearson(xs, down).r + 1.0) > 1e-12)
            o.fail("linear data not at +-1");
    }
    if (o.pass) o.detail = "100 vectors, max deviation " + fmt("%.3g", worst);
    return o;
}

Outcome difficulty_table() {
    Outcome o;
    int matches = 0;
    for (int n = 0; n <= 16; ++n) {
        bool keep = pipeline::difficulty_filter({"s", 16, n}).decision == pipeline::Decision::keep;
        matches += keep == (n > 0 && n < 16);
    }
    if (matches != 17) o.fail(std::to_string(matches) + "/17");
    else o.detail = "17/17";
    return o;
}

Outcome parser_round_trip() {
    Outcome o;
    testing::TraceGenerator gen(1008);
    int fixed = 0, rejected = 0;
    for (int i = 0; i < 500; ++i) {
        auto raw = gen.trace();
        auto first = trace::parse_mpar2(raw, {true});
        if (!first.ok()) {
            o.fail("generated trace rejected");
            continue;
        }
        auto canon = trace::canonicalize(*first.trace);
        auto second = trace::parse_mpar2(canon, {true});
        if (second.ok() && trace::sections_equal(*first.trace, *second.trace) &&
            trace::canonicalize(*second.trace) == canon)
            ++fixed;
    }
    for (int i = 0; i < 500; ++i) {
        auto m = gen.mutate(gen.trace());
        auto r = trace::parse_mpar2(m.text, {true});
        bool named = false;
        for (const auto& d : r.diagnostics) named |= d.tag == m.tag;
        if (!r.ok() && named) ++rejected;
    }
    if (fixed != 500) o.fail(std::to_string(fixed) + "/500 fixpoints");
    if (rejected != 500) o.fail(std::to_string(rejected) + "/500 mutations rejected with a tag diagnostic");
    if (o.pass) o.detail = "500/500 fixpoints, 500/500 mutations rejected";
    return o;
}

Outcome end_to_end(const fs::path& e2e) {
    Outcome o;
    testing::TempDir dir;
    auto t0 = Clock::now();
    app::BatchOptions b;
    b.dataset = e2e / "dataset.jsonl";
    b.traces = e2e / "traces.jsonl";
    b.out = dir / "extractions.jsonl";
    b.judge.mock_policy = "echo_fixture";
    b.judge.fixture = e2e / "fixtures.json";
    app::cmd_extract(b);
    app::EvalOptions e;
    e.extractions = b.out;
    e.traces = b.traces;
    e.dataset = b.dataset;
    e.out_prefix = dir / "report";
    app::cmd_eval(e);
    double elapsed = seconds_since(t0);
    for (const char* ext : {".json", ".metrics.csv", ".bins.csv"}) {
        auto got = testing::read_file(dir / (std::string("report") + ext));
        auto want = testing::read_file(e2e / (std::string("golden") + ext));
        if (want.empty() || got != want) o.fail(std::string("golden") + ext + " differs");
    }
    if (elapsed >= 10.0) o.fail("took " + fmt("%.2f", elapsed) + " s");
    if (o.pass) o.detail = "3 files identical, " + fmt("%.3f", elapsed) + " s";
    return o;
}

// Records every prompt and reply so a run can be replayed from a fixture file.
class RecordingJudge final : public judge::Judge {
public:
    std::string complete(const std::string& prompt) override {
        auto reply = inner_.complete(prompt);
        std::lock_guard lock(mutex_);
        replies_[judge::prompt_key(prompt)] = reply;
        return reply;
    }
    std::string describe() const override { return "recording"; }
    bool is_mock() const override { return true; }
    nlohmann::json fixtures() const {
        std::lock_guard lock(mutex_);
        return replies_;
    }

private:
    judge::MockJudge inner_{7, judge::MockPolicy::rubric_hash};
    std::map<std::string, std::string> replies_;
    mutable std::mutex mutex_;
};

Outcome service_parity(const fs::path& e2e) {
    Outcome o;
    testing::TempDir dir;
    std::map<std::string, model::AudioQASample> samples;
    for (auto& s : model::load_dataset(e2e / "dataset.jsonl")) samples[s.id] = s;
    std::vector<model::TraceRecord> pairs;
    for (auto& t : model::load_traces(e2e / "traces.jsonl"))
        if (t.model_id == "larm-mpar" && pairs.size() < 20) pairs.push_back(t);

    auto recorder = std::make_shared<RecordingJudge>();
    judge::JudgeGateway recording(recorder);
    std::string traces;
    for (const auto& t : pairs) {
        reward::score_trace(samples.at(t.sample_id), t.raw_text, recording);
        traces += testing::trace_json(t.sample_id, t.model_id, static_cast<int>(t.run_index), t.raw_text) + "\n";
    }
    testing::write_file(dir / "fixtures.json", recorder->fixtures().dump());
    testing::write_file(dir / "traces.jsonl", traces);

    app::RewardOptions r;
    r.dataset = e2e / "dataset.jsonl";
    r.traces = dir / "traces.jsonl";
    r.out = dir / "rewards.jsonl";
    r.judge.mock_policy = "echo_fixture";
    r.judge.fixture = dir / "fixtures.json";
    app::cmd_reward(r);
    std::map<std::string, nlohmann::json> batch;
    for (const auto& line : testing::read_lines(r.out)) {
        auto j = nlohmann::json::parse(line);
        batch[j["sample_id"].get<std::string>()] = j;
    }

    service::ServiceConfig cfg;
    cfg.dataset = e2e / "dataset.jsonl";
    cfg.judge = std::make_shared<judge::MockJudge>(0, judge::MockPolicy::echo_fixture,
                                                   judge::MockJudge::load_fixtures(dir / "fixtures.json"));
    service::RewardService svc(cfg);
    int port = svc.bind("127.0.0.1", 0);
    std::thread server([&] { svc.listen(); });
    svc.wait_until_ready();
    httplib::Client client("127.0.0.1", port);
    int equal = 0;
    for (const auto& t : pairs) {
        auto body = nlohmann::json{{"sample_id", t.sample_id}, {"trace", t.raw_text}}.dump();
        auto res = client.Post("/v1/reward", body, "application/json");
        if (!res || res->status != 200) {
            o.fail("request for " + t.sample_id + " failed");
            continue;
        }
        auto got = nlohmann::json::parse(res->body);
        auto want = batch[t.sample_id];
        for (const char* k : {"sample_id", "model_id", "run_index"}) want.erase(k);
        if (got == want && got.size() == 7) ++equal;
        else o.fail(t.sample_id + ": " + got.dump() + " vs " + want.dump());
    }
    svc.stop();
    server.join();
    if (equal != 20) o.fail(std::to_string(equal) + "/20 equal");
    if (o.pass) o.detail = "20/20 breakdowns equal";
    return o;
}

Outcome qa_precedence() {
    Outcome o;
    int follows = 0;
    for (int score = 1; score <= 5; ++score) {
        const char* said = score >= 4 ? "DISCARD" : "KEEP";
        auto v = pipeline::qa_verdict(
            nlohmann::ordered_json{{"analysis", "x"}, {"score", score}, {"decision", said}});
        follows += v.decision == (score >= 4 ? pipeline::Decision::keep : pipeline::Decision::discard);
    }
    if (follows != 5) o.fail(std::to_string(follows) + "/5");
    else o.detail = "5/5";
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    fs::path e2e = argc > 1 ? fs::path(argv[1]) : fs::path(CAFE_TEST_DATA_DIR) / "e2e";
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
    };
    std::vector<Criterion> criteria{
        {"reward formula oracle", reward_oracle},
        {"gating law", gating_law},
        {"geometric mean laws", geometric_mean_laws},
        {"maximum reward", max_reward},
        {"metric identity", metric_identity},
        {"pearson oracle", pearson_oracle},
        {"difficulty filter table", difficulty_table},
        {"parser round trip", parser_round_trip},
        {"end-to-end mock run", [&] { return end_to_end(e2e); }},
        {"service parity", [&] { return service_parity(e2e); }},
        {"qa filter precedence", qa_precedence},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.fail(std::string("exception: ") + e.what());
        }
        std::printf("%s  %-26s %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
        failed += !o.pass;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
