#include "cafe/cafe.h"

#include <cmath>
#include <cstring>
#include <set>
#include <thread>

#include "cafe/app.hpp"
#include "cafe/error.hpp"
#include "cafe/metrics.hpp"
#include "cafe/model.hpp"
#include "cafe/reward.hpp"
#include "cafe/service.hpp"
#include "cafe/trace.hpp"

struct cafe_dataset {
    std::vector<cafe::model::AudioQASample> samples;
};

struct cafe_trace {
    cafe::trace::ParseResult result;
};

struct cafe_judge {
    std::shared_ptr<cafe::judge::Judge> judge;
    std::unique_ptr<cafe::judge::JudgeGateway> gateway;
};

struct cafe_service {
    std::unique_ptr<cafe::service::RewardService> service;
    std::thread worker;
};

namespace {

using cafe::Error;
using cafe::ErrorCode;
using json = nlohmann::json;

thread_local std::string g_last_error;

cafe_status to_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument: return CAFE_E_INVALID_ARGUMENT;
        case ErrorCode::io: return CAFE_E_IO;
        case ErrorCode::parse: return CAFE_E_PARSE;
        case ErrorCode::judge: return CAFE_E_JUDGE;
        case ErrorCode::judge_format: return CAFE_E_JUDGE_FORMAT;
        case ErrorCode::not_found: return CAFE_E_NOT_FOUND;
        case ErrorCode::internal: return CAFE_E_INTERNAL;
    }
    return CAFE_E_INTERNAL;
}

template <class Fn>
cafe_status guarded(Fn&& fn) {
    g_last_error.clear();
    try {
        return fn();
    } catch (const Error& e) {
        g_last_error = e.what();
        return to_status(e.code());
    } catch (const json::exception& e) {
        g_last_error = e.what();
        return CAFE_E_PARSE;
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return CAFE_E_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return CAFE_E_INTERNAL;
    }
}

void require(const void* p, const char* what) {
    if (!p) throw Error(ErrorCode::invalid_argument, std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void emit(char** out, const std::string& s) {
    if (out) *out = dup_string(s);
}

// Reads command options and rejects keys nobody asked for.
class Options {
public:
    explicit Options(const char* text) {
        if (text && *text) {
            try {
                j_ = json::parse(text);
            } catch (const json::parse_error& e) {
                throw Error(ErrorCode::invalid_argument, std::string("options are not valid JSON: ") + e.what());
            }
        } else {
            j_ = json::object();
        }
        if (!j_.is_object()) throw Error(ErrorCode::invalid_argument, "options must be a JSON object");
    }

    bool has(const std::string& k) {
        used_.insert(k);
        return j_.contains(k) && !j_[k].is_null();
    }

    template <class T>
    T get(const std::string& k, T fallback) {
        if (!has(k)) return fallback;
        try {
            return j_[k].get<T>();
        } catch (const json::exception&) {
            throw Error(ErrorCode::invalid_argument, "option " + k + " has the wrong type");
        }
    }

    std::string path(const std::string& k) {
        if (!has(k)) throw Error(ErrorCode::invalid_argument, "missing option " + k);
        return get<std::string>(k, "");
    }

    json raw(const std::string& k) {
        if (!has(k)) return nullptr;
        const json& v = j_[k];
        if (v.is_string()) {
            try {
                return json::parse(v.get<std::string>());
            } catch (const json::parse_error&) {
                throw Error(ErrorCode::invalid_argument, "option " + k + " is not valid JSON");
            }
        }
        return v;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) throw Error(ErrorCode::invalid_argument, "unknown option " + it.key());
    }

private:
    json j_;
    std::set<std::string> used_;
};

cafe::app::JudgeConfig judge_config(Options& o) {
    cafe::app::JudgeConfig c;
    if (o.has("judge_endpoint")) c.endpoint = o.get<std::string>("judge_endpoint", "");
    if (o.has("mock")) c.mock_policy = o.get<std::string>("mock", "");
    if (o.has("fixture")) c.fixture = o.get<std::string>("fixture", "");
    c.seed = o.get<std::uint64_t>("seed", c.seed);
    c.model = o.get<std::string>("judge_model", c.model);
    c.timeout_s = o.get<double>("timeout", c.timeout_s);
    c.retries = o.get<int>("retries", c.retries);
    c.max_inflight = o.get<int>("max_inflight", c.max_inflight);
    c.snap_scores = o.get<bool>("snap_scores", c.snap_scores);
    return c;
}

cafe::trace::TokenCounter token_counter(Options& o) {
    auto name = o.get<std::string>("token_counter", "whitespace");
    auto c = cafe::trace::parse_token_counter(name);
    if (!c) throw Error(ErrorCode::invalid_argument, "unknown token counter " + name);
    return *c;
}

cafe::reward::ScoreOptions score_options(Options& o) {
    cafe::reward::ScoreOptions s;
    s.score_malformed = o.get<bool>("score_malformed", false);
    s.counter = token_counter(o);
    return s;
}

cafe::app::BatchOptions batch_options(Options& o) {
    cafe::app::BatchOptions b;
    b.dataset = o.path("dataset");
    b.traces = o.path("traces");
    b.out = o.path("out");
    b.judge = judge_config(o);
    b.max_flagged_frac = o.get<double>("max_flagged_frac", b.max_flagged_frac);
    return b;
}

cafe_status summary_status(const cafe::app::RunSummary& s, char** out) {
    emit(out, s.to_json().dump());
    if (s.threshold_exceeded) {
        g_last_error = "flagged records exceed the allowed fraction (" + std::to_string(s.flagged) + " of " +
                       std::to_string(s.total) + ")";
        return CAFE_E_THRESHOLD;
    }
    return CAFE_OK;
}

double or_nan(const std::optional<double>& v) { return v ? *v : std::nan(""); }

}  // namespace

extern "C" {

const char* cafe_version(void) {
    static const std::string v(cafe::app::version());
    return v.c_str();
}

const char* cafe_last_error(void) { return g_last_error.c_str(); }

const char* cafe_status_name(cafe_status status) {
    switch (status) {
        case CAFE_OK: return "ok";
        case CAFE_E_INVALID_ARGUMENT: return "invalid_argument";
        case CAFE_E_IO: return "io";
        case CAFE_E_PARSE: return "parse";
        case CAFE_E_JUDGE: return "judge";
        case CAFE_E_JUDGE_FORMAT: return "judge_format";
        case CAFE_E_NOT_FOUND: return "not_found";
        case CAFE_E_INTERNAL: return "internal";
        case CAFE_E_THRESHOLD: return "threshold";
    }
    return "unknown";
}

void cafe_string_free(char* s) { std::free(s); }

cafe_status cafe_dataset_load(const char* path, cafe_dataset** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        auto ds = std::make_unique<cafe_dataset>();
        ds->samples = cafe::model::load_dataset(path);
        *out = ds.release();
        return CAFE_OK;
    });
}

size_t cafe_dataset_size(const cafe_dataset* ds) { return ds ? ds->samples.size() : 0; }

cafe_status cafe_dataset_sample_json(const cafe_dataset* ds, size_t index, char** out_json) {
    return guarded([&] {
        require(ds, "dataset");
        require(out_json, "out_json");
        if (index >= ds->samples.size()) throw Error(ErrorCode::invalid_argument, "sample index out of range");
        emit(out_json, cafe::model::to_json(ds->samples[index]).dump());
        return CAFE_OK;
    });
}

void cafe_dataset_free(cafe_dataset* ds) { delete ds; }

cafe_status cafe_trace_parse(const char* text, int strict, cafe_trace** out) {
    return guarded([&] {
        require(text, "text");
        require(out, "out");
        auto t = std::make_unique<cafe_trace>();
        t->result = cafe::trace::parse_mpar2(text, {strict != 0, cafe::trace::TokenCounter::whitespace});
        *out = t.release();
        return CAFE_OK;
    });
}

int cafe_trace_ok(const cafe_trace* t) { return t && t->result.ok() ? 1 : 0; }

size_t cafe_trace_step_count(const cafe_trace* t) {
    return t && t->result.ok() ? t->result.trace->steps.size() : 0;
}

size_t cafe_trace_token_len(const cafe_trace* t) { return t && t->result.ok() ? t->result.trace->token_len : 0; }

cafe_status cafe_trace_to_json(const cafe_trace* t, char** out_json) {
    return guarded([&] {
        require(t, "trace");
        require(out_json, "out_json");
        nlohmann::ordered_json j;
        j["ok"] = t->result.ok();
        j["diagnostics"] = nlohmann::ordered_json::array();
        for (const auto& d : t->result.diagnostics)
            j["diagnostics"].push_back({{"tag", d.tag}, {"offset", d.offset}, {"message", d.message}});
        if (t->result.ok()) {
            const auto& p = *t->result.trace;
            auto& events = j["perception"] = nlohmann::ordered_json::array();
            for (const auto& e : p.perception) {
                nlohmann::ordered_json ev;
                ev["start_s"] = e.start_s ? nlohmann::ordered_json(*e.start_s) : nullptr;
                ev["end_s"] = e.end_s ? nlohmann::ordered_json(*e.end_s) : nullptr;
                ev["description"] = e.description;
                events.push_back(ev);
            }
            auto& steps = j["steps"] = nlohmann::ordered_json::array();
            for (const auto& s : p.steps)
                steps.push_back({{"index", s.index}, {"sub_question", s.sub_question}, {"sub_answer", s.sub_answer}});
            j["review"] = {{"evidence_check", p.review.evidence_check}, {"logic_check", p.review.logic_check}};
            j["final_answer"] = p.final_answer;
            j["token_len"] = p.token_len;
        }
        emit(out_json, j.dump());
        return CAFE_OK;
    });
}

cafe_status cafe_trace_canonicalize(const cafe_trace* t, char** out_text) {
    return guarded([&] {
        require(t, "trace");
        require(out_text, "out_text");
        if (!t->result.ok()) throw Error(ErrorCode::invalid_argument, "trace did not parse");
        emit(out_text, cafe::trace::canonicalize(*t->result.trace));
        return CAFE_OK;
    });
}

void cafe_trace_free(cafe_trace* t) { delete t; }

cafe_status cafe_judge_open_mock(const char* policy, uint64_t seed, const char* fixture_path, cafe_judge** out) {
    return guarded([&] {
        require(policy, "policy");
        require(out, "out");
        cafe::app::JudgeConfig c;
        c.mock_policy = policy;
        c.seed = seed;
        if (fixture_path) c.fixture = fixture_path;
        auto j = std::make_unique<cafe_judge>();
        j->judge = cafe::app::make_judge(c);
        j->gateway = std::make_unique<cafe::judge::JudgeGateway>(j->judge);
        *out = j.release();
        return CAFE_OK;
    });
}

cafe_status cafe_judge_open_http(const char* base_url, const char* model, double timeout_s, int max_retries,
                                 cafe_judge** out) {
    return guarded([&] {
        require(out, "out");
        cafe::app::JudgeConfig c;
        if (base_url) c.endpoint = base_url;
        if (model) c.model = model;
        c.timeout_s = timeout_s;
        c.retries = max_retries;
        auto j = std::make_unique<cafe_judge>();
        j->judge = cafe::app::make_judge(c);
        j->gateway = std::make_unique<cafe::judge::JudgeGateway>(j->judge);
        *out = j.release();
        return CAFE_OK;
    });
}

cafe_status cafe_judge_complete(cafe_judge* j, const char* prompt, char** out_reply) {
    return guarded([&] {
        require(j, "judge");
        require(prompt, "prompt");
        require(out_reply, "out_reply");
        emit(out_reply, j->gateway->ask(prompt));
        return CAFE_OK;
    });
}

uint64_t cafe_judge_calls(const cafe_judge* j) {
    if (!j) return 0;
    if (auto* m = dynamic_cast<const cafe::judge::MockJudge*>(j->judge.get())) return m->calls();
    if (auto* h = dynamic_cast<const cafe::judge::HttpJudge*>(j->judge.get())) return h->attempts();
    return 0;
}

void cafe_judge_free(cafe_judge* j) { delete j; }

cafe_weights cafe_weights_default(void) {
    cafe::reward::RewardWeights w;
    return {w.theta, w.mu, w.alpha, w.beta, w.gamma, w.delta};
}

static cafe::reward::RewardWeights from_c(const cafe_weights* w) {
    if (!w) return {};
    return {w->theta, w->mu, w->alpha, w->beta, w->gamma, w->delta};
}

cafe_status cafe_combine(const cafe_components* scores, const cafe_weights* w, cafe_breakdown* out) {
    return guarded([&] {
        require(scores, "scores");
        require(out, "out");
        if (scores->n_steps > 0) require(scores->step_scores, "step_scores");
        cafe::reward::ComponentScores s;
        s.perception = scores->perception;
        if (scores->n_steps > 0) s.step_scores.assign(scores->step_scores, scores->step_scores + scores->n_steps);
        s.all_reason = scores->all_reason;
        s.review = scores->review;
        s.acc = scores->acc;
        s.format = scores->format;
        s.validate();
        auto weights = from_c(w);
        weights.validate();
        auto b = cafe::reward::combine(s, weights);
        *out = {b.r_perception, b.r_spr, b.r_rea, b.r_format, b.r_all};
        return CAFE_OK;
    });
}

cafe_status cafe_score_trace(const char* sample_json, const char* trace_text, cafe_judge* j, const cafe_weights* w,
                             int score_malformed, char** out_json) {
    return guarded([&] {
        require(sample_json, "sample_json");
        require(trace_text, "trace_text");
        require(j, "judge");
        require(out_json, "out_json");
        auto sample = cafe::model::sample_from_json(cafe::model::json::parse(sample_json));
        cafe::reward::ScoreOptions opts;
        opts.score_malformed = score_malformed != 0;
        auto b = cafe::reward::score_trace(sample, trace_text, *j->gateway, from_c(w), opts);
        emit(out_json, cafe::reward::to_json(b).dump());
        return CAFE_OK;
    });
}

cafe_status cafe_compute_metrics(const cafe_counts* c, cafe_metrics* out) {
    return guarded([&] {
        require(c, "counts");
        require(out, "out");
        auto m = cafe::metrics::compute_metrics({c->n_mat, c->n_hal, c->n_misuse, c->n_neu, c->n_miss});
        *out = {m.n_pred, m.n_tgt, or_nan(m.acc_per), or_nan(m.err_per), or_nan(m.err_use), or_nan(m.err_omit)};
        return CAFE_OK;
    });
}

cafe_status cafe_pearson(const double* xs, const double* ys, size_t n, double* r, double* p) {
    return guarded([&] {
        require(xs, "xs");
        require(ys, "ys");
        auto res = cafe::metrics::pearson({xs, xs + n}, {ys, ys + n});
        if (r) *r = res.r;
        if (p) *p = res.p;
        return CAFE_OK;
    });
}

cafe_status cafe_render_template(const char* name, const char* bindings_json, char** out_text) {
    return guarded([&] {
        require(name, "name");
        require(out_text, "out_text");
        json b = bindings_json && *bindings_json ? json::parse(bindings_json) : json::object();
        emit(out_text, cafe::app::cmd_render(name, b));
        return CAFE_OK;
    });
}

cafe_status cafe_cmd_extract(const char* options_json, char** out_summary_json) {
    return guarded([&] {
        Options o(options_json);
        auto b = batch_options(o);
        o.finish();
        return summary_status(cafe::app::cmd_extract(b), out_summary_json);
    });
}

cafe_status cafe_cmd_reward(const char* options_json, char** out_summary_json) {
    return guarded([&] {
        Options o(options_json);
        cafe::app::RewardOptions r;
        static_cast<cafe::app::BatchOptions&>(r) = batch_options(o);
        r.weights = cafe::reward::merge_weights({}, o.raw("weights"));
        r.scoring = score_options(o);
        o.finish();
        return summary_status(cafe::app::cmd_reward(r), out_summary_json);
    });
}

cafe_status cafe_cmd_eval(const char* options_json, char** out_summary_json) {
    return guarded([&] {
        Options o(options_json);
        cafe::app::EvalOptions e;
        e.extractions = o.path("extractions");
        e.traces = o.path("traces");
        e.dataset = o.path("dataset");
        e.out_prefix = o.path("out");
        e.bins.width = o.get<double>("bin_width", e.bins.width);
        e.bins.origin = o.get<double>("bin_origin", e.bins.origin);
        e.counter = token_counter(o);
        o.finish();
        auto report = cafe::app::cmd_eval(e);
        emit(out_summary_json, report.dump());
        return CAFE_OK;
    });
}

cafe_status cafe_cmd_filter_difficulty(const char* options_json, char** out_summary_json) {
    return guarded([&] {
        Options o(options_json);
        cafe::app::DifficultyOptions d{o.path("rollouts"), o.path("out")};
        o.finish();
        return summary_status(cafe::app::cmd_filter_difficulty(d), out_summary_json);
    });
}

cafe_status cafe_cmd_filter_qa(const char* options_json, char** out_summary_json) {
    return guarded([&] {
        Options o(options_json);
        cafe::app::QaFilterOptions q;
        q.dataset = o.path("dataset");
        q.out = o.path("out");
        q.judge = judge_config(o);
        q.max_flagged_frac = o.get<double>("max_flagged_frac", q.max_flagged_frac);
        o.finish();
        return summary_status(cafe::app::cmd_filter_qa(q), out_summary_json);
    });
}

cafe_status cafe_cmd_filter_cot(const char* options_json, char** out_summary_json) {
    return guarded([&] {
        Options o(options_json);
        cafe::app::CotFilterOptions c;
        c.scores = o.path("scores");
        c.out = o.path("out");
        c.thresholds.reasoning = o.get<double>("t_reason", c.thresholds.reasoning);
        c.thresholds.review = o.get<double>("t_review", c.thresholds.review);
        o.finish();
        return summary_status(cafe::app::cmd_filter_cot(c), out_summary_json);
    });
}

cafe_status cafe_cmd_gen_parse(const char* options_json, char** out_summary_json) {
    return guarded([&] {
        Options o(options_json);
        cafe::app::GenParseOptions g{o.path("replies"), o.path("out")};
        o.finish();
        return summary_status(cafe::app::cmd_gen_parse(g), out_summary_json);
    });
}

cafe_status cafe_cmd_balance(const char* options_json, char** out_summary_json) {
    return guarded([&] {
        Options o(options_json);
        cafe::app::BalanceCmdOptions b;
        b.pool = o.path("pool");
        b.out = o.path("out");
        if (!o.has("target")) throw Error(ErrorCode::invalid_argument, "missing option target");
        b.balance.target_total = o.get<std::size_t>("target", 0);
        b.balance.aspects = o.get<std::vector<std::string>>("aspects", {});
        b.balance.duration_edges = o.get<std::vector<double>>("edges", b.balance.duration_edges);
        b.balance.seed = o.get<std::uint64_t>("seed", 0);
        o.finish();
        return summary_status(cafe::app::cmd_balance(b), out_summary_json);
    });
}

cafe_status cafe_service_start(const char* options_json, cafe_service** out, int* out_port) {
    return guarded([&] {
        require(out, "out");
        Options o(options_json);
        std::string host = o.get<std::string>("host", "127.0.0.1");
        int port = o.get<int>("port", 8080);
        cafe::service::ServiceConfig cfg;
        if (o.has("dataset")) cfg.dataset = o.get<std::string>("dataset", "");
        auto jc = judge_config(o);
        cfg.judge = cafe::app::make_judge(jc);
        cfg.gateway = cafe::app::gateway_options(jc);
        cfg.weights = cafe::reward::merge_weights({}, o.raw("weights"));
        cfg.scoring = score_options(o);
        o.finish();

        auto s = std::make_unique<cafe_service>();
        s->service = std::make_unique<cafe::service::RewardService>(std::move(cfg));
        int bound = s->service->bind(host, port);
        s->worker = std::thread([svc = s->service.get()] { svc->listen(); });
        s->service->wait_until_ready();
        if (out_port) *out_port = bound;
        *out = s.release();
        return CAFE_OK;
    });
}

cafe_status cafe_service_stop(cafe_service* s) {
    return guarded([&] {
        require(s, "service");
        s->service->stop();
        if (s->worker.joinable()) s->worker.join();
        return CAFE_OK;
    });
}

void cafe_service_free(cafe_service* s) {
    if (!s) return;
    cafe_service_stop(s);
    delete s;
}

}  // extern "C"
