#include "cafe/service.hpp"

#include "cafe/app.hpp"
#include "cafe/error.hpp"
#include "cafe/trace.hpp"
#include "httplib.h"

namespace cafe::service {

using ojson = nlohmann::ordered_json;

struct RewardService::Request {
    model::AudioQASample sample;
    model::TraceRecord trace;
    reward::RewardWeights weights;
};

struct RewardService::Server {
    httplib::Server http;
};

namespace {

Response error_response(int status, const std::string& message) {
    return {status, ojson{{"error", message}}.dump()};
}

int status_for(const Error& e) {
    switch (e.code()) {
        case ErrorCode::not_found: return 422;
        case ErrorCode::judge:
        case ErrorCode::judge_format: return 503;
        case ErrorCode::internal:
        case ErrorCode::io: return 500;
        default: return 400;
    }
}

template <class Fn>
Response guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        return error_response(status_for(e), e.what());
    } catch (const std::exception& e) {
        return error_response(500, e.what());
    }
}

}  // namespace

RewardService::RewardService(ServiceConfig config)
    : config_(std::move(config)), gateway_(config_.judge, config_.gateway) {
    config_.weights.validate();
    if (config_.dataset)
        for (auto& s : model::load_dataset(*config_.dataset)) {
            auto id = s.id;
            samples_.emplace(std::move(id), std::move(s));
        }
}

RewardService::~RewardService() { stop(); }

RewardService::Request RewardService::parse_request(const std::string& body, bool allow_weights) const {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error&) {
        throw Error(ErrorCode::invalid_argument, "request body is not valid JSON");
    }
    if (!j.is_object()) throw Error(ErrorCode::invalid_argument, "request body must be a JSON object");
    bool has_sample = j.contains("sample"), has_id = j.contains("sample_id");
    if (has_sample == has_id)
        throw Error(ErrorCode::invalid_argument, "exactly one of sample or sample_id is required");
    auto trace = j.find("trace");
    if (trace == j.end() || !trace->is_string())
        throw Error(ErrorCode::invalid_argument, "trace must be a string");

    Request r;
    if (has_sample) {
        try {
            r.sample = model::sample_from_json(model::json(j["sample"]));
        } catch (const Error& e) {
            throw Error(ErrorCode::invalid_argument, std::string("sample: ") + e.what());
        }
    } else {
        if (!j["sample_id"].is_string()) throw Error(ErrorCode::invalid_argument, "sample_id must be a string");
        auto id = j["sample_id"].get<std::string>();
        auto it = samples_.find(id);
        if (it == samples_.end()) throw Error(ErrorCode::not_found, "unknown sample_id " + id);
        r.sample = it->second;
    }
    r.trace.sample_id = r.sample.id;
    r.trace.raw_text = trace->get<std::string>();
    if (auto m = j.find("model_id"); m != j.end()) {
        if (!m->is_string()) throw Error(ErrorCode::invalid_argument, "model_id must be a string");
        r.trace.model_id = m->get<std::string>();
    }
    if (auto ri = j.find("run_index"); ri != j.end()) {
        if (!ri->is_number_integer() || ri->get<std::int64_t>() < 0)
            throw Error(ErrorCode::invalid_argument, "run_index must be an integer >= 0");
        r.trace.run_index = ri->get<std::int64_t>();
    }
    r.weights = config_.weights;
    if (auto w = j.find("weights"); w != j.end()) {
        if (!allow_weights) throw Error(ErrorCode::invalid_argument, "weights not accepted here");
        r.weights = reward::merge_weights(config_.weights, *w);
    }
    return r;
}

Response RewardService::reward(const std::string& body) {
    return guarded([&] {
        auto req = parse_request(body, true);
        auto b = reward::score_trace(req.sample, req.trace.raw_text, gateway_, req.weights, config_.scoring);
        if (app::judge_flagged(b.flags)) {
            ojson j{{"error", "judge unavailable"}, {"flags", b.flags}, {"breakdown", reward::to_json(b)}};
            return Response{503, j.dump()};
        }
        return Response{200, reward::to_json(b).dump()};
    });
}

Response RewardService::extract(const std::string& body) {
    return guarded([&] {
        auto req = parse_request(body, false);
        auto parsed = trace::parse_mpar2(req.trace.raw_text, {false, config_.scoring.counter});
        auto e = gateway_.ask_extraction(app::extraction_prompt(req.sample, *parsed.trace));
        return Response{200, judge::to_json(e).dump()};
    });
}

Response RewardService::healthz() const {
    ojson j{{"version", app::version()}, {"judge", gateway_.judge().is_mock() ? "mock" : "ok"}};
    return {200, j.dump()};
}

int RewardService::bind(const std::string& host, int port) {
    if (!server_) {
        server_ = std::make_unique<Server>();
        auto reply = [](httplib::Response& res, const Response& r) {
            res.status = r.status;
            res.set_content(r.body, "application/json");
        };
        server_->http.Post("/v1/reward", [this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, reward(req.body));
        });
        server_->http.Post("/v1/extract", [this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, extract(req.body));
        });
        server_->http.Get("/healthz", [this, reply](const httplib::Request&, httplib::Response& res) {
            reply(res, healthz());
        });
    }
    int bound = port == 0 ? server_->http.bind_to_any_port(host) : (server_->http.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorCode::io, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void RewardService::listen() {
    if (!server_) throw Error(ErrorCode::invalid_argument, "service is not bound");
    server_->http.listen_after_bind();
}

void RewardService::wait_until_ready() const {
    if (server_) server_->http.wait_until_ready();
}

void RewardService::stop() {
    if (server_) server_->http.stop();
}

}  // namespace cafe::service
