#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "cafe/judge.hpp"
#include "httplib.h"

namespace cafe::judge {

HttpJudge::HttpJudge(JudgeEndpoint endpoint) : endpoint_(std::move(endpoint)) {
    endpoint_.validate();
    const std::string& url = endpoint_.base_url;
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw Error(ErrorCode::invalid_argument, "judge base_url needs a scheme: " + url);
    std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https")
        throw Error(ErrorCode::invalid_argument, "unsupported judge URL scheme: " + scheme);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (scheme == "https")
        throw Error(ErrorCode::invalid_argument, "https judge endpoints need an OpenSSL build");
#endif
    auto host_begin = scheme_end + 3;
    auto path_begin = url.find('/', host_begin);
    std::string host = url.substr(host_begin, path_begin == std::string::npos
                                                  ? std::string::npos
                                                  : path_begin - host_begin);
    if (host.empty()) throw Error(ErrorCode::invalid_argument, "judge base_url has no host");
    scheme_host_port_ = scheme + "://" + host;
    if (path_begin != std::string::npos) path_prefix_ = url.substr(path_begin);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string HttpJudge::describe() const { return "http:" + endpoint_.model_name; }

nlohmann::json HttpJudge::request_body(const JudgeEndpoint& endpoint, const std::string& prompt) {
    return {{"model", endpoint.model_name},
            {"temperature", endpoint.temperature},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
}

std::string HttpJudge::reply_content(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error&) {
        throw JudgeError("judge reply is not JSON");
    }
    const nlohmann::json* content = nullptr;
    if (j.is_object() && j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
        const auto& c = j["choices"][0];
        if (c.contains("message") && c["message"].contains("content"))
            content = &c["message"]["content"];
        else if (c.contains("text"))
            content = &c["text"];
    }
    if (!content || !content->is_string() || content->get<std::string>().empty())
        throw JudgeError("judge reply has no content");
    return content->get<std::string>();
}

std::string HttpJudge::complete(const std::string& prompt) {
    const std::string body = request_body(endpoint_, prompt).dump();
    const std::string path = path_prefix_ + "/chat/completions";
    httplib::Headers headers;
    if (!endpoint_.auth_token.empty())
        headers.emplace("Authorization", "Bearer " + endpoint_.auth_token);

    auto whole = static_cast<time_t>(endpoint_.timeout_s);
    auto micros = static_cast<time_t>((endpoint_.timeout_s - static_cast<double>(whole)) * 1e6);

    std::string last_error;
    const int attempts = endpoint_.max_retries + 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0) {
            double wait = std::min(endpoint_.backoff_max_s,
                                   endpoint_.backoff_base_s * std::pow(2.0, attempt - 1));
            std::this_thread::sleep_for(std::chrono::duration<double>(wait));
        }
        ++attempts_;
        httplib::Client client(scheme_host_port_);
        client.set_connection_timeout(whole, micros);
        client.set_read_timeout(whole, micros);
        client.set_write_timeout(whole, micros);
        auto res = client.Post(path, headers, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP status " + std::to_string(res->status);
            continue;
        }
        if (res->status < 200 || res->status >= 300)
            throw JudgeError("judge HTTP status " + std::to_string(res->status));
        return reply_content(res->body);
    }
    throw JudgeError("judge retries exhausted after " + std::to_string(attempts) +
                     " attempts: " + last_error);
}

}  // namespace cafe::judge
