#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "cafe/judge.hpp"
#include "cafe/model.hpp"
#include "cafe/reward.hpp"

namespace cafe::service {

struct ServiceConfig {
    std::optional<std::filesystem::path> dataset;
    std::shared_ptr<judge::Judge> judge;
    judge::GatewayOptions gateway;
    reward::RewardWeights weights;
    reward::ScoreOptions scoring;
};

struct Response {
    int status = 200;
    std::string body;  // JSON
};

/// Request handling for the reward service, independent of the transport.
class RewardService {
public:
    explicit RewardService(ServiceConfig config);
    ~RewardService();

    Response reward(const std::string& body);
    Response extract(const std::string& body);
    Response healthz() const;

    /// Binds `host:port` (port 0 picks a free port) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop() is called. Requires a successful bind().
    void listen();
    /// Blocks until listen() is accepting connections.
    void wait_until_ready() const;
    void stop();

    judge::JudgeGateway& gateway() { return gateway_; }

private:
    struct Request;
    Request parse_request(const std::string& body, bool allow_weights) const;

    ServiceConfig config_;
    std::map<std::string, model::AudioQASample> samples_;
    judge::JudgeGateway gateway_;
    struct Server;
    std::unique_ptr<Server> server_;
};

}  // namespace cafe::service
