#pragma once

#include <atomic>
#include <chrono>
#include <deque>
#include <functional>
#include <mutex>
#include <string>
#include <thread>

#include "cafe/judge.hpp"

namespace testing {

// Replies computed per prompt; a queue of canned replies takes precedence.
class ScriptedJudge final : public cafe::judge::Judge {
public:
    using Fn = std::function<std::string(const std::string&)>;

    explicit ScriptedJudge(Fn fn = {}) : fn_(std::move(fn)) {}

    void push(std::string reply) {
        std::lock_guard lock(mutex_);
        queue_.push_back(std::move(reply));
    }

    std::string complete(const std::string& prompt) override {
        ++calls_;
        {
            std::lock_guard lock(mutex_);
            prompts_.push_back(prompt);
            if (!queue_.empty()) {
                auto r = queue_.front();
                queue_.pop_front();
                return r;
            }
        }
        if (!fn_) throw cafe::JudgeError("no scripted reply");
        return fn_(prompt);
    }

    std::string describe() const override { return "scripted"; }
    bool is_mock() const override { return true; }

    int calls() const { return calls_.load(); }
    std::vector<std::string> prompts() const {
        std::lock_guard lock(mutex_);
        return prompts_;
    }

private:
    Fn fn_;
    std::deque<std::string> queue_;
    std::vector<std::string> prompts_;
    mutable std::mutex mutex_;
    std::atomic<int> calls_{0};
};

inline std::shared_ptr<ScriptedJudge> constant_judge(std::string reply) {
    return std::make_shared<ScriptedJudge>([reply](const std::string&) { return reply; });
}

}  // namespace testing
