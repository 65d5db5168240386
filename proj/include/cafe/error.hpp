#pragma once

#include <stdexcept>
#include <string>

namespace cafe {

enum class ErrorCode {
    invalid_argument,
    io,
    parse,
    judge,         // transport failure, retries exhausted, fixture miss
    judge_format,  // judge replied but the reply does not follow the grammar
    not_found,
    internal,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Judge transport or availability failure. Not retried by the format re-ask logic.
class JudgeError : public Error {
public:
    explicit JudgeError(const std::string& message) : Error(ErrorCode::judge, message) {}
};

/// The judge answered, but the reply could not be parsed. Triggers one re-ask.
class JudgeFormatError : public Error {
public:
    explicit JudgeFormatError(const std::string& message)
        : Error(ErrorCode::judge_format, message) {}
};

}  // namespace cafe
