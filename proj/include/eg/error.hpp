#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace eg {

// Base of every error the toolkit throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input row. `line` is 1-based and counts physical lines of the file.
class ParseError : public Error {
public:
    ParseError(std::string file, std::size_t line, const std::string& what)
        : Error(file + ":" + std::to_string(line) + ": " + what), file_(std::move(file)), line_(line) {}
    const std::string& file() const noexcept { return file_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string file_;
    std::size_t line_;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Non-retryable provider failure; carries the provider payload when there is one.
class AdapterError : public Error {
public:
    AdapterError(const std::string& what, int status = 0, std::string payload = {})
        : Error(what), status_(status), payload_(std::move(payload)) {}
    int status() const noexcept { return status_; }
    const std::string& payload() const noexcept { return payload_; }

private:
    int status_;
    std::string payload_;
};

class TimeoutError : public AdapterError {
public:
    using AdapterError::AdapterError;
};

class ReplayMissError : public AdapterError {
public:
    explicit ReplayMissError(std::string hash)
        : AdapterError("unrecorded exchange: " + hash), hash_(std::move(hash)) {}
    const std::string& hash() const noexcept { return hash_; }

private:
    std::string hash_;
};

// A model reply could not be interpreted after all retries. Keeps every raw reply.
class ReplyParseError : public Error {
public:
    ReplyParseError(const std::string& what, std::vector<std::string> transcript)
        : Error(what), transcript_(std::move(transcript)) {}
    const std::vector<std::string>& transcript() const noexcept { return transcript_; }

private:
    std::vector<std::string> transcript_;
};

class FitError : public Error {
public:
    FitError(const std::string& what, std::vector<double> nll_trace = {})
        : Error(what), trace_(std::move(nll_trace)) {}
    const std::vector<double>& nll_trace() const noexcept { return trace_; }

private:
    std::vector<double> trace_;
};

}  // namespace eg
