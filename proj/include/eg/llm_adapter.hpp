#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "eg/error.hpp"

namespace eg::llm {

struct ChatMessage {
    std::string role;  // system | user | assistant
    std::string content;
};

struct ChatParams {
    int max_tokens = 750;
    double temperature = 0.0;
    double top_p = 1.0;
    int n = 1;
};

struct ChatRequest {
    std::string model_name;
    std::vector<ChatMessage> messages;
    ChatParams params;

    // Throws ValidationError: empty model, no messages, first role not system/user,
    // unknown role, or params out of range.
    void validate() const;
    // Canonical form used for hashing and the replay store.
    nlohmann::json to_json() const;
    static ChatRequest from_json(const nlohmann::json& j);
    // Hex SHA-256 of the canonical JSON; stable across runs and platforms.
    std::string hash() const;
};

struct ChatExchange {
    ChatRequest request;
    std::string reply_text;
    std::chrono::milliseconds latency{0};
    int attempt = 1;
    std::string provider;  // "replay" or the API base URL
    int status = 200;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

// Connection-level failure (DNS, reset, timeout). Always retryable.
class TransportFailure : public Error {
public:
    using Error::Error;
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse post(const std::string& url, const std::string& body,
                              const std::vector<std::pair<std::string, std::string>>& headers) = 0;
};

std::unique_ptr<Transport> make_curl_transport(std::chrono::milliseconds timeout = std::chrono::seconds(120));

enum class Mode { Live, Record, Replay };
Mode parse_mode(const std::string& s);
std::string mode_name(Mode m);

struct AdapterConfig {
    Mode mode = Mode::Live;
    std::filesystem::path store;  // replay store (Record writes, Replay reads)
    std::string api_base;         // e.g. https://host/v1 ; "/chat/completions" is appended
    std::string api_key;
    int max_attempts = 5;
    std::chrono::milliseconds backoff_base{500};
    std::chrono::milliseconds backoff_cap{20000};
    std::size_t max_inflight = 4;
    std::optional<std::filesystem::path> audit_log;
    std::uint64_t jitter_seed = 0;

    // Reads EG_API_BASE and EG_API_KEY.
    void apply_environment();
};

// Request-hash -> replies, in recording order. A hash recorded k times serves its
// k replies in sequence, which is how retry transcripts replay faithfully.
class ReplayStore {
public:
    ReplayStore() = default;
    static ReplayStore load(const std::filesystem::path& path);

    // Next unserved reply for `hash`, or nullopt when none remain.
    std::optional<std::string> next(const std::string& hash);
    void add(const std::string& hash, std::string reply);
    std::size_t size() const { return total_; }

    // One JSONL line: {"hash","request","reply_text"}.
    static std::string entry_line(const ChatRequest& request, const std::string& hash, const std::string& reply);

private:
    std::map<std::string, std::vector<std::string>> replies_;
    std::map<std::string, std::size_t> served_;
    std::size_t total_ = 0;
};

class ChatAdapter {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    // Throws ConfigError when Live/Record lacks a base URL or credential, or
    // Replay lacks a readable store. No request is sent before that check.
    explicit ChatAdapter(AdapterConfig config, std::unique_ptr<Transport> transport = nullptr,
                         Sleeper sleeper = {});
    ChatAdapter(const ChatAdapter&) = delete;
    ChatAdapter& operator=(const ChatAdapter&) = delete;

    // Blocking. Returns the first choice's text. Retries retryable failures with
    // exponential backoff and jitter; every attempt is written to the audit log.
    ChatExchange send_chat(const ChatRequest& request);

    const AdapterConfig& config() const { return config_; }
    // Requests that went over the network (attempts, including failed ones).
    std::size_t live_requests() const { return live_requests_.load(); }
    std::size_t audit_lines() const { return audit_lines_.load(); }
    std::size_t replayed() const { return replayed_.load(); }

private:
    ChatExchange send_live(const ChatRequest& request, const std::string& hash);
    void audit(const nlohmann::json& line);
    std::chrono::milliseconds backoff_delay(int attempt);

    AdapterConfig config_;
    std::unique_ptr<Transport> transport_;
    Sleeper sleeper_;
    ReplayStore store_;

    std::mutex store_mutex_;
    std::mutex audit_mutex_;
    std::mutex jitter_mutex_;
    std::uint64_t jitter_state_;

    std::mutex slots_mutex_;
    std::condition_variable slots_cv_;
    std::size_t in_flight_ = 0;

    std::atomic<std::size_t> live_requests_{0};
    std::atomic<std::size_t> audit_lines_{0};
    std::atomic<std::size_t> replayed_{0};
};

}  // namespace eg::llm
