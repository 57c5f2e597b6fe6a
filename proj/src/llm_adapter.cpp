#include "eg/llm_adapter.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "eg/io.hpp"
#include "eg/rng.hpp"

namespace eg::llm {

void ChatRequest::validate() const {
    if (model_name.empty()) throw ValidationError("chat request has no model name");
    if (messages.empty()) throw ValidationError("chat request has no messages");
    if (messages.front().role != "system" && messages.front().role != "user") {
        throw ValidationError("first chat message must be system or user");
    }
    for (const auto& m : messages) {
        if (m.role != "system" && m.role != "user" && m.role != "assistant") {
            throw ValidationError("unknown chat role '" + m.role + "'");
        }
    }
    if (params.max_tokens <= 0) throw ValidationError("max_tokens must be positive");
    if (!(params.temperature >= 0.0)) throw ValidationError("temperature must be non-negative");
    if (!(params.top_p > 0.0 && params.top_p <= 1.0)) throw ValidationError("top_p must lie in (0,1]");
    if (params.n <= 0) throw ValidationError("n must be positive");
}

nlohmann::json ChatRequest::to_json() const {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    return {{"model", model_name},
            {"messages", std::move(msgs)},
            {"params",
             {{"max_tokens", params.max_tokens},
              {"temperature", params.temperature},
              {"top_p", params.top_p},
              {"n", params.n}}}};
}

ChatRequest ChatRequest::from_json(const nlohmann::json& j) {
    ChatRequest r;
    r.model_name = j.at("model").get<std::string>();
    for (const auto& m : j.at("messages")) {
        r.messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
    }
    const auto& p = j.at("params");
    r.params.max_tokens = p.at("max_tokens").get<int>();
    r.params.temperature = p.at("temperature").get<double>();
    r.params.top_p = p.at("top_p").get<double>();
    r.params.n = p.at("n").get<int>();
    return r;
}

std::string ChatRequest::hash() const {
    const auto canonical = to_json().dump();
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(canonical.data(), canonical.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 failed");
    }
    std::string hex;
    hex.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

Mode parse_mode(const std::string& s) {
    if (s == "live") return Mode::Live;
    if (s == "record") return Mode::Record;
    if (s == "replay") return Mode::Replay;
    throw ConfigError("unknown adapter mode '" + s + "' (live|record|replay)");
}

std::string mode_name(Mode m) {
    switch (m) {
        case Mode::Live: return "live";
        case Mode::Record: return "record";
        case Mode::Replay: return "replay";
    }
    return "live";
}

void AdapterConfig::apply_environment() {
    if (const char* base = std::getenv("EG_API_BASE"); base && *base) api_base = base;
    if (const char* key = std::getenv("EG_API_KEY"); key && *key) api_key = key;
}

ReplayStore ReplayStore::load(const std::filesystem::path& path) {
    ReplayStore store;
    for (const auto& rec : io::read_jsonl(path)) {
        if (!rec.value.contains("hash") || !rec.value.contains("reply_text")) {
            throw ParseError(path.string(), rec.line, "replay entry needs hash and reply_text");
        }
        store.add(rec.value.at("hash").get<std::string>(), rec.value.at("reply_text").get<std::string>());
    }
    return store;
}

std::optional<std::string> ReplayStore::next(const std::string& hash) {
    const auto it = replies_.find(hash);
    if (it == replies_.end()) return std::nullopt;
    auto& k = served_[hash];
    if (k >= it->second.size()) return std::nullopt;
    return it->second[k++];
}

void ReplayStore::add(const std::string& hash, std::string reply) {
    replies_[hash].push_back(std::move(reply));
    ++total_;
}

std::string ReplayStore::entry_line(const ChatRequest& request, const std::string& hash, const std::string& reply) {
    return nlohmann::json{{"hash", hash}, {"request", request.to_json()}, {"reply_text", reply}}.dump() + "\n";
}

ChatAdapter::ChatAdapter(AdapterConfig config, std::unique_ptr<Transport> transport, Sleeper sleeper)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)),
      jitter_state_(splitmix64(config_.jitter_seed)) {
    if (config_.max_inflight == 0) throw ConfigError("max_inflight must be positive");
    if (config_.max_attempts <= 0) throw ConfigError("max_attempts must be positive");
    if (config_.mode == Mode::Replay) {
        if (config_.store.empty()) throw ConfigError("replay mode needs a store path");
        if (!std::filesystem::exists(config_.store)) {
            throw ConfigError("replay store " + config_.store.string() + " does not exist");
        }
        store_ = ReplayStore::load(config_.store);
    } else {
        if (config_.api_base.empty()) throw ConfigError("EG_API_BASE is not set");
        if (config_.api_key.empty()) throw ConfigError("EG_API_KEY is not set");
        if (config_.mode == Mode::Record && config_.store.empty()) {
            throw ConfigError("record mode needs a store path");
        }
        if (!transport_) transport_ = make_curl_transport();
    }
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

namespace {

// Bounds concurrent in-flight requests; released on scope exit.
class SlotGuard {
public:
    SlotGuard(std::mutex& m, std::condition_variable& cv, std::size_t& in_flight, std::size_t limit)
        : m_(m), cv_(cv), in_flight_(in_flight) {
        std::unique_lock lock(m_);
        cv_.wait(lock, [&] { return in_flight_ < limit; });
        ++in_flight_;
    }
    ~SlotGuard() {
        {
            std::lock_guard lock(m_);
            --in_flight_;
        }
        cv_.notify_one();
    }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;

private:
    std::mutex& m_;
    std::condition_variable& cv_;
    std::size_t& in_flight_;
};

bool retryable_status(int status) { return status == 408 || status == 409 || status == 429 || status >= 500; }

}  // namespace

ChatExchange ChatAdapter::send_chat(const ChatRequest& request) {
    request.validate();
    const auto hash = request.hash();

    if (config_.mode == Mode::Replay) {
        std::optional<std::string> reply;
        {
            std::lock_guard lock(store_mutex_);
            reply = store_.next(hash);
        }
        if (!reply) {
            audit({{"hash", hash}, {"attempt", 1}, {"provider", "replay"}, {"status", "miss"}});
            throw ReplayMissError(hash);
        }
        ++replayed_;
        ChatExchange ex{request, *reply, std::chrono::milliseconds(0), 1, "replay", 200};
        audit({{"hash", hash},
               {"model", request.model_name},
               {"attempt", 1},
               {"provider", "replay"},
               {"status", 200},
               {"latency_ms", 0},
               {"reply_text", *reply}});
        return ex;
    }

    SlotGuard slot(slots_mutex_, slots_cv_, in_flight_, config_.max_inflight);
    auto ex = send_live(request, hash);
    if (config_.mode == Mode::Record) {
        std::lock_guard lock(store_mutex_);
        io::append_text(config_.store, ReplayStore::entry_line(request, hash, ex.reply_text));
        store_.add(hash, ex.reply_text);
    }
    return ex;
}

std::chrono::milliseconds ChatAdapter::backoff_delay(int attempt) {
    const double base = static_cast<double>(config_.backoff_base.count());
    const double cap = static_cast<double>(config_.backoff_cap.count());
    const double exp_delay = std::min(cap, base * std::pow(2.0, attempt - 1));
    double u;
    {
        std::lock_guard lock(jitter_mutex_);
        jitter_state_ = splitmix64(jitter_state_);
        u = static_cast<double>(jitter_state_ >> 11) * 0x1.0p-53;
    }
    return std::chrono::milliseconds(static_cast<long long>(exp_delay * (0.5 + 0.5 * u)));
}

ChatExchange ChatAdapter::send_live(const ChatRequest& request, const std::string& hash) {
    nlohmann::json body = {{"model", request.model_name},
                           {"messages", request.to_json().at("messages")},
                           {"max_tokens", request.params.max_tokens},
                           {"temperature", request.params.temperature},
                           {"top_p", request.params.top_p},
                           {"n", request.params.n}};
    const auto payload = body.dump();
    const auto url = config_.api_base + "/chat/completions";
    const std::vector<std::pair<std::string, std::string>> headers = {
        {"Content-Type", "application/json"}, {"Authorization", "Bearer " + config_.api_key}};

    std::string last_error;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
        const auto start = std::chrono::steady_clock::now();
        nlohmann::json line = {{"hash", hash}, {"model", request.model_name}, {"attempt", attempt},
                               {"provider", config_.api_base}, {"request", request.to_json()}};
        HttpResponse resp;
        bool transport_ok = true;
        ++live_requests_;
        try {
            resp = transport_->post(url, payload, headers);
        } catch (const TransportFailure& e) {
            transport_ok = false;
            last_error = e.what();
        }
        const auto latency =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
        line["latency_ms"] = latency.count();

        if (!transport_ok) {
            line["status"] = "transport-error";
            line["error"] = last_error;
            audit(line);
        } else if (resp.status >= 200 && resp.status < 300) {
            std::string reply;
            try {
                const auto j = nlohmann::json::parse(resp.body);
                reply = j.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                line["status"] = resp.status;
                line["error"] = "malformed response body";
                audit(line);
                throw AdapterError(std::string("malformed provider response: ") + e.what(), resp.status, resp.body);
            }
            line["status"] = resp.status;
            line["reply_text"] = reply;
            audit(line);
            return {request, reply, latency, attempt, config_.api_base, resp.status};
        } else {
            line["status"] = resp.status;
            line["error"] = resp.body;
            audit(line);
            if (!retryable_status(resp.status)) {
                throw AdapterError(fmt::format("provider returned status {}", resp.status), resp.status, resp.body);
            }
            last_error = fmt::format("status {}: {}", resp.status, resp.body);
        }
        if (attempt < config_.max_attempts) sleeper_(backoff_delay(attempt));
    }
    throw TimeoutError(fmt::format("retry budget of {} attempts exhausted; last error: {}", config_.max_attempts,
                                   last_error));
}

void ChatAdapter::audit(const nlohmann::json& line) {
    std::lock_guard lock(audit_mutex_);
    if (config_.audit_log) io::append_text(*config_.audit_log, line.dump() + "\n");
    ++audit_lines_;
}

}  // namespace eg::llm
