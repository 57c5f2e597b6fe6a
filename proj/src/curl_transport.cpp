#include <curl/curl.h>

#include <mutex>

#include "eg/llm_adapter.hpp"

namespace eg::llm {
namespace {

std::size_t collect(char* data, std::size_t size, std::size_t count, void* user) {
    static_cast<std::string*>(user)->append(data, size * count);
    return size * count;
}

class CurlTransport final : public Transport {
public:
    explicit CurlTransport(std::chrono::milliseconds timeout) : timeout_(timeout) {
        static std::once_flag init;
        std::call_once(init, [] { curl_global_init(CURL_GLOBAL_DEFAULT); });
    }

    HttpResponse post(const std::string& url, const std::string& body,
                      const std::vector<std::pair<std::string, std::string>>& headers) override {
        CURL* curl = curl_easy_init();
        if (!curl) throw TransportFailure("curl_easy_init failed");
        curl_slist* list = nullptr;
        for (const auto& [k, v] : headers) list = curl_slist_append(list, (k + ": " + v).c_str());

        HttpResponse resp;
        curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
        curl_easy_setopt(curl, CURLOPT_POST, 1L);
        curl_easy_setopt(curl, CURLOPT_POSTFIELDS, body.c_str());
        curl_easy_setopt(curl, CURLOPT_POSTFIELDSIZE, static_cast<long>(body.size()));
        curl_easy_setopt(curl, CURLOPT_HTTPHEADER, list);
        curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, collect);
        curl_easy_setopt(curl, CURLOPT_WRITEDATA, &resp.body);
        curl_easy_setopt(curl, CURLOPT_TIMEOUT_MS, static_cast<long>(timeout_.count()));
        curl_easy_setopt(curl, CURLOPT_NOSIGNAL, 1L);

        const CURLcode rc = curl_easy_perform(curl);
        long status = 0;
        curl_easy_getinfo(curl, CURLINFO_RESPONSE_CODE, &status);
        curl_slist_free_all(list);
        curl_easy_cleanup(curl);
        if (rc != CURLE_OK) throw TransportFailure(curl_easy_strerror(rc));
        resp.status = static_cast<int>(status);
        return resp;
    }

private:
    std::chrono::milliseconds timeout_;
};

}  // namespace

std::unique_ptr<Transport> make_curl_transport(std::chrono::milliseconds timeout) {
    return std::make_unique<CurlTransport>(timeout);
}

}  // namespace eg::llm
