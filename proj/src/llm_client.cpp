#include "demandforge/llm_client.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <istream>

#include "httplib.h"
#include "json.hpp"

#include "demandforge/error.hpp"

namespace demandforge {

MockLlmClient::MockLlmClient(std::vector<std::string> completions) : completions_(std::move(completions)) {}

MockLlmClient MockLlmClient::from_script(std::istream& in) {
    std::vector<std::string> completions;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto doc = nlohmann::json::parse(line);
            const auto& c = doc.at("completion");
            completions.push_back(c.is_string() ? c.get<std::string>() : c.dump());
        } catch (const nlohmann::json::exception& e) {
            throw Error("schema", "mock script line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return MockLlmClient(std::move(completions));
}

MockLlmClient MockLlmClient::from_script_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("file", "cannot open mock script '" + path + "'");
    return from_script(in);
}

std::string MockLlmClient::compile(const std::string& prompt) {
    prompts_.push_back(prompt);
    if (next_ >= completions_.size()) throw Error("script_exhausted", "mock LLM script has no completions left");
    return completions_[next_++];
}

HttpLlmClient::HttpLlmClient(std::string url, std::string api_key, double timeout_s)
    : api_key_(std::move(api_key)), timeout_s_(timeout_s) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error("config", "LLM URL must include a scheme: '" + url + "'");
    const auto path_start = url.find('/', scheme_end + 3);
    scheme_host_ = url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

std::unique_ptr<HttpLlmClient> HttpLlmClient::from_environment(double timeout_s) {
    const char* url = std::getenv("DEMANDFORGE_LLM_URL");
    if (!url || !*url) return nullptr;
    const char* key = std::getenv("DEMANDFORGE_LLM_KEY");
    return std::make_unique<HttpLlmClient>(url, key ? key : "", timeout_s);
}

std::string HttpLlmClient::request(const std::string& purpose, const std::string& prompt) {
    httplib::Client client(scheme_host_);
    const auto sec = static_cast<time_t>(timeout_s_);
    const auto usec = static_cast<time_t>((timeout_s_ - static_cast<double>(sec)) * 1e6);
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    const nlohmann::json body = {{"purpose", purpose}, {"prompt", prompt}};
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) {
        if (res.error() == httplib::Error::Read || res.error() == httplib::Error::Write ||
            res.error() == httplib::Error::ConnectionTimeout)
            throw TimeoutError("LLM request timed out (" + httplib::to_string(res.error()) + ")");
        throw Error("llm_http", "LLM request failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200)
        throw Error("llm_http", "LLM endpoint returned HTTP " + std::to_string(res->status));
    try {
        return nlohmann::json::parse(res->body).at("completion").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error("llm_http", std::string("LLM response is not {\"completion\": string}: ") + e.what());
    }
}

std::string HttpLlmClient::compile(const std::string& prompt) { return request("compile", prompt); }

std::optional<bool> HttpLlmClient::reflect(const std::string& prompt) {
    std::string reply = request("reflect", prompt);
    std::transform(reply.begin(), reply.end(), reply.begin(), [](unsigned char c) { return std::tolower(c); });
    const auto start = reply.find_first_not_of(" \t\r\n\"'`*");
    if (start == std::string::npos) return std::nullopt;
    const auto word = reply.substr(start, 5);
    if (word.rfind("yes", 0) == 0 || word.rfind("true", 0) == 0) return true;
    if (word.rfind("no", 0) == 0 || word.rfind("false", 0) == 0) return false;
    return std::nullopt;
}

}  // namespace demandforge
