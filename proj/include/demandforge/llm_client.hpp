#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace demandforge {

/// Language-model backend for feedback compilation and reflection.
class LlmClient {
public:
    virtual ~LlmClient() = default;

    /// Completion for a constraint-compilation prompt.
    virtual std::string compile(const std::string& prompt) = 0;
    /// Binary self-reflection verdict; nullopt when the reply is unusable.
    virtual std::optional<bool> reflect(const std::string& prompt) = 0;
    /// Mock clients are never consulted for reflection.
    virtual bool is_mock() const { return false; }
};

/// Replays canned completions in order. The script is JSON-lines; each line is
/// `{"completion": <string or JSON value>}`. A JSON value is serialised.
class MockLlmClient : public LlmClient {
public:
    explicit MockLlmClient(std::vector<std::string> completions);
    static MockLlmClient from_script(std::istream& in);
    static MockLlmClient from_script_file(const std::string& path);

    std::string compile(const std::string& prompt) override;
    std::optional<bool> reflect(const std::string&) override { return std::nullopt; }
    bool is_mock() const override { return true; }

    std::size_t consumed() const { return next_; }
    std::size_t remaining() const { return completions_.size() - next_; }
    const std::vector<std::string>& prompts() const { return prompts_; }

private:
    std::vector<std::string> completions_;
    std::vector<std::string> prompts_;
    std::size_t next_ = 0;
};

/// POSTs `{"purpose", "prompt"}` as JSON to an HTTP endpoint and reads
/// `{"completion"}` back. Credential goes in a bearer Authorization header.
class HttpLlmClient : public LlmClient {
public:
    HttpLlmClient(std::string url, std::string api_key, double timeout_s = 30.0);

    /// Reads DEMANDFORGE_LLM_URL and DEMANDFORGE_LLM_KEY; nullptr when the URL is unset.
    static std::unique_ptr<HttpLlmClient> from_environment(double timeout_s = 30.0);

    std::string compile(const std::string& prompt) override;
    std::optional<bool> reflect(const std::string& prompt) override;

private:
    std::string request(const std::string& purpose, const std::string& prompt);

    std::string scheme_host_;
    std::string path_;
    std::string api_key_;
    double timeout_s_;
};

}  // namespace demandforge
