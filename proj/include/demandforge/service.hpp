#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <string>
#include <utility>

#include "demandforge/llm_client.hpp"
#include "demandforge/pipeline.hpp"
#include "demandforge/refine.hpp"

#include "json.hpp"

namespace httplib {
class Server;
}

namespace demandforge {

/// HTTP status plus JSON body.
using Reply = std::pair<int, nlohmann::json>;

/// One session: a pipeline, its refinement state and a language-model client.
/// Mutations run one at a time under a writer lock and publish a fresh
/// immutable snapshot; readers only copy the snapshot pointer.
class Service {
public:
    Service(Pipeline pipeline, PipelineConfig config, std::unique_ptr<LlmClient> client);

    /// Solves the base day. Must run before the handlers.
    void initialize();

    Reply counts(int segment) const;
    Reply intersections() const;
    Reply report() const;
    Reply status() const;
    Reply feedback(const nlohmann::json& body);
    Reply resolve();

    /// Registers the /api routes on `server`.
    void mount(httplib::Server& server);

    std::shared_ptr<const RefinementState> snapshot() const;
    const Pipeline& pipeline() const { return pipeline_; }

private:
    void publish(std::shared_ptr<const RefinementState> next);

    Pipeline pipeline_;
    PipelineConfig config_;
    std::unique_ptr<LlmClient> client_;
    std::shared_ptr<const RefinementState> state_;
    std::mutex writer_;
    std::atomic<bool> busy_{false};
    std::atomic<int> operations_{0};
    std::string last_operation_ = "none";
    mutable std::mutex op_mutex_;
};

nlohmann::json error_body(const std::string& code, const std::string& detail);

/// Client for the configured session: the mock script when one is set,
/// otherwise the HTTP client from the environment. Throws config when neither.
std::unique_ptr<LlmClient> make_llm_client(const PipelineConfig& config);

}  // namespace demandforge
