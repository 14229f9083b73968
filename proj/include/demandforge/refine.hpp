#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "demandforge/error.hpp"
#include "demandforge/llm_client.hpp"
#include "demandforge/netgraph.hpp"
#include "demandforge/qipsolve.hpp"

#include "json.hpp"

namespace demandforge {

enum class Intent { increase, decrease, maintain };
enum class Adjacency { target, adjacent };

std::string_view to_string(Intent i);
std::string_view to_string(Adjacency a);

/// One piece of stakeholder feedback about intersection `intersection` at `segment`.
/// `intent` and `approaches` are optional overrides of what the text implies.
struct FeedbackItem {
    int k = 0;
    int segment = 0;
    int intersection = 0;
    std::string text;
    std::optional<Intent> intent;
    std::vector<Approach> approaches;
};

FeedbackItem feedback_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const FeedbackItem& item);
std::vector<FeedbackItem> read_feedback(std::istream& in);
std::vector<FeedbackItem> read_feedback_file(const std::string& path);
/// Segment range and intersection existence.
void validate_feedback(const FeedbackItem& item, const RoadNetwork& net);

struct ConstraintAtom {
    std::size_t location = 0;
    int segment = 0;
    BoundKind kind = BoundKind::lower;
    double bound = 0.0;
    int feedback = 0;
    Adjacency adjacency = Adjacency::target;
};

struct ConstraintSpec {
    int feedback = 0;
    int segment = 0;
    int intersection = 0;
    std::vector<ConstraintAtom> atoms;
};

nlohmann::json to_json(const ConstraintSpec& spec, const RoadNetwork& net);

// Fallback relaxation of target bounds for t-1 and t+1 when the reply only
// relaxes some of them.
inline constexpr double kAdjacentLowerFactor = 0.9;
inline constexpr double kAdjacentUpperFactor = 1.1;

/// Human-readable description of the reply schema; part of every prompt.
std::string constraint_schema_description();

/// Parses a reply into a spec and enforces its invariants: nonnegative bounds,
/// known locations, target atoms on the feedback segment, and relaxed atoms on
/// both neighbouring segments. Throws Error("syntactic", ...).
ConstraintSpec verify_syntactic(std::string_view reply, const RoadNetwork& net, const FeedbackItem& item);

/// QP^(k): base problems plus accepted constraints, and the solutions A·r^(k).
struct RefinementState {
    int iteration = 0;
    std::shared_ptr<const RoadNetwork> network;
    std::vector<SegmentProblem> base;  // one per segment, ascending
    std::vector<ConstraintSpec> accepted;
    std::vector<RouteSolution> last_solution;  // aligned with base
    SolveConfig config;

    const IncidenceMatrix& incidence() const { return *base.front().incidence; }
    /// Position of segment t in `base`; throws missing_segment.
    std::size_t slot(int t) const;
    std::vector<LocationBound> constraints_for(int t) const;
    /// Base problem for t with the accepted constraints (and optionally extra ones) attached.
    SegmentProblem problem(int t, const ConstraintSpec* extra = nullptr) const;
};

/// Solves the base day and wraps it as iteration 0.
RefinementState make_state(std::shared_ptr<const RoadNetwork> network, std::vector<SegmentProblem> base,
                           const SolveConfig& config);

/// (A·r_t)_j. Throws unknown_location or missing_segment.
std::int64_t get_counts(std::span<const RouteSolution> solutions, const IncidenceMatrix& a, std::size_t j, int t);

/// location index -> simulated count for every location of one intersection.
using CountSnapshot = std::map<std::size_t, std::int64_t>;
CountSnapshot intersection_counts(std::span<const RouteSolution> solutions, const IncidenceMatrix& a,
                                  const RoadNetwork& net, int intersection, int t);

std::string build_prompt(const FeedbackItem& item, const RefinementState& state);

/// Prompts the client and parses the reply; throws Error("syntactic") on a bad reply.
ConstraintSpec compile_feedback(const FeedbackItem& item, const RefinementState& state, LlmClient& client);

/// Solves t-1, t, t+1 with accepted and new atoms as hard bounds. Throws
/// InfeasibleError with an explanation.
std::map<int, RouteSolution> verify_feasible(const RefinementState& state, const ConstraintSpec& spec);

std::optional<Intent> infer_intent(std::string_view text);
/// Approaches named in the text; every approach for "every/each/all approach".
std::vector<Approach> named_approaches(std::string_view text);

struct SemanticVerdict {
    bool pass = false;
    std::optional<Intent> intent;
    std::vector<Approach> approaches;
    std::optional<bool> reflection;
    std::string reason;
};

// "Looks accurate" tolerance, relative to the before count.
inline constexpr double kMaintainTolerance = 0.10;

/// Rule-based comparison of total-movement counts on the relevant approaches,
/// ANDed with the client's reflection verdict for non-mock clients.
SemanticVerdict verify_semantic(const CountSnapshot& before, const CountSnapshot& after, const FeedbackItem& item,
                                const RoadNetwork& net, LlmClient* client = nullptr,
                                const ConstraintSpec* spec = nullptr);

enum class Stage { syntactic, feasible, semantic, accepted };
std::string_view to_string(Stage s);

/// One generate-and-verify attempt; never mutates the state.
struct AttemptResult {
    Stage stage = Stage::syntactic;  // first failing stage, or accepted
    std::string detail;
    ConstraintSpec spec;
    CountSnapshot before;
    CountSnapshot after;
    std::map<int, RouteSolution> candidates;
    SemanticVerdict semantic;

    bool accepted() const { return stage == Stage::accepted; }
};

AttemptResult attempt_feedback(const RefinementState& state, const FeedbackItem& item, LlmClient& client);

/// Adds an accepted attempt's spec and candidate solutions to the state.
void accept_attempt(RefinementState& state, const AttemptResult& result);

struct AttemptTally {
    int attempts = 0;
    int syntactic_fail = 0;
    int infeasible = 0;
    int semantic_fail = 0;
    int accepted = 0;
};

nlohmann::json to_json(const AttemptTally& t);

class AttemptsExhausted : public Error {
public:
    AttemptsExhausted(int k, AttemptTally tally, const std::string& last_detail);
    int feedback() const { return k_; }
    const AttemptTally& tally() const { return tally_; }

private:
    int k_;
    AttemptTally tally_;
};

struct RefineResult {
    RefinementState state;
    std::vector<RouteSolution> solutions;
    AttemptTally tally;
};

/// Sequential compile/verify/accumulate over the feedback, then a full re-solve.
RefineResult refine_loop(std::span<const FeedbackItem> feedback, RefinementState state, LlmClient& client,
                         int max_attempts);

/// Re-solves every segment of the state with its accumulated constraints.
std::vector<RouteSolution> resolve_all(const RefinementState& state);

}  // namespace demandforge
