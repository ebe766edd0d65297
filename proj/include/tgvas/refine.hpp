#ifndef TGVAS_REFINE_HPP
#define TGVAS_REFINE_HPP

#include <functional>

#include "tgvas/oracle.hpp"

namespace tgvas {

struct RefineError : std::runtime_error {
    explicit RefineError(const std::string& m) : std::runtime_error(m) {}
};
// Raised when a bounded oracle query leaves the pipeline unable to certify a
// step; carries enough context to retry with larger bounds.
struct ResumableUnknown : std::runtime_error {
    explicit ResumableUnknown(const std::string& m) : std::runtime_error(m) {}
};

// One division segment aligned with its capturing component. Segment nodes
// are preorder indices into the witness.
struct RefineItem {
    DivSeg seg;
    KlmComponent comp;
};

// Witness-guided refinement state: the KLM tree is kept aligned with a
// division of a concrete most-simplified witness at every step, which makes
// the refinement lemmas executable. The certificate checker below never looks
// at the witness.
struct RefinementState {
    Grammar g;
    int k = 1;  // grammar index
    DerivationTree witness;
    Anchor anchor;  // root configuration (s, t)
    Configs cfg;
    std::vector<RefineItem> items;  // preorder by segment root
    std::vector<TreeRank> rank_trace;
    std::vector<std::string> trace;  // one line per refinement step

    KlmTree to_klm_tree() const;
    Segment aligned_segment(int item) const;
    TreeRank rank() const;
};

RefinementState initial_state(const Grammar& g, const Vec& s, const Vec& t,
                              const DerivationTree& witness);

// Re-checks every invariant: division tiling, capture per component, exits.
void validate_state(const RefinementState& st);

// Witness-derived solution of the characteristic system (criterion: satisfies
// it exactly).
SolutionVec solution_from_witness(const RefinementState& st, const CharSystem& cs);

struct OrthogonalityEvidence {
    bool left = true;
    std::map<int, Vec> uniform_disp;  // hang-root nonterminal -> u_A
};

std::optional<OrthogonalityEvidence> decide_orthogonality(const Grammar& g,
                                                          const KlmComponent& c, bool left);

// Cleaning operators: constraining fixes every bounded configuration variable
// to its witness value; orthogonalization hard-encodes the configurations of
// orthogonal components with bounded endpoints and installs certificate
// rules. Both leave the rank unchanged.
bool constrain(RefinementState& st);
bool orthogonalize(RefinementState& st);
void clean(RefinementState& st);

// Decompositions; both strictly decrease the tree rank.
void decompose_algebraic(RefinementState& st, int item);
void decompose_combinatorial(RefinementState& st, int item, bool encode_left);

struct PumpInfo {
    bool applicable = false;  // some variable of this end is pumped
    bool found = false;
    bool unknown = false;
    std::optional<PumpingCycle> cycle;
};

struct CompReport {
    int item = -1;
    bool constrained = true;
    bool orthogonalized = true;
    bool production_unbounded = true;
    std::vector<std::pair<RuleSpace, int>> bounded_rules;
    PumpInfo forward, backward;
};

struct PerfectnessReport {
    bool fully_constrained = true;
    bool fully_orthogonalized = true;
    bool production_unbounded = true;
    bool exp_pumpable = true;
    bool pump_unknown = false;
    std::vector<CompReport> comps;

    bool perfect() const {
        return fully_constrained && fully_orthogonalized && production_unbounded && exp_pumpable &&
               !pump_unknown;
    }
};

// Witness-free perfectness check over a bare KLM tree.
PerfectnessReport check_perfect_tree(const Grammar& g, const KlmTree& kt, const SearchBounds& b);
PerfectnessReport check_perfect(const RefinementState& st, const SearchBounds& b);

struct PipelineResult {
    RefinementState state;
    PerfectnessReport report;
};

// Initial tree, then Clean, then the decomposition-cleaning loop until the
// tree is perfect. Algebraic decomposition is preferred when both operators
// apply; the choice is recorded in the trace.
PipelineResult refinement_pipeline(const Grammar& g, const Vec& s, const Vec& t,
                                   const DerivationTree& witness, const SearchBounds& b);

// Solves Reach(sub, s, t); nullopt means Unknown, an empty tree never occurs.
using SubproblemSolver =
    std::function<std::optional<DerivationTree>(const Grammar& sub, const Vec& s, const Vec& t)>;

SubproblemSolver oracle_solver(const SearchBounds& b);

// Builds a complete nonnegative derivation tree from a perfect KLM tree and a
// solution of its characteristic system, per the pumping-cycle construction;
// the result is re-validated independently before being returned.
DerivationTree reconstruct_tree(const Grammar& g, const KlmTree& kt, const SearchBounds& b,
                                const SubproblemSolver& solver);

struct CertificateVerdict {
    enum Kind { Accept, Reject, Unknown } kind = Unknown;
    std::string reason;
    std::optional<DerivationTree> witness;
};

CertificateVerdict verify_certificate(const Grammar& g, const KlmTree& kt, const Vec& s,
                                      const Vec& t, const SearchBounds& b);

}  // namespace tgvas

#endif
