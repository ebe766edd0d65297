#ifndef TGVAS_ORACLE_HPP
#define TGVAS_ORACLE_HPP

#include <memory>
#include <optional>

#include "tgvas/derivation.hpp"
#include "tgvas/grammar.hpp"
#include "tgvas/klm.hpp"

namespace tgvas {

struct OracleUnknown : std::runtime_error {
    explicit OracleUnknown(const std::string& m) : std::runtime_error(m) {}
};

// Natural number extended with -omega / +omega, saturating arithmetic.
struct ExtNat {
    enum Kind { NegOmega, Fin, PosOmega } kind = Fin;
    long long value = 0;

    static ExtNat neg_omega() { return {NegOmega, 0}; }
    static ExtNat pos_omega() { return {PosOmega, 0}; }
    static ExtNat fin(long long v) { return {Fin, v}; }

    bool is_fin() const { return kind == Fin; }
    ExtNat plus(long long d) const { return kind == Fin ? fin(value + d) : *this; }
    bool operator==(const ExtNat& o) const {
        return kind == o.kind && (kind != Fin || value == o.value);
    }
    bool operator<(const ExtNat& o) const {
        if (kind != o.kind) return kind < o.kind;  // NegOmega < Fin < PosOmega
        return kind == Fin && value < o.value;
    }
    bool operator<=(const ExtNat& o) const { return *this < o || *this == o; }
    std::string text() const {
        if (kind == NegOmega) return "-w";
        if (kind == PosOmega) return "+w";
        return std::to_string(value);
    }
};

struct SearchBounds {
    long long max_counter = 4096;
    long long max_stack = 256;
    long long max_steps = 1000000;
    long long pump_length_bound = 64;
    long long delta_cap = 4096;
    long long node_budget = 1000000;
};

struct OracleVerdict {
    enum Kind { Yes, No, Unknown } kind = Unknown;
    std::optional<DerivationTree> witness;  // for Yes
    std::string exhausted;                  // which bound truncated the search

    bool yes() const { return kind == Yes; }
    bool no() const { return kind == No; }
    bool unknown() const { return kind == Unknown; }
};

// Breadth-first search over leftmost-derivation states (pending nonterminal
// stack, counter). Yes verdicts carry a re-validated witness; No is reported
// only when the bounded state space closed without hitting any bound.
OracleVerdict bounded_reach(const Grammar& g, const Vec& s, const Vec& t, const SearchBounds& b);
OracleVerdict bounded_cover(const Grammar& g, const Vec& s, const Vec& t, const SearchBounds& b);

// Truncated forward-coverability upper bound function of a 1-dimensional side
// grammar. delta(s) is the largest t <= cap with Cover(g, s, t); -omega when
// even 0 cannot be covered. at_least_cap marks truncation at the cap.
struct DeltaValue {
    ExtNat value;
    bool at_least_cap = false;
    bool unknown = false;
};

class DeltaFn {
  public:
    DeltaFn(Grammar side, const SearchBounds& b);
    DeltaValue operator()(const ExtNat& s) const;
    const Grammar& grammar() const { return side_; }

  private:
    Grammar side_;
    SearchBounds bounds_;
    mutable std::map<long long, DeltaValue> cache_;
};

// Largest absolute displacement of the fastest (acyclic, displacement
// minimizing) degenerate trees over both side rule sets of a component.
long long degenerate_bound(const Grammar& g, const KlmComponent& c);

enum class Direction { Forward, Backward };

// Relation-extension graph over the SCC symbols: one edge per partially
// degenerate SCC rule, labeled (delta_A, Id) or (Id, delta_B). Backward
// graphs reverse the edges and mirror the side grammars.
struct RelationGraph {
    struct Edge {
        int from, to;         // vertex ids
        int scc_rule;         // index into the component's scc_rules
        bool left_deg;
        std::shared_ptr<DeltaFn> delta;  // null for certificate-side edges
        std::optional<Vec> cert_disp;    // exact jump for certificate edges
    };
    std::vector<CompSym> verts;
    std::vector<Edge> edges;
    Direction dir = Direction::Forward;

    int vertex_of(const CompSym& s) const;
};

RelationGraph relation_graph(const Grammar& g, const KlmComponent& c, Direction dir,
                             const SearchBounds& b);

struct PumpingCycle {
    Segment cycle;
    Direction dir = Direction::Forward;
    bool pump_left = false, pump_right = false;
    ExtNat anchor_l, anchor_r;  // configuration of the anchored end
    std::vector<int> spine_rules;  // component SCC rule index per spine step, top-down
    // Coverability witnesses substituted for the delta edges, in path order.
    std::vector<DerivationTree> certificates;
};

struct PumpSearchResult {
    std::optional<PumpingCycle> cycle;
    bool unknown = false;
};

// Searches pumping sequences on the relation graph anchored per the one- and
// two-sided cases, then converts a found sequence into a concrete cycle with
// coverability certificates. The result is re-validated by propagation before
// being returned.
PumpSearchResult find_pumping_cycle(const Grammar& g, const KlmComponent& c, Direction dir,
                                    bool pump_left, bool pump_right, const SearchBounds& b);

// Re-propagates the cycle under its anchor: nonnegative everywhere and lifts
// each pumped side by at least one. Independent of the search.
bool validate_pumping_cycle(const Grammar& g, const KlmComponent& c, const PumpingCycle& pc);

}  // namespace tgvas

#endif
