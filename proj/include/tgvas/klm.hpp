#ifndef TGVAS_KLM_HPP
#define TGVAS_KLM_HPP

#include <array>
#include <map>
#include <optional>
#include <tuple>

#include "tgvas/derivation.hpp"
#include "tgvas/diophantine.hpp"
#include "tgvas/grammar.hpp"

namespace tgvas {

struct KlmError : std::runtime_error {
    explicit KlmError(const std::string& m) : std::runtime_error(m) {}
};
struct UnrealizableParikh : KlmError {
    explicit UnrealizableParikh(const std::string& m) : KlmError(m) {}
};

// A component-local symbol: a grammar nonterminal, optionally annotated with a
// hard-encoded configuration on the component's orthogonalized side.
struct CompSym {
    int nt = -1;
    std::optional<Vec> enc;

    bool operator==(const CompSym& o) const { return nt == o.nt && enc == o.enc; }
    bool operator<(const CompSym& o) const { return std::tie(nt, enc) < std::tie(o.nt, o.enc); }
};

// An SCC rule of a component: one designated path child, one side child. By
// thinness exactly one child of a path rule stays in the SCC.
struct SccRule {
    CompSym head, path_child;
    int side_nt = -1;
    bool left_deg = false;  // side child hangs on the left: X -> A Y
    int grammar_rule = -1;

    bool operator<(const SccRule& o) const {
        return std::tie(grammar_rule, head, path_child) <
               std::tie(o.grammar_rule, o.head, o.path_child);
    }
    bool operator==(const SccRule& o) const {
        return grammar_rule == o.grammar_rule && head == o.head && path_child == o.path_child &&
               side_nt == o.side_nt && left_deg == o.left_deg;
    }
};

// Reachability placeholder A -> disp, standing for Reach(G_A, l, l + disp).
struct CertRule {
    int nt = -1;
    Vec disp;

    bool operator<(const CertRule& o) const { return std::tie(nt, disp) < std::tie(o.nt, o.disp); }
    bool operator==(const CertRule& o) const { return nt == o.nt && disp == o.disp; }
};

struct ExitRule {
    bool is_cert = false;
    int grammar_rule = -1;
    CertRule cert;
};

enum ConfigSlot { kLsrc = 0, kRsrc = 1, kLtgt = 2, kRtgt = 3 };

struct KlmComponent {
    CompSym src, tgt;
    std::vector<SccRule> scc_rules;              // sorted set
    std::vector<int> left_rules, right_rules;    // grammar rule indices, sorted sets
    std::vector<CertRule> left_certs, right_certs;
    bool annotated = false;
    bool annot_left = true;
    ExitRule exit;
    std::array<std::optional<Vec>, 4> fixed;  // E_Config values per slot

    bool trivial() const { return scc_rules.empty(); }
    const std::vector<CertRule>& certs(bool left) const { return left ? left_certs : right_certs; }
    // Side nonterminals occurring in the plain rule set of one side.
    std::vector<int> side_nonterminals(const Grammar& g, bool left) const;
};

struct KlmNode {
    KlmComponent comp;
    int child1 = -1, child2 = -1;   // node indices for a binary exit
    std::optional<Vec> term;        // terminal child for a leaf-rule exit
    bool cert_child = false;        // certificate exit: opaque child
};

struct KlmTree {
    int dim = 1;
    std::vector<KlmNode> nodes;  // preorder, node 0 is the root
};

// ---- capture ----

KlmComponent capture_component(const Grammar& g, const Segment& s, const ExitRule& exit);

// All three capture conditions; for annotated components the certificate
// replacement condition is checked instead of the side rule set, and the
// hard-encoded configurations are compared against the segment's (propagated
// with `anchor`).
bool check_capture(const Grammar& g, const KlmComponent& c, const Segment& s, const Anchor& anchor);

// One component per division segment, bijective and order-preserving.
// Exit rules are read off the witness tree.
KlmTree build_klm_tree(const Grammar& g, const DerivationTree& t, const Division& div);

// build_klm_tree over small_division(witness) with the root configuration
// (s, t) fixed in E_Config.
KlmTree initial_klm_tree(const Grammar& g, const Vec& s, const Vec& t,
                         const DerivationTree& witness);

void check_klm_tree(const Grammar& g, const KlmTree& kt);

// ---- characteristic system ----

// Parikh variable spaces per component.
enum class RuleSpace { Scc = 0, Left = 1, Right = 2, CertLeft = 3, CertRight = 4 };

struct CharSystem {
    DioSystem sys;
    // first coordinate variable of (node, slot); node * 4 + slot
    std::vector<int> config_var;
    // (node, space, index-within-space) -> var
    std::map<std::tuple<int, int, int>, int> parikh;
    // first coordinate of l^u / r^u per node with a terminal or cert child
    std::vector<std::array<int, 2>> leaf_var;

    int cfg(int node, ConfigSlot s, int coord = 0) const {
        return config_var[node * 4 + s] + coord;
    }
    int pk(int node, RuleSpace sp, int idx) const {
        return parikh.at({node, static_cast<int>(sp), idx});
    }
};

CharSystem char_system(const Grammar& g, const KlmTree& kt);

// ---- ranks ----

int geometric_dimension(const Grammar& g, const KlmComponent& c);
int component_index(const Grammar& g, const KlmComponent& c);

struct TreeRank {
    std::vector<long long> counts;  // descending rank classes, length 2kd-2d

    bool operator==(const TreeRank& o) const { return counts == o.counts; }
    bool operator<(const TreeRank& o) const {
        return std::lexicographical_compare(counts.begin(), counts.end(), o.counts.begin(),
                                            o.counts.end());
    }
};

TreeRank tree_rank(const Grammar& g, const KlmTree& kt, int k, int d);

// ---- side-grammar analysis ----

// Grammar consisting of exactly the given rules (symbols remapped, names
// kept); `start_nt` is an id of the original grammar.
Grammar sub_grammar(const Grammar& g, const std::vector<int>& rules, int start_nt);

// Displacements of acyclic complete derivation trees (no symbol repeats on a
// root-to-leaf chain) of `start_nt` under the given rules.
std::vector<Vec> acyclic_displacements(const Grammar& g, const std::vector<int>& rules,
                                       int start_nt, size_t cap = 65536);

// Deterministic reference completion: lexicographically least acyclic
// displacement (the true minimum for d = 1).
Vec min_acyclic_displacement(const Grammar& g, const std::vector<int>& rules, int start_nt);

// Displacements of simple derivation cycles under the given rules, with
// off-path children completed by the reference completion.
std::vector<Vec> simple_cycle_displacements(const Grammar& g, const std::vector<int>& rules);

// Concrete acyclic complete tree realizing min_acyclic_displacement.
DerivationTree min_acyclic_tree(const Grammar& g, const std::vector<int>& rules, int start_nt);

// ---- realization ----

// Parikh image over a component's rule spaces (space -> index -> count).
struct CompParikh {
    std::map<std::pair<int, int>, long long> count;  // (space, idx) -> multiplicity

    long long at(RuleSpace sp, int idx) const {
        auto it = count.find({static_cast<int>(sp), idx});
        return it == count.end() ? 0 : it->second;
    }
};

// Number of tree nodes a realized segment with this Parikh image will have.
BigInt realized_node_count(const Grammar& g, const KlmComponent& c, const CompParikh& p);

// Builds a concrete segment from src to tgt whose rule multiset equals the
// Parikh image exactly: Hierholzer on the SCC multigraph for the spine and a
// depth-first backtracking with reachability pruning for the side forests.
// Hangs of an annotated side are emitted as certificate stubs.
Segment realize_from_parikh(const Grammar& g, const KlmComponent& c, const CompParikh& parikh,
                            const CompSym& src, const CompSym& tgt,
                            long long node_budget = 1000000);

// euler_cycle_from_parikh specialization: equal endpoints.
Segment euler_cycle_from_parikh(const Grammar& g, const KlmComponent& c, const CompParikh& parikh,
                                const CompSym& endpoints, long long node_budget = 1000000);

}  // namespace tgvas

#endif
