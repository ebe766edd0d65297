#ifndef TGVAS_DERIVATION_HPP
#define TGVAS_DERIVATION_HPP

#include <optional>
#include <string>
#include <vector>

#include "tgvas/grammar.hpp"

namespace tgvas {

struct TreeError : std::runtime_error {
    explicit TreeError(const std::string& m) : std::runtime_error(m) {}
};
struct InconsistentAnchor : TreeError {
    explicit InconsistentAnchor(const std::string& m) : TreeError(m) {}
};
struct NodeBudgetExceeded : TreeError {
    explicit NodeBudgetExceeded(const std::string& m) : TreeError(m) {}
};

// One node of a derivation tree, stored in preorder. Node identity is the
// preorder index. A node is one of:
//   - internal: symbol >= 0, rule set, children 1 (leaf rule) or 2 (binary);
//   - terminal leaf: symbol == -1, value set;
//   - nonterminal leaf: symbol >= 0, children == 0 (unexpanded);
//   - certificate stub: symbol >= 0, cert == true; an opaque complete subtree
//     of known displacement, to be resolved by a reachability subproblem.
struct TreeNode {
    int symbol = -1;
    Vec value;
    int rule = -1;
    bool cert = false;
    Vec cert_disp;
    int children = 0;
    int subtree = 1;
};

struct DerivationTree {
    int dim = 1;
    std::vector<TreeNode> nodes;  // preorder, contiguous subtrees

    int size() const { return static_cast<int>(nodes.size()); }
    int end_of(int p) const { return p + nodes[p].subtree; }
    int first_child(int p) const { return p + 1; }
    int second_child(int p) const { return p + 1 + nodes[p + 1].subtree; }
    bool is_nt_leaf(int p) const {
        return nodes[p].symbol >= 0 && nodes[p].children == 0 && !nodes[p].cert;
    }
    // Complete: no unexpanded nonterminal leaves and no certificate stubs.
    bool is_complete() const;
    // Quasi-complete: certificate stubs allowed, no plain nonterminal leaves.
    bool is_quasi_complete() const;
    std::vector<int> parents() const;
    // Indices of unexpanded nonterminal leaves, in preorder.
    std::vector<int> nt_leaves() const;
    void check_well_formed(const Grammar& g) const;
};

// A derivation tree with exactly one nonterminal leaf.
struct Segment {
    DerivationTree tree;
    int leaf = -1;  // preorder index of the nonterminal leaf

    int root_symbol() const { return tree.nodes[0].symbol; }
    int leaf_symbol() const { return tree.nodes[leaf].symbol; }
    bool is_cycle() const { return root_symbol() == leaf_symbol(); }
};

struct Anchor {
    bool at_leaf = false;  // false: (l,r) fixes the root; true: fixes the nonterminal leaf
    Vec l, r;
};

// Per-node configuration pairs. May hold negative intermediates: trees of
// Z-level solutions must be representable.
struct Configs {
    int dim = 1;
    std::vector<long long> l, r;  // flattened, node * dim + coord

    Vec lv(int p) const { return Vec(l.begin() + p * dim, l.begin() + (p + 1) * dim); }
    Vec rv(int p) const { return Vec(r.begin() + p * dim, r.begin() + (p + 1) * dim); }
};

Configs propagate_configurations(const DerivationTree& t, const Anchor& a);
bool is_nonnegative(const Configs& c);
bool check_most_simplified(const DerivationTree& t, const Configs& c);
Vec displacement(const DerivationTree& t);
Vec displacement_of(const DerivationTree& t, int p);

// Splices out ancestor/descendant pairs with equal symbol and configuration
// until the most-simplified assumption holds. Root anchor is preserved.
DerivationTree most_simplify(const DerivationTree& t, const Anchor& root_anchor);

// Replaces sub(at) by `repl`; subtree sizes of the ancestors are adjusted.
DerivationTree splice(const DerivationTree& base, int at, const DerivationTree& repl);

// sub(root) with sub(exit) collapsed to an unexpanded nonterminal leaf.
Segment make_segment(const DerivationTree& base, int root, int exit);
// Same, but additionally collapses each subtree rooted at a key of
// `collapse` into a certificate stub with the given displacement.
Segment make_segment_collapsed(const DerivationTree& base, int root, int exit,
                               const std::vector<std::pair<int, Vec>>& collapse);

// Chain of nodes from `root` down to `exit` (inclusive).
std::vector<int> segment_path(const DerivationTree& base, int root, int exit);

Segment append_segment(const Segment& a, const Segment& b);
// m-duplication of a cycle; m >= 1.
Segment duplicate_cycle(const Segment& c, long long m, long long node_budget = 1000000);

// Divisions partition a complete tree into segments; each segment's exit node
// carries the rule whose children either start child segments or are terminal
// leaves. Segments are listed in preorder of their roots.
struct DivSeg {
    int root = 0;
    int exit = 0;
};
struct Division {
    std::vector<DivSeg> segs;
};

// Longest strongly connected prefix segment: walks partially-degenerate rules
// of the topmost SCC of the production graph of rules used in sub(r); stops at
// a fully-degenerate rule or a terminal child.
int topmost_scc_exit(const DerivationTree& t, const Grammar& g, int r);

Division small_division(const DerivationTree& t, const Grammar& g);

// Checks the tiling property: every node lies in exactly one segment or is a
// terminal child of some exit; child links are consistent.
void validate_division(const DerivationTree& t, const Division& d);

// Parenthesized tree text, e.g. (X (A -1) (Y ...)); with_configs appends
// @l:r annotations per node.
std::string tree_text(const DerivationTree& t, const Configs* cfg = nullptr);
DerivationTree tree_from_text(const std::string& s, const Grammar& g);

// Rebuilds the tree of a leftmost derivation given the applied rule sequence.
DerivationTree tree_from_leftmost_rules(const Grammar& g, const std::vector<int>& rules);

// Tree of mirror(g) obtained by swapping binary children and negating
// terminals; rule indices carry over since mirror preserves rule order.
DerivationTree mirror_tree(const DerivationTree& t);

// Rewrites symbols and rule indices of a tree built over `from` (a
// sub-grammar with the same symbol names) into `to` coordinates.
DerivationTree remap_rules(const DerivationTree& t, const Grammar& from, const Grammar& to);

}  // namespace tgvas

#endif
