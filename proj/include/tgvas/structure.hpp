#ifndef TGVAS_STRUCTURE_HPP
#define TGVAS_STRUCTURE_HPP

#include <map>
#include <vector>

#include "tgvas/grammar.hpp"

namespace tgvas {

struct NotThinError : std::runtime_error {
    explicit NotThinError(const std::string& m) : std::runtime_error(m) {}
};

enum class RuleClass { Nondegenerate, LeftDegenerate, RightDegenerate, FullyDegenerate, Leaf };

const char* rule_class_name(RuleClass c);

// Production graph of a grammar. Vertices are nonterminals followed by the
// distinct terminal vectors; every binary rule X -> A B contributes edges
// (X,A),(X,B), every leaf rule X -> u contributes (X,u). SCC ids are assigned
// in order of first occurrence over the vertex declaration order, so the
// numbering is reproducible.
struct ProductionGraph {
    int nt_count = 0;
    std::vector<Vec> terminals;            // vertex nt_count + i
    std::vector<std::vector<int>> adj;     // over all vertices
    std::vector<int> scc_id;               // per vertex
    int scc_count = 0;
    std::vector<std::vector<int>> condensation;  // DAG over SCC ids, deduped

    bool same_scc(int u, int v) const { return scc_id[u] == scc_id[v]; }
    // True when the SCC of vertex v contains a cycle (size > 1 or a self-loop).
    bool nontrivial_scc(int v) const;
};

ProductionGraph production_graph(const Grammar& g);

RuleClass classify_rule(const ProductionGraph& pg, const Grammar& g, int rule_idx);

bool is_thin(const Grammar& g);

struct IndexTable {
    std::map<int, int> iota;  // nonterminal -> index of its induced sub-GVAS
    int grammar_index = 1;    // iota of the start symbol
};

// Bottom-up dynamic programming over the condensation DAG (Definition of the
// index). Refuses non-thin grammars: their index is not finite.
IndexTable index_table(const Grammar& g);

}  // namespace tgvas

#endif
