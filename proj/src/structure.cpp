#include "tgvas/structure.hpp"

#include <algorithm>
#include <functional>
#include <set>

namespace tgvas {

const char* rule_class_name(RuleClass c) {
    switch (c) {
        case RuleClass::Nondegenerate: return "nondegenerate";
        case RuleClass::LeftDegenerate: return "left-degenerate";
        case RuleClass::RightDegenerate: return "right-degenerate";
        case RuleClass::FullyDegenerate: return "fully-degenerate";
        case RuleClass::Leaf: return "leaf";
    }
    return "?";
}

bool ProductionGraph::nontrivial_scc(int v) const {
    int id = scc_id[v];
    int members = 0;
    for (int u = 0; u < static_cast<int>(scc_id.size()); ++u)
        if (scc_id[u] == id) ++members;
    if (members > 1) return true;
    for (int w : adj[v])
        if (w == v) return true;
    return false;
}

ProductionGraph production_graph(const Grammar& g) {
    ProductionGraph pg;
    pg.nt_count = static_cast<int>(g.nonterminals.size());
    pg.terminals = g.terminal_set();
    int nv = pg.nt_count + static_cast<int>(pg.terminals.size());
    pg.adj.assign(nv, {});

    auto term_vertex = [&](const Vec& v) {
        auto it = std::find(pg.terminals.begin(), pg.terminals.end(), v);
        return pg.nt_count + static_cast<int>(it - pg.terminals.begin());
    };
    for (const Rule& r : g.rules) {
        if (r.is_leaf) {
            pg.adj[r.head].push_back(term_vertex(r.vec));
        } else {
            pg.adj[r.head].push_back(r.left);
            pg.adj[r.head].push_back(r.right);
        }
    }

    // Iterative Tarjan.
    std::vector<int> low(nv, -1), num(nv, -1), stk, comp(nv, -1);
    std::vector<bool> on_stk(nv, false);
    int counter = 0, comps = 0;
    for (int root = 0; root < nv; ++root) {
        if (num[root] != -1) continue;
        std::vector<std::pair<int, size_t>> call{{root, 0}};
        while (!call.empty()) {
            auto& [v, ei] = call.back();
            if (ei == 0) {
                num[v] = low[v] = counter++;
                stk.push_back(v);
                on_stk[v] = true;
            }
            if (ei < pg.adj[v].size()) {
                int w = pg.adj[v][ei++];
                if (num[w] == -1) {
                    call.push_back({w, 0});
                } else if (on_stk[w]) {
                    low[v] = std::min(low[v], num[w]);
                }
            } else {
                if (low[v] == num[v]) {
                    while (true) {
                        int w = stk.back();
                        stk.pop_back();
                        on_stk[w] = false;
                        comp[w] = comps;
                        if (w == v) break;
                    }
                    ++comps;
                }
                int child = v;
                call.pop_back();
                if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[child]);
            }
        }
    }

    // Renumber components by first occurrence in vertex order.
    std::vector<int> renum(comps, -1);
    int next = 0;
    pg.scc_id.assign(nv, -1);
    for (int v = 0; v < nv; ++v) {
        if (renum[comp[v]] == -1) renum[comp[v]] = next++;
        pg.scc_id[v] = renum[comp[v]];
    }
    pg.scc_count = comps;

    pg.condensation.assign(comps, {});
    std::set<std::pair<int, int>> seen;
    for (int v = 0; v < nv; ++v) {
        for (int w : pg.adj[v]) {
            int a = pg.scc_id[v], b = pg.scc_id[w];
            if (a != b && seen.insert({a, b}).second) pg.condensation[a].push_back(b);
        }
    }
    return pg;
}

RuleClass classify_rule(const ProductionGraph& pg, const Grammar& g, int rule_idx) {
    if (rule_idx < 0 || rule_idx >= static_cast<int>(g.rules.size()))
        throw std::out_of_range("classify_rule: foreign rule");
    const Rule& r = g.rules[rule_idx];
    if (r.is_leaf) return RuleClass::Leaf;
    bool l = pg.same_scc(r.head, r.left);
    bool rr = pg.same_scc(r.head, r.right);
    if (l && rr) return RuleClass::Nondegenerate;
    if (rr) return RuleClass::LeftDegenerate;
    if (l) return RuleClass::RightDegenerate;
    return RuleClass::FullyDegenerate;
}

bool is_thin(const Grammar& g) {
    ProductionGraph pg = production_graph(g);
    for (size_t i = 0; i < g.rules.size(); ++i)
        if (classify_rule(pg, g, static_cast<int>(i)) == RuleClass::Nondegenerate) return false;
    return true;
}

IndexTable index_table(const Grammar& g) {
    ProductionGraph pg = production_graph(g);
    for (size_t i = 0; i < g.rules.size(); ++i)
        if (classify_rule(pg, g, static_cast<int>(i)) == RuleClass::Nondegenerate)
            throw NotThinError("index is finite only for thin grammars; rule '" +
                               g.rule_text(static_cast<int>(i)) + "' is nondegenerate");

    int n = static_cast<int>(g.nonterminals.size());
    // Process SCCs bottom-up: every rule constraint refers to strictly lower
    // SCCs, so a reverse topological sweep suffices. Kahn order over the
    // condensation, then reversed.
    int comps = pg.scc_count;
    std::vector<int> indeg(comps, 0);
    for (int a = 0; a < comps; ++a)
        for (int b : pg.condensation[a]) ++indeg[b];
    std::vector<int> topo;
    for (int a = 0; a < comps; ++a)
        if (indeg[a] == 0) topo.push_back(a);
    for (size_t i = 0; i < topo.size(); ++i)
        for (int b : pg.condensation[topo[i]])
            if (--indeg[b] == 0) topo.push_back(b);
    std::reverse(topo.begin(), topo.end());

    std::vector<int> iota_scc(comps, 0);
    for (int c : topo) {
        int k = 1;
        for (size_t i = 0; i < g.rules.size(); ++i) {
            const Rule& r = g.rules[i];
            if (pg.scc_id[r.head] != c) continue;
            switch (classify_rule(pg, g, static_cast<int>(i))) {
                case RuleClass::LeftDegenerate:
                    k = std::max(k, iota_scc[pg.scc_id[r.left]] + 1);
                    break;
                case RuleClass::RightDegenerate:
                    k = std::max(k, iota_scc[pg.scc_id[r.right]] + 1);
                    break;
                case RuleClass::FullyDegenerate: {
                    int a = iota_scc[pg.scc_id[r.left]];
                    int b = iota_scc[pg.scc_id[r.right]];
                    k = std::max(k, a == b ? a + 1 : std::max(a, b));
                    break;
                }
                default: break;
            }
        }
        iota_scc[c] = k;
    }

    IndexTable t;
    for (int x = 0; x < n; ++x) t.iota[x] = iota_scc[pg.scc_id[x]];
    t.grammar_index = t.iota[g.start];
    return t;
}

}  // namespace tgvas
