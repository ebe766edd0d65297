#include "tgvas/derivation.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "tgvas/structure.hpp"

namespace tgvas {

bool DerivationTree::is_complete() const {
    for (int p = 0; p < size(); ++p)
        if (is_nt_leaf(p) || nodes[p].cert) return false;
    return true;
}

bool DerivationTree::is_quasi_complete() const {
    for (int p = 0; p < size(); ++p)
        if (is_nt_leaf(p)) return false;
    return true;
}

std::vector<int> DerivationTree::parents() const {
    std::vector<int> par(size(), -1), stk;
    for (int p = 0; p < size(); ++p) {
        while (!stk.empty() && p >= end_of(stk.back())) stk.pop_back();
        if (!stk.empty()) par[p] = stk.back();
        stk.push_back(p);
    }
    return par;
}

std::vector<int> DerivationTree::nt_leaves() const {
    std::vector<int> out;
    for (int p = 0; p < size(); ++p)
        if (is_nt_leaf(p)) out.push_back(p);
    return out;
}

void DerivationTree::check_well_formed(const Grammar& g) const {
    for (int p = 0; p < size(); ++p) {
        const TreeNode& n = nodes[p];
        if (n.symbol < 0) {
            if (n.children != 0 || static_cast<int>(n.value.size()) != dim)
                throw TreeError("malformed terminal leaf");
            continue;
        }
        if (n.cert || n.children == 0) continue;
        if (n.rule < 0 || n.rule >= static_cast<int>(g.rules.size()))
            throw TreeError("internal node without a grammar rule");
        const Rule& r = g.rules[n.rule];
        if (r.head != n.symbol) throw TreeError("rule head does not match node symbol");
        if (r.is_leaf) {
            if (n.children != 1 || nodes[first_child(p)].symbol != -1 ||
                nodes[first_child(p)].value != r.vec)
                throw TreeError("leaf rule child mismatch");
        } else {
            if (n.children != 2) throw TreeError("binary rule needs two children");
            if (nodes[first_child(p)].symbol != r.left || nodes[second_child(p)].symbol != r.right)
                throw TreeError("binary rule children mismatch");
        }
    }
}

Vec displacement_of(const DerivationTree& t, int p) {
    Vec d(t.dim, 0);
    for (int i = p; i < t.end_of(p); ++i) {
        const TreeNode& n = t.nodes[i];
        const Vec* v = nullptr;
        if (n.symbol == -1) v = &n.value;
        else if (n.cert) v = &n.cert_disp;
        if (v)
            for (int k = 0; k < t.dim; ++k) d[k] += (*v)[k];
    }
    return d;
}

Vec displacement(const DerivationTree& t) { return displacement_of(t, 0); }

namespace {

// Counter value at the entry of every node plus the final value. The
// nonterminal leaf `q` (if any) jumps by `q_jump`.
std::vector<Vec> entry_runs(const DerivationTree& t, const Vec& start, int q, const Vec& q_jump) {
    std::vector<Vec> run(t.size() + 1);
    Vec cur = start;
    for (int p = 0; p < t.size(); ++p) {
        run[p] = cur;
        const TreeNode& n = t.nodes[p];
        const Vec* v = nullptr;
        if (n.symbol == -1) v = &n.value;
        else if (n.cert) v = &n.cert_disp;
        if (v)
            for (int k = 0; k < t.dim; ++k) cur[k] += (*v)[k];
        if (p == q)
            for (int k = 0; k < t.dim; ++k) cur[k] += q_jump[k];
    }
    run[t.size()] = cur;
    return run;
}

Vec leaf_sum(const DerivationTree& t, int from, int to) {
    Vec s(t.dim, 0);
    for (int i = from; i < to; ++i) {
        const TreeNode& n = t.nodes[i];
        const Vec* v = nullptr;
        if (n.symbol == -1) v = &n.value;
        else if (n.cert) v = &n.cert_disp;
        if (v)
            for (int k = 0; k < t.dim; ++k) s[k] += (*v)[k];
    }
    return s;
}

}  // namespace

Configs propagate_configurations(const DerivationTree& t, const Anchor& a) {
    if (static_cast<int>(a.l.size()) != t.dim || static_cast<int>(a.r.size()) != t.dim)
        throw TreeError("anchor dimension mismatch");
    std::vector<int> leaves = t.nt_leaves();
    if (leaves.size() > 1) throw TreeError("propagation needs at most one nonterminal leaf");
    int q = leaves.empty() ? -1 : leaves[0];
    if (a.at_leaf && q == -1) throw InconsistentAnchor("leaf anchor on a tree without one");

    Vec l_root(t.dim), r_root(t.dim), l_q(t.dim), r_q(t.dim);
    if (q == -1) {
        l_root = a.l;
        r_root = a.r;
        Vec d = displacement(t);
        for (int k = 0; k < t.dim; ++k)
            if (l_root[k] + d[k] != r_root[k])
                throw InconsistentAnchor("root anchor contradicts tree displacement");
    } else {
        Vec before = leaf_sum(t, 0, q);
        Vec after = leaf_sum(t, q + 1, t.size());
        if (a.at_leaf) {
            l_q = a.l;
            r_q = a.r;
            for (int k = 0; k < t.dim; ++k) {
                l_root[k] = l_q[k] - before[k];
                r_root[k] = r_q[k] + after[k];
            }
        } else {
            l_root = a.l;
            r_root = a.r;
            for (int k = 0; k < t.dim; ++k) {
                l_q[k] = l_root[k] + before[k];
                r_q[k] = r_root[k] - after[k];
            }
        }
    }

    Vec jump(t.dim, 0);
    if (q != -1)
        for (int k = 0; k < t.dim; ++k) jump[k] = r_q[k] - l_q[k];
    std::vector<Vec> run = entry_runs(t, l_root, q, jump);

    Configs c;
    c.dim = t.dim;
    c.l.resize(static_cast<size_t>(t.size()) * t.dim);
    c.r.resize(static_cast<size_t>(t.size()) * t.dim);
    for (int p = 0; p < t.size(); ++p) {
        for (int k = 0; k < t.dim; ++k) {
            c.l[static_cast<size_t>(p) * t.dim + k] = run[p][k];
            c.r[static_cast<size_t>(p) * t.dim + k] = run[t.end_of(p)][k];
        }
    }
    return c;
}

bool is_nonnegative(const Configs& c) {
    for (long long v : c.l)
        if (v < 0) return false;
    for (long long v : c.r)
        if (v < 0) return false;
    return true;
}

bool check_most_simplified(const DerivationTree& t, const Configs& c) {
    // Active-ancestor multiset of (symbol, l, r) triples along the current
    // root-to-node chain.
    std::map<std::tuple<int, Vec, Vec>, int> on_path;
    std::vector<int> stk;
    for (int p = 0; p < t.size(); ++p) {
        while (!stk.empty() && p >= t.end_of(stk.back())) {
            int u = stk.back();
            stk.pop_back();
            if (t.nodes[u].symbol >= 0) --on_path[{t.nodes[u].symbol, c.lv(u), c.rv(u)}];
        }
        if (t.nodes[p].symbol >= 0) {
            auto key = std::make_tuple(t.nodes[p].symbol, c.lv(p), c.rv(p));
            if (on_path[key] > 0) return false;
            ++on_path[key];
            stk.push_back(p);
        }
    }
    return true;
}

DerivationTree splice(const DerivationTree& base, int at, const DerivationTree& repl) {
    DerivationTree out;
    out.dim = base.dim;
    int removed = base.nodes[at].subtree;
    int delta = repl.size() - removed;
    out.nodes.reserve(base.size() + delta);
    for (int p = 0; p < at; ++p) {
        TreeNode n = base.nodes[p];
        if (at < p + n.subtree) n.subtree += delta;  // ancestor of `at`
        out.nodes.push_back(n);
    }
    for (const TreeNode& n : repl.nodes) out.nodes.push_back(n);
    for (int p = base.end_of(at); p < base.size(); ++p) out.nodes.push_back(base.nodes[p]);
    return out;
}

DerivationTree most_simplify(const DerivationTree& t, const Anchor& root_anchor) {
    DerivationTree cur = t;
    for (;;) {
        Configs c = propagate_configurations(cur, root_anchor);
        // First offending ancestor/descendant pair in preorder.
        std::map<std::tuple<int, Vec, Vec>, std::vector<int>> chain;
        std::vector<int> stk;
        int hit_p = -1, hit_q = -1;
        for (int p = 0; p < cur.size() && hit_p < 0; ++p) {
            while (!stk.empty() && p >= cur.end_of(stk.back())) {
                int u = stk.back();
                stk.pop_back();
                if (cur.nodes[u].symbol >= 0)
                    chain[{cur.nodes[u].symbol, c.lv(u), c.rv(u)}].pop_back();
            }
            if (cur.nodes[p].symbol >= 0) {
                auto key = std::make_tuple(cur.nodes[p].symbol, c.lv(p), c.rv(p));
                auto& v = chain[key];
                if (!v.empty()) {
                    hit_p = v.front();
                    hit_q = p;
                    break;
                }
                v.push_back(p);
                stk.push_back(p);
            }
        }
        if (hit_p < 0) return cur;
        DerivationTree repl;
        repl.dim = cur.dim;
        repl.nodes.assign(cur.nodes.begin() + hit_q, cur.nodes.begin() + cur.end_of(hit_q));
        cur = splice(cur, hit_p, repl);
    }
}

Segment make_segment_collapsed(const DerivationTree& base, int root, int exit,
                               const std::vector<std::pair<int, Vec>>& collapse) {
    if (!(root <= exit && exit < base.end_of(root)))
        throw TreeError("make_segment: exit not inside root subtree");
    std::map<int, Vec> coll(collapse.begin(), collapse.end());
    Segment s;
    s.tree.dim = base.dim;
    std::vector<std::pair<int, int>> open;  // (new index, old subtree end)
    int p = root;
    int root_end = base.end_of(root);
    while (p < root_end) {
        while (!open.empty() && p >= open.back().second) open.pop_back();
        int newi = static_cast<int>(s.tree.nodes.size());
        bool atomic = true;
        if (p == exit) {
            TreeNode leaf;
            leaf.symbol = base.nodes[p].symbol;
            s.leaf = newi;
            s.tree.nodes.push_back(leaf);
        } else if (auto it = coll.find(p); it != coll.end()) {
            TreeNode stub;
            stub.symbol = base.nodes[p].symbol;
            stub.cert = true;
            stub.cert_disp = it->second;
            s.tree.nodes.push_back(stub);
        } else {
            TreeNode n = base.nodes[p];
            n.subtree = 1;
            s.tree.nodes.push_back(n);
            atomic = false;
        }
        for (auto& [ni, oe] : open) {
            (void)oe;
            ++s.tree.nodes[ni].subtree;
        }
        if (atomic) {
            p = base.end_of(p);
        } else {
            open.push_back({newi, base.end_of(p)});
            ++p;
        }
    }
    if (s.leaf < 0) throw TreeError("make_segment: exit vanished");
    return s;
}

Segment make_segment(const DerivationTree& base, int root, int exit) {
    return make_segment_collapsed(base, root, exit, {});
}

std::vector<int> segment_path(const DerivationTree& base, int root, int exit) {
    std::vector<int> path;
    int p = root;
    while (true) {
        path.push_back(p);
        if (p == exit) break;
        if (base.nodes[p].children == 2) {
            int c1 = base.first_child(p), c2 = base.second_child(p);
            p = (exit >= c2) ? c2 : c1;
        } else if (base.nodes[p].children == 1) {
            p = base.first_child(p);
        } else {
            throw TreeError("segment_path: exit unreachable");
        }
    }
    return path;
}

Segment append_segment(const Segment& a, const Segment& b) {
    if (a.leaf_symbol() != b.root_symbol())
        throw TreeError("append_segment: symbol mismatch at the junction");
    Segment out;
    out.tree = splice(a.tree, a.leaf, b.tree);
    out.leaf = a.leaf + b.leaf;
    return out;
}

Segment duplicate_cycle(const Segment& c, long long m, long long node_budget) {
    if (c.root_symbol() != c.leaf_symbol()) throw TreeError("duplicate_cycle: not a cycle");
    if (m < 1) throw TreeError("duplicate_cycle: m must be positive");
    long long total = static_cast<long long>(c.tree.size() - 1) * m + 1;
    if (total > node_budget) throw NodeBudgetExceeded("m-duplication exceeds node budget");

    // Preorder layout of cyc^m: m copies of the part before the leaf, the
    // leaf, then m copies of the part after it in reverse nesting order.
    const auto& nodes = c.tree.nodes;
    int q = c.leaf;
    int n = c.tree.size();
    Segment out;
    out.tree.dim = c.tree.dim;
    out.tree.nodes.reserve(static_cast<size_t>(total));
    for (long long copy = 0; copy < m; ++copy) {
        for (int p = 0; p < q; ++p) {
            TreeNode nd = nodes[p];
            // Ancestors of the leaf absorb one extra cycle body per deeper copy.
            if (q < p + nd.subtree)
                nd.subtree += static_cast<int>((m - 1 - copy) * static_cast<long long>(n - 1));
            out.tree.nodes.push_back(nd);
        }
    }
    out.leaf = static_cast<int>(out.tree.nodes.size());
    out.tree.nodes.push_back(nodes[q]);
    for (long long copy = 0; copy < m; ++copy)
        for (int p = q + 1; p < n; ++p) out.tree.nodes.push_back(nodes[p]);
    return out;
}

int topmost_scc_exit(const DerivationTree& t, const Grammar& g, int r) {
    // Production graph restricted to the rules used in sub(r), nonterminals only.
    std::set<std::pair<int, int>> edges;
    std::set<int> syms;
    for (int p = r; p < t.end_of(r); ++p) {
        const TreeNode& n = t.nodes[p];
        if (n.symbol < 0) continue;
        syms.insert(n.symbol);
        if (n.children == 2) {
            const Rule& rule = g.rules[n.rule];
            edges.insert({n.symbol, rule.left});
            edges.insert({n.symbol, rule.right});
        }
    }
    // SCC of the root symbol via double reachability.
    auto reach_from = [&](int s0, bool rev) {
        std::set<int> seen{s0};
        std::vector<int> work{s0};
        while (!work.empty()) {
            int v = work.back();
            work.pop_back();
            for (auto& [a, b] : edges) {
                int from = rev ? b : a, to = rev ? a : b;
                if (from == v && !seen.count(to)) {
                    seen.insert(to);
                    work.push_back(to);
                }
            }
        }
        return seen;
    };
    int root_sym = t.nodes[r].symbol;
    std::set<int> fwd = reach_from(root_sym, false), bwd = reach_from(root_sym, true);
    std::set<int> scc;
    for (int s : fwd)
        if (bwd.count(s)) scc.insert(s);

    int p = r;
    while (true) {
        const TreeNode& n = t.nodes[p];
        if (n.children != 2) return p;  // terminal child
        int c1 = t.first_child(p), c2 = t.second_child(p);
        bool in1 = t.nodes[c1].symbol >= 0 && scc.count(t.nodes[c1].symbol);
        bool in2 = t.nodes[c2].symbol >= 0 && scc.count(t.nodes[c2].symbol);
        if (in1 && in2) throw TreeError("nondegenerate rule in a thin derivation tree");
        if (in1) p = c1;
        else if (in2) p = c2;
        else return p;  // fully degenerate
    }
}

Division small_division(const DerivationTree& t, const Grammar& g) {
    Division d;
    std::vector<int> work;
    if (t.size() > 0 && t.nodes[0].symbol >= 0) work.push_back(0);
    while (!work.empty()) {
        int r = work.back();
        work.pop_back();
        int p = topmost_scc_exit(t, g, r);
        d.segs.push_back({r, p});
        if (t.nodes[p].children == 2) {
            // Right pushed first so roots come out in preorder.
            work.push_back(t.second_child(p));
            work.push_back(t.first_child(p));
        }
    }
    std::sort(d.segs.begin(), d.segs.end(), [](const DivSeg& a, const DivSeg& b) { return a.root < b.root; });
    return d;
}

void validate_division(const DerivationTree& t, const Division& d) {
    if (t.size() == 0) {
        if (!d.segs.empty()) throw TreeError("division of an empty tree must be empty");
        return;
    }
    std::map<int, int> by_root;
    for (size_t i = 0; i < d.segs.size(); ++i) {
        if (!by_root.emplace(d.segs[i].root, static_cast<int>(i)).second)
            throw TreeError("division: duplicate segment root");
    }
    std::vector<int> owner(t.size(), -1);
    if (!by_root.count(0)) throw TreeError("division: tree root not covered");
    for (size_t i = 0; i < d.segs.size(); ++i) {
        const DivSeg& s = d.segs[i];
        if (!(s.root <= s.exit && s.exit < t.end_of(s.root)))
            throw TreeError("division: exit outside segment root");
        for (int p = s.root; p < t.end_of(s.root); ++p) {
            if (p > s.exit && p < t.end_of(s.exit)) continue;  // below the exit
            if (owner[p] != -1) throw TreeError("division: node covered twice");
            owner[p] = static_cast<int>(i);
        }
        // Children of the exit: terminal leaves or child segment roots.
        int q = s.exit;
        if (t.nodes[q].children == 2) {
            for (int c : {t.first_child(q), t.second_child(q)})
                if (!by_root.count(c)) throw TreeError("division: uncovered exit child");
        } else if (t.nodes[q].children == 1) {
            int c = t.first_child(q);
            if (t.nodes[c].symbol >= 0) throw TreeError("division: leaf-rule exit with nonterminal child");
            owner[c] = static_cast<int>(i);
        } else if (t.nodes[q].cert) {
            // Opaque certificate subtree; ownership of the interior is implied.
            for (int p = q + 1; p < t.end_of(q); ++p) owner[p] = static_cast<int>(i);
        } else {
            throw TreeError("division: unexpanded exit node");
        }
    }
    for (int p = 0; p < t.size(); ++p)
        if (owner[p] == -1) throw TreeError("division: node not covered");
}

namespace {

void tree_text_rec(const DerivationTree& t, int p, const Configs* cfg, std::string& out) {
    const TreeNode& n = t.nodes[p];
    if (n.symbol == -1) {
        out += vec_text(n.value);
        return;
    }
    out += '(';
    out += "n" + std::to_string(n.symbol);
    if (cfg) out += "@" + vec_text(cfg->lv(p)) + ":" + vec_text(cfg->rv(p));
    if (n.cert) {
        out += " cert " + vec_text(n.cert_disp);
    } else if (n.children >= 1) {
        out += ' ';
        tree_text_rec(t, t.first_child(p), cfg, out);
        if (n.children == 2) {
            out += ' ';
            tree_text_rec(t, t.second_child(p), cfg, out);
        }
    }
    out += ')';
}

}  // namespace

std::string tree_text(const DerivationTree& t, const Configs* cfg) {
    std::string out;
    if (t.size() == 0) return out;
    // Symbol ids are printed as n<k>; the CLI substitutes real names.
    tree_text_rec(t, 0, cfg, out);
    return out;
}

namespace {

struct TextParser {
    const std::string& s;
    const Grammar& g;
    size_t i = 0;

    void skip() {
        while (i < s.size() && isspace(static_cast<unsigned char>(s[i]))) ++i;
    }
    std::string token() {
        skip();
        size_t j = i;
        while (j < s.size() && !isspace(static_cast<unsigned char>(s[j])) && s[j] != '(' && s[j] != ')')
            ++j;
        std::string t = s.substr(i, j - i);
        i = j;
        return t;
    }
    Vec vec() {
        Vec v;
        for (int k = 0; k < g.dim; ++k) v.push_back(std::stoll(token()));
        return v;
    }
    // Appends the parsed node, returns its size.
    int node(std::vector<TreeNode>& out) {
        skip();
        if (i >= s.size()) throw ParseError("tree text: unexpected end");
        if (s[i] != '(') {
            TreeNode leaf;
            leaf.value = vec();
            out.push_back(leaf);
            return 1;
        }
        ++i;  // '('
        std::string name = token();
        int sym = -1;
        if (name.size() > 1 && name[0] == 'n' && isdigit(static_cast<unsigned char>(name[1])))
            sym = std::stoi(name.substr(1));
        else
            sym = g.nt_id(name);
        if (sym < 0) throw ParseError("tree text: unknown symbol '" + name + "'");
        size_t here = out.size();
        TreeNode n;
        n.symbol = sym;
        out.push_back(n);
        int total = 1;
        skip();
        if (i < s.size() && s[i] == 'c' && s.compare(i, 4, "cert") == 0) {
            i += 4;
            out[here].cert = true;
            out[here].cert_disp = vec();
        } else {
            while (true) {
                skip();
                if (i >= s.size()) throw ParseError("tree text: missing ')'");
                if (s[i] == ')') break;
                total += node(out);
                ++out[here].children;
            }
        }
        skip();
        if (i >= s.size() || s[i] != ')') throw ParseError("tree text: missing ')'");
        ++i;
        out[here].subtree = total;
        return total;
    }
};

}  // namespace

DerivationTree tree_from_text(const std::string& s, const Grammar& g) {
    DerivationTree t;
    t.dim = g.dim;
    TextParser p{s, g};
    p.node(t.nodes);
    // Attach rules: infer from children.
    for (int q = 0; q < t.size(); ++q) {
        TreeNode& n = t.nodes[q];
        if (n.symbol < 0 || n.children == 0) continue;
        Rule want;
        want.head = n.symbol;
        if (n.children == 1) {
            want.is_leaf = true;
            want.vec = t.nodes[t.first_child(q)].value;
        } else {
            want.left = t.nodes[t.first_child(q)].symbol;
            want.right = t.nodes[t.second_child(q)].symbol;
        }
        auto it = std::find(g.rules.begin(), g.rules.end(), want);
        if (it == g.rules.end()) throw ParseError("tree text: node uses a rule not in the grammar");
        n.rule = static_cast<int>(it - g.rules.begin());
    }
    return t;
}

DerivationTree mirror_tree(const DerivationTree& t) {
    DerivationTree out;
    out.dim = t.dim;
    out.nodes.reserve(t.nodes.size());
    std::function<void(int)> rec = [&](int p) {
        TreeNode n = t.nodes[p];
        if (n.symbol == -1)
            for (long long& v : n.value) v = -v;
        if (n.cert)
            for (long long& v : n.cert_disp) v = -v;
        out.nodes.push_back(n);
        if (n.children == 1) rec(t.first_child(p));
        if (n.children == 2) {
            rec(t.second_child(p));
            rec(t.first_child(p));
        }
    };
    rec(0);
    return out;
}

DerivationTree remap_rules(const DerivationTree& t, const Grammar& from, const Grammar& to) {
    std::vector<int> sym_map(from.nonterminals.size());
    for (size_t x = 0; x < from.nonterminals.size(); ++x) {
        sym_map[x] = to.nt_id(from.nonterminals[x]);
        if (sym_map[x] < 0) throw TreeError("remap: symbol missing in the target grammar");
    }
    std::vector<int> rule_map(from.rules.size());
    for (size_t i = 0; i < from.rules.size(); ++i) {
        Rule want = from.rules[i];
        want.head = sym_map[want.head];
        if (!want.is_leaf) {
            want.left = sym_map[want.left];
            want.right = sym_map[want.right];
        }
        auto it = std::find(to.rules.begin(), to.rules.end(), want);
        if (it == to.rules.end()) throw TreeError("remap: rule missing in the target grammar");
        rule_map[i] = static_cast<int>(it - to.rules.begin());
    }
    DerivationTree out = t;
    for (TreeNode& n : out.nodes) {
        if (n.symbol >= 0) n.symbol = sym_map[n.symbol];
        if (n.rule >= 0) n.rule = rule_map[n.rule];
    }
    return out;
}

DerivationTree tree_from_leftmost_rules(const Grammar& g, const std::vector<int>& rules) {
    DerivationTree t;
    t.dim = g.dim;
    size_t next = 0;
    // Leftmost derivation order is the preorder of internal nodes.
    std::vector<TreeNode>& out = t.nodes;
    struct Frame {
        int idx;
        int remaining;
    };
    std::vector<Frame> stk;
    auto build = [&](auto&& self, int symbol) -> int {
        if (next >= rules.size()) throw TreeError("leftmost rule sequence too short");
        const Rule& r = g.rules[rules[next]];
        if (r.head != symbol) throw TreeError("leftmost rule sequence inconsistent");
        int rule_idx = rules[next++];
        int here = static_cast<int>(out.size());
        TreeNode n;
        n.symbol = symbol;
        n.rule = rule_idx;
        out.push_back(n);
        int total = 1;
        if (r.is_leaf) {
            TreeNode leaf;
            leaf.value = r.vec;
            out.push_back(leaf);
            out[here].children = 1;
            total += 1;
        } else {
            out[here].children = 2;
            total += self(self, r.left);
            total += self(self, r.right);
        }
        out[here].subtree = total;
        return total;
    };
    build(build, g.rules[rules.at(0)].head);
    if (next != rules.size()) throw TreeError("leftmost rule sequence too long");
    return t;
}

}  // namespace tgvas
