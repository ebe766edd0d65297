#include "tgvas/grammar.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace tgvas {

long long l1_norm(const Vec& v) {
    long long s = 0;
    for (long long x : v) s += x < 0 ? -x : x;
    return s;
}

std::string vec_text(const Vec& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ' ';
        s += std::to_string(v[i]);
    }
    return s;
}

int Grammar::nt_id(const std::string& name) const {
    for (size_t i = 0; i < nonterminals.size(); ++i)
        if (nonterminals[i] == name) return static_cast<int>(i);
    return -1;
}

std::vector<int> Grammar::rules_of(int nt) const {
    std::vector<int> r;
    for (size_t i = 0; i < rules.size(); ++i)
        if (rules[i].head == nt) r.push_back(static_cast<int>(i));
    return r;
}

std::vector<Vec> Grammar::terminal_set() const {
    std::vector<Vec> ts;
    for (const Rule& r : rules) {
        if (r.is_leaf && std::find(ts.begin(), ts.end(), r.vec) == ts.end()) ts.push_back(r.vec);
    }
    return ts;
}

std::string Grammar::rule_text(int rule_idx) const {
    const Rule& r = rules[rule_idx];
    std::string s = nonterminals[r.head] + " -> ";
    if (r.is_leaf) return s + vec_text(r.vec);
    return s + nonterminals[r.left] + " " + nonterminals[r.right];
}

namespace {

bool is_integer_token(const std::string& t) {
    size_t i = (t[0] == '-' || t[0] == '+') ? 1 : 0;
    if (i == t.size()) return false;
    for (; i < t.size(); ++i)
        if (!isdigit(static_cast<unsigned char>(t[i]))) return false;
    return true;
}

[[noreturn]] void fail(int line, const std::string& msg) {
    throw ParseError("line " + std::to_string(line) + ": " + msg);
}

}  // namespace

Grammar parse_grammar(const std::string& text) {
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;

    struct RawRule {
        int line;
        std::string head;
        std::vector<std::string> body;
    };
    std::optional<int> dim;
    std::optional<std::string> start;
    std::vector<RawRule> raw_rules;

    while (std::getline(in, raw)) {
        ++lineno;
        if (auto pos = raw.find('#'); pos != std::string::npos) raw.resize(pos);
        std::istringstream ls(raw);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty()) continue;

        if (!dim) {
            if (tok.size() != 2 || tok[0] != "gvas" || !is_integer_token(tok[1]))
                fail(lineno, "expected header 'gvas <d>'");
            dim = std::stoi(tok[1]);
            if (*dim <= 0) fail(lineno, "dimension must be positive");
            continue;
        }
        if (!start) {
            if (tok.size() != 2 || tok[0] != "start") fail(lineno, "expected 'start <X>'");
            start = tok[1];
            continue;
        }
        if (tok.size() < 3 || tok[1] != "->") fail(lineno, "expected '<X> -> ...'");
        if (is_integer_token(tok[0])) fail(lineno, "rule head must be a nonterminal");
        raw_rules.push_back({lineno, tok[0], {tok.begin() + 2, tok.end()}});
    }
    if (!dim || !start) throw ParseError("missing 'gvas <d>' / 'start <X>' header");

    Grammar g;
    g.dim = *dim;
    std::map<std::string, int> ids;
    auto intern = [&](const std::string& n) {
        auto it = ids.find(n);
        if (it != ids.end()) return it->second;
        int id = static_cast<int>(g.nonterminals.size());
        ids.emplace(n, id);
        g.nonterminals.push_back(n);
        return id;
    };

    // Heads first, in declaration order, so indices are reproducible.
    for (const RawRule& rr : raw_rules) intern(rr.head);

    for (const RawRule& rr : raw_rules) {
        Rule r;
        r.head = intern(rr.head);
        bool numeric = is_integer_token(rr.body[0]);
        if (numeric) {
            if (static_cast<int>(rr.body.size()) != g.dim)
                fail(rr.line, "terminal vector has wrong dimension (expected " +
                                  std::to_string(g.dim) + ")");
            r.is_leaf = true;
            for (const std::string& t : rr.body) {
                if (!is_integer_token(t)) fail(rr.line, "malformed terminal component '" + t + "'");
                r.vec.push_back(std::stoll(t));
            }
        } else {
            if (rr.body.size() != 2)
                fail(rr.line, "rule body must be two nonterminals or one terminal vector");
            for (const std::string& t : rr.body)
                if (is_integer_token(t)) fail(rr.line, "mixed body: '" + t + "'");
            if (ids.find(rr.body[0]) == ids.end()) fail(rr.line, "undeclared symbol '" + rr.body[0] + "'");
            if (ids.find(rr.body[1]) == ids.end()) fail(rr.line, "undeclared symbol '" + rr.body[1] + "'");
            r.left = ids[rr.body[0]];
            r.right = ids[rr.body[1]];
        }
        if (std::find(g.rules.begin(), g.rules.end(), r) != g.rules.end())
            fail(rr.line, "duplicate rule");
        g.rules.push_back(r);
    }

    if (ids.find(*start) == ids.end())
        throw ParseError("start symbol '" + *start + "' has no rules");
    g.start = ids[*start];
    return g;
}

std::string format_grammar(const Grammar& g) {
    std::string s = "gvas " + std::to_string(g.dim) + "\n";
    s += "start " + g.nonterminals[g.start] + "\n";
    for (size_t i = 0; i < g.rules.size(); ++i) s += g.rule_text(static_cast<int>(i)) + "\n";
    return s;
}

namespace {

Grammar keep_rules(const Grammar& g, const std::vector<bool>& keep, int start) {
    Grammar out;
    out.dim = g.dim;
    std::map<int, int> remap;
    // Nonterminal order follows the original declaration order.
    for (int x = 0; x < static_cast<int>(g.nonterminals.size()); ++x) {
        bool used = false;
        for (size_t i = 0; i < g.rules.size(); ++i) {
            if (!keep[i]) continue;
            const Rule& r = g.rules[i];
            if (r.head == x || (!r.is_leaf && (r.left == x || r.right == x))) used = true;
        }
        if (used) {
            remap[x] = static_cast<int>(out.nonterminals.size());
            out.nonterminals.push_back(g.nonterminals[x]);
        }
    }
    for (size_t i = 0; i < g.rules.size(); ++i) {
        if (!keep[i]) continue;
        Rule r = g.rules[i];
        r.head = remap.at(r.head);
        if (!r.is_leaf) {
            r.left = remap.at(r.left);
            r.right = remap.at(r.right);
        }
        out.rules.push_back(r);
    }
    out.start = remap.at(start);
    return out;
}

}  // namespace

Grammar make_proper(const Grammar& g) {
    int n = static_cast<int>(g.nonterminals.size());
    // Productive nonterminals: least fixpoint.
    std::vector<bool> prod(n, false);
    for (bool changed = true; changed;) {
        changed = false;
        for (const Rule& r : g.rules) {
            if (prod[r.head]) continue;
            if (r.is_leaf || (prod[r.left] && prod[r.right])) {
                prod[r.head] = true;
                changed = true;
            }
        }
    }
    if (!prod[g.start]) throw EmptyGrammarError("start symbol has no complete derivation");

    // Reachability from the start over rules whose body is fully productive.
    std::vector<bool> reach(n, false);
    reach[g.start] = true;
    for (bool changed = true; changed;) {
        changed = false;
        for (const Rule& r : g.rules) {
            if (!reach[r.head] || r.is_leaf) continue;
            if (prod[r.left] && prod[r.right]) {
                if (!reach[r.left]) reach[r.left] = changed = true;
                if (!reach[r.right]) reach[r.right] = changed = true;
            }
        }
    }

    std::vector<bool> keep(g.rules.size(), false);
    for (size_t i = 0; i < g.rules.size(); ++i) {
        const Rule& r = g.rules[i];
        keep[i] = reach[r.head] && prod[r.head] &&
                  (r.is_leaf || (prod[r.left] && prod[r.right]));
    }
    return keep_rules(g, keep, g.start);
}

Grammar induced_sub_gvas(const Grammar& g, int x) {
    if (x < 0 || x >= static_cast<int>(g.nonterminals.size()))
        throw std::out_of_range("induced_sub_gvas: unknown nonterminal");
    int n = static_cast<int>(g.nonterminals.size());
    std::vector<bool> reach(n, false);
    reach[x] = true;
    for (bool changed = true; changed;) {
        changed = false;
        for (const Rule& r : g.rules) {
            if (!reach[r.head] || r.is_leaf) continue;
            if (!reach[r.left]) reach[r.left] = changed = true;
            if (!reach[r.right]) reach[r.right] = changed = true;
        }
    }
    std::vector<bool> keep(g.rules.size(), false);
    for (size_t i = 0; i < g.rules.size(); ++i) keep[i] = reach[g.rules[i].head];
    return make_proper(keep_rules(g, keep, x));
}

Grammar mirror(const Grammar& g) {
    Grammar out = g;
    for (Rule& r : out.rules) {
        if (r.is_leaf) {
            for (long long& v : r.vec) v = -v;
        } else {
            std::swap(r.left, r.right);
        }
    }
    return out;
}

GrammarSize grammar_size(const Grammar& g) {
    GrammarSize s;
    s.symbol_count = static_cast<long long>(g.nonterminals.size() + g.terminal_set().size() +
                                            g.rules.size());
    for (const Rule& r : g.rules)
        if (r.is_leaf) s.max_norm = std::max(s.max_norm, l1_norm(r.vec));
    s.size = s.symbol_count * std::max(s.max_norm, 1LL);
    return s;
}

}  // namespace tgvas
