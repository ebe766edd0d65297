#ifndef TGVAS_TESTS_FIXTURES_HPP
#define TGVAS_TESTS_FIXTURES_HPP

#include <random>
#include <string>

#include "tgvas/derivation.hpp"
#include "tgvas/grammar.hpp"
#include "tgvas/structure.hpp"

namespace fixtures {

// Production graph with three nontrivial SCCs {X,Y,Z}, {C,D}, {E,F}; all
// terminals have l1-norm 1.
inline const char* kFig1 = R"(gvas 1
start X
X -> A Y
Y -> B Z
Z -> X F
Z -> C D
C -> P D
C -> P Q
D -> C Q
F -> S E
E -> F T
A -> 1
B -> 1
B -> -1
P -> 1
Q -> -1
S -> 1
E -> -1
T -> 1
X -> 1
)";

// CNF encodings of the counter ladder X_i -> -1 X_i X_{i-1}; X1 doubles,
// X2 weakly computes 2^n.
inline const char* kAck1 = R"(gvas 1
start X1
X1 -> M R1
R1 -> X1 T
X1 -> 0
M -> -1
T -> 2
)";

inline const char* kAck2 = R"(gvas 1
start X2
X2 -> M R2
R2 -> X2 X1
X2 -> 1
X1 -> M R1
R1 -> X1 T
X1 -> 0
M -> -1
T -> 2
)";

// Two-symbol loop climbing on the left and descending on the right; the
// characteristic system of its capture has unbounded rule and exit variables.
inline const char* kCrest = R"(gvas 1
start X
X -> A Y
Y -> X B
X -> 0
A -> 1
B -> -1
)";

inline const char* kTriv = R"(gvas 1
start S
S -> 0
)";

inline tgvas::Grammar fig1() { return tgvas::make_proper(tgvas::parse_grammar(kFig1)); }
inline tgvas::Grammar ack1() { return tgvas::make_proper(tgvas::parse_grammar(kAck1)); }
inline tgvas::Grammar ack2() { return tgvas::make_proper(tgvas::parse_grammar(kAck2)); }
inline tgvas::Grammar crest() { return tgvas::make_proper(tgvas::parse_grammar(kCrest)); }
inline tgvas::Grammar triv() { return tgvas::make_proper(tgvas::parse_grammar(kTriv)); }

// Random proper thin 1-GVAS over at most `max_nt` nonterminals with terminal
// values in [-2, 2]. Deterministic in the seed; draws until a valid grammar
// appears.
inline tgvas::Grammar random_thin_gvas(unsigned seed, int max_nt = 6) {
    std::mt19937 rng(seed);
    for (int attempt = 0; attempt < 200; ++attempt) {
        int n = 2 + static_cast<int>(rng() % static_cast<unsigned>(max_nt - 1));
        std::string text = "gvas 1\nstart N0\n";
        int rules = 0;
        for (int x = 0; x < n; ++x) {
            int k = 1 + static_cast<int>(rng() % 2);
            for (int j = 0; j < k; ++j) {
                if (rng() % 2 == 0 || rules > 2 * n) {
                    long long v = static_cast<long long>(rng() % 5) - 2;
                    text += "N" + std::to_string(x) + " -> " + std::to_string(v) + "\n";
                } else {
                    int a = static_cast<int>(rng() % static_cast<unsigned>(n));
                    int b = static_cast<int>(rng() % static_cast<unsigned>(n));
                    text += "N" + std::to_string(x) + " -> N" + std::to_string(a) + " N" +
                            std::to_string(b) + "\n";
                }
                ++rules;
            }
        }
        try {
            tgvas::Grammar g = tgvas::make_proper(tgvas::parse_grammar(text));
            if (!tgvas::is_thin(g)) continue;
            if (g.rules.size() < 2) continue;
            return g;
        } catch (const std::exception&) {
            continue;
        }
    }
    return triv();
}

// Random complete derivation tree by leftmost expansion; switches to
// smallest-completion rules once the budget tightens.
inline tgvas::DerivationTree random_complete_tree(const tgvas::Grammar& g, unsigned seed,
                                                  int max_nodes) {
    using namespace tgvas;
    int n = static_cast<int>(g.nonterminals.size());
    const long long inf = 1 << 28;
    std::vector<long long> msize(n, inf);
    std::vector<int> finisher(n, -1);
    for (bool changed = true; changed;) {
        changed = false;
        for (size_t i = 0; i < g.rules.size(); ++i) {
            const Rule& r = g.rules[i];
            long long cand = r.is_leaf ? 2 : 1 + msize[r.left] + msize[r.right];
            if (cand < msize[r.head]) {
                msize[r.head] = cand;
                finisher[r.head] = static_cast<int>(i);
                changed = true;
            }
        }
    }
    std::mt19937 rng(seed);
    std::vector<int> pending{g.start};
    std::vector<int> rules;
    long long built = 0;
    while (!pending.empty()) {
        int x = pending.back();
        pending.pop_back();
        long long reserved = 0;
        for (int y : pending) reserved += msize[y];
        bool finish = built + reserved + msize[x] + 8 >= max_nodes;
        int pick;
        if (finish) {
            pick = finisher[x];
        } else {
            std::vector<int> options = g.rules_of(x);
            pick = options[rng() % options.size()];
        }
        rules.push_back(pick);
        const Rule& r = g.rules[pick];
        built += r.is_leaf ? 2 : 1;
        if (!r.is_leaf) {
            pending.push_back(r.right);
            pending.push_back(r.left);
        }
    }
    return tree_from_leftmost_rules(g, rules);
}

}  // namespace fixtures

#endif
