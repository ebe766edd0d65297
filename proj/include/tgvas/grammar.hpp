#ifndef TGVAS_GRAMMAR_HPP
#define TGVAS_GRAMMAR_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tgvas {

using Vec = std::vector<long long>;  // integer vector of length dim

struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& m) : std::runtime_error(m) {}
};
struct EmptyGrammarError : std::runtime_error {
    explicit EmptyGrammarError(const std::string& m) : std::runtime_error(m) {}
};

// A production rule in Chomsky normal form: either X -> A B or X -> u.
struct Rule {
    int head = -1;
    bool is_leaf = false;
    int left = -1, right = -1;  // binary body
    Vec vec;                    // leaf body

    bool operator==(const Rule& o) const {
        return head == o.head && is_leaf == o.is_leaf && left == o.left && right == o.right &&
               vec == o.vec;
    }
};

struct GrammarSize {
    long long symbol_count = 0;  // |G|: nonterminals + distinct terminals + rules
    long long max_norm = 0;      // ||G||: largest l1-norm of a terminal
    long long size = 0;          // symbol_count * max(max_norm, 1)
};

// A d-dimensional GVAS: CNF grammar whose terminals are integer vectors.
// Immutable after construction; all operations below return fresh values.
struct Grammar {
    int dim = 1;
    std::vector<std::string> nonterminals;  // declaration order
    std::vector<Rule> rules;                // input order
    int start = -1;

    int nt_id(const std::string& name) const;
    const std::string& nt_name(int id) const { return nonterminals[id]; }
    std::vector<int> rules_of(int nt) const;
    std::vector<Vec> terminal_set() const;  // distinct terminal vectors, first-use order
    std::string rule_text(int rule_idx) const;
};

Grammar parse_grammar(const std::string& text);
std::string format_grammar(const Grammar& g);

// Maximal sub-grammar in which every symbol is reachable from the start and
// every nonterminal is productive. Idempotent. Throws EmptyGrammarError when
// the start symbol itself does not survive.
Grammar make_proper(const Grammar& g);

// Proper sub-GVAS induced by nonterminal x.
Grammar induced_sub_gvas(const Grammar& g, int x);

// X -> A B becomes X -> B A, terminals are negated.
Grammar mirror(const Grammar& g);

GrammarSize grammar_size(const Grammar& g);

long long l1_norm(const Vec& v);
std::string vec_text(const Vec& v);

}  // namespace tgvas

#endif
