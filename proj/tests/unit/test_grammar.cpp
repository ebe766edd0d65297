#include "doctest.h"
#include "fixtures.hpp"
#include "tgvas/grammar.hpp"

using namespace tgvas;

TEST_CASE("parse figure-1 rule table") {
    Grammar g = parse_grammar(fixtures::kFig1);
    CHECK(g.dim == 1);
    CHECK(g.rules.size() == 18);
    CHECK(g.nonterminals.size() == 13);
    CHECK(g.nonterminals[g.start] == "X");
}

TEST_CASE("parse minimal grammar") {
    Grammar g = parse_grammar("gvas 1\nstart S\nS -> 0\n");
    CHECK(g.nonterminals.size() == 1);
    CHECK(g.terminal_set().size() == 1);
    CHECK(g.terminal_set()[0] == Vec{0});
}

TEST_CASE("parse errors") {
    CHECK_THROWS_AS(parse_grammar("gvas 1\nstart X\nX -> A B C\nA -> 0\nB -> 0\nC -> 0\n"),
                    ParseError);  // ternary body
    CHECK_THROWS_AS(parse_grammar("gvas 2\nstart S\nS -> 1\n"), ParseError);  // dim mismatch
    CHECK_THROWS_AS(parse_grammar("gvas 1\nstart S\nS -> U S\nS -> 0\n"), ParseError);  // undeclared
    CHECK_THROWS_AS(parse_grammar("gvas 1\nstart S\nS -> 0\nS -> 0\n"), ParseError);  // duplicate
    CHECK_THROWS_AS(parse_grammar("start S\nS -> 0\n"), ParseError);  // missing header
}

TEST_CASE("comments and blank lines are ignored") {
    Grammar g = parse_grammar("# top\ngvas 1\n\nstart S # trailing\nS -> 0\n");
    CHECK(g.rules.size() == 1);
}

TEST_CASE("make_proper removes unreachable and unproductive parts") {
    // U unreachable; W unproductive (only W -> W W).
    Grammar g = parse_grammar(
        "gvas 1\nstart S\nS -> 0\nU -> 1\nW -> W W\nS -> W S\n");
    Grammar p = make_proper(g);
    CHECK(p.nonterminals.size() == 1);
    CHECK(p.rules.size() == 1);
    // Idempotent.
    Grammar p2 = make_proper(p);
    CHECK(p2.rules.size() == p.rules.size());
    CHECK(p2.nonterminals == p.nonterminals);

    Grammar fig = fixtures::fig1();
    CHECK(fig.rules.size() == 18);  // already proper

    CHECK_THROWS_AS(make_proper(parse_grammar("gvas 1\nstart S\nS -> S S\n")), EmptyGrammarError);
}

TEST_CASE("induced sub-GVAS of figure 1") {
    Grammar g = fixtures::fig1();
    Grammar gc = induced_sub_gvas(g, g.nt_id("C"));
    std::vector<std::string> want{"C", "P", "D", "Q"};
    CHECK(gc.nonterminals.size() == 4);
    for (auto& n : want) CHECK(gc.nt_id(n) >= 0);
    CHECK(gc.rules.size() == 5);  // C->PD, C->PQ, D->CQ, P->, Q->

    Grammar ga = induced_sub_gvas(g, g.nt_id("A"));
    CHECK(ga.nonterminals.size() == 1);
    CHECK(ga.rules.size() == 1);

    Grammar gs = induced_sub_gvas(g, g.start);
    CHECK(gs.rules.size() == make_proper(g).rules.size());
}

TEST_CASE("mirror swaps bodies and negates terminals") {
    Grammar g = parse_grammar("gvas 1\nstart S\nS -> A B\nA -> 2\nB -> -3\nS -> -1\n");
    Grammar m = mirror(g);
    CHECK(m.rules[0].left == g.rules[0].right);
    CHECK(m.rules[0].right == g.rules[0].left);
    CHECK(m.rules[1].vec == Vec{-2});
    CHECK(m.rules[2].vec == Vec{3});
    CHECK(m.rules[3].vec == Vec{1});

    // Involution on figure 1.
    Grammar fig = fixtures::fig1();
    Grammar mm = mirror(mirror(fig));
    CHECK(mm.rules == fig.rules);
}

TEST_CASE("grammar_size") {
    GrammarSize s0 = grammar_size(fixtures::triv());
    CHECK(s0.symbol_count == 3);
    CHECK(s0.max_norm == 0);
    CHECK(s0.size == 3);  // zero norm clamps to 1

    GrammarSize s1 = grammar_size(parse_grammar("gvas 1\nstart S\nS -> -5\n"));
    CHECK(s1.max_norm == 5);

    Grammar fig = fixtures::fig1();
    GrammarSize sf = grammar_size(fig);
    CHECK(sf.max_norm == 1);
    CHECK(sf.size == sf.symbol_count);
}

TEST_CASE("random grammars survive make_proper and reparse") {
    for (unsigned seed = 1; seed <= 40; ++seed) {
        Grammar g = fixtures::random_thin_gvas(seed);
        Grammar p = make_proper(g);
        CHECK(p.rules.size() == g.rules.size());  // fixture output is already proper
        Grammar back = parse_grammar(format_grammar(g));
        CHECK(back.rules.size() == g.rules.size());
        CHECK(back.nonterminals == g.nonterminals);
    }
}
