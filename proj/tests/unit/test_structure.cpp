#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "tgvas/structure.hpp"

using namespace tgvas;

namespace {

std::set<std::set<std::string>> nontrivial_sccs(const Grammar& g, const ProductionGraph& pg) {
    std::map<int, std::set<std::string>> by_id;
    for (int x = 0; x < pg.nt_count; ++x)
        if (pg.nontrivial_scc(x)) by_id[pg.scc_id[x]].insert(g.nonterminals[x]);
    std::set<std::set<std::string>> out;
    for (auto& [id, s] : by_id) out.insert(s);
    return out;
}

}  // namespace

TEST_CASE("figure-1 production graph SCCs") {
    Grammar g = fixtures::fig1();
    ProductionGraph pg = production_graph(g);
    std::set<std::set<std::string>> want{{"X", "Y", "Z"}, {"C", "D"}, {"E", "F"}};
    CHECK(nontrivial_sccs(g, pg) == want);
}

TEST_CASE("single-vertex SCCs for the trivial grammar") {
    Grammar g = fixtures::triv();
    ProductionGraph pg = production_graph(g);
    for (int v = 0; v < static_cast<int>(pg.adj.size()); ++v) CHECK(!pg.nontrivial_scc(v));
}

TEST_CASE("self-loop through a rule makes a nontrivial SCC") {
    Grammar g = make_proper(parse_grammar("gvas 1\nstart S\nS -> A S\nA -> 1\nS -> 0\n"));
    ProductionGraph pg = production_graph(g);
    CHECK(pg.nontrivial_scc(g.nt_id("S")));
    CHECK(!pg.nontrivial_scc(g.nt_id("A")));
}

TEST_CASE("rule classification on figure 1") {
    Grammar g = fixtures::fig1();
    ProductionGraph pg = production_graph(g);
    auto classify = [&](const std::string& text) {
        for (size_t i = 0; i < g.rules.size(); ++i)
            if (g.rule_text(static_cast<int>(i)) == text) return classify_rule(pg, g, static_cast<int>(i));
        FAIL("rule not found: ", text);
        return RuleClass::Leaf;
    };
    CHECK(classify("X -> A Y") == RuleClass::LeftDegenerate);
    CHECK(classify("Z -> X F") == RuleClass::RightDegenerate);
    CHECK(classify("Z -> C D") == RuleClass::FullyDegenerate);
    CHECK(classify("A -> 1") == RuleClass::Leaf);
}

TEST_CASE("thinness") {
    CHECK(is_thin(fixtures::fig1()));
    CHECK(is_thin(fixtures::ack2()));
    Grammar fat = make_proper(parse_grammar("gvas 1\nstart S\nS -> S S\nS -> 1\n"));
    CHECK(!is_thin(fat));
    CHECK_THROWS_AS(index_table(fat), NotThinError);
}

TEST_CASE("figure-1 index table") {
    Grammar g = fixtures::fig1();
    IndexTable t = index_table(g);
    auto iota = [&](const std::string& n) { return t.iota.at(g.nt_id(n)); };
    for (auto n : {"X", "Y", "Z"}) CHECK(iota(n) == 3);
    for (auto n : {"C", "D", "E", "F"}) CHECK(iota(n) == 2);
    for (auto n : {"A", "B", "P", "Q", "S", "T"}) CHECK(iota(n) == 1);
    CHECK(t.grammar_index == 3);
}

TEST_CASE("index of the CNF counter ladder grows by one per level") {
    // The CNF helper symbol joins each X_i's SCC, so iota(X_i) = i + 1 here.
    Grammar g1 = fixtures::ack1();
    IndexTable t1 = index_table(g1);
    CHECK(t1.iota.at(g1.nt_id("X1")) == 2);
    Grammar g2 = fixtures::ack2();
    IndexTable t2 = index_table(g2);
    CHECK(t2.iota.at(g2.nt_id("X1")) == 2);
    CHECK(t2.iota.at(g2.nt_id("X2")) == t2.iota.at(g2.nt_id("X1")) + 1);
}

TEST_CASE("SCC members share the index and the DP matches re-analysis") {
    for (unsigned seed = 1; seed <= 30; ++seed) {
        Grammar g = fixtures::random_thin_gvas(seed);
        ProductionGraph pg = production_graph(g);
        IndexTable t = index_table(g);
        for (int x = 0; x < static_cast<int>(g.nonterminals.size()); ++x) {
            for (int y = 0; y < static_cast<int>(g.nonterminals.size()); ++y)
                if (pg.scc_id[x] == pg.scc_id[y]) CHECK(t.iota.at(x) == t.iota.at(y));
            Grammar sub = induced_sub_gvas(g, x);
            IndexTable ts = index_table(sub);
            CHECK(ts.grammar_index == t.iota.at(x));
        }
    }
}

TEST_CASE("left-degenerate rules force index growth") {
    for (unsigned seed = 31; seed <= 50; ++seed) {
        Grammar g = fixtures::random_thin_gvas(seed);
        ProductionGraph pg = production_graph(g);
        IndexTable t = index_table(g);
        for (size_t i = 0; i < g.rules.size(); ++i) {
            if (classify_rule(pg, g, static_cast<int>(i)) != RuleClass::LeftDegenerate) continue;
            const Rule& r = g.rules[i];
            CHECK(t.iota.at(r.head) >= t.iota.at(r.left) + 1);
        }
    }
}
