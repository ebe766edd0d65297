#include "doctest.h"
#include "fixtures.hpp"
#include "tgvas/klm.hpp"

using namespace tgvas;

namespace {

std::string ack1_text(int loops) {
    std::string s = "(X1 0)";
    for (int i = 0; i < loops; ++i) s = "(X1 (M -1) (R1 " + s + " (T 2)))";
    return s;
}

}  // namespace

TEST_CASE("capture of the counter-ladder descent") {
    Grammar g = fixtures::ack1();
    DerivationTree t = tree_from_text(ack1_text(3), g);
    Division d = small_division(t, g);
    REQUIRE(d.segs.size() == 1);
    Segment seg = make_segment(t, d.segs[0].root, d.segs[0].exit);
    ExitRule exit;
    exit.grammar_rule = t.nodes[d.segs[0].exit].rule;
    KlmComponent c = capture_component(g, seg, exit);
    CHECK(!c.trivial());
    CHECK(c.src.nt == g.nt_id("X1"));
    CHECK(c.tgt.nt == g.nt_id("X1"));
    CHECK(c.scc_rules.size() == 2);
    CHECK(c.left_rules.size() == 1);   // M -> -1
    CHECK(c.right_rules.size() == 1);  // T -> 2
    CHECK(check_capture(g, c, seg, {false, {3}, {6}}));

    // Missing left rule breaks the capture.
    KlmComponent broken = c;
    broken.left_rules.clear();
    CHECK(!check_capture(g, broken, seg, {false, {3}, {6}}));
}

TEST_CASE("trivial segment capture") {
    Grammar g = fixtures::triv();
    DerivationTree t = tree_from_text("(S 0)", g);
    Segment seg = make_segment(t, 0, 0);
    ExitRule exit;
    exit.grammar_rule = t.nodes[0].rule;
    KlmComponent c = capture_component(g, seg, exit);
    CHECK(c.trivial());
    CHECK(check_capture(g, c, seg, {false, {0}, {0}}));
}

TEST_CASE("initial KLM tree of the trivial instance") {
    Grammar g = fixtures::triv();
    DerivationTree t = tree_from_text("(S 0)", g);
    KlmTree kt = initial_klm_tree(g, {0}, {0}, t);
    REQUIRE(kt.nodes.size() == 1);
    CHECK(kt.nodes[0].comp.trivial());
    CHECK(kt.nodes[0].term.has_value());
    check_klm_tree(g, kt);
    CharSystem cs = char_system(g, kt);
    auto sol = solve_one(cs.sys);
    REQUIRE(sol.has_value());
    for (const BigInt& v : *sol) CHECK(v.is_zero());
}

TEST_CASE("characteristic system of the ladder instance") {
    Grammar g = fixtures::ack1();
    DerivationTree t = tree_from_text(ack1_text(3), g);
    KlmTree kt = initial_klm_tree(g, {3}, {6}, t);
    check_klm_tree(g, kt);
    CharSystem cs = char_system(g, kt);
    auto sols = minimal_solutions(cs.sys);
    REQUIRE(sols.size() == 1);
    // All four rules fire three times, exit configuration (0,0).
    CHECK(sols[0][cs.pk(0, RuleSpace::Scc, 0)] == BigInt(3));
    CHECK(sols[0][cs.pk(0, RuleSpace::Scc, 1)] == BigInt(3));
    CHECK(sols[0][cs.pk(0, RuleSpace::Left, 0)] == BigInt(3));
    CHECK(sols[0][cs.pk(0, RuleSpace::Right, 0)] == BigInt(3));
    CHECK(sols[0][cs.cfg(0, kLtgt)] == BigInt(0));
    CHECK(sols[0][cs.cfg(0, kRtgt)] == BigInt(0));

    // Unreachable targets make the system infeasible at the Z level too.
    KlmTree kt2 = kt;
    kt2.nodes[0].comp.fixed[kRsrc] = Vec{8};
    CHECK(minimal_solutions(char_system(g, kt2).sys).empty());
}

TEST_CASE("witness assignment satisfies the characteristic system") {
    Grammar g = fixtures::ack1();
    for (int loops : {0, 1, 2, 3}) {
        DerivationTree t = tree_from_text(ack1_text(loops), g);
        Vec src{3}, tgt{3 + loops};
        KlmTree kt = initial_klm_tree(g, src, tgt, t);
        CharSystem cs = char_system(g, kt);
        CHECK(!minimal_solutions(cs.sys).empty());
    }
}

TEST_CASE("geometric dimension") {
    Grammar g = fixtures::ack1();
    DerivationTree t = tree_from_text(ack1_text(2), g);
    KlmTree kt = initial_klm_tree(g, {2}, {4}, t);
    CHECK(geometric_dimension(g, kt.nodes[0].comp) == 1);  // sole effect (-1, 2)

    // Trivial components have dimension 0.
    Grammar tg = fixtures::triv();
    DerivationTree tt = tree_from_text("(S 0)", tg);
    KlmTree tkt = initial_klm_tree(tg, {0}, {0}, tt);
    CHECK(geometric_dimension(tg, tkt.nodes[0].comp) == 0);

    // Two independent loop effects span the plane.
    Grammar g2 = make_proper(parse_grammar(
        "gvas 1\nstart X\nX -> A X\nX -> X B\nX -> 0\nA -> 1\nB -> -1\n"));
    std::string text = "(X (A 1) (X (X 0) (B -1)))";
    DerivationTree t2 = tree_from_text(text, g2);
    KlmTree kt2 = initial_klm_tree(g2, {0}, {0}, t2);
    REQUIRE(!kt2.nodes[0].comp.trivial());
    CHECK(geometric_dimension(g2, kt2.nodes[0].comp) == 2);
}

TEST_CASE("component index") {
    Grammar g = fixtures::ack2();
    // Witness: X2 from 2 to 4 = one descent of X2, X1 doubling below.
    std::string inner = "(X1 (M -1) (R1 (X1 (M -1) (R1 (X1 0) (T 2))) (T 2)))";
    std::string text = "(X2 (M -1) (R2 (X2 1) " + inner + "))";
    DerivationTree t = tree_from_text(text, g);
    Configs c = propagate_configurations(t, {false, {2}, {4}});
    REQUIRE(is_nonnegative(c));
    KlmTree kt = initial_klm_tree(g, {2}, {4}, t);
    // The top component hangs the X1 sub-ladder on the right: its index is
    // the index of the X1 sub-grammar.
    bool found = false;
    for (const KlmNode& n : kt.nodes) {
        if (n.comp.trivial()) continue;
        if (n.comp.src.nt == g.nt_id("X2")) {
            CHECK(component_index(g, n.comp) == 2);
            found = true;
        }
    }
    CHECK(found);
}

TEST_CASE("tree rank counting") {
    Grammar g = fixtures::ack1();
    DerivationTree t = tree_from_text(ack1_text(2), g);
    KlmTree kt = initial_klm_tree(g, {2}, {4}, t);
    // k = 2 for this grammar's component scale: rank classes (1,2),(1,1).
    TreeRank r = tree_rank(g, kt, 2, 1);
    REQUIRE(r.counts.size() == 2);
    CHECK(r.counts[0] == 0);  // (1,2)
    CHECK(r.counts[1] == 1);  // (1,1)

    TreeRank all_trivial = tree_rank(fixtures::triv(), initial_klm_tree(fixtures::triv(), {0}, {0},
                                     tree_from_text("(S 0)", fixtures::triv())), 2, 1);
    CHECK(all_trivial.counts == std::vector<long long>{0, 0});

    CHECK(TreeRank{{0, 1}} < TreeRank{{1, 0}});
    CHECK(TreeRank{{1, 0}} < TreeRank{{1, 1}});
}

TEST_CASE("euler realization round trips the Parikh image") {
    Grammar g = fixtures::ack1();
    DerivationTree t = tree_from_text(ack1_text(3), g);
    KlmTree kt = initial_klm_tree(g, {3}, {6}, t);
    const KlmComponent& c = kt.nodes[0].comp;

    CompParikh p;
    p.count[{static_cast<int>(RuleSpace::Scc), 0}] = 3;
    p.count[{static_cast<int>(RuleSpace::Scc), 1}] = 3;
    p.count[{static_cast<int>(RuleSpace::Left), 0}] = 3;
    p.count[{static_cast<int>(RuleSpace::Right), 0}] = 3;
    Segment seg = euler_cycle_from_parikh(g, c, p, c.src);
    CHECK(seg.tree.is_quasi_complete() == false);  // one nonterminal leaf
    CHECK(seg.root_symbol() == c.src.nt);
    CHECK(seg.leaf_symbol() == c.src.nt);
    // Parikh image of the realized segment equals the input exactly.
    std::map<int, long long> used;
    for (const TreeNode& n : seg.tree.nodes)
        if (n.symbol >= 0 && n.children > 0) ++used[n.rule];
    CHECK(used.size() == 4);
    for (auto& [rule, cnt] : used) CHECK(cnt == 3);
    // It really is a derivation segment of the grammar.
    seg.tree.check_well_formed(g);

    // Degree-unbalanced Parikh image is rejected.
    CompParikh bad = p;
    bad.count[{static_cast<int>(RuleSpace::Scc), 0}] = 2;
    CHECK_THROWS_AS(euler_cycle_from_parikh(g, c, bad, c.src), UnrealizableParikh);
}

TEST_CASE("euler realization on a two-symbol SCC") {
    Grammar g = fixtures::crest();
    DerivationTree t = tree_from_text("(X (A 1) (Y (X 0) (B -1)))", g);
    KlmTree kt = initial_klm_tree(g, {0}, {0}, t);
    const KlmComponent& c = kt.nodes[0].comp;
    REQUIRE(c.scc_rules.size() == 2);
    CompParikh p;
    p.count[{static_cast<int>(RuleSpace::Scc), 0}] = 2;
    p.count[{static_cast<int>(RuleSpace::Scc), 1}] = 2;
    p.count[{static_cast<int>(RuleSpace::Left), 0}] = 2;
    p.count[{static_cast<int>(RuleSpace::Right), 0}] = 2;
    Segment seg = euler_cycle_from_parikh(g, c, p, c.src);
    seg.tree.check_well_formed(g);
    CHECK(segment_path(seg.tree, 0, seg.leaf).size() == 5);  // X Y X Y X
}
