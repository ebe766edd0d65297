#include "doctest.h"
#include "fixtures.hpp"
#include "tgvas/oracle.hpp"

using namespace tgvas;

namespace {

SearchBounds gen_bounds() {
    SearchBounds b;
    b.max_counter = 128;
    b.max_stack = 64;
    b.max_steps = 200000;
    b.delta_cap = 64;
    b.pump_length_bound = 32;
    return b;
}

KlmComponent capture_of(const Grammar& g, const DerivationTree& t) {
    Division d = small_division(t, g);
    REQUIRE(d.segs.size() >= 1);
    Segment seg = make_segment(t, d.segs[0].root, d.segs[0].exit);
    ExitRule exit;
    exit.grammar_rule = t.nodes[d.segs[0].exit].rule;
    return capture_component(g, seg, exit);
}

}  // namespace

TEST_CASE("bounded reach on the doubling ladder") {
    Grammar g = fixtures::ack1();
    SearchBounds b = gen_bounds();
    for (long long s = 0; s <= 8; ++s) {
        for (long long t = 0; t <= 18; ++t) {
            OracleVerdict v = bounded_reach(g, {s}, {t}, b);
            bool want = s <= t && t <= 2 * s;
            CHECK(v.kind == (want ? OracleVerdict::Yes : OracleVerdict::No));
            if (v.yes()) {
                Configs cfg = propagate_configurations(*v.witness, {false, {s}, {t}});
                CHECK(is_nonnegative(cfg));
            }
        }
    }
}

TEST_CASE("bounded reach on the trivial instance") {
    Grammar g = fixtures::triv();
    OracleVerdict v = bounded_reach(g, {5}, {5}, gen_bounds());
    CHECK(v.yes());
    CHECK(bounded_reach(g, {5}, {6}, gen_bounds()).no());
}

TEST_CASE("bounded cover") {
    Grammar g = fixtures::ack1();
    SearchBounds b = gen_bounds();
    CHECK(bounded_cover(g, {3}, {5}, b).yes());
    CHECK(bounded_cover(g, {3}, {7}, b).no());
    CHECK(bounded_cover(g, {0}, {1}, b).no());
    CHECK(bounded_cover(g, {3}, {0}, b).yes());
}

TEST_CASE("cover monotonicity in the target") {
    SearchBounds b = gen_bounds();
    for (unsigned seed = 1; seed <= 15; ++seed) {
        Grammar g = fixtures::random_thin_gvas(seed);
        for (long long s = 0; s <= 3; ++s) {
            bool prev_yes = false;
            for (long long t = 6; t >= 0; --t) {
                OracleVerdict v = bounded_cover(g, {s}, {t}, b);
                if (prev_yes && v.kind != OracleVerdict::Unknown) CHECK(v.yes());
                if (v.yes()) prev_yes = true;
            }
        }
    }
}

TEST_CASE("unknown on truncation") {
    Grammar g = make_proper(parse_grammar("gvas 1\nstart S\nS -> A S\nA -> 2\nS -> 0\n"));
    SearchBounds b = gen_bounds();
    b.max_counter = 16;
    OracleVerdict v = bounded_reach(g, {1}, {0}, b);
    CHECK(v.unknown());
    CHECK(v.exhausted == "max_counter");
}

TEST_CASE("delta of a single-decrement side grammar") {
    Grammar side = make_proper(parse_grammar("gvas 1\nstart A\nA -> -1\n"));
    DeltaFn delta(side, gen_bounds());
    CHECK(delta(ExtNat::fin(1)).value == ExtNat::fin(0));
    CHECK(delta(ExtNat::fin(0)).value == ExtNat::neg_omega());
    CHECK(delta(ExtNat::pos_omega()).value == ExtNat::pos_omega());
    CHECK(delta(ExtNat::neg_omega()).value == ExtNat::neg_omega());
}

TEST_CASE("delta monotonicity and the degenerate lower bound") {
    SearchBounds b = gen_bounds();
    for (unsigned seed = 1; seed <= 12; ++seed) {
        Grammar side = fixtures::random_thin_gvas(seed, 4);
        DeltaFn delta(side, b);
        std::vector<int> all;
        for (size_t i = 0; i < side.rules.size(); ++i) all.push_back(static_cast<int>(i));
        long long bound = l1_norm(min_acyclic_displacement(side, all, side.start));
        ExtNat prev = ExtNat::neg_omega();
        for (long long s = 0; s <= 12; ++s) {
            DeltaValue dv = delta(ExtNat::fin(s));
            if (dv.unknown) continue;
            CHECK(prev <= dv.value);
            if (!dv.at_least_cap) prev = dv.value;
            if (s >= bound && !dv.at_least_cap) CHECK(ExtNat::fin(s - bound) <= dv.value);
        }
    }
}

TEST_CASE("at-least-cap saturation") {
    Grammar side = make_proper(parse_grammar("gvas 1\nstart A\nA -> B A\nA -> 0\nB -> 1\n"));
    SearchBounds b = gen_bounds();
    b.delta_cap = 10;
    DeltaFn delta(side, b);
    DeltaValue dv = delta(ExtNat::fin(3));
    CHECK(dv.at_least_cap);
    CHECK(dv.value == ExtNat::fin(10));
}

TEST_CASE("degenerate bound of captured components") {
    Grammar g = fixtures::ack1();
    DerivationTree t = tree_from_text("(X1 (M -1) (R1 (X1 0) (T 2)))", g);
    KlmComponent c = capture_of(g, t);
    CHECK(degenerate_bound(g, c) == 2);  // |min disp| over sides: M gives 1, T gives 2

    Grammar g2 = make_proper(parse_grammar(
        "gvas 1\nstart X\nX -> A Y\nY -> X B\nX -> 0\nA -> B C\nB -> -2\nC -> -3\n"));
    DerivationTree t2 = tree_from_text("(X (A (B -2) (C -3)) (Y (X 0) (B -2)))", g2);
    KlmComponent c2 = capture_of(g2, t2);
    CHECK(degenerate_bound(g2, c2) == 5);  // fastest tree of A sums to -5
}

TEST_CASE("relation graph shape") {
    Grammar g = fixtures::crest();
    DerivationTree t = tree_from_text("(X (A 1) (Y (X 0) (B -1)))", g);
    KlmComponent c = capture_of(g, t);
    RelationGraph rg = relation_graph(g, c, Direction::Forward, gen_bounds());
    CHECK(rg.verts.size() == 2);
    REQUIRE(rg.edges.size() == 2);
    for (const auto& e : rg.edges) {
        CHECK(e.delta != nullptr);
        CHECK(e.from != e.to);
    }
}

TEST_CASE("forward pumping cycle on the crest loop") {
    Grammar g = fixtures::crest();
    DerivationTree t = tree_from_text("(X (A 1) (Y (X 0) (B -1)))", g);
    KlmComponent c = capture_of(g, t);
    c.fixed[kLsrc] = Vec{0};
    c.fixed[kRsrc] = Vec{0};
    PumpSearchResult res = find_pumping_cycle(g, c, Direction::Forward, true, true, gen_bounds());
    REQUIRE(res.cycle.has_value());
    CHECK(validate_pumping_cycle(g, c, *res.cycle));
    CHECK(res.cycle->cycle.root_symbol() == g.nt_id("X"));
    CHECK(res.cycle->cycle.leaf_symbol() == g.nt_id("X"));
}

TEST_CASE("no backward pumping cycle when every loop descends") {
    Grammar g = fixtures::crest();
    DerivationTree t = tree_from_text("(X (A 1) (Y (X 0) (B -1)))", g);
    KlmComponent c = capture_of(g, t);
    c.fixed[kLtgt] = Vec{0};
    c.fixed[kRtgt] = Vec{0};
    PumpSearchResult res = find_pumping_cycle(g, c, Direction::Backward, true, true, gen_bounds());
    CHECK(!res.cycle.has_value());
    CHECK(!res.unknown);
}

TEST_CASE("backward pumping cycle on the descending loop") {
    Grammar g = make_proper(parse_grammar(
        "gvas 1\nstart X\nX -> A Y\nY -> X B\nX -> 0\nA -> -1\nB -> 1\n"));
    DerivationTree t = tree_from_text("(X (A -1) (Y (X 0) (B 1)))", g);
    Configs cfg = propagate_configurations(t, {false, {1}, {1}});
    REQUIRE(is_nonnegative(cfg));
    KlmComponent c = capture_of(g, t);
    c.fixed[kLtgt] = Vec{0};
    c.fixed[kRtgt] = Vec{0};
    PumpSearchResult res = find_pumping_cycle(g, c, Direction::Backward, true, true, gen_bounds());
    REQUIRE(res.cycle.has_value());
    CHECK(validate_pumping_cycle(g, c, *res.cycle));
    CHECK(res.cycle->dir == Direction::Backward);
}

TEST_CASE("one-sided pumping with a free right side") {
    Grammar g = fixtures::crest();
    DerivationTree t = tree_from_text("(X (A 1) (Y (X 0) (B -1)))", g);
    KlmComponent c = capture_of(g, t);
    c.fixed[kLsrc] = Vec{0};
    PumpSearchResult res = find_pumping_cycle(g, c, Direction::Forward, true, false, gen_bounds());
    REQUIRE(res.cycle.has_value());
    CHECK(res.cycle->anchor_r.kind == ExtNat::PosOmega);
    CHECK(validate_pumping_cycle(g, c, *res.cycle));
}
