#include "tgvas/oracle.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>

namespace tgvas {

int RelationGraph::vertex_of(const CompSym& s) const {
    auto it = std::lower_bound(verts.begin(), verts.end(), s);
    if (it == verts.end() || !(*it == s)) throw KlmError("relation graph: unknown vertex");
    return static_cast<int>(it - verts.begin());
}

namespace {

struct BfsOutcome {
    bool truncated = false;
    std::string which;
    std::optional<std::vector<int>> accept_rules;  // leftmost rule sequence
    std::vector<Vec> final_counters;               // empty-stack counters (collect mode)
};

// Leftmost-derivation BFS. A state is the pending nonterminal stack plus the
// counter; terminals are absorbed eagerly, so stacks hold nonterminals only.
// In collect mode all empty-stack counters are gathered instead of stopping
// at a target.
BfsOutcome derivation_bfs(const Grammar& g, const Vec& s, const Vec* reach_target,
                          const Vec* cover_target, const SearchBounds& b, bool collect) {
    BfsOutcome out;
    using State = std::pair<std::vector<int>, Vec>;
    std::map<State, int> index;
    struct NodeInfo {
        int parent;
        int rule;
    };
    std::vector<NodeInfo> info;
    std::vector<const State*> states;
    std::deque<int> queue;

    auto push = [&](State st, int parent, int rule) {
        auto [it, fresh] = index.try_emplace(std::move(st), static_cast<int>(states.size()));
        if (!fresh) return;
        states.push_back(&it->first);
        info.push_back({parent, rule});
        queue.push_back(it->second);
    };
    auto rule_chain = [&](int id) {
        std::vector<int> rules;
        for (int cur = id; cur >= 0 && info[cur].rule >= 0; cur = info[cur].parent)
            rules.push_back(info[cur].rule);
        std::reverse(rules.begin(), rules.end());
        return rules;
    };
    auto accepts = [&](const Vec& counter) {
        if (reach_target) return counter == *reach_target;
        if (cover_target) {
            for (int k = 0; k < g.dim; ++k)
                if (counter[k] < (*cover_target)[k]) return false;
            return true;
        }
        return false;
    };

    for (int k = 0; k < g.dim; ++k) {
        if (s[k] < 0) return out;  // no states at all: definite No
        if (s[k] > b.max_counter) {
            out.truncated = true;
            out.which = "max_counter";
            return out;
        }
    }
    push({{g.start}, s}, -1, -1);
    long long steps = 0;
    std::set<Vec> finals;
    while (!queue.empty()) {
        if (++steps > b.max_steps) {
            out.truncated = true;
            out.which = "max_steps";
            return out;
        }
        int id = queue.front();
        queue.pop_front();
        State st = *states[id];
        if (st.first.empty()) {
            if (!collect && accepts(st.second)) {
                out.accept_rules = rule_chain(id);
                return out;
            }
            finals.insert(st.second);
            continue;
        }
        int x = st.first.back();
        for (int ri : g.rules_of(x)) {
            const Rule& r = g.rules[ri];
            State next = st;
            next.first.pop_back();
            if (r.is_leaf) {
                bool ok = true;
                for (int k = 0; k < g.dim; ++k) {
                    next.second[k] += r.vec[k];
                    if (next.second[k] < 0) ok = false;
                    if (next.second[k] > b.max_counter) {
                        ok = false;
                        out.truncated = true;
                        out.which = "max_counter";
                    }
                }
                if (!ok) continue;
            } else {
                next.first.push_back(r.right);
                next.first.push_back(r.left);
                if (static_cast<long long>(next.first.size()) > b.max_stack) {
                    out.truncated = true;
                    out.which = "max_stack";
                    continue;
                }
            }
            push(std::move(next), id, ri);
        }
    }
    out.final_counters.assign(finals.begin(), finals.end());
    return out;
}

OracleVerdict verdict_from(const Grammar& g, const Vec& s, const BfsOutcome& out, bool cover,
                           const Vec& t) {
    OracleVerdict v;
    if (out.accept_rules) {
        DerivationTree w = tree_from_leftmost_rules(g, *out.accept_rules);
        Vec end = s;
        Vec d = displacement(w);
        for (int k = 0; k < g.dim; ++k) end[k] += d[k];
        Configs cfg = propagate_configurations(w, {false, s, end});
        if (!is_nonnegative(cfg)) throw TreeError("oracle produced a negative witness");
        for (int k = 0; k < g.dim; ++k) {
            if (cover ? end[k] < t[k] : end[k] != t[k])
                throw TreeError("oracle witness misses its target");
        }
        v.kind = OracleVerdict::Yes;
        v.witness = std::move(w);
        return v;
    }
    if (out.truncated) {
        v.kind = OracleVerdict::Unknown;
        v.exhausted = out.which;
    } else {
        v.kind = OracleVerdict::No;
    }
    return v;
}

}  // namespace

OracleVerdict bounded_reach(const Grammar& g, const Vec& s, const Vec& t, const SearchBounds& b) {
    BfsOutcome out = derivation_bfs(g, s, &t, nullptr, b, false);
    return verdict_from(g, s, out, false, t);
}

OracleVerdict bounded_cover(const Grammar& g, const Vec& s, const Vec& t, const SearchBounds& b) {
    BfsOutcome out = derivation_bfs(g, s, nullptr, &t, b, false);
    return verdict_from(g, s, out, true, t);
}

// ---- delta ----

DeltaFn::DeltaFn(Grammar side, const SearchBounds& b) : side_(std::move(side)), bounds_(b) {}

DeltaValue DeltaFn::operator()(const ExtNat& s) const {
    if (s.kind == ExtNat::NegOmega) return {ExtNat::neg_omega(), false, false};
    if (s.kind == ExtNat::PosOmega) return {ExtNat::pos_omega(), false, false};
    if (s.value < 0) return {ExtNat::neg_omega(), false, false};
    auto it = cache_.find(s.value);
    if (it != cache_.end()) return it->second;

    DeltaValue dv;
    if (s.value > bounds_.delta_cap) {
        dv = {ExtNat::fin(bounds_.delta_cap), true, false};
    } else {
        SearchBounds b = bounds_;
        b.max_counter = bounds_.delta_cap;
        BfsOutcome out = derivation_bfs(side_, {s.value}, nullptr, nullptr, b, true);
        long long best = -1;
        for (const Vec& f : out.final_counters) best = std::max(best, f[0]);
        if (best == bounds_.delta_cap) dv = {ExtNat::fin(best), true, false};
        else if (out.truncated) dv = {ExtNat::fin(0), false, true};
        else if (best < 0) dv = {ExtNat::neg_omega(), false, false};
        else dv = {ExtNat::fin(best), false, false};
    }
    cache_[s.value] = dv;
    return dv;
}

// ---- degenerate bound ----

long long degenerate_bound(const Grammar& g, const KlmComponent& c) {
    if (c.trivial()) return 0;
    long long best = 0;
    auto side = [&](bool left) {
        const std::vector<int>& rules = left ? c.left_rules : c.right_rules;
        std::set<int> roots;
        for (const SccRule& sr : c.scc_rules)
            if (sr.left_deg == left && !(c.annotated && c.annot_left == left))
                roots.insert(sr.side_nt);
        for (int a : roots) best = std::max(best, l1_norm(min_acyclic_displacement(g, rules, a)));
        for (const CertRule& cr : c.certs(left)) best = std::max(best, l1_norm(cr.disp));
    };
    side(true);
    side(false);
    return best;
}

// ---- relation graph ----

RelationGraph relation_graph(const Grammar& g, const KlmComponent& c, Direction dir,
                             const SearchBounds& b) {
    if (g.dim != 1) throw KlmError("relation graphs are defined for dimension 1");
    RelationGraph rg;
    rg.dir = dir;
    std::set<CompSym> vs{c.src, c.tgt};
    for (const SccRule& sr : c.scc_rules) {
        vs.insert(sr.head);
        vs.insert(sr.path_child);
    }
    rg.verts.assign(vs.begin(), vs.end());

    std::map<std::pair<int, bool>, std::shared_ptr<DeltaFn>> cache;
    auto delta_for = [&](int side_nt, bool left, bool mirrored) {
        auto key = std::make_pair(side_nt, mirrored);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
        const std::vector<int>& rules = left ? c.left_rules : c.right_rules;
        Grammar side = induced_sub_gvas(sub_grammar(g, rules, side_nt), 0);
        if (mirrored) side = mirror(side);
        auto fn = std::make_shared<DeltaFn>(std::move(side), b);
        cache[key] = fn;
        return fn;
    };

    for (size_t j = 0; j < c.scc_rules.size(); ++j) {
        const SccRule& sr = c.scc_rules[j];
        RelationGraph::Edge e;
        e.scc_rule = static_cast<int>(j);
        e.left_deg = sr.left_deg;
        int h = rg.vertex_of(sr.head), p = rg.vertex_of(sr.path_child);
        e.from = dir == Direction::Forward ? h : p;
        e.to = dir == Direction::Forward ? p : h;
        if (c.annotated && c.annot_left == sr.left_deg) {
            // Search-direction jump of the hard-encoded side.
            Vec d(g.dim);
            for (int k = 0; k < g.dim; ++k) d[k] = (*sr.path_child.enc)[k] - (*sr.head.enc)[k];
            if (dir == Direction::Backward)
                for (long long& x : d) x = -x;
            e.cert_disp = d;
        } else {
            // Forward: the right side works on the mirrored hang; backward flips.
            bool mirrored = sr.left_deg == (dir == Direction::Backward);
            e.delta = delta_for(sr.side_nt, sr.left_deg, mirrored);
        }
        rg.edges.push_back(std::move(e));
    }
    return rg;
}

// ---- pumping ----

namespace {

struct PumpState {
    int vertex;
    ExtNat l, r;
    int steps;
    int parent;
    int edge;
};

bool dominates(const PumpState& a, const PumpState& b) {
    return a.steps <= b.steps && b.l <= a.l && b.r <= a.r;
}

struct ExtConfigs {
    std::vector<ExtNat> l, r;
};

bool nonneg(const ExtNat& v) { return v.kind == ExtNat::PosOmega || (v.is_fin() && v.value >= 0); }

// d = 1 segment propagation over extended naturals, both ends anchored; the
// nonterminal leaf decouples the forward and backward sweeps.
ExtConfigs ext_propagate(const DerivationTree& t, int leaf, ExtNat l_root, ExtNat r_root) {
    std::vector<ExtNat> entry(t.size() + 1), exit_run(t.size() + 1);
    ExtNat cur = l_root;
    for (int p = 0; p < t.size(); ++p) {
        entry[p] = cur;
        const TreeNode& n = t.nodes[p];
        if (n.symbol == -1) cur = cur.plus(n.value[0]);
        else if (n.cert) cur = cur.plus(n.cert_disp[0]);
    }
    entry[t.size()] = cur;
    cur = r_root;
    for (int p = t.size(); p-- > 0;) {
        exit_run[p + 1] = cur;
        const TreeNode& n = t.nodes[p];
        if (n.symbol == -1) cur = cur.plus(-n.value[0]);
        else if (n.cert) cur = cur.plus(-n.cert_disp[0]);
    }
    exit_run[0] = cur;

    ExtConfigs c;
    c.l.resize(t.size());
    c.r.resize(t.size());
    for (int p = 0; p < t.size(); ++p) {
        if (t.end_of(p) <= leaf) {
            c.l[p] = entry[p];
            c.r[p] = entry[t.end_of(p)];
        } else if (p > leaf) {
            c.l[p] = exit_run[p];
            c.r[p] = exit_run[t.end_of(p)];
        } else {
            c.l[p] = entry[p];
            c.r[p] = exit_run[t.end_of(p)];
        }
    }
    return c;
}

}  // namespace

bool validate_pumping_cycle(const Grammar& g, const KlmComponent& c, const PumpingCycle& pc) {
    (void)c;
    if (g.dim != 1) return false;
    const Segment& s = pc.cycle;
    if (s.tree.size() == 0 || s.leaf < 0) return false;
    if (s.tree.nodes[0].symbol != s.tree.nodes[s.leaf].symbol) return false;

    long long before = 0, after = 0;
    for (int p = 0; p < s.tree.size(); ++p) {
        const TreeNode& n = s.tree.nodes[p];
        long long* acc = p < s.leaf ? &before : &after;
        if (n.symbol == -1) *acc += n.value[0];
        else if (n.cert) *acc += n.cert_disp[0];
    }
    ExtNat l_root, r_root, leaf_l, leaf_r;
    if (pc.dir == Direction::Forward) {
        l_root = pc.anchor_l;
        r_root = pc.anchor_r;
        leaf_l = l_root.plus(before);
        leaf_r = r_root.plus(-after);
    } else {
        leaf_l = pc.anchor_l;
        leaf_r = pc.anchor_r;
        l_root = leaf_l.plus(-before);
        r_root = leaf_r.plus(after);
    }
    ExtConfigs cfg = ext_propagate(s.tree, s.leaf, l_root, r_root);
    for (int p = 0; p < s.tree.size(); ++p)
        if (!nonneg(cfg.l[p]) || !nonneg(cfg.r[p])) return false;

    auto lifted = [](const ExtNat& from, const ExtNat& to) {
        if (from.kind == ExtNat::PosOmega) return to.kind == ExtNat::PosOmega;
        return to.kind == ExtNat::PosOmega || (to.is_fin() && to.value >= from.value + 1);
    };
    if (pc.dir == Direction::Forward) {
        if (pc.pump_left && !lifted(l_root, leaf_l)) return false;
        if (pc.pump_right && !lifted(r_root, leaf_r)) return false;
    } else {
        if (pc.pump_left && !lifted(leaf_l, l_root)) return false;
        if (pc.pump_right && !lifted(leaf_r, r_root)) return false;
    }
    return true;
}

PumpSearchResult find_pumping_cycle(const Grammar& g, const KlmComponent& c, Direction dir,
                                    bool pump_left, bool pump_right, const SearchBounds& b) {
    if (g.dim != 1) throw KlmError("pumping search is defined for dimension 1");
    if (!pump_left && !pump_right) throw KlmError("pumping search needs a pumped side");
    ConfigSlot sl = dir == Direction::Forward ? kLsrc : kLtgt;
    ConfigSlot sr = dir == Direction::Forward ? kRsrc : kRtgt;
    if (pump_left && !c.fixed[sl]) throw KlmError("pumped variable must be fixed");
    if (pump_right && !c.fixed[sr]) throw KlmError("pumped variable must be fixed");
    ExtNat l0 = pump_left ? ExtNat::fin((*c.fixed[sl])[0]) : ExtNat::pos_omega();
    ExtNat r0 = pump_right ? ExtNat::fin((*c.fixed[sr])[0]) : ExtNat::pos_omega();

    RelationGraph rg = relation_graph(g, c, dir, b);
    const CompSym& anchor_sym = dir == Direction::Forward ? c.src : c.tgt;
    int start = rg.vertex_of(anchor_sym);

    bool saw_unknown = false;
    auto clamp = [&](long long v) { return std::min(v, b.delta_cap); };
    auto apply = [&](const RelationGraph::Edge& e, const ExtNat& l, const ExtNat& r, ExtNat& nl,
                     ExtNat& nr) -> bool {
        nl = l;
        nr = r;
        ExtNat& v = e.left_deg ? nl : nr;
        if (e.cert_disp) {
            if (v.is_fin()) v = ExtNat::fin(clamp(v.value + (*e.cert_disp)[0]));
            return nonneg(nl) && nonneg(nr);
        }
        DeltaValue dv = (*e.delta)(v);
        if (dv.unknown) {
            saw_unknown = true;
            return false;
        }
        if (dv.value.kind == ExtNat::NegOmega) return false;
        v = dv.value.is_fin() ? ExtNat::fin(clamp(dv.value.value)) : dv.value;
        return true;
    };

    std::vector<PumpState> arena;
    std::vector<std::vector<int>> pareto(rg.verts.size());
    std::deque<int> queue;
    auto try_push = [&](const PumpState& st) {
        auto& entries = pareto[st.vertex];
        for (int id : entries)
            if (dominates(arena[id], st)) return;
        arena.push_back(st);
        int my_id = static_cast<int>(arena.size()) - 1;
        std::erase_if(entries, [&](int id) { return dominates(arena[my_id], arena[id]); });
        entries.push_back(my_id);
        queue.push_back(my_id);
    };
    try_push({start, l0, r0, 0, -1, -1});

    auto reaches_goal = [&](const PumpState& st) {
        if (st.vertex != start || st.steps == 0) return false;
        auto ok = [](const ExtNat& base, const ExtNat& now) {
            if (base.kind == ExtNat::PosOmega) return true;
            return now.kind == ExtNat::PosOmega || (now.is_fin() && now.value >= base.value + 1);
        };
        if (pump_left && !ok(l0, st.l)) return false;
        if (pump_right && !ok(r0, st.r)) return false;
        return true;
    };

    int goal_id = -1;
    while (!queue.empty() && goal_id < 0) {
        int id = queue.front();
        queue.pop_front();
        PumpState st = arena[id];
        if (st.steps >= b.pump_length_bound) continue;
        for (size_t ei = 0; ei < rg.edges.size() && goal_id < 0; ++ei) {
            const auto& e = rg.edges[ei];
            if (e.from != st.vertex) continue;
            ExtNat nl, nr;
            if (!apply(e, st.l, st.r, nl, nr)) continue;
            PumpState nxt{e.to, nl, nr, st.steps + 1, id, static_cast<int>(ei)};
            if (reaches_goal(nxt)) {
                arena.push_back(nxt);
                goal_id = static_cast<int>(arena.size()) - 1;
            } else {
                try_push(nxt);
            }
        }
    }
    if (goal_id < 0) return {std::nullopt, saw_unknown};

    std::vector<int> path;
    for (int cur = goal_id; arena[cur].edge >= 0; cur = arena[cur].parent)
        path.push_back(arena[cur].edge);
    std::reverse(path.begin(), path.end());

    // Concrete hangs per path position: walk the achieved values and query
    // coverability witnesses for the delta edges.
    struct Hang {
        bool is_cert = false;
        Vec cert_disp;
        DerivationTree tree;
    };
    // Spine order is top-down along the cycle; the backward search walked it
    // bottom-up.
    std::vector<int> spine = path;
    if (dir == Direction::Backward) std::reverse(spine.begin(), spine.end());
    std::vector<Hang> hangs(spine.size());

    SearchBounds cb = b;
    cb.max_counter = std::max(b.max_counter, b.delta_cap + 1);
    ExtNat al = l0, ar = r0;
    for (size_t i = 0; i < path.size(); ++i) {
        const auto& e = rg.edges[path[i]];
        size_t pos = dir == Direction::Forward ? i : spine.size() - 1 - i;
        Hang& h = hangs[pos];
        ExtNat& v = e.left_deg ? al : ar;
        if (e.cert_disp) {
            h.is_cert = true;
            h.cert_disp = *e.cert_disp;
            if (dir == Direction::Backward)
                for (long long& x : h.cert_disp) x = -x;  // stub stores the real hang displacement
            if (v.is_fin()) v = ExtNat::fin(v.value + (*e.cert_disp)[0]);
            continue;
        }
        const Grammar& side = e.delta->grammar();
        DerivationTree w;
        if (v.kind == ExtNat::PosOmega) {
            std::vector<int> all;
            for (size_t ri = 0; ri < side.rules.size(); ++ri) all.push_back(static_cast<int>(ri));
            w = min_acyclic_tree(side, all, side.start);
        } else {
            DeltaValue dv = (*e.delta)(v);
            if (dv.unknown || !dv.value.is_fin()) return {std::nullopt, true};
            long long target = clamp(dv.value.value);
            OracleVerdict cov = bounded_cover(side, {v.value}, {target}, cb);
            if (!cov.yes()) return {std::nullopt, true};
            w = *cov.witness;
            v = ExtNat::fin(v.value + displacement(w)[0]);
        }
        bool mirrored = e.left_deg == (dir == Direction::Backward);
        // Witnesses live in the (possibly mirrored) side grammar; fold them
        // back into the component's grammar coordinates.
        DerivationTree real = mirrored ? mirror_tree(w) : w;
        h.tree = remap_rules(real, mirrored ? mirror(side) : side, g);
    }

    // Assemble the cycle in preorder along the spine.
    Segment seg;
    seg.tree.dim = 1;
    std::vector<int> spine_pos;
    std::vector<std::pair<const Hang*, int>> suffix;  // right-hanging, emitted after the leaf
    auto emit_hang = [&](const Hang& h, int nt) {
        if (h.is_cert) {
            TreeNode stub;
            stub.symbol = nt;
            stub.cert = true;
            stub.cert_disp = h.cert_disp;
            seg.tree.nodes.push_back(stub);
        } else {
            for (const TreeNode& tn : h.tree.nodes) seg.tree.nodes.push_back(tn);
        }
    };
    std::vector<int> spine_rules;
    for (size_t i = 0; i < spine.size(); ++i) {
        const SccRule& srule = c.scc_rules[rg.edges[spine[i]].scc_rule];
        spine_rules.push_back(rg.edges[spine[i]].scc_rule);
        spine_pos.push_back(static_cast<int>(seg.tree.nodes.size()));
        TreeNode n;
        n.symbol = srule.head.nt;
        n.rule = srule.grammar_rule;
        n.children = 2;
        seg.tree.nodes.push_back(n);
        if (srule.left_deg) emit_hang(hangs[i], srule.side_nt);
        else suffix.push_back({&hangs[i], srule.side_nt});
    }
    spine_pos.push_back(static_cast<int>(seg.tree.nodes.size()));
    seg.leaf = static_cast<int>(seg.tree.nodes.size());
    TreeNode leaf;
    leaf.symbol = anchor_sym.nt;
    seg.tree.nodes.push_back(leaf);
    for (auto it = suffix.rbegin(); it != suffix.rend(); ++it) emit_hang(*it->first, it->second);
    {
        size_t h = spine.size();
        std::vector<long long> sz(h + 1);
        sz[h] = 1;
        for (size_t i = h; i-- > 0;) {
            long long side_sz = hangs[i].is_cert ? 1 : hangs[i].tree.size();
            sz[i] = 1 + side_sz + sz[i + 1];
        }
        for (size_t i = 0; i <= h; ++i)
            seg.tree.nodes[spine_pos[i]].subtree = static_cast<int>(sz[i]);
    }

    PumpingCycle pc;
    pc.dir = dir;
    pc.pump_left = pump_left;
    pc.pump_right = pump_right;
    pc.anchor_l = l0;
    pc.anchor_r = r0;
    pc.spine_rules = std::move(spine_rules);
    pc.cycle = std::move(seg);
    for (const Hang& h : hangs)
        if (!h.is_cert) pc.certificates.push_back(h.tree);

    if (!validate_pumping_cycle(g, c, pc)) return {std::nullopt, true};
    return {pc, saw_unknown};
}

}  // namespace tgvas
