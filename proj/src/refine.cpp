#include "tgvas/refine.hpp"

#include <algorithm>
#include <set>

#include "tgvas/structure.hpp"

namespace tgvas {

namespace {

Vec side_val(const Configs& cfg, int node, bool left) {
    return left ? cfg.lv(node) : cfg.rv(node);
}

Vec vec_sub(const Vec& a, const Vec& b) {
    Vec r(a.size());
    for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

int item_of_root(const std::vector<RefineItem>& items, int root) {
    for (size_t i = 0; i < items.size(); ++i)
        if (items[i].seg.root == root) return static_cast<int>(i);
    return -1;
}

// Which sides of a component are represented by certificate rules.
bool cert_side_of(const KlmComponent& c, bool left) {
    return c.annotated && c.annot_left == left;
}

// Capture of a witness segment with optional certificate sides and symbol
// encoding. cert_left/cert_right turn the hangs of that side into certificate
// rules; enc_side (0 = none, 1 = left, 2 = right) hard-encodes that side's
// configurations into the symbols.
KlmComponent capture_walk(const Grammar& g, const DerivationTree& w, const Configs& cfg, int root,
                          int exit, bool cert_left, bool cert_right, int enc_side) {
    (void)g;
    bool enc = enc_side != 0;
    bool enc_left = enc_side == 1;
    auto sym_at = [&](int n) {
        CompSym s;
        s.nt = w.nodes[n].symbol;
        if (enc) s.enc = side_val(cfg, n, enc_left);
        return s;
    };
    KlmComponent c;
    c.src = sym_at(root);
    c.tgt = sym_at(exit);
    std::vector<int> path = segment_path(w, root, exit);
    std::set<SccRule> scc;
    std::set<int> lrules, rrules;
    std::set<CertRule> lcerts, rcerts;
    for (size_t i = 0; i + 1 < path.size(); ++i) {
        int n = path[i], next = path[i + 1];
        int c1 = w.first_child(n), c2 = w.second_child(n);
        bool via_second = next == c2;
        int side = via_second ? c1 : c2;
        SccRule sr;
        sr.head = sym_at(n);
        sr.path_child = sym_at(next);
        sr.side_nt = w.nodes[side].symbol;
        sr.left_deg = via_second;
        sr.grammar_rule = w.nodes[n].rule;
        scc.insert(sr);
        bool cert = via_second ? cert_left : cert_right;
        if (cert) {
            CertRule cr{w.nodes[side].symbol, displacement_of(w, side)};
            (via_second ? lcerts : rcerts).insert(cr);
        } else {
            for (int p = side; p < w.end_of(side); ++p)
                if (w.nodes[p].symbol >= 0 && w.nodes[p].rule >= 0)
                    (via_second ? lrules : rrules).insert(w.nodes[p].rule);
        }
    }
    c.scc_rules.assign(scc.begin(), scc.end());
    c.left_rules.assign(lrules.begin(), lrules.end());
    c.right_rules.assign(rrules.begin(), rrules.end());
    c.left_certs.assign(lcerts.begin(), lcerts.end());
    c.right_certs.assign(rcerts.begin(), rcerts.end());
    if (!c.trivial() && (cert_left || cert_right)) {
        c.annotated = true;
        c.annot_left = cert_left;
        if (cert_left && cert_right)
            throw RefineError("nontrivial component certified on both sides");
        if (!enc) throw RefineError("certificate sides need encoded symbols");
        ConfigSlot a = c.annot_left ? kLsrc : kRsrc;
        ConfigSlot b = c.annot_left ? kLtgt : kRtgt;
        c.fixed[a] = *c.src.enc;
        c.fixed[b] = *c.tgt.enc;
    }
    if (c.trivial()) {
        // Encoded values on trivial components live in E_Config instead.
        c.src.enc.reset();
        c.tgt.enc.reset();
    }
    return c;
}

}  // namespace

// ---- state ----

KlmTree RefinementState::to_klm_tree() const {
    KlmTree kt;
    kt.dim = g.dim;
    for (size_t i = 0; i < items.size(); ++i) {
        const RefineItem& it = items[i];
        KlmNode n;
        n.comp = it.comp;
        int q = it.seg.exit;
        if (it.comp.exit.is_cert) {
            n.cert_child = true;
        } else if (witness.nodes[q].children == 2) {
            n.child1 = item_of_root(items, witness.first_child(q));
            n.child2 = item_of_root(items, witness.second_child(q));
            if (n.child1 < 0 || n.child2 < 0) throw RefineError("division child link broken");
        } else {
            n.term = witness.nodes[witness.first_child(q)].value;
        }
        kt.nodes.push_back(std::move(n));
    }
    return kt;
}

Segment RefinementState::aligned_segment(int item) const {
    const RefineItem& it = items[item];
    std::vector<std::pair<int, Vec>> collapse;
    if (it.comp.annotated) {
        std::vector<int> path = segment_path(witness, it.seg.root, it.seg.exit);
        for (size_t i = 0; i + 1 < path.size(); ++i) {
            int n = path[i], next = path[i + 1];
            int c1 = witness.first_child(n), c2 = witness.second_child(n);
            bool via_second = next == c2;
            if (via_second == it.comp.annot_left) {
                int side = via_second ? c1 : c2;
                collapse.push_back({side, displacement_of(witness, side)});
            }
        }
    }
    return make_segment_collapsed(witness, it.seg.root, it.seg.exit, collapse);
}

TreeRank RefinementState::rank() const { return tree_rank(g, to_klm_tree(), k, g.dim); }

RefinementState initial_state(const Grammar& g, const Vec& s, const Vec& t,
                              const DerivationTree& witness) {
    RefinementState st;
    st.g = g;
    st.k = index_table(g).grammar_index;
    st.anchor = {false, s, t};
    if (!witness.is_complete()) throw RefineError("witness is incomplete");
    DerivationTree w = most_simplify(witness, st.anchor);
    st.cfg = propagate_configurations(w, st.anchor);
    if (!is_nonnegative(st.cfg)) throw RefineError("witness is not nonnegative");
    st.witness = std::move(w);

    Division div = small_division(st.witness, g);
    for (const DivSeg& ds : div.segs) {
        RefineItem it;
        it.seg = ds;
        it.comp = capture_walk(g, st.witness, st.cfg, ds.root, ds.exit, false, false, 0);
        ExitRule exit;
        exit.grammar_rule = st.witness.nodes[ds.exit].rule;
        it.comp.exit = exit;
        st.items.push_back(std::move(it));
    }
    st.items[0].comp.fixed[kLsrc] = s;
    st.items[0].comp.fixed[kRsrc] = t;
    st.rank_trace.push_back(st.rank());
    validate_state(st);
    return st;
}

void validate_state(const RefinementState& st) {
    const DerivationTree& w = st.witness;
    if (st.items.empty()) throw RefineError("state without segments");
    for (size_t i = 0; i + 1 < st.items.size(); ++i)
        if (st.items[i].seg.root >= st.items[i + 1].seg.root)
            throw RefineError("segments out of preorder");
    if (st.items[0].seg.root != 0) throw RefineError("first segment must root the witness");

    std::vector<int> owner(w.size(), -1);
    auto own = [&](int node, int item) {
        if (owner[node] != -1) throw RefineError("witness node covered twice");
        owner[node] = item;
    };
    for (size_t i = 0; i < st.items.size(); ++i) {
        const RefineItem& it = st.items[i];
        int r = it.seg.root, q = it.seg.exit;
        if (!(r <= q && q < w.end_of(r))) throw RefineError("segment exit outside its root");
        for (int p = r; p < w.end_of(r); ++p) {
            if (p > q && p < w.end_of(q)) continue;
            own(p, static_cast<int>(i));
        }
        if (it.comp.exit.is_cert) {
            // Opaque certificate subtree, owned wholesale.
            for (int p = q + 1; p < w.end_of(q); ++p) own(p, static_cast<int>(i));
            if (it.comp.exit.cert.nt != w.nodes[q].symbol ||
                it.comp.exit.cert.disp != displacement_of(w, q))
                throw RefineError("certificate exit does not match the witness subtree");
        } else {
            if (it.comp.exit.grammar_rule != w.nodes[q].rule)
                throw RefineError("exit rule does not match the witness");
            if (w.nodes[q].children == 2) {
                if (item_of_root(st.items, w.first_child(q)) < 0 ||
                    item_of_root(st.items, w.second_child(q)) < 0)
                    throw RefineError("uncovered exit child");
            } else {
                own(w.first_child(q), static_cast<int>(i));
            }
        }
        // Capture between the component and its aligned segment.
        Segment seg = st.aligned_segment(static_cast<int>(i));
        Anchor a{false, st.cfg.lv(r), st.cfg.rv(r)};
        if (!check_capture(st.g, it.comp, seg, a))
            throw RefineError("component does not capture its segment");
    }
    for (int p = 0; p < w.size(); ++p)
        if (owner[p] == -1) throw RefineError("witness node not covered");

    check_klm_tree(st.g, st.to_klm_tree());
}

// ---- witness solution ----

SolutionVec solution_from_witness(const RefinementState& st, const CharSystem& cs) {
    const DerivationTree& w = st.witness;
    SolutionVec sol(cs.sys.n_vars(), BigInt(0));
    int d = st.g.dim;
    auto set_vec = [&](int first, const Vec& v) {
        for (int k = 0; k < d; ++k) sol[first + k] = BigInt(v[k]);
    };
    for (size_t i = 0; i < st.items.size(); ++i) {
        const RefineItem& it = st.items[i];
        int ni = static_cast<int>(i);
        int r = it.seg.root, q = it.seg.exit;
        set_vec(cs.cfg(ni, kLsrc), st.cfg.lv(r));
        set_vec(cs.cfg(ni, kRsrc), st.cfg.rv(r));
        set_vec(cs.cfg(ni, kLtgt), st.cfg.lv(q));
        set_vec(cs.cfg(ni, kRtgt), st.cfg.rv(q));

        const KlmComponent& c = it.comp;
        std::vector<int> path = segment_path(w, r, q);
        auto scc_index = [&](int n) {
            for (size_t j = 0; j < c.scc_rules.size(); ++j) {
                const SccRule& sr = c.scc_rules[j];
                if (sr.grammar_rule != w.nodes[n].rule) continue;
                if (c.annotated && !(*sr.head.enc == side_val(st.cfg, n, c.annot_left))) continue;
                return static_cast<int>(j);
            }
            throw RefineError("witness path rule missing from the component");
        };
        for (size_t pi = 0; pi + 1 < path.size(); ++pi) {
            int n = path[pi], next = path[pi + 1];
            int var = cs.pk(ni, RuleSpace::Scc, scc_index(n));
            sol[var] += BigInt(1);
            int c1 = w.first_child(n), c2 = w.second_child(n);
            bool via_second = next == c2;
            int side = via_second ? c1 : c2;
            if (cert_side_of(c, via_second)) {
                CertRule want{w.nodes[side].symbol, displacement_of(w, side)};
                const auto& certs = c.certs(via_second);
                auto itc = std::find(certs.begin(), certs.end(), want);
                if (itc == certs.end()) throw RefineError("witness hang missing certificate");
                RuleSpace sp = via_second ? RuleSpace::CertLeft : RuleSpace::CertRight;
                sol[cs.pk(ni, sp, static_cast<int>(itc - certs.begin()))] += BigInt(1);
            } else {
                const std::vector<int>& rules = via_second ? c.left_rules : c.right_rules;
                RuleSpace sp = via_second ? RuleSpace::Left : RuleSpace::Right;
                for (int p = side; p < w.end_of(side); ++p) {
                    if (w.nodes[p].symbol < 0 || w.nodes[p].rule < 0) continue;
                    auto itr = std::find(rules.begin(), rules.end(), w.nodes[p].rule);
                    if (itr == rules.end()) throw RefineError("witness hang rule missing");
                    sol[cs.pk(ni, sp, static_cast<int>(itr - rules.begin()))] += BigInt(1);
                }
            }
        }
        if (cs.leaf_var[i][0] >= 0) {
            if (c.exit.is_cert) {
                set_vec(cs.leaf_var[i][0], st.cfg.lv(q));
                set_vec(cs.leaf_var[i][1], st.cfg.rv(q));
            } else {
                int child = w.first_child(q);
                set_vec(cs.leaf_var[i][0], st.cfg.lv(child));
                set_vec(cs.leaf_var[i][1], st.cfg.rv(child));
            }
        }
    }
    return sol;
}

// ---- orthogonality ----

std::optional<OrthogonalityEvidence> decide_orthogonality(const Grammar& g, const KlmComponent& c,
                                                          bool left) {
    if (c.trivial()) return std::nullopt;
    if (cert_side_of(c, left)) return std::nullopt;  // already certified; handled by annotation
    const std::vector<int>& rules = left ? c.left_rules : c.right_rules;
    std::set<int> roots;
    for (const SccRule& sr : c.scc_rules)
        if (sr.left_deg == left) roots.insert(sr.side_nt);
    OrthogonalityEvidence ev;
    ev.left = left;
    if (roots.empty()) {
        // No hangs on this side: every top cycle has zero effect here.
        return ev;
    }
    // (2) Unique acyclic displacement for every side nonterminal.
    std::set<int> nts;
    for (int ri : rules) {
        const Rule& r = g.rules[ri];
        nts.insert(r.head);
        if (!r.is_leaf) {
            nts.insert(r.left);
            nts.insert(r.right);
        }
    }
    for (int a : nts) {
        std::vector<Vec> all = acyclic_displacements(g, rules, a);
        if (all.size() != 1) return std::nullopt;
        if (roots.count(a)) ev.uniform_disp[a] = all[0];
    }
    // (1) All side cycles have displacement zero.
    for (const Vec& cyc : simple_cycle_displacements(g, rules))
        if (std::any_of(cyc.begin(), cyc.end(), [](long long x) { return x != 0; }))
            return std::nullopt;
    // (3) The weighted SCC graph has zero cycle sums: potentials must exist.
    std::map<int, Vec> pot;
    pot[c.src.nt] = Vec(g.dim, 0);
    bool changed = true;
    while (changed) {
        changed = false;
        for (const SccRule& sr : c.scc_rules) {
            auto it = pot.find(sr.head.nt);
            if (it == pot.end()) continue;
            Vec wgt(g.dim, 0);
            if (sr.left_deg == left) wgt = ev.uniform_disp.at(sr.side_nt);
            Vec nxt(g.dim);
            for (int k = 0; k < g.dim; ++k) nxt[k] = it->second[k] + wgt[k];
            auto [jt, fresh] = pot.try_emplace(sr.path_child.nt, nxt);
            if (fresh) changed = true;
            else if (jt->second != nxt) return std::nullopt;
        }
    }
    return ev;
}

// ---- cleaning ----

bool constrain(RefinementState& st) {
    KlmTree kt = st.to_klm_tree();
    CharSystem cs = char_system(st.g, kt);
    HilbertBasis hb = hilbert_basis(cs.sys.homogenize());
    std::vector<Boundedness> bd = variable_boundedness(cs.sys, hb);
    SolutionVec solT = solution_from_witness(st, cs);
    if (!satisfies(cs.sys, solT)) throw RefineError("witness solution violates the system");

    bool changed = false;
    for (size_t i = 0; i < st.items.size(); ++i) {
        KlmComponent& c = st.items[i].comp;
        for (ConfigSlot s : {kLsrc, kRsrc, kLtgt, kRtgt}) {
            bool bounded = true;
            for (int k = 0; k < st.g.dim; ++k)
                bounded = bounded && bd[cs.cfg(static_cast<int>(i), s, k)] == Boundedness::Bounded;
            if (!bounded) continue;
            Vec v(st.g.dim);
            for (int k = 0; k < st.g.dim; ++k)
                v[k] = solT[cs.cfg(static_cast<int>(i), s, k)].to_i64();
            if (c.fixed[s]) {
                if (*c.fixed[s] != v) throw RefineError("existing constraint contradicts the witness");
            } else {
                c.fixed[s] = v;
                changed = true;
            }
        }
    }
    if (changed) validate_state(st);
    return changed;
}

bool orthogonalize(RefinementState& st) {
    bool changed = false;
    for (size_t i = 0; i < st.items.size(); ++i) {
        KlmComponent& c = st.items[i].comp;
        if (c.trivial() || c.annotated) continue;
        for (bool left : {true, false}) {
            ConfigSlot s_src = left ? kLsrc : kRsrc;
            ConfigSlot s_tgt = left ? kLtgt : kRtgt;
            if (!c.fixed[s_src] || !c.fixed[s_tgt]) continue;
            auto ev = decide_orthogonality(st.g, c, left);
            if (!ev) continue;

            // Uniform configurations by potential propagation from the source.
            std::map<int, Vec> uc;
            uc[c.src.nt] = *c.fixed[s_src];
            bool grow = true;
            while (grow) {
                grow = false;
                for (const SccRule& sr : c.scc_rules) {
                    auto it = uc.find(sr.head.nt);
                    if (it == uc.end()) continue;
                    Vec nxt = it->second;
                    if (sr.left_deg == left) {
                        const Vec& u = ev->uniform_disp.at(sr.side_nt);
                        for (int k = 0; k < st.g.dim; ++k) nxt[k] += u[k];
                    }
                    auto [jt, fresh] = uc.try_emplace(sr.path_child.nt, nxt);
                    if (fresh) grow = true;
                    else if (jt->second != nxt)
                        throw RefineError("inconsistent uniform configurations");
                }
            }
            if (uc.at(c.tgt.nt) != *c.fixed[s_tgt])
                throw RefineError("uniform configuration contradicts the target constraint");

            c.annotated = true;
            c.annot_left = left;
            c.src.enc = uc.at(c.src.nt);
            c.tgt.enc = uc.at(c.tgt.nt);
            std::set<CertRule> certs;
            for (SccRule& sr : c.scc_rules) {
                sr.head.enc = uc.at(sr.head.nt);
                sr.path_child.enc = uc.at(sr.path_child.nt);
                if (sr.left_deg == left)
                    certs.insert({sr.side_nt, vec_sub(*sr.path_child.enc, *sr.head.enc)});
            }
            std::sort(c.scc_rules.begin(), c.scc_rules.end());
            (left ? c.left_certs : c.right_certs).assign(certs.begin(), certs.end());
            (left ? c.left_rules : c.right_rules).clear();
            changed = true;
            break;
        }
    }
    if (changed) validate_state(st);
    return changed;
}

void clean(RefinementState& st) {
    TreeRank before = st.rank();
    for (int round = 0; round < 64; ++round) {
        bool ch = constrain(st);
        ch = orthogonalize(st) || ch;
        if (!ch) break;
    }
    TreeRank after = st.rank();
    if (before < after) throw RefineError("cleaning increased the rank");
    st.trace.push_back("clean rank=" + [](const TreeRank& r) {
        std::string s = "[";
        for (size_t i = 0; i < r.counts.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(r.counts[i]);
        }
        return s + "]";
    }(after));
}

// ---- decompositions ----

namespace {

struct PathPiece {
    int root, exit;
    bool on_old_path;
};

std::string rank_text(const TreeRank& r) {
    std::string s = "[";
    for (size_t i = 0; i < r.counts.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(r.counts[i]);
    }
    return s + "]";
}

// Maximal runs of a node path under the strongly-connected-block relation:
// positions sharing a key force everything between them into one block.
std::vector<std::pair<int, int>> scc_blocks(const std::vector<std::pair<int, Vec>>& keys) {
    std::map<std::pair<int, Vec>, std::pair<int, int>> span;  // key -> [first, last]
    for (int i = 0; i < static_cast<int>(keys.size()); ++i) {
        auto [it, fresh] = span.try_emplace(keys[i], std::make_pair(i, i));
        if (!fresh) it->second.second = i;
    }
    std::vector<std::pair<int, int>> blocks;
    int i = 0;
    while (i < static_cast<int>(keys.size())) {
        int hi = span.at(keys[i]).second;
        for (int j = i; j <= hi; ++j) hi = std::max(hi, span.at(keys[j]).second);
        blocks.push_back({i, hi});
        i = hi + 1;
    }
    return blocks;
}

// Shared tail of both decompositions: replaces one item by the captured path
// pieces plus coverage items (certificate stubs and sub-divisions of the
// uncovered hang children).
void apply_division(RefinementState& st, int item_idx, const std::vector<PathPiece>& pieces,
                    bool cert_l, bool cert_r, int enc_side, const char* op) {
    TreeRank before = st.rank();
    const RefineItem old_it = st.items[item_idx];
    const KlmComponent oldc = old_it.comp;
    const DerivationTree& w = st.witness;
    int old_root = old_it.seg.root, old_exit = old_it.seg.exit;
    std::vector<int> old_path = segment_path(w, old_root, old_exit);
    std::set<int> pathset(old_path.begin(), old_path.end());

    std::vector<RefineItem> fresh;
    std::set<int> fresh_roots;
    auto add_cert_item = [&](int node) {
        RefineItem ci;
        ci.seg = {node, node};
        KlmComponent cc;
        cc.src.nt = cc.tgt.nt = w.nodes[node].symbol;
        cc.exit.is_cert = true;
        cc.exit.cert = {w.nodes[node].symbol, displacement_of(w, node)};
        cc.fixed[kLsrc] = st.cfg.lv(node);
        cc.fixed[kRsrc] = st.cfg.rv(node);
        cc.fixed[kLtgt] = st.cfg.lv(node);
        cc.fixed[kRtgt] = st.cfg.rv(node);
        ci.comp = std::move(cc);
        fresh_roots.insert(node);
        fresh.push_back(std::move(ci));
    };
    std::function<void(int)> add_sub_division = [&](int subroot) {
        std::vector<int> work{subroot};
        while (!work.empty()) {
            int r = work.back();
            work.pop_back();
            int p = topmost_scc_exit(w, st.g, r);
            RefineItem ni;
            ni.seg = {r, p};
            ni.comp = capture_walk(st.g, w, st.cfg, r, p, false, false, 0);
            ni.comp.exit.grammar_rule = w.nodes[p].rule;
            fresh_roots.insert(r);
            fresh.push_back(std::move(ni));
            if (w.nodes[p].children == 2) {
                work.push_back(w.second_child(p));
                work.push_back(w.first_child(p));
            }
        }
    };

    // Is `node` a hang root of an old path node on a certified side?
    auto hang_cert_side = [&](int parent, int node) {
        if (!pathset.count(parent) || parent == old_exit) return false;
        int c1 = w.first_child(parent), c2 = w.second_child(parent);
        bool is_left_hang = node == c1 && pathset.count(c2);
        bool is_right_hang = node == c2 && pathset.count(c1);
        if (is_left_hang) return cert_l;
        if (is_right_hang) return cert_r;
        return false;
    };
    std::vector<int> parent = w.parents();

    for (const PathPiece& pp : pieces) {
        // A piece that is exactly a certified hang root becomes a stub item.
        if (pp.root == pp.exit && !pathset.count(pp.root) && parent[pp.root] >= 0 &&
            hang_cert_side(parent[pp.root], pp.root)) {
            add_cert_item(pp.root);
            continue;
        }
        RefineItem ni;
        ni.seg = {pp.root, pp.exit};
        bool enc_here = pp.on_old_path && enc_side != 0;
        ni.comp = capture_walk(st.g, w, st.cfg, pp.root, pp.exit, pp.on_old_path && cert_l,
                               pp.on_old_path && cert_r, enc_here ? enc_side : 0);
        if (pp.exit == old_exit) {
            ni.comp.exit = oldc.exit;
        } else {
            ni.comp.exit.grammar_rule = w.nodes[pp.exit].rule;
        }
        // Configuration constraints survive at the original endpoints.
        if (pp.root == old_root) {
            for (ConfigSlot s : {kLsrc, kRsrc})
                if (oldc.fixed[s]) ni.comp.fixed[s] = oldc.fixed[s];
        }
        if (pp.exit == old_exit) {
            for (ConfigSlot s : {kLtgt, kRtgt})
                if (oldc.fixed[s]) ni.comp.fixed[s] = oldc.fixed[s];
        }
        fresh_roots.insert(pp.root);
        fresh.push_back(std::move(ni));
    }

    // Coverage: children of the new exits not covered by a piece.
    std::vector<RefineItem> pieces_snapshot = fresh;
    for (const RefineItem& ni : pieces_snapshot) {
        int q = ni.seg.exit;
        if (ni.comp.exit.is_cert) continue;
        if (q == old_exit) continue;  // old child segments keep covering these
        if (w.nodes[q].children != 2) continue;
        for (int child : {w.first_child(q), w.second_child(q)}) {
            if (fresh_roots.count(child)) continue;
            if (hang_cert_side(q, child)) add_cert_item(child);
            else add_sub_division(child);
        }
    }

    st.items.erase(st.items.begin() + item_idx);
    for (RefineItem& ni : fresh) st.items.push_back(std::move(ni));
    std::sort(st.items.begin(), st.items.end(),
              [](const RefineItem& a, const RefineItem& b) { return a.seg.root < b.seg.root; });
    validate_state(st);
    TreeRank after = st.rank();
    if (!(after < before)) throw RefineError(std::string(op) + " did not decrease the rank");
    st.rank_trace.push_back(after);
    st.trace.push_back(std::string(op) + " comp=" + std::to_string(item_idx) + " rank=" +
                       rank_text(before) + "->" + rank_text(after));
}

std::optional<int> scc_rule_index(const RefinementState& st, const KlmComponent& c, int node) {
    for (size_t j = 0; j < c.scc_rules.size(); ++j) {
        const SccRule& sr = c.scc_rules[j];
        if (sr.grammar_rule != st.witness.nodes[node].rule) continue;
        if (c.annotated && !(*sr.head.enc == side_val(st.cfg, node, c.annot_left))) continue;
        return static_cast<int>(j);
    }
    return std::nullopt;
}

}  // namespace

void decompose_algebraic(RefinementState& st, int item_idx) {
    const RefineItem& it = st.items[item_idx];
    const KlmComponent& c = it.comp;
    if (c.trivial()) throw RefineError("algebraic decomposition needs a nontrivial component");
    const DerivationTree& w = st.witness;

    KlmTree kt = st.to_klm_tree();
    CharSystem cs = char_system(st.g, kt);
    HilbertBasis hb = hilbert_basis(cs.sys.homogenize());
    std::vector<Boundedness> bd = variable_boundedness(cs.sys, hb);
    auto bounded_pk = [&](RuleSpace sp, int idx) {
        return bd[cs.pk(item_idx, sp, idx)] == Boundedness::Bounded;
    };

    bool any_bounded = false;
    for (auto& [key, var] : cs.parikh) {
        auto [node, space, j] = key;
        if (node == item_idx && bd[var] == Boundedness::Bounded) any_bounded = true;
    }
    if (!any_bounded) throw RefineError("algebraic decomposition needs a bounded rule variable");

    int old_root = it.seg.root, old_exit = it.seg.exit;
    std::vector<int> path = segment_path(w, old_root, old_exit);
    std::set<int> pathset(path.begin(), path.end());

    // Step 1: nodes with bounded rules, plus the exit.
    std::set<int> nb{old_exit};
    for (size_t i = 0; i + 1 < path.size(); ++i) {
        int n = path[i];
        auto idx = scc_rule_index(st, c, n);
        if (!idx) throw RefineError("path rule not found in the component");
        if (bounded_pk(RuleSpace::Scc, *idx)) nb.insert(n);
        int next = path[i + 1];
        int c1 = w.first_child(n), c2 = w.second_child(n);
        bool via_second = next == c2;
        int side = via_second ? c1 : c2;
        if (cert_side_of(c, via_second)) {
            CertRule want{w.nodes[side].symbol, displacement_of(w, side)};
            const auto& certs = c.certs(via_second);
            auto itc = std::find(certs.begin(), certs.end(), want);
            if (itc == certs.end()) throw RefineError("hang certificate missing");
            RuleSpace sp = via_second ? RuleSpace::CertLeft : RuleSpace::CertRight;
            if (bounded_pk(sp, static_cast<int>(itc - certs.begin()))) nb.insert(side);
        } else {
            const std::vector<int>& rules = via_second ? c.left_rules : c.right_rules;
            RuleSpace sp = via_second ? RuleSpace::Left : RuleSpace::Right;
            for (int p = side; p < w.end_of(side); ++p) {
                if (w.nodes[p].symbol < 0 || w.nodes[p].rule < 0) continue;
                auto itr = std::find(rules.begin(), rules.end(), w.nodes[p].rule);
                if (itr == rules.end()) throw RefineError("hang rule missing");
                if (bounded_pk(sp, static_cast<int>(itr - rules.begin()))) nb.insert(p);
            }
        }
    }
    // Step 1b: LCA closure over the preorder-sorted set.
    std::vector<int> par = w.parents();
    std::vector<int> depth(w.size(), 0);
    for (int p = 1; p < w.size(); ++p) depth[p] = depth[par[p]] + 1;
    auto lca = [&](int a, int b) {
        while (depth[a] > depth[b]) a = par[a];
        while (depth[b] > depth[a]) b = par[b];
        while (a != b) {
            a = par[a];
            b = par[b];
        }
        return a;
    };
    std::vector<int> sorted_nb(nb.begin(), nb.end());
    std::set<int> vt(nb.begin(), nb.end());
    for (size_t i = 0; i + 1 < sorted_nb.size(); ++i) vt.insert(lca(sorted_nb[i], sorted_nb[i + 1]));

    // Step 2: fracture along the virtual tree edges.
    int vt_root = *vt.begin();
    auto par_vt = [&](int v) {
        for (int p = par[v]; p >= old_root && p >= 0; p = par[p])
            if (vt.count(p)) return p;
        return -1;
    };
    std::vector<PathPiece> pieces;
    for (int v : vt) {
        int pstar;
        if (v == vt_root) {
            pstar = old_root;
        } else {
            int pv = par_vt(v);
            int walk = v;
            while (par[walk] != pv) walk = par[walk];
            pstar = walk;
        }
        // Step 3: strongly connected blocks of the fractured path.
        std::vector<int> fpath = segment_path(w, pstar, v);
        bool on_path = pathset.count(pstar) > 0;
        std::vector<std::pair<int, Vec>> keys;
        for (int n : fpath) {
            Vec enc;
            if (on_path && c.annotated) enc = side_val(st.cfg, n, c.annot_left);
            keys.push_back({w.nodes[n].symbol, enc});
        }
        for (auto [a, b] : scc_blocks(keys)) pieces.push_back({fpath[a], fpath[b], on_path});
    }

    int enc_side = c.annotated ? (c.annot_left ? 1 : 2) : 0;
    apply_division(st, item_idx, pieces, cert_side_of(c, true), cert_side_of(c, false), enc_side,
                   "decompose_algebraic");
}

void decompose_combinatorial(RefinementState& st, int item_idx, bool encode_left) {
    const RefineItem& it = st.items[item_idx];
    const KlmComponent c = it.comp;
    if (c.trivial()) throw RefineError("combinatorial decomposition needs a nontrivial component");
    if (cert_side_of(c, encode_left))
        throw RefineError("cannot encode an already certified side");
    const DerivationTree& w = st.witness;

    std::vector<int> path = segment_path(w, it.seg.root, it.seg.exit);
    // Step 1+2: hard-encode the failing side's witness configurations, then
    // divide by strong connectivity over the encoded symbols.
    std::vector<std::pair<int, Vec>> keys;
    for (int n : path) keys.push_back({w.nodes[n].symbol, side_val(st.cfg, n, encode_left)});
    std::vector<PathPiece> pieces;
    for (auto [a, b] : scc_blocks(keys)) pieces.push_back({path[a], path[b], true});

    bool cert_l = encode_left || cert_side_of(c, true);
    bool cert_r = !encode_left || cert_side_of(c, false);
    apply_division(st, item_idx, pieces, cert_l, cert_r, encode_left ? 1 : 2,
                   encode_left ? "decompose_combinatorial side=left"
                               : "decompose_combinatorial side=right");
}

// ---- perfectness ----

namespace {

struct TreeAnalysis {
    CharSystem cs;
    HilbertBasis hb;
    std::vector<Boundedness> bd;

    bool slot_bounded(int node, ConfigSlot s, int d) const {
        for (int k = 0; k < d; ++k)
            if (bd[cs.cfg(node, s, k)] != Boundedness::Bounded) return false;
        return true;
    }
};

TreeAnalysis analyze_tree(const Grammar& g, const KlmTree& kt) {
    TreeAnalysis ta{char_system(g, kt), {}, {}};
    ta.hb = hilbert_basis(ta.cs.sys.homogenize());
    ta.bd = variable_boundedness(ta.cs.sys, ta.hb);
    return ta;
}

}  // namespace

PerfectnessReport check_perfect_tree(const Grammar& g, const KlmTree& kt, const SearchBounds& b) {
    TreeAnalysis ta = analyze_tree(g, kt);
    int d = g.dim;
    PerfectnessReport rep;
    for (size_t i = 0; i < kt.nodes.size(); ++i) {
        const KlmComponent& c = kt.nodes[i].comp;
        int ni = static_cast<int>(i);
        CompReport cr;
        cr.item = ni;
        for (ConfigSlot s : {kLsrc, kRsrc, kLtgt, kRtgt}) {
            if (ta.slot_bounded(ni, s, d) && !c.fixed[s]) {
                cr.constrained = false;
                rep.fully_constrained = false;
            }
        }
        if (c.trivial()) {
            rep.comps.push_back(std::move(cr));
            continue;
        }
        for (auto& [key, var] : ta.cs.parikh) {
            auto [node, space, idx] = key;
            if (node != ni) continue;
            if (ta.bd[var] == Boundedness::Bounded) {
                cr.bounded_rules.push_back({static_cast<RuleSpace>(space), idx});
                cr.production_unbounded = false;
                rep.production_unbounded = false;
            }
        }
        bool orth_left = cert_side_of(c, true), orth_right = cert_side_of(c, false);
        std::optional<OrthogonalityEvidence> evl, evr;
        if (!c.annotated) {
            evl = decide_orthogonality(g, c, true);
            evr = decide_orthogonality(g, c, false);
            orth_left = evl.has_value();
            orth_right = evr.has_value();
            if (orth_left && ta.slot_bounded(ni, kLsrc, d) && ta.slot_bounded(ni, kLtgt, d)) {
                cr.orthogonalized = false;
                rep.fully_orthogonalized = false;
            }
            if (orth_right && ta.slot_bounded(ni, kRsrc, d) && ta.slot_bounded(ni, kRtgt, d)) {
                cr.orthogonalized = false;
                rep.fully_orthogonalized = false;
            }
        }
        auto in_pump = [&](ConfigSlot s, bool left_side) {
            if (!ta.slot_bounded(ni, s, d)) return false;
            return !(left_side ? orth_left : orth_right);
        };
        bool pl = in_pump(kLsrc, true), pr = in_pump(kRsrc, false);
        bool ql = in_pump(kLtgt, true), qr = in_pump(kRtgt, false);
        cr.forward.applicable = pl || pr;
        cr.backward.applicable = ql || qr;
        bool anchors_ok = cr.constrained;
        if (cr.forward.applicable && anchors_ok && (!pl || c.fixed[kLsrc]) && (!pr || c.fixed[kRsrc])) {
            PumpSearchResult res = find_pumping_cycle(g, c, Direction::Forward, pl, pr, b);
            cr.forward.found = res.cycle.has_value();
            cr.forward.unknown = !res.cycle && res.unknown;
            cr.forward.cycle = std::move(res.cycle);
            if (!cr.forward.found && !cr.forward.unknown) rep.exp_pumpable = false;
            if (cr.forward.unknown) rep.pump_unknown = true;
        }
        if (cr.backward.applicable && anchors_ok && (!ql || c.fixed[kLtgt]) && (!qr || c.fixed[kRtgt])) {
            PumpSearchResult res = find_pumping_cycle(g, c, Direction::Backward, ql, qr, b);
            cr.backward.found = res.cycle.has_value();
            cr.backward.unknown = !res.cycle && res.unknown;
            cr.backward.cycle = std::move(res.cycle);
            if (!cr.backward.found && !cr.backward.unknown) rep.exp_pumpable = false;
            if (cr.backward.unknown) rep.pump_unknown = true;
        }
        rep.comps.push_back(std::move(cr));
    }
    return rep;
}

PerfectnessReport check_perfect(const RefinementState& st, const SearchBounds& b) {
    return check_perfect_tree(st.g, st.to_klm_tree(), b);
}

// ---- pipeline ----

PipelineResult refinement_pipeline(const Grammar& g, const Vec& s, const Vec& t,
                                   const DerivationTree& witness, const SearchBounds& b) {
    RefinementState st = initial_state(g, s, t, witness);
    clean(st);
    for (int round = 0; round < 100000; ++round) {
        PerfectnessReport rep = check_perfect(st, b);
        if (rep.perfect()) return {std::move(st), std::move(rep)};

        // Ranked targets: algebraic first, then combinatorial; among the
        // qualifying components the deepest one, leftmost on ties.
        std::vector<int> depth(st.items.size(), 0);
        {
            KlmTree kt = st.to_klm_tree();
            for (size_t i = 0; i < kt.nodes.size(); ++i) {
                for (int ch : {kt.nodes[i].child1, kt.nodes[i].child2})
                    if (ch >= 0) depth[ch] = depth[i] + 1;
            }
        }
        auto pick = [&](const std::vector<int>& candidates) {
            int best = -1;
            for (int i : candidates)
                if (best < 0 || depth[i] > depth[best] || (depth[i] == depth[best] && i < best))
                    best = i;
            return best;
        };
        std::vector<int> alg, comb;
        std::vector<bool> comb_left(st.items.size(), true);
        for (const CompReport& cr : rep.comps) {
            if (st.items[cr.item].comp.trivial()) continue;
            if (!cr.bounded_rules.empty()) alg.push_back(cr.item);
            bool fwd_fail = cr.forward.applicable && !cr.forward.found && !cr.forward.unknown;
            bool bwd_fail = cr.backward.applicable && !cr.backward.found && !cr.backward.unknown;
            if (fwd_fail || bwd_fail) {
                comb.push_back(cr.item);
                // Encode the side with the smaller configuration sweep.
                const RefineItem& it = st.items[cr.item];
                long long maxl = 0, maxr = 0;
                for (int n : segment_path(st.witness, it.seg.root, it.seg.exit)) {
                    maxl = std::max(maxl, st.cfg.lv(n)[0]);
                    maxr = std::max(maxr, st.cfg.rv(n)[0]);
                }
                bool left = maxl <= maxr;
                if (cert_side_of(it.comp, left)) left = !left;
                comb_left[cr.item] = left;
            }
        }
        if (!alg.empty()) {
            decompose_algebraic(st, pick(alg));
        } else if (!comb.empty()) {
            int tgt2 = pick(comb);
            decompose_combinatorial(st, tgt2, comb_left[tgt2]);
        } else if (rep.pump_unknown) {
            throw ResumableUnknown("pumping search inconclusive at the configured bounds");
        } else if (!rep.fully_constrained || !rep.fully_orthogonalized) {
            clean(st);
            continue;
        } else {
            throw RefineError("imperfect tree without an applicable refinement");
        }
        clean(st);
    }
    throw RefineError("refinement did not terminate within the step budget");
}

SubproblemSolver oracle_solver(const SearchBounds& b) {
    return [b](const Grammar& sub, const Vec& s, const Vec& t) -> std::optional<DerivationTree> {
        OracleVerdict v = bounded_reach(sub, s, t, b);
        if (v.yes()) return v.witness;
        return std::nullopt;
    };
}

// ---- reconstruction ----

namespace {

CompParikh theta_parikh(const Grammar& g, const KlmComponent& c, const PumpingCycle& pc) {
    (void)g;
    CompParikh p;
    const DerivationTree& t = pc.cycle.tree;
    int pos = 0;
    for (int sidx : pc.spine_rules) {
        ++p.count[{static_cast<int>(RuleSpace::Scc), sidx}];
        const SccRule& sr = c.scc_rules[sidx];
        int c1 = t.first_child(pos), c2 = t.second_child(pos);
        int side = sr.left_deg ? c1 : c2;
        int cont = sr.left_deg ? c2 : c1;
        if (t.nodes[side].cert) {
            CertRule want{t.nodes[side].symbol, t.nodes[side].cert_disp};
            const auto& certs = c.certs(sr.left_deg);
            auto itc = std::find(certs.begin(), certs.end(), want);
            if (itc == certs.end()) throw RefineError("pumping cycle uses an unknown certificate");
            RuleSpace sp = sr.left_deg ? RuleSpace::CertLeft : RuleSpace::CertRight;
            ++p.count[{static_cast<int>(sp), static_cast<int>(itc - certs.begin())}];
        } else {
            const std::vector<int>& rules = sr.left_deg ? c.left_rules : c.right_rules;
            RuleSpace sp = sr.left_deg ? RuleSpace::Left : RuleSpace::Right;
            for (int q = side; q < t.end_of(side); ++q) {
                if (t.nodes[q].symbol < 0 || t.nodes[q].rule < 0) continue;
                auto itr = std::find(rules.begin(), rules.end(), t.nodes[q].rule);
                if (itr == rules.end()) throw RefineError("pumping cycle uses a foreign rule");
                ++p.count[{static_cast<int>(sp), static_cast<int>(itr - rules.begin())}];
            }
        }
        pos = cont;
    }
    return p;
}

long long seg_norm(const DerivationTree& t) {
    long long m = 0;
    for (const TreeNode& n : t.nodes) {
        if (n.symbol == -1)
            for (long long v : n.value) m = std::max(m, v < 0 ? -v : v);
        if (n.cert)
            for (long long v : n.cert_disp) m = std::max(m, v < 0 ? -v : v);
    }
    return m;
}

Segment trivial_segment(int symbol) {
    Segment s;
    s.tree.dim = 1;
    TreeNode n;
    n.symbol = symbol;
    s.tree.nodes.push_back(n);
    s.leaf = 0;
    return s;
}

}  // namespace

DerivationTree reconstruct_tree(const Grammar& g, const KlmTree& kt, const SearchBounds& b,
                                const SubproblemSolver& solver) {
    check_klm_tree(g, kt);
    TreeAnalysis ta = analyze_tree(g, kt);
    auto sol_min_opt = solve_one(ta.cs.sys);
    if (!sol_min_opt) throw RefineError("characteristic system is infeasible");
    const SolutionVec& sol_min = *sol_min_opt;
    const SolutionVec& sol_h = ta.hb.sum;
    int d = g.dim;

    // Pumping cycles per nontrivial component, as in the perfectness check.
    size_t ncomp = kt.nodes.size();
    std::vector<std::optional<PumpingCycle>> th1(ncomp), th2(ncomp);
    for (size_t i = 0; i < ncomp; ++i) {
        const KlmComponent& c = kt.nodes[i].comp;
        if (c.trivial()) continue;
        int ni = static_cast<int>(i);
        bool orth_left = cert_side_of(c, true), orth_right = cert_side_of(c, false);
        if (!c.annotated) {
            orth_left = decide_orthogonality(g, c, true).has_value();
            orth_right = decide_orthogonality(g, c, false).has_value();
        }
        auto in_pump = [&](ConfigSlot s, bool left_side) {
            return ta.slot_bounded(ni, s, d) && !(left_side ? orth_left : orth_right);
        };
        bool pl = in_pump(kLsrc, true), pr = in_pump(kRsrc, false);
        bool ql = in_pump(kLtgt, true), qr = in_pump(kRtgt, false);
        if (pl || pr) {
            PumpSearchResult res = find_pumping_cycle(g, c, Direction::Forward, pl, pr, b);
            if (!res.cycle) throw ResumableUnknown("missing forward pumping cycle");
            th1[i] = std::move(res.cycle);
        }
        if (ql || qr) {
            PumpSearchResult res = find_pumping_cycle(g, c, Direction::Backward, ql, qr, b);
            if (!res.cycle) throw ResumableUnknown("missing backward pumping cycle");
            th2[i] = std::move(res.cycle);
        }
    }

    // Coefficients b1..b5 with exact arithmetic.
    auto count_of = [&](const SolutionVec& sol, int node, RuleSpace sp, int idx) {
        return sol[ta.cs.pk(node, sp, idx)];
    };
    auto all_spaces = [&](const KlmComponent& c) {
        std::vector<std::pair<RuleSpace, int>> out;
        for (size_t j = 0; j < c.scc_rules.size(); ++j) out.push_back({RuleSpace::Scc, static_cast<int>(j)});
        for (size_t j = 0; j < c.left_rules.size(); ++j) out.push_back({RuleSpace::Left, static_cast<int>(j)});
        for (size_t j = 0; j < c.right_rules.size(); ++j) out.push_back({RuleSpace::Right, static_cast<int>(j)});
        for (size_t j = 0; j < c.left_certs.size(); ++j) out.push_back({RuleSpace::CertLeft, static_cast<int>(j)});
        for (size_t j = 0; j < c.right_certs.size(); ++j) out.push_back({RuleSpace::CertRight, static_cast<int>(j)});
        return out;
    };

    BigInt b1(0), b2(0);
    std::vector<Segment> gammas(ncomp);
    std::vector<CompParikh> th1_pk(ncomp), th2_pk(ncomp);
    for (size_t i = 0; i < ncomp; ++i) {
        const KlmComponent& c = kt.nodes[i].comp;
        if (c.trivial()) {
            gammas[i] = trivial_segment(c.src.nt);
            continue;
        }
        BigInt cur(0);
        if (th1[i]) {
            th1_pk[i] = theta_parikh(g, c, *th1[i]);
            cur += BigInt(th1[i]->cycle.tree.size()) * BigInt(seg_norm(th1[i]->cycle.tree));
        }
        if (th2[i]) {
            th2_pk[i] = theta_parikh(g, c, *th2[i]);
            cur += BigInt(th2[i]->cycle.tree.size()) * BigInt(seg_norm(th2[i]->cycle.tree));
        }
        if (b1 < cur) b1 = cur;

        CompParikh pmin;
        for (auto [sp, j] : all_spaces(c)) {
            BigInt v = count_of(sol_min, static_cast<int>(i), sp, j);
            if (!v.fits_i64()) throw NodeBudgetExceeded("minimal solution exceeds the node budget");
            pmin.count[{static_cast<int>(sp), j}] = v.to_i64();
        }
        gammas[i] = realize_from_parikh(g, c, pmin, c.src, c.tgt, b.node_budget);
        BigInt gsz = BigInt(gammas[i].tree.size()) * BigInt(seg_norm(gammas[i].tree));
        if (b2 < gsz) b2 = gsz;
    }
    b1 += BigInt(1);
    b2 += BigInt(1);
    BigInt b3 = b1 * (b2 + BigInt(1));

    // Residual Parikh images and theta3 sizes.
    std::vector<std::map<std::pair<int, int>, BigInt>> res_pk(ncomp);
    BigInt b4(0);
    for (size_t i = 0; i < ncomp; ++i) {
        const KlmComponent& c = kt.nodes[i].comp;
        if (c.trivial()) continue;
        BigInt nodes(1);
        long long norm = 0;
        for (auto [sp, j] : all_spaces(c)) {
            BigInt v = b3 * count_of(sol_h, static_cast<int>(i), sp, j);
            v -= BigInt(th1_pk[i].at(sp, j));
            v -= BigInt(th2_pk[i].at(sp, j));
            if (v < BigInt(1))
                throw RefineError("residual Parikh image lost a rule; production unboundedness fails");
            res_pk[i][{static_cast<int>(sp), j}] = v;
            long long per_rule = 1;
            long long unorm = 0;
            if (sp == RuleSpace::Left || sp == RuleSpace::Right) {
                const Rule& r = g.rules[(sp == RuleSpace::Left ? c.left_rules : c.right_rules)[j]];
                per_rule = r.is_leaf ? 2 : 1;
                if (r.is_leaf) unorm = l1_norm(r.vec);
            } else if (sp == RuleSpace::CertLeft || sp == RuleSpace::CertRight) {
                unorm = l1_norm((sp == RuleSpace::CertLeft ? c.left_certs : c.right_certs)[j].disp);
            }
            nodes += v * BigInt(per_rule);
            norm = std::max(norm, unorm);
        }
        BigInt sz = nodes * BigInt(norm);
        if (b4 < sz) b4 = sz;
    }
    BigInt b5 = b2 + b4;
    BigInt bcoef = b3 * b5;
    (void)bcoef;

    // Node budget check for the assembled tree.
    BigInt total(0);
    for (size_t i = 0; i < ncomp; ++i) {
        const KlmComponent& c = kt.nodes[i].comp;
        if (c.trivial()) {
            total += BigInt(gammas[i].tree.size()) + BigInt(1);
            continue;
        }
        BigInt seg = BigInt(gammas[i].tree.size());
        if (th1[i]) seg += b5 * BigInt(th1[i]->cycle.tree.size() - 1);
        if (th2[i]) seg += b5 * BigInt(th2[i]->cycle.tree.size() - 1);
        BigInt th3_nodes(1);
        for (auto& [key, v] : res_pk[i]) {
            auto [sp, j] = key;
            long long per_rule = 1;
            if (static_cast<RuleSpace>(sp) == RuleSpace::Left ||
                static_cast<RuleSpace>(sp) == RuleSpace::Right) {
                const Rule& r = g.rules[(static_cast<RuleSpace>(sp) == RuleSpace::Left
                                             ? c.left_rules
                                             : c.right_rules)[j]];
                per_rule = r.is_leaf ? 2 : 1;
            }
            th3_nodes += v * BigInt(per_rule);
        }
        seg += b5 * (th3_nodes - BigInt(1));
        total += seg + BigInt(1);
    }
    if (total > BigInt(b.node_budget))
        throw NodeBudgetExceeded("reconstruction needs " + total.to_string() + " nodes");
    long long b5v = b5.to_i64();

    // Assemble the segment of every component.
    std::vector<Segment> segs(ncomp);
    for (size_t i = 0; i < ncomp; ++i) {
        const KlmComponent& c = kt.nodes[i].comp;
        if (c.trivial()) {
            segs[i] = gammas[i];
            continue;
        }
        CompParikh pres;
        for (auto& [key, v] : res_pk[i]) pres.count[key] = v.to_i64();
        Segment th3 = realize_from_parikh(g, c, pres, c.tgt, c.tgt, b.node_budget);
        std::optional<Segment> acc;
        if (th1[i]) acc = duplicate_cycle(th1[i]->cycle, b5v, b.node_budget);
        acc = acc ? append_segment(*acc, gammas[i]) : gammas[i];
        acc = append_segment(*acc, duplicate_cycle(th3, b5v, b.node_budget));
        if (th2[i]) acc = append_segment(*acc, duplicate_cycle(th2[i]->cycle, b5v, b.node_budget));
        segs[i] = std::move(*acc);
    }

    // Glue by exit rules, tracking where every component landed.
    std::vector<long long> built_size(ncomp, 0);
    std::function<DerivationTree(int)> build = [&](int i) -> DerivationTree {
        const KlmNode& node = kt.nodes[i];
        const KlmComponent& c = node.comp;
        DerivationTree out = segs[i].tree;
        int leaf = segs[i].leaf;
        DerivationTree expansion;
        expansion.dim = d;
        TreeNode exit_node;
        exit_node.symbol = c.tgt.nt;
        if (c.exit.is_cert) {
            Vec l(d), r(d);
            for (int k = 0; k < d; ++k) {
                BigInt lv = sol_min[ta.cs.leaf_var[i][0] + k] + bcoef * ta.hb.sum[ta.cs.leaf_var[i][0] + k];
                BigInt rv = sol_min[ta.cs.leaf_var[i][1] + k] + bcoef * ta.hb.sum[ta.cs.leaf_var[i][1] + k];
                if (!lv.fits_i64() || !rv.fits_i64())
                    throw NodeBudgetExceeded("certificate configuration exceeds 64 bits");
                l[k] = lv.to_i64();
                r[k] = rv.to_i64();
            }
            Grammar sub = induced_sub_gvas(g, c.exit.cert.nt);
            auto w = solver(sub, l, r);
            if (!w) throw ResumableUnknown("certificate subproblem unresolved");
            DerivationTree wt = remap_rules(*w, sub, g);
            Configs wc = propagate_configurations(wt, {false, l, r});
            if (!is_nonnegative(wc) || !wt.is_complete() || wt.nodes[0].symbol != c.exit.cert.nt)
                throw RefineError("certificate subproblem returned an invalid witness");
            expansion = std::move(wt);
        } else {
            const Rule& r = g.rules[c.exit.grammar_rule];
            exit_node.rule = c.exit.grammar_rule;
            if (r.is_leaf) {
                exit_node.children = 1;
                TreeNode term;
                term.value = r.vec;
                expansion.nodes.push_back(exit_node);
                expansion.nodes.push_back(term);
                expansion.nodes[0].subtree = 2;
            } else {
                DerivationTree t1 = build(node.child1);
                DerivationTree t2 = build(node.child2);
                exit_node.children = 2;
                exit_node.subtree = 1 + t1.size() + t2.size();
                expansion.nodes.push_back(exit_node);
                for (const TreeNode& n : t1.nodes) expansion.nodes.push_back(n);
                for (const TreeNode& n : t2.nodes) expansion.nodes.push_back(n);
            }
        }
        out = splice(out, leaf, expansion);
        built_size[i] = out.size();
        return out;
    };
    DerivationTree stubbed = build(0);

    // Positions of every component in the assembled tree.
    std::vector<long long> pos(ncomp, -1);
    std::function<void(int, long long)> place = [&](int i, long long at) {
        pos[i] = at;
        const KlmNode& node = kt.nodes[i];
        if (node.child1 >= 0) {
            long long exit_pos = at + segs[i].leaf;
            place(node.child1, exit_pos + 1);
            place(node.child2, exit_pos + 1 + built_size[node.child1]);
        }
    };
    place(0, 0);

    // Validate capture per component before resolving stubs.
    Vec root_l(d), root_r(d);
    for (int k = 0; k < d; ++k) {
        BigInt lv = sol_min[ta.cs.cfg(0, kLsrc, k)] + bcoef * ta.hb.sum[ta.cs.cfg(0, kLsrc, k)];
        BigInt rv = sol_min[ta.cs.cfg(0, kRsrc, k)] + bcoef * ta.hb.sum[ta.cs.cfg(0, kRsrc, k)];
        if (!lv.fits_i64() || !rv.fits_i64()) throw NodeBudgetExceeded("root configuration overflow");
        root_l[k] = lv.to_i64();
        root_r[k] = rv.to_i64();
    }
    Configs cfg = propagate_configurations(stubbed, {false, root_l, root_r});
    if (!is_nonnegative(cfg)) throw RefineError("reconstructed tree is not nonnegative");
    for (size_t i = 0; i < ncomp; ++i) {
        int at = static_cast<int>(pos[i]);
        int exit = at + segs[i].leaf;
        Segment seg = make_segment(stubbed, at, exit);
        Anchor a{false, cfg.lv(at), cfg.rv(at)};
        if (!check_capture(g, kt.nodes[i].comp, seg, a))
            throw RefineError("reconstructed tree escapes its component");
    }

    // Resolve the in-segment certificate stubs right to left.
    std::vector<int> stubs;
    for (int p = 0; p < stubbed.size(); ++p)
        if (stubbed.nodes[p].cert) stubs.push_back(p);
    DerivationTree final_tree = stubbed;
    for (auto it = stubs.rbegin(); it != stubs.rend(); ++it) {
        int p = *it;
        Vec l = cfg.lv(p), r = cfg.rv(p);
        Grammar sub = induced_sub_gvas(g, stubbed.nodes[p].symbol);
        auto w = solver(sub, l, r);
        if (!w) throw ResumableUnknown("certificate subproblem unresolved");
        DerivationTree wt = remap_rules(*w, sub, g);
        Configs wc = propagate_configurations(wt, {false, l, r});
        if (!is_nonnegative(wc) || !wt.is_complete() ||
            wt.nodes[0].symbol != stubbed.nodes[p].symbol)
            throw RefineError("certificate subproblem returned an invalid witness");
        final_tree = splice(final_tree, p, wt);
        if (final_tree.size() > b.node_budget)
            throw NodeBudgetExceeded("stub resolution exceeded the node budget");
    }

    // Final independent validation.
    if (!final_tree.is_complete()) throw RefineError("reconstruction left the tree incomplete");
    final_tree.check_well_formed(g);
    Configs fc = propagate_configurations(final_tree, {false, root_l, root_r});
    if (!is_nonnegative(fc)) throw RefineError("reconstructed tree is not nonnegative");
    return final_tree;
}

// ---- certificate checking ----

CertificateVerdict verify_certificate(const Grammar& g, const KlmTree& kt, const Vec& s,
                                      const Vec& t, const SearchBounds& b) {
    CertificateVerdict cv;
    try {
        check_klm_tree(g, kt);
    } catch (const std::exception& e) {
        cv.kind = CertificateVerdict::Reject;
        cv.reason = std::string("malformed certificate: ") + e.what();
        return cv;
    }
    const KlmComponent& rootc = kt.nodes[0].comp;
    if (rootc.src.nt != g.start || !rootc.fixed[kLsrc] || !rootc.fixed[kRsrc] ||
        *rootc.fixed[kLsrc] != s || *rootc.fixed[kRsrc] != t) {
        cv.kind = CertificateVerdict::Reject;
        cv.reason = "certificate does not constrain the queried instance";
        return cv;
    }

    CharSystem cs = char_system(g, kt);
    if (!solve_one(cs.sys)) {
        cv.kind = CertificateVerdict::Reject;
        cv.reason = "characteristic system is infeasible";
        return cv;
    }

    PerfectnessReport rep = check_perfect_tree(g, kt, b);
    if (rep.pump_unknown) {
        cv.kind = CertificateVerdict::Unknown;
        cv.reason = "pumpability inconclusive at the configured bounds";
        return cv;
    }
    if (!rep.perfect()) {
        cv.kind = CertificateVerdict::Reject;
        std::string why;
        if (!rep.fully_constrained) why += " unconstrained-variable";
        if (!rep.fully_orthogonalized) why += " unorthogonalized-component";
        if (!rep.production_unbounded) why += " bounded-production";
        if (!rep.exp_pumpable) why += " not-pumpable";
        cv.reason = "not perfect:" + why;
        return cv;
    }

    // Certificate subproblems with syntactically determined configurations.
    for (const KlmNode& node : kt.nodes) {
        const KlmComponent& c = node.comp;
        std::vector<std::pair<int, std::pair<Vec, Vec>>> instances;  // nt, (from, to)
        for (const SccRule& sr : c.scc_rules) {
            if (!cert_side_of(c, sr.left_deg)) continue;
            instances.push_back({sr.side_nt, {*sr.head.enc, *sr.path_child.enc}});
        }
        if (c.exit.is_cert) {
            if (!c.fixed[kLtgt] || !c.fixed[kRtgt]) {
                cv.kind = CertificateVerdict::Reject;
                cv.reason = "certificate exit without fixed configurations";
                return cv;
            }
            instances.push_back({c.exit.cert.nt, {*c.fixed[kLtgt], *c.fixed[kRtgt]}});
        }
        for (auto& [nt, pair] : instances) {
            OracleVerdict v = bounded_reach(induced_sub_gvas(g, nt), pair.first, pair.second, b);
            if (v.no()) {
                cv.kind = CertificateVerdict::Reject;
                cv.reason = "certificate subproblem is unreachable";
                return cv;
            }
            if (v.unknown()) {
                cv.kind = CertificateVerdict::Unknown;
                cv.reason = "certificate subproblem inconclusive";
                return cv;
            }
        }
    }

    try {
        DerivationTree w = reconstruct_tree(g, kt, b, oracle_solver(b));
        cv.kind = CertificateVerdict::Accept;
        cv.witness = std::move(w);
    } catch (const NodeBudgetExceeded& e) {
        cv.kind = CertificateVerdict::Unknown;
        cv.reason = std::string("reconstruction over budget: ") + e.what();
    } catch (const ResumableUnknown& e) {
        cv.kind = CertificateVerdict::Unknown;
        cv.reason = e.what();
    } catch (const std::exception& e) {
        cv.kind = CertificateVerdict::Unknown;
        cv.reason = std::string("reconstruction failed: ") + e.what();
    }
    return cv;
}

}  // namespace tgvas
