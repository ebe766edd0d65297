#include "tgvas/klm.hpp"

#include <algorithm>
#include <functional>
#include <set>

#include "tgvas/structure.hpp"

namespace tgvas {

namespace {

std::string sym_text(const Grammar& g, const CompSym& s) {
    std::string t = g.nonterminals[s.nt];
    if (s.enc) t = "(_" + vec_text(*s.enc) + " " + t + ")";
    return t;
}

Vec vec_sub(const Vec& a, const Vec& b) {
    Vec r(a.size());
    for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

}  // namespace

std::vector<int> KlmComponent::side_nonterminals(const Grammar& g, bool left) const {
    std::set<int> nts;
    for (int ri : (left ? left_rules : right_rules)) {
        const Rule& r = g.rules[ri];
        nts.insert(r.head);
        if (!r.is_leaf) {
            nts.insert(r.left);
            nts.insert(r.right);
        }
    }
    for (const SccRule& sr : scc_rules)
        if (sr.left_deg == left && !(annotated && annot_left == left)) nts.insert(sr.side_nt);
    return {nts.begin(), nts.end()};
}

// ---- capture ----

namespace {

// All path symbols must lie in the SCC of the root symbol of the production
// graph spanned by the segment's rules.
void check_strongly_connected(const Grammar& g, const Segment& s, const std::vector<int>& path) {
    std::set<std::pair<int, int>> edges;
    for (const TreeNode& n : s.tree.nodes) {
        if (n.symbol < 0 || n.children == 0 || n.rule < 0) continue;
        const Rule& r = g.rules[n.rule];
        if (!r.is_leaf) {
            edges.insert({n.symbol, r.left});
            edges.insert({n.symbol, r.right});
        }
    }
    auto reach = [&](int s0, bool rev) {
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
    int root_sym = s.tree.nodes[0].symbol;
    std::set<int> fwd = reach(root_sym, false), bwd = reach(root_sym, true);
    for (int p : path) {
        int sym = s.tree.nodes[p].symbol;
        if (!(fwd.count(sym) && bwd.count(sym)))
            throw KlmError("segment is not strongly connected");
    }
}

void collect_rules(const Grammar& g, const DerivationTree& t, int root, std::set<int>& out) {
    for (int p = root; p < t.end_of(root); ++p) {
        const TreeNode& n = t.nodes[p];
        if (n.cert) throw KlmError("capture: certificate stub in a plain hang");
        if (n.symbol >= 0 && n.children == 0)
            throw KlmError("capture: hanging subtree is incomplete");
        if (n.symbol >= 0 && n.rule >= 0) out.insert(n.rule);
    }
    (void)g;
}

}  // namespace

KlmComponent capture_component(const Grammar& g, const Segment& s, const ExitRule& exit) {
    std::vector<int> path = segment_path(s.tree, 0, s.leaf);
    check_strongly_connected(g, s, path);

    KlmComponent c;
    c.src.nt = s.root_symbol();
    c.tgt.nt = s.leaf_symbol();
    c.exit = exit;

    std::set<SccRule> scc;
    std::set<int> lrules, rrules;
    std::set<CertRule> lcerts, rcerts;
    for (size_t i = 0; i + 1 < path.size(); ++i) {
        int n = path[i];
        int next = path[i + 1];
        if (s.tree.nodes[n].children != 2) throw KlmError("capture: path node without binary rule");
        int c1 = s.tree.first_child(n), c2 = s.tree.second_child(n);
        bool via_second = next == c2;
        if (!via_second && next != c1) throw KlmError("capture: broken path");
        int side = via_second ? c1 : c2;

        SccRule sr;
        sr.head.nt = s.tree.nodes[n].symbol;
        sr.path_child.nt = s.tree.nodes[next].symbol;
        sr.side_nt = s.tree.nodes[side].symbol;
        sr.left_deg = via_second;
        sr.grammar_rule = s.tree.nodes[n].rule;
        scc.insert(sr);

        if (s.tree.nodes[side].cert) {
            CertRule cr{s.tree.nodes[side].symbol, s.tree.nodes[side].cert_disp};
            (via_second ? lcerts : rcerts).insert(cr);
        } else {
            collect_rules(g, s.tree, side, via_second ? lrules : rrules);
        }
    }
    c.scc_rules.assign(scc.begin(), scc.end());
    c.left_rules.assign(lrules.begin(), lrules.end());
    c.right_rules.assign(rrules.begin(), rrules.end());
    c.left_certs.assign(lcerts.begin(), lcerts.end());
    c.right_certs.assign(rcerts.begin(), rcerts.end());
    if (!c.left_certs.empty() || !c.right_certs.empty()) {
        c.annotated = true;
        c.annot_left = !c.left_certs.empty();
        if (!c.left_certs.empty() && !c.right_certs.empty())
            throw KlmError("capture: certificates on both sides");
    }
    return c;
}

namespace {

Vec side_cfg(const Configs& cfg, int node, bool left) {
    return left ? cfg.lv(node) : cfg.rv(node);
}

}  // namespace

bool check_capture(const Grammar& g, const KlmComponent& c, const Segment& s, const Anchor& anchor) {
    std::vector<int> path;
    try {
        path = segment_path(s.tree, 0, s.leaf);
        check_strongly_connected(g, s, path);
    } catch (const TreeError&) {
        return false;
    } catch (const KlmError&) {
        return false;
    }
    Configs cfg = propagate_configurations(s.tree, anchor);

    auto sym_at = [&](int node) {
        CompSym v;
        v.nt = s.tree.nodes[node].symbol;
        if (c.annotated) v.enc = side_cfg(cfg, node, c.annot_left);
        return v;
    };
    if (!(sym_at(0) == c.src) || !(sym_at(s.leaf) == c.tgt)) return false;

    std::set<SccRule> used;
    std::set<int> lrules, rrules;
    std::set<CertRule> lcert_used, rcert_used;
    for (size_t i = 0; i + 1 < path.size(); ++i) {
        int n = path[i], next = path[i + 1];
        int c1 = s.tree.first_child(n), c2 = s.tree.second_child(n);
        bool via_second = next == c2;
        int side = via_second ? c1 : c2;

        SccRule sr;
        sr.head = sym_at(n);
        sr.path_child = sym_at(next);
        sr.side_nt = s.tree.nodes[side].symbol;
        sr.left_deg = via_second;
        sr.grammar_rule = s.tree.nodes[n].rule;
        used.insert(sr);

        bool cert_side = c.annotated && c.annot_left == via_second;
        if (cert_side) {
            CertRule cr{s.tree.nodes[side].symbol,
                        s.tree.nodes[side].cert ? s.tree.nodes[side].cert_disp
                                                : displacement_of(s.tree, side)};
            const auto& certs = via_second ? c.left_certs : c.right_certs;
            if (!std::count(certs.begin(), certs.end(), cr)) return false;
            (via_second ? lcert_used : rcert_used).insert(cr);
        } else {
            if (s.tree.nodes[side].cert) return false;
            try {
                collect_rules(g, s.tree, side, via_second ? lrules : rrules);
            } catch (const KlmError&) {
                return false;
            }
        }
    }
    std::set<SccRule> have(c.scc_rules.begin(), c.scc_rules.end());
    if (used != have) return false;
    if (c.annotated && c.annot_left) {
        if (std::set<CertRule>(c.left_certs.begin(), c.left_certs.end()) != lcert_used) return false;
        if (std::set<int>(c.right_rules.begin(), c.right_rules.end()) != rrules) return false;
        if (!c.left_rules.empty()) return false;
    } else if (c.annotated) {
        if (std::set<CertRule>(c.right_certs.begin(), c.right_certs.end()) != rcert_used) return false;
        if (std::set<int>(c.left_rules.begin(), c.left_rules.end()) != lrules) return false;
        if (!c.right_rules.empty()) return false;
    } else {
        if (std::set<int>(c.left_rules.begin(), c.left_rules.end()) != lrules) return false;
        if (std::set<int>(c.right_rules.begin(), c.right_rules.end()) != rrules) return false;
    }
    return true;
}

// ---- tree building ----

KlmTree build_klm_tree(const Grammar& g, const DerivationTree& t, const Division& div) {
    validate_division(t, div);
    KlmTree kt;
    kt.dim = t.dim;
    std::map<int, int> node_of_root;
    for (size_t i = 0; i < div.segs.size(); ++i) node_of_root[div.segs[i].root] = static_cast<int>(i);

    for (const DivSeg& ds : div.segs) {
        Segment seg = make_segment(t, ds.root, ds.exit);
        int q = ds.exit;
        ExitRule exit;
        exit.grammar_rule = t.nodes[q].rule;
        KlmNode node;
        node.comp = capture_component(g, seg, exit);
        if (t.nodes[q].children == 2) {
            node.child1 = node_of_root.at(t.first_child(q));
            node.child2 = node_of_root.at(t.second_child(q));
        } else {
            node.term = t.nodes[t.first_child(q)].value;
        }
        kt.nodes.push_back(std::move(node));
    }
    return kt;
}

KlmTree initial_klm_tree(const Grammar& g, const Vec& s, const Vec& t,
                         const DerivationTree& witness) {
    if (!witness.is_complete()) throw KlmError("initial_klm_tree: witness is incomplete");
    Anchor a{false, s, t};
    Configs cfg = propagate_configurations(witness, a);
    if (!is_nonnegative(cfg)) throw KlmError("initial_klm_tree: witness is not nonnegative");
    KlmTree kt = build_klm_tree(g, witness, small_division(witness, g));
    kt.nodes[0].comp.fixed[kLsrc] = s;
    kt.nodes[0].comp.fixed[kRsrc] = t;
    return kt;
}

void check_klm_tree(const Grammar& g, const KlmTree& kt) {
    if (kt.nodes.empty()) throw KlmError("empty KLM tree");
    std::vector<int> seen(kt.nodes.size(), 0);
    for (size_t i = 0; i < kt.nodes.size(); ++i) {
        const KlmNode& n = kt.nodes[i];
        const KlmComponent& c = n.comp;
        for (const SccRule& sr : c.scc_rules) {
            if (sr.grammar_rule < 0 || sr.grammar_rule >= static_cast<int>(g.rules.size()))
                throw KlmError("component references a foreign rule");
            const Rule& r = g.rules[sr.grammar_rule];
            if (r.is_leaf || r.head != sr.head.nt) throw KlmError("SCC rule shape mismatch");
            int want_path = sr.left_deg ? r.right : r.left;
            int want_side = sr.left_deg ? r.left : r.right;
            if (want_path != sr.path_child.nt || want_side != sr.side_nt)
                throw KlmError("SCC rule children mismatch");
            if (c.annotated) {
                if (!sr.head.enc || !sr.path_child.enc)
                    throw KlmError("annotated component with unencoded SCC rule");
                // Certificate displacements equal the encoding differences.
                if (sr.left_deg == c.annot_left) {
                    CertRule want{sr.side_nt, vec_sub(*sr.path_child.enc, *sr.head.enc)};
                    const auto& certs = c.certs(c.annot_left);
                    if (!std::count(certs.begin(), certs.end(), want))
                        throw KlmError("certificate rule missing for an encoded SCC rule");
                }
            }
        }
        if (c.annotated) {
            if (!c.src.enc || !c.tgt.enc) throw KlmError("annotated component without encoded endpoints");
            ConfigSlot a = c.annot_left ? kLsrc : kRsrc;
            ConfigSlot b = c.annot_left ? kLtgt : kRtgt;
            if (!c.fixed[a] || *c.fixed[a] != *c.src.enc || !c.fixed[b] || *c.fixed[b] != *c.tgt.enc)
                throw KlmError("annotated component must fix its encoded configurations");
            if (!c.certs(!c.annot_left).empty())
                throw KlmError("certificates on the unannotated side");
            if (!(c.annot_left ? c.left_rules : c.right_rules).empty())
                throw KlmError("plain rules left on the annotated side");
        }
        for (int ri : c.left_rules)
            if (ri < 0 || ri >= static_cast<int>(g.rules.size()))
                throw KlmError("foreign left rule");
        for (int ri : c.right_rules)
            if (ri < 0 || ri >= static_cast<int>(g.rules.size()))
                throw KlmError("foreign right rule");

        // Tree shape: children sources match the exit rule body.
        if (c.exit.is_cert) {
            if (n.child1 != -1 || n.child2 != -1 || n.term)
                throw KlmError("certificate exit must have an opaque child");
            if (!c.trivial()) throw KlmError("certificate exit on a nontrivial component");
            if (c.exit.cert.nt != c.tgt.nt) throw KlmError("certificate exit symbol mismatch");
        } else {
            const Rule& r = g.rules.at(c.exit.grammar_rule);
            if (r.head != c.tgt.nt) throw KlmError("exit rule head must match the target symbol");
            if (r.is_leaf) {
                if (!n.term || *n.term != r.vec || n.child1 != -1)
                    throw KlmError("leaf exit child mismatch");
            } else {
                if (n.child1 < 0 || n.child2 < 0 || n.term) throw KlmError("binary exit needs two children");
                if (n.child1 >= static_cast<int>(kt.nodes.size()) ||
                    n.child2 >= static_cast<int>(kt.nodes.size()))
                    throw KlmError("exit child out of range");
                if (kt.nodes[n.child1].comp.src.nt != r.left ||
                    kt.nodes[n.child2].comp.src.nt != r.right)
                    throw KlmError("child source symbols must match the exit rule body");
                ++seen[n.child1];
                ++seen[n.child2];
            }
        }
        // Trivial components connect their own endpoints.
        if (c.trivial() && c.src.nt != c.tgt.nt) throw KlmError("trivial component with distinct endpoints");
    }
    for (size_t i = 1; i < kt.nodes.size(); ++i)
        if (seen[i] != 1) throw KlmError("KLM tree is not a tree");
    if (seen[0] != 0) throw KlmError("root may not be a child");
}

// ---- characteristic system ----

namespace {

std::string slot_name(ConfigSlot s) {
    switch (s) {
        case kLsrc: return "l_src";
        case kRsrc: return "r_src";
        case kLtgt: return "l_tgt";
        case kRtgt: return "r_tgt";
    }
    return "?";
}

}  // namespace

CharSystem char_system(const Grammar& g, const KlmTree& kt) {
    CharSystem cs;
    int d = kt.dim;
    cs.config_var.assign(kt.nodes.size() * 4, -1);
    cs.leaf_var.assign(kt.nodes.size(), {-1, -1});

    auto add_coords = [&](const std::string& base) {
        int first = -1;
        for (int k = 0; k < d; ++k) {
            int v = cs.sys.add_var(d == 1 ? base : base + "." + std::to_string(k), 0);
            if (k == 0) first = v;
        }
        return first;
    };

    for (size_t i = 0; i < kt.nodes.size(); ++i) {
        const KlmComponent& c = kt.nodes[i].comp;
        int ni = static_cast<int>(i);
        std::string pre = "c" + std::to_string(i) + ".";
        for (ConfigSlot s : {kLsrc, kRsrc, kLtgt, kRtgt})
            cs.config_var[i * 4 + s] = add_coords(pre + slot_name(s));
        auto add_pk = [&](RuleSpace sp, const char* tag, size_t count) {
            for (size_t j = 0; j < count; ++j)
                cs.parikh[{ni, static_cast<int>(sp), static_cast<int>(j)}] =
                    cs.sys.add_var(pre + tag + std::to_string(j), 1);
        };
        add_pk(RuleSpace::Scc, "scc.", c.scc_rules.size());
        add_pk(RuleSpace::Left, "L.", c.left_rules.size());
        add_pk(RuleSpace::Right, "R.", c.right_rules.size());
        add_pk(RuleSpace::CertLeft, "cL.", c.left_certs.size());
        add_pk(RuleSpace::CertRight, "cR.", c.right_certs.size());
        if (kt.nodes[i].term || c.exit.is_cert) {
            cs.leaf_var[i][0] = add_coords("t" + std::to_string(i) + ".l");
            cs.leaf_var[i][1] = add_coords("t" + std::to_string(i) + ".r");
        }
    }

    auto& sys = cs.sys;
    for (size_t i = 0; i < kt.nodes.size(); ++i) {
        const KlmComponent& c = kt.nodes[i].comp;
        const KlmNode& node = kt.nodes[i];
        int ni = static_cast<int>(i);

        // Side terminal-sum equations: l_src + sum_L = l_tgt, r_tgt + sum_R = r_src.
        for (int k = 0; k < d; ++k) {
            std::vector<std::pair<int, long long>> lt{{cs.cfg(ni, kLsrc, k), 1},
                                                      {cs.cfg(ni, kLtgt, k), -1}};
            for (size_t j = 0; j < c.left_rules.size(); ++j) {
                const Rule& r = g.rules[c.left_rules[j]];
                if (r.is_leaf && r.vec[k] != 0)
                    lt.push_back({cs.pk(ni, RuleSpace::Left, static_cast<int>(j)), r.vec[k]});
            }
            for (size_t j = 0; j < c.left_certs.size(); ++j)
                if (c.left_certs[j].disp[k] != 0)
                    lt.push_back({cs.pk(ni, RuleSpace::CertLeft, static_cast<int>(j)),
                                  c.left_certs[j].disp[k]});
            sys.add_eq(std::move(lt), 0);

            std::vector<std::pair<int, long long>> rt{{cs.cfg(ni, kRtgt, k), 1},
                                                      {cs.cfg(ni, kRsrc, k), -1}};
            for (size_t j = 0; j < c.right_rules.size(); ++j) {
                const Rule& r = g.rules[c.right_rules[j]];
                if (r.is_leaf && r.vec[k] != 0)
                    rt.push_back({cs.pk(ni, RuleSpace::Right, static_cast<int>(j)), r.vec[k]});
            }
            for (size_t j = 0; j < c.right_certs.size(); ++j)
                if (c.right_certs[j].disp[k] != 0)
                    rt.push_back({cs.pk(ni, RuleSpace::CertRight, static_cast<int>(j)),
                                  c.right_certs[j].disp[k]});
            sys.add_eq(std::move(rt), 0);
        }

        // Euler equations over the SCC symbols (with source/target indicators).
        std::set<CompSym> scc_syms{c.src, c.tgt};
        for (const SccRule& sr : c.scc_rules) {
            scc_syms.insert(sr.head);
            scc_syms.insert(sr.path_child);
        }
        for (const CompSym& v : scc_syms) {
            std::vector<std::pair<int, long long>> t;
            for (size_t j = 0; j < c.scc_rules.size(); ++j) {
                long long coef = 0;
                if (c.scc_rules[j].path_child == v) coef += 1;
                if (c.scc_rules[j].head == v) coef -= 1;
                if (coef) t.push_back({cs.pk(ni, RuleSpace::Scc, static_cast<int>(j)), coef});
            }
            long long rhs = (v == c.tgt ? 1 : 0) - (v == c.src ? 1 : 0);
            sys.add_eq(std::move(t), rhs);
        }

        // Euler equations for the side nonterminals. On an annotated side the
        // certificate multiplicities are pinned per encoded SCC rule, which
        // subsumes the aggregate balance.
        auto side_euler = [&](bool left) {
            bool cert_side = c.annotated && c.annot_left == left;
            const std::vector<int>& rules = left ? c.left_rules : c.right_rules;
            RuleSpace sp = left ? RuleSpace::Left : RuleSpace::Right;
            if (cert_side) {
                const auto& certs = c.certs(left);
                for (size_t j = 0; j < certs.size(); ++j) {
                    std::vector<std::pair<int, long long>> t{
                        {cs.pk(ni, left ? RuleSpace::CertLeft : RuleSpace::CertRight,
                               static_cast<int>(j)),
                         -1}};
                    for (size_t m = 0; m < c.scc_rules.size(); ++m) {
                        const SccRule& sr = c.scc_rules[m];
                        if (sr.left_deg != left || sr.side_nt != certs[j].nt) continue;
                        if (vec_sub(*sr.path_child.enc, *sr.head.enc) != certs[j].disp) continue;
                        t.push_back({cs.pk(ni, RuleSpace::Scc, static_cast<int>(m)), 1});
                    }
                    sys.add_eq(std::move(t), 0);
                }
                return;
            }
            std::set<int> nts;
            for (int ri : rules) {
                const Rule& r = g.rules[ri];
                nts.insert(r.head);
                if (!r.is_leaf) {
                    nts.insert(r.left);
                    nts.insert(r.right);
                }
            }
            for (const SccRule& sr : c.scc_rules)
                if (sr.left_deg == left) nts.insert(sr.side_nt);
            for (int a : nts) {
                std::vector<std::pair<int, long long>> t;
                for (size_t m = 0; m < c.scc_rules.size(); ++m)
                    if (c.scc_rules[m].left_deg == left && c.scc_rules[m].side_nt == a)
                        t.push_back({cs.pk(ni, RuleSpace::Scc, static_cast<int>(m)), 1});
                for (size_t j = 0; j < rules.size(); ++j) {
                    const Rule& r = g.rules[rules[j]];
                    long long coef = 0;
                    if (!r.is_leaf) {
                        if (r.left == a) ++coef;   // B -> A A counts twice
                        if (r.right == a) ++coef;
                    }
                    if (r.head == a) --coef;
                    if (coef) t.push_back({cs.pk(ni, sp, static_cast<int>(j)), coef});
                }
                sys.add_eq(std::move(t), 0);
            }
        };
        side_euler(true);
        side_euler(false);

        // Terminal / certificate child system and the gluing equations.
        if (node.term || c.exit.is_cert) {
            const Vec& u = node.term ? *node.term : c.exit.cert.disp;
            for (int k = 0; k < d; ++k) {
                sys.add_eq({{cs.leaf_var[i][0] + k, 1}, {cs.leaf_var[i][1] + k, -1}}, -u[k]);
                sys.add_eq({{cs.cfg(ni, kLtgt, k), 1}, {cs.leaf_var[i][0] + k, -1}}, 0);
                sys.add_eq({{cs.cfg(ni, kRtgt, k), 1}, {cs.leaf_var[i][1] + k, -1}}, 0);
            }
        } else {
            int c1 = node.child1, c2 = node.child2;
            for (int k = 0; k < d; ++k) {
                sys.add_eq({{cs.cfg(ni, kLtgt, k), 1}, {cs.cfg(c1, kLsrc, k), -1}}, 0);
                sys.add_eq({{cs.cfg(ni, kRtgt, k), 1}, {cs.cfg(c2, kRsrc, k), -1}}, 0);
                sys.add_eq({{cs.cfg(c1, kRsrc, k), 1}, {cs.cfg(c2, kLsrc, k), -1}}, 0);
            }
        }

        // E_Config: fixed configuration values.
        for (ConfigSlot s : {kLsrc, kRsrc, kLtgt, kRtgt})
            if (c.fixed[s])
                for (int k = 0; k < d; ++k) sys.fix_var(cs.cfg(ni, s, k), (*c.fixed[s])[k]);
    }
    return cs;
}

// ---- side-grammar analysis ----

Grammar sub_grammar(const Grammar& g, const std::vector<int>& rules, int start_nt) {
    Grammar out;
    out.dim = g.dim;
    std::map<int, int> remap;
    auto intern = [&](int nt) {
        auto it = remap.find(nt);
        if (it != remap.end()) return it->second;
        int id = static_cast<int>(out.nonterminals.size());
        remap[nt] = id;
        out.nonterminals.push_back(g.nonterminals[nt]);
        return id;
    };
    intern(start_nt);
    for (int ri : rules) {
        Rule r = g.rules[ri];
        r.head = intern(r.head);
        if (!r.is_leaf) {
            r.left = intern(r.left);
            r.right = intern(r.right);
        }
        out.rules.push_back(r);
    }
    out.start = remap.at(start_nt);
    return out;
}

namespace {

struct AcyclicDP {
    const Grammar& g;
    const std::vector<int>& rules;
    size_t cap;
    std::map<std::pair<int, uint64_t>, std::vector<Vec>> memo;

    std::vector<Vec> sets(int x, uint64_t forbidden) {
        if (x >= 64) throw KlmError("side analysis limited to 64 nonterminals");
        if (forbidden & (1ULL << x)) return {};
        auto key = std::make_pair(x, forbidden | (1ULL << x));
        auto it = memo.find(key);
        if (it != memo.end()) return it->second;
        std::set<Vec> out;
        for (int ri : rules) {
            const Rule& r = g.rules[ri];
            if (r.head != x) continue;
            if (r.is_leaf) {
                out.insert(r.vec);
                continue;
            }
            for (const Vec& a : sets(r.left, key.second))
                for (const Vec& b : sets(r.right, key.second)) {
                    Vec s(a.size());
                    for (size_t k = 0; k < a.size(); ++k) s[k] = a[k] + b[k];
                    out.insert(std::move(s));
                    if (out.size() > cap) throw KlmError("acyclic displacement set too large");
                }
        }
        std::vector<Vec> v(out.begin(), out.end());
        memo[key] = v;
        return v;
    }
};

}  // namespace

std::vector<Vec> acyclic_displacements(const Grammar& g, const std::vector<int>& rules,
                                       int start_nt, size_t cap) {
    AcyclicDP dp{g, rules, cap, {}};
    return dp.sets(start_nt, 0);
}

Vec min_acyclic_displacement(const Grammar& g, const std::vector<int>& rules, int start_nt) {
    std::vector<Vec> all = acyclic_displacements(g, rules, start_nt);
    if (all.empty()) throw KlmError("side nonterminal has no acyclic complete tree");
    return all.front();  // set is sorted, lexicographically least
}

DerivationTree min_acyclic_tree(const Grammar& g, const std::vector<int>& rules, int start_nt) {
    std::function<std::pair<Vec, std::vector<int>>(int, uint64_t)> rec =
        [&](int x, uint64_t forb) -> std::pair<Vec, std::vector<int>> {
        if (x >= 64) throw KlmError("side analysis limited to 64 nonterminals");
        forb |= 1ULL << x;
        std::optional<std::pair<Vec, std::vector<int>>> best;
        for (int ri : rules) {
            const Rule& r = g.rules[ri];
            if (r.head != x) continue;
            if (r.is_leaf) {
                if (!best || r.vec < best->first) best = {{r.vec}, {ri}};
                continue;
            }
            if ((forb >> r.left & 1) || (forb >> r.right & 1)) continue;
            try {
                auto [va, ra] = rec(r.left, forb);
                auto [vb, rb] = rec(r.right, forb);
                Vec sum(va.size());
                for (size_t k = 0; k < sum.size(); ++k) sum[k] = va[k] + vb[k];
                if (!best || sum < best->first) {
                    std::vector<int> seq{ri};
                    seq.insert(seq.end(), ra.begin(), ra.end());
                    seq.insert(seq.end(), rb.begin(), rb.end());
                    best = {sum, seq};
                }
            } catch (const KlmError&) {
                continue;  // children cannot complete under this forbidden set
            }
        }
        if (!best) throw KlmError("no acyclic completion");
        return *best;
    };
    auto [disp, seq] = rec(start_nt, 0);
    (void)disp;
    return tree_from_leftmost_rules(g, seq);
}

std::vector<Vec> simple_cycle_displacements(const Grammar& g, const std::vector<int>& rules) {
    std::set<int> nts;
    for (int ri : rules) nts.insert(g.rules[ri].head);
    std::map<int, Vec> ref;
    for (int x : nts) {
        auto all = acyclic_displacements(g, rules, x);
        if (all.empty()) throw KlmError("side nonterminal has no acyclic complete tree");
        ref[x] = all.front();
    }
    std::set<Vec> out;
    // Simple derivation cycles: descend from x back to a leaf occurrence of x
    // with no repeated symbol strictly inside; off-path children take the
    // reference completion.
    for (int x : nts) {
        std::function<void(int, uint64_t, const Vec&)> dfs = [&](int y, uint64_t forb, const Vec& acc) {
            for (int ri : rules) {
                const Rule& r = g.rules[ri];
                if (r.head != y || r.is_leaf) continue;
                for (int pick = 0; pick < 2; ++pick) {
                    int into = pick == 0 ? r.left : r.right;
                    int other = pick == 0 ? r.right : r.left;
                    if (!ref.count(other)) continue;  // other child cannot complete
                    Vec acc2 = acc;
                    for (size_t k = 0; k < acc2.size(); ++k) acc2[k] += ref[other][k];
                    if (into == x) {
                        out.insert(acc2);
                        continue;
                    }
                    if (!nts.count(into)) continue;
                    if (forb & (1ULL << into)) continue;
                    dfs(into, forb | (1ULL << into), acc2);
                }
            }
        };
        dfs(x, 1ULL << x, Vec(g.dim, 0));
    }
    return {out.begin(), out.end()};
}

// ---- ranks ----

namespace {

// Exact rational rank via BigInt fraction-free elimination.
struct RankAccum {
    int width;
    std::vector<std::vector<BigInt>> rows;

    bool add(const Vec& v) {
        std::vector<BigInt> r;
        for (long long x : v) r.push_back(BigInt(x));
        for (const auto& b : rows) {
            int p = -1;
            for (int k = 0; k < width; ++k)
                if (!b[k].is_zero()) {
                    p = k;
                    break;
                }
            if (p < 0 || r[p].is_zero()) continue;
            // r := b[p]*r - r[p]*b
            BigInt f1 = b[p], f2 = r[p];
            for (int k = 0; k < width; ++k) r[k] = f1 * r[k] - f2 * b[k];
        }
        if (std::all_of(r.begin(), r.end(), [](const BigInt& x) { return x.is_zero(); })) return false;
        rows.push_back(std::move(r));
        // Keep rows ordered by pivot for the reduction above to stay triangular.
        std::sort(rows.begin(), rows.end(), [&](const auto& a, const auto& b2) {
            auto pivot = [&](const std::vector<BigInt>& w) {
                for (int k = 0; k < width; ++k)
                    if (!w[k].is_zero()) return k;
                return width;
            };
            return pivot(a) < pivot(b2);
        });
        return true;
    }
    int rank() const { return static_cast<int>(rows.size()); }
};

Vec side_ref_disp(const Grammar& g, const KlmComponent& c, const SccRule& sr) {
    if (c.annotated && c.annot_left == sr.left_deg)
        return vec_sub(*sr.path_child.enc, *sr.head.enc);
    const std::vector<int>& rules = sr.left_deg ? c.left_rules : c.right_rules;
    return min_acyclic_displacement(g, rules, sr.side_nt);
}

}  // namespace

int geometric_dimension(const Grammar& g, const KlmComponent& c) {
    if (c.trivial()) return 0;
    int d = g.dim;
    RankAccum acc{2 * d, {}};

    // Reference displacement per SCC rule's side child.
    std::vector<Vec> refd;
    for (const SccRule& sr : c.scc_rules) refd.push_back(side_ref_disp(g, c, sr));

    // Side variation vectors: acyclic alternatives and side cycles.
    auto side_variations = [&](bool left) {
        if (acc.rank() == 2 * d) return;
        if (c.annotated && c.annot_left == left) return;  // certificates are rigid
        const std::vector<int>& rules = left ? c.left_rules : c.right_rules;
        if (rules.empty()) return;
        std::set<int> roots;
        for (const SccRule& sr : c.scc_rules)
            if (sr.left_deg == left) roots.insert(sr.side_nt);
        auto embed = [&](const Vec& v) {
            Vec w(2 * d, 0);
            for (int k = 0; k < d; ++k) w[left ? k : d + k] = v[k];
            acc.add(w);
        };
        for (int a : roots) {
            Vec ref = min_acyclic_displacement(g, rules, a);
            for (const Vec& alt : acyclic_displacements(g, rules, a)) {
                if (acc.rank() == 2 * d) return;
                embed(vec_sub(alt, ref));
            }
        }
        for (const Vec& cyc : simple_cycle_displacements(g, rules)) {
            if (acc.rank() == 2 * d) return;
            embed(cyc);
        }
    };
    side_variations(true);
    side_variations(false);

    // Spine cycles with per-rule usage at most one.
    std::vector<CompSym> verts;
    {
        std::set<CompSym> vs;
        for (const SccRule& sr : c.scc_rules) {
            vs.insert(sr.head);
            vs.insert(sr.path_child);
        }
        verts.assign(vs.begin(), vs.end());
    }
    auto vid = [&](const CompSym& s) {
        return static_cast<int>(std::lower_bound(verts.begin(), verts.end(), s) - verts.begin());
    };
    int m = static_cast<int>(c.scc_rules.size());
    std::vector<bool> used(m, false);
    long long guard = 0;
    std::function<void(int, int, Vec&)> dfs = [&](int start, int at, Vec& eff) {
        if (acc.rank() == 2 * d || ++guard > 2000000) return;
        for (int e = 0; e < m; ++e) {
            if (used[e] || vid(c.scc_rules[e].head) != at) continue;
            int to = vid(c.scc_rules[e].path_child);
            Vec eff2 = eff;
            for (int k = 0; k < d; ++k)
                eff2[c.scc_rules[e].left_deg ? k : d + k] += refd[e][k];
            if (to == start) {
                acc.add(eff2);
                if (acc.rank() == 2 * d) return;
            }
            used[e] = true;
            dfs(start, to, eff2);
            used[e] = false;
        }
    };
    for (int v = 0; v < static_cast<int>(verts.size()) && acc.rank() < 2 * d; ++v) {
        Vec eff(2 * d, 0);
        dfs(v, v, eff);
    }
    return acc.rank();
}

int component_index(const Grammar& g, const KlmComponent& c) {
    if (c.trivial()) throw KlmError("component_index is undefined for trivial components");
    int best = 0;
    auto side = [&](bool left) {
        const std::vector<int>& rules = left ? c.left_rules : c.right_rules;
        if (!rules.empty()) {
            std::set<int> nts;
            for (int ri : rules) nts.insert(g.rules[ri].head);
            Grammar gs = sub_grammar(g, rules, *nts.begin());
            IndexTable tab = index_table(gs);
            for (auto& [x, iota] : tab.iota) best = std::max(best, iota);
        }
        if (!c.certs(left).empty()) best = std::max(best, 1);
    };
    side(true);
    side(false);
    return std::max(best, 1);
}

TreeRank tree_rank(const Grammar& g, const KlmTree& kt, int k, int d) {
    TreeRank tr;
    if (k < 1) throw KlmError("tree_rank: index must be positive");
    tr.counts.assign(static_cast<size_t>(std::max(0, (k - 1) * 2 * d)), 0);
    for (const KlmNode& n : kt.nodes) {
        if (n.comp.trivial()) continue;
        int iota = component_index(g, n.comp);
        int gd = geometric_dimension(g, n.comp);
        if (iota < 1 || iota > k - 1 || gd < 1 || gd > 2 * d)
            throw KlmError("component rank (" + std::to_string(iota) + "," + std::to_string(gd) +
                           ") outside [1," + std::to_string(k - 1) + "]x[1," + std::to_string(2 * d) +
                           "]");
        size_t pos = static_cast<size_t>((k - 1 - iota) * 2 * d + (2 * d - gd));
        ++tr.counts[pos];
    }
    return tr;
}

// ---- realization ----

BigInt realized_node_count(const Grammar& g, const KlmComponent& c, const CompParikh& p) {
    BigInt total(1);  // the nonterminal leaf
    for (auto& [key, cnt] : p.count) {
        auto [space, idx] = key;
        BigInt n(cnt);
        switch (static_cast<RuleSpace>(space)) {
            case RuleSpace::Scc:
                total += n;  // head node; side node counted by its own realization
                break;
            case RuleSpace::Left:
            case RuleSpace::Right: {
                const Rule& r = g.rules[(space == static_cast<int>(RuleSpace::Left)
                                             ? c.left_rules
                                             : c.right_rules)[idx]];
                total += n * BigInt(r.is_leaf ? 2 : 1);
                break;
            }
            case RuleSpace::CertLeft:
            case RuleSpace::CertRight:
                total += n;  // one stub node each
                break;
        }
    }
    return total;
}

namespace {

struct ForestRealizer {
    const Grammar& g;
    const std::vector<int>& rules;      // side rule indices
    std::vector<long long> budget;      // per side rule
    long long steps = 0;

    bool feasible(const std::multiset<int>& pending) const {
        // Every rule with remaining budget must stay reachable from a pending symbol.
        std::set<int> reach(pending.begin(), pending.end());
        bool changed = true;
        while (changed) {
            changed = false;
            for (size_t j = 0; j < rules.size(); ++j) {
                if (budget[j] == 0) continue;
                const Rule& r = g.rules[rules[j]];
                if (!reach.count(r.head)) continue;
                if (!r.is_leaf) {
                    if (reach.insert(r.left).second) changed = true;
                    if (reach.insert(r.right).second) changed = true;
                }
            }
        }
        for (size_t j = 0; j < rules.size(); ++j)
            if (budget[j] > 0 && !reach.count(g.rules[rules[j]].head)) return false;
        return true;
    }

    // Expands the task list depth-first; appends chosen side-rule positions.
    bool search(std::vector<int>& tasks, std::multiset<int>& pending, std::vector<int>& out) {
        if (++steps > 20000000) throw KlmError("side forest realization exceeded its search budget");
        if (tasks.empty()) {
            for (long long b : budget)
                if (b != 0) return false;
            return true;
        }
        int a = tasks.back();
        tasks.pop_back();
        pending.erase(pending.find(a));
        for (size_t j = 0; j < rules.size(); ++j) {
            const Rule& r = g.rules[rules[j]];
            if (r.head != a || budget[j] == 0) continue;
            --budget[j];
            size_t mark_t = tasks.size();
            if (!r.is_leaf) {
                // Right pushed first: leftmost expansion order.
                tasks.push_back(r.right);
                tasks.push_back(r.left);
                pending.insert(r.left);
                pending.insert(r.right);
            }
            out.push_back(static_cast<int>(j));
            if (feasible(pending) && search(tasks, pending, out)) return true;
            out.pop_back();
            if (!r.is_leaf) {
                tasks.resize(mark_t);
                pending.erase(pending.find(r.left));
                pending.erase(pending.find(r.right));
            }
            ++budget[j];
        }
        tasks.push_back(a);
        pending.insert(a);
        return false;
    }
};

// Builds one side tree from the chosen leftmost rule sequence.
DerivationTree side_tree_from_rules(const Grammar& g, const std::vector<int>& side_rules,
                                    const std::vector<int>& picks, size_t& cursor, int symbol) {
    std::vector<int> grammar_rules;
    std::function<void(int)> take = [&](int sym) {
        if (cursor >= picks.size()) throw KlmError("realization: rule sequence underflow");
        const Rule& r = g.rules[side_rules[picks[cursor]]];
        if (r.head != sym) throw KlmError("realization: rule sequence mismatch");
        grammar_rules.push_back(side_rules[picks[cursor]]);
        ++cursor;
        if (!r.is_leaf) {
            take(r.left);
            take(r.right);
        }
    };
    take(symbol);
    return tree_from_leftmost_rules(g, grammar_rules);
}

}  // namespace

Segment realize_from_parikh(const Grammar& g, const KlmComponent& c, const CompParikh& parikh,
                            const CompSym& src, const CompSym& tgt, long long node_budget) {
    BigInt predicted = realized_node_count(g, c, parikh);
    if (predicted > BigInt(node_budget))
        throw NodeBudgetExceeded("realization would need " + predicted.to_string() + " nodes");

    // Spine: Euler path in the SCC multigraph from src to tgt.
    std::vector<CompSym> verts;
    {
        std::set<CompSym> vs{src, tgt};
        for (const SccRule& sr : c.scc_rules) {
            vs.insert(sr.head);
            vs.insert(sr.path_child);
        }
        verts.assign(vs.begin(), vs.end());
    }
    auto vid = [&](const CompSym& s) {
        auto it = std::lower_bound(verts.begin(), verts.end(), s);
        if (it == verts.end() || !(*it == s)) throw KlmError("realization: unknown endpoint symbol");
        return static_cast<int>(it - verts.begin());
    };
    int nv = static_cast<int>(verts.size());
    int vs_id = vid(src), vt_id = vid(tgt);

    std::vector<long long> ecount(c.scc_rules.size());
    std::vector<long long> out_deg(nv, 0), in_deg(nv, 0);
    for (size_t j = 0; j < c.scc_rules.size(); ++j) {
        ecount[j] = parikh.at(RuleSpace::Scc, static_cast<int>(j));
        if (ecount[j] < 0) throw UnrealizableParikh("negative rule multiplicity");
        out_deg[vid(c.scc_rules[j].head)] += ecount[j];
        in_deg[vid(c.scc_rules[j].path_child)] += ecount[j];
    }
    for (int v = 0; v < nv; ++v) {
        long long want = (v == vs_id ? 1 : 0) - (v == vt_id ? 1 : 0);
        if (out_deg[v] - in_deg[v] != want)
            throw UnrealizableParikh("degree balance violated at " + sym_text(g, verts[v]));
    }
    // Connectivity: every used edge reachable from src in the underlying graph.
    {
        std::vector<std::set<int>> und(nv);
        for (size_t j = 0; j < c.scc_rules.size(); ++j) {
            if (!ecount[j]) continue;
            int a = vid(c.scc_rules[j].head), b = vid(c.scc_rules[j].path_child);
            und[a].insert(b);
            und[b].insert(a);
        }
        std::vector<bool> seen(nv, false);
        std::vector<int> work{vs_id};
        seen[vs_id] = true;
        while (!work.empty()) {
            int v = work.back();
            work.pop_back();
            for (int w : und[v])
                if (!seen[w]) {
                    seen[w] = true;
                    work.push_back(w);
                }
        }
        for (size_t j = 0; j < c.scc_rules.size(); ++j)
            if (ecount[j] && !seen[vid(c.scc_rules[j].head)])
                throw UnrealizableParikh("Parikh image is disconnected from the endpoints");
    }

    // Hierholzer with deterministic edge order.
    std::vector<std::vector<int>> by_vertex(nv);
    for (size_t j = 0; j < c.scc_rules.size(); ++j)
        if (ecount[j]) by_vertex[vid(c.scc_rules[j].head)].push_back(static_cast<int>(j));
    std::vector<long long> left_count = ecount;
    std::vector<int> spine_edges;  // rule indices in path order
    {
        std::vector<std::pair<int, int>> stack{{vs_id, -1}};  // (vertex, incoming edge)
        std::vector<int> cursor(nv, 0);
        std::vector<int> done;
        while (!stack.empty()) {
            auto [v, in_e] = stack.back();
            bool advanced = false;
            auto& lst = by_vertex[v];
            int& cur = cursor[v];
            while (cur < static_cast<int>(lst.size())) {
                int e = lst[cur];
                if (left_count[e] > 0) {
                    --left_count[e];
                    stack.push_back({vid(c.scc_rules[e].path_child), e});
                    advanced = true;
                    break;
                }
                ++cur;
            }
            if (!advanced) {
                if (in_e >= 0) done.push_back(in_e);
                stack.pop_back();
            }
        }
        spine_edges.assign(done.rbegin(), done.rend());
        long long want = 0;
        for (long long x : ecount) want += x;
        if (static_cast<long long>(spine_edges.size()) != want)
            throw UnrealizableParikh("Euler traversal left unused edges");
    }

    // Side trees: certificates become stubs, plain sides are realized from the
    // side budgets by backtracking over the edge-ordered roots.
    auto cert_lookup = [&](bool left, const CertRule& want) {
        const auto& certs = c.certs(left);
        auto it = std::find(certs.begin(), certs.end(), want);
        if (it == certs.end()) throw UnrealizableParikh("missing certificate for an encoded rule");
        return static_cast<int>(it - certs.begin());
    };
    std::vector<long long> cert_budget_l(c.left_certs.size()), cert_budget_r(c.right_certs.size());
    for (size_t j = 0; j < c.left_certs.size(); ++j)
        cert_budget_l[j] = parikh.at(RuleSpace::CertLeft, static_cast<int>(j));
    for (size_t j = 0; j < c.right_certs.size(); ++j)
        cert_budget_r[j] = parikh.at(RuleSpace::CertRight, static_cast<int>(j));

    std::vector<int> left_roots, right_roots;  // per spine edge occurrence, -1 if cert side
    for (int e : spine_edges) {
        const SccRule& sr = c.scc_rules[e];
        bool cert_side = c.annotated && c.annot_left == sr.left_deg;
        if (cert_side) {
            CertRule want{sr.side_nt, vec_sub(*sr.path_child.enc, *sr.head.enc)};
            int ci = cert_lookup(sr.left_deg, want);
            auto& budget = sr.left_deg ? cert_budget_l : cert_budget_r;
            if (--budget[ci] < 0)
                throw UnrealizableParikh("certificate multiplicity does not match the spine");
        } else {
            (sr.left_deg ? left_roots : right_roots).push_back(sr.side_nt);
        }
    }
    for (long long b : cert_budget_l)
        if (b != 0) throw UnrealizableParikh("unused left certificate multiplicity");
    for (long long b : cert_budget_r)
        if (b != 0) throw UnrealizableParikh("unused right certificate multiplicity");

    auto realize_side = [&](bool left, const std::vector<int>& roots) {
        const std::vector<int>& rules = left ? c.left_rules : c.right_rules;
        ForestRealizer fr{g, rules, {}, 0};
        fr.budget.resize(rules.size());
        for (size_t j = 0; j < rules.size(); ++j)
            fr.budget[j] = parikh.at(left ? RuleSpace::Left : RuleSpace::Right, static_cast<int>(j));
        std::vector<int> tasks(roots.rbegin(), roots.rend());
        std::multiset<int> pending(roots.begin(), roots.end());
        std::vector<int> picks;
        if (!fr.feasible(pending) || !fr.search(tasks, pending, picks))
            throw UnrealizableParikh("side forest is not realizable from the Parikh image");
        std::vector<DerivationTree> trees;
        size_t cursor = 0;
        for (int root : roots) trees.push_back(side_tree_from_rules(g, rules, picks, cursor, root));
        return trees;
    };
    std::vector<DerivationTree> ltrees = realize_side(true, left_roots);
    std::vector<DerivationTree> rtrees = realize_side(false, right_roots);

    // Assemble the preorder segment.
    Segment seg;
    seg.tree.dim = g.dim;
    size_t li = 0, ri = 0;
    std::vector<int> spine_pos;
    auto emit_tree = [&](const DerivationTree& t) {
        for (const TreeNode& n : t.nodes) seg.tree.nodes.push_back(n);
    };
    auto emit_stub = [&](int nt, const Vec& disp) {
        TreeNode stub;
        stub.symbol = nt;
        stub.cert = true;
        stub.cert_disp = disp;
        seg.tree.nodes.push_back(stub);
    };
    struct PendingSide {
        bool is_cert;
        int nt;
        Vec disp;
        const DerivationTree* tree;
    };
    std::vector<PendingSide> suffix;
    for (int e : spine_edges) {
        const SccRule& sr = c.scc_rules[e];
        spine_pos.push_back(static_cast<int>(seg.tree.nodes.size()));
        TreeNode n;
        n.symbol = sr.head.nt;
        n.rule = sr.grammar_rule;
        n.children = 2;
        seg.tree.nodes.push_back(n);
        bool cert_side = c.annotated && c.annot_left == sr.left_deg;
        if (sr.left_deg) {
            if (cert_side) emit_stub(sr.side_nt, vec_sub(*sr.path_child.enc, *sr.head.enc));
            else emit_tree(ltrees[li++]);
        } else {
            if (cert_side)
                suffix.push_back({true, sr.side_nt, vec_sub(*sr.path_child.enc, *sr.head.enc), nullptr});
            else
                suffix.push_back({false, 0, {}, &rtrees[ri++]});
        }
    }
    spine_pos.push_back(static_cast<int>(seg.tree.nodes.size()));
    seg.leaf = static_cast<int>(seg.tree.nodes.size());
    TreeNode leaf;
    leaf.symbol = tgt.nt;
    seg.tree.nodes.push_back(leaf);
    for (auto it = suffix.rbegin(); it != suffix.rend(); ++it) {
        if (it->is_cert) emit_stub(it->nt, it->disp);
        else emit_tree(*it->tree);
    }
    // Subtree sizes along the spine, computed backward over the nesting.
    {
        size_t h = spine_edges.size();
        std::vector<long long> sz(h + 1);
        sz[h] = 1;
        size_t lj = ltrees.size(), rj = rtrees.size();
        for (size_t i = h; i-- > 0;) {
            const SccRule& sr = c.scc_rules[spine_edges[i]];
            bool cert_side = c.annotated && c.annot_left == sr.left_deg;
            long long side_sz;
            if (cert_side) side_sz = 1;
            else if (sr.left_deg) side_sz = ltrees[--lj].size();
            else side_sz = rtrees[--rj].size();
            sz[i] = 1 + side_sz + sz[i + 1];
        }
        for (size_t i = 0; i <= h; ++i)
            seg.tree.nodes[spine_pos[i]].subtree = static_cast<int>(sz[i]);
    }
    return seg;
}

Segment euler_cycle_from_parikh(const Grammar& g, const KlmComponent& c, const CompParikh& parikh,
                                const CompSym& endpoints, long long node_budget) {
    return realize_from_parikh(g, c, parikh, endpoints, endpoints, node_budget);
}

}  // namespace tgvas

