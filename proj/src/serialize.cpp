#include "tgvas/serialize.hpp"

#include <algorithm>

namespace tgvas {

using nlohmann::ordered_json;

namespace {

ordered_json vec_json(const Vec& v) { return ordered_json(v); }

Vec vec_from(const ordered_json& j, int dim) {
    if (!j.is_array() || static_cast<int>(j.size()) != dim)
        throw ParseError("certificate: vector of wrong dimension");
    Vec v;
    for (const auto& x : j) v.push_back(x.get<long long>());
    return v;
}

ordered_json sym_json(const Grammar& g, const CompSym& s) {
    ordered_json j;
    j["nt"] = g.nonterminals[s.nt];
    if (s.enc) j["enc"] = vec_json(*s.enc);
    return j;
}

CompSym sym_from(const Grammar& g, const ordered_json& j) {
    CompSym s;
    s.nt = g.nt_id(j.at("nt").get<std::string>());
    if (s.nt < 0) throw ParseError("certificate: unknown nonterminal " + j.at("nt").dump());
    if (j.contains("enc")) s.enc = vec_from(j.at("enc"), g.dim);
    return s;
}

int rule_index(const Grammar& g, const std::string& text) {
    for (size_t i = 0; i < g.rules.size(); ++i)
        if (g.rule_text(static_cast<int>(i)) == text) return static_cast<int>(i);
    throw ParseError("certificate: rule '" + text + "' is not in the grammar");
}

ordered_json cert_json(const Grammar& g, const CertRule& c) {
    ordered_json j;
    j["nt"] = g.nonterminals[c.nt];
    j["disp"] = vec_json(c.disp);
    return j;
}

CertRule cert_from(const Grammar& g, const ordered_json& j) {
    CertRule c;
    c.nt = g.nt_id(j.at("nt").get<std::string>());
    if (c.nt < 0) throw ParseError("certificate: unknown certificate nonterminal");
    c.disp = vec_from(j.at("disp"), g.dim);
    return c;
}

const char* slot_names[4] = {"l_src", "r_src", "l_tgt", "r_tgt"};

ordered_json node_json(const Grammar& g, const KlmTree& kt, int i) {
    const KlmNode& n = kt.nodes[i];
    const KlmComponent& c = n.comp;
    ordered_json j;
    j["kind"] = "component";
    j["source"] = sym_json(g, c.src);
    j["target"] = sym_json(g, c.tgt);
    j["scc_rules"] = ordered_json::array();
    for (const SccRule& sr : c.scc_rules) {
        ordered_json r;
        r["rule"] = g.rule_text(sr.grammar_rule);
        r["side"] = sr.left_deg ? "left" : "right";
        if (sr.head.enc) r["head_enc"] = vec_json(*sr.head.enc);
        if (sr.path_child.enc) r["path_enc"] = vec_json(*sr.path_child.enc);
        j["scc_rules"].push_back(std::move(r));
    }
    j["left_rules"] = ordered_json::array();
    for (int ri : c.left_rules) j["left_rules"].push_back(g.rule_text(ri));
    j["right_rules"] = ordered_json::array();
    for (int ri : c.right_rules) j["right_rules"].push_back(g.rule_text(ri));
    if (c.exit.is_cert) {
        j["exit_rule"] = ordered_json{{"certificate", cert_json(g, c.exit.cert)}};
    } else {
        j["exit_rule"] = ordered_json{{"rule", g.rule_text(c.exit.grammar_rule)}};
    }
    if (c.annotated) {
        ordered_json a;
        a["side"] = c.annot_left ? "left" : "right";
        a["certificates"] = ordered_json::array();
        for (const CertRule& cr : c.certs(c.annot_left)) a["certificates"].push_back(cert_json(g, cr));
        j["annotation"] = std::move(a);
    } else {
        j["annotation"] = nullptr;
    }
    ordered_json cons;
    for (int s = 0; s < 4; ++s) {
        if (c.fixed[s]) cons[slot_names[s]] = vec_json(*c.fixed[s]);
    }
    j["constraints"] = std::move(cons);
    j["children"] = ordered_json::array();
    if (n.cert_child) {
        j["children"].push_back(ordered_json{{"kind", "certificate"}});
    } else if (n.term) {
        j["children"].push_back(ordered_json{{"kind", "terminal"}, {"value", vec_json(*n.term)}});
    } else if (n.child1 >= 0) {
        j["children"].push_back(node_json(g, kt, n.child1));
        j["children"].push_back(node_json(g, kt, n.child2));
    }
    return j;
}

int node_from(const Grammar& g, const ordered_json& j, KlmTree& kt) {
    if (j.at("kind").get<std::string>() != "component")
        throw ParseError("certificate: expected a component node");
    KlmNode n;
    KlmComponent& c = n.comp;
    c.src = sym_from(g, j.at("source"));
    c.tgt = sym_from(g, j.at("target"));
    for (const auto& r : j.at("scc_rules")) {
        SccRule sr;
        sr.grammar_rule = rule_index(g, r.at("rule").get<std::string>());
        const Rule& gr = g.rules[sr.grammar_rule];
        if (gr.is_leaf) throw ParseError("certificate: leaf rule in the SCC set");
        sr.left_deg = r.at("side").get<std::string>() == "left";
        sr.head.nt = gr.head;
        sr.path_child.nt = sr.left_deg ? gr.right : gr.left;
        sr.side_nt = sr.left_deg ? gr.left : gr.right;
        if (r.contains("head_enc")) sr.head.enc = vec_from(r.at("head_enc"), g.dim);
        if (r.contains("path_enc")) sr.path_child.enc = vec_from(r.at("path_enc"), g.dim);
        c.scc_rules.push_back(std::move(sr));
    }
    std::sort(c.scc_rules.begin(), c.scc_rules.end());
    for (const auto& r : j.at("left_rules")) c.left_rules.push_back(rule_index(g, r.get<std::string>()));
    for (const auto& r : j.at("right_rules")) c.right_rules.push_back(rule_index(g, r.get<std::string>()));
    std::sort(c.left_rules.begin(), c.left_rules.end());
    std::sort(c.right_rules.begin(), c.right_rules.end());
    if (j.at("exit_rule").contains("certificate")) {
        c.exit.is_cert = true;
        c.exit.cert = cert_from(g, j.at("exit_rule").at("certificate"));
    } else {
        c.exit.grammar_rule = rule_index(g, j.at("exit_rule").at("rule").get<std::string>());
    }
    if (!j.at("annotation").is_null()) {
        c.annotated = true;
        c.annot_left = j.at("annotation").at("side").get<std::string>() == "left";
        auto& certs = c.annot_left ? c.left_certs : c.right_certs;
        for (const auto& cr : j.at("annotation").at("certificates")) certs.push_back(cert_from(g, cr));
        std::sort(certs.begin(), certs.end());
    }
    for (int s = 0; s < 4; ++s)
        if (j.at("constraints").contains(slot_names[s]))
            c.fixed[s] = vec_from(j.at("constraints").at(slot_names[s]), g.dim);

    int my_id = static_cast<int>(kt.nodes.size());
    kt.nodes.push_back(std::move(n));
    const auto& children = j.at("children");
    if (children.size() == 1 && children[0].contains("kind") &&
        children[0].at("kind").get<std::string>() == "terminal") {
        kt.nodes[my_id].term = vec_from(children[0].at("value"), g.dim);
    } else if (children.size() == 1 && children[0].contains("kind") &&
               children[0].at("kind").get<std::string>() == "certificate") {
        kt.nodes[my_id].cert_child = true;
    } else if (children.size() == 2) {
        int c1 = node_from(g, children[0], kt);
        int c2 = node_from(g, children[1], kt);
        kt.nodes[my_id].child1 = c1;
        kt.nodes[my_id].child2 = c2;
    } else if (!children.empty()) {
        throw ParseError("certificate: malformed children");
    }
    return my_id;
}

}  // namespace

ordered_json klm_to_json(const Grammar& g, const KlmTree& kt) {
    ordered_json j;
    j["format"] = "tgvas-klm-tree";
    j["dim"] = kt.dim;
    j["root"] = node_json(g, kt, 0);
    return j;
}

KlmTree klm_from_json(const Grammar& g, const ordered_json& j) {
    if (j.at("format").get<std::string>() != "tgvas-klm-tree")
        throw ParseError("certificate: unknown format tag");
    KlmTree kt;
    kt.dim = j.at("dim").get<int>();
    if (kt.dim != g.dim) throw ParseError("certificate: dimension mismatch with the grammar");
    node_from(g, j.at("root"), kt);
    return kt;
}

std::string klm_to_text(const Grammar& g, const KlmTree& kt) { return klm_to_json(g, kt).dump(2) + "\n"; }

KlmTree klm_from_text(const Grammar& g, const std::string& text) {
    return klm_from_json(g, ordered_json::parse(text));
}

namespace {

void named_rec(const DerivationTree& t, const Grammar& g, int p, const Configs* cfg,
               std::string& out) {
    const TreeNode& n = t.nodes[p];
    if (n.symbol == -1) {
        out += vec_text(n.value);
        return;
    }
    out += '(';
    out += g.nonterminals[n.symbol];
    if (cfg) out += "@" + vec_text(cfg->lv(p)) + ":" + vec_text(cfg->rv(p));
    if (n.cert) {
        out += " cert " + vec_text(n.cert_disp);
    } else if (n.children >= 1) {
        out += ' ';
        named_rec(t, g, t.first_child(p), cfg, out);
        if (n.children == 2) {
            out += ' ';
            named_rec(t, g, t.second_child(p), cfg, out);
        }
    }
    out += ')';
}

}  // namespace

std::string tree_text_named(const DerivationTree& t, const Grammar& g, const Configs* cfg) {
    std::string out;
    if (t.size() > 0) named_rec(t, g, 0, cfg, out);
    return out;
}

}  // namespace tgvas
