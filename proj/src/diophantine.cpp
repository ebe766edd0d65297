#include "tgvas/diophantine.hpp"

#include <algorithm>
#include <set>

namespace tgvas {

int DioSystem::add_var(const std::string& name, int low) {
    vars.push_back(name);
    lower.push_back(low);
    return static_cast<int>(vars.size()) - 1;
}

void DioSystem::add_eq(std::vector<std::pair<int, long long>> terms, long long rhs) {
    std::sort(terms.begin(), terms.end());
    // Merge duplicate variables.
    Eq e;
    for (auto& [v, c] : terms) {
        if (!e.terms.empty() && e.terms.back().first == v) e.terms.back().second += c;
        else e.terms.push_back({v, c});
    }
    std::erase_if(e.terms, [](const auto& t) { return t.second == 0; });
    e.rhs = rhs;
    eqs.push_back(std::move(e));
}

bool DioSystem::is_homogeneous() const {
    for (const Eq& e : eqs)
        if (e.rhs != 0) return false;
    for (int l : lower)
        if (l != 0) return false;
    return true;
}

DioSystem DioSystem::homogenize() const {
    DioSystem h = *this;
    for (auto& e : h.eqs) e.rhs = 0;
    std::fill(h.lower.begin(), h.lower.end(), 0);
    return h;
}

long long DioSystem::max_abs_coeff() const {
    long long m = 0;
    for (const Eq& e : eqs) {
        for (auto& [v, c] : e.terms) m = std::max(m, c < 0 ? -c : c);
        m = std::max(m, e.rhs < 0 ? -e.rhs : e.rhs);
    }
    return m;
}

bool satisfies(const DioSystem& sys, const SolutionVec& sol) {
    if (static_cast<int>(sol.size()) != sys.n_vars()) return false;
    for (int v = 0; v < sys.n_vars(); ++v)
        if (sol[v] < BigInt(sys.lower[v])) return false;
    for (const auto& e : sys.eqs) {
        BigInt acc;
        for (auto& [v, c] : e.terms) acc += BigInt(c) * sol[v];
        if (acc != BigInt(e.rhs)) return false;
    }
    return true;
}

BigInt pottier_bound(const DioSystem& sys) {
    BigInt base = BigInt(1) + BigInt(sys.n_vars()) * BigInt(sys.max_abs_coeff());
    return base.pow(sys.eqs.size());
}

namespace {

using IVec = std::vector<long long>;

// Union-find with offsets: val(v) = val(root(v)) + off(v).
struct AliasSets {
    std::vector<int> parent;
    std::vector<long long> offset;

    explicit AliasSets(int n) : parent(n), offset(n, 0) {
        for (int i = 0; i < n; ++i) parent[i] = i;
    }
    std::pair<int, long long> find(int v) {
        if (parent[v] == v) return {v, 0};
        auto [r, o] = find(parent[v]);
        parent[v] = r;
        offset[v] += o;
        return {r, offset[v]};
    }
    // val(a) - val(b) = c; false on contradiction.
    bool merge(int a, int b, long long c) {
        auto [ra, oa] = find(a);
        auto [rb, ob] = find(b);
        if (ra == rb) return oa - ob == c;
        parent[ra] = rb;
        offset[ra] = c + ob - oa;
        return true;
    }
};

// Substitution of fixed variables and unit-difference aliases before the
// completion runs; characteristic systems are mostly gluing equations.
struct Presolved {
    bool infeasible = false;
    int n_red = 0;
    std::vector<int> red_of;          // original var -> reduced var or -1
    std::vector<long long> base;      // value = reduced[red_of] + base (or base if fixed)
    std::vector<IVec> rows;           // reduced equations
    IVec rhs;
    IVec low;                         // reduced lower bounds
};

Presolved presolve(const DioSystem& sys) {
    int n = sys.n_vars();
    Presolved ps;
    AliasSets als(n);
    std::vector<std::optional<long long>> fixed(n);

    auto fix = [&](int v, long long val) {
        auto [r, o] = als.find(v);
        long long rv = val - o;
        if (fixed[r]) return *fixed[r] == rv;
        fixed[r] = rv;
        return true;
    };

    bool changed = true;
    while (changed && !ps.infeasible) {
        changed = false;
        for (const auto& e : sys.eqs) {
            // Rewrite over the roots.
            std::map<int, long long> coef;
            long long rhs = e.rhs;
            for (auto& [v, c] : e.terms) {
                auto [r, o] = als.find(v);
                rhs -= c * o;
                if (fixed[r]) rhs -= c * *fixed[r];
                else coef[r] += c;
            }
            std::erase_if(coef, [](auto& kv) { return kv.second == 0; });
            if (coef.empty()) {
                if (rhs != 0) ps.infeasible = true;
            } else if (coef.size() == 1) {
                auto [r, c] = *coef.begin();
                if (rhs % c != 0) {
                    ps.infeasible = true;
                } else if (!fixed[r]) {
                    if (!fix(r, rhs / c)) ps.infeasible = true;
                    changed = true;
                } else if (*fixed[r] != rhs / c) {
                    ps.infeasible = true;
                }
            } else if (coef.size() == 2) {
                auto it = coef.begin();
                auto [v1, c1] = *it++;
                auto [v2, c2] = *it;
                if (c1 == 1 && c2 == -1) {
                    if (!als.merge(v1, v2, rhs)) ps.infeasible = true;
                    changed = true;
                } else if (c1 == -1 && c2 == 1) {
                    if (!als.merge(v2, v1, rhs)) ps.infeasible = true;
                    changed = true;
                }
            }
            if (ps.infeasible) return ps;
        }
    }

    // Reduced variables: unfixed roots.
    ps.red_of.assign(n, -1);
    ps.base.assign(n, 0);
    std::map<int, int> red_id;
    for (int v = 0; v < n; ++v) {
        auto [r, o] = als.find(v);
        if (fixed[r]) {
            ps.base[v] = *fixed[r] + o;
            if (ps.base[v] < sys.lower[v]) ps.infeasible = true;
        } else {
            auto it = red_id.find(r);
            if (it == red_id.end()) it = red_id.emplace(r, static_cast<int>(red_id.size())).first;
            ps.red_of[v] = it->second;
            ps.base[v] = o;
        }
    }
    if (ps.infeasible) return ps;
    ps.n_red = static_cast<int>(red_id.size());
    ps.low.assign(ps.n_red, 0);
    for (int v = 0; v < n; ++v) {
        if (ps.red_of[v] < 0) continue;
        // reduced + base >= lower(v) and reduced >= 0
        ps.low[ps.red_of[v]] = std::max(ps.low[ps.red_of[v]], sys.lower[v] - ps.base[v]);
    }
    // Surviving equations with >= 2 reduced terms (others are consumed above).
    std::set<std::pair<IVec, long long>> seen_rows;
    for (const auto& e : sys.eqs) {
        std::map<int, long long> coef;
        long long rhs = e.rhs;
        for (auto& [v, c] : e.terms) {
            auto [r, o] = als.find(v);
            rhs -= c * o;
            if (fixed[r]) rhs -= c * *fixed[r];
            else coef[red_id.at(r)] += c;
        }
        std::erase_if(coef, [](auto& kv) { return kv.second == 0; });
        if (coef.size() < 2) continue;  // handled during substitution
        IVec row(ps.n_red, 0);
        for (auto& [r, c] : coef) row[r] = c;
        if (seen_rows.insert({row, rhs}).second) {
            ps.rows.push_back(std::move(row));
            ps.rhs.push_back(rhs);
        }
    }
    return ps;
}

// Contejean-Devie completion: Hilbert basis of A x = 0 over naturals,
// frontier vectors grown one unit step at a time toward the kernel, guided by
// the scalar-product criterion <Ax, Ae_i> < 0. Optionally vectors with
// z-coordinate (the homogenization column) above 1 are pruned, which is
// complete for minimal inhomogeneous solutions since frontier paths are
// pointwise monotone.
struct Completion {
    int n;
    std::vector<IVec> rows;  // dense equation rows
    int z_col = -1;          // prune values > 1 in this column if set

    std::vector<IVec> run() {
        std::vector<IVec> basis;
        auto dominated = [&](const IVec& t) {
            for (const IVec& b : basis) {
                bool le = true;
                for (int i = 0; i < n && le; ++i) le = b[i] <= t[i];
                if (le) return true;
            }
            return false;
        };
        std::vector<IVec> defects;  // A e_i per column
        defects.assign(n, IVec(rows.size(), 0));
        for (size_t r = 0; r < rows.size(); ++r)
            for (int i = 0; i < n; ++i) defects[i][r] = rows[r][i];

        std::set<IVec> seen;
        std::vector<std::pair<IVec, IVec>> frontier;  // (vector, defect A x)
        for (int i = 0; i < n; ++i) {
            if (z_col >= 0 && i == z_col) {
                // allowed: z itself starts at 1
            }
            IVec t(n, 0);
            t[i] = 1;
            if (seen.insert(t).second) frontier.push_back({t, defects[i]});
        }
        while (!frontier.empty()) {
            std::vector<std::pair<IVec, IVec>> next;
            for (auto& [t, d] : frontier) {
                if (std::all_of(d.begin(), d.end(), [](long long x) { return x == 0; })) {
                    if (!dominated(t)) {
                        std::erase_if(basis, [&](const IVec& b) {
                            for (int i = 0; i < n; ++i)
                                if (b[i] < t[i]) return false;
                            return true;
                        });
                        basis.push_back(t);
                    }
                    continue;
                }
                for (int i = 0; i < n; ++i) {
                    // <A t, A e_i> < 0
                    __int128 dot = 0;
                    for (size_t r = 0; r < rows.size(); ++r)
                        dot += static_cast<__int128>(d[r]) * defects[i][r];
                    if (dot >= 0) continue;
                    IVec t2 = t;
                    ++t2[i];
                    if (z_col >= 0 && t2[z_col] > 1) continue;
                    if (dominated(t2)) continue;
                    if (!seen.insert(t2).second) continue;
                    IVec d2 = d;
                    for (size_t r = 0; r < rows.size(); ++r) d2[r] += defects[i][r];
                    next.push_back({std::move(t2), std::move(d2)});
                }
            }
            frontier = std::move(next);
        }
        std::sort(basis.begin(), basis.end());
        return basis;
    }
};

}  // namespace

std::vector<SolutionVec> minimal_solutions(const DioSystem& sys) {
    Presolved ps = presolve(sys);
    if (ps.infeasible) return {};

    // Shift away the lower bounds (x = y + low), then homogenize with a unit
    // z column carrying the constants.
    Completion comp;
    comp.n = ps.n_red + 1;
    comp.z_col = ps.n_red;
    for (size_t r = 0; r < ps.rows.size(); ++r) {
        IVec row = ps.rows[r];
        long long b = ps.rhs[r];
        for (int v = 0; v < ps.n_red; ++v) b -= row[v] * ps.low[v];
        row.push_back(-b);
        comp.rows.push_back(std::move(row));
    }
    std::vector<SolutionVec> out;
    for (const IVec& b : comp.run()) {
        if (b[ps.n_red] != 1) continue;
        SolutionVec s;
        for (int v = 0; v < sys.n_vars(); ++v) {
            long long val = ps.base[v];
            if (ps.red_of[v] >= 0) val += b[ps.red_of[v]] + ps.low[ps.red_of[v]];
            s.push_back(BigInt(val));
        }
        out.push_back(std::move(s));
    }
    std::sort(out.begin(), out.end());
    return out;
}

HilbertBasis hilbert_basis(const DioSystem& sys) {
    if (!sys.is_homogeneous())
        throw DioError("hilbert_basis expects a homogeneous system (zero constants, zero lower bounds)");
    Presolved ps = presolve(sys);
    HilbertBasis hb;
    hb.sum.assign(sys.n_vars(), BigInt(0));
    if (ps.infeasible) return hb;  // cannot happen for homogeneous systems
    Completion comp;
    comp.n = ps.n_red;
    comp.rows = ps.rows;
    for (const IVec& b : comp.run()) {
        SolutionVec s;
        for (int v = 0; v < sys.n_vars(); ++v)
            s.push_back(BigInt(ps.red_of[v] >= 0 ? b[ps.red_of[v]] : 0));
        hb.elems.push_back(std::move(s));
    }
    std::sort(hb.elems.begin(), hb.elems.end());
    for (const SolutionVec& s : hb.elems)
        for (int v = 0; v < sys.n_vars(); ++v) hb.sum[v] += s[v];
    return hb;
}

std::optional<SolutionVec> solve_one(const DioSystem& sys) {
    std::vector<SolutionVec> ms = minimal_solutions(sys);
    if (ms.empty()) return std::nullopt;
    return ms.front();  // sorted: lexicographically least
}

std::vector<Boundedness> variable_boundedness(const DioSystem& sys, const HilbertBasis& basis) {
    std::vector<Boundedness> out(sys.n_vars(), Boundedness::Bounded);
    for (int v = 0; v < sys.n_vars(); ++v)
        if (!basis.sum[v].is_zero()) out[v] = Boundedness::Unbounded;
    return out;
}

}  // namespace tgvas
