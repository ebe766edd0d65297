#include <random>

#include "doctest.h"
#include "tgvas/diophantine.hpp"

using namespace tgvas;

namespace {

DioSystem sys_of(int n, const std::vector<std::vector<long long>>& rows,
                 const std::vector<long long>& rhs, const std::vector<int>& lower = {}) {
    DioSystem s;
    for (int v = 0; v < n; ++v) s.add_var("x" + std::to_string(v), lower.empty() ? 0 : lower[v]);
    for (size_t r = 0; r < rows.size(); ++r) {
        std::vector<std::pair<int, long long>> t;
        for (int v = 0; v < n; ++v)
            if (rows[r][v]) t.push_back({v, rows[r][v]});
        s.add_eq(std::move(t), rhs[r]);
    }
    return s;
}

std::vector<long long> small(const SolutionVec& s) {
    std::vector<long long> v;
    for (const BigInt& b : s) v.push_back(b.to_i64());
    return v;
}

// Brute-force enumeration of all minimal solutions over the Pottier box, with
// interval pruning per equation. Independent of the completion algorithm.
struct BoxOracle {
    const DioSystem& sys;
    long long box;
    bool exclude_zero = false;  // for homogeneous systems: Hilbert convention
    std::vector<std::vector<long long>> sols;
    long long visits = 0;

    bool prune(const std::vector<long long>& partial, size_t depth) const {
        for (const auto& e : sys.eqs) {
            long long fixed = 0, lo = 0, hi = 0;
            for (auto& [v, c] : e.terms) {
                if (static_cast<size_t>(v) < depth) {
                    fixed += c * partial[v];
                } else {
                    long long cmin = c * sys.lower[v], cmax = c * box;
                    lo += std::min(cmin, cmax);
                    hi += std::max(cmin, cmax);
                }
            }
            if (e.rhs - fixed < lo || e.rhs - fixed > hi) return true;
        }
        return false;
    }

    void rec(std::vector<long long>& partial, size_t depth) {
        ++visits;
        if (visits > 60000000) throw DioError("box oracle exhausted its visit budget");
        if (depth == partial.size()) {
            if (exclude_zero &&
                std::all_of(partial.begin(), partial.end(), [](long long x) { return x == 0; }))
                return;
            for (auto& s : sols) {
                bool le = true;
                for (size_t v = 0; v < partial.size() && le; ++v) le = s[v] <= partial[v];
                if (le) return;  // dominated
            }
            sols.push_back(partial);
            return;
        }
        for (long long x = sys.lower[depth]; x <= box; ++x) {
            partial[depth] = x;
            if (!prune(partial, depth + 1)) rec(partial, depth + 1);
        }
        partial[depth] = sys.lower[depth];
    }

    std::vector<std::vector<long long>> run() {
        std::vector<long long> partial(sys.n_vars());
        for (int v = 0; v < sys.n_vars(); ++v) partial[v] = sys.lower[v];
        rec(partial, 0);
        // Ascending-value enumeration may keep dominating pairs when a later
        // branch produces a smaller vector on earlier coordinates; filter.
        std::vector<std::vector<long long>> out;
        for (auto& s : sols) {
            bool minimal = true;
            for (auto& t : sols) {
                if (&t == &s) continue;
                bool le = true, eq = true;
                for (size_t v = 0; v < s.size(); ++v) {
                    le = le && t[v] <= s[v];
                    eq = eq && t[v] == s[v];
                }
                if (le && !eq) minimal = false;
            }
            if (minimal) out.push_back(s);
        }
        std::sort(out.begin(), out.end());
        return out;
    }
};

}  // namespace

TEST_CASE("pottier bound values") {
    CHECK(pottier_bound(sys_of(2, {{1, -1}}, {0})).to_i64() == 3);  // N = 1: (1+2)^1
    CHECK(pottier_bound(sys_of(2, {{3, -1}}, {0})).to_i64() == 7);  // N = 3: (1+6)^1
    CHECK(pottier_bound(sys_of(1, {{1}}, {1})).to_i64() == 2);
    CHECK(pottier_bound(sys_of(3, {{2, -1, 0}, {0, 1, -2}}, {0, 0})).to_i64() == 49);
}

TEST_CASE("minimal solutions of simple systems") {
    auto ms = minimal_solutions(sys_of(2, {{1, -1}}, {0}));
    // Inhomogeneous view: the zero vector is the unique minimal solution.
    REQUIRE(ms.size() == 1);
    CHECK(small(ms[0]) == std::vector<long long>{0, 0});

    ms = minimal_solutions(sys_of(2, {{2, -3}}, {0}));
    REQUIRE(ms.size() == 1);
    CHECK(small(ms[0]) == std::vector<long long>{0, 0});

    ms = minimal_solutions(sys_of(2, {{1, 1}}, {2}));
    REQUIRE(ms.size() == 3);
    CHECK(small(ms[0]) == std::vector<long long>{0, 2});
    CHECK(small(ms[1]) == std::vector<long long>{1, 1});
    CHECK(small(ms[2]) == std::vector<long long>{2, 0});

    CHECK(minimal_solutions(sys_of(1, {{2}}, {3})).empty());  // parity
}

TEST_CASE("hilbert bases of textbook systems") {
    HilbertBasis hb = hilbert_basis(sys_of(2, {{1, -1}}, {0}));
    REQUIRE(hb.elems.size() == 1);
    CHECK(small(hb.elems[0]) == std::vector<long long>{1, 1});
    CHECK(small(hb.sum) == std::vector<long long>{1, 1});

    hb = hilbert_basis(sys_of(2, {{2, -3}}, {0}));
    REQUIRE(hb.elems.size() == 1);
    CHECK(small(hb.elems[0]) == std::vector<long long>{3, 2});

    hb = hilbert_basis(sys_of(3, {{1, 1, -2}}, {0}));
    REQUIRE(hb.elems.size() == 3);
    CHECK(small(hb.elems[0]) == std::vector<long long>{0, 2, 1});
    CHECK(small(hb.elems[1]) == std::vector<long long>{1, 1, 1});
    CHECK(small(hb.elems[2]) == std::vector<long long>{2, 0, 1});

    CHECK_THROWS_AS(hilbert_basis(sys_of(1, {{1}}, {1})), DioError);
}

TEST_CASE("solve_one picks the lexicographically least minimal solution") {
    auto s = solve_one(sys_of(1, {{1}}, {3}));
    REQUIRE(s.has_value());
    CHECK(small(*s) == std::vector<long long>{3});

    s = solve_one(sys_of(2, {{1, -1}}, {1}, {1, 0}));
    REQUIRE(s.has_value());
    CHECK(small(*s) == std::vector<long long>{1, 0});

    CHECK(!solve_one(sys_of(1, {{2}}, {3})).has_value());
}

TEST_CASE("variable boundedness") {
    DioSystem s = sys_of(2, {{1, -1}}, {0});
    auto b = variable_boundedness(s, hilbert_basis(s.homogenize()));
    CHECK(b[0] == Boundedness::Unbounded);
    CHECK(b[1] == Boundedness::Unbounded);

    // x fixed, y floating against its copy.
    DioSystem s2 = sys_of(3, {{1, 0, 0}, {0, 1, -1}}, {5, 0});
    auto b2 = variable_boundedness(s2, hilbert_basis(s2.homogenize()));
    CHECK(b2[0] == Boundedness::Bounded);
    CHECK(b2[1] == Boundedness::Unbounded);
}

TEST_CASE("solutions satisfy their systems exactly") {
    std::mt19937 rng(7);
    for (int round = 0; round < 60; ++round) {
        int n = 1 + static_cast<int>(rng() % 4);
        int m = 1 + static_cast<int>(rng() % 3);
        std::vector<std::vector<long long>> rows(m, std::vector<long long>(n));
        std::vector<long long> rhs(m);
        for (auto& row : rows)
            for (auto& c : row) c = static_cast<long long>(rng() % 7) - 3;
        for (auto& b : rhs) b = static_cast<long long>(rng() % 5) - 2;
        DioSystem sys = sys_of(n, rows, rhs);
        for (const SolutionVec& sol : minimal_solutions(sys)) CHECK(satisfies(sys, sol));
        HilbertBasis hb = hilbert_basis(sys.homogenize());
        for (const SolutionVec& sol : hb.elems) CHECK(satisfies(sys.homogenize(), sol));
    }
}

TEST_CASE("completion equals box enumeration on random homogeneous systems") {
    std::mt19937 rng(20260808);
    int tested = 0;
    while (tested < 60) {
        int n = 2 + static_cast<int>(rng() % 3);  // up to 4 here; acceptance pushes to 5
        int m = 1 + static_cast<int>(rng() % 3);
        std::vector<std::vector<long long>> rows(m, std::vector<long long>(n, 0));
        for (auto& row : rows)
            for (auto& c : row) c = static_cast<long long>(rng() % 9) - 4;
        bool degenerate = false;
        for (auto& row : rows)
            if (std::all_of(row.begin(), row.end(), [](long long c) { return c == 0; }))
                degenerate = true;
        for (int v = 0; v < n && !degenerate; ++v) {
            bool all_zero = true;
            for (auto& row : rows) all_zero = all_zero && row[v] == 0;
            if (all_zero) degenerate = true;
        }
        if (degenerate) continue;
        DioSystem sys = sys_of(n, rows, std::vector<long long>(m, 0));
        BigInt box = pottier_bound(sys);
        if (!box.fits_i64() || box.to_i64() > 3000) continue;
        ++tested;

        BoxOracle oracle{sys, box.to_i64(), true, {}, 0};
        auto want = oracle.run();
        HilbertBasis hb = hilbert_basis(sys);
        std::vector<std::vector<long long>> got;
        for (const SolutionVec& s : hb.elems) got.push_back(small(s));
        CHECK(got == want);
        for (auto& s : got)
            for (long long x : s) CHECK(BigInt(x) <= box);
    }
}

TEST_CASE("pairwise incomparability of minimal solutions") {
    std::mt19937 rng(99);
    for (int round = 0; round < 40; ++round) {
        int n = 2 + static_cast<int>(rng() % 3);
        std::vector<std::vector<long long>> rows(1, std::vector<long long>(n));
        for (auto& c : rows[0]) c = static_cast<long long>(rng() % 7) - 3;
        DioSystem sys = sys_of(n, rows, {static_cast<long long>(rng() % 4)});
        auto ms = minimal_solutions(sys);
        for (size_t i = 0; i < ms.size(); ++i)
            for (size_t j = 0; j < ms.size(); ++j) {
                if (i == j) continue;
                bool le = true;
                for (size_t v = 0; v < ms[i].size(); ++v) le = le && ms[i][v] <= ms[j][v];
                CHECK(!le);
            }
    }
}
