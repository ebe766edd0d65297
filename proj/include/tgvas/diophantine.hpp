#ifndef TGVAS_DIOPHANTINE_HPP
#define TGVAS_DIOPHANTINE_HPP

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgvas/bigint.hpp"

namespace tgvas {

struct DioError : std::runtime_error {
    explicit DioError(const std::string& m) : std::runtime_error(m) {}
};

// Nonnegative integer linear system: equality constraints over named
// variables with small per-variable lower bounds (0 or 1). Inequalities are
// expected to be pre-converted to equalities via slack variables.
struct DioSystem {
    std::vector<std::string> vars;
    std::vector<int> lower;  // 0 or 1 per variable
    struct Eq {
        std::vector<std::pair<int, long long>> terms;  // (var, coefficient), var-sorted
        long long rhs = 0;
    };
    std::vector<Eq> eqs;

    int add_var(const std::string& name, int low = 0);
    void add_eq(std::vector<std::pair<int, long long>> terms, long long rhs);
    void fix_var(int v, long long value) { add_eq({{v, 1}}, value); }
    int n_vars() const { return static_cast<int>(vars.size()); }

    bool is_homogeneous() const;
    // Constants to zero, lower bounds to zero.
    DioSystem homogenize() const;
    long long max_abs_coeff() const;  // includes the constants
};

// A solution: per-variable natural values (dense over the system's variables).
using SolutionVec = std::vector<BigInt>;

bool satisfies(const DioSystem& sys, const SolutionVec& sol);

// Concrete instantiation (1 + nN)^m of the O(nN)^m minimal-solution bound.
BigInt pottier_bound(const DioSystem& sys);

struct HilbertBasis {
    std::vector<SolutionVec> elems;  // pairwise incomparable, sorted lexicographically
    SolutionVec sum;                 // Sol_H, componentwise
};

// Complete set of pointwise-minimal solutions (Contejean-Devie completion).
// Empty result means infeasible.
std::vector<SolutionVec> minimal_solutions(const DioSystem& sys);

// Hilbert basis of a homogeneous system; the zero solution is excluded.
// Throws DioError on non-homogeneous input.
HilbertBasis hilbert_basis(const DioSystem& sys);

// Lexicographically least minimal solution, if any.
std::optional<SolutionVec> solve_one(const DioSystem& sys);

enum class Boundedness { Bounded, Unbounded };

// Variable v is bounded iff Sol_H(v) = 0 for the basis of the homogenized
// system.
std::vector<Boundedness> variable_boundedness(const DioSystem& sys, const HilbertBasis& basis);

}  // namespace tgvas

#endif
