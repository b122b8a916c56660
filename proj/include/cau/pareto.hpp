#pragma once

#include <vector>

namespace cau {

// m x m symmetric matrix of pairwise gradient dot products M_ij = g_i . g_j.
using GramMatrix = std::vector<std::vector<double>>;

// Exact pairwise dot products; all gradients must share one length (2..8 tasks).
GramMatrix gram(const std::vector<std::vector<double>>& gradients);

// Minimize || sum_i alpha_i g_i ||^2 over the simplex, expressed through the
// Gram matrix as alpha' M alpha. Frank-Wolfe with exact line search and away
// steps, plus an exact corrective solve on the current active face; stops on
// the duality gap. Ties in vertex choice break to the lowest index; an
// all-zero M returns uniform weights.
std::vector<double> solve_min_norm(const GramMatrix& M, double tol = 1e-6, int max_iter = 100);

// sum_i alpha_i g_i
std::vector<double> combine(const std::vector<std::vector<double>>& gradients,
                            const std::vector<double>& alpha);

} // namespace cau
