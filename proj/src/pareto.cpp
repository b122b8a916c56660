#include "cau/pareto.hpp"

#include <cmath>
#include <cstddef>
#include <limits>

#include "cau/errors.hpp"

namespace cau {

namespace {

// Gaussian elimination with partial pivoting; A is n x n row-major, consumed.
// Returns false when numerically singular.
bool solve_linear(std::vector<double> A, std::vector<double> b, int n, std::vector<double>& x) {
    for (int col = 0; col < n; ++col) {
        int piv = col;
        double best = std::fabs(A[static_cast<std::size_t>(col) * n + col]);
        for (int r = col + 1; r < n; ++r) {
            const double v = std::fabs(A[static_cast<std::size_t>(r) * n + col]);
            if (v > best) {
                best = v;
                piv = r;
            }
        }
        if (best < 1e-12) return false;
        if (piv != col) {
            for (int c = 0; c < n; ++c)
                std::swap(A[static_cast<std::size_t>(piv) * n + c],
                          A[static_cast<std::size_t>(col) * n + c]);
            std::swap(b[static_cast<std::size_t>(piv)], b[static_cast<std::size_t>(col)]);
        }
        const double inv = 1.0 / A[static_cast<std::size_t>(col) * n + col];
        for (int r = col + 1; r < n; ++r) {
            const double f = A[static_cast<std::size_t>(r) * n + col] * inv;
            if (f == 0.0) continue;
            for (int c = col; c < n; ++c)
                A[static_cast<std::size_t>(r) * n + c] -= f * A[static_cast<std::size_t>(col) * n + c];
            b[static_cast<std::size_t>(r)] -= f * b[static_cast<std::size_t>(col)];
        }
    }
    x.assign(static_cast<std::size_t>(n), 0.0);
    for (int r = n - 1; r >= 0; --r) {
        double acc = b[static_cast<std::size_t>(r)];
        for (int c = r + 1; c < n; ++c) acc -= A[static_cast<std::size_t>(r) * n + c] * x[static_cast<std::size_t>(c)];
        x[static_cast<std::size_t>(r)] = acc / A[static_cast<std::size_t>(r) * n + r];
    }
    return true;
}

void matvec(const GramMatrix& M, const std::vector<double>& a, std::vector<double>& q) {
    const std::size_t m = a.size();
    q.assign(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) acc += M[i][j] * a[j];
        q[i] = acc;
    }
}

double quad(const std::vector<double>& a, const std::vector<double>& q) {
    double f = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) f += a[i] * q[i];
    return f;
}

// Exact minimizer of a' M a restricted to the face spanned by `support`
// (sum = 1). Solves M_S y = 1 and normalizes; returns false when the face
// system is singular or the minimizer leaves the face.
bool face_minimizer(const GramMatrix& M, const std::vector<int>& support,
                    std::vector<double>& alpha_out, std::size_t m) {
    const int n = static_cast<int>(support.size());
    if (n == 0) return false;
    std::vector<double> A(static_cast<std::size_t>(n) * n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            A[static_cast<std::size_t>(r) * n + c] =
                M[static_cast<std::size_t>(support[static_cast<std::size_t>(r)])]
                 [static_cast<std::size_t>(support[static_cast<std::size_t>(c)])];
    std::vector<double> y;
    if (!solve_linear(std::move(A), std::vector<double>(static_cast<std::size_t>(n), 1.0), n, y))
        return false;
    double sum = 0.0;
    for (double v : y) sum += v;
    if (std::fabs(sum) < 1e-12) return false;
    std::vector<double> cand(m, 0.0);
    for (int r = 0; r < n; ++r) {
        const double v = y[static_cast<std::size_t>(r)] / sum;
        if (v < 0.0) return false;
        cand[static_cast<std::size_t>(support[static_cast<std::size_t>(r)])] = v;
    }
    alpha_out = std::move(cand);
    return true;
}

} // namespace

GramMatrix gram(const std::vector<std::vector<double>>& gradients) {
    const std::size_t m = gradients.size();
    if (m < 2 || m > 8) throw UsageError("gram expects 2..8 gradients");
    const std::size_t len = gradients[0].size();
    for (const auto& g : gradients)
        if (g.size() != len) throw UsageError("gradient length mismatch");
    GramMatrix M(m, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i; j < m; ++j) {
            double acc = 0.0;
            const double* a = gradients[i].data();
            const double* b = gradients[j].data();
            for (std::size_t k = 0; k < len; ++k) acc += a[k] * b[k];
            M[i][j] = acc;
            M[j][i] = acc;
        }
    }
    return M;
}

std::vector<double> solve_min_norm(const GramMatrix& M, double tol, int max_iter) {
    const std::size_t m = M.size();
    if (m == 0) throw UsageError("empty gram matrix");
    if (!(tol > 0.0)) throw UsageError("tolerance must be > 0");
    if (max_iter < 1) throw UsageError("max_iter must be >= 1");
    for (const auto& row : M) {
        if (row.size() != m) throw UsageError("gram matrix not square");
        for (double v : row)
            if (!std::isfinite(v)) throw UsageError("gram matrix has non-finite entries");
    }
    std::vector<double> alpha(m, 1.0 / static_cast<double>(m));
    if (m == 1) return alpha;

    std::vector<double> q;
    for (int iter = 0; iter < max_iter; ++iter) {
        matvec(M, alpha, q);
        const double f = quad(alpha, q);

        // d = sum alpha_i g_i has g_i . d = q_i; the toward-vertex is the
        // task whose gradient is least aligned with d.
        std::size_t jf = 0;
        for (std::size_t i = 1; i < m; ++i)
            if (q[i] < q[jf]) jf = i;
        const double gap_fw = f - q[jf];
        if (gap_fw <= tol) break;

        // Away vertex: heaviest-aligned task currently in the support.
        std::size_t ja = m;
        for (std::size_t i = 0; i < m; ++i)
            if (alpha[i] > 0.0 && (ja == m || q[i] > q[ja])) ja = i;
        const double gap_away = q[ja] - f;

        bool did_move = false;
        if (gap_fw >= gap_away || alpha[ja] >= 1.0) {
            // toward step: alpha <- (1-gamma) alpha + gamma e_jf
            const double denom = M[jf][jf] - 2.0 * q[jf] + f;
            double gamma = denom > 0.0 ? gap_fw / denom : 1.0;
            gamma = std::min(1.0, std::max(0.0, gamma));
            if (gamma > 0.0) {
                for (std::size_t i = 0; i < m; ++i) alpha[i] *= (1.0 - gamma);
                alpha[jf] += gamma;
                did_move = true;
            }
        } else {
            // away step: push mass off ja, alpha <- alpha + gamma (alpha - e_ja)
            const double denom = M[ja][ja] - 2.0 * q[ja] + f;
            const double gmax = alpha[ja] / (1.0 - alpha[ja]);
            double gamma = denom > 0.0 ? gap_away / denom : gmax;
            gamma = std::min(gmax, std::max(0.0, gamma));
            if (gamma > 0.0) {
                for (std::size_t i = 0; i < m; ++i) alpha[i] *= (1.0 + gamma);
                alpha[ja] -= gamma;
                if (alpha[ja] < 1e-15) alpha[ja] = 0.0;
                did_move = true;
            }
        }

        // Corrective jump: the exact minimizer on the current active face,
        // when it stays inside the face and improves the objective.
        std::vector<int> support;
        for (std::size_t i = 0; i < m; ++i)
            if (alpha[i] > 0.0) support.push_back(static_cast<int>(i));
        std::vector<double> cand;
        if (face_minimizer(M, support, cand, m)) {
            matvec(M, cand, q);
            const double fc = quad(cand, q);
            if (fc < f) {
                alpha = std::move(cand);
                did_move = true;
            }
        }
        if (!did_move) break; // stalled: gap is at numerical floor
    }

    // Enforce the simplex exactly.
    double sum = 0.0;
    for (double& v : alpha) {
        if (v < 0.0) v = 0.0;
        sum += v;
    }
    if (sum <= 0.0) {
        alpha.assign(m, 1.0 / static_cast<double>(m));
    } else {
        for (double& v : alpha) v /= sum;
    }
    return alpha;
}

std::vector<double> combine(const std::vector<std::vector<double>>& gradients,
                            const std::vector<double>& alpha) {
    if (gradients.empty() || gradients.size() != alpha.size())
        throw UsageError("combine needs one weight per gradient");
    const std::size_t len = gradients[0].size();
    std::vector<double> out(len, 0.0);
    for (std::size_t i = 0; i < gradients.size(); ++i) {
        if (gradients[i].size() != len) throw UsageError("gradient length mismatch");
        const double a = alpha[i];
        if (a == 0.0) continue;
        const double* g = gradients[i].data();
        for (std::size_t k = 0; k < len; ++k) out[k] += a * g[k];
    }
    return out;
}

} // namespace cau
