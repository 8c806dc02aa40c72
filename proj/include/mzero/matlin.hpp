#pragma once

#include "mzero/types.hpp"

#include <utility>

namespace mzero::matlin {

/// Q factor and R factor of a sign-fixed QR decomposition: M = Q*R with
/// Q'Q = I and diag(R) strictly positive.
struct QrFactors {
    Matrix q;
    Matrix r;
};

/// Sign-fixed thin QR of a full-column-rank matrix (cols <= rows).
/// Throws RankDeficient when the smallest |R(j,j)| falls below
/// 1e-13 * ||M||_F.
QrFactors qf(const Matrix& m);

/// Splits a square matrix into its symmetric and antisymmetric parts,
/// sym = (A+A')/2 and skew = (A-A')/2.
std::pair<Matrix, Matrix> sym_skew_split(const Matrix& a);

struct CholResult {
    double lndet;    // ln det(X) = 2 * sum(ln diag(L))
    Matrix factor;   // lower-triangular L with L*L' = X
};

/// Cholesky factorization plus log-determinant. Only the lower triangle
/// of X is referenced. Throws NotPositiveDefinite on a failed pivot.
CholResult chol_logdet(const Matrix& x);

/// Solves X * result = B for SPD X via Cholesky.
Matrix spd_solve(const Matrix& x, const Matrix& b);

}  // namespace mzero::matlin
