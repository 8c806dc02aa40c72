#include "mzero/matlin.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <cmath>

namespace mzero::matlin {

QrFactors qf(const Matrix& m) {
    const auto rows = m.rows();
    const auto cols = m.cols();
    if (cols > rows) {
        throw ShapeMismatch("qf: need cols <= rows, got " + std::to_string(rows) + "x" +
                            std::to_string(cols));
    }

    Eigen::HouseholderQR<Matrix> qr(m);
    Matrix q = Matrix::Identity(rows, cols);
    q.applyOnTheLeft(qr.householderQ());
    Matrix r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();

    const double pivot_floor = 1e-13 * m.norm();
    for (Eigen::Index j = 0; j < cols; ++j) {
        if (std::abs(r(j, j)) <= pivot_floor) {
            throw RankDeficient("qf: pivot " + std::to_string(j) + " below threshold");
        }
        if (r(j, j) < 0.0) {
            q.col(j) = -q.col(j);
            r.row(j) = -r.row(j);
        }
    }
    return {std::move(q), std::move(r)};
}

std::pair<Matrix, Matrix> sym_skew_split(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw NonSquare("sym_skew_split: matrix is " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()));
    }
    Matrix sym = 0.5 * (a + a.transpose());
    Matrix skew = 0.5 * (a - a.transpose());
    return {std::move(sym), std::move(skew)};
}

CholResult chol_logdet(const Matrix& x) {
    if (x.rows() != x.cols()) {
        throw NonSquare("chol_logdet: matrix is " + std::to_string(x.rows()) + "x" +
                        std::to_string(x.cols()));
    }
    Eigen::LLT<Matrix> llt(x);
    if (llt.info() != Eigen::Success) {
        throw NotPositiveDefinite("chol_logdet: pivot <= 0, matrix left the SPD cone");
    }
    Matrix factor = llt.matrixL();
    double lndet = 0.0;
    for (Eigen::Index i = 0; i < factor.rows(); ++i) {
        lndet += std::log(factor(i, i));
    }
    return {2.0 * lndet, std::move(factor)};
}

Matrix spd_solve(const Matrix& x, const Matrix& b) {
    if (x.rows() != x.cols()) {
        throw NonSquare("spd_solve: matrix is " + std::to_string(x.rows()) + "x" +
                        std::to_string(x.cols()));
    }
    if (b.rows() != x.rows()) {
        throw ShapeMismatch("spd_solve: rhs has " + std::to_string(b.rows()) + " rows, need " +
                            std::to_string(x.rows()));
    }
    Eigen::LLT<Matrix> llt(x);
    if (llt.info() != Eigen::Success) {
        throw NotPositiveDefinite("spd_solve: matrix is not positive definite");
    }
    return llt.solve(b);
}

}  // namespace mzero::matlin
