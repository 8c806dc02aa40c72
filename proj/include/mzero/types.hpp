#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace mzero {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Error taxonomy shared by all modules. Everything derives from Error so
// callers can catch the whole family at once.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonSquare : Error {
    using Error::Error;
};
struct ShapeMismatch : Error {
    using Error::Error;
};
struct RankDeficient : Error {
    using Error::Error;
};
struct NotPositiveDefinite : Error {
    using Error::Error;
};
struct BaseMismatch : Error {
    using Error::Error;
};
struct NotHorizontal : Error {
    using Error::Error;
};
struct DegenerateDenominator : Error {
    using Error::Error;
};
struct RetractionFailed : Error {
    using Error::Error;
};
struct ConstraintViolated : Error {
    using Error::Error;
};
struct InvalidPoint : Error {
    using Error::Error;
};
struct DivideByZero : Error {
    using Error::Error;
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace mzero
