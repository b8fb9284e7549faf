#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "error.hpp"

namespace lkgft {

/// Normalized RMSE over a horizon: sqrt(sum_t |xh_t - x_t|^2 / sum_t |x_t|^2).
inline double nrmse(const Eigen::Ref<const Eigen::MatrixXd>& x_hat, const Eigen::Ref<const Eigen::MatrixXd>& x) {
    detail::require(x_hat.rows() == x.rows() && x_hat.cols() == x.cols(), "nrmse: shape mismatch");
    const double denom = x.squaredNorm();
    if (!(denom > 0.0)) throw NumericalError("nrmse: reference signal is identically zero");
    return std::sqrt((x_hat - x).squaredNorm() / denom);
}

} // namespace lkgft
