// Reference solvers that share no code path with the library's closed forms.

#pragma once

#include <Eigen/Dense>

#include "dansf/problems.hpp"

namespace oracle {

using dansf::Mat;
using dansf::Vec;

/// Newton iteration on the KKT system of min trace(X^T C) s.t. trace(X^T R X) = 1:
///   C + 2 lambda R X = 0,  trace(X^T R X) = 1.
/// Returns the solution with lambda > 0 (the minimizer); lambda is reported.
inline Mat trace_qclp_kkt(const Mat& r, const Mat& c, double* lambda_out = nullptr) {
    const auto m = r.rows(), q = c.cols(), n = m * q;
    Mat rbar = Mat::Zero(n, n);
    for (Eigen::Index j = 0; j < q; ++j) rbar.block(j * m, j * m, m, m) = r;
    const Vec cv = Eigen::Map<const Vec>(c.data(), n);
    Vec x = -cv / std::sqrt(cv.dot(rbar * cv));
    double lambda = 0.5 * cv.norm() / (rbar * x).norm();
    for (int it = 0; it < 200; ++it) {
        Vec f(n + 1);
        f.head(n) = cv + 2.0 * lambda * rbar * x;
        f(n) = x.dot(rbar * x) - 1.0;
        if (f.norm() < 1e-15 * (1.0 + cv.norm())) break;
        Mat jac = Mat::Zero(n + 1, n + 1);
        jac.topLeftCorner(n, n) = 2.0 * lambda * rbar;
        jac.topRightCorner(n, 1) = 2.0 * rbar * x;
        jac.bottomLeftCorner(1, n) = 2.0 * (rbar * x).transpose();
        const Vec step = jac.fullPivLu().solve(-f);
        x += step.head(n);
        lambda += step(n);
    }
    if (lambda_out) *lambda_out = lambda;
    return Eigen::Map<const Mat>(x.data(), m, q);
}

/// Conjugate gradients on R X = C, column by column.
inline Mat mmse_cg(const Mat& r, const Mat& c) {
    Mat x = Mat::Zero(r.rows(), c.cols());
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
        Vec xj = Vec::Zero(r.rows());
        Vec res = c.col(j);
        Vec p = res;
        double rs = res.squaredNorm();
        for (int it = 0; it < 20 * r.rows() && rs > 1e-32 * c.col(j).squaredNorm(); ++it) {
            const Vec rp = r * p;
            const double alpha = rs / p.dot(rp);
            xj += alpha * p;
            res -= alpha * rp;
            const double next = res.squaredNorm();
            p = res + (next / rs) * p;
            rs = next;
        }
        x.col(j) = xj;
    }
    return x;
}

/// Full KKT system of min trace(X^T R X) s.t. X^T B = H:
///   [2R  B; B^T  0] [X; Lambda] = [0; H^T].
inline Mat lcmv_kkt(const Mat& r, const Mat& b, const Mat& h) {
    const auto m = r.rows(), l = b.cols();
    Mat k = Mat::Zero(m + l, m + l);
    k.topLeftCorner(m, m) = 2.0 * r;
    k.topRightCorner(m, l) = b;
    k.bottomLeftCorner(l, m) = b.transpose();
    Mat rhs = Mat::Zero(m + l, h.rows());
    rhs.bottomRows(l) = h.transpose();
    return k.fullPivLu().solve(rhs).topRows(m);
}

inline double rel_err(const Mat& a, const Mat& b) { return (a - b).norm() / b.norm(); }

}  // namespace oracle
