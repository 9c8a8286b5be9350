// SPDX-License-Identifier: Apache-2.0
//
// Linear non-Gaussian SEM generator shared by the LiNGAM tests and the
// acceptance run.

#pragma once

#include "causalbeam/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <vector>

namespace semtest {

struct Sem {
    Eigen::MatrixXd B;             // B(i, j) != 0 means j -> i
    std::vector<std::size_t> causal; // a true causal order
    Eigen::MatrixXd X;             // n x p samples
};

/// Dense DAG over p variables with |effects| in [lo, hi], random signs, a
/// random variable labelling and uniform(-1, 1) disturbances.
inline Sem make_sem(std::size_t p, std::size_t n, std::uint64_t seed, double lo = 0.3, double hi = 0.9)
{
    causalbeam::Rng rng(seed);
    std::uniform_real_distribution<double> mag(lo, hi), noise(-1.0, 1.0);
    std::bernoulli_distribution sign(0.5);
    Sem s;
    s.causal.resize(p);
    std::iota(s.causal.begin(), s.causal.end(), std::size_t{0});
    std::shuffle(s.causal.begin(), s.causal.end(), rng);
    s.B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    for (std::size_t a = 1; a < p; ++a)
        for (std::size_t b = 0; b < a; ++b)
            s.B(static_cast<Eigen::Index>(s.causal[a]), static_cast<Eigen::Index>(s.causal[b])) =
                (sign(rng) ? 1.0 : -1.0) * mag(rng);
    s.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t a = 0; a < p; ++a) {
            const auto i = static_cast<Eigen::Index>(s.causal[a]);
            double v = noise(rng);
            for (std::size_t b = 0; b < a; ++b) {
                const auto j = static_cast<Eigen::Index>(s.causal[b]);
                v += s.B(i, j) * s.X(static_cast<Eigen::Index>(r), j);
            }
            s.X(static_cast<Eigen::Index>(r), i) = v;
        }
    return s;
}

/// True when no edge of B points backwards in `order`.
inline bool consistent(const Eigen::MatrixXd &B, const std::vector<std::size_t> &order)
{
    std::vector<std::size_t> pos(order.size());
    for (std::size_t k = 0; k < order.size(); ++k)
        pos[order[k]] = k;
    for (Eigen::Index i = 0; i < B.rows(); ++i)
        for (Eigen::Index j = 0; j < B.cols(); ++j)
            if (B(i, j) != 0.0 && pos[static_cast<std::size_t>(j)] > pos[static_cast<std::size_t>(i)])
                return false;
    return true;
}

} // namespace semtest
