// SPDX-License-Identifier: Apache-2.0
//
// DirectLiNGAM: causal ordering by pairwise residual independence, then
// least-squares connection strengths along the ordering.

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace causalbeam {

/// Effect matrix over p variables. effects(i, j) != 0 means an edge j -> i.
struct CausalGraph {
    std::vector<std::size_t> order; // exogenous first
    Eigen::MatrixXd effects;
    double threshold = 0.0;
    std::size_t target = 0;
    /// Regressions that needed a diagonal jitter (index of the regressed variable).
    std::vector<std::size_t> jittered;

    std::size_t p() const noexcept { return order.size(); }
    void validate() const;
};

/// Nonnegative pairwise dependence proxy between two samples. Both inputs are
/// standardized internally. The proxy sums squared correlations between
/// log-cosh (even) and Gaussian-weighted (odd) transforms of the two inputs,
/// so it vanishes for independent inputs and is unchanged by a sign flip of
/// either one.
double independence_score(std::span<const double> u, std::span<const double> v);

struct LingamOptions {
    /// Variable that may only be placed last (no outgoing edges).
    std::optional<std::size_t> target;
    /// Threads scoring candidates; 0 = default. The order does not depend on it.
    std::size_t workers = 0;
};

std::vector<std::size_t> causal_order(const Eigen::MatrixXd &X, const LingamOptions &opts = {});

/// OLS of every variable on its predecessors in `order`. Coefficients whose
/// standardized magnitude |E_ij| * sd_j / sd_i is <= threshold are set to 0.
/// Stored values stay in the data's units.
Eigen::MatrixXd estimate_effects(const Eigen::MatrixXd &X, const std::vector<std::size_t> &order,
                                 double threshold, std::vector<std::size_t> *jittered = nullptr);

CausalGraph discover(const Eigen::MatrixXd &X, std::size_t target, double threshold);

std::string format_graph(const CausalGraph &g);
CausalGraph parse_graph(const std::string &text);
void save_graph(const CausalGraph &g, const std::string &path);
CausalGraph load_graph(const std::string &path);

} // namespace causalbeam
