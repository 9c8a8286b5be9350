// SPDX-License-Identifier: Apache-2.0
#include "causalbeam/lingam.hpp"

#include "causalbeam/errors.hpp"
#include "causalbeam/parallel.hpp"
#include "causalbeam/textio.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace causalbeam {

namespace {

using Eigen::ArrayXd;
using Eigen::Index;
using Eigen::VectorXd;

// A column is treated as constant when its spread is this small relative to
// its magnitude.
constexpr double kConstantTol = 1e-12;
// A residual is treated as vanished (linear dependence) below this fraction of
// the original standard deviation.
constexpr double kResidualTol = 1e-8;

double population_sd(const VectorXd &centered)
{
    return std::sqrt(centered.squaredNorm() / static_cast<double>(centered.size()));
}

bool is_constant(const VectorXd &v)
{
    const double mean = v.mean();
    const double sd = population_sd((v.array() - mean).matrix());
    const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
    return !(sd > kConstantTol * scale);
}

/// Unit-norm, zero-mean version of v; all-zero when v has no spread.
VectorXd unit_centered(ArrayXd v)
{
    v -= v.mean();
    const double nrm = v.matrix().norm();
    if (!(nrm > 0.0))
        return VectorXd::Zero(v.size());
    return (v / nrm).matrix();
}

/// Transforms of one standardized sample that the score correlates.
struct Features {
    VectorXd linear;   // the sample itself
    VectorXd logcosh;  // even
    VectorXd gaussian; // odd: z * exp(-z^2 / 2)
};

Features make_features(const VectorXd &standardized)
{
    const ArrayXd z = standardized.array();
    const ArrayXd a = z.abs();
    Features f;
    f.linear = unit_centered(z);
    f.logcosh = unit_centered(a + (-2.0 * a).exp().log1p());
    f.gaussian = unit_centered(z * (-0.5 * z.square()).exp());
    return f;
}

double score_features(const Features &u, const Features &v)
{
    const auto sq = [](double c) { return c * c; };
    return sq(u.logcosh.dot(v.logcosh)) + sq(u.gaussian.dot(v.linear)) + sq(u.linear.dot(v.gaussian)) +
           sq(u.gaussian.dot(v.gaussian));
}

VectorXd standardize(const VectorXd &v)
{
    const VectorXd c = (v.array() - v.mean()).matrix();
    const double sd = population_sd(c);
    return c / sd;
}

} // namespace

void CausalGraph::validate() const
{
    const std::size_t n = order.size();
    if (n == 0)
        throw std::invalid_argument("CausalGraph: empty graph");
    if (static_cast<std::size_t>(effects.rows()) != n || static_cast<std::size_t>(effects.cols()) != n)
        throw std::invalid_argument("CausalGraph: effect matrix is not p x p");
    std::vector<bool> seen(n, false);
    for (std::size_t v : order) {
        if (v >= n || seen[v])
            throw std::invalid_argument("CausalGraph: order is not a permutation");
        seen[v] = true;
    }
    if (target >= n)
        throw std::invalid_argument("CausalGraph: target index out of range");
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a; b < n; ++b)
            if (effects(static_cast<Index>(order[a]), static_cast<Index>(order[b])) != 0.0)
                throw std::invalid_argument("CausalGraph: effect matrix is not acyclic under the ordering");
    if (!effects.col(static_cast<Index>(target)).isZero(0.0))
        throw std::invalid_argument("CausalGraph: target has outgoing edges");
    if (!effects.allFinite())
        throw std::invalid_argument("CausalGraph: non-finite effect");
}

double independence_score(std::span<const double> u, std::span<const double> v)
{
    if (u.size() != v.size())
        throw std::invalid_argument("independence_score: length mismatch");
    if (u.size() < 2)
        throw std::invalid_argument("independence_score: need at least two observations");
    const VectorXd uu = Eigen::Map<const VectorXd>(u.data(), static_cast<Index>(u.size()));
    const VectorXd vv = Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
    if (is_constant(uu) || is_constant(vv))
        throw std::invalid_argument("independence_score: constant input cannot be standardized");
    return score_features(make_features(standardize(uu)), make_features(standardize(vv)));
}

std::vector<std::size_t> causal_order(const Eigen::MatrixXd &X, const LingamOptions &opts)
{
    const Index n = X.rows();
    const Index p = X.cols();
    if (p == 0)
        throw std::invalid_argument("causal_order: no variables");
    if (n <= p)
        throw std::invalid_argument("causal_order: need more observations than variables");
    if (opts.target && *opts.target >= static_cast<std::size_t>(p))
        throw std::invalid_argument("causal_order: target index out of range");
    for (Index j = 0; j < p; ++j)
        if (is_constant(X.col(j)))
            throw std::invalid_argument("causal_order: column " + std::to_string(j) + " is constant");

    Eigen::MatrixXd R = X.rowwise() - X.colwise().mean();
    VectorXd original_sd(p);
    for (Index j = 0; j < p; ++j)
        original_sd[j] = population_sd(R.col(j));

    std::vector<std::size_t> remaining(static_cast<std::size_t>(p));
    std::iota(remaining.begin(), remaining.end(), std::size_t{0});
    std::vector<std::size_t> order;
    order.reserve(static_cast<std::size_t>(p));

    const auto dependency_error = [&](std::size_t col) {
        std::string msg = "causal_order: rank-deficient data, column " + std::to_string(col) +
                          " is a linear combination of columns {";
        for (std::size_t k = 0; k < order.size(); ++k)
            msg += (k ? "," : "") + std::to_string(order[k]);
        throw NumericalError(msg + "}");
    };

    while (remaining.size() > 1) {
        // Standardized current residuals of every remaining variable.
        std::vector<VectorXd> z(remaining.size());
        for (std::size_t a = 0; a < remaining.size(); ++a) {
            const auto col = static_cast<Index>(remaining[a]);
            const double sd = population_sd(R.col(col));
            if (!(sd > kResidualTol * original_sd[col]))
                dependency_error(remaining[a]);
            z[a] = R.col(col) / sd;
        }

        std::vector<std::size_t> candidates;
        for (std::size_t a = 0; a < remaining.size(); ++a)
            if (!opts.target || remaining[a] != *opts.target)
                candidates.push_back(a);

        // Candidates are scored independently into their own slots and
        // compared in index order, so the choice does not depend on workers.
        std::vector<double> totals(candidates.size(), 0.0);
        parallel_for(candidates.size(), opts.workers, [&](std::size_t c) {
            const std::size_t a = candidates[c];
            const Features fj = make_features(z[a]);
            double total = 0.0;
            for (std::size_t b = 0; b < remaining.size(); ++b) {
                if (b == a)
                    continue;
                const double rho = z[b].dot(z[a]) / static_cast<double>(n);
                VectorXd r = z[b] - rho * z[a];
                const double rsd = population_sd(r);
                if (!(rsd > kResidualTol))
                    throw NumericalError("causal_order: rank-deficient data, columns " +
                                         std::to_string(remaining[b]) + " and " + std::to_string(remaining[a]) +
                                         " are collinear");
                total += score_features(fj, make_features(r / rsd));
            }
            totals[c] = total;
        });
        std::size_t best = candidates.front();
        double best_score = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < candidates.size(); ++c)
            if (totals[c] < best_score) {
                best_score = totals[c];
                best = candidates[c];
            }

        const std::size_t chosen = remaining[best];
        const auto cj = static_cast<Index>(chosen);
        const double var_j = R.col(cj).squaredNorm();
        for (std::size_t i : remaining) {
            if (i == chosen)
                continue;
            const auto ci = static_cast<Index>(i);
            R.col(ci) -= (R.col(ci).dot(R.col(cj)) / var_j) * R.col(cj);
        }
        order.push_back(chosen);
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
    }
    order.push_back(remaining.front());
    return order;
}

Eigen::MatrixXd estimate_effects(const Eigen::MatrixXd &X, const std::vector<std::size_t> &order,
                                 double threshold, std::vector<std::size_t> *jittered)
{
    const Index p = X.cols();
    if (order.size() != static_cast<std::size_t>(p))
        throw std::invalid_argument("estimate_effects: order length does not match column count");
    {
        std::vector<bool> seen(order.size(), false);
        for (std::size_t v : order) {
            if (v >= order.size() || seen[v])
                throw std::invalid_argument("estimate_effects: order is not a permutation");
            seen[v] = true;
        }
    }
    if (!(threshold >= 0.0))
        throw std::invalid_argument("estimate_effects: threshold must be >= 0");

    const Eigen::MatrixXd C = X.rowwise() - X.colwise().mean();
    VectorXd sd(p);
    for (Index j = 0; j < p; ++j) {
        sd[j] = population_sd(C.col(j));
        if (!(sd[j] > 0.0))
            throw NumericalError("estimate_effects: column " + std::to_string(j) + " is constant");
    }
    // Standardized copy; regressions are solved on correlations for conditioning.
    const Eigen::MatrixXd Z = C * sd.cwiseInverse().asDiagonal();
    const auto nobs = static_cast<double>(X.rows());

    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t k = 1; k < order.size(); ++k) {
        const auto target = static_cast<Index>(order[k]);
        const auto kk = static_cast<Index>(k);
        Eigen::MatrixXd P(X.rows(), kk);
        for (Index a = 0; a < kk; ++a)
            P.col(a) = Z.col(static_cast<Index>(order[static_cast<std::size_t>(a)]));
        Eigen::MatrixXd G = P.transpose() * P / nobs;
        const VectorXd rhs = P.transpose() * Z.col(target) / nobs;

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        if (lo < 1e-13 * hi) {
            const VectorXd null = eig.eigenvectors().col(0);
            std::string set;
            for (Index a = 0; a < kk; ++a)
                if (std::abs(null[a]) > 0.1)
                    set += (set.empty() ? "" : ",") + std::to_string(order[static_cast<std::size_t>(a)]);
            throw NumericalError("estimate_effects: singular predecessor Gram matrix for variable " +
                                 std::to_string(order[k]) + ", collinear set {" + set + "}");
        }
        if (lo < 1e-10 * hi) {
            G.diagonal().array() += 1e-9;
            if (jittered)
                jittered->push_back(order[k]);
            std::clog << "[causalbeam] warning: near-singular Gram matrix for variable " << order[k]
                      << ", added diagonal jitter 1e-9\n";
        }
        const VectorXd beta_std = G.ldlt().solve(rhs);
        for (Index a = 0; a < kk; ++a) {
            const auto j = static_cast<Index>(order[static_cast<std::size_t>(a)]);
            if (std::abs(beta_std[a]) <= threshold)
                continue;
            E(target, j) = beta_std[a] * sd[target] / sd[j];
        }
    }
    return E;
}

CausalGraph discover(const Eigen::MatrixXd &X, std::size_t target, double threshold)
{
    if (target >= static_cast<std::size_t>(X.cols()))
        throw std::invalid_argument("discover: target index out of range");
    CausalGraph g;
    g.order = causal_order(X, LingamOptions{target});
    g.effects = estimate_effects(X, g.order, threshold, &g.jittered);
    g.effects.col(static_cast<Index>(target)).setZero();
    g.threshold = threshold;
    g.target = target;
    g.validate();
    return g;
}

namespace {
constexpr std::string_view kGraphMagic = "causalbeam-graph 1";
}

std::string format_graph(const CausalGraph &g)
{
    g.validate();
    std::string out(kGraphMagic);
    out += "\np " + std::to_string(g.p());
    out += "\ntarget " + std::to_string(g.target);
    out += "\nthreshold " + textio::format_double(g.threshold);
    out += "\norder";
    for (std::size_t v : g.order)
        out += " " + std::to_string(v);
    out += "\njittered";
    for (std::size_t v : g.jittered)
        out += " " + std::to_string(v);
    out += "\neffects\n";
    for (Index i = 0; i < g.effects.rows(); ++i) {
        for (Index j = 0; j < g.effects.cols(); ++j) {
            if (j)
                out += ',';
            out += textio::format_double(g.effects(i, j));
        }
        out += '\n';
    }
    return out;
}

CausalGraph parse_graph(const std::string &text)
{
    textio::LineReader in(text);
    const std::string_view magic = in.expect_line();
    if (magic != kGraphMagic)
        throw ParseError("expected '" + std::string(kGraphMagic) + "', found '" + std::string(magic) + "'", 1);
    CausalGraph g;
    const std::size_t p = textio::parse_uint(in.expect_field("p"), in.line_number());
    if (p == 0)
        throw ParseError("p must be >= 1", in.line_number());
    g.target = textio::parse_uint(in.expect_field("target"), in.line_number());
    g.threshold = textio::parse_double(in.expect_field("threshold"), in.line_number());
    const auto parse_list = [&](std::string_view s) {
        std::vector<std::size_t> v;
        if (s.empty())
            return v;
        for (std::string_view tok : textio::split(s, ' '))
            v.push_back(textio::parse_uint(tok, in.line_number()));
        return v;
    };
    g.order = parse_list(in.expect_field("order"));
    if (g.order.size() != p)
        throw ParseError("order has " + std::to_string(g.order.size()) + " entries, expected " +
                             std::to_string(p),
                         in.line_number());
    g.jittered = parse_list(in.expect_field("jittered"));
    if (in.expect_line() != "effects")
        throw ParseError("expected 'effects'", in.line_number());
    g.effects.resize(static_cast<Index>(p), static_cast<Index>(p));
    for (std::size_t i = 0; i < p; ++i) {
        const std::string_view line = in.expect_line();
        const auto fields = textio::split(line, ',');
        if (fields.size() != p)
            throw ParseError("effect row " + std::to_string(i) + ": expected " + std::to_string(p) +
                                 " values, found " + std::to_string(fields.size()),
                             in.line_number());
        for (std::size_t j = 0; j < p; ++j)
            g.effects(static_cast<Index>(i), static_cast<Index>(j)) =
                textio::parse_double(fields[j], in.line_number());
    }
    try {
        g.validate();
    } catch (const std::invalid_argument &e) {
        throw ParseError(e.what(), in.line_number());
    }
    return g;
}

void save_graph(const CausalGraph &g, const std::string &path)
{
    textio::write_file(path, format_graph(g));
}

CausalGraph load_graph(const std::string &path)
{
    return parse_graph(textio::read_file(path));
}

} // namespace causalbeam
