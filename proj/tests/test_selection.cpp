// SPDX-License-Identifier: Apache-2.0
#include "causalbeam/errors.hpp"
#include "causalbeam/selection.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <set>

using namespace causalbeam;
using Catch::Matchers::WithinAbs;

namespace {

/// Graph over p nodes with a given effect matrix and the identity order (the
/// selectors only read `effects`).
CausalGraph graph_of(const Eigen::MatrixXd &E, std::size_t target)
{
    CausalGraph g;
    g.effects = E;
    g.order.resize(static_cast<std::size_t>(E.rows()));
    std::iota(g.order.begin(), g.order.end(), std::size_t{0});
    g.target = target;
    return g;
}

/// Minimal dataset around a feature matrix and labels; every row in `s`.
Dataset dataset_of(const Eigen::MatrixXd &X, const std::vector<std::size_t> &y, std::size_t classes,
                   std::vector<Split> split = {})
{
    Dataset d;
    d.m_w = static_cast<std::size_t>(X.cols());
    d.y_classes = classes;
    d.rssi = X;
    d.labels = y;
    d.ue.resize(y.size());
    std::iota(d.ue.begin(), d.ue.end(), std::size_t{0});
    d.optimal_gain = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(y.size()));
    d.split = split.empty() ? std::vector<Split>(y.size(), Split::train) : split;
    d.validate();
    return d;
}

double sd(const std::vector<double> &v)
{
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v)
        s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

} // namespace

TEST_CASE("direct parents are the nonzero entries of the target row")
{
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(4, 4);
    CHECK(direct_parents(graph_of(E, 3), 3).empty());
    E(3, 0) = 0.2;
    E(3, 2) = -0.1;
    CHECK(direct_parents(graph_of(E, 3), 3) == std::vector<std::size_t>{0, 2});
    CHECK_THROWS_AS(direct_parents(graph_of(E, 3), 4), std::invalid_argument);

    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(33, 33);
    for (Eigen::Index i = 16; i <= 21; ++i)
        F(32, i) = 0.1 * static_cast<double>(i - 15);
    CHECK(direct_parents(graph_of(F, 32), 32) == std::vector<std::size_t>{16, 17, 18, 19, 20, 21});
}

TEST_CASE("connectivity counts")
{
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(3, 3);
    E(1, 0) = 0.5;
    E(2, 1) = -0.4;
    const auto c = connectivity(graph_of(E, 2));
    CHECK(c[0].total == 1);
    CHECK(c[1].total == 2);
    CHECK(c[2].total == 1);
    CHECK(c[1].in == 1);
    CHECK(c[1].out == 1);
    for (const auto &x : connectivity(graph_of(Eigen::MatrixXd::Zero(5, 5), 4)))
        CHECK(x.total == 0);

    Rng rng(3);
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(20, 20);
    std::uniform_int_distribution<int> idx(0, 19);
    int placed = 0;
    while (placed < 50) {
        const int i = idx(rng), j = idx(rng);
        if (i > j && R(i, j) == 0.0) {
            R(i, j) = 1.0 + i;
            ++placed;
        }
    }
    const auto rc = connectivity(graph_of(R, 19));
    std::size_t sum = 0;
    for (int v = 0; v < 20; ++v) {
        std::size_t in = 0, out = 0;
        for (int k = 0; k < 20; ++k) {
            in += R(v, k) != 0.0;
            out += R(k, v) != 0.0;
        }
        CHECK(rc[static_cast<std::size_t>(v)].in == in);
        CHECK(rc[static_cast<std::size_t>(v)].out == out);
        CHECK(rc[static_cast<std::size_t>(v)].total == in + out);
        sum += in + out;
    }
    CHECK(sum == 100);
}

TEST_CASE("causal selection: parents only, ordered by strength")
{
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(9, 9);
    E(8, 2) = 0.2;
    E(8, 5) = -0.6;
    const auto r = causal_select(graph_of(E, 8), 8, 2);
    CHECK(r.selected == std::vector<std::size_t>{5, 2});
    CHECK(r.parents == std::vector<std::size_t>{5, 2});
    CHECK(r.method == SelectMethod::causal);
}

TEST_CASE("causal selection: fill by connectivity, ties to the lower index")
{
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(9, 9);
    E(8, 2) = 0.5;
    // Node 7: three edges; node 0: two; nodes 1, 3: one each.
    E(7, 0) = 0.3;
    E(7, 1) = 0.3;
    E(7, 3) = 0.3;
    E(4, 0) = 0.3;
    const auto r = causal_select(graph_of(E, 8), 8, 3);
    CHECK(r.selected == std::vector<std::size_t>{2, 7, 0});
    CHECK(r.parents == std::vector<std::size_t>{2});
    const auto r5 = causal_select(graph_of(E, 8), 8, 5);
    CHECK(r5.selected == std::vector<std::size_t>{2, 7, 0, 1, 3});
    // The target itself is never selectable even when it is highly connected.
    const auto all = causal_select(graph_of(E, 8), 8, 8);
    CHECK(std::set<std::size_t>(all.selected.begin(), all.selected.end()).count(8) == 0);
    CHECK(all.selected.size() == 8);
}

TEST_CASE("causal selection: excess parents are trimmed weakest first")
{
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(6, 6);
    E(5, 1) = 0.1;
    E(5, 2) = 0.4;
    E(5, 3) = -0.3;
    E(5, 4) = 0.2;
    const auto r = causal_select(graph_of(E, 5), 5, 2);
    CHECK(r.selected == std::vector<std::size_t>{2, 3});
    CHECK(r.parents == std::vector<std::size_t>{2, 3});
    CHECK_THROWS_AS(causal_select(graph_of(E, 5), 5, 0), std::invalid_argument);
    CHECK_THROWS_AS(causal_select(graph_of(E, 5), 5, 6), std::invalid_argument);
}

TEST_CASE("causal selection is deterministic and invariant to rescaling E")
{
    Rng rng(17);
    std::normal_distribution<double> g;
    std::bernoulli_distribution keep(0.3);
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(12, 12);
    for (Eigen::Index i = 1; i < 12; ++i)
        for (Eigen::Index j = 0; j < i; ++j)
            if (keep(rng))
                E(i, j) = g(rng);
    E.col(11).setZero();
    for (std::size_t m = 1; m <= 11; ++m) {
        const auto a = causal_select(graph_of(E, 11), 11, m);
        CHECK(a.selected == causal_select(graph_of(E, 11), 11, m).selected);
        CHECK(a.selected == causal_select(graph_of(E * 3.7, 11), 11, m).selected);
        CHECK(a.selected.size() == m);
        CHECK_NOTHROW(a.validate(11));
    }
}

TEST_CASE("correlation ranking")
{
    Rng rng(2);
    std::normal_distribution<double> g;
    const std::size_t n = 10000;
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 4);
    std::vector<std::size_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = i % 10;
        const auto r = static_cast<Eigen::Index>(i);
        const double yy = static_cast<double>(y[i]);
        X(r, 0) = std::abs(g(rng));             // noise
        X(r, 1) = std::abs(yy + 8.0 * g(rng));  // weak, |rho| > 0.2
        X(r, 2) = yy;                           // the label itself
        X(r, 3) = 5.0;                          // constant
    }
    const Dataset d = dataset_of(X, y, 10);
    const auto r = correlation_select(d, 4);
    CHECK(r.selected == std::vector<std::size_t>{2, 1, 0, 3});
    CHECK(correlation_select(d, 1).selected == std::vector<std::size_t>{2});
    CHECK_THROWS_AS(correlation_select(d, 5), std::invalid_argument);
}

TEST_CASE("Shapley values of a linear value function are exact")
{
    const Eigen::Vector3d w(0.5, -2.0, 1.5), b(0.1, 0.2, -0.3);
    const ValueFunction value = [&](const Eigen::MatrixXd &Z, const std::vector<std::size_t> &) {
        return Eigen::VectorXd(Z * w);
    };
    Eigen::MatrixXd X(4, 3);
    X << 1, 2, 3, -1, 0, 1, 0.3, 0.2, 0.1, 5, -5, 0;
    const std::vector<std::size_t> labels(4, 0);
    const Eigen::MatrixXd phi = shapley_values(value, X, labels, b, ShapleyOptions{256, 1, 1});
    for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 3; ++j)
            CHECK_THAT(phi(i, j), WithinAbs(w[j] * (X(i, j) - b[j]), 1e-12));
    // Efficiency: attributions sum to v(x) - v(background).
    for (Eigen::Index i = 0; i < 4; ++i)
        CHECK_THAT(phi.row(i).sum(), WithinAbs(X.row(i).dot(w) - b.dot(w), 1e-12));
}

TEST_CASE("Shapley values: constant model, worker invariance, error scaling")
{
    const ValueFunction constant = [](const Eigen::MatrixXd &Z, const std::vector<std::size_t> &) {
        return Eigen::VectorXd(Eigen::VectorXd::Constant(Z.rows(), 0.25));
    };
    Eigen::MatrixXd X = Eigen::MatrixXd::Random(5, 4);
    const std::vector<std::size_t> labels(5, 0);
    CHECK(shapley_values(constant, X, labels, Eigen::VectorXd::Zero(4), {32, 1, 1}).isZero(0.0));

    const ValueFunction inter = [](const Eigen::MatrixXd &Z, const std::vector<std::size_t> &) {
        return Eigen::VectorXd(Z.col(0).cwiseProduct(Z.col(1)) + Z.col(2).cwiseProduct(Z.col(3)) * 0.5);
    };
    const Eigen::MatrixXd a = shapley_values(inter, X, labels, Eigen::VectorXd::Ones(4), {50, 3, 1});
    const Eigen::MatrixXd b = shapley_values(inter, X, labels, Eigen::VectorXd::Ones(4), {50, 3, 4});
    CHECK(a == b);

    // Doubling n_perms shrinks the Monte-Carlo spread by about sqrt(2).
    Eigen::MatrixXd x1(1, 4);
    x1 << 2.0, 3.0, 1.0, 1.0;
    std::vector<double> s64, s128;
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        s64.push_back(shapley_values(inter, x1, {0}, Eigen::VectorXd::Zero(4), {64, seed, 1})(0, 0));
        s128.push_back(shapley_values(inter, x1, {0}, Eigen::VectorXd::Zero(4), {128, seed + 1000, 1})(0, 0));
    }
    const double ratio = sd(s64) / sd(s128);
    CHECK(ratio > 1.2);
    CHECK(ratio < 1.7);
    CHECK_THROWS_AS(shapley_values(inter, x1, {0}, Eigen::VectorXd::Zero(3), {8, 1, 1}), std::invalid_argument);
}

TEST_CASE("Shapley selection needs a trained full-input model")
{
    Rng rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t n = 200;
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 3);
    std::vector<std::size_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < 3; ++j)
            X(static_cast<Eigen::Index>(i), j) = u(rng);
        y[i] = X(static_cast<Eigen::Index>(i), 1) > 0.5 ? 1 : 0;
    }
    const Dataset d = dataset_of(X, y, 2, make_splits(n, 1));
    MlpModel m = init_model(3, 2, 1, {8});
    CHECK_THROWS_AS(shapley_select(m, d, 2, {16, 1, 1}), std::invalid_argument);
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.batch_size = 16;
    const TrainResult t = train(d, {0, 1, 2}, cfg);
    const ShapleyRanking r = shapley_select(t.model, d, 1, {64, 1, 1});
    CHECK(r.selection.selected == std::vector<std::size_t>{1});
    CHECK(r.importance.size() == 3);
    CHECK(r.selection.method == SelectMethod::shapley);
    CHECK_THROWS_AS(shapley_select(init_model(2, 2, 1), d, 1, {}), std::invalid_argument);
}

TEST_CASE("random selection")
{
    CHECK(random_select(32, 32, 5).selected.size() == 32);
    CHECK(random_select(32, 13, 5).selected == random_select(32, 13, 5).selected);
    CHECK(random_select(32, 13, 5).selected != random_select(32, 13, 6).selected);
    std::vector<int> freq(32, 0);
    const int draws = 10000;
    for (int s = 0; s < draws; ++s)
        ++freq[random_select(32, 1, static_cast<std::uint64_t>(s)).selected[0]];
    // Multinomial bounds: chi-square with 31 degrees of freedom below its
    // 0.999 quantile, and every cell within a Bonferroni-adjusted 4.5 sigma.
    // A plain 3 sigma per cell would fail a fair sampler ~8% of the time.
    const double p = 1.0 / 32.0, expect = draws * p, sigma = std::sqrt(draws * p * (1 - p));
    double chi2 = 0.0;
    for (int f : freq) {
        chi2 += (f - expect) * (f - expect) / expect;
        CHECK(std::abs(f - expect) <= 4.5 * sigma);
    }
    CHECK(chi2 < 61.1);
    CHECK_THROWS_AS(random_select(32, 0, 1), std::invalid_argument);
}

TEST_CASE("select_causal on a generated dataset")
{
    SceneConfig sc;
    sc.n_users = 600;
    const Dataset d = generate_dataset(sc);
    CausalGraph g;
    const auto r = select_causal(d, 13, 0.05, &g);
    CHECK(r.selected.size() == 13);
    CHECK_NOTHROW(r.validate(d.m_w));
    CHECK(g.p() == 33);
    CHECK(g.order.back() == 32);
    CHECK(r.elapsed_seconds > 0.0);
    CHECK(causal_select(g, 32, 13).selected == r.selected);
}

TEST_CASE("selection file round trip")
{
    SelectionResult s;
    s.method = SelectMethod::correlation;
    s.selected = {4, 1, 9};
    s.parents = {};
    s.elapsed_seconds = 0.1234;
    const SelectionResult t = parse_selection(format_selection(s));
    CHECK(t.method == s.method);
    CHECK(t.selected == s.selected);
    CHECK(t.parents.empty());
    CHECK(t.elapsed_seconds == s.elapsed_seconds);
    s.parents = {9};
    CHECK(parse_selection(format_selection(s)).parents == std::vector<std::size_t>{9});
    CHECK_THROWS_AS(parse_selection("causalbeam-selection 1\nmethod magic\n"), ParseError);
    CHECK_THROWS_AS(parse_selection("causalbeam-selection 1\nmethod causal\nm_tilde 2\nselected 1\n"), ParseError);
    CHECK(parse_select_method("shapley") == SelectMethod::shapley);
}

TEST_CASE("selection validation")
{
    SelectionResult s;
    s.selected = {1, 1};
    CHECK_THROWS_AS(s.validate(4), std::invalid_argument);
    s.selected = {1, 5};
    CHECK_THROWS_AS(s.validate(4), std::invalid_argument);
    s.selected = {1, 2};
    s.parents = {3};
    CHECK_THROWS_AS(s.validate(4), std::invalid_argument);
}
