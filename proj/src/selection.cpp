// SPDX-License-Identifier: Apache-2.0
#include "causalbeam/selection.hpp"

#include "causalbeam/errors.hpp"
#include "causalbeam/parallel.hpp"
#include "causalbeam/rng.hpp"
#include "causalbeam/textio.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace causalbeam {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Indices sorted by descending score, lower index first on ties.
std::vector<std::size_t> rank_descending(const VectorXd &score)
{
    std::vector<std::size_t> idx(static_cast<std::size_t>(score.size()));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return score[static_cast<Index>(a)] > score[static_cast<Index>(b)];
    });
    return idx;
}

void check_budget(std::size_t m_tilde, std::size_t m_w)
{
    if (m_tilde < 1 || m_tilde > m_w)
        throw std::invalid_argument("m_tilde must be in [1, " + std::to_string(m_w) + "], got " +
                                    std::to_string(m_tilde));
}

} // namespace

std::string_view to_string(SelectMethod m)
{
    switch (m) {
    case SelectMethod::causal: return "causal";
    case SelectMethod::correlation: return "correlation";
    case SelectMethod::shapley: return "shapley";
    case SelectMethod::random: return "random";
    }
    return "?";
}

SelectMethod parse_select_method(std::string_view s)
{
    for (SelectMethod m : {SelectMethod::causal, SelectMethod::correlation, SelectMethod::shapley,
                           SelectMethod::random})
        if (s == to_string(m))
            return m;
    throw std::invalid_argument("unknown selection method '" + std::string(s) + "'");
}

void SelectionResult::validate(std::size_t m_w) const
{
    check_budget(selected.size(), m_w);
    std::vector<bool> seen(m_w, false);
    for (std::size_t i : selected) {
        if (i >= m_w)
            throw std::invalid_argument("selection: index " + std::to_string(i) + " out of range");
        if (seen[i])
            throw std::invalid_argument("selection: duplicate index " + std::to_string(i));
        seen[i] = true;
    }
    for (std::size_t p : parents)
        if (p >= m_w || !seen[p])
            throw std::invalid_argument("selection: parent " + std::to_string(p) + " not in the selected set");
}

std::vector<std::size_t> direct_parents(const CausalGraph &g, std::size_t target)
{
    if (target >= g.p())
        throw std::invalid_argument("direct_parents: target out of range");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < g.p(); ++i)
        if (g.effects(static_cast<Index>(target), static_cast<Index>(i)) != 0.0)
            out.push_back(i);
    return out;
}

std::vector<Connectivity> connectivity(const CausalGraph &g)
{
    const std::size_t p = g.p();
    std::vector<Connectivity> c(p);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j)
            if (g.effects(static_cast<Index>(i), static_cast<Index>(j)) != 0.0) {
                ++c[i].in;
                ++c[j].out;
            }
    for (Connectivity &x : c)
        x.total = x.in + x.out;
    return c;
}

SelectionResult causal_select(const CausalGraph &g, std::size_t target, std::size_t m_tilde)
{
    const std::size_t p = g.p();
    if (target >= p)
        throw std::invalid_argument("causal_select: target out of range");
    check_budget(m_tilde, p - 1);

    std::vector<std::size_t> parents = direct_parents(g, target);
    std::stable_sort(parents.begin(), parents.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(g.effects(static_cast<Index>(target), static_cast<Index>(a))) >
               std::abs(g.effects(static_cast<Index>(target), static_cast<Index>(b)));
    });
    if (parents.size() > m_tilde)
        parents.resize(m_tilde);

    SelectionResult r;
    r.method = SelectMethod::causal;
    r.selected = parents;
    r.parents = parents;

    const auto conn = connectivity(g);
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < p; ++i)
        if (i != target && std::find(parents.begin(), parents.end(), i) == parents.end())
            pool.push_back(i);
    std::stable_sort(pool.begin(), pool.end(),
                     [&](std::size_t a, std::size_t b) { return conn[a].total > conn[b].total; });
    for (std::size_t i = 0; r.selected.size() < m_tilde; ++i)
        r.selected.push_back(pool[i]);
    return r;
}

SelectionResult select_causal(const Dataset &d, std::size_t m_tilde, double threshold, CausalGraph *graph_out)
{
    check_budget(m_tilde, d.m_w);
    const auto t0 = std::chrono::steady_clock::now();
    const auto rows = d.indices(Split::train);
    MatrixXd X(static_cast<Index>(rows.size()), static_cast<Index>(d.m_w + 1));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        X.row(static_cast<Index>(i)).head(static_cast<Index>(d.m_w)) = d.rssi.row(static_cast<Index>(rows[i]));
        X(static_cast<Index>(i), static_cast<Index>(d.m_w)) = static_cast<double>(d.labels[rows[i]]);
    }
    CausalGraph g = discover(X, d.m_w, threshold);
    SelectionResult r = causal_select(g, d.m_w, m_tilde);
    r.elapsed_seconds = seconds_since(t0);
    if (graph_out)
        *graph_out = std::move(g);
    return r;
}

SelectionResult correlation_select(const Dataset &d, std::size_t m_tilde)
{
    check_budget(m_tilde, d.m_w);
    const auto t0 = std::chrono::steady_clock::now();
    const auto rows = d.indices(Split::train);
    if (rows.size() < 2)
        throw std::invalid_argument("correlation_select: need at least two training rows");
    std::vector<std::size_t> all(d.m_w);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const MatrixXd X = gather_features(d, rows, all);
    VectorXd y(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        y[static_cast<Index>(i)] = static_cast<double>(d.labels[rows[i]]);

    const VectorXd yc = y.array() - y.mean();
    const double ny = yc.norm();
    VectorXd score = VectorXd::Zero(static_cast<Index>(d.m_w));
    for (Index j = 0; j < X.cols(); ++j) {
        const VectorXd xc = X.col(j).array() - X.col(j).mean();
        const double nx = xc.norm();
        // A constant column (or constant label) carries no linear information.
        if (nx > 0.0 && ny > 0.0)
            score[j] = std::abs(xc.dot(yc) / (nx * ny));
    }
    SelectionResult r;
    r.method = SelectMethod::correlation;
    r.selected = rank_descending(score);
    r.selected.resize(m_tilde);
    r.elapsed_seconds = seconds_since(t0);
    return r;
}

MatrixXd shapley_values(const ValueFunction &value, const MatrixXd &X, const std::vector<std::size_t> &labels,
                        const VectorXd &background, const ShapleyOptions &opts)
{
    const Index n = X.rows();
    const Index m = X.cols();
    if (background.size() != m)
        throw std::invalid_argument("shapley_values: background length does not match feature count");
    if (static_cast<Index>(labels.size()) != n)
        throw std::invalid_argument("shapley_values: label count does not match rows");
    if (opts.n_perms == 0)
        throw std::invalid_argument("shapley_values: n_perms must be >= 1");

    // Permutations are grouped into fixed blocks; every block accumulates in
    // permutation order and blocks are summed in block order, so the result
    // does not depend on how many workers ran.
    constexpr std::size_t kBlock = 8;
    const std::size_t n_blocks = (opts.n_perms + kBlock - 1) / kBlock;
    std::vector<MatrixXd> partial(n_blocks);
    parallel_for(n_blocks, opts.workers, [&](std::size_t b) {
        MatrixXd acc = MatrixXd::Zero(n, m);
        std::vector<Index> perm(static_cast<std::size_t>(m));
        const std::size_t end = std::min(opts.n_perms, (b + 1) * kBlock);
        for (std::size_t k = b * kBlock; k < end; ++k) {
            std::iota(perm.begin(), perm.end(), Index{0});
            Rng rng = make_stream(opts.seed, "shapley", k);
            std::shuffle(perm.begin(), perm.end(), rng);
            MatrixXd Z = background.transpose().replicate(n, 1);
            VectorXd prev = value(Z, labels);
            for (Index j : perm) {
                Z.col(j) = X.col(j);
                VectorXd cur = value(Z, labels);
                acc.col(j) += cur - prev;
                prev = std::move(cur);
            }
        }
        partial[b] = std::move(acc);
    });
    MatrixXd phi = MatrixXd::Zero(n, m);
    for (const MatrixXd &p : partial)
        phi += p;
    return phi / static_cast<double>(opts.n_perms);
}

ValueFunction correct_class_probability(const MlpModel &model)
{
    return [model](const MatrixXd &X, const std::vector<std::size_t> &labels) {
        const MatrixXd probs = forward_batch(model, X);
        VectorXd v(probs.rows());
        for (Index i = 0; i < probs.rows(); ++i)
            v[i] = probs(i, static_cast<Index>(labels[static_cast<std::size_t>(i)]));
        return v;
    };
}

ShapleyRanking shapley_select(const MlpModel &model, const Dataset &d, std::size_t m_tilde,
                              const ShapleyOptions &opts)
{
    if (!model.trained)
        throw std::invalid_argument("shapley_select: model is not trained");
    if (model.input_dim() != d.m_w)
        throw std::invalid_argument("shapley_select: model must take all " + std::to_string(d.m_w) + " inputs");
    check_budget(m_tilde, d.m_w);

    std::vector<std::size_t> all(d.m_w);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto tr = d.indices(Split::train);
    const auto va = d.indices(Split::val);
    if (tr.empty() || va.empty())
        throw std::invalid_argument("shapley_select: needs non-empty train and validation splits");
    const VectorXd background = gather_features(d, tr, all).colwise().mean().transpose();
    const MatrixXd X = gather_features(d, va, all);
    const auto y = gather_labels(d, va);

    const auto t0 = std::chrono::steady_clock::now();
    const MatrixXd phi = shapley_values(correct_class_probability(model), X, y, background, opts);
    ShapleyRanking out;
    out.importance = phi.cwiseAbs().colwise().mean().transpose();
    out.selection.method = SelectMethod::shapley;
    out.selection.selected = rank_descending(out.importance);
    out.selection.selected.resize(m_tilde);
    out.selection.elapsed_seconds = seconds_since(t0);
    return out;
}

SelectionResult random_select(std::size_t m_w, std::size_t m_tilde, std::uint64_t seed)
{
    check_budget(m_tilde, m_w);
    std::vector<std::size_t> idx(m_w);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng = make_stream(seed, "random");
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(m_tilde);
    std::sort(idx.begin(), idx.end());
    SelectionResult r;
    r.method = SelectMethod::random;
    r.selected = std::move(idx);
    return r;
}

namespace {

constexpr std::string_view kSelectionMagic = "causalbeam-selection 1";

std::string join_indices(const std::vector<std::size_t> &v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::vector<std::size_t> parse_indices(std::string_view s, std::size_t line)
{
    std::vector<std::size_t> out;
    if (s.empty())
        return out;
    for (std::string_view f : textio::split(s, ','))
        out.push_back(textio::parse_uint(f, line));
    return out;
}

} // namespace

std::string format_selection(const SelectionResult &s)
{
    std::string out(kSelectionMagic);
    out += "\nmethod " + std::string(to_string(s.method));
    out += "\nm_tilde " + std::to_string(s.m_tilde());
    out += "\nselected " + join_indices(s.selected);
    out += "\nparents " + join_indices(s.parents);
    out += "\nelapsed_seconds " + textio::format_double(s.elapsed_seconds);
    out += '\n';
    return out;
}

SelectionResult parse_selection(const std::string &text)
{
    textio::LineReader in(text);
    const std::string_view magic = in.expect_line();
    if (magic != kSelectionMagic)
        throw ParseError("expected '" + std::string(kSelectionMagic) + "', found '" + std::string(magic) + "'", 1);
    SelectionResult r;
    try {
        r.method = parse_select_method(in.expect_field("method"));
    } catch (const std::invalid_argument &e) {
        throw ParseError(e.what(), in.line_number());
    }
    const std::size_t m = textio::parse_uint(in.expect_field("m_tilde"), in.line_number());
    r.selected = parse_indices(in.expect_field("selected"), in.line_number());
    if (r.selected.size() != m)
        throw ParseError("m_tilde is " + std::to_string(m) + " but " + std::to_string(r.selected.size()) +
                             " indices are listed",
                         in.line_number());
    r.parents = parse_indices(in.expect_field("parents"), in.line_number());
    r.elapsed_seconds = textio::parse_double(in.expect_field("elapsed_seconds"), in.line_number());
    return r;
}

void save_selection(const SelectionResult &s, const std::string &path)
{
    textio::write_file(path, format_selection(s));
}

SelectionResult load_selection(const std::string &path)
{
    return parse_selection(textio::read_file(path));
}

} // namespace causalbeam
