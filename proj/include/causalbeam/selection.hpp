// SPDX-License-Identifier: Apache-2.0
//
// Sensing-beam selection: the causal graph based selector and the baselines
// it is compared against (correlation ranking, sampled Shapley, random).

#pragma once

#include "causalbeam/lingam.hpp"
#include "causalbeam/mlp.hpp"
#include "causalbeam/scene.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace causalbeam {

enum class SelectMethod { causal, correlation, shapley, random };

std::string_view to_string(SelectMethod m);
SelectMethod parse_select_method(std::string_view s);

struct SelectionResult {
    SelectMethod method = SelectMethod::causal;
    std::vector<std::size_t> selected; // ordered, unique, all < m_w
    std::vector<std::size_t> parents;  // members of `selected` that are direct parents of the target
    double elapsed_seconds = 0.0;

    std::size_t m_tilde() const noexcept { return selected.size(); }
    void validate(std::size_t m_w) const;
};

/// {i : E[target, i] != 0}, ascending.
std::vector<std::size_t> direct_parents(const CausalGraph &g, std::size_t target);

struct Connectivity {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t total = 0;
};

/// In/out/total nonzero-edge counts for every node of the graph.
std::vector<Connectivity> connectivity(const CausalGraph &g);

/// Parents of the target ordered by |E[target, i]| (descending), then the
/// remaining beams by descending total connectivity (lower index first on
/// ties) until m_tilde beams are chosen. When there are more parents than
/// m_tilde the weakest parents are dropped. The target is never selectable.
SelectionResult causal_select(const CausalGraph &g, std::size_t target, std::size_t m_tilde);

/// Discovery on the training split followed by causal_select; elapsed covers both.
SelectionResult select_causal(const Dataset &d, std::size_t m_tilde, double threshold,
                              CausalGraph *graph_out = nullptr);

/// Top m_tilde features by |Pearson(x_i, y)| on the training split.
SelectionResult correlation_select(const Dataset &d, std::size_t m_tilde);

/// value(batch, labels) -> one value per row.
using ValueFunction =
    std::function<Eigen::VectorXd(const Eigen::MatrixXd &, const std::vector<std::size_t> &)>;

struct ShapleyOptions {
    std::size_t n_perms = 256;
    std::uint64_t seed = 1;
    std::size_t workers = 0;
};

/// Permutation-sampling Shapley values. Absent features take the background
/// value. Returns a rows(X) x cols(X) matrix of per-sample attributions,
/// averaged over the sampled permutations. Identical for any worker count.
Eigen::MatrixXd shapley_values(const ValueFunction &value, const Eigen::MatrixXd &X,
                               const std::vector<std::size_t> &labels,
                               const Eigen::VectorXd &background, const ShapleyOptions &opts);

/// Value function: the model's probability of the labelled class.
ValueFunction correct_class_probability(const MlpModel &model);

struct ShapleyRanking {
    SelectionResult selection;
    Eigen::VectorXd importance; // mean |attribution| per feature
};

/// Ranks all m_w features of a model trained on the full input using the
/// validation split as explained samples and training-split feature means as
/// background.
ShapleyRanking shapley_select(const MlpModel &model, const Dataset &d, std::size_t m_tilde,
                              const ShapleyOptions &opts);

SelectionResult random_select(std::size_t m_w, std::size_t m_tilde, std::uint64_t seed);

std::string format_selection(const SelectionResult &s);
SelectionResult parse_selection(const std::string &text);
void save_selection(const SelectionResult &s, const std::string &path);
SelectionResult load_selection(const std::string &path);

} // namespace causalbeam
