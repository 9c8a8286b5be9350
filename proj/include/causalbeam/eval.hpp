// SPDX-License-Identifier: Apache-2.0
//
// Metrics and the benchmark harness: top-k accuracy, effective spectral
// efficiency, sweep/feedback overhead, selection runtime and the
// method x m_tilde report.

#pragma once

#include "causalbeam/lingam.hpp"
#include "causalbeam/mlp.hpp"
#include "causalbeam/scene.hpp"
#include "causalbeam/selection.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace causalbeam {

struct SeConfig {
    double t_frame = 10e-3;  // seconds
    double t_slot = 0.1e-3;  // seconds per swept beam
    double t_predict = 0.0;  // seconds
    std::size_t k = 1;       // top-k refinement

    void validate() const;
    double t_ia(std::size_t n_b) const { return static_cast<double>(n_b) * t_slot + t_predict; }
};

/// ((t_frame - (n_b*t_slot + t_predict)) / t_frame) * log2(1 + snr).
/// Throws std::invalid_argument when the alignment time exceeds the frame.
double effective_se(double snr_linear, std::size_t n_b, const SeConfig &cfg);

struct Overhead {
    std::uint64_t sweep = 0;
    std::uint64_t feedback = 0;
    bool operator==(const Overhead &) const = default;
};

/// sweep = m + N_U*k*1{k>1}, feedback = N_U*m + N_U*1{k>1}.
Overhead overhead(std::uint64_t m_tilde, std::uint64_t n_users, std::uint64_t k);

/// Fraction of rows in `split` whose label is among the model's top-k.
double top_k_accuracy(const MlpModel &m, const Dataset &d, Split split,
                      const std::vector<std::size_t> &subset, std::size_t k);

enum class BenchMethod { causal, correlation, shapley, random, exhaustive, quantized_mrt };

std::string_view to_string(BenchMethod m);
BenchMethod parse_bench_method(std::string_view s);
bool is_model_based(BenchMethod m);

struct EvalConfig {
    SeConfig se;
    TrainConfig train;
    double threshold = 0.05;
    ShapleyOptions shapley;
    unsigned mrt_phase_bits = 3;
    std::size_t oversampling = 4;
    /// UEs counted by the overhead model; 0 = number of test-split rows.
    std::size_t overhead_users = 0;
    std::uint64_t seed = 1;
    std::size_t workers = 0;
};

struct ReportRow {
    BenchMethod method = BenchMethod::causal;
    std::size_t m_tilde = 0;
    std::size_t rep = 0;
    std::size_t n_b = 0;
    double top1 = 0.0; // NaN for methods without a beam classifier decision
    double top2 = 0.0;
    double mean_se = 0.0;
    double mean_snr_db = 0.0;
    Overhead counts;
    double select_seconds = 0.0;
    double prereq_seconds = 0.0;
    bool perfect_csi = false;
    bool ia_exceeds_frame = false;
    std::vector<std::size_t> selected;
};

struct BenchReport {
    std::vector<ReportRow> rows;
    std::uint64_t seed = 0;
    std::string machine;
};

/// Mean of the per-UE effective SE over the test split when each UE is served
/// by the best of `candidates[u]` (one candidate list per test row).
struct LinkQuality {
    double mean_se = 0.0;
    double mean_snr_db = 0.0;
    bool ia_exceeds_frame = false;
};
LinkQuality link_quality(const Dataset &d, const Codebook &narrow,
                         const std::vector<std::vector<std::size_t>> &candidates, std::size_t n_b,
                         const SeConfig &cfg);

/// Holds the dataset and everything expensive that several rows share: the
/// causal graph, the full-input model and its Shapley ranking.
class BenchContext {
  public:
    BenchContext(const Dataset &d, EvalConfig cfg);

    const Dataset &dataset() const noexcept { return d_; }
    const EvalConfig &config() const noexcept { return cfg_; }
    const Codebook &narrow() const noexcept { return narrow_; }

    const CausalGraph &graph();
    double graph_seconds();
    const TrainResult &full_model();
    double full_model_seconds();
    const ShapleyRanking &shapley();

    SelectionResult select(BenchMethod method, std::size_t m_tilde, std::size_t rep = 0);

  private:
    const Dataset &d_;
    EvalConfig cfg_;
    Codebook narrow_;
    std::optional<CausalGraph> graph_;
    double graph_seconds_ = 0.0;
    std::optional<TrainResult> full_;
    double full_seconds_ = 0.0;
    std::optional<ShapleyRanking> shapley_;
};

/// Selection, retraining on the reduced input, accuracy, SE and overhead for
/// one (method, m_tilde). `rep` varies the random subset.
ReportRow evaluate_method(BenchContext &ctx, BenchMethod method, std::size_t m_tilde,
                          std::size_t rep = 0);

/// Rows for every m in `m_values`. Model-based rows run in parallel; the
/// context's shared artifacts are prepared first.
BenchReport sweep_m_tilde(BenchContext &ctx, BenchMethod method,
                          const std::vector<std::size_t> &m_values);

BenchReport run_bench(BenchContext &ctx, const std::vector<BenchMethod> &methods,
                      const std::vector<std::size_t> &m_values);

struct TimingRow {
    SelectMethod method;
    double select_seconds = 0.0;  // the selection itself
    double prereq_seconds = 0.0;  // model training it depends on (Shapley only)
};

/// Wall-clock of each selection method on the same data, freshly run.
std::vector<TimingRow> time_selection(const Dataset &d, const std::vector<SelectMethod> &methods,
                                      std::size_t m_tilde, const EvalConfig &cfg);

/// Machine descriptor for report honesty (hostname, CPU model, thread count).
std::string machine_descriptor();

std::string format_report_csv(const BenchReport &r);
std::string format_report_json(const BenchReport &r, const std::map<std::string, std::string> &config);

} // namespace causalbeam
