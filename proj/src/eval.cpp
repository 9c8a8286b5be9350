// SPDX-License-Identifier: Apache-2.0
#include "causalbeam/eval.hpp"

#include "causalbeam/errors.hpp"
#include "causalbeam/parallel.hpp"
#include "causalbeam/rng.hpp"
#include "causalbeam/textio.hpp"

#include <json.hpp>

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace causalbeam {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::size_t> sorted_copy(std::vector<std::size_t> v)
{
    std::sort(v.begin(), v.end());
    return v;
}

} // namespace

void SeConfig::validate() const
{
    if (!(t_frame > 0.0) || !std::isfinite(t_frame))
        throw std::invalid_argument("SeConfig: t_frame must be positive");
    if (!(t_slot >= 0.0) || !(t_predict >= 0.0))
        throw std::invalid_argument("SeConfig: t_slot and t_predict must be >= 0");
    if (k == 0)
        throw std::invalid_argument("SeConfig: k must be >= 1");
}

double effective_se(double snr_linear, std::size_t n_b, const SeConfig &cfg)
{
    cfg.validate();
    if (!(snr_linear >= 0.0))
        throw std::invalid_argument("effective_se: snr must be >= 0");
    const double t_ia = cfg.t_ia(n_b);
    if (t_ia > cfg.t_frame)
        throw std::invalid_argument("effective_se: alignment time " + std::to_string(t_ia) +
                                    " s exceeds the frame " + std::to_string(cfg.t_frame) + " s");
    return (cfg.t_frame - t_ia) / cfg.t_frame * std::log2(1.0 + snr_linear);
}

Overhead overhead(std::uint64_t m_tilde, std::uint64_t n_users, std::uint64_t k)
{
    const std::uint64_t refine = k > 1 ? 1 : 0;
    return {m_tilde + n_users * k * refine, n_users * m_tilde + n_users * refine};
}

double top_k_accuracy(const MlpModel &m, const Dataset &d, Split split, const std::vector<std::size_t> &subset,
                      std::size_t k)
{
    if (k == 0 || k > m.output_dim())
        throw std::invalid_argument("top_k_accuracy: k must be in [1, Y]");
    const auto rows = d.indices(split);
    if (rows.empty())
        throw std::invalid_argument("top_k_accuracy: split is empty");
    const MatrixXd logits = forward_logits(m, gather_features(d, rows, subset));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto top = topk_indices(logits.row(static_cast<Index>(i)).transpose(), k);
        hits += std::find(top.begin(), top.end(), d.labels[rows[i]]) != top.end() ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(rows.size());
}

std::string_view to_string(BenchMethod m)
{
    switch (m) {
    case BenchMethod::causal: return "causal";
    case BenchMethod::correlation: return "correlation";
    case BenchMethod::shapley: return "shapley";
    case BenchMethod::random: return "random";
    case BenchMethod::exhaustive: return "exhaustive";
    case BenchMethod::quantized_mrt: return "quantized_mrt";
    }
    return "?";
}

BenchMethod parse_bench_method(std::string_view s)
{
    for (BenchMethod m : {BenchMethod::causal, BenchMethod::correlation, BenchMethod::shapley, BenchMethod::random,
                          BenchMethod::exhaustive, BenchMethod::quantized_mrt})
        if (s == to_string(m))
            return m;
    throw std::invalid_argument("unknown benchmark method '" + std::string(s) + "'");
}

bool is_model_based(BenchMethod m)
{
    return m != BenchMethod::exhaustive && m != BenchMethod::quantized_mrt;
}

LinkQuality link_quality(const Dataset &d, const Codebook &narrow,
                         const std::vector<std::vector<std::size_t>> &candidates, std::size_t n_b,
                         const SeConfig &cfg)
{
    cfg.validate();
    const auto rows = d.indices(Split::test);
    if (candidates.size() != rows.size())
        throw std::invalid_argument("link_quality: one candidate list per test row is required");
    LinkQuality q;
    q.ia_exceeds_frame = cfg.t_ia(n_b) > cfg.t_frame;
    if (!d.has_channels() || !(d.noise_power > 0.0)) {
        q.mean_se = kNaN;
        q.mean_snr_db = kNaN;
        return q;
    }
    if (narrow.n_bs() != d.n_bs)
        throw std::invalid_argument("link_quality: codebook size does not match the dataset's array");
    double se = 0.0, snr_db = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (candidates[i].empty())
            throw std::invalid_argument("link_quality: empty candidate list");
        const CVector h = d.channel(rows[i]);
        double g = 0.0;
        for (std::size_t c : candidates[i])
            g = std::max(g, beam_gain(h, narrow.vector(c)));
        const double s = g / d.noise_power;
        snr_db += 10.0 * std::log10(std::max(s, 1e-30));
        se += q.ia_exceeds_frame ? 0.0 : effective_se(s, n_b, cfg);
    }
    q.mean_se = se / static_cast<double>(rows.size());
    q.mean_snr_db = snr_db / static_cast<double>(rows.size());
    return q;
}

BenchContext::BenchContext(const Dataset &d, EvalConfig cfg)
    : d_(d), cfg_(std::move(cfg)),
      narrow_(d.has_channels() ? dft_codebook(d.n_bs, cfg_.oversampling)
                               : Codebook(Eigen::MatrixXcd::Ones(1, 1), CodebookKind::narrow_odft))
{
    d_.validate();
    cfg_.se.validate();
    cfg_.train.validate();
    if (d_.has_channels() && narrow_.size() != d_.y_classes)
        throw ConfigError("oversampling " + std::to_string(cfg_.oversampling) + " gives " +
                          std::to_string(narrow_.size()) + " narrow beams but the dataset has " +
                          std::to_string(d_.y_classes) + " classes");
}

const CausalGraph &BenchContext::graph()
{
    if (!graph_) {
        CausalGraph g;
        const auto r = select_causal(d_, 1, cfg_.threshold, &g);
        graph_seconds_ = r.elapsed_seconds;
        graph_ = std::move(g);
    }
    return *graph_;
}

double BenchContext::graph_seconds()
{
    graph();
    return graph_seconds_;
}

const TrainResult &BenchContext::full_model()
{
    if (!full_) {
        std::vector<std::size_t> all(d_.m_w);
        std::iota(all.begin(), all.end(), std::size_t{0});
        const auto t0 = std::chrono::steady_clock::now();
        full_ = train(d_, all, cfg_.train);
        full_seconds_ = seconds_since(t0);
    }
    return *full_;
}

double BenchContext::full_model_seconds()
{
    full_model();
    return full_seconds_;
}

const ShapleyRanking &BenchContext::shapley()
{
    if (!shapley_) {
        ShapleyOptions o = cfg_.shapley;
        o.workers = cfg_.workers;
        shapley_ = shapley_select(full_model().model, d_, d_.m_w, o);
    }
    return *shapley_;
}

SelectionResult BenchContext::select(BenchMethod method, std::size_t m_tilde, std::size_t rep)
{
    switch (method) {
    case BenchMethod::causal: {
        const auto t0 = std::chrono::steady_clock::now();
        SelectionResult r = causal_select(graph(), d_.m_w, m_tilde);
        r.elapsed_seconds = graph_seconds() + seconds_since(t0);
        return r;
    }
    case BenchMethod::correlation:
        return correlation_select(d_, m_tilde);
    case BenchMethod::shapley: {
        if (m_tilde < 1 || m_tilde > d_.m_w)
            throw std::invalid_argument("m_tilde out of range");
        SelectionResult r = shapley().selection;
        r.selected.resize(m_tilde);
        return r;
    }
    case BenchMethod::random:
        return random_select(d_.m_w, m_tilde, derive_seed(cfg_.seed, "random", (m_tilde << 20) | rep));
    default:
        throw std::invalid_argument("select: " + std::string(to_string(method)) + " does not select sensing beams");
    }
}

ReportRow evaluate_method(BenchContext &ctx, BenchMethod method, std::size_t m_tilde, std::size_t rep)
{
    const Dataset &d = ctx.dataset();
    const EvalConfig &cfg = ctx.config();
    const auto test = d.indices(Split::test);
    if (test.empty())
        throw std::invalid_argument("evaluate_method: test split is empty");
    const std::size_t n_users = cfg.overhead_users ? cfg.overhead_users : test.size();
    const std::size_t k = cfg.se.k;

    ReportRow row;
    row.method = method;
    row.rep = rep;
    std::vector<std::vector<std::size_t>> candidates(test.size());

    if (method == BenchMethod::exhaustive) {
        // Noisy sweep over every narrow beam, then pick the strongest reading.
        if (!d.has_channels())
            throw std::invalid_argument("evaluate_method: exhaustive sweep needs channels");
        const std::size_t y = ctx.narrow().size();
        row.m_tilde = y;
        row.n_b = y;
        std::size_t hit1 = 0, hit2 = 0;
        std::normal_distribution<double> gauss(0.0, std::sqrt(d.noise_power / 2.0));
        for (std::size_t i = 0; i < test.size(); ++i) {
            const CVector h = d.channel(test[i]);
            Eigen::VectorXcd r = (h.adjoint() * ctx.narrow().matrix()).transpose();
            if (d.noise_power > 0.0) {
                Rng rng = make_stream(cfg.seed, "exhaustive", d.ue[test[i]]);
                for (Index b = 0; b < r.size(); ++b) {
                    const double re = gauss(rng);
                    const double im = gauss(rng);
                    r[b] += Complex(re, im);
                }
            }
            const VectorXd power = r.cwiseAbs2();
            const auto top = topk_indices(power, std::min<std::size_t>(2, y));
            hit1 += top[0] == d.labels[test[i]] ? 1 : 0;
            hit2 += std::find(top.begin(), top.end(), d.labels[test[i]]) != top.end() ? 1 : 0;
            candidates[i] = {top[0]};
        }
        row.top1 = static_cast<double>(hit1) / static_cast<double>(test.size());
        row.top2 = static_cast<double>(hit2) / static_cast<double>(test.size());
        row.counts = overhead(y, n_users, 1);
    } else if (method == BenchMethod::quantized_mrt) {
        if (!d.has_channels())
            throw std::invalid_argument("evaluate_method: quantized MRT needs channels");
        row.m_tilde = 0;
        row.n_b = 0;
        row.perfect_csi = true;
        row.top1 = kNaN;
        row.top2 = kNaN;
        row.counts = overhead(0, n_users, 1);
        std::vector<double> gains(test.size());
        for (std::size_t i = 0; i < test.size(); ++i) {
            const CVector h = d.channel(test[i]);
            gains[i] = beam_gain(h, quantized_mrt(h, cfg.mrt_phase_bits));
        }
        if (d.noise_power > 0.0) {
            double se = 0.0, snr_db = 0.0;
            for (double g : gains) {
                const double s = g / d.noise_power;
                se += effective_se(s, 0, cfg.se);
                snr_db += 10.0 * std::log10(std::max(s, 1e-30));
            }
            row.mean_se = se / static_cast<double>(gains.size());
            row.mean_snr_db = snr_db / static_cast<double>(gains.size());
        } else {
            row.mean_se = kNaN;
            row.mean_snr_db = kNaN;
        }
        return row;
    } else {
        const SelectionResult sel = ctx.select(method, m_tilde, rep);
        row.m_tilde = m_tilde;
        row.selected = sel.selected;
        row.select_seconds = sel.elapsed_seconds;
        if (method == BenchMethod::shapley)
            row.prereq_seconds = ctx.full_model_seconds();
        // Input order does not matter to the classifier, so equal feature sets
        // train identical models whichever selector produced them.
        const auto features = sorted_copy(sel.selected);
        const MlpModel model = train(d, features, cfg.train).model;
        const MatrixXd logits = forward_logits(model, gather_features(d, test, features));
        const std::size_t kk = std::min(std::max<std::size_t>(k, 2), model.output_dim());
        std::size_t hit1 = 0, hit2 = 0;
        for (std::size_t i = 0; i < test.size(); ++i) {
            const auto top = topk_indices(logits.row(static_cast<Index>(i)).transpose(), kk);
            const std::size_t y = d.labels[test[i]];
            hit1 += top[0] == y ? 1 : 0;
            const auto top2_end = top.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(2, top.size()));
            hit2 += std::find(top.begin(), top2_end, y) != top2_end ? 1 : 0;
            candidates[i].assign(top.begin(), top.begin() + static_cast<std::ptrdiff_t>(std::min(k, top.size())));
        }
        row.top1 = static_cast<double>(hit1) / static_cast<double>(test.size());
        row.top2 = static_cast<double>(hit2) / static_cast<double>(test.size());
        row.n_b = m_tilde + (k > 1 ? k : 0);
        row.counts = overhead(m_tilde, n_users, k);
    }

    const LinkQuality q = link_quality(d, ctx.narrow(), candidates, row.n_b, cfg.se);
    row.mean_se = q.mean_se;
    row.mean_snr_db = q.mean_snr_db;
    row.ia_exceeds_frame = q.ia_exceeds_frame;
    return row;
}

BenchReport sweep_m_tilde(BenchContext &ctx, BenchMethod method, const std::vector<std::size_t> &m_values)
{
    return run_bench(ctx, {method}, m_values);
}

BenchReport run_bench(BenchContext &ctx, const std::vector<BenchMethod> &methods,
                      const std::vector<std::size_t> &m_values)
{
    struct Job {
        BenchMethod method;
        std::size_t m;
    };
    std::vector<Job> jobs;
    for (BenchMethod method : methods) {
        if (is_model_based(method)) {
            for (std::size_t m : m_values) {
                if (m < 1 || m > ctx.dataset().m_w)
                    throw ConfigError("m_tilde grid value " + std::to_string(m) + " outside [1, " +
                                      std::to_string(ctx.dataset().m_w) + "]");
                jobs.push_back({method, m});
            }
        } else {
            jobs.push_back({method, 0});
        }
    }
    // Shared artifacts are built once, before the parallel section, so that
    // workers only read the context.
    for (BenchMethod method : methods) {
        if (method == BenchMethod::causal)
            ctx.graph();
        if (method == BenchMethod::shapley)
            ctx.shapley();
    }

    BenchReport report;
    report.seed = ctx.config().seed;
    report.machine = machine_descriptor();
    report.rows.resize(jobs.size());
    parallel_for(jobs.size(), ctx.config().workers,
                 [&](std::size_t j) { report.rows[j] = evaluate_method(ctx, jobs[j].method, jobs[j].m); });
    return report;
}

std::vector<TimingRow> time_selection(const Dataset &d, const std::vector<SelectMethod> &methods,
                                      std::size_t m_tilde, const EvalConfig &cfg)
{
    std::vector<TimingRow> out;
    for (SelectMethod method : methods) {
        TimingRow t{method, 0.0, 0.0};
        switch (method) {
        case SelectMethod::causal:
            t.select_seconds = select_causal(d, m_tilde, cfg.threshold).elapsed_seconds;
            break;
        case SelectMethod::correlation:
            t.select_seconds = correlation_select(d, m_tilde).elapsed_seconds;
            break;
        case SelectMethod::random: {
            const auto t0 = std::chrono::steady_clock::now();
            random_select(d.m_w, m_tilde, cfg.seed);
            t.select_seconds = seconds_since(t0);
            break;
        }
        case SelectMethod::shapley: {
            std::vector<std::size_t> all(d.m_w);
            std::iota(all.begin(), all.end(), std::size_t{0});
            const auto t0 = std::chrono::steady_clock::now();
            const MlpModel model = train(d, all, cfg.train).model;
            t.prereq_seconds = seconds_since(t0);
            ShapleyOptions o = cfg.shapley;
            o.workers = cfg.workers;
            t.select_seconds = shapley_select(model, d, m_tilde, o).selection.elapsed_seconds;
            break;
        }
        }
        out.push_back(t);
    }
    return out;
}

std::string machine_descriptor()
{
    char host[256] = {};
    if (gethostname(host, sizeof host - 1) != 0)
        host[0] = '\0';
    std::string cpu = "unknown cpu";
    std::ifstream info("/proc/cpuinfo");
    for (std::string line; std::getline(info, line);)
        if (line.rfind("model name", 0) == 0) {
            const auto colon = line.find(':');
            if (colon != std::string::npos)
                cpu = std::string(textio::trim(std::string_view(line).substr(colon + 1)));
            break;
        }
    return std::string(host) + "; " + cpu + "; " + std::to_string(std::thread::hardware_concurrency()) +
           " hardware threads";
}

namespace {

std::string join_selected(const std::vector<std::size_t> &v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? " " : "") + std::to_string(v[i]);
    return s;
}

} // namespace

std::string format_report_csv(const BenchReport &r)
{
    std::string out = "method,m_tilde,rep,n_b,top1,top2,mean_se,mean_snr_db,sweep_count,feedback_count,"
                      "select_seconds,prereq_seconds,perfect_csi,ia_exceeds_frame,selected\n";
    for (const ReportRow &x : r.rows) {
        out += std::string(to_string(x.method)) + "," + std::to_string(x.m_tilde) + "," + std::to_string(x.rep) +
               "," + std::to_string(x.n_b) + "," + textio::format_double(x.top1) + "," +
               textio::format_double(x.top2) + "," + textio::format_double(x.mean_se) + "," +
               textio::format_double(x.mean_snr_db) + "," + std::to_string(x.counts.sweep) + "," +
               std::to_string(x.counts.feedback) + "," + textio::format_double(x.select_seconds) + "," +
               textio::format_double(x.prereq_seconds) + "," + (x.perfect_csi ? "1" : "0") + "," +
               (x.ia_exceeds_frame ? "1" : "0") + "," + join_selected(x.selected) + "\n";
    }
    return out;
}

std::string format_report_json(const BenchReport &r, const std::map<std::string, std::string> &config)
{
    nlohmann::ordered_json j;
    j["seed"] = r.seed;
    j["machine"] = r.machine;
    j["config"] = config;
    j["rows"] = nlohmann::ordered_json::array();
    for (const ReportRow &x : r.rows) {
        nlohmann::ordered_json row;
        row["method"] = to_string(x.method);
        row["m_tilde"] = x.m_tilde;
        row["rep"] = x.rep;
        row["n_b"] = x.n_b;
        row["top1"] = x.top1;
        row["top2"] = x.top2;
        row["mean_se"] = x.mean_se;
        row["mean_snr_db"] = x.mean_snr_db;
        row["sweep_count"] = x.counts.sweep;
        row["feedback_count"] = x.counts.feedback;
        row["select_seconds"] = x.select_seconds;
        row["prereq_seconds"] = x.prereq_seconds;
        row["perfect_csi"] = x.perfect_csi;
        row["ia_exceeds_frame"] = x.ia_exceeds_frame;
        row["selected"] = x.selected;
        j["rows"].push_back(std::move(row));
    }
    return j.dump(2) + "\n";
}

} // namespace causalbeam
