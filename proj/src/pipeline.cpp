// SPDX-License-Identifier: Apache-2.0
#include "causalbeam/pipeline.hpp"

#include "causalbeam/errors.hpp"
#include "causalbeam/lingam.hpp"
#include "causalbeam/textio.hpp"

#include <json.hpp>
#include <zlib.h>

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <stdexcept>

namespace causalbeam {

namespace {

std::uint64_t to_uint(std::string_view key, std::string_view v)
{
    try {
        return textio::parse_uint(v, 0);
    } catch (const std::exception &) {
        throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + std::string(v) + "'");
    }
}

double to_double(std::string_view key, std::string_view v)
{
    try {
        return textio::parse_double(v, 0);
    } catch (const std::exception &) {
        throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(v) + "'");
    }
}

bool to_bool(std::string_view key, std::string_view v)
{
    if (v == "1" || v == "true" || v == "yes")
        return true;
    if (v == "0" || v == "false" || v == "no")
        return false;
    throw ConfigError(std::string(key) + ": expected true/false, got '" + std::string(v) + "'");
}

/// "4,8,13" or "1..32" or a mix ("1..4,8").
std::vector<std::size_t> to_grid(std::string_view key, std::string_view v)
{
    std::vector<std::size_t> out;
    for (std::string_view item : textio::split(v, ',')) {
        item = textio::trim(item);
        const auto dots = item.find("..");
        if (dots == std::string_view::npos) {
            out.push_back(to_uint(key, item));
            continue;
        }
        const std::size_t lo = to_uint(key, item.substr(0, dots));
        const std::size_t hi = to_uint(key, item.substr(dots + 2));
        if (lo > hi)
            throw ConfigError(std::string(key) + ": empty range '" + std::string(item) + "'");
        for (std::size_t m = lo; m <= hi; ++m)
            out.push_back(m);
    }
    return out;
}

std::string join(const auto &values, auto &&fmt)
{
    std::string s;
    for (const auto &v : values)
        s += (s.empty() ? "" : ",") + fmt(v);
    return s;
}

std::vector<std::size_t> all_beams(std::size_t m_w)
{
    std::vector<std::size_t> v(m_w);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

std::vector<std::size_t> sorted(std::vector<std::size_t> v)
{
    std::sort(v.begin(), v.end());
    return v;
}

} // namespace

RunConfig RunConfig::from_profile(std::string_view name)
{
    RunConfig c;
    if (name == "desk") {
        c.profile = "desk";
    } else if (name == "table1") {
        // Training-set size of 57144 after the 70/10/20 split.
        c.profile = "table1";
        c.scene.n_users = 81634;
    } else {
        throw ConfigError("unknown profile '" + std::string(name) + "' (expected desk or table1)");
    }
    return c;
}

void RunConfig::set(std::string_view key, std::string_view value)
{
    value = textio::trim(value);
    const std::string k(key);
    if (k == "seed") seed = to_uint(k, value);
    else if (k == "out_dir") out_dir = std::string(value);
    else if (k == "workers") workers = to_uint(k, value);
    else if (k == "profile") {
        if (value != profile)
            throw ConfigError("profile can only be chosen on the command line (--profile)");
    }
    else if (k == "scene.n_bs") scene.n_bs = to_uint(k, value);
    else if (k == "scene.oversampling") scene.oversampling = to_uint(k, value);
    else if (k == "scene.n_users") scene.n_users = to_uint(k, value);
    else if (k == "scene.l_paths") scene.l_paths = to_uint(k, value);
    else if (k == "scene.aod_min") scene.aod_min = to_double(k, value);
    else if (k == "scene.aod_max") scene.aod_max = to_double(k, value);
    else if (k == "scene.path_decay_db") scene.path_decay_db = to_double(k, value);
    else if (k == "scene.sensing_snr_db") scene.sensing_snr_db = to_double(k, value);
    else if (k == "train.epochs") train.epochs = to_uint(k, value);
    else if (k == "train.learning_rate") train.learning_rate = to_double(k, value);
    else if (k == "train.batch_size") train.batch_size = to_uint(k, value);
    else if (k == "train.select_best_val") train.select_best_val = to_bool(k, value);
    else if (k == "se.t_frame") se.t_frame = to_double(k, value);
    else if (k == "se.t_slot") se.t_slot = to_double(k, value);
    else if (k == "se.t_predict") se.t_predict = to_double(k, value);
    else if (k == "se.k") se.k = to_uint(k, value);
    else if (k == "select.method") {
        try {
            select.method = parse_select_method(value);
        } catch (const std::invalid_argument &e) {
            throw ConfigError(k + ": " + e.what());
        }
    }
    else if (k == "select.m_tilde") select.m_tilde = to_uint(k, value);
    else if (k == "select.threshold") select.threshold = to_double(k, value);
    else if (k == "select.n_perms") select.n_perms = to_uint(k, value);
    else if (k == "bench.methods") {
        bench.methods.clear();
        for (std::string_view m : textio::split(value, ',')) {
            try {
                bench.methods.push_back(parse_bench_method(textio::trim(m)));
            } catch (const std::invalid_argument &e) {
                throw ConfigError(k + ": " + e.what());
            }
        }
    }
    else if (k == "bench.grid") bench.grid = to_grid(k, value);
    else if (k == "bench.mrt_phase_bits") bench.mrt_phase_bits = static_cast<unsigned>(to_uint(k, value));
    else if (k == "bench.overhead_users") bench.overhead_users = to_uint(k, value);
    else throw ConfigError("unknown config key '" + k + "'");
}

void RunConfig::apply_text(const std::string &text)
{
    textio::LineReader in(text);
    std::string_view line;
    while (in.next(line)) {
        const auto hash = line.find('#');
        line = textio::trim(line.substr(0, hash));
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config line " + std::to_string(in.line_number()) + ": expected 'key = value'");
        try {
            set(textio::trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ConfigError &e) {
            throw ConfigError("config line " + std::to_string(in.line_number()) + ": " + e.what());
        }
    }
}

void RunConfig::apply_file(const std::string &path)
{
    std::string text;
    try {
        text = textio::read_file(path);
    } catch (const std::exception &e) {
        throw ConfigError(e.what());
    }
    apply_text(text);
}

void RunConfig::apply_environment(const char *const *envp)
{
    if (!envp)
        return;
    for (; *envp; ++envp) {
        const std::string_view entry(*envp);
        if (entry.substr(0, kEnvPrefix.size()) != kEnvPrefix)
            continue;
        const auto eq = entry.find('=');
        if (eq == std::string_view::npos)
            continue;
        std::string key(entry.substr(kEnvPrefix.size(), eq - kEnvPrefix.size()));
        std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
        const auto us = key.find('_');
        if (us != std::string::npos) {
            const std::string section = key.substr(0, us);
            if (section == "scene" || section == "train" || section == "se" || section == "select" ||
                section == "bench")
                key[us] = '.';
        }
        try {
            set(key, entry.substr(eq + 1));
        } catch (const ConfigError &e) {
            throw ConfigError("environment " + std::string(entry.substr(0, eq)) + ": " + e.what());
        }
    }
}

void RunConfig::resolve_seeds()
{
    scene.seed = seed;
    train.seed = seed;
    scene.workers = workers;
}

void RunConfig::validate() const
{
    try {
        scene.validate();
        train.validate();
        se.validate();
    } catch (const std::invalid_argument &e) {
        throw ConfigError(e.what());
    }
    const std::size_t m_w = scene.n_bs;
    if (select.m_tilde < 1 || select.m_tilde > m_w)
        throw ConfigError("select.m_tilde must be in [1, " + std::to_string(m_w) + "]");
    if (!(select.threshold >= 0.0))
        throw ConfigError("select.threshold must be >= 0");
    if (select.n_perms == 0)
        throw ConfigError("select.n_perms must be >= 1");
    if (bench.methods.empty())
        throw ConfigError("bench.methods is empty");
    if (bench.grid.empty())
        throw ConfigError("bench.grid is empty");
    for (std::size_t m : bench.grid)
        if (m < 1 || m > m_w)
            throw ConfigError("bench.grid value " + std::to_string(m) + " outside [1, " + std::to_string(m_w) + "]");
    if (bench.mrt_phase_bits < 1 || bench.mrt_phase_bits > 16)
        throw ConfigError("bench.mrt_phase_bits must be in [1, 16]");
    if (se.k > scene.n_bs * scene.oversampling)
        throw ConfigError("se.k exceeds the number of narrow beams");
}

std::map<std::string, std::string> RunConfig::echo() const
{
    using textio::format_double;
    const auto u = [](auto v) { return std::to_string(v); };
    std::map<std::string, std::string> m;
    m["profile"] = profile;
    m["seed"] = u(seed);
    m["out_dir"] = out_dir;
    m["workers"] = u(workers);
    m["scene.n_bs"] = u(scene.n_bs);
    m["scene.oversampling"] = u(scene.oversampling);
    m["scene.y_classes"] = u(scene.n_bs * scene.oversampling);
    m["scene.n_users"] = u(scene.n_users);
    m["scene.l_paths"] = u(scene.l_paths);
    m["scene.aod_min"] = format_double(scene.aod_min);
    m["scene.aod_max"] = format_double(scene.aod_max);
    m["scene.path_decay_db"] = format_double(scene.path_decay_db);
    m["scene.sensing_snr_db"] = format_double(scene.sensing_snr_db);
    m["train.epochs"] = u(train.epochs);
    m["train.learning_rate"] = format_double(train.learning_rate);
    m["train.batch_size"] = u(train.batch_size);
    m["train.select_best_val"] = train.select_best_val ? "true" : "false";
    m["se.t_frame"] = format_double(se.t_frame);
    m["se.t_slot"] = format_double(se.t_slot);
    m["se.t_predict"] = format_double(se.t_predict);
    m["se.k"] = u(se.k);
    m["select.method"] = std::string(to_string(select.method));
    m["select.m_tilde"] = u(select.m_tilde);
    m["select.threshold"] = format_double(select.threshold);
    m["select.n_perms"] = u(select.n_perms);
    m["bench.methods"] = join(bench.methods, [](BenchMethod b) { return std::string(to_string(b)); });
    m["bench.grid"] = join(bench.grid, [](std::size_t g) { return std::to_string(g); });
    m["bench.mrt_phase_bits"] = u(bench.mrt_phase_bits);
    m["bench.overhead_users"] = u(bench.overhead_users);
    return m;
}

EvalConfig RunConfig::eval_config() const
{
    EvalConfig e;
    e.se = se;
    e.train = train;
    e.threshold = select.threshold;
    e.shapley.n_perms = select.n_perms;
    e.shapley.seed = seed;
    e.shapley.workers = workers;
    e.mrt_phase_bits = bench.mrt_phase_bits;
    e.oversampling = scene.oversampling;
    e.overhead_users = bench.overhead_users;
    e.seed = seed;
    e.workers = workers;
    return e;
}

OutputDir::OutputDir(const std::string &path) : path_(path)
{
    if (!std::filesystem::is_directory(path))
        throw ConfigError("output directory '" + path + "' does not exist");
    lock_ = (std::filesystem::path(path) / ".causalbeam.lock").string();
    const int fd = ::open(lock_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0)
        throw ConfigError("output directory '" + path + "' is in use (lockfile " + lock_ + " exists)");
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
}

OutputDir::~OutputDir()
{
    ::unlink(lock_.c_str());
}

std::string OutputDir::file(std::string_view name) const
{
    return (std::filesystem::path(path_) / name).string();
}

std::string file_checksum(const std::string &path)
{
    const std::string bytes = textio::read_file(path);
    uLong crc = crc32(0L, Z_NULL, 0);
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
        crc = crc32(crc, reinterpret_cast<const Bytef *>(bytes.data() + pos), chunk);
        pos += chunk;
    }
    char hex[9];
    std::snprintf(hex, sizeof hex, "%08lx", static_cast<unsigned long>(crc & 0xffffffffUL));
    return hex;
}

namespace {

void write_manifest(const OutputDir &out, const RunConfig &cfg, const std::string &dataset_file)
{
    std::string m = "causalbeam-manifest 1\n";
    m += "dataset " + std::string(kDatasetFile) + "\n";
    m += "checksum_crc32 " + file_checksum(dataset_file) + "\n";
    m += "seed " + std::to_string(cfg.seed) + "\n";
    m += "config\n";
    for (const auto &[k, v] : cfg.echo())
        m += k + " = " + v + "\n";
    textio::write_file(out.file(kManifestFile), m);
}

Dataset generate_into(const OutputDir &out, const RunConfig &cfg)
{
    SceneConfig sc = cfg.scene;
    sc.seed = cfg.seed;
    sc.workers = cfg.workers;
    Dataset d = generate_dataset(sc);
    const std::string path = out.file(kDatasetFile);
    save_dataset(d, path);
    write_manifest(out, cfg, path);
    return d;
}

void check_budget(const RunConfig &cfg, const Dataset &d)
{
    if (cfg.select.m_tilde > d.m_w)
        throw ConfigError("select.m_tilde " + std::to_string(cfg.select.m_tilde) + " exceeds the dataset's " +
                          std::to_string(d.m_w) + " sensing beams");
}

} // namespace

void cmd_gen(const RunConfig &cfg)
{
    cfg.validate();
    OutputDir out(cfg.out_dir);
    generate_into(out, cfg);
}

void cmd_discover(const RunConfig &cfg, const std::string &dataset_path)
{
    cfg.validate();
    OutputDir out(cfg.out_dir);
    const Dataset d = load_dataset(dataset_path);
    CausalGraph g;
    select_causal(d, 1, cfg.select.threshold, &g);
    save_graph(g, out.file(kGraphFile));
}

void cmd_select(const RunConfig &cfg, const std::string &dataset_path, const std::optional<std::string> &graph_path,
                const std::optional<std::string> &model_path)
{
    cfg.validate();
    OutputDir out(cfg.out_dir);
    const Dataset d = load_dataset(dataset_path);
    check_budget(cfg, d);
    SelectionResult r;
    switch (cfg.select.method) {
    case SelectMethod::causal:
        if (graph_path) {
            const CausalGraph g = load_graph(*graph_path);
            if (g.p() != d.m_w + 1 || g.target != d.m_w)
                throw ParseError("graph has " + std::to_string(g.p()) + " variables, dataset expects " +
                                     std::to_string(d.m_w + 1),
                                 1);
            r = causal_select(g, g.target, cfg.select.m_tilde);
        } else {
            r = select_causal(d, cfg.select.m_tilde, cfg.select.threshold);
        }
        break;
    case SelectMethod::correlation:
        r = correlation_select(d, cfg.select.m_tilde);
        break;
    case SelectMethod::random:
        r = random_select(d.m_w, cfg.select.m_tilde, cfg.seed);
        break;
    case SelectMethod::shapley: {
        if (!model_path)
            throw ConfigError("shapley selection needs --model (a model trained on all sensing beams)");
        const MlpModel model = load_model(*model_path);
        if (model.input_dim() != d.m_w)
            throw ConfigError("shapley selection needs a model with " + std::to_string(d.m_w) + " inputs, found " +
                              std::to_string(model.input_dim()));
        ShapleyOptions o{cfg.select.n_perms, cfg.seed, cfg.workers};
        r = shapley_select(model, d, cfg.select.m_tilde, o).selection;
        break;
    }
    }
    save_selection(r, out.file(kSelectionFile));
}

void cmd_train(const RunConfig &cfg, const std::string &dataset_path, const std::optional<std::string> &selection_path)
{
    cfg.validate();
    OutputDir out(cfg.out_dir);
    const Dataset d = load_dataset(dataset_path);
    std::vector<std::size_t> features = all_beams(d.m_w);
    if (selection_path) {
        const SelectionResult s = load_selection(*selection_path);
        try {
            s.validate(d.m_w);
        } catch (const std::invalid_argument &e) {
            throw ParseError(std::string("selection does not fit the dataset: ") + e.what(), 1);
        }
        features = sorted(s.selected);
    }
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    const TrainResult r = train(d, features, tc);
    save_model(r.model, out.file(kModelFile));
    std::string h = "epoch,train_loss,train_top1,val_loss,val_top1,best\n";
    for (std::size_t e = 0; e < r.history.size(); ++e) {
        const EpochStats &s = r.history[e];
        h += std::to_string(e) + "," + textio::format_double(s.train_loss) + "," +
             textio::format_double(s.train_top1) + "," + textio::format_double(s.val_loss) + "," +
             textio::format_double(s.val_top1) + "," + (e == r.best_epoch ? "1" : "0") + "\n";
    }
    textio::write_file(out.file(kHistoryFile), h);
}

void cmd_eval(const RunConfig &cfg, const std::string &dataset_path, const std::string &model_path,
              const std::optional<std::string> &selection_path)
{
    cfg.validate();
    OutputDir out(cfg.out_dir);
    const Dataset d = load_dataset(dataset_path);
    const MlpModel model = load_model(model_path);
    std::vector<std::size_t> features = all_beams(d.m_w);
    if (selection_path)
        features = sorted(load_selection(*selection_path).selected);
    if (model.input_dim() != features.size())
        throw ConfigError("model expects " + std::to_string(model.input_dim()) + " inputs but the selection has " +
                          std::to_string(features.size()) + " beams");
    if (model.output_dim() != d.y_classes)
        throw ConfigError("model predicts " + std::to_string(model.output_dim()) + " classes, dataset has " +
                          std::to_string(d.y_classes));
    for (std::size_t f : features)
        if (f >= d.m_w)
            throw ConfigError("selection index " + std::to_string(f) + " outside the dataset's beams");

    const std::size_t k = cfg.se.k;
    const std::size_t n_b = features.size() + (k > 1 ? k : 0);
    const auto test = d.indices(Split::test);
    if (test.empty())
        throw std::invalid_argument("eval: test split is empty");
    const Eigen::MatrixXd logits = forward_logits(model, gather_features(d, test, features));
    std::vector<std::vector<std::size_t>> candidates(test.size());
    for (std::size_t i = 0; i < test.size(); ++i)
        candidates[i] = topk_indices(logits.row(static_cast<Eigen::Index>(i)).transpose(), k);

    nlohmann::ordered_json j;
    j["features"] = features;
    j["test_rows"] = test.size();
    j["top1"] = top_k_accuracy(model, d, Split::test, features, 1);
    j["top2"] = top_k_accuracy(model, d, Split::test, features, std::min<std::size_t>(2, d.y_classes));
    j["k"] = k;
    j["topk"] = top_k_accuracy(model, d, Split::test, features, k);
    j["n_b"] = n_b;
    if (d.has_channels()) {
        const Codebook narrow = dft_codebook(d.n_bs, d.y_classes / d.n_bs);
        const LinkQuality q = link_quality(d, narrow, candidates, n_b, cfg.se);
        j["mean_se"] = q.mean_se;
        j["mean_snr_db"] = q.mean_snr_db;
        j["ia_exceeds_frame"] = q.ia_exceeds_frame;
    } else {
        j["mean_se"] = nullptr;
        j["mean_snr_db"] = nullptr;
        j["ia_exceeds_frame"] = cfg.se.t_ia(n_b) > cfg.se.t_frame;
    }
    const std::size_t n_users = cfg.bench.overhead_users ? cfg.bench.overhead_users : test.size();
    const Overhead o = overhead(features.size(), n_users, k);
    j["sweep_count"] = o.sweep;
    j["feedback_count"] = o.feedback;
    textio::write_file(out.file(kEvalFile), j.dump(2) + "\n");
}

void cmd_bench(const RunConfig &cfg, const std::optional<std::string> &dataset_path)
{
    cfg.validate();
    OutputDir out(cfg.out_dir);
    const Dataset d = dataset_path ? load_dataset(*dataset_path) : generate_into(out, cfg);
    for (std::size_t m : cfg.bench.grid)
        if (m > d.m_w)
            throw ConfigError("bench.grid value " + std::to_string(m) + " exceeds the dataset's " +
                              std::to_string(d.m_w) + " sensing beams");

    EvalConfig ec = cfg.eval_config();
    ec.train.seed = cfg.seed;
    if (d.has_channels())
        ec.oversampling = d.y_classes / d.n_bs;
    BenchContext ctx(d, ec);
    const auto has = [&](BenchMethod m) {
        return std::find(cfg.bench.methods.begin(), cfg.bench.methods.end(), m) != cfg.bench.methods.end();
    };
    if (has(BenchMethod::causal))
        save_graph(ctx.graph(), out.file(kGraphFile));

    const BenchReport report = run_bench(ctx, cfg.bench.methods, cfg.bench.grid);
    textio::write_file(out.file(kBenchCsvFile), format_report_csv(report));
    textio::write_file(out.file(kBenchJsonFile), format_report_json(report, cfg.echo()));

    std::string t = "method,select_seconds,prereq_seconds\n";
    if (has(BenchMethod::causal))
        t += "causal," + textio::format_double(ctx.graph_seconds()) + ",0\n";
    if (has(BenchMethod::shapley))
        t += "shapley," + textio::format_double(ctx.shapley().selection.elapsed_seconds) + "," +
             textio::format_double(ctx.full_model_seconds()) + "\n";
    textio::write_file(out.file(kTimingFile), t);
}

} // namespace causalbeam
