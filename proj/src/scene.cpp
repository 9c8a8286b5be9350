// SPDX-License-Identifier: Apache-2.0
#include "causalbeam/scene.hpp"

#include "causalbeam/errors.hpp"
#include "causalbeam/parallel.hpp"
#include "causalbeam/textio.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace causalbeam {

void SceneConfig::validate() const
{
    if (n_bs == 0 || oversampling == 0)
        throw std::invalid_argument("SceneConfig: n_bs and oversampling must be >= 1");
    if (n_users == 0)
        throw std::invalid_argument("SceneConfig: n_users must be >= 1");
    if (l_paths == 0)
        throw std::invalid_argument("SceneConfig: l_paths must be >= 1");
    const double half_pi = std::numbers::pi / 2.0;
    if (!(aod_min < aod_max))
        throw std::invalid_argument("SceneConfig: aod range is empty");
    if (aod_min < -half_pi || aod_max > half_pi)
        throw std::invalid_argument("SceneConfig: aod range must lie within [-pi/2, pi/2]");
    if (!std::isfinite(path_decay_db))
        throw std::invalid_argument("SceneConfig: path_decay_db must be finite");
    if (std::isnan(sensing_snr_db) || sensing_snr_db == -INFINITY)
        throw std::invalid_argument("SceneConfig: sensing_snr_db must be a number or +inf");
}

Scene generate_scene(const SceneConfig &cfg)
{
    cfg.validate();
    Scene scene(cfg.n_users);
    parallel_for(cfg.n_users, cfg.workers, [&](std::size_t u) {
        Rng rng = make_stream(cfg.seed, "scene", u);
        std::uniform_real_distribution<double> aod(cfg.aod_min, cfg.aod_max);
        std::normal_distribution<double> gauss(0.0, 1.0);
        PathSet ps;
        ps.paths.reserve(cfg.l_paths);
        for (std::size_t l = 0; l < cfg.l_paths; ++l) {
            const double power = std::pow(10.0, -cfg.path_decay_db * static_cast<double>(l) / 10.0);
            const double sd = std::sqrt(power / 2.0);
            const double re = sd * gauss(rng);
            const double im = sd * gauss(rng);
            ps.paths.push_back({Complex(re, im), aod(rng)});
        }
        scene[u] = std::move(ps);
    });
    return scene;
}

Eigen::VectorXd sweep_rssi(const CVector &h, const Codebook &sensing, double noise_power, Rng &rng)
{
    if (sensing.kind() != CodebookKind::sensing_dft)
        throw std::invalid_argument("sweep_rssi: sensing codebook must be a plain DFT codebook");
    if (noise_power < 0.0)
        throw std::invalid_argument("sweep_rssi: negative noise power");
    Eigen::VectorXcd r = (h.adjoint() * sensing.matrix()).transpose(); // h^H w_i
    if (noise_power > 0.0) {
        std::normal_distribution<double> gauss(0.0, std::sqrt(noise_power / 2.0));
        for (Eigen::Index i = 0; i < r.size(); ++i) {
            const double re = gauss(rng);
            const double im = gauss(rng);
            r[i] += Complex(re, im);
        }
    }
    return r.cwiseAbs2();
}

Sample Dataset::sample(std::size_t i) const
{
    return Sample{rssi.row(static_cast<Eigen::Index>(i)).transpose(), labels.at(i), ue.at(i),
                  optimal_gain[static_cast<Eigen::Index>(i)]};
}

CVector Dataset::channel(std::size_t i) const
{
    if (!has_channels())
        throw std::invalid_argument("Dataset: no channels stored");
    return channels.row(static_cast<Eigen::Index>(i)).transpose();
}

std::vector<std::size_t> Dataset::indices(Split s) const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
        if (split[i] == s)
            out.push_back(i);
    return out;
}

void Dataset::validate() const
{
    const std::size_t n = size();
    if (m_w == 0 || y_classes == 0)
        throw std::invalid_argument("Dataset: m_w and y_classes must be >= 1");
    if (static_cast<std::size_t>(rssi.rows()) != n || static_cast<std::size_t>(rssi.cols()) != m_w)
        throw std::invalid_argument("Dataset: RSSI matrix shape mismatch");
    if (ue.size() != n || split.size() != n || static_cast<std::size_t>(optimal_gain.size()) != n)
        throw std::invalid_argument("Dataset: per-row metadata length mismatch");
    if (has_channels() &&
        (static_cast<std::size_t>(channels.rows()) != n || static_cast<std::size_t>(channels.cols()) != n_bs))
        throw std::invalid_argument("Dataset: channel matrix shape mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= y_classes)
            throw std::invalid_argument("Dataset: row " + std::to_string(i) + " label out of range");
        if (static_cast<unsigned>(split[i]) > 2)
            throw std::invalid_argument("Dataset: row " + std::to_string(i) + " has an invalid split");
    }
    if ((rssi.array() < 0.0).any())
        throw std::invalid_argument("Dataset: negative RSSI value");
    if (!rssi.allFinite())
        throw std::invalid_argument("Dataset: non-finite RSSI value");
}

std::vector<Split> make_splits(std::size_t count, std::uint64_t seed)
{
    std::vector<std::size_t> perm(count);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng = make_stream(seed, "split");
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(count)));
    const auto n_val = std::min(count - n_train,
                                static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(count))));
    std::vector<Split> split(count, Split::test);
    for (std::size_t k = 0; k < count; ++k) {
        if (k < n_train)
            split[perm[k]] = Split::train;
        else if (k < n_train + n_val)
            split[perm[k]] = Split::val;
    }
    return split;
}

Dataset build_dataset(const Scene &scene, const Codebook &sensing, const Codebook &narrow,
                      const SceneConfig &cfg)
{
    cfg.validate();
    if (sensing.n_bs() != cfg.n_bs || narrow.n_bs() != cfg.n_bs)
        throw std::invalid_argument("build_dataset: codebook antenna count does not match n_bs");
    if (sensing.kind() != CodebookKind::sensing_dft)
        throw std::invalid_argument("build_dataset: sensing codebook must be a plain DFT codebook");
    if (scene.empty())
        throw std::invalid_argument("build_dataset: empty scene");

    const std::size_t n = scene.size();
    const auto n_bs = static_cast<Eigen::Index>(cfg.n_bs);
    Eigen::MatrixXcd H(static_cast<Eigen::Index>(n), n_bs);
    for (std::size_t u = 0; u < n; ++u)
        H.row(static_cast<Eigen::Index>(u)) = synth_channel(scene[u], cfg.n_bs).transpose();

    const double norm_const = H.cwiseAbs().maxCoeff();
    if (!(norm_const > 0.0) || !std::isfinite(norm_const))
        throw NumericalError("build_dataset: all channels are zero or non-finite");
    H /= norm_const;

    Dataset d;
    d.m_w = sensing.size();
    d.y_classes = narrow.size();
    d.n_bs = cfg.n_bs;
    d.seed = cfg.seed;
    d.norm_const = norm_const;
    d.sensing_snr_db = cfg.sensing_snr_db;

    // Noise-free gains on both codebooks.
    const Eigen::MatrixXd sensing_gain = (H.conjugate() * sensing.matrix()).cwiseAbs2();
    const Eigen::MatrixXd narrow_gain = (H.conjugate() * narrow.matrix()).cwiseAbs2();
    d.noise_power = std::isinf(cfg.sensing_snr_db)
                        ? 0.0
                        : sensing_gain.maxCoeff() / std::pow(10.0, cfg.sensing_snr_db / 10.0);

    d.rssi.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d.m_w));
    d.labels.resize(n);
    d.ue.resize(n);
    d.optimal_gain.resize(static_cast<Eigen::Index>(n));
    parallel_for(n, cfg.workers, [&](std::size_t u) {
        const auto row = static_cast<Eigen::Index>(u);
        Eigen::Index best = 0;
        for (Eigen::Index m = 1; m < narrow_gain.cols(); ++m)
            if (narrow_gain(row, m) > narrow_gain(row, best))
                best = m;
        d.labels[u] = static_cast<std::size_t>(best);
        d.optimal_gain[row] = narrow_gain(row, best);
        d.ue[u] = u;
        Rng rng = make_stream(cfg.seed, "noise", u);
        d.rssi.row(row) = sweep_rssi(H.row(row).transpose(), sensing, d.noise_power, rng).transpose();
    });
    d.channels = std::move(H);
    d.split = make_splits(n, cfg.seed);
    return d;
}

Dataset generate_dataset(const SceneConfig &cfg)
{
    const Scene scene = generate_scene(cfg);
    return build_dataset(scene, dft_codebook(cfg.n_bs, 1), dft_codebook(cfg.n_bs, cfg.oversampling), cfg);
}

namespace {

constexpr std::string_view kMagic = "causalbeam-dataset";
constexpr int kVersion = 1;

std::string columns_line(const Dataset &d)
{
    std::string s = "ue,split,label,optimal_gain,x[" + std::to_string(d.m_w) + "]";
    if (d.n_bs > 0)
        s += ",h_re_im[" + std::to_string(d.n_bs) + "]";
    return s;
}

} // namespace

std::string format_dataset(const Dataset &d)
{
    d.validate();
    using textio::format_double;
    std::string out;
    out += std::string(kMagic) + " " + std::to_string(kVersion) + "\n";
    out += "m_w " + std::to_string(d.m_w) + "\n";
    out += "y_classes " + std::to_string(d.y_classes) + "\n";
    out += "n_bs " + std::to_string(d.n_bs) + "\n";
    out += "count " + std::to_string(d.size()) + "\n";
    out += "seed " + std::to_string(d.seed) + "\n";
    out += "norm_const " + format_double(d.norm_const) + "\n";
    out += "noise_power " + format_double(d.noise_power) + "\n";
    out += "sensing_snr_db " + format_double(d.sensing_snr_db) + "\n";
    out += "columns " + columns_line(d) + "\n";
    out += "data\n";
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        out += std::to_string(d.ue[i]);
        out += ',';
        out += std::to_string(static_cast<unsigned>(d.split[i]));
        out += ',';
        out += std::to_string(d.labels[i]);
        out += ',';
        out += format_double(d.optimal_gain[r]);
        for (Eigen::Index j = 0; j < d.rssi.cols(); ++j) {
            out += ',';
            out += format_double(d.rssi(r, j));
        }
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(d.n_bs); ++j) {
            out += ',';
            out += format_double(d.channels(r, j).real());
            out += ',';
            out += format_double(d.channels(r, j).imag());
        }
        out += '\n';
    }
    return out;
}

Dataset parse_dataset(const std::string &text)
{
    textio::LineReader in(text);
    {
        const std::string_view first = in.expect_line();
        const std::string expected = std::string(kMagic) + " " + std::to_string(kVersion);
        if (first != expected)
            throw ParseError("expected header '" + expected + "', found '" + std::string(first) + "'", 1);
    }
    Dataset d;
    d.m_w = textio::parse_uint(in.expect_field("m_w"), in.line_number());
    d.y_classes = textio::parse_uint(in.expect_field("y_classes"), in.line_number());
    d.n_bs = textio::parse_uint(in.expect_field("n_bs"), in.line_number());
    const std::size_t count = textio::parse_uint(in.expect_field("count"), in.line_number());
    d.seed = textio::parse_uint(in.expect_field("seed"), in.line_number());
    d.norm_const = textio::parse_double(in.expect_field("norm_const"), in.line_number());
    d.noise_power = textio::parse_double(in.expect_field("noise_power"), in.line_number());
    d.sensing_snr_db = textio::parse_double(in.expect_field("sensing_snr_db"), in.line_number());
    if (d.m_w == 0 || d.y_classes == 0)
        throw ParseError("m_w and y_classes must be >= 1", in.line_number());
    {
        const std::string_view cols = in.expect_field("columns");
        if (cols != columns_line(d))
            throw ParseError("columns '" + std::string(cols) + "' do not match the declared shape '" +
                                 columns_line(d) + "'",
                             in.line_number());
    }
    if (in.expect_line() != "data")
        throw ParseError("expected 'data'", in.line_number());

    const std::size_t width = 4 + d.m_w + 2 * d.n_bs;
    const auto rows = static_cast<Eigen::Index>(count);
    d.rssi.resize(rows, static_cast<Eigen::Index>(d.m_w));
    d.optimal_gain.resize(rows);
    d.channels.resize(d.n_bs > 0 ? rows : 0, static_cast<Eigen::Index>(d.n_bs));
    d.labels.resize(count);
    d.ue.resize(count);
    d.split.resize(count);

    std::string_view line;
    std::size_t i = 0;
    while (in.next(line)) {
        if (line.empty() && i == count)
            continue;
        const std::size_t ln = in.line_number();
        if (i >= count)
            throw ParseError("more rows than the declared count " + std::to_string(count), ln);
        const auto fields = textio::split(line, ',');
        if (fields.size() != width)
            throw ParseError("row " + std::to_string(i) + ": expected " + std::to_string(width) +
                                 " values, found " + std::to_string(fields.size()),
                             ln);
        const auto r = static_cast<Eigen::Index>(i);
        d.ue[i] = textio::parse_uint(fields[0], ln);
        const std::uint64_t s = textio::parse_uint(fields[1], ln);
        if (s > 2)
            throw ParseError("row " + std::to_string(i) + ": split must be 0, 1 or 2", ln);
        d.split[i] = static_cast<Split>(s);
        d.labels[i] = textio::parse_uint(fields[2], ln);
        if (d.labels[i] >= d.y_classes)
            throw ParseError("row " + std::to_string(i) + ": label " + std::to_string(d.labels[i]) +
                                 " out of range",
                             ln);
        d.optimal_gain[r] = textio::parse_double(fields[3], ln);
        for (std::size_t j = 0; j < d.m_w; ++j) {
            const double v = textio::parse_double(fields[4 + j], ln);
            if (!(v >= 0.0) || !std::isfinite(v))
                throw ParseError("row " + std::to_string(i) + ": RSSI must be finite and >= 0", ln);
            d.rssi(r, static_cast<Eigen::Index>(j)) = v;
        }
        for (std::size_t j = 0; j < d.n_bs; ++j) {
            const double re = textio::parse_double(fields[4 + d.m_w + 2 * j], ln);
            const double im = textio::parse_double(fields[4 + d.m_w + 2 * j + 1], ln);
            d.channels(r, static_cast<Eigen::Index>(j)) = Complex(re, im);
        }
        ++i;
    }
    if (i != count)
        throw ParseError("expected " + std::to_string(count) + " rows, found " + std::to_string(i) +
                             " (truncated file?)",
                         in.line_number() + 1);
    if (!text.empty() && text.back() != '\n')
        throw ParseError("missing final newline (truncated file?)", in.line_number());
    return d;
}

void save_dataset(const Dataset &d, const std::string &path)
{
    textio::write_file(path, format_dataset(d));
}

Dataset load_dataset(const std::string &path)
{
    return parse_dataset(textio::read_file(path));
}

} // namespace causalbeam
