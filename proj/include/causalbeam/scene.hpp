// SPDX-License-Identifier: Apache-2.0
//
// Synthetic scene generation and the RSSI / beam-label dataset built from it.

#pragma once

#include "causalbeam/channel.hpp"
#include "causalbeam/rng.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace causalbeam {

struct SceneConfig {
    std::size_t n_bs = 32;
    std::size_t oversampling = 4;
    std::size_t n_users = 8000;
    std::size_t l_paths = 3;
    // One-sided sector: the O-DFT index grid wraps at broadside, so a sector
    // straddling it would split neighbouring directions across both ends of
    // the label range.
    double aod_min = 0.1;
    double aod_max = 0.8;
    double path_decay_db = 3.0;
    std::uint64_t seed = 1;
    /// Peak sensing SNR: strongest sensing beam of the strongest UE after
    /// normalization. +inf disables measurement noise.
    double sensing_snr_db = 20.0;
    /// Worker threads for per-UE generation; 0 = hardware default. Output does
    /// not depend on this value.
    std::size_t workers = 0;

    void validate() const;
};

using Scene = std::vector<PathSet>;

Scene generate_scene(const SceneConfig &cfg);

/// One RSSI sweep: entry i = |h^H w_i + z_i|^2 with z_i ~ CN(0, noise_power).
/// Transmit power is folded into the channel normalization.
Eigen::VectorXd sweep_rssi(const CVector &h, const Codebook &sensing, double noise_power, Rng &rng);

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

struct Sample {
    Eigen::VectorXd x;
    std::size_t y;
    std::size_t ue;
    double optimal_gain;
};

/// Rows of (RSSI vector, optimal narrow-beam label) plus per-row metadata.
/// Channels are kept (normalized) when available so that achieved SNR under an
/// arbitrary beam can be evaluated later; imported files may omit them
/// (n_bs = 0).
struct Dataset {
    std::size_t m_w = 0;
    std::size_t y_classes = 0;
    std::size_t n_bs = 0;
    std::uint64_t seed = 0;
    double norm_const = 1.0;
    double noise_power = 0.0;
    double sensing_snr_db = std::numeric_limits<double>::infinity();

    Eigen::MatrixXd rssi;          // count x m_w
    std::vector<std::size_t> labels;
    std::vector<std::size_t> ue;
    Eigen::VectorXd optimal_gain;  // |h^H w_y|^2 of the labelled beam
    Eigen::MatrixXcd channels;     // count x n_bs, empty when n_bs == 0
    std::vector<Split> split;

    std::size_t size() const noexcept { return labels.size(); }
    bool has_channels() const noexcept { return n_bs > 0; }
    Sample sample(std::size_t i) const;
    CVector channel(std::size_t i) const;

    std::vector<std::size_t> indices(Split s) const;

    /// Throws std::invalid_argument describing the first violated invariant.
    void validate() const;
};

/// Assigns rows to train/val/test in 70/10/20 proportions using a seeded shuffle.
std::vector<Split> make_splits(std::size_t count, std::uint64_t seed);

Dataset build_dataset(const Scene &scene, const Codebook &sensing, const Codebook &narrow,
                      const SceneConfig &cfg);

/// Convenience: scene + both codebooks + dataset from one config.
Dataset generate_dataset(const SceneConfig &cfg);

// Text format, see README "Dataset file". Round trips bit-exactly.
std::string format_dataset(const Dataset &d);
Dataset parse_dataset(const std::string &text);
void save_dataset(const Dataset &d, const std::string &path);
Dataset load_dataset(const std::string &path);

} // namespace causalbeam
