// SPDX-License-Identifier: Apache-2.0
//
// Narrowband ULA beamforming primitives: steering vectors, DFT / oversampled
// DFT codebooks, geometric multipath channels, beam gain and SNR, exhaustive
// best-beam search and the phase-quantized matched-filter beamformer.
//
// Conventions: AoD is measured from array broadside, element spacing is half a
// wavelength (so the per-element phase increment is pi*sin(aod)), beams are
// indexed from 0.

#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <vector>

namespace causalbeam {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;

enum class CodebookKind { sensing_dft, narrow_odft };

/// A set of unit-norm, constant-modulus beamforming vectors, stored as the
/// columns of an N_BS x size matrix.
class Codebook {
  public:
    Codebook(Eigen::MatrixXcd vectors, CodebookKind kind);

    std::size_t size() const noexcept { return static_cast<std::size_t>(vectors_.cols()); }
    std::size_t n_bs() const noexcept { return static_cast<std::size_t>(vectors_.rows()); }
    CodebookKind kind() const noexcept { return kind_; }

    auto vector(std::size_t m) const { return vectors_.col(static_cast<Eigen::Index>(m)); }
    const Eigen::MatrixXcd &matrix() const noexcept { return vectors_; }

  private:
    Eigen::MatrixXcd vectors_;
    CodebookKind kind_;
};

struct Path {
    Complex gain;
    double aod; // radians, [-pi/2, pi/2]
};

struct PathSet {
    std::vector<Path> paths;
};

/// b(aod): entry n = exp(i*pi*n*sin(aod)) / sqrt(n_bs).
CVector steering_vector(double aod, std::size_t n_bs);

/// n_bs*oversampling codewords; codeword m has entry n =
/// exp(-i*2*pi*n*m/(n_bs*oversampling)) / sqrt(n_bs).
Codebook dft_codebook(std::size_t n_bs, std::size_t oversampling);

/// h = sum_l gain_l * b(aod_l).
CVector synth_channel(const PathSet &paths, std::size_t n_bs);

/// |h^H w|^2
double beam_gain(const CVector &h, const CVector &w);

/// |h^H w_m|^2 for every codeword m.
Eigen::VectorXd codebook_gains(const CVector &h, const Codebook &codebook);

/// p_bs * |h^H w|^2 / noise_power.
double snr(const CVector &h, const CVector &w, double p_bs, double noise_power);

/// argmax_m |h^H w_m|^2, lowest index on ties.
std::size_t best_beam(const CVector &h, const Codebook &codebook);

/// Rounds a phase to the nearest of 2^bits uniform levels over [0, 2*pi) and
/// returns the level index. A phase exactly between two levels maps to the
/// lower one.
std::size_t quantize_phase(double phase, unsigned phase_bits);

/// Matched filter with quantized phase shifters: entry n =
/// exp(i*q(arg h_n)) / sqrt(N_BS). For a vector channel this is the dominant
/// right singular vector under the phase-shifter constraint.
CVector quantized_mrt(const CVector &h, unsigned phase_bits);

} // namespace causalbeam
