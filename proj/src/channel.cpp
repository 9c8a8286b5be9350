// SPDX-License-Identifier: Apache-2.0
#include "causalbeam/channel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace causalbeam {

Codebook::Codebook(Eigen::MatrixXcd vectors, CodebookKind kind) : vectors_(std::move(vectors)), kind_(kind)
{
    if (vectors_.rows() == 0)
        throw std::invalid_argument("Codebook: vectors must have at least one entry");
}

CVector steering_vector(double aod, std::size_t n_bs)
{
    if (n_bs == 0)
        throw std::invalid_argument("steering_vector: n_bs must be >= 1");
    if (!std::isfinite(aod))
        throw std::invalid_argument("steering_vector: aod must be finite");
    const double inc = std::numbers::pi * std::sin(aod);
    const double amp = 1.0 / std::sqrt(static_cast<double>(n_bs));
    CVector b(static_cast<Eigen::Index>(n_bs));
    for (std::size_t n = 0; n < n_bs; ++n)
        b[static_cast<Eigen::Index>(n)] = std::polar(amp, inc * static_cast<double>(n));
    return b;
}

Codebook dft_codebook(std::size_t n_bs, std::size_t oversampling)
{
    if (n_bs == 0 || oversampling == 0)
        throw std::invalid_argument("dft_codebook: n_bs and oversampling must be >= 1");
    const std::size_t size = n_bs * oversampling;
    const double amp = 1.0 / std::sqrt(static_cast<double>(n_bs));
    Eigen::MatrixXcd W(static_cast<Eigen::Index>(n_bs), static_cast<Eigen::Index>(size));
    for (std::size_t m = 0; m < size; ++m) {
        for (std::size_t n = 0; n < n_bs; ++n) {
            // Reduce n*m modulo the grid size first so the angle stays small
            // and the phase is exact for on-grid products.
            const std::size_t k = (n * m) % size;
            const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(size);
            W(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) = std::polar(amp, angle);
        }
    }
    return Codebook(std::move(W), oversampling == 1 ? CodebookKind::sensing_dft : CodebookKind::narrow_odft);
}

CVector synth_channel(const PathSet &paths, std::size_t n_bs)
{
    if (paths.paths.empty())
        throw std::invalid_argument("synth_channel: path set is empty");
    CVector h = CVector::Zero(static_cast<Eigen::Index>(n_bs));
    for (const Path &p : paths.paths) {
        if (!std::isfinite(p.gain.real()) || !std::isfinite(p.gain.imag()))
            throw std::invalid_argument("synth_channel: non-finite path gain");
        h += p.gain * steering_vector(p.aod, n_bs);
    }
    return h;
}

double beam_gain(const CVector &h, const CVector &w)
{
    if (h.size() != w.size())
        throw std::invalid_argument("beam_gain: dimension mismatch (" + std::to_string(h.size()) + " vs " +
                                    std::to_string(w.size()) + ")");
    return std::norm(h.dot(w)); // dot() conjugates h
}

Eigen::VectorXd codebook_gains(const CVector &h, const Codebook &codebook)
{
    if (static_cast<std::size_t>(h.size()) != codebook.n_bs())
        throw std::invalid_argument("codebook_gains: channel length does not match codebook");
    const Eigen::VectorXcd r = codebook.matrix().adjoint() * h; // conj(h^H w)
    return r.cwiseAbs2();
}

double snr(const CVector &h, const CVector &w, double p_bs, double noise_power)
{
    if (!(p_bs > 0.0) || !(noise_power > 0.0))
        throw std::invalid_argument("snr: transmit and noise power must be positive");
    return p_bs * beam_gain(h, w) / noise_power;
}

std::size_t best_beam(const CVector &h, const Codebook &codebook)
{
    if (codebook.size() == 0)
        throw std::invalid_argument("best_beam: empty codebook");
    const Eigen::VectorXd g = codebook_gains(h, codebook);
    std::size_t best = 0;
    for (Eigen::Index m = 1; m < g.size(); ++m)
        if (g[m] > g[static_cast<Eigen::Index>(best)])
            best = static_cast<std::size_t>(m);
    return best;
}

std::size_t quantize_phase(double phase, unsigned phase_bits)
{
    if (phase_bits == 0 || phase_bits > 30)
        throw std::invalid_argument("quantize_phase: phase_bits must be in [1, 30]");
    if (!std::isfinite(phase))
        throw std::invalid_argument("quantize_phase: phase must be finite");
    const std::size_t levels = std::size_t{1} << phase_bits;
    const double two_pi = 2.0 * std::numbers::pi;
    double p = std::fmod(phase, two_pi);
    if (p < 0.0)
        p += two_pi;
    const double t = p / (two_pi / static_cast<double>(levels));
    // ceil(t - 1/2) rounds to nearest with exact halves going down; the small
    // slack absorbs the rounding of boundary phases such as 3*pi/8.
    const double k = std::ceil(t - 0.5 - 1e-12);
    return static_cast<std::size_t>(k) % levels;
}

CVector quantized_mrt(const CVector &h, unsigned phase_bits)
{
    if (h.size() == 0 || h.cwiseAbs2().maxCoeff() == 0.0)
        throw std::invalid_argument("quantized_mrt: channel is zero, phase undefined");
    const std::size_t levels = std::size_t{1} << phase_bits;
    const double step = 2.0 * std::numbers::pi / static_cast<double>(levels);
    const double amp = 1.0 / std::sqrt(static_cast<double>(h.size()));
    CVector w(h.size());
    for (Eigen::Index n = 0; n < h.size(); ++n) {
        const std::size_t q = quantize_phase(std::arg(h[n]), phase_bits);
        w[n] = std::polar(amp, step * static_cast<double>(q));
    }
    return w;
}

} // namespace causalbeam
