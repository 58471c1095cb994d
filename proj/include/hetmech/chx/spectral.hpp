#pragma once

#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <vector>

#include <fftw3.h>

#include "hetmech/common/error.hpp"

namespace hetmech::chx {

namespace detail {
// The FFTW planner is not thread-safe; execution with distinct plans is.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace detail

/// Inverts a periodic constant-coefficient operator diagonal in Fourier space:
/// out = IFFT( FFT(in) / symbol ). Plans use FFTW_ESTIMATE so results are
/// reproducible run to run.
class SpectralInverse {
public:
    explicit SpectralInverse(int n)
        : n_(n), real_(n * n), spec_(n * (n / 2 + 1)), inv_symbol_(n * (n / 2 + 1), 1.0 / (static_cast<double>(n) * n)), k_unit_(n * (n / 2 + 1)) {
        const int nc = n / 2 + 1;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < nc; ++j) k_unit_[i * nc + j] = neg_laplacian_symbol(n, i, j, 1.0);
        std::lock_guard lock(detail::fftw_planner_mutex());
        auto* cplx = reinterpret_cast<fftw_complex*>(spec_.data());
        forward_ = fftw_plan_dft_r2c_2d(n, n, real_.data(), cplx, FFTW_ESTIMATE);
        backward_ = fftw_plan_dft_c2r_2d(n, n, cplx, real_.data(), FFTW_ESTIMATE);
        if (!forward_ || !backward_) throw Error("FFTW plan creation failed");
    }
    SpectralInverse(const SpectralInverse&) = delete;
    SpectralInverse& operator=(const SpectralInverse&) = delete;
    ~SpectralInverse() {
        std::lock_guard lock(detail::fftw_planner_mutex());
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(backward_);
    }

    int size() const { return n_; }

    /// Eigenvalue of the negated 5-point Laplacian (grid spacing h) at mode (kx, ky).
    static double neg_laplacian_symbol(int n, int kx, int ky, double h) {
        const double sx = std::sin(std::numbers::pi * kx / n);
        const double sy = std::sin(std::numbers::pi * ky / n);
        return 4.0 / (h * h) * (sx * sx + sy * sy);
    }

    /// symbol(K) for each mode, where K is the negated Laplacian eigenvalue.
    template <class Fn>
    void set_symbol(double h, Fn&& fn) {
        const double s = 1.0 / (h * h), scale = 1.0 / (static_cast<double>(n_) * n_);
        for (std::size_t k = 0; k < k_unit_.size(); ++k) inv_symbol_[k] = scale / fn(s * k_unit_[k]);
    }

    template <class In, class Out>
    void apply(const In& in, Out& out) {
        const int total = n_ * n_;
        for (int i = 0; i < total; ++i) real_[i] = in[i];
        fftw_execute(forward_);
        for (std::size_t k = 0; k < spec_.size(); ++k) spec_[k] *= inv_symbol_[k];
        fftw_execute(backward_);
        for (int i = 0; i < total; ++i) out[i] = real_[i];
    }

private:
    int n_;
    std::vector<double> real_;
    std::vector<std::complex<double>> spec_;
    std::vector<double> inv_symbol_;  // includes the 1/n^2 of the unnormalised inverse FFT
    std::vector<double> k_unit_;      // negated Laplacian eigenvalues at h = 1
    fftw_plan forward_ = nullptr;
    fftw_plan backward_ = nullptr;
};

}  // namespace hetmech::chx
