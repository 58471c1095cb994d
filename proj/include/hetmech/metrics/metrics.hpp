#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hetmech/common/error.hpp"
#include "hetmech/common/io.hpp"
#include "hetmech/common/rng.hpp"
#include "hetmech/pattern/pattern.hpp"

namespace hetmech::metrics {

struct RegressionScore {
    double r2 = 0.0;
    double mae = 0.0;
};

/// R2 = 1 - SS_res / SS_tot and mean absolute error.
inline RegressionScore r2_mae(std::span<const double> y_true, std::span<const double> y_pred) {
    if (y_true.empty() || y_true.size() != y_pred.size())
        throw ArgumentError("r2_mae needs equal, non-zero lengths (got " + std::to_string(y_true.size()) +
                            " and " + std::to_string(y_pred.size()) + ")");
    const double n = static_cast<double>(y_true.size());
    double mean = 0.0;
    for (double v : y_true) mean += v;
    mean /= n;
    double ss_tot = 0.0, ss_res = 0.0, abs_err = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const double e = y_true[i] - y_pred[i];
        ss_res += e * e;
        abs_err += std::abs(e);
        ss_tot += (y_true[i] - mean) * (y_true[i] - mean);
    }
    if (!(ss_tot > 0.0)) throw UndefinedMetricError("R2 is undefined when y_true has zero variance");
    return {1.0 - ss_res / ss_tot, abs_err / n};
}

inline constexpr int kDescriptorDim = 8;
inline constexpr std::array<int, 5> kCorrelationLags{1, 2, 4, 8, 16};

/// [stiff fraction, rho(1), rho(2), rho(4), rho(8), rho(16), perimeter density,
///  normalized component count]
using DescriptorVector = std::array<double, kDescriptorDim>;

/// Normalized two-point correlation of the stiff phase at lag r, periodic,
/// averaged over the x and y directions:
///   rho(r) = (S2(r) - phi^2) / (phi - phi^2).
/// A single-phase pattern is perfectly correlated and returns 1.
inline double two_point_correlation(const Pattern& p, int lag) {
    constexpr int n = kPatternSide;
    const double phi = p.stiff_fraction();
    const double var = phi - phi * phi;
    if (var <= 0.0) return 1.0;
    long both = 0;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            if (!p.at(r, c)) continue;
            both += p.at(r, (c + lag) % n);
            both += p.at((r + lag) % n, c);
        }
    const double s2 = static_cast<double>(both) / (2.0 * kPatternCells);
    return (s2 - phi * phi) / var;
}

/// Fraction of periodic nearest-neighbour pairs that cross the interface.
inline double perimeter_density(const Pattern& p) {
    constexpr int n = kPatternSide;
    long cut = 0;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            cut += p.at(r, c) != p.at(r, (c + 1) % n);
            cut += p.at(r, c) != p.at((r + 1) % n, c);
        }
    return static_cast<double>(cut) / (2.0 * kPatternCells);
}

/// Number of 4-connected components of both phases on the torus.
inline int component_count(const Pattern& p) {
    constexpr int n = kPatternSide;
    std::array<int, kPatternCells> label;
    label.fill(-1);
    std::vector<int> stack;
    int count = 0;
    for (int start = 0; start < kPatternCells; ++start) {
        if (label[start] >= 0) continue;
        const auto phase = p.cells[start];
        label[start] = count;
        stack.push_back(start);
        while (!stack.empty()) {
            const int k = stack.back();
            stack.pop_back();
            const int r = k / n, c = k % n;
            const int nb[4] = {r * n + (c + 1) % n, r * n + (c + n - 1) % n, ((r + 1) % n) * n + c,
                               ((r + n - 1) % n) * n + c};
            for (int q : nb)
                if (label[q] < 0 && p.cells[q] == phase) {
                    label[q] = count;
                    stack.push_back(q);
                }
        }
        ++count;
    }
    return count;
}

inline DescriptorVector descriptors(const Pattern& p) {
    DescriptorVector d{};
    d[0] = p.stiff_fraction();
    for (std::size_t i = 0; i < kCorrelationLags.size(); ++i) d[1 + i] = two_point_correlation(p, kCorrelationLags[i]);
    d[6] = perimeter_density(p);
    d[7] = static_cast<double>(component_count(p)) / kPatternCells;
    return d;
}

/// Rows are patterns, columns descriptors.
inline Eigen::MatrixXd descriptor_matrix(std::span<const Pattern> patterns) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(patterns.size()), kDescriptorDim);
    for (std::size_t i = 0; i < patterns.size(); ++i) {
        const auto d = descriptors(patterns[i]);
        for (int j = 0; j < kDescriptorDim; ++j) m(static_cast<Eigen::Index>(i), j) = d[j];
    }
    return m;
}

struct FrechetStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// Sample mean and unbiased covariance of the rows of `x`.
inline FrechetStats stats_from_rows(const Eigen::MatrixXd& x) {
    const auto n = x.rows();
    if (n < x.cols() + 1) throw SampleSizeError(static_cast<std::size_t>(n), static_cast<std::size_t>(x.cols() + 1));
    FrechetStats s;
    s.mean = x.colwise().mean().transpose();
    const Eigen::MatrixXd centered = x.rowwise() - s.mean.transpose();
    s.cov = centered.transpose() * centered / static_cast<double>(n - 1);
    return s;
}

inline FrechetStats descriptor_stats(std::span<const Pattern> patterns) {
    if (patterns.size() < kDescriptorDim + 1) throw SampleSizeError(patterns.size(), kDescriptorDim + 1);
    return stats_from_rows(descriptor_matrix(patterns));
}

namespace detail {

/// Square root of a symmetric PSD matrix; eigenvalues down to -tol are
/// clipped to zero, anything more negative is a domain error.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a, const char* what) {
    const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw NumericalDomainError(std::string(what) + ": eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    const double tol = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < -tol)
            throw NumericalDomainError(std::string(what) + " is not positive semidefinite (eigenvalue " +
                                       std::to_string(ev(i)) + ")");
        ev(i) = std::sqrt(std::max(ev(i), 0.0));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// Tr[(Ca Cb)^(1/2)], evaluated as Tr[(Ca^(1/2) Cb Ca^(1/2))^(1/2)].
inline double trace_sqrt_product(const Eigen::MatrixXd& ca, const Eigen::MatrixXd& cb) {
    const Eigen::MatrixXd ra = detail::psd_sqrt(ca, "covariance A");
    detail::psd_sqrt(cb, "covariance B");
    return detail::psd_sqrt(ra * cb * ra, "Ca^1/2 Cb Ca^1/2").trace();
}

/// ||ma - mb||^2 + Tr[Ca + Cb - 2 (Ca Cb)^(1/2)], clamped at 0.
inline double frechet_distance(const FrechetStats& a, const FrechetStats& b) {
    if (a.mean.size() != b.mean.size() || a.cov.rows() != b.cov.rows() || a.cov.rows() != a.mean.size() ||
        a.cov.cols() != a.cov.rows() || b.cov.cols() != b.cov.rows())
        throw ArgumentError("Frechet statistics have mismatched dimensions");
    const double mean_term = (a.mean - b.mean).squaredNorm();
    const double cov_term = a.cov.trace() + b.cov.trace() - 2.0 * trace_sqrt_product(a.cov, b.cov);
    return std::max(0.0, mean_term + cov_term);
}

/// Standard error of the Frechet distance between two descriptor samples by
/// resampling rows of each with replacement.
inline double bootstrap_frechet_se(const Eigen::MatrixXd& xa, const Eigen::MatrixXd& xb, int n_boot,
                                   std::uint64_t seed) {
    if (n_boot < 2) throw ArgumentError("bootstrap needs at least 2 replicates");
    Rng rng(seed);
    auto resample = [&](const Eigen::MatrixXd& x) {
        Eigen::MatrixXd out(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            out.row(i) = x.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(x.rows()))));
        return out;
    };
    std::vector<double> vals;
    vals.reserve(static_cast<std::size_t>(n_boot));
    for (int b = 0; b < n_boot; ++b)
        vals.push_back(frechet_distance(stats_from_rows(resample(xa)), stats_from_rows(resample(xb))));
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= n_boot;
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    return std::sqrt(var / (n_boot - 1));
}

/// Percentage histograms on bins shared by every source.
struct HistogramTable {
    std::vector<double> edges;  // n_bins + 1
    std::map<std::string, std::vector<double>> percent;

    CsvTable to_table() const {
        CsvTable t;
        t.header = {"bin_lo", "bin_hi"};
        for (const auto& [name, _] : percent) t.header.push_back(name);
        for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
            std::vector<std::string> row{format_double(edges[b]), format_double(edges[b + 1])};
            for (const auto& [_, pct] : percent) row.push_back(format_double(pct[b]));
            t.rows.push_back(std::move(row));
        }
        return t;
    }
};

inline HistogramTable histogram_report(const std::map<std::string, std::vector<double>>& values_by_source,
                                       int n_bins) {
    if (n_bins < 1) throw ArgumentError("n_bins must be >= 1");
    if (values_by_source.empty()) throw ArgumentError("histogram_report needs at least one source");
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& [name, vals] : values_by_source) {
        if (vals.empty()) throw ArgumentError("source '" + name + "' has no values");
        for (double v : vals) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (hi == lo) hi = lo + 1.0;
    HistogramTable h;
    h.edges.resize(static_cast<std::size_t>(n_bins) + 1);
    for (int b = 0; b <= n_bins; ++b) h.edges[b] = lo + (hi - lo) * b / n_bins;
    for (const auto& [name, vals] : values_by_source) {
        std::vector<double> counts(n_bins, 0.0);
        for (double v : vals) {
            int b = static_cast<int>((v - lo) / (hi - lo) * n_bins);
            counts[std::clamp(b, 0, n_bins - 1)] += 1.0;
        }
        for (auto& c : counts) c *= 100.0 / static_cast<double>(vals.size());
        h.percent[name] = std::move(counts);
    }
    return h;
}

/// Sum over bins of min(pa, pb), as a fraction in [0, 1].
inline double overlap_coefficient(const HistogramTable& h, const std::string& a, const std::string& b) {
    const auto& pa = h.percent.at(a);
    const auto& pb = h.percent.at(b);
    double s = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) s += std::min(pa[i], pb[i]);
    return s / 100.0;
}

}  // namespace hetmech::metrics
