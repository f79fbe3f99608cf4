#pragma once

// RBF-kernel maximum mean discrepancy between two embedding sets.

#include <cstdint>
#include <optional>

#include "issm/linalg.hpp"

namespace issm {

enum class FeatureOrigin { labeled, unlabeled, reward, candidate };

/// n x m matrix of embeddings, one sample per row. n, m >= 1 and every entry finite.
class FeatureMatrix {
public:
    FeatureMatrix(Matrix rows, FeatureOrigin origin);

    const Matrix& rows() const noexcept { return rows_; }
    FeatureOrigin origin() const noexcept { return origin_; }
    Eigen::Index count() const noexcept { return rows_.rows(); }
    Eigen::Index dim() const noexcept { return rows_.cols(); }

private:
    Matrix rows_;
    FeatureOrigin origin_;
};

enum class BandwidthMode { fixed, median_heuristic };

struct KernelConfig {
    double sigma = 1.0;
    BandwidthMode mode = BandwidthMode::median_heuristic;
    /// Sides with more rows than this are subsampled (seeded, without replacement).
    Eigen::Index max_rows_per_side = 4096;
    std::uint64_t subsample_seed = 0;

    static KernelConfig fixed(double sigma);
    static KernelConfig median();
};

/// exp(-|x - y|^2 / (2 sigma^2)).
double rbf_kernel(const Vector& x, const Vector& y, double sigma);

/// Median of pairwise Euclidean distances over distinct unordered row pairs.
/// Falls back to the smallest nonzero distance when the median is 0, and to 1
/// when all rows coincide.
double median_bandwidth(const FeatureMatrix& points);

/// Bandwidth the kernel config resolves to for this pair of sets.
double resolve_bandwidth(const FeatureMatrix& sl, const FeatureMatrix& su, const KernelConfig& kcfg);

/// Biased (V-statistic) squared MMD, diagonal terms included.
double mmd(const FeatureMatrix& sl, const FeatureMatrix& su, const KernelConfig& kcfg);

}  // namespace issm
