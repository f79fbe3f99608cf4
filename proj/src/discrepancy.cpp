#include "issm/discrepancy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "issm/errors.hpp"
#include "issm/rng.hpp"

namespace issm {

namespace {

constexpr Eigen::Index kBlock = 256;

Matrix subsample_rows(const Matrix& m, Eigen::Index limit, std::uint64_t seed) {
    if (m.rows() <= limit) return m;
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(m.rows()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    Rng rng(seed);
    for (Eigen::Index i = 0; i < limit; ++i) {
        std::uniform_int_distribution<Eigen::Index> pick(i, m.rows() - 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    std::sort(idx.begin(), idx.begin() + limit);
    Matrix out(limit, m.cols());
    for (Eigen::Index i = 0; i < limit; ++i) out.row(i) = m.row(idx[static_cast<std::size_t>(i)]);
    return out;
}

// Sum of k(a_i, b_j) over all pairs. Rows are accumulated left to right within
// fixed-size blocks and block partials are then added in block order.
double kernel_sum(const Matrix& a, const Matrix& b, double sigma) {
    const double inv = 1.0 / (2.0 * sigma * sigma);
    double total = 0.0;
    for (Eigen::Index start = 0; start < a.rows(); start += kBlock) {
        const Eigen::Index stop = std::min(a.rows(), start + kBlock);
        double block = 0.0;
        for (Eigen::Index i = start; i < stop; ++i) {
            double row = 0.0;
            for (Eigen::Index j = 0; j < b.rows(); ++j) {
                row += std::exp(-(a.row(i) - b.row(j)).squaredNorm() * inv);
            }
            block += row;
        }
        total += block;
    }
    return total;
}

// Cross term with a canonical operand order so that swapping the two sets
// reproduces the same summation sequence bit for bit.
double cross_kernel_sum(const Matrix& a, const Matrix& b, double sigma) {
    bool a_first = a.rows() != b.rows() ? a.rows() > b.rows() : true;
    if (a.rows() == b.rows()) {
        const double* x = a.data();
        const double* y = b.data();
        const auto size = a.size();
        for (Eigen::Index i = 0; i < size; ++i) {
            if (x[i] != y[i]) {
                a_first = x[i] < y[i];
                break;
            }
        }
    }
    return a_first ? kernel_sum(a, b, sigma) : kernel_sum(b, a, sigma);
}

}  // namespace

FeatureMatrix::FeatureMatrix(Matrix rows, FeatureOrigin origin) : rows_(std::move(rows)), origin_(origin) {
    if (rows_.rows() < 1 || rows_.cols() < 1) {
        throw InsufficientDataError("feature matrix needs at least one row and one column");
    }
    if (!rows_.allFinite()) throw InvalidInputError("feature matrix has non-finite entries");
}

KernelConfig KernelConfig::fixed(double sigma) {
    KernelConfig k;
    k.sigma = sigma;
    k.mode = BandwidthMode::fixed;
    return k;
}

KernelConfig KernelConfig::median() { return KernelConfig{}; }

double rbf_kernel(const Vector& x, const Vector& y, double sigma) {
    if (x.size() != y.size()) {
        throw ShapeError("rbf kernel: dimension mismatch " + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()));
    }
    if (!(sigma > 0.0)) throw InvalidInputError("rbf kernel: sigma must be positive");
    return std::exp(-(x - y).squaredNorm() / (2.0 * sigma * sigma));
}

double median_bandwidth(const FeatureMatrix& points) {
    const Matrix& m = points.rows();
    const Eigen::Index n = m.rows();
    if (n < 2) throw InsufficientDataError("median bandwidth needs at least two rows");

    std::vector<double> dist;
    dist.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    double smallest_nonzero = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double d = (m.row(i) - m.row(j)).norm();
            dist.push_back(d);
            if (d > 0.0) smallest_nonzero = std::min(smallest_nonzero, d);
        }
    }
    if (!std::isfinite(smallest_nonzero)) return 1.0;

    const std::size_t half = dist.size() / 2;
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(half), dist.end());
    double median = dist[half];
    if (dist.size() % 2 == 0) {
        const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(half));
        median = 0.5 * (median + lower);
    }
    return median > 0.0 ? median : smallest_nonzero;
}

double resolve_bandwidth(const FeatureMatrix& sl, const FeatureMatrix& su, const KernelConfig& kcfg) {
    if (kcfg.mode == BandwidthMode::fixed) {
        if (!(kcfg.sigma > 0.0) || !std::isfinite(kcfg.sigma)) {
            throw InvalidInputError("fixed kernel bandwidth must be positive");
        }
        return kcfg.sigma;
    }
    Matrix all(sl.count() + su.count(), sl.dim());
    all << sl.rows(), su.rows();
    if (all.rows() < 2) return 1.0;
    return median_bandwidth(FeatureMatrix(std::move(all), FeatureOrigin::candidate));
}

double mmd(const FeatureMatrix& sl, const FeatureMatrix& su, const KernelConfig& kcfg) {
    if (sl.dim() != su.dim()) {
        throw ShapeError("mmd: embedding dimensions differ (" + std::to_string(sl.dim()) + " vs " +
                         std::to_string(su.dim()) + ")");
    }
    const FeatureMatrix p(subsample_rows(sl.rows(), kcfg.max_rows_per_side,
                                         derive_seed(kcfg.subsample_seed, "mmd.labeled")),
                          sl.origin());
    const FeatureMatrix q(subsample_rows(su.rows(), kcfg.max_rows_per_side,
                                         derive_seed(kcfg.subsample_seed, "mmd.unlabeled")),
                          su.origin());
    const double sigma = resolve_bandwidth(p, q, kcfg);

    const double nl = static_cast<double>(p.count());
    const double nu = static_cast<double>(q.count());
    const double kll = kernel_sum(p.rows(), p.rows(), sigma) / (nl * nl);
    const double kuu = kernel_sum(q.rows(), q.rows(), sigma) / (nu * nu);
    const double klu = cross_kernel_sum(p.rows(), q.rows(), sigma) / (nl * nu);
    return kll + kuu - 2.0 * klu;
}

}  // namespace issm
