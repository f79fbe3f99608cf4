#pragma once

// Built-in action recognizer: temporal mean/std pooling of joint coordinates
// followed by a dense softmax classifier. Snapshots are immutable once trained.

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "issm/linalg.hpp"
#include "issm/nncore.hpp"

namespace issm {

/// T x p x d joint coordinates, stored frame-major (t, joint, axis).
class SkeletonSequence {
public:
    SkeletonSequence(int frames, int joints, int dims, std::vector<double> coords,
                     std::optional<int> label = std::nullopt);

    int frames() const noexcept { return frames_; }
    int joints() const noexcept { return joints_; }
    int dims() const noexcept { return dims_; }
    const std::optional<int>& label() const noexcept { return label_; }
    double at(int t, int j, int k) const { return coords_[index(t, j, k)]; }
    const std::vector<double>& coords() const noexcept { return coords_; }

    friend bool operator==(const SkeletonSequence&, const SkeletonSequence&) = default;

private:
    std::size_t index(int t, int j, int k) const {
        return (static_cast<std::size_t>(t) * static_cast<std::size_t>(joints_) + static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(dims_) +
               static_cast<std::size_t>(k);
    }

    int frames_;
    int joints_;
    int dims_;
    std::vector<double> coords_;
    std::optional<int> label_;
};

/// [temporal mean of every coordinate, temporal population std of every coordinate],
/// each block ordered (joint, axis). Length 2*p*d.
Vector pool_features(const SkeletonSequence& x);

struct RecognizerConfig {
    std::vector<Eigen::Index> hidden{64, 32};
    int epochs = 30;
    double learning_rate = 1e-3;
    int batch_size = 16;
    /// Standardize inputs with statistics of the training set.
    bool standardize = true;
    std::uint64_t seed = 0;
};

class RecognizerSnapshot {
public:
    /// classifier must end in a softmax layer; its width is the class count and the
    /// width of the layer before it is the embedding dimension.
    RecognizerSnapshot(nn::DenseNet classifier, Vector input_shift, Vector input_scale, int train_epochs);
    explicit RecognizerSnapshot(nn::DenseNet classifier);

    const nn::DenseNet& classifier() const noexcept { return net_; }
    int class_count() const noexcept { return class_count_; }
    Eigen::Index feature_dim() const noexcept { return feature_dim_; }
    Eigen::Index input_dim() const { return net_.input_dim(); }
    int train_epoch_count() const noexcept { return train_epochs_; }

    Vector predict_proba(const Vector& input) const;
    Vector predict_proba(const SkeletonSequence& x) const;
    /// Row i is the class distribution of input row i.
    Matrix predict_proba_rows(const Matrix& inputs) const;

    Vector embed(const Vector& input) const;
    Vector embed(const SkeletonSequence& x) const;
    Matrix embed_rows(const Matrix& inputs) const;

    nlohmann::json to_json() const;
    static RecognizerSnapshot from_json(const nlohmann::json& j);

private:
    Matrix prepare(const Matrix& inputs) const;

    nn::DenseNet net_;
    Vector shift_;
    Vector scale_;
    int class_count_ = 0;
    Eigen::Index feature_dim_ = 0;
    int train_epochs_ = 0;
};

/// Cross-entropy training of a fresh classifier on rows of `inputs`.
RecognizerSnapshot train_recognizer(const Matrix& inputs, const std::vector<int>& labels, int class_count,
                                    const RecognizerConfig& cfg);
RecognizerSnapshot train_recognizer(const std::vector<SkeletonSequence>& labeled, int class_count,
                                    const RecognizerConfig& cfg);

/// Index of the largest entry; ties go to the lowest index.
int argmax_lowest(const Vector& v);

/// Fraction of rows whose argmax prediction equals the label.
double evaluate_accuracy(const RecognizerSnapshot& ar, const Matrix& inputs, const std::vector<int>& labels);
double evaluate_accuracy(const RecognizerSnapshot& ar, const std::vector<SkeletonSequence>& eval_set);

/// Row-stacked pooled features.
Matrix pool_rows(const std::vector<SkeletonSequence>& xs);

}  // namespace issm
