#include "issm/recognizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "issm/errors.hpp"

namespace issm {

SkeletonSequence::SkeletonSequence(int frames, int joints, int dims, std::vector<double> coords,
                                   std::optional<int> label)
    : frames_(frames), joints_(joints), dims_(dims), coords_(std::move(coords)), label_(label) {
    if (frames_ < 1) throw InsufficientDataError("skeleton sequence has no frames");
    if (joints_ < 1 || dims_ < 1) throw ShapeError("skeleton sequence needs at least one joint and one axis");
    const auto expected = static_cast<std::size_t>(frames_) * static_cast<std::size_t>(joints_) *
                          static_cast<std::size_t>(dims_);
    if (coords_.size() != expected) {
        throw ShapeError("skeleton sequence expects " + std::to_string(expected) + " coordinates, got " +
                         std::to_string(coords_.size()));
    }
    for (double v : coords_) {
        if (!std::isfinite(v)) throw InvalidInputError("skeleton sequence has non-finite coordinates");
    }
    if (label_ && *label_ < 0) throw InvalidInputError("negative class label");
}

Vector pool_features(const SkeletonSequence& x) {
    const int width = x.joints() * x.dims();
    Vector mean = Vector::Zero(width);
    for (int t = 0; t < x.frames(); ++t)
        for (int j = 0; j < x.joints(); ++j)
            for (int k = 0; k < x.dims(); ++k) mean[j * x.dims() + k] += x.at(t, j, k);
    mean /= static_cast<double>(x.frames());

    Vector var = Vector::Zero(width);
    for (int t = 0; t < x.frames(); ++t)
        for (int j = 0; j < x.joints(); ++j)
            for (int k = 0; k < x.dims(); ++k) {
                const double d = x.at(t, j, k) - mean[j * x.dims() + k];
                var[j * x.dims() + k] += d * d;
            }
    var /= static_cast<double>(x.frames());

    Vector out(2 * width);
    out << mean, var.cwiseSqrt();
    return out;
}

Matrix pool_rows(const std::vector<SkeletonSequence>& xs) {
    if (xs.empty()) return Matrix(0, 0);
    const Vector first = pool_features(xs.front());
    Matrix out(static_cast<Eigen::Index>(xs.size()), first.size());
    out.row(0) = first.transpose();
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const Vector f = pool_features(xs[i]);
        if (f.size() != first.size()) throw ShapeError("sequences with different joint layouts");
        out.row(static_cast<Eigen::Index>(i)) = f.transpose();
    }
    return out;
}

RecognizerSnapshot::RecognizerSnapshot(nn::DenseNet classifier, Vector input_shift, Vector input_scale,
                                       int train_epochs)
    : net_(std::move(classifier)), shift_(std::move(input_shift)), scale_(std::move(input_scale)),
      train_epochs_(train_epochs) {
    const auto& layers = net_.layers();
    if (layers.size() < 2) throw ShapeError("recognizer classifier needs a hidden layer and a softmax head");
    if (layers.back().activation != nn::Activation::softmax) {
        throw ShapeError("recognizer classifier must end in softmax");
    }
    class_count_ = static_cast<int>(net_.output_dim());
    feature_dim_ = layers[layers.size() - 2].weight.rows();
    if (shift_.size() != net_.input_dim() || scale_.size() != net_.input_dim()) {
        throw ShapeError("input normalization does not match classifier input dimension");
    }
}

RecognizerSnapshot::RecognizerSnapshot(nn::DenseNet classifier)
    : RecognizerSnapshot(classifier, Vector::Zero(classifier.input_dim()), Vector::Ones(classifier.input_dim()), 0) {}

Matrix RecognizerSnapshot::prepare(const Matrix& inputs) const {
    if (inputs.cols() != net_.input_dim()) {
        throw ShapeError("recognizer expects " + std::to_string(net_.input_dim()) + " input features, got " +
                         std::to_string(inputs.cols()));
    }
    Matrix cols = inputs.transpose();
    cols.colwise() -= shift_;
    cols.array().colwise() *= scale_.array();
    return cols;
}

Matrix RecognizerSnapshot::predict_proba_rows(const Matrix& inputs) const {
    return net_.forward_batch(prepare(inputs)).transpose();
}

Vector RecognizerSnapshot::predict_proba(const Vector& input) const {
    return predict_proba_rows(input.transpose()).row(0).transpose();
}

Vector RecognizerSnapshot::predict_proba(const SkeletonSequence& x) const { return predict_proba(pool_features(x)); }

Matrix RecognizerSnapshot::embed_rows(const Matrix& inputs) const {
    return net_.forward_prefix(prepare(inputs), net_.size() - 1).transpose();
}

Vector RecognizerSnapshot::embed(const Vector& input) const { return embed_rows(input.transpose()).row(0).transpose(); }

Vector RecognizerSnapshot::embed(const SkeletonSequence& x) const { return embed(pool_features(x)); }

nlohmann::json RecognizerSnapshot::to_json() const {
    return {{"format", "recognizer_v1"},
            {"class_count", class_count_},
            {"feature_dim", feature_dim_},
            {"train_epochs", train_epochs_},
            {"pooling", "temporal_mean_std"},
            {"input_shift", std::vector<double>(shift_.data(), shift_.data() + shift_.size())},
            {"input_scale", std::vector<double>(scale_.data(), scale_.data() + scale_.size())},
            {"classifier", net_.to_json()}};
}

RecognizerSnapshot RecognizerSnapshot::from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "recognizer_v1") throw InvalidInputError("not a recognizer checkpoint");
        const auto shift = j.at("input_shift").get<std::vector<double>>();
        const auto scale = j.at("input_scale").get<std::vector<double>>();
        RecognizerSnapshot r(nn::DenseNet::from_json(j.at("classifier")),
                             Eigen::Map<const Vector>(shift.data(), static_cast<Eigen::Index>(shift.size())),
                             Eigen::Map<const Vector>(scale.data(), static_cast<Eigen::Index>(scale.size())),
                             j.at("train_epochs").get<int>());
        if (r.class_count() != j.at("class_count").get<int>() ||
            r.feature_dim() != j.at("feature_dim").get<Eigen::Index>()) {
            throw ShapeError("recognizer header disagrees with classifier shape");
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInputError(std::string("malformed recognizer checkpoint: ") + e.what());
    }
}

RecognizerSnapshot train_recognizer(const Matrix& inputs, const std::vector<int>& labels, int class_count,
                                    const RecognizerConfig& cfg) {
    const Eigen::Index n = inputs.rows();
    if (n == 0) throw InsufficientDataError("cannot train a recognizer on an empty labeled set");
    if (static_cast<Eigen::Index>(labels.size()) != n) throw ShapeError("one label per input row required");
    if (class_count < 2) throw ConfigError("recognizer needs at least two classes");
    for (int y : labels) {
        if (y < 0 || y >= class_count) throw InvalidInputError("label " + std::to_string(y) + " out of range");
    }
    if (!inputs.allFinite()) throw InvalidInputError("non-finite recognizer inputs");
    if (cfg.epochs < 0 || cfg.batch_size < 1 || !(cfg.learning_rate >= 0.0)) {
        throw ConfigError("invalid recognizer training configuration");
    }

    Vector shift = Vector::Zero(inputs.cols());
    Vector scale = Vector::Ones(inputs.cols());
    if (cfg.standardize) {
        shift = inputs.colwise().mean().transpose();
        const Vector sd = ((inputs.rowwise() - shift.transpose()).array().square().colwise().mean()).sqrt().transpose();
        scale = sd.unaryExpr([](double s) { return 1.0 / std::max(s, 1e-3); });
    }

    Rng rng(cfg.seed);
    std::vector<Eigen::Index> widths{inputs.cols()};
    std::vector<nn::Activation> acts;
    for (Eigen::Index h : cfg.hidden) {
        widths.push_back(h);
        acts.push_back(nn::Activation::relu);
    }
    widths.push_back(class_count);
    acts.push_back(nn::Activation::softmax);
    nn::DenseNet net = nn::DenseNet::glorot(widths, acts, rng);
    nn::OptimizerState opt(net, nn::AdamConfig{cfg.learning_rate});

    Matrix x = inputs.transpose();
    x.colwise() -= shift;
    x.array().colwise() *= scale.array();

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
            const Eigen::Index stop = std::min(n, start + cfg.batch_size);
            const Eigen::Index b = stop - start;
            Matrix batch(x.rows(), b);
            Matrix onehot = Matrix::Zero(class_count, b);
            for (Eigen::Index i = 0; i < b; ++i) {
                const Eigen::Index row = order[static_cast<std::size_t>(start + i)];
                batch.col(i) = x.col(row);
                onehot(labels[static_cast<std::size_t>(row)], i) = 1.0;
            }
            const nn::ForwardTrace tr = net.trace(batch);
            const Matrix grad = (tr.output() - onehot) / static_cast<double>(b);
            nn::optimizer_step(net, net.backward(tr, grad, nn::GradientWrt::logits), opt);
        }
    }
    return RecognizerSnapshot(std::move(net), std::move(shift), std::move(scale), cfg.epochs);
}

RecognizerSnapshot train_recognizer(const std::vector<SkeletonSequence>& labeled, int class_count,
                                    const RecognizerConfig& cfg) {
    if (labeled.empty()) throw InsufficientDataError("cannot train a recognizer on an empty labeled set");
    std::vector<int> labels;
    labels.reserve(labeled.size());
    for (const auto& s : labeled) {
        if (!s.label()) throw InvalidInputError("training sequence without label");
        labels.push_back(*s.label());
    }
    return train_recognizer(pool_rows(labeled), labels, class_count, cfg);
}

int argmax_lowest(const Vector& v) {
    int best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = static_cast<int>(i);
    }
    return best;
}

double evaluate_accuracy(const RecognizerSnapshot& ar, const Matrix& inputs, const std::vector<int>& labels) {
    if (inputs.rows() == 0) throw InsufficientDataError("accuracy on an empty evaluation set");
    if (static_cast<Eigen::Index>(labels.size()) != inputs.rows()) throw ShapeError("one label per input row required");
    const Matrix probs = ar.predict_proba_rows(inputs);
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        if (argmax_lowest(probs.row(i).transpose()) == labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(inputs.rows());
}

double evaluate_accuracy(const RecognizerSnapshot& ar, const std::vector<SkeletonSequence>& eval_set) {
    if (eval_set.empty()) throw InsufficientDataError("accuracy on an empty evaluation set");
    std::vector<int> labels;
    for (const auto& s : eval_set) {
        if (!s.label()) throw InvalidInputError("evaluation sequence without label");
        labels.push_back(*s.label());
    }
    return evaluate_accuracy(ar, pool_rows(eval_set), labels);
}

}  // namespace issm
