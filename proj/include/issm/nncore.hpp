#pragma once

// Dense feed-forward networks with exact reverse-mode gradients and Adam.
// Batches are matrices whose columns are samples.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "issm/linalg.hpp"
#include "issm/rng.hpp"

namespace issm::nn {

enum class Activation { relu, identity, softmax };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct Layer {
    Matrix weight;  // out x in
    Vector bias;    // out
    Activation activation = Activation::identity;
};

/// Per-layer parameter gradients (or any per-parameter quantity with the same shape).
struct Gradients {
    std::vector<Matrix> weight;
    std::vector<Vector> bias;

    double max_abs() const;
    Gradients& operator+=(const Gradients& other);
    Gradients& operator*=(double s);
};

/// Which quantity backward() receives for the final layer.
enum class GradientWrt {
    output,  // d loss / d (post-activation output)
    logits   // d loss / d (final pre-activation); e.g. p - y for softmax cross-entropy
};

class DenseNet;

/// Activations recorded by DenseNet::trace for one batch. Bound to the exact
/// parameter state of the net that produced it.
class ForwardTrace {
public:
    const Matrix& output() const { return outputs_.back(); }
    Eigen::Index batch_size() const { return outputs_.back().cols(); }

private:
    friend class DenseNet;
    std::uint64_t stamp_ = 0;
    std::vector<Matrix> inputs_;  // input to each layer
    std::vector<Matrix> pre_;     // pre-activation of each layer
    std::vector<Matrix> outputs_; // post-activation of each layer
};

class DenseNet {
public:
    DenseNet();
    explicit DenseNet(std::vector<Layer> layers);
    DenseNet(const DenseNet& other);
    DenseNet& operator=(const DenseNet& other);
    DenseNet(DenseNet&& other) noexcept;
    DenseNet& operator=(DenseNet&& other) noexcept;

    /// Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)); zero biases.
    /// widths has one more entry than activations.
    static DenseNet glorot(const std::vector<Eigen::Index>& widths,
                           const std::vector<Activation>& activations, Rng& rng);

    Vector forward(const Vector& input) const;
    Matrix forward_batch(const Matrix& inputs) const;
    /// Output of the first `layer_count` layers (layer_count <= size()).
    Matrix forward_prefix(const Matrix& inputs, std::size_t layer_count) const;

    ForwardTrace trace(const Matrix& inputs) const;
    ForwardTrace trace(const Vector& input) const;

    /// Exact gradients of a scalar loss summed over the traced batch. Throws
    /// UsageError if the trace was produced by different parameters.
    Gradients backward(const ForwardTrace& trace, const Matrix& loss_grad,
                       GradientWrt wrt = GradientWrt::output) const;
    Gradients backward(const ForwardTrace& trace, const Vector& loss_grad,
                       GradientWrt wrt = GradientWrt::output) const;

    Gradients zero_gradients() const;

    /// Applies params <- params - scale * delta, shape-checked.
    void apply_delta(const Gradients& delta, double scale);

    std::size_t size() const noexcept { return layers_.size(); }
    const std::vector<Layer>& layers() const noexcept { return layers_; }
    const Layer& layer(std::size_t i) const { return layers_.at(i); }
    void set_layer(std::size_t i, Matrix weight, Vector bias);
    Eigen::Index input_dim() const;
    Eigen::Index output_dim() const;
    std::size_t param_count() const noexcept;

    /// Row-major weights then bias, layer by layer.
    Vector flat_parameters() const;
    void set_flat_parameters(const Vector& flat);
    bool same_shape(const DenseNet& other) const;

    /// nncore_v1 checkpoint object.
    nlohmann::json to_json() const;
    static DenseNet from_json(const nlohmann::json& j);

    friend bool operator==(const DenseNet& a, const DenseNet& b);

private:
    void validate() const;
    void restamp() noexcept;

    std::vector<Layer> layers_;
    std::uint64_t stamp_ = 0;
};

Gradients flat_to_gradients(const DenseNet& shape, const Vector& flat);
Vector gradients_to_flat(const Gradients& g);

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptimizerState {
    OptimizerState() = default;
    OptimizerState(const DenseNet& net, AdamConfig cfg);

    AdamConfig config;
    Gradients first_moment;
    Gradients second_moment;
    std::int64_t step_count = 0;
};

/// One bias-corrected adaptive-moment step; increments state.step_count.
void optimizer_step(DenseNet& net, const Gradients& grads, OptimizerState& state);

inline constexpr const char* kCheckpointFormat = "nncore_v1";

}  // namespace issm::nn
