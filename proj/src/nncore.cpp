#include "issm/nncore.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "issm/errors.hpp"

namespace issm::nn {

namespace {

std::uint64_t next_stamp() noexcept {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

Matrix activate(const Matrix& z, Activation a) {
    switch (a) {
        case Activation::relu:
            return z.cwiseMax(0.0);
        case Activation::identity:
            return z;
        case Activation::softmax: {
            Matrix out(z.rows(), z.cols());
            for (Eigen::Index c = 0; c < z.cols(); ++c) {
                const double top = z.col(c).maxCoeff();
                out.col(c) = (z.col(c).array() - top).exp().matrix();
                out.col(c) /= out.col(c).sum();
            }
            return out;
        }
    }
    return z;
}

std::string shape_str(Eigen::Index r, Eigen::Index c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::identity: return "identity";
        case Activation::softmax: return "softmax";
    }
    return "identity";
}

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    if (s == "softmax") return Activation::softmax;
    throw InvalidInputError("unknown activation '" + s + "'");
}

double Gradients::max_abs() const {
    double m = 0.0;
    for (const auto& w : weight) m = std::max(m, w.size() ? w.cwiseAbs().maxCoeff() : 0.0);
    for (const auto& b : bias) m = std::max(m, b.size() ? b.cwiseAbs().maxCoeff() : 0.0);
    return m;
}

Gradients& Gradients::operator+=(const Gradients& other) {
    if (other.weight.size() != weight.size()) throw ShapeError("gradient layer count mismatch");
    for (std::size_t i = 0; i < weight.size(); ++i) {
        weight[i] += other.weight[i];
        bias[i] += other.bias[i];
    }
    return *this;
}

Gradients& Gradients::operator*=(double s) {
    for (auto& w : weight) w *= s;
    for (auto& b : bias) b *= s;
    return *this;
}

DenseNet::DenseNet() : stamp_(next_stamp()) {}

DenseNet::DenseNet(std::vector<Layer> layers) : layers_(std::move(layers)), stamp_(next_stamp()) {
    validate();
}

DenseNet::DenseNet(const DenseNet& other) : layers_(other.layers_), stamp_(next_stamp()) {}

DenseNet& DenseNet::operator=(const DenseNet& other) {
    if (this != &other) {
        layers_ = other.layers_;
        restamp();
    }
    return *this;
}

DenseNet::DenseNet(DenseNet&& other) noexcept : layers_(std::move(other.layers_)), stamp_(other.stamp_) {
    other.restamp();
}

DenseNet& DenseNet::operator=(DenseNet&& other) noexcept {
    layers_ = std::move(other.layers_);
    stamp_ = other.stamp_;
    other.restamp();
    return *this;
}

void DenseNet::restamp() noexcept { stamp_ = next_stamp(); }

void DenseNet::validate() const {
    if (layers_.empty()) throw ShapeError("network needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Layer& l = layers_[i];
        if (l.weight.rows() < 1 || l.weight.cols() < 1) throw ShapeError("empty weight matrix in layer " + std::to_string(i));
        if (l.bias.size() != l.weight.rows()) {
            throw ShapeError("layer " + std::to_string(i) + ": bias length " + std::to_string(l.bias.size()) +
                             " does not match " + std::to_string(l.weight.rows()) + " outputs");
        }
        if (i > 0 && layers_[i - 1].weight.rows() != l.weight.cols()) {
            throw ShapeError("layer " + std::to_string(i) + " expects " + std::to_string(l.weight.cols()) +
                             " inputs but previous layer emits " + std::to_string(layers_[i - 1].weight.rows()));
        }
        if (l.activation == Activation::softmax && i + 1 != layers_.size()) {
            throw ShapeError("softmax is only allowed on the final layer");
        }
        if (!l.weight.allFinite() || !l.bias.allFinite()) {
            throw NumericError("layer " + std::to_string(i) + " has non-finite parameters");
        }
    }
}

DenseNet DenseNet::glorot(const std::vector<Eigen::Index>& widths, const std::vector<Activation>& activations,
                          Rng& rng) {
    if (widths.size() < 2 || widths.size() != activations.size() + 1) {
        throw ShapeError("glorot: need widths.size() == activations.size() + 1 >= 2");
    }
    std::vector<Layer> layers;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const Eigen::Index in = widths[i];
        const Eigen::Index out = widths[i + 1];
        if (in < 1 || out < 1) throw ShapeError("glorot: widths must be positive");
        const double a = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> u(-a, a);
        Layer l;
        l.weight.resize(out, in);
        // Row-major fill order so the draw sequence matches the flat layout.
        for (Eigen::Index r = 0; r < out; ++r)
            for (Eigen::Index c = 0; c < in; ++c) l.weight(r, c) = u(rng);
        l.bias = Vector::Zero(out);
        l.activation = activations[i];
        layers.push_back(std::move(l));
    }
    return DenseNet(std::move(layers));
}

Eigen::Index DenseNet::input_dim() const {
    if (layers_.empty()) throw UsageError("empty network");
    return layers_.front().weight.cols();
}

Eigen::Index DenseNet::output_dim() const {
    if (layers_.empty()) throw UsageError("empty network");
    return layers_.back().weight.rows();
}

std::size_t DenseNet::param_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

Matrix DenseNet::forward_prefix(const Matrix& inputs, std::size_t layer_count) const {
    if (layer_count > layers_.size()) throw UsageError("forward_prefix: too many layers requested");
    if (inputs.rows() != input_dim()) {
        throw ShapeError("network expects input dimension " + std::to_string(input_dim()) + ", got " +
                         std::to_string(inputs.rows()));
    }
    Matrix a = inputs;
    for (std::size_t i = 0; i < layer_count; ++i) {
        const Layer& l = layers_[i];
        Matrix z = l.weight * a;
        z.colwise() += l.bias;
        a = activate(z, l.activation);
    }
    if (!a.allFinite()) throw NumericError("non-finite activations in forward pass");
    return a;
}

Matrix DenseNet::forward_batch(const Matrix& inputs) const { return forward_prefix(inputs, layers_.size()); }

Vector DenseNet::forward(const Vector& input) const {
    return forward_prefix(Matrix(input), layers_.size()).col(0);
}

ForwardTrace DenseNet::trace(const Matrix& inputs) const {
    if (inputs.rows() != input_dim()) {
        throw ShapeError("network expects input dimension " + std::to_string(input_dim()) + ", got " +
                         std::to_string(inputs.rows()));
    }
    ForwardTrace t;
    t.stamp_ = stamp_;
    Matrix a = inputs;
    for (const Layer& l : layers_) {
        t.inputs_.push_back(a);
        Matrix z = l.weight * a;
        z.colwise() += l.bias;
        a = activate(z, l.activation);
        t.pre_.push_back(std::move(z));
        t.outputs_.push_back(a);
    }
    if (!a.allFinite()) throw NumericError("non-finite activations in forward pass");
    return t;
}

ForwardTrace DenseNet::trace(const Vector& input) const { return trace(Matrix(input)); }

Gradients DenseNet::backward(const ForwardTrace& trace, const Matrix& loss_grad, GradientWrt wrt) const {
    if (trace.stamp_ != stamp_ || trace.outputs_.size() != layers_.size()) {
        throw UsageError("backward: forward trace is stale or belongs to another network");
    }
    const Matrix& out = trace.outputs_.back();
    if (loss_grad.rows() != out.rows() || loss_grad.cols() != out.cols()) {
        throw ShapeError("backward: loss gradient is " + shape_str(loss_grad.rows(), loss_grad.cols()) +
                         ", output is " + shape_str(out.rows(), out.cols()));
    }

    Gradients g;
    g.weight.resize(layers_.size());
    g.bias.resize(layers_.size());

    Matrix delta = loss_grad;  // gradient w.r.t. current layer output
    for (std::size_t k = layers_.size(); k-- > 0;) {
        const Layer& l = layers_[k];
        Matrix dz;
        const bool logits_given = (k + 1 == layers_.size()) && wrt == GradientWrt::logits;
        if (logits_given) {
            dz = delta;
        } else {
            switch (l.activation) {
                case Activation::identity:
                    dz = delta;
                    break;
                case Activation::relu:
                    dz = delta.cwiseProduct((trace.pre_[k].array() > 0.0).cast<double>().matrix());
                    break;
                case Activation::softmax: {
                    const Matrix& p = trace.outputs_[k];
                    dz.resize(p.rows(), p.cols());
                    for (Eigen::Index c = 0; c < p.cols(); ++c) {
                        const double dot = p.col(c).dot(delta.col(c));
                        dz.col(c) = p.col(c).cwiseProduct((delta.col(c).array() - dot).matrix());
                    }
                    break;
                }
            }
        }
        g.weight[k] = dz * trace.inputs_[k].transpose();
        g.bias[k] = dz.rowwise().sum();
        if (k > 0) delta = l.weight.transpose() * dz;
    }
    return g;
}

Gradients DenseNet::backward(const ForwardTrace& trace, const Vector& loss_grad, GradientWrt wrt) const {
    return backward(trace, Matrix(loss_grad), wrt);
}

Gradients DenseNet::zero_gradients() const {
    Gradients g;
    for (const auto& l : layers_) {
        g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
        g.bias.push_back(Vector::Zero(l.bias.size()));
    }
    return g;
}

void DenseNet::apply_delta(const Gradients& delta, double scale) {
    if (delta.weight.size() != layers_.size() || delta.bias.size() != layers_.size()) {
        throw ShapeError("parameter update has wrong layer count");
    }
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (delta.weight[i].rows() != layers_[i].weight.rows() || delta.weight[i].cols() != layers_[i].weight.cols() ||
            delta.bias[i].size() != layers_[i].bias.size()) {
            throw ShapeError("parameter update shape mismatch in layer " + std::to_string(i));
        }
    }
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        layers_[i].weight -= scale * delta.weight[i];
        layers_[i].bias -= scale * delta.bias[i];
    }
    restamp();
}

void DenseNet::set_layer(std::size_t i, Matrix weight, Vector bias) {
    Layer& l = layers_.at(i);
    if (weight.rows() != l.weight.rows() || weight.cols() != l.weight.cols() || bias.size() != l.bias.size()) {
        throw ShapeError("set_layer: shape mismatch in layer " + std::to_string(i));
    }
    l.weight = std::move(weight);
    l.bias = std::move(bias);
    restamp();
}

Vector DenseNet::flat_parameters() const {
    Vector flat(static_cast<Eigen::Index>(param_count()));
    Eigen::Index k = 0;
    for (const auto& l : layers_) {
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) flat[k++] = l.weight(r, c);
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) flat[k++] = l.bias[r];
    }
    return flat;
}

void DenseNet::set_flat_parameters(const Vector& flat) {
    if (flat.size() != static_cast<Eigen::Index>(param_count())) {
        throw ShapeError("flat parameter vector has " + std::to_string(flat.size()) + " entries, expected " +
                         std::to_string(param_count()));
    }
    if (!flat.allFinite()) throw NumericError("non-finite parameters");
    Eigen::Index k = 0;
    for (auto& l : layers_) {
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = flat[k++];
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = flat[k++];
    }
    restamp();
}

bool DenseNet::same_shape(const DenseNet& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].weight.rows() != other.layers_[i].weight.rows() ||
            layers_[i].weight.cols() != other.layers_[i].weight.cols() ||
            layers_[i].activation != other.layers_[i].activation) {
            return false;
        }
    }
    return true;
}

bool operator==(const DenseNet& a, const DenseNet& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
        if (a.layers_[i].weight != b.layers_[i].weight || a.layers_[i].bias != b.layers_[i].bias) return false;
    }
    return true;
}

nlohmann::json DenseNet::to_json() const {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : layers_) {
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(l.weight.size()));
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
        std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
        layers.push_back({{"inputs", l.weight.cols()},
                          {"outputs", l.weight.rows()},
                          {"activation", to_string(l.activation)},
                          {"weight", w},
                          {"bias", b}});
    }
    return {{"format", kCheckpointFormat}, {"layers", layers}};
}

DenseNet DenseNet::from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat) {
            throw InvalidInputError("unsupported network checkpoint format '" + j.at("format").get<std::string>() + "'");
        }
        std::vector<Layer> layers;
        for (const auto& lj : j.at("layers")) {
            const auto in = lj.at("inputs").get<Eigen::Index>();
            const auto out = lj.at("outputs").get<Eigen::Index>();
            const auto w = lj.at("weight").get<std::vector<double>>();
            const auto b = lj.at("bias").get<std::vector<double>>();
            if (in < 1 || out < 1 || static_cast<Eigen::Index>(w.size()) != in * out ||
                static_cast<Eigen::Index>(b.size()) != out) {
                throw ShapeError("checkpoint layer arrays do not match declared shape");
            }
            Layer l;
            l.weight.resize(out, in);
            std::size_t k = 0;
            for (Eigen::Index r = 0; r < out; ++r)
                for (Eigen::Index c = 0; c < in; ++c) l.weight(r, c) = w[k++];
            l.bias = Eigen::Map<const Vector>(b.data(), out);
            l.activation = activation_from_string(lj.at("activation").get<std::string>());
            layers.push_back(std::move(l));
        }
        return DenseNet(std::move(layers));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInputError(std::string("malformed network checkpoint: ") + e.what());
    }
}

Gradients flat_to_gradients(const DenseNet& shape, const Vector& flat) {
    if (flat.size() != static_cast<Eigen::Index>(shape.param_count())) throw ShapeError("flat gradient size mismatch");
    Gradients g = shape.zero_gradients();
    Eigen::Index k = 0;
    for (std::size_t i = 0; i < g.weight.size(); ++i) {
        for (Eigen::Index r = 0; r < g.weight[i].rows(); ++r)
            for (Eigen::Index c = 0; c < g.weight[i].cols(); ++c) g.weight[i](r, c) = flat[k++];
        for (Eigen::Index r = 0; r < g.bias[i].size(); ++r) g.bias[i][r] = flat[k++];
    }
    return g;
}

Vector gradients_to_flat(const Gradients& g) {
    Eigen::Index n = 0;
    for (std::size_t i = 0; i < g.weight.size(); ++i) n += g.weight[i].size() + g.bias[i].size();
    Vector flat(n);
    Eigen::Index k = 0;
    for (std::size_t i = 0; i < g.weight.size(); ++i) {
        for (Eigen::Index r = 0; r < g.weight[i].rows(); ++r)
            for (Eigen::Index c = 0; c < g.weight[i].cols(); ++c) flat[k++] = g.weight[i](r, c);
        for (Eigen::Index r = 0; r < g.bias[i].size(); ++r) flat[k++] = g.bias[i][r];
    }
    return flat;
}

OptimizerState::OptimizerState(const DenseNet& net, AdamConfig cfg)
    : config(cfg), first_moment(net.zero_gradients()), second_moment(net.zero_gradients()) {
    if (!(cfg.learning_rate >= 0.0) || !(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0) ||
        !(cfg.epsilon > 0.0)) {
        throw InvalidInputError("invalid Adam hyperparameters");
    }
}

void optimizer_step(DenseNet& net, const Gradients& grads, OptimizerState& state) {
    const auto& layers = net.layers();
    if (grads.weight.size() != layers.size() || state.first_moment.weight.size() != layers.size()) {
        throw ShapeError("optimizer step: layer count mismatch");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (grads.weight[i].rows() != layers[i].weight.rows() || grads.weight[i].cols() != layers[i].weight.cols() ||
            grads.bias[i].size() != layers[i].bias.size() ||
            state.first_moment.weight[i].rows() != layers[i].weight.rows() ||
            state.first_moment.weight[i].cols() != layers[i].weight.cols()) {
            throw ShapeError("optimizer step: shape mismatch in layer " + std::to_string(i));
        }
    }

    const AdamConfig& c = state.config;
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double correct1 = 1.0 - std::pow(c.beta1, t);
    const double correct2 = 1.0 - std::pow(c.beta2, t);

    Gradients step = net.zero_gradients();
    auto update = [&](auto& m, auto& v, const auto& g, auto& out) {
        m = c.beta1 * m + (1.0 - c.beta1) * g;
        v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
        out = (m.array() / correct1) / ((v.array() / correct2).sqrt() + c.epsilon);
    };
    for (std::size_t i = 0; i < layers.size(); ++i) {
        update(state.first_moment.weight[i], state.second_moment.weight[i], grads.weight[i], step.weight[i]);
        update(state.first_moment.bias[i], state.second_moment.bias[i], grads.bias[i], step.bias[i]);
    }
    net.apply_delta(step, c.learning_rate);
}

}  // namespace issm::nn
