#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uavtrack/random.hpp"

namespace uavtrack {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(numel(shape), T{}) {}
    Tensor(Shape s, std::vector<T> d);

    std::size_t size() const { return data.size(); }
};

using TensorBuf = Tensor<float>;

enum class LayerKind : std::uint8_t { dense = 1, conv2d = 2, relu = 3, batchnorm = 4, flatten = 5 };

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    // dense: in/out features; conv2d: in/out channels; batchnorm: `in` channels.
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;

    static LayerSpec dense(std::size_t in, std::size_t out) { return {LayerKind::dense, in, out, 0, 1, 0}; }
    static LayerSpec conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride = 1,
                            std::size_t padding = 0) {
        return {LayerKind::conv2d, in, out, kernel, stride, padding};
    }
    static LayerSpec relu() { return {LayerKind::relu, 0, 0, 0, 1, 0}; }
    static LayerSpec batchnorm(std::size_t channels) { return {LayerKind::batchnorm, channels, channels, 0, 1, 0}; }
    static LayerSpec flatten() { return {LayerKind::flatten, 0, 0, 0, 1, 0}; }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

const char* to_string(LayerKind kind);

enum class Mode : std::uint8_t { inference, training };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Per-layer values recorded by a traced forward pass.
template <typename T>
struct Trace {
    Mode mode = Mode::inference;
    std::vector<Tensor<T>> inputs;  // input of each layer
    Tensor<T> output;
    // batchnorm only: normalized activations and 1/sqrt(var + eps) per channel
    std::vector<std::vector<T>> xhat;
    std::vector<std::vector<double>> inv_std;
    std::vector<std::vector<double>> batch_mean;
    std::vector<std::vector<double>> batch_var;
};

template <typename T>
struct Gradients {
    // Same layout as Network::parameters().
    std::vector<std::vector<T>> params;
    // Batch statistics per batchnorm layer, folded into running stats by sgd_step.
    std::vector<std::vector<double>> bn_mean;
    std::vector<std::vector<double>> bn_var;
    double loss = 0.0;
};

// Feed-forward stack of dense / conv2d / relu / batchnorm / flatten layers.
// Batched tensors carry a leading batch dimension in front of input_shape.
template <typename T>
class Network {
public:
    Network() = default;
    Network(Shape input_shape, std::vector<LayerSpec> specs);

    const Shape& input_shape() const { return input_shape_; }
    const Shape& output_shape() const { return shapes_.back(); }
    std::size_t output_size() const { return numel(output_shape()); }
    const std::vector<LayerSpec>& specs() const { return specs_; }

    // He-uniform weights, zero biases, unit batchnorm scale.
    void init(Rng& rng);

    Tensor<T> forward(const Tensor<T>& batch) const;
    std::vector<T> forward_one(std::span<const T> obs) const;
    Tensor<T> forward_traced(const Tensor<T>& batch, Mode mode, Trace<T>& trace) const;

    // Parameter gradients for an upstream gradient on the network output.
    Gradients<T> backward(const Trace<T>& trace, const Tensor<T>& grad_out) const;

    std::vector<std::vector<T>>& parameters() { return params_; }
    const std::vector<std::vector<T>>& parameters() const { return params_; }
    // Non-learnable batchnorm running mean/var, two entries per batchnorm layer.
    std::vector<std::vector<T>>& buffers() { return buffers_; }
    const std::vector<std::vector<T>>& buffers() const { return buffers_; }

    std::size_t param_count() const;

    // Index of the first parameter tensor owned by layer i (or npos).
    std::size_t first_param(std::size_t layer) const { return param_index_[layer]; }
    std::size_t first_buffer(std::size_t layer) const { return buffer_index_[layer]; }
    const Shape& layer_input_shape(std::size_t layer) const { return shapes_[layer]; }

    friend bool operator==(const Network&, const Network&) = default;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    Shape input_shape_;
    std::vector<LayerSpec> specs_;
    std::vector<Shape> shapes_;  // shapes_[i] is the input of layer i; back() is the output
    std::vector<std::vector<T>> params_;
    std::vector<std::vector<T>> buffers_;
    std::vector<std::size_t> param_index_;
    std::vector<std::size_t> buffer_index_;
};

using QNetwork = Network<float>;

// Mean over the batch of 1/2 (y - Q(s, a))^2 and its parameter gradients.
// Targets are constants; only the selected action's output receives gradient.
template <typename T>
Gradients<T> td_gradients(const Network<T>& net, const Tensor<T>& batch, std::span<const std::size_t> actions,
                          std::span<const double> targets, Mode mode = Mode::training);

// Single-sample form. Throws NumericError on a non-finite target.
template <typename T>
Gradients<T> backward(const Network<T>& net, std::span<const T> obs, std::size_t action, double td_target);

template <typename T>
std::vector<T> forward(const Network<T>& net, std::span<const T> obs) {
    return net.forward_one(obs);
}

template <typename T>
void sgd_step(Network<T>& net, const Gradients<T>& grads, double lr);

// Scales all gradients so their global L2 norm is at most max_norm (no-op if max_norm <= 0).
template <typename T>
void clip_gradients(Gradients<T>& grads, double max_norm);

template <typename T>
std::size_t param_count(const Network<T>& net) {
    return net.param_count();
}

template <typename T>
Network<T> clone_params(const Network<T>& src) {
    return src;
}

template <typename To, typename From>
Network<To> convert(const Network<From>& src);

// Binary format: "TFDQ", u16 version, u32 rank + u32 dims of the input shape,
// u32 layer count, then per layer: u8 kind tag, u32 count + u32 dims of the
// layer geometry, and raw little-endian f32 values of its parameters (and
// batchnorm running statistics).
template <typename T>
void save_weights(const Network<T>& net, const std::filesystem::path& path);
template <typename T>
Network<T> load_weights(const std::filesystem::path& path);

inline constexpr std::uint16_t kWeightsVersion = 1;

// Default Q-network stacks.
QNetwork make_conv_qnet(const Shape& input_shape, std::size_t channels, std::size_t hidden, bool batchnorm);
QNetwork make_mlp_qnet(std::size_t inputs, std::size_t hidden, bool batchnorm);

}  // namespace uavtrack
