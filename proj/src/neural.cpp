#include "uavtrack/neural.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "uavtrack/errors.hpp"
#include "uavtrack/sim_core.hpp"

namespace uavtrack {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != data.size()) {
        throw ShapeError("tensor shape " + shape_string(shape) + " does not match " + std::to_string(data.size()) +
                         " values");
    }
}

const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::batchnorm: return "batchnorm";
        case LayerKind::flatten: return "flatten";
    }
    return "?";
}

namespace {

std::string layer_name(std::size_t i, const LayerSpec& s) {
    return "layer " + std::to_string(i) + " (" + to_string(s.kind) + ")";
}

Shape output_shape_of(std::size_t i, const LayerSpec& s, const Shape& in) {
    switch (s.kind) {
        case LayerKind::dense:
            if (in.size() != 1 || in[0] != s.in) {
                throw ShapeError(layer_name(i, s) + ": expected input [" + std::to_string(s.in) + "], got " +
                                 shape_string(in));
            }
            if (s.out == 0) throw ShapeError(layer_name(i, s) + ": zero outputs");
            return {s.out};
        case LayerKind::conv2d: {
            if (in.size() != 3 || in[0] != s.in) {
                throw ShapeError(layer_name(i, s) + ": expected input [" + std::to_string(s.in) + ",H,W], got " +
                                 shape_string(in));
            }
            if (s.kernel == 0 || s.stride == 0 || s.out == 0) throw ShapeError(layer_name(i, s) + ": bad geometry");
            const std::size_t h = in[1] + 2 * s.padding;
            const std::size_t w = in[2] + 2 * s.padding;
            if (h < s.kernel || w < s.kernel) throw ShapeError(layer_name(i, s) + ": kernel larger than input");
            return {s.out, (h - s.kernel) / s.stride + 1, (w - s.kernel) / s.stride + 1};
        }
        case LayerKind::relu: return in;
        case LayerKind::flatten: return {numel(in)};
        case LayerKind::batchnorm:
            if ((in.size() != 1 && in.size() != 3) || in[0] != s.in) {
                throw ShapeError(layer_name(i, s) + ": expected " + std::to_string(s.in) + " channels, got " +
                                 shape_string(in));
            }
            return in;
    }
    throw ShapeError(layer_name(i, s) + ": unknown layer kind");
}

Shape batched(std::size_t n, const Shape& s) {
    Shape out{n};
    out.insert(out.end(), s.begin(), s.end());
    return out;
}

}  // namespace

template <typename T>
Network<T>::Network(Shape input_shape, std::vector<LayerSpec> specs)
    : input_shape_(std::move(input_shape)), specs_(std::move(specs)) {
    shapes_.push_back(input_shape_);
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        const auto& s = specs_[i];
        shapes_.push_back(output_shape_of(i, s, shapes_.back()));
        param_index_.push_back(npos);
        buffer_index_.push_back(npos);
        switch (s.kind) {
            case LayerKind::dense:
                param_index_[i] = params_.size();
                params_.emplace_back(s.out * s.in, T{});
                params_.emplace_back(s.out, T{});
                break;
            case LayerKind::conv2d:
                param_index_[i] = params_.size();
                params_.emplace_back(s.out * s.in * s.kernel * s.kernel, T{});
                params_.emplace_back(s.out, T{});
                break;
            case LayerKind::batchnorm:
                param_index_[i] = params_.size();
                params_.emplace_back(s.in, T{1});
                params_.emplace_back(s.in, T{});
                buffer_index_[i] = buffers_.size();
                buffers_.emplace_back(s.in, T{});
                buffers_.emplace_back(s.in, T{1});
                break;
            case LayerKind::relu:
            case LayerKind::flatten: break;
        }
    }
}

template <typename T>
void Network<T>::init(Rng& rng) {
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        const auto& s = specs_[i];
        if (s.kind != LayerKind::dense && s.kind != LayerKind::conv2d) continue;
        const double fan_in = s.kind == LayerKind::dense ? double(s.in) : double(s.in * s.kernel * s.kernel);
        const double bound = std::sqrt(6.0 / fan_in);
        for (auto& w : params_[param_index_[i]]) w = static_cast<T>(uniform_real(rng, -bound, bound));
        std::fill(params_[param_index_[i] + 1].begin(), params_[param_index_[i] + 1].end(), T{});
    }
}

template <typename T>
std::size_t Network<T>::param_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& batch) const {
    Trace<T> trace;
    return forward_traced(batch, Mode::inference, trace);
}

template <typename T>
std::vector<T> Network<T>::forward_one(std::span<const T> obs) const {
    if (obs.size() != numel(input_shape_)) {
        throw ShapeError("expected input shape " + shape_string(input_shape_) + " (" +
                         std::to_string(numel(input_shape_)) + " values), got " + std::to_string(obs.size()));
    }
    Tensor<T> batch(batched(1, input_shape_), std::vector<T>(obs.begin(), obs.end()));
    return forward(batch).data;
}

template <typename T>
Tensor<T> Network<T>::forward_traced(const Tensor<T>& batch, Mode mode, Trace<T>& trace) const {
    if (batch.shape.empty() || Shape(batch.shape.begin() + 1, batch.shape.end()) != input_shape_) {
        throw ShapeError("expected batch shape [N]+" + shape_string(input_shape_) + ", got " +
                         shape_string(batch.shape));
    }
    const std::size_t n = batch.shape[0];
    trace = Trace<T>{};
    trace.mode = mode;
    trace.inputs.reserve(specs_.size());
    trace.xhat.resize(specs_.size());
    trace.inv_std.resize(specs_.size());
    trace.batch_mean.resize(specs_.size());
    trace.batch_var.resize(specs_.size());

    Tensor<T> x = batch;
    for (std::size_t li = 0; li < specs_.size(); ++li) {
        const auto& s = specs_[li];
        const Shape& in_shape = shapes_[li];
        const Shape& out_shape = shapes_[li + 1];
        Tensor<T> y(batched(n, out_shape));
        switch (s.kind) {
            case LayerKind::dense: {
                const auto& w = params_[param_index_[li]];
                const auto& b = params_[param_index_[li] + 1];
                for (std::size_t r = 0; r < n; ++r) {
                    const T* xin = x.data.data() + r * s.in;
                    T* yout = y.data.data() + r * s.out;
                    for (std::size_t o = 0; o < s.out; ++o) {
                        const T* wr = w.data() + o * s.in;
                        double acc = b[o];
                        for (std::size_t i = 0; i < s.in; ++i) acc += double(wr[i]) * double(xin[i]);
                        yout[o] = static_cast<T>(acc);
                    }
                }
                break;
            }
            case LayerKind::conv2d: {
                const auto& w = params_[param_index_[li]];
                const auto& b = params_[param_index_[li] + 1];
                const std::size_t c_in = in_shape[0], h_in = in_shape[1], w_in = in_shape[2];
                const std::size_t h_out = out_shape[1], w_out = out_shape[2];
                const std::size_t k = s.kernel;
                for (std::size_t r = 0; r < n; ++r) {
                    const T* xin = x.data.data() + r * c_in * h_in * w_in;
                    T* yout = y.data.data() + r * s.out * h_out * w_out;
                    for (std::size_t o = 0; o < s.out; ++o) {
                        for (std::size_t i = 0; i < h_out; ++i) {
                            for (std::size_t j = 0; j < w_out; ++j) {
                                double acc = b[o];
                                for (std::size_t c = 0; c < c_in; ++c) {
                                    const T* wk = w.data() + ((o * c_in + c) * k) * k;
                                    const T* xc = xin + c * h_in * w_in;
                                    for (std::size_t ki = 0; ki < k; ++ki) {
                                        const long row = long(i * s.stride + ki) - long(s.padding);
                                        if (row < 0 || row >= long(h_in)) continue;
                                        for (std::size_t kj = 0; kj < k; ++kj) {
                                            const long col = long(j * s.stride + kj) - long(s.padding);
                                            if (col < 0 || col >= long(w_in)) continue;
                                            acc += double(wk[ki * k + kj]) * double(xc[row * w_in + col]);
                                        }
                                    }
                                }
                                yout[(o * h_out + i) * w_out + j] = static_cast<T>(acc);
                            }
                        }
                    }
                }
                break;
            }
            case LayerKind::relu:
                for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > T{0} ? x.data[i] : T{0};
                break;
            case LayerKind::flatten: y.data = x.data; break;
            case LayerKind::batchnorm: {
                const std::size_t ch = s.in;
                const std::size_t spatial = numel(in_shape) / ch;
                const std::size_t m = n * spatial;
                const auto& gamma = params_[param_index_[li]];
                const auto& beta = params_[param_index_[li] + 1];
                std::vector<double> mean(ch, 0.0), var(ch, 0.0), inv_std(ch, 0.0);
                auto at = [&](std::size_t r, std::size_t c, std::size_t p) { return (r * ch + c) * spatial + p; };
                if (mode == Mode::training) {
                    for (std::size_t c = 0; c < ch; ++c) {
                        double sum = 0.0;
                        for (std::size_t r = 0; r < n; ++r)
                            for (std::size_t p = 0; p < spatial; ++p) sum += x.data[at(r, c, p)];
                        mean[c] = sum / double(m);
                        double sq = 0.0;
                        for (std::size_t r = 0; r < n; ++r)
                            for (std::size_t p = 0; p < spatial; ++p) {
                                const double d = x.data[at(r, c, p)] - mean[c];
                                sq += d * d;
                            }
                        var[c] = sq / double(m);
                    }
                } else {
                    const auto& rm = buffers_[buffer_index_[li]];
                    const auto& rv = buffers_[buffer_index_[li] + 1];
                    for (std::size_t c = 0; c < ch; ++c) {
                        mean[c] = rm[c];
                        var[c] = rv[c];
                    }
                }
                std::vector<T> xhat(x.data.size());
                for (std::size_t c = 0; c < ch; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + kBatchNormEps);
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < ch; ++c)
                        for (std::size_t p = 0; p < spatial; ++p) {
                            const std::size_t idx = at(r, c, p);
                            const double xh = (x.data[idx] - mean[c]) * inv_std[c];
                            xhat[idx] = static_cast<T>(xh);
                            y.data[idx] = static_cast<T>(double(gamma[c]) * xh + double(beta[c]));
                        }
                trace.xhat[li] = std::move(xhat);
                trace.inv_std[li] = std::move(inv_std);
                if (mode == Mode::training) {
                    trace.batch_mean[li] = std::move(mean);
                    trace.batch_var[li] = std::move(var);
                }
                break;
            }
        }
        trace.inputs.push_back(std::move(x));
        x = std::move(y);
    }
    trace.output = x;
    return x;
}

template <typename T>
Gradients<T> Network<T>::backward(const Trace<T>& trace, const Tensor<T>& grad_out) const {
    if (trace.inputs.size() != specs_.size()) throw ShapeError("backward: trace does not match network");
    if (grad_out.shape != trace.output.shape) {
        throw ShapeError("backward: gradient shape " + shape_string(grad_out.shape) + " != output shape " +
                         shape_string(trace.output.shape));
    }
    Gradients<T> grads;
    grads.params.reserve(params_.size());
    for (const auto& p : params_) grads.params.emplace_back(p.size(), T{});

    const std::size_t n = grad_out.shape[0];
    std::vector<double> g(grad_out.data.begin(), grad_out.data.end());
    for (std::size_t li = specs_.size(); li-- > 0;) {
        const auto& s = specs_[li];
        const Tensor<T>& x = trace.inputs[li];
        const Shape& in_shape = shapes_[li];
        const Shape& out_shape = shapes_[li + 1];
        std::vector<double> gin(x.data.size(), 0.0);
        switch (s.kind) {
            case LayerKind::dense: {
                const auto& w = params_[param_index_[li]];
                auto& gw = grads.params[param_index_[li]];
                auto& gb = grads.params[param_index_[li] + 1];
                std::vector<double> acc_w(w.size(), 0.0), acc_b(s.out, 0.0);
                for (std::size_t r = 0; r < n; ++r) {
                    const T* xin = x.data.data() + r * s.in;
                    const double* go = g.data() + r * s.out;
                    double* gi = gin.data() + r * s.in;
                    for (std::size_t o = 0; o < s.out; ++o) {
                        const double d = go[o];
                        if (d == 0.0) continue;
                        acc_b[o] += d;
                        double* aw = acc_w.data() + o * s.in;
                        const T* wr = w.data() + o * s.in;
                        for (std::size_t i = 0; i < s.in; ++i) {
                            aw[i] += d * double(xin[i]);
                            gi[i] += d * double(wr[i]);
                        }
                    }
                }
                for (std::size_t i = 0; i < w.size(); ++i) gw[i] = static_cast<T>(acc_w[i]);
                for (std::size_t o = 0; o < s.out; ++o) gb[o] = static_cast<T>(acc_b[o]);
                break;
            }
            case LayerKind::conv2d: {
                const auto& w = params_[param_index_[li]];
                auto& gw = grads.params[param_index_[li]];
                auto& gb = grads.params[param_index_[li] + 1];
                const std::size_t c_in = in_shape[0], h_in = in_shape[1], w_in = in_shape[2];
                const std::size_t h_out = out_shape[1], w_out = out_shape[2];
                const std::size_t k = s.kernel;
                std::vector<double> acc_w(w.size(), 0.0), acc_b(s.out, 0.0);
                for (std::size_t r = 0; r < n; ++r) {
                    const T* xin = x.data.data() + r * c_in * h_in * w_in;
                    const double* go = g.data() + r * s.out * h_out * w_out;
                    double* gi = gin.data() + r * c_in * h_in * w_in;
                    for (std::size_t o = 0; o < s.out; ++o) {
                        for (std::size_t i = 0; i < h_out; ++i) {
                            for (std::size_t j = 0; j < w_out; ++j) {
                                const double d = go[(o * h_out + i) * w_out + j];
                                if (d == 0.0) continue;
                                acc_b[o] += d;
                                for (std::size_t c = 0; c < c_in; ++c) {
                                    const std::size_t wbase = ((o * c_in + c) * k) * k;
                                    const std::size_t xbase = c * h_in * w_in;
                                    for (std::size_t ki = 0; ki < k; ++ki) {
                                        const long row = long(i * s.stride + ki) - long(s.padding);
                                        if (row < 0 || row >= long(h_in)) continue;
                                        for (std::size_t kj = 0; kj < k; ++kj) {
                                            const long col = long(j * s.stride + kj) - long(s.padding);
                                            if (col < 0 || col >= long(w_in)) continue;
                                            const std::size_t xi = xbase + row * w_in + col;
                                            acc_w[wbase + ki * k + kj] += d * double(xin[xi]);
                                            gi[xi] += d * double(w[wbase + ki * k + kj]);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                for (std::size_t i = 0; i < w.size(); ++i) gw[i] = static_cast<T>(acc_w[i]);
                for (std::size_t o = 0; o < s.out; ++o) gb[o] = static_cast<T>(acc_b[o]);
                break;
            }
            case LayerKind::relu:
                for (std::size_t i = 0; i < gin.size(); ++i) gin[i] = x.data[i] > T{0} ? g[i] : 0.0;
                break;
            case LayerKind::flatten: gin = g; break;
            case LayerKind::batchnorm: {
                const std::size_t ch = s.in;
                const std::size_t spatial = numel(in_shape) / ch;
                const auto m = double(n * spatial);
                const auto& gamma = params_[param_index_[li]];
                auto& ggamma = grads.params[param_index_[li]];
                auto& gbeta = grads.params[param_index_[li] + 1];
                const auto& xhat = trace.xhat[li];
                const auto& inv_std = trace.inv_std[li];
                auto at = [&](std::size_t r, std::size_t c, std::size_t p) { return (r * ch + c) * spatial + p; };
                for (std::size_t c = 0; c < ch; ++c) {
                    double sum_g = 0.0, sum_gx = 0.0;
                    for (std::size_t r = 0; r < n; ++r)
                        for (std::size_t p = 0; p < spatial; ++p) {
                            const std::size_t idx = at(r, c, p);
                            sum_g += g[idx];
                            sum_gx += g[idx] * double(xhat[idx]);
                        }
                    ggamma[c] = static_cast<T>(sum_gx);
                    gbeta[c] = static_cast<T>(sum_g);
                    const double gm = gamma[c];
                    for (std::size_t r = 0; r < n; ++r)
                        for (std::size_t p = 0; p < spatial; ++p) {
                            const std::size_t idx = at(r, c, p);
                            if (trace.mode == Mode::training) {
                                // d xhat = g * gamma; sums of d xhat are gamma * sum_g, gamma * sum_gx
                                gin[idx] = gm * inv_std[c] / m *
                                           (m * g[idx] - sum_g - double(xhat[idx]) * sum_gx);
                            } else {
                                gin[idx] = g[idx] * gm * inv_std[c];
                            }
                        }
                }
                break;
            }
        }
        g = std::move(gin);
    }
    if (trace.mode == Mode::training) {
        for (std::size_t li = 0; li < specs_.size(); ++li) {
            if (specs_[li].kind != LayerKind::batchnorm) continue;
            grads.bn_mean.push_back(trace.batch_mean[li]);
            grads.bn_var.push_back(trace.batch_var[li]);
        }
    }
    return grads;
}

template <typename T>
Gradients<T> td_gradients(const Network<T>& net, const Tensor<T>& batch, std::span<const std::size_t> actions,
                          std::span<const double> targets, Mode mode) {
    if (batch.shape.empty() || batch.shape[0] == 0) throw ShapeError("td_gradients: empty batch");
    const std::size_t n = batch.shape[0];
    if (actions.size() != n || targets.size() != n) throw ShapeError("td_gradients: batch/action/target sizes differ");
    const std::size_t n_out = net.output_size();
    Trace<T> trace;
    const Tensor<T> q = net.forward_traced(batch, mode, trace);
    Tensor<T> grad_out(q.shape);
    double loss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        if (actions[r] >= n_out) throw ShapeError("td_gradients: action index out of range");
        if (!std::isfinite(targets[r])) throw NumericError("td_gradients: non-finite TD target");
        const double residual = double(q.data[r * n_out + actions[r]]) - targets[r];
        loss += 0.5 * residual * residual;
        grad_out.data[r * n_out + actions[r]] = static_cast<T>(residual / double(n));
    }
    loss /= double(n);
    if (!std::isfinite(loss)) throw NumericError("td_gradients: non-finite loss");
    auto grads = net.backward(trace, grad_out);
    grads.loss = loss;
    return grads;
}

template <typename T>
Gradients<T> backward(const Network<T>& net, std::span<const T> obs, std::size_t action, double td_target) {
    if (!std::isfinite(td_target)) throw NumericError("backward: non-finite TD target");
    if (obs.size() != numel(net.input_shape())) {
        throw ShapeError("expected input shape " + shape_string(net.input_shape()) + ", got " +
                         std::to_string(obs.size()) + " values");
    }
    Tensor<T> batch(batched(1, net.input_shape()), std::vector<T>(obs.begin(), obs.end()));
    const std::size_t actions[] = {action};
    const double targets[] = {td_target};
    return td_gradients<T>(net, batch, actions, targets, Mode::inference);
}

template <typename T>
void sgd_step(Network<T>& net, const Gradients<T>& grads, double lr) {
    auto& params = net.parameters();
    if (grads.params.size() != params.size()) throw ShapeError("sgd_step: gradient set does not match network");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads.params[i].size() != params[i].size()) throw ShapeError("sgd_step: gradient tensor size mismatch");
        for (std::size_t j = 0; j < params[i].size(); ++j) {
            params[i][j] = static_cast<T>(double(params[i][j]) - lr * double(grads.params[i][j]));
        }
    }
    if (grads.bn_mean.empty()) return;
    std::size_t bn = 0;
    for (std::size_t li = 0; li < net.specs().size(); ++li) {
        if (net.specs()[li].kind != LayerKind::batchnorm) continue;
        auto& rm = net.buffers()[net.first_buffer(li)];
        auto& rv = net.buffers()[net.first_buffer(li) + 1];
        for (std::size_t c = 0; c < rm.size(); ++c) {
            rm[c] = static_cast<T>((1.0 - kBatchNormMomentum) * rm[c] + kBatchNormMomentum * grads.bn_mean[bn][c]);
            rv[c] = static_cast<T>((1.0 - kBatchNormMomentum) * rv[c] + kBatchNormMomentum * grads.bn_var[bn][c]);
        }
        ++bn;
    }
}

template <typename T>
void clip_gradients(Gradients<T>& grads, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (const auto& p : grads.params)
        for (auto v : p) sq += double(v) * double(v);
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double scale = max_norm / norm;
    for (auto& p : grads.params)
        for (auto& v : p) v = static_cast<T>(double(v) * scale);
}

template <typename To, typename From>
Network<To> convert(const Network<From>& src) {
    Network<To> out(src.input_shape(), src.specs());
    for (std::size_t i = 0; i < src.parameters().size(); ++i)
        std::transform(src.parameters()[i].begin(), src.parameters()[i].end(), out.parameters()[i].begin(),
                       [](From v) { return static_cast<To>(v); });
    for (std::size_t i = 0; i < src.buffers().size(); ++i)
        std::transform(src.buffers()[i].begin(), src.buffers()[i].end(), out.buffers()[i].begin(),
                       [](From v) { return static_cast<To>(v); });
    return out;
}

// --- persistence -----------------------------------------------------------

namespace {

void put_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

void put_u16(std::ostream& os, std::uint16_t v) {
    for (int i = 0; i < 2; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::ostream& os, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }

class Reader {
public:
    explicit Reader(std::istream& is) : is_(is) {}

    std::uint32_t bytes(int n) {
        std::uint32_t v = 0;
        for (int i = 0; i < n; ++i) {
            const int c = is_.get();
            if (c == std::char_traits<char>::eof()) throw FormatError("truncated weights file");
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(c)) << (8 * i);
        }
        return v;
    }
    std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(bytes(2)); }
    std::uint32_t u32() { return bytes(4); }
    float f32() { return std::bit_cast<float>(u32()); }

private:
    std::istream& is_;
};

std::vector<std::uint32_t> geometry(const LayerSpec& s) {
    switch (s.kind) {
        case LayerKind::dense: return {std::uint32_t(s.in), std::uint32_t(s.out)};
        case LayerKind::conv2d:
            return {std::uint32_t(s.in), std::uint32_t(s.out), std::uint32_t(s.kernel), std::uint32_t(s.stride),
                    std::uint32_t(s.padding)};
        case LayerKind::batchnorm: return {std::uint32_t(s.in)};
        case LayerKind::relu:
        case LayerKind::flatten: return {};
    }
    return {};
}

LayerSpec spec_from(std::uint8_t tag, const std::vector<std::uint32_t>& g) {
    auto expect = [&](std::size_t n, const char* kind) {
        if (g.size() != n) {
            throw FormatError(std::string("weights file: ") + kind + " layer expects " + std::to_string(n) +
                              " geometry values, got " + std::to_string(g.size()));
        }
    };
    switch (static_cast<LayerKind>(tag)) {
        case LayerKind::dense: expect(2, "dense"); return LayerSpec::dense(g[0], g[1]);
        case LayerKind::conv2d: expect(5, "conv2d"); return LayerSpec::conv2d(g[0], g[1], g[2], g[3], g[4]);
        case LayerKind::batchnorm: expect(1, "batchnorm"); return LayerSpec::batchnorm(g[0]);
        case LayerKind::relu: expect(0, "relu"); return LayerSpec::relu();
        case LayerKind::flatten: expect(0, "flatten"); return LayerSpec::flatten();
    }
    throw FormatError("weights file: unknown layer tag " + std::to_string(tag));
}

}  // namespace

template <typename T>
void save_weights(const Network<T>& net, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os.write("TFDQ", 4);
    put_u16(os, kWeightsVersion);
    put_u32(os, static_cast<std::uint32_t>(net.input_shape().size()));
    for (auto d : net.input_shape()) put_u32(os, static_cast<std::uint32_t>(d));
    put_u32(os, static_cast<std::uint32_t>(net.specs().size()));
    for (std::size_t li = 0; li < net.specs().size(); ++li) {
        const auto& s = net.specs()[li];
        put_u8(os, static_cast<std::uint8_t>(s.kind));
        const auto g = geometry(s);
        put_u32(os, static_cast<std::uint32_t>(g.size()));
        for (auto v : g) put_u32(os, v);
        if (net.first_param(li) != Network<T>::npos) {
            for (std::size_t k = 0; k < 2; ++k)
                for (auto v : net.parameters()[net.first_param(li) + k]) put_f32(os, static_cast<float>(v));
        }
        if (net.first_buffer(li) != Network<T>::npos) {
            for (std::size_t k = 0; k < 2; ++k)
                for (auto v : net.buffers()[net.first_buffer(li) + k]) put_f32(os, static_cast<float>(v));
        }
    }
    if (!os) throw std::runtime_error("failed writing " + path.string());
}

template <typename T>
Network<T> load_weights(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    char magic[4] = {};
    is.read(magic, 4);
    if (is.gcount() != 4 || std::string(magic, 4) != "TFDQ") throw FormatError("bad magic in " + path.string());
    Reader rd(is);
    const auto version = rd.u16();
    if (version != kWeightsVersion) {
        throw FormatError("unsupported weights version " + std::to_string(version) + " (expected " +
                          std::to_string(kWeightsVersion) + ")");
    }
    Shape input(rd.u32());
    for (auto& d : input) d = rd.u32();
    const auto n_layers = rd.u32();
    std::vector<LayerSpec> specs;
    std::vector<std::vector<float>> values;  // per layer, in file order
    for (std::uint32_t li = 0; li < n_layers; ++li) {
        const auto tag = rd.u8();
        std::vector<std::uint32_t> g(rd.u32());
        if (g.size() > 16) throw FormatError("weights file: implausible geometry length");
        for (auto& v : g) v = rd.u32();
        const LayerSpec s = spec_from(tag, g);
        std::size_t count = 0;
        switch (s.kind) {
            case LayerKind::dense: count = std::size_t(s.in) * s.out + s.out; break;
            case LayerKind::conv2d: count = std::size_t(s.out) * s.in * s.kernel * s.kernel + s.out; break;
            case LayerKind::batchnorm: count = 4 * std::size_t(s.in); break;
            default: break;
        }
        std::vector<float> vals(count);
        for (auto& v : vals) v = rd.f32();
        specs.push_back(s);
        values.push_back(std::move(vals));
    }
    Network<T> net(std::move(input), specs);  // throws ShapeError if layers do not chain
    for (std::size_t li = 0; li < specs.size(); ++li) {
        std::size_t pos = 0;
        auto fill = [&](std::vector<T>& dst) {
            for (auto& v : dst) v = static_cast<T>(values[li][pos++]);
        };
        if (net.first_param(li) != Network<T>::npos) {
            fill(net.parameters()[net.first_param(li)]);
            fill(net.parameters()[net.first_param(li) + 1]);
        }
        if (net.first_buffer(li) != Network<T>::npos) {
            fill(net.buffers()[net.first_buffer(li)]);
            fill(net.buffers()[net.first_buffer(li) + 1]);
        }
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in weights file");
    return net;
}

QNetwork make_conv_qnet(const Shape& input_shape, std::size_t channels, std::size_t hidden, bool batchnorm) {
    if (input_shape.size() != 3) throw ShapeError("conv Q-network expects [C,H,W] input");
    std::vector<LayerSpec> specs;
    std::size_t c = input_shape[0];
    for (int i = 0; i < 3; ++i) {
        specs.push_back(LayerSpec::conv2d(c, channels, 3, 1, 1));
        if (batchnorm) specs.push_back(LayerSpec::batchnorm(channels));
        specs.push_back(LayerSpec::relu());
        c = channels;
    }
    specs.push_back(LayerSpec::flatten());
    specs.push_back(LayerSpec::dense(channels * input_shape[1] * input_shape[2], hidden));
    specs.push_back(LayerSpec::relu());
    specs.push_back(LayerSpec::dense(hidden, kNumActions));
    return QNetwork(input_shape, std::move(specs));
}

QNetwork make_mlp_qnet(std::size_t inputs, std::size_t hidden, bool batchnorm) {
    std::vector<LayerSpec> specs;
    specs.push_back(LayerSpec::dense(inputs, hidden));
    if (batchnorm) specs.push_back(LayerSpec::batchnorm(hidden));
    specs.push_back(LayerSpec::relu());
    specs.push_back(LayerSpec::dense(hidden, hidden));
    if (batchnorm) specs.push_back(LayerSpec::batchnorm(hidden));
    specs.push_back(LayerSpec::relu());
    specs.push_back(LayerSpec::dense(hidden, kNumActions));
    return QNetwork({inputs}, std::move(specs));
}

#define UAVTRACK_INSTANTIATE(T)                                                                                    \
    template struct Tensor<T>;                                                                                    \
    template class Network<T>;                                                                                    \
    template Gradients<T> td_gradients<T>(const Network<T>&, const Tensor<T>&, std::span<const std::size_t>,       \
                                          std::span<const double>, Mode);                                         \
    template Gradients<T> backward<T>(const Network<T>&, std::span<const T>, std::size_t, double);                \
    template void sgd_step<T>(Network<T>&, const Gradients<T>&, double);                                          \
    template void clip_gradients<T>(Gradients<T>&, double);                                                       \
    template void save_weights<T>(const Network<T>&, const std::filesystem::path&);                               \
    template Network<T> load_weights<T>(const std::filesystem::path&);

UAVTRACK_INSTANTIATE(float)
UAVTRACK_INSTANTIATE(double)

template Network<double> convert<double, float>(const Network<float>&);
template Network<float> convert<float, double>(const Network<double>&);
template Network<float> convert<float, float>(const Network<float>&);
template Network<double> convert<double, double>(const Network<double>&);

}  // namespace uavtrack
