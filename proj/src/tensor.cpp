#include "mvcons/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace mvcons {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (const auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

namespace detail {

namespace {
thread_local int g_no_grad_depth = 0;
}

bool grad_enabled() { return g_no_grad_depth == 0; }

void push_no_grad() { ++g_no_grad_depth; }
void pop_no_grad() { --g_no_grad_depth; }

}  // namespace detail

NoGradGuard::NoGradGuard() { detail::push_no_grad(); }
NoGradGuard::~NoGradGuard() { detail::pop_no_grad(); }

namespace {

void check_positive_shape(const Shape& shape) {
    for (const auto d : shape) {
        if (d <= 0) throw DimensionError("tensor shape must have positive dims, got " + shape_str(shape));
    }
}

}  // namespace

template <typename T>
TensorT<T> TensorT<T>::zeros(Shape shape, bool requires_grad) {
    check_positive_shape(shape);
    auto v = std::make_shared<Var>();
    const auto n = static_cast<std::size_t>(shape_numel(shape));
    v->shape = std::move(shape);
    v->data.assign(n, T(0));
    v->requires_grad = requires_grad;
    return TensorT(std::move(v));
}

template <typename T>
TensorT<T> TensorT<T>::full(Shape shape, T value, bool requires_grad) {
    auto t = zeros(std::move(shape), requires_grad);
    std::fill(t.v_->data.begin(), t.v_->data.end(), value);
    return t;
}

template <typename T>
TensorT<T> TensorT<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
    check_positive_shape(shape);
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw DimensionError("from_data: " + std::to_string(data.size()) +
                             " values do not fill shape " + shape_str(shape));
    }
    auto v = std::make_shared<Var>();
    v->shape = std::move(shape);
    v->data = std::move(data);
    v->requires_grad = requires_grad;
    return TensorT(std::move(v));
}

template <typename T>
TensorT<T> TensorT<T>::scalar(T value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

template <typename T>
T TensorT<T>::item() const {
    if (numel() != 1) throw DimensionError("item: tensor has shape " + shape_str(v_->shape));
    return v_->data[0];
}

template <typename T>
TensorT<T> TensorT<T>::clone_detached(bool requires_grad) const {
    return from_data(v_->shape, v_->data, requires_grad);
}

template <typename T>
void TensorT<T>::backward() const {
    if (!v_) throw std::invalid_argument("backward: empty tensor");
    if (v_->numel() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(v_->shape));
    }
    if (!v_->node) {
        // Constant (or leaf) loss; nothing upstream to differentiate.
        if (v_->requires_grad) {
            v_->ensure_grad();
            v_->grad[0] += T(1);
        }
        return;
    }

    // Post-order DFS so inputs land before consumers. The order holds shared
    // ownership: intermediate vars are typically kept alive only by their
    // consumer's node, which is released as the graph is consumed.
    using Var = detail::VarT<T>;
    using VarPtr = std::shared_ptr<Var>;
    std::vector<VarPtr> order;
    std::unordered_set<Var*> visited;
    struct Frame {
        VarPtr var;
        std::size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({v_, 0});
    visited.insert(v_.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (!f.var->node || f.next >= f.var->node->inputs.size()) {
            order.push_back(f.var);
            stack.pop_back();
            continue;
        }
        VarPtr child = f.var->node->inputs[f.next++];
        if (child->node && visited.insert(child.get()).second) {
            stack.push_back({std::move(child), 0});
        }
    }

    v_->ensure_grad();
    v_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Var* var = it->get();
        if (!var->node) continue;
        if (!var->grad.empty()) var->node->backward(*var);
        var->node.reset();  // graph is consumed
    }
}

namespace detail {

template <typename T>
TensorT<T> make_result(Shape shape, std::vector<T> data, std::vector<TensorT<T>> inputs,
                       std::function<void(VarT<T>&)> backward) {
    auto v = std::make_shared<VarT<T>>();
    v->shape = std::move(shape);
    v->data = std::move(data);
    bool needs = false;
    if (grad_enabled()) {
        for (const auto& in : inputs) {
            if (in.requires_grad()) {
                needs = true;
                break;
            }
        }
    }
    if (needs) {
        v->requires_grad = true;
        auto node = std::make_unique<typename VarT<T>::Node>();
        node->inputs.reserve(inputs.size());
        for (const auto& in : inputs) node->inputs.push_back(in.var());
        node->backward = std::move(backward);
        v->node = std::move(node);
    }
    return TensorT<T>(std::move(v));
}

}  // namespace detail

// ---- conv2d ----------------------------------------------------------------

template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weight, const TensorT<T>& bias,
                  int stride, int padding, int groups) {
    if (input.rank() != 4) throw DimensionError("conv2d: input must be NCHW, got " + shape_str(input.shape()));
    if (weight.rank() != 4) throw DimensionError("conv2d: weight must be 4-D, got " + shape_str(weight.shape()));
    const std::int64_t N = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::int64_t Cout = weight.dim(0), kH = weight.dim(2), kW = weight.dim(3);
    if (groups <= 0 || Cin % groups != 0 || Cout % groups != 0) {
        throw ConfigError("conv2d: groups=" + std::to_string(groups) + " must divide C_in=" +
                          std::to_string(Cin) + " and C_out=" + std::to_string(Cout));
    }
    const std::int64_t Cg = Cin / groups;
    if (weight.dim(1) != Cg) {
        throw DimensionError("conv2d: weight " + shape_str(weight.shape()) + " expects C_in/groups=" +
                             std::to_string(Cg) + " input channels, input is " + shape_str(input.shape()));
    }
    if (bias.rank() != 1 || bias.dim(0) != Cout) {
        throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " must be [" + std::to_string(Cout) + "]");
    }
    if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
    if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
    const std::int64_t Ho = (H + 2 * padding - kH) / stride + 1;
    const std::int64_t Wo = (W + 2 * padding - kW) / stride + 1;
    if (H + 2 * padding < kH || W + 2 * padding < kW || Ho < 1 || Wo < 1) {
        throw DimensionError("conv2d: kernel " + shape_str(weight.shape()) + " does not fit input " +
                             shape_str(input.shape()) + " with padding " + std::to_string(padding));
    }

    const auto x = input.values();
    const auto w = weight.values();
    const auto b = bias.values();
    std::vector<T> out(static_cast<std::size_t>(N * Cout * Ho * Wo));

    const std::int64_t oc_per_g = Cout / groups;
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t oc = 0; oc < Cout; ++oc) {
            const std::int64_t ic0 = (oc / oc_per_g) * Cg;
            for (std::int64_t oh = 0; oh < Ho; ++oh) {
                for (std::int64_t ow = 0; ow < Wo; ++ow) {
                    T acc = b[static_cast<std::size_t>(oc)];
                    for (std::int64_t icg = 0; icg < Cg; ++icg) {
                        const std::int64_t ic = ic0 + icg;
                        for (std::int64_t kh = 0; kh < kH; ++kh) {
                            const std::int64_t ih = oh * stride - padding + kh;
                            if (ih < 0 || ih >= H) continue;
                            const T* xrow = &x[static_cast<std::size_t>(((n * Cin + ic) * H + ih) * W)];
                            const T* wrow = &w[static_cast<std::size_t>(((oc * Cg + icg) * kH + kh) * kW)];
                            for (std::int64_t kw = 0; kw < kW; ++kw) {
                                const std::int64_t iw = ow * stride - padding + kw;
                                if (iw < 0 || iw >= W) continue;
                                acc += wrow[kw] * xrow[iw];
                            }
                        }
                    }
                    out[static_cast<std::size_t>(((n * Cout + oc) * Ho + oh) * Wo + ow)] = acc;
                }
            }
        }
    }

    auto backward = [N, Cin, H, W, Cout, Cg, kH, kW, Ho, Wo, stride, padding,
                     oc_per_g](detail::VarT<T>& o) {
        auto& xin = *o.node->inputs[0];
        auto& win = *o.node->inputs[1];
        auto& bin = *o.node->inputs[2];
        const std::vector<T>& g = o.grad;
        const bool need_x = xin.requires_grad;
        const bool need_w = win.requires_grad;
        const bool need_b = bin.requires_grad;
        if (need_x) xin.ensure_grad();
        if (need_w) win.ensure_grad();
        if (need_b) bin.ensure_grad();
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t oc = 0; oc < Cout; ++oc) {
                const std::int64_t ic0 = (oc / oc_per_g) * Cg;
                for (std::int64_t oh = 0; oh < Ho; ++oh) {
                    for (std::int64_t ow = 0; ow < Wo; ++ow) {
                        const T go = g[static_cast<std::size_t>(((n * Cout + oc) * Ho + oh) * Wo + ow)];
                        if (go == T(0)) continue;
                        if (need_b) bin.grad[static_cast<std::size_t>(oc)] += go;
                        if (!need_x && !need_w) continue;
                        for (std::int64_t icg = 0; icg < Cg; ++icg) {
                            const std::int64_t ic = ic0 + icg;
                            for (std::int64_t kh = 0; kh < kH; ++kh) {
                                const std::int64_t ih = oh * stride - padding + kh;
                                if (ih < 0 || ih >= H) continue;
                                for (std::int64_t kw = 0; kw < kW; ++kw) {
                                    const std::int64_t iw = ow * stride - padding + kw;
                                    if (iw < 0 || iw >= W) continue;
                                    const auto xi = static_cast<std::size_t>(((n * Cin + ic) * H + ih) * W + iw);
                                    const auto wi = static_cast<std::size_t>(((oc * Cg + icg) * kH + kh) * kW + kw);
                                    if (need_x) xin.grad[xi] += go * win.data[wi];
                                    if (need_w) win.grad[wi] += go * xin.data[xi];
                                }
                            }
                        }
                    }
                }
            }
        }
    };

    return detail::make_result<T>({N, Cout, Ho, Wo}, std::move(out), {input, weight, bias},
                                  std::move(backward));
}

// ---- linear ----------------------------------------------------------------

template <typename T>
TensorT<T> linear(const TensorT<T>& input, const TensorT<T>& weight, const TensorT<T>& bias) {
    if (input.rank() < 1) throw DimensionError("linear: input must have rank >= 1");
    if (weight.rank() != 2) throw DimensionError("linear: weight must be 2-D, got " + shape_str(weight.shape()));
    const std::int64_t Fin = input.dim(input.rank() - 1);
    const std::int64_t Fout = weight.dim(0);
    if (weight.dim(1) != Fin) {
        throw DimensionError("linear: weight " + shape_str(weight.shape()) + " does not match input " +
                             shape_str(input.shape()));
    }
    if (bias.rank() != 1 || bias.dim(0) != Fout) {
        throw DimensionError("linear: bias " + shape_str(bias.shape()) + " must be [" + std::to_string(Fout) + "]");
    }
    const std::int64_t R = input.numel() / Fin;

    const auto x = input.values();
    const auto w = weight.values();
    const auto b = bias.values();
    std::vector<T> out(static_cast<std::size_t>(R * Fout));
    for (std::int64_t r = 0; r < R; ++r) {
        const T* xr = &x[static_cast<std::size_t>(r * Fin)];
        T* orow = &out[static_cast<std::size_t>(r * Fout)];
        for (std::int64_t o = 0; o < Fout; ++o) {
            const T* wr = &w[static_cast<std::size_t>(o * Fin)];
            T acc = b[static_cast<std::size_t>(o)];
            for (std::int64_t i = 0; i < Fin; ++i) acc += wr[i] * xr[i];
            orow[o] = acc;
        }
    }

    Shape out_shape = input.shape();
    out_shape.back() = Fout;

    auto backward = [R, Fin, Fout](detail::VarT<T>& o) {
        auto& xin = *o.node->inputs[0];
        auto& win = *o.node->inputs[1];
        auto& bin = *o.node->inputs[2];
        const std::vector<T>& g = o.grad;
        if (xin.requires_grad) {
            xin.ensure_grad();
            for (std::int64_t r = 0; r < R; ++r) {
                const T* gr = &g[static_cast<std::size_t>(r * Fout)];
                T* dxr = &xin.grad[static_cast<std::size_t>(r * Fin)];
                for (std::int64_t ofs = 0; ofs < Fout; ++ofs) {
                    const T go = gr[ofs];
                    if (go == T(0)) continue;
                    const T* wr = &win.data[static_cast<std::size_t>(ofs * Fin)];
                    for (std::int64_t i = 0; i < Fin; ++i) dxr[i] += go * wr[i];
                }
            }
        }
        if (win.requires_grad) {
            win.ensure_grad();
            for (std::int64_t r = 0; r < R; ++r) {
                const T* gr = &g[static_cast<std::size_t>(r * Fout)];
                const T* xr = &xin.data[static_cast<std::size_t>(r * Fin)];
                for (std::int64_t ofs = 0; ofs < Fout; ++ofs) {
                    const T go = gr[ofs];
                    if (go == T(0)) continue;
                    T* dwr = &win.grad[static_cast<std::size_t>(ofs * Fin)];
                    for (std::int64_t i = 0; i < Fin; ++i) dwr[i] += go * xr[i];
                }
            }
        }
        if (bin.requires_grad) {
            bin.ensure_grad();
            for (std::int64_t r = 0; r < R; ++r) {
                const T* gr = &g[static_cast<std::size_t>(r * Fout)];
                for (std::int64_t ofs = 0; ofs < Fout; ++ofs) bin.grad[static_cast<std::size_t>(ofs)] += gr[ofs];
            }
        }
    };

    return detail::make_result<T>(std::move(out_shape), std::move(out), {input, weight, bias},
                                  std::move(backward));
}

// ---- layer_norm -------------------------------------------------------------

template <typename T>
TensorT<T> layer_norm(const TensorT<T>& input, const TensorT<T>& gamma, const TensorT<T>& beta, T eps) {
    if (input.rank() < 1) throw DimensionError("layer_norm: input must have rank >= 1");
    const std::int64_t F = input.dim(input.rank() - 1);
    if (gamma.rank() != 1 || gamma.dim(0) != F || beta.rank() != 1 || beta.dim(0) != F) {
        throw DimensionError("layer_norm: gamma/beta must be [" + std::to_string(F) + "], got " +
                             shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
    }
    if (!(eps > T(0))) throw ConfigError("layer_norm: eps must be positive");
    const std::int64_t R = input.numel() / F;

    const auto x = input.values();
    const auto gm = gamma.values();
    const auto bt = beta.values();
    std::vector<T> out(static_cast<std::size_t>(R * F));
    std::vector<T> inv_std(static_cast<std::size_t>(R));
    std::vector<T> xhat(static_cast<std::size_t>(R * F));
    for (std::int64_t r = 0; r < R; ++r) {
        const T* xr = &x[static_cast<std::size_t>(r * F)];
        T mean = T(0);
        for (std::int64_t f = 0; f < F; ++f) mean += xr[f];
        mean /= static_cast<T>(F);
        T var = T(0);
        for (std::int64_t f = 0; f < F; ++f) {
            const T d = xr[f] - mean;
            var += d * d;
        }
        var /= static_cast<T>(F);
        const T is = T(1) / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(r)] = is;
        for (std::int64_t f = 0; f < F; ++f) {
            const T xh = (xr[f] - mean) * is;
            xhat[static_cast<std::size_t>(r * F + f)] = xh;
            out[static_cast<std::size_t>(r * F + f)] = gm[static_cast<std::size_t>(f)] * xh + bt[static_cast<std::size_t>(f)];
        }
    }

    auto backward = [R, F, inv_std = std::move(inv_std), xhat = std::move(xhat)](detail::VarT<T>& o) {
        auto& xin = *o.node->inputs[0];
        auto& gin = *o.node->inputs[1];
        auto& bin = *o.node->inputs[2];
        const std::vector<T>& g = o.grad;
        if (gin.requires_grad) {
            gin.ensure_grad();
            for (std::int64_t r = 0; r < R; ++r)
                for (std::int64_t f = 0; f < F; ++f)
                    gin.grad[static_cast<std::size_t>(f)] +=
                        g[static_cast<std::size_t>(r * F + f)] * xhat[static_cast<std::size_t>(r * F + f)];
        }
        if (bin.requires_grad) {
            bin.ensure_grad();
            for (std::int64_t r = 0; r < R; ++r)
                for (std::int64_t f = 0; f < F; ++f)
                    bin.grad[static_cast<std::size_t>(f)] += g[static_cast<std::size_t>(r * F + f)];
        }
        if (xin.requires_grad) {
            xin.ensure_grad();
            for (std::int64_t r = 0; r < R; ++r) {
                const T is = inv_std[static_cast<std::size_t>(r)];
                T mean_dxh = T(0);
                T mean_dxh_xh = T(0);
                for (std::int64_t f = 0; f < F; ++f) {
                    const auto i = static_cast<std::size_t>(r * F + f);
                    const T dxh = g[i] * gin.data[static_cast<std::size_t>(f)];
                    mean_dxh += dxh;
                    mean_dxh_xh += dxh * xhat[i];
                }
                mean_dxh /= static_cast<T>(F);
                mean_dxh_xh /= static_cast<T>(F);
                for (std::int64_t f = 0; f < F; ++f) {
                    const auto i = static_cast<std::size_t>(r * F + f);
                    const T dxh = g[i] * gin.data[static_cast<std::size_t>(f)];
                    xin.grad[i] += is * (dxh - mean_dxh - xhat[i] * mean_dxh_xh);
                }
            }
        }
    };

    return detail::make_result<T>(input.shape(), std::move(out), {input, gamma, beta}, std::move(backward));
}

// ---- activations ------------------------------------------------------------

namespace {

template <typename T>
T gauss_cdf(T x) {
    return T(0.5) * (T(1) + std::erf(x * T(0.70710678118654752440)));
}

template <typename T>
T gauss_pdf(T x) {
    return T(0.39894228040143267794) * std::exp(T(-0.5) * x * x);
}

}  // namespace

template <typename T>
TensorT<T> gelu(const TensorT<T>& x) {
    const auto xs = x.values();
    std::vector<T> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i] * gauss_cdf(xs[i]);
    auto backward = [](detail::VarT<T>& o) {
        auto& xin = *o.node->inputs[0];
        if (!xin.requires_grad) return;
        xin.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            const T v = xin.data[i];
            xin.grad[i] += o.grad[i] * (gauss_cdf(v) + v * gauss_pdf(v));
        }
    };
    return detail::make_result<T>(x.shape(), std::move(out), {x}, std::move(backward));
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
    const auto xs = x.values();
    std::vector<T> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i] > T(0) ? xs[i] : T(0);
    auto backward = [](detail::VarT<T>& o) {
        auto& xin = *o.node->inputs[0];
        if (!xin.requires_grad) return;
        xin.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            if (xin.data[i] > T(0)) xin.grad[i] += o.grad[i];
    };
    return detail::make_result<T>(x.shape(), std::move(out), {x}, std::move(backward));
}

template <typename T>
TensorT<T> softmax_lastaxis(const TensorT<T>& x) {
    if (x.rank() < 1) throw DimensionError("softmax: input must have rank >= 1");
    const std::int64_t F = x.dim(x.rank() - 1);
    const std::int64_t R = x.numel() / F;
    const auto xs = x.values();
    std::vector<T> out(xs.size());
    for (std::int64_t r = 0; r < R; ++r) {
        const T* xr = &xs[static_cast<std::size_t>(r * F)];
        T* orow = &out[static_cast<std::size_t>(r * F)];
        T m = xr[0];
        for (std::int64_t f = 1; f < F; ++f) m = std::max(m, xr[f]);
        T sum = T(0);
        for (std::int64_t f = 0; f < F; ++f) {
            orow[f] = std::exp(xr[f] - m);
            sum += orow[f];
        }
        for (std::int64_t f = 0; f < F; ++f) orow[f] /= sum;
    }
    auto backward = [R, F](detail::VarT<T>& o) {
        auto& xin = *o.node->inputs[0];
        if (!xin.requires_grad) return;
        xin.ensure_grad();
        for (std::int64_t r = 0; r < R; ++r) {
            const T* y = &o.data[static_cast<std::size_t>(r * F)];
            const T* g = &o.grad[static_cast<std::size_t>(r * F)];
            T dot = T(0);
            for (std::int64_t f = 0; f < F; ++f) dot += g[f] * y[f];
            T* dx = &xin.grad[static_cast<std::size_t>(r * F)];
            for (std::int64_t f = 0; f < F; ++f) dx[f] += y[f] * (g[f] - dot);
        }
    };
    return detail::make_result<T>(x.shape(), std::move(out), {x}, std::move(backward));
}

template <typename T>
TensorT<T> log_softmax_lastaxis(const TensorT<T>& x) {
    if (x.rank() < 1) throw DimensionError("log_softmax: input must have rank >= 1");
    const std::int64_t F = x.dim(x.rank() - 1);
    const std::int64_t R = x.numel() / F;
    const auto xs = x.values();
    std::vector<T> out(xs.size());
    for (std::int64_t r = 0; r < R; ++r) {
        const T* xr = &xs[static_cast<std::size_t>(r * F)];
        T* orow = &out[static_cast<std::size_t>(r * F)];
        T m = xr[0];
        for (std::int64_t f = 1; f < F; ++f) m = std::max(m, xr[f]);
        T sum = T(0);
        for (std::int64_t f = 0; f < F; ++f) sum += std::exp(xr[f] - m);
        const T lse = m + std::log(sum);
        for (std::int64_t f = 0; f < F; ++f) orow[f] = xr[f] - lse;
    }
    auto backward = [R, F](detail::VarT<T>& o) {
        auto& xin = *o.node->inputs[0];
        if (!xin.requires_grad) return;
        xin.ensure_grad();
        for (std::int64_t r = 0; r < R; ++r) {
            const T* yl = &o.data[static_cast<std::size_t>(r * F)];
            const T* g = &o.grad[static_cast<std::size_t>(r * F)];
            T gsum = T(0);
            for (std::int64_t f = 0; f < F; ++f) gsum += g[f];
            T* dx = &xin.grad[static_cast<std::size_t>(r * F)];
            for (std::int64_t f = 0; f < F; ++f) dx[f] += g[f] - std::exp(yl[f]) * gsum;
        }
    };
    return detail::make_result<T>(x.shape(), std::move(out), {x}, std::move(backward));
}

// ---- reductions --------------------------------------------------------------

template <typename T>
TensorT<T> sum_all(const TensorT<T>& x) {
    const auto xs = x.values();
    T acc = T(0);
    for (const T v : xs) acc += v;
    auto backward = [](detail::VarT<T>& o) {
        auto& xin = *o.node->inputs[0];
        if (!xin.requires_grad) return;
        xin.ensure_grad();
        const T g = o.grad[0];
        for (auto& d : xin.grad) d += g;
    };
    return detail::make_result<T>({1}, {acc}, {x}, std::move(backward));
}

template <typename T>
TensorT<T> mean_all(const TensorT<T>& x) {
    const auto xs = x.values();
    T acc = T(0);
    for (const T v : xs) acc += v;
    const T inv = T(1) / static_cast<T>(x.numel());
    auto backward = [inv](detail::VarT<T>& o) {
        auto& xin = *o.node->inputs[0];
        if (!xin.requires_grad) return;
        xin.ensure_grad();
        const T g = o.grad[0] * inv;
        for (auto& d : xin.grad) d += g;
    };
    return detail::make_result<T>({1}, {acc * inv}, {x}, std::move(backward));
}

template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x) {
    if (x.rank() != 4) throw DimensionError("global_avg_pool: input must be NCHW, got " + shape_str(x.shape()));
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t HW = H * W;
    const T inv = T(1) / static_cast<T>(HW);
    const auto xs = x.values();
    std::vector<T> out(static_cast<std::size_t>(N * C));
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const T* p = &xs[static_cast<std::size_t>(nc * HW)];
        T acc = T(0);
        for (std::int64_t i = 0; i < HW; ++i) acc += p[i];
        out[static_cast<std::size_t>(nc)] = acc * inv;
    }
    auto backward = [HW, inv](detail::VarT<T>& o) {
        auto& xin = *o.node->inputs[0];
        if (!xin.requires_grad) return;
        xin.ensure_grad();
        for (std::size_t nc = 0; nc < o.grad.size(); ++nc) {
            const T g = o.grad[nc] * inv;
            T* dx = &xin.grad[nc * static_cast<std::size_t>(HW)];
            for (std::int64_t i = 0; i < HW; ++i) dx[static_cast<std::size_t>(i)] += g;
        }
    };
    return detail::make_result<T>({N, C}, std::move(out), {x}, std::move(backward));
}

// ---- elementwise --------------------------------------------------------------

namespace {

template <typename T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

}  // namespace

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    check_same_shape(a, b, "add");
    const auto as = a.values();
    const auto bs = b.values();
    std::vector<T> out(as.size());
    for (std::size_t i = 0; i < as.size(); ++i) out[i] = as[i] + bs[i];
    auto backward = [](detail::VarT<T>& o) {
        for (int k = 0; k < 2; ++k) {
            auto& in = *o.node->inputs[static_cast<std::size_t>(k)];
            if (!in.requires_grad) continue;
            in.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) in.grad[i] += o.grad[i];
        }
    };
    return detail::make_result<T>(a.shape(), std::move(out), {a, b}, std::move(backward));
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    check_same_shape(a, b, "sub");
    const auto as = a.values();
    const auto bs = b.values();
    std::vector<T> out(as.size());
    for (std::size_t i = 0; i < as.size(); ++i) out[i] = as[i] - bs[i];
    auto backward = [](detail::VarT<T>& o) {
        auto& ain = *o.node->inputs[0];
        auto& bin = *o.node->inputs[1];
        if (ain.requires_grad) {
            ain.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) ain.grad[i] += o.grad[i];
        }
        if (bin.requires_grad) {
            bin.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) bin.grad[i] -= o.grad[i];
        }
    };
    return detail::make_result<T>(a.shape(), std::move(out), {a, b}, std::move(backward));
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    check_same_shape(a, b, "mul");
    const auto as = a.values();
    const auto bs = b.values();
    std::vector<T> out(as.size());
    for (std::size_t i = 0; i < as.size(); ++i) out[i] = as[i] * bs[i];
    auto backward = [](detail::VarT<T>& o) {
        auto& ain = *o.node->inputs[0];
        auto& bin = *o.node->inputs[1];
        if (ain.requires_grad) {
            ain.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) ain.grad[i] += o.grad[i] * bin.data[i];
        }
        if (bin.requires_grad) {
            bin.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) bin.grad[i] += o.grad[i] * ain.data[i];
        }
    };
    return detail::make_result<T>(a.shape(), std::move(out), {a, b}, std::move(backward));
}

template <typename T>
TensorT<T> square(const TensorT<T>& x) {
    const auto xs = x.values();
    std::vector<T> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i] * xs[i];
    auto backward = [](detail::VarT<T>& o) {
        auto& xin = *o.node->inputs[0];
        if (!xin.requires_grad) return;
        xin.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) xin.grad[i] += o.grad[i] * T(2) * xin.data[i];
    };
    return detail::make_result<T>(x.shape(), std::move(out), {x}, std::move(backward));
}

template <typename T>
TensorT<T> scale(const TensorT<T>& x, T c) {
    const auto xs = x.values();
    std::vector<T> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i] * c;
    auto backward = [c](detail::VarT<T>& o) {
        auto& xin = *o.node->inputs[0];
        if (!xin.requires_grad) return;
        xin.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) xin.grad[i] += o.grad[i] * c;
    };
    return detail::make_result<T>(x.shape(), std::move(out), {x}, std::move(backward));
}

template <typename T>
TensorT<T> log_floored(const TensorT<T>& x, T floor_value) {
    const auto xs = x.values();
    std::vector<T> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = std::log(std::max(xs[i], floor_value));
    auto backward = [floor_value](detail::VarT<T>& o) {
        auto& xin = *o.node->inputs[0];
        if (!xin.requires_grad) return;
        xin.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            if (xin.data[i] > floor_value) xin.grad[i] += o.grad[i] / xin.data[i];
    };
    return detail::make_result<T>(x.shape(), std::move(out), {x}, std::move(backward));
}

// ---- layout ----------------------------------------------------------------

template <typename T>
TensorT<T> nchw_to_nhwc(const TensorT<T>& x) {
    if (x.rank() != 4) throw DimensionError("nchw_to_nhwc: input must be 4-D, got " + shape_str(x.shape()));
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const auto xs = x.values();
    std::vector<T> out(xs.size());
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t h = 0; h < H; ++h)
                for (std::int64_t w = 0; w < W; ++w)
                    out[static_cast<std::size_t>(((n * H + h) * W + w) * C + c)] =
                        xs[static_cast<std::size_t>(((n * C + c) * H + h) * W + w)];
    auto backward = [N, C, H, W](detail::VarT<T>& o) {
        auto& xin = *o.node->inputs[0];
        if (!xin.requires_grad) return;
        xin.ensure_grad();
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < C; ++c)
                for (std::int64_t h = 0; h < H; ++h)
                    for (std::int64_t w = 0; w < W; ++w)
                        xin.grad[static_cast<std::size_t>(((n * C + c) * H + h) * W + w)] +=
                            o.grad[static_cast<std::size_t>(((n * H + h) * W + w) * C + c)];
    };
    return detail::make_result<T>({N, H, W, C}, std::move(out), {x}, std::move(backward));
}

template <typename T>
TensorT<T> nhwc_to_nchw(const TensorT<T>& x) {
    if (x.rank() != 4) throw DimensionError("nhwc_to_nchw: input must be 4-D, got " + shape_str(x.shape()));
    const std::int64_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const auto xs = x.values();
    std::vector<T> out(xs.size());
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t h = 0; h < H; ++h)
            for (std::int64_t w = 0; w < W; ++w)
                for (std::int64_t c = 0; c < C; ++c)
                    out[static_cast<std::size_t>(((n * C + c) * H + h) * W + w)] =
                        xs[static_cast<std::size_t>(((n * H + h) * W + w) * C + c)];
    auto backward = [N, C, H, W](detail::VarT<T>& o) {
        auto& xin = *o.node->inputs[0];
        if (!xin.requires_grad) return;
        xin.ensure_grad();
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t h = 0; h < H; ++h)
                for (std::int64_t w = 0; w < W; ++w)
                    for (std::int64_t c = 0; c < C; ++c)
                        xin.grad[static_cast<std::size_t>(((n * H + h) * W + w) * C + c)] +=
                            o.grad[static_cast<std::size_t>(((n * C + c) * H + h) * W + w)];
    };
    return detail::make_result<T>({N, C, H, W}, std::move(out), {x}, std::move(backward));
}

// ---- instantiations ----------------------------------------------------------

template class TensorT<float>;
template class TensorT<double>;

namespace detail {
template TensorT<float> make_result<float>(Shape, std::vector<float>, std::vector<TensorT<float>>,
                                           std::function<void(VarT<float>&)>);
template TensorT<double> make_result<double>(Shape, std::vector<double>, std::vector<TensorT<double>>,
                                             std::function<void(VarT<double>&)>);
}  // namespace detail

#define MVCONS_INSTANTIATE_OPS(T)                                                              \
    template TensorT<T> conv2d<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, int, \
                                  int, int);                                                   \
    template TensorT<T> linear<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&);    \
    template TensorT<T> layer_norm<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, T); \
    template TensorT<T> gelu<T>(const TensorT<T>&);                                            \
    template TensorT<T> relu<T>(const TensorT<T>&);                                            \
    template TensorT<T> softmax_lastaxis<T>(const TensorT<T>&);                                \
    template TensorT<T> log_softmax_lastaxis<T>(const TensorT<T>&);                            \
    template TensorT<T> mean_all<T>(const TensorT<T>&);                                        \
    template TensorT<T> sum_all<T>(const TensorT<T>&);                                         \
    template TensorT<T> global_avg_pool<T>(const TensorT<T>&);                                 \
    template TensorT<T> add<T>(const TensorT<T>&, const TensorT<T>&);                          \
    template TensorT<T> sub<T>(const TensorT<T>&, const TensorT<T>&);                          \
    template TensorT<T> mul<T>(const TensorT<T>&, const TensorT<T>&);                          \
    template TensorT<T> square<T>(const TensorT<T>&);                                          \
    template TensorT<T> scale<T>(const TensorT<T>&, T);                                        \
    template TensorT<T> log_floored<T>(const TensorT<T>&, T);                                  \
    template TensorT<T> nchw_to_nhwc<T>(const TensorT<T>&);                                    \
    template TensorT<T> nhwc_to_nchw<T>(const TensorT<T>&);

MVCONS_INSTANTIATE_OPS(float)
MVCONS_INSTANTIATE_OPS(double)

#undef MVCONS_INSTANTIATE_OPS

}  // namespace mvcons
