#include "uirate/conv.hpp"

#include <stdexcept>
#include <string>

namespace uirate {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

thread_local std::uint64_t g_conv_macs = 0;

struct ConvDims {
    int channels, height, width;
    int kernel, stride, pad;
    int out_h, out_w;
    int pad_h, pad_w;
};

ConvDims plan(const Tensor& x, int kernel, int stride, const char* op) {
    if (x.rank() != 3) throw std::invalid_argument(std::string(op) + ": input must be [C,H,W], got " + shape_str(x.shape()));
    if (stride < 1) throw std::invalid_argument(std::string(op) + ": stride must be >= 1");
    if (kernel < 1 || kernel % 2 == 0) {
        throw std::invalid_argument(std::string(op) + ": kernel size must be odd and positive, got " + std::to_string(kernel));
    }
    ConvDims d;
    d.channels = x.dim(0);
    d.height = x.dim(1);
    d.width = x.dim(2);
    d.kernel = kernel;
    d.stride = stride;
    d.pad = (kernel - 1) / 2;
    d.pad_h = d.height + 2 * d.pad;
    d.pad_w = d.width + 2 * d.pad;
    d.out_h = (d.pad_h - kernel) / stride + 1;
    d.out_w = (d.pad_w - kernel) / stride + 1;
    return d;
}

// Zero-padded copy of one [C,H,W] block. Keeping the padding materialized
// means every kernel loop runs its full trip count, which is what makes the
// instrumented MAC count equal the closed-form cost.
std::vector<double> pad_input(const std::vector<double>& x, const ConvDims& d) {
    std::vector<double> out(static_cast<std::size_t>(d.channels) * d.pad_h * d.pad_w, 0.0);
    for (int c = 0; c < d.channels; ++c) {
        for (int y = 0; y < d.height; ++y) {
            const double* src = x.data() + (static_cast<std::size_t>(c) * d.height + y) * d.width;
            double* dst = out.data() + (static_cast<std::size_t>(c) * d.pad_h + y + d.pad) * d.pad_w + d.pad;
            std::copy(src, src + d.width, dst);
        }
    }
    return out;
}

}  // namespace

std::uint64_t conv_mac_count() { return g_conv_macs; }
void reset_conv_mac_count() { g_conv_macs = 0; }

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
    if (w.rank() != 4) throw std::invalid_argument("conv2d: weight must be [N,C,k,k], got " + shape_str(w.shape()));
    const int n_out = w.dim(0), c_in = w.dim(1), k = w.dim(2);
    if (w.dim(3) != k) throw std::invalid_argument("conv2d: kernel must be square, got " + shape_str(w.shape()));
    ConvDims d = plan(x, k, stride, "conv2d");
    if (c_in != d.channels) {
        throw std::invalid_argument("conv2d: input channels " + std::to_string(d.channels) +
                                    " vs weight channels " + std::to_string(c_in));
    }
    if (b.defined() && (b.rank() != 1 || b.dim(0) != n_out)) {
        throw std::invalid_argument("conv2d: bias must be [" + std::to_string(n_out) + "], got " + shape_str(b.shape()));
    }

    const std::vector<double> xpad = pad_input(x.values(), d);
    const auto& wv = w.values();
    std::vector<double> out(static_cast<std::size_t>(n_out) * d.out_h * d.out_w, 0.0);
    std::uint64_t macs = 0;
    for (int n = 0; n < n_out; ++n) {
        const double bias = b.defined() ? b.values()[static_cast<std::size_t>(n)] : 0.0;
        for (int oy = 0; oy < d.out_h; ++oy) {
            for (int ox = 0; ox < d.out_w; ++ox) {
                double acc = bias;
                for (int c = 0; c < d.channels; ++c) {
                    const double* wrow = wv.data() + ((static_cast<std::size_t>(n) * d.channels + c) * k) * k;
                    const double* base = xpad.data() + (static_cast<std::size_t>(c) * d.pad_h + oy * d.stride) * d.pad_w + ox * d.stride;
                    for (int i = 0; i < k; ++i) {
                        const double* xr = base + static_cast<std::size_t>(i) * d.pad_w;
                        for (int j = 0; j < k; ++j) acc += wrow[static_cast<std::size_t>(i) * k + j] * xr[j];
                        macs += static_cast<std::uint64_t>(k);
                    }
                }
                out[(static_cast<std::size_t>(n) * d.out_h + oy) * d.out_w + ox] = acc;
            }
        }
    }
    g_conv_macs += macs;

    auto node = std::make_shared<Node>();
    node->shape = {n_out, d.out_h, d.out_w};
    node->value = std::move(out);
    node->parents = {x.shared_node(), w.shared_node()};
    if (b.defined()) node->parents.push_back(b.shared_node());
    node->requires_grad = x.requires_grad() || w.requires_grad() || (b.defined() && b.requires_grad());
    node->op = "conv2d";
    check_finite("conv2d", node->value);
    if (node->requires_grad) {
        Node* px = node->parents[0].get();
        Node* pw = node->parents[1].get();
        Node* pb = b.defined() ? node->parents[2].get() : nullptr;
        node->backward = [px, pw, pb, d, n_out, k](Node& self) {
            const std::vector<double> xpad2 = pad_input(px->value, d);
            std::vector<double> gpad(xpad2.size(), 0.0);
            const bool need_x = px->requires_grad;
            const bool need_w = pw->requires_grad;
            for (int n = 0; n < n_out; ++n) {
                for (int oy = 0; oy < d.out_h; ++oy) {
                    for (int ox = 0; ox < d.out_w; ++ox) {
                        const double g = self.grad[(static_cast<std::size_t>(n) * d.out_h + oy) * d.out_w + ox];
                        if (g == 0.0) continue;
                        if (pb) pb->grad_buffer()[static_cast<std::size_t>(n)] += g;
                        for (int c = 0; c < d.channels; ++c) {
                            const std::size_t wbase = (static_cast<std::size_t>(n) * d.channels + c) * k * k;
                            const std::size_t xbase = (static_cast<std::size_t>(c) * d.pad_h + oy * d.stride) * d.pad_w + ox * d.stride;
                            for (int i = 0; i < k; ++i) {
                                for (int j = 0; j < k; ++j) {
                                    const std::size_t xi = xbase + static_cast<std::size_t>(i) * d.pad_w + j;
                                    if (need_w) pw->grad_buffer()[wbase + static_cast<std::size_t>(i) * k + j] += g * xpad2[xi];
                                    if (need_x) gpad[xi] += g * pw->value[wbase + static_cast<std::size_t>(i) * k + j];
                                }
                            }
                        }
                    }
                }
            }
            if (need_x) {
                auto& gx = px->grad_buffer();
                for (int c = 0; c < d.channels; ++c)
                    for (int y = 0; y < d.height; ++y)
                        for (int x2 = 0; x2 < d.width; ++x2)
                            gx[(static_cast<std::size_t>(c) * d.height + y) * d.width + x2] +=
                                gpad[(static_cast<std::size_t>(c) * d.pad_h + y + d.pad) * d.pad_w + x2 + d.pad];
            }
        };
    }
    return Tensor::wrap(std::move(node));
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
    if (w.rank() != 3) throw std::invalid_argument("depthwise_conv2d: weight must be [C,k,k], got " + shape_str(w.shape()));
    const int k = w.dim(1);
    if (w.dim(2) != k) throw std::invalid_argument("depthwise_conv2d: kernel must be square");
    ConvDims d = plan(x, k, stride, "depthwise_conv2d");
    if (w.dim(0) != d.channels) {
        throw std::invalid_argument("depthwise_conv2d: input channels " + std::to_string(d.channels) +
                                    " vs weight channels " + std::to_string(w.dim(0)));
    }
    if (b.defined() && (b.rank() != 1 || b.dim(0) != d.channels)) {
        throw std::invalid_argument("depthwise_conv2d: bias must be [" + std::to_string(d.channels) + "]");
    }

    const std::vector<double> xpad = pad_input(x.values(), d);
    const auto& wv = w.values();
    std::vector<double> out(static_cast<std::size_t>(d.channels) * d.out_h * d.out_w, 0.0);
    std::uint64_t macs = 0;
    for (int c = 0; c < d.channels; ++c) {
        const double bias = b.defined() ? b.values()[static_cast<std::size_t>(c)] : 0.0;
        const double* wk = wv.data() + static_cast<std::size_t>(c) * k * k;
        for (int oy = 0; oy < d.out_h; ++oy) {
            for (int ox = 0; ox < d.out_w; ++ox) {
                double acc = bias;
                const double* base = xpad.data() + (static_cast<std::size_t>(c) * d.pad_h + oy * d.stride) * d.pad_w + ox * d.stride;
                for (int i = 0; i < k; ++i) {
                    const double* xr = base + static_cast<std::size_t>(i) * d.pad_w;
                    for (int j = 0; j < k; ++j) acc += wk[static_cast<std::size_t>(i) * k + j] * xr[j];
                    macs += static_cast<std::uint64_t>(k);
                }
                out[(static_cast<std::size_t>(c) * d.out_h + oy) * d.out_w + ox] = acc;
            }
        }
    }
    g_conv_macs += macs;

    auto node = std::make_shared<Node>();
    node->shape = {d.channels, d.out_h, d.out_w};
    node->value = std::move(out);
    node->parents = {x.shared_node(), w.shared_node()};
    if (b.defined()) node->parents.push_back(b.shared_node());
    node->requires_grad = x.requires_grad() || w.requires_grad() || (b.defined() && b.requires_grad());
    node->op = "depthwise_conv2d";
    check_finite("depthwise_conv2d", node->value);
    if (node->requires_grad) {
        Node* px = node->parents[0].get();
        Node* pw = node->parents[1].get();
        Node* pb = b.defined() ? node->parents[2].get() : nullptr;
        node->backward = [px, pw, pb, d, k](Node& self) {
            const std::vector<double> xpad2 = pad_input(px->value, d);
            std::vector<double> gpad(xpad2.size(), 0.0);
            const bool need_x = px->requires_grad;
            const bool need_w = pw->requires_grad;
            for (int c = 0; c < d.channels; ++c) {
                const std::size_t wbase = static_cast<std::size_t>(c) * k * k;
                for (int oy = 0; oy < d.out_h; ++oy) {
                    for (int ox = 0; ox < d.out_w; ++ox) {
                        const double g = self.grad[(static_cast<std::size_t>(c) * d.out_h + oy) * d.out_w + ox];
                        if (g == 0.0) continue;
                        if (pb) pb->grad_buffer()[static_cast<std::size_t>(c)] += g;
                        const std::size_t xbase = (static_cast<std::size_t>(c) * d.pad_h + oy * d.stride) * d.pad_w + ox * d.stride;
                        for (int i = 0; i < k; ++i) {
                            for (int j = 0; j < k; ++j) {
                                const std::size_t xi = xbase + static_cast<std::size_t>(i) * d.pad_w + j;
                                if (need_w) pw->grad_buffer()[wbase + static_cast<std::size_t>(i) * k + j] += g * xpad2[xi];
                                if (need_x) gpad[xi] += g * pw->value[wbase + static_cast<std::size_t>(i) * k + j];
                            }
                        }
                    }
                }
            }
            if (need_x) {
                auto& gx = px->grad_buffer();
                for (int c = 0; c < d.channels; ++c)
                    for (int y = 0; y < d.height; ++y)
                        for (int x2 = 0; x2 < d.width; ++x2)
                            gx[(static_cast<std::size_t>(c) * d.height + y) * d.width + x2] +=
                                gpad[(static_cast<std::size_t>(c) * d.pad_h + y + d.pad) * d.pad_w + x2 + d.pad];
            }
        };
    }
    return Tensor::wrap(std::move(node));
}

Tensor pointwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 3) throw std::invalid_argument("pointwise_conv2d: input must be [C,H,W], got " + shape_str(x.shape()));
    if (w.rank() != 2) throw std::invalid_argument("pointwise_conv2d: weight must be [N,C], got " + shape_str(w.shape()));
    const int c_in = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int n_out = w.dim(0);
    if (w.dim(1) != c_in) {
        throw std::invalid_argument("pointwise_conv2d: input channels " + std::to_string(c_in) +
                                    " vs weight channels " + std::to_string(w.dim(1)));
    }
    if (b.defined() && (b.rank() != 1 || b.dim(0) != n_out)) {
        throw std::invalid_argument("pointwise_conv2d: bias must be [" + std::to_string(n_out) + "]");
    }

    const int hw = h * wd;
    const auto& xv = x.values();
    const auto& wv = w.values();
    std::vector<double> out(static_cast<std::size_t>(n_out) * hw, 0.0);
    std::uint64_t macs = 0;
    for (int n = 0; n < n_out; ++n) {
        double* orow = out.data() + static_cast<std::size_t>(n) * hw;
        if (b.defined()) {
            const double bias = b.values()[static_cast<std::size_t>(n)];
            for (int i = 0; i < hw; ++i) orow[i] = bias;
        }
        for (int c = 0; c < c_in; ++c) {
            const double wnc = wv[static_cast<std::size_t>(n) * c_in + c];
            const double* xrow = xv.data() + static_cast<std::size_t>(c) * hw;
            for (int i = 0; i < hw; ++i) orow[i] += wnc * xrow[i];
            macs += static_cast<std::uint64_t>(hw);
        }
    }
    g_conv_macs += macs;

    auto node = std::make_shared<Node>();
    node->shape = {n_out, h, wd};
    node->value = std::move(out);
    node->parents = {x.shared_node(), w.shared_node()};
    if (b.defined()) node->parents.push_back(b.shared_node());
    node->requires_grad = x.requires_grad() || w.requires_grad() || (b.defined() && b.requires_grad());
    node->op = "pointwise_conv2d";
    check_finite("pointwise_conv2d", node->value);
    if (node->requires_grad) {
        Node* px = node->parents[0].get();
        Node* pw = node->parents[1].get();
        Node* pb = b.defined() ? node->parents[2].get() : nullptr;
        node->backward = [px, pw, pb, c_in, n_out, hw](Node& self) {
            for (int n = 0; n < n_out; ++n) {
                const double* grow = self.grad.data() + static_cast<std::size_t>(n) * hw;
                if (pb) {
                    double acc = 0.0;
                    for (int i = 0; i < hw; ++i) acc += grow[i];
                    pb->grad_buffer()[static_cast<std::size_t>(n)] += acc;
                }
                for (int c = 0; c < c_in; ++c) {
                    if (pw->requires_grad) {
                        const double* xrow = px->value.data() + static_cast<std::size_t>(c) * hw;
                        double acc = 0.0;
                        for (int i = 0; i < hw; ++i) acc += grow[i] * xrow[i];
                        pw->grad_buffer()[static_cast<std::size_t>(n) * c_in + c] += acc;
                    }
                    if (px->requires_grad) {
                        const double wnc = pw->value[static_cast<std::size_t>(n) * c_in + c];
                        double* gxrow = px->grad_buffer().data() + static_cast<std::size_t>(c) * hw;
                        for (int i = 0; i < hw; ++i) gxrow[i] += wnc * grow[i];
                    }
                }
            }
        };
    }
    return Tensor::wrap(std::move(node));
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.rank() != 3) throw std::invalid_argument("global_avg_pool: input must be [C,H,W], got " + shape_str(x.shape()));
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int hw = h * w;
    const double inv = 1.0 / hw;
    const auto& xv = x.values();
    std::vector<double> out(static_cast<std::size_t>(c), 0.0);
    for (int ch = 0; ch < c; ++ch) {
        const double* xrow = xv.data() + static_cast<std::size_t>(ch) * hw;
        double acc = 0.0;
        for (int i = 0; i < hw; ++i) acc += xrow[i];
        out[static_cast<std::size_t>(ch)] = acc * inv;
    }

    auto node = std::make_shared<Node>();
    node->shape = {c};
    node->value = std::move(out);
    node->parents = {x.shared_node()};
    node->requires_grad = x.requires_grad();
    node->op = "global_avg_pool";
    check_finite("global_avg_pool", node->value);
    if (node->requires_grad) {
        Node* px = node->parents[0].get();
        node->backward = [px, c, hw, inv](Node& self) {
            auto& g = px->grad_buffer();
            for (int ch = 0; ch < c; ++ch) {
                const double gch = self.grad[static_cast<std::size_t>(ch)] * inv;
                double* grow = g.data() + static_cast<std::size_t>(ch) * hw;
                for (int i = 0; i < hw; ++i) grow[i] += gch;
            }
        };
    }
    return Tensor::wrap(std::move(node));
}

}  // namespace uirate
