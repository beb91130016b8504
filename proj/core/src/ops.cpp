#include "uirate/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "uirate/rand.hpp"

namespace uirate {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr new_node(Shape shape, std::vector<double> value, std::vector<NodePtr> parents, const char* op) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents) {
        if (p->requires_grad) {
            n->requires_grad = true;
            break;
        }
    }
    n->op = op;
    check_finite(op, n->value);
    return n;
}

Tensor finish(NodePtr n) { return Tensor::wrap(std::move(n)); }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
}

Tensor binary_elementwise(const char* op, const Tensor& a, const Tensor& b,
                          double (*fwd)(double, double),
                          double (*da)(double, double),
                          double (*db)(double, double)) {
    require_same_shape(op, a, b);
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
    auto n = new_node(a.shape(), std::move(out), {a.shared_node(), b.shared_node()}, op);
    if (n->requires_grad) {
        Node* pa = n->parents[0].get();
        Node* pb = n->parents[1].get();
        n->backward = [pa, pb, da, db](Node& self) {
            if (pa->requires_grad) {
                auto& g = pa->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * da(pa->value[i], pb->value[i]);
            }
            if (pb->requires_grad) {
                auto& g = pb->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * db(pa->value[i], pb->value[i]);
            }
        };
    }
    return finish(n);
}

Tensor unary_elementwise(const char* op, const Tensor& x,
                         double (*fwd)(double),
                         double (*deriv)(double)) {
    const auto& xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
    auto n = new_node(x.shape(), std::move(out), {x.shared_node()}, op);
    if (n->requires_grad) {
        Node* px = n->parents[0].get();
        n->backward = [px, deriv](Node& self) {
            auto& g = px->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(px->value[i]);
        };
    }
    return finish(n);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

Tensor abs(const Tensor& x) {
    return unary_elementwise(
        "abs", x, [](double v) { return std::abs(v); },
        [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor sqrt(const Tensor& x) {
    return unary_elementwise(
        "sqrt", x, [](double v) { return std::sqrt(v); },
        [](double v) { return 0.5 / std::sqrt(v); });
}

Tensor tanh(const Tensor& x) {
    return unary_elementwise(
        "tanh", x, [](double v) { return std::tanh(v); },
        [](double v) {
            double t = std::tanh(v);
            return 1.0 - t * t;
        });
}

Tensor scale_shift(const Tensor& x, double scale, double shift) {
    const auto& xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = scale * xv[i] + shift;
    auto n = new_node(x.shape(), std::move(out), {x.shared_node()}, "scale_shift");
    if (n->requires_grad) {
        Node* px = n->parents[0].get();
        n->backward = [px, scale](Node& self) {
            auto& g = px->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * scale;
        };
    }
    return finish(n);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& base = parts[0].shape();
    const int r = static_cast<int>(base.size());
    if (axis < 0 || axis >= r) throw std::invalid_argument("concat: axis " + std::to_string(axis) + " out of range");

    Shape out_shape = base;
    int axis_total = 0;
    for (const Tensor& p : parts) {
        const Shape& s = p.shape();
        if (static_cast<int>(s.size()) != r) throw std::invalid_argument("concat: rank mismatch");
        for (int d = 0; d < r; ++d) {
            if (d != axis && s[static_cast<std::size_t>(d)] != base[static_cast<std::size_t>(d)]) {
                throw std::invalid_argument("concat: shape mismatch " + shape_str(s) + " vs " + shape_str(base));
            }
        }
        axis_total += s[static_cast<std::size_t>(axis)];
    }
    out_shape[static_cast<std::size_t>(axis)] = axis_total;

    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= base[static_cast<std::size_t>(d)];
    for (int d = axis + 1; d < r; ++d) inner *= base[static_cast<std::size_t>(d)];

    std::vector<double> out(static_cast<std::size_t>(outer * axis_total * inner));
    std::vector<NodePtr> parents;
    std::vector<std::int64_t> extents;
    parents.reserve(parts.size());
    for (const Tensor& p : parts) {
        parents.push_back(p.shared_node());
        extents.push_back(p.shape()[static_cast<std::size_t>(axis)]);
    }
    std::int64_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& pv = parts[k].values();
        const std::int64_t ext = extents[k];
        for (std::int64_t o = 0; o < outer; ++o) {
            const double* src = pv.data() + o * ext * inner;
            double* dst = out.data() + (o * axis_total + offset) * inner;
            std::copy(src, src + ext * inner, dst);
        }
        offset += ext;
    }

    auto n = new_node(std::move(out_shape), std::move(out), std::move(parents), "concat");
    if (n->requires_grad) {
        std::vector<Node*> raw;
        for (auto& p : n->parents) raw.push_back(p.get());
        const std::int64_t total = axis_total;
        n->backward = [raw, extents, outer, inner, total](Node& self) {
            std::int64_t off = 0;
            for (std::size_t k = 0; k < raw.size(); ++k) {
                const std::int64_t ext = extents[k];
                if (raw[k]->requires_grad) {
                    auto& g = raw[k]->grad_buffer();
                    for (std::int64_t o = 0; o < outer; ++o) {
                        const double* src = self.grad.data() + (o * total + off) * inner;
                        double* dst = g.data() + o * ext * inner;
                        for (std::int64_t i = 0; i < ext * inner; ++i) dst[i] += src[i];
                    }
                }
                off += ext;
            }
        };
    }
    return finish(n);
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    auto n = new_node(std::move(shape), x.values(), {x.shared_node()}, "reshape");
    if (n->requires_grad) {
        Node* px = n->parents[0].get();
        n->backward = [px](Node& self) {
            auto& g = px->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        };
    }
    return finish(n);
}

Tensor transpose(const Tensor& x) {
    if (x.rank() != 2) throw std::invalid_argument("transpose: rank-2 tensor required, got " + shape_str(x.shape()));
    const int m = x.dim(0), k = x.dim(1);
    const auto& xv = x.values();
    std::vector<double> out(xv.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) out[static_cast<std::size_t>(j) * m + i] = xv[static_cast<std::size_t>(i) * k + j];
    auto n = new_node({k, m}, std::move(out), {x.shared_node()}, "transpose");
    if (n->requires_grad) {
        Node* px = n->parents[0].get();
        n->backward = [px, m, k](Node& self) {
            auto& g = px->grad_buffer();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < k; ++j)
                    g[static_cast<std::size_t>(i) * k + j] += self.grad[static_cast<std::size_t>(j) * m + i];
        };
    }
    return finish(n);
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
    if (x.rank() != 2) throw std::invalid_argument("slice_cols: rank-2 tensor required");
    const int m = x.dim(0), k = x.dim(1);
    if (c0 < 0 || c1 > k || c0 >= c1) {
        throw std::invalid_argument("slice_cols: bad column range [" + std::to_string(c0) + "," +
                                    std::to_string(c1) + ") for width " + std::to_string(k));
    }
    const int w = c1 - c0;
    const auto& xv = x.values();
    std::vector<double> out(static_cast<std::size_t>(m) * w);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) out[static_cast<std::size_t>(i) * w + j] = xv[static_cast<std::size_t>(i) * k + c0 + j];
    auto n = new_node({m, w}, std::move(out), {x.shared_node()}, "slice_cols");
    if (n->requires_grad) {
        Node* px = n->parents[0].get();
        n->backward = [px, m, k, w, c0](Node& self) {
            auto& g = px->grad_buffer();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < w; ++j)
                    g[static_cast<std::size_t>(i) * k + c0 + j] += self.grad[static_cast<std::size_t>(i) * w + j];
        };
    }
    return finish(n);
}

Tensor row(const Tensor& x, int r) {
    if (x.rank() != 2) throw std::invalid_argument("row: rank-2 tensor required");
    const int m = x.dim(0), k = x.dim(1);
    if (r < 0 || r >= m) throw std::invalid_argument("row: index " + std::to_string(r) + " out of range");
    const auto& xv = x.values();
    std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(r) * k,
                            xv.begin() + static_cast<std::ptrdiff_t>(r + 1) * k);
    auto n = new_node({k}, std::move(out), {x.shared_node()}, "row");
    if (n->requires_grad) {
        Node* px = n->parents[0].get();
        n->backward = [px, r, k](Node& self) {
            auto& g = px->grad_buffer();
            for (int j = 0; j < k; ++j) g[static_cast<std::size_t>(r) * k + j] += self.grad[static_cast<std::size_t>(j)];
        };
    }
    return finish(n);
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: no inputs");
    const int d = static_cast<int>(rows[0].numel());
    std::vector<double> out;
    out.reserve(rows.size() * static_cast<std::size_t>(d));
    std::vector<NodePtr> parents;
    for (const Tensor& r : rows) {
        if (r.rank() != 1 || r.numel() != d) {
            throw std::invalid_argument("stack_rows: all rows must be rank-1 of equal length");
        }
        out.insert(out.end(), r.values().begin(), r.values().end());
        parents.push_back(r.shared_node());
    }
    auto n = new_node({static_cast<int>(rows.size()), d}, std::move(out), std::move(parents), "stack_rows");
    if (n->requires_grad) {
        std::vector<Node*> raw;
        for (auto& p : n->parents) raw.push_back(p.get());
        n->backward = [raw, d](Node& self) {
            for (std::size_t r = 0; r < raw.size(); ++r) {
                if (!raw[r]->requires_grad) continue;
                auto& g = raw[r]->grad_buffer();
                for (int j = 0; j < d; ++j) g[static_cast<std::size_t>(j)] += self.grad[r * static_cast<std::size_t>(d) + j];
            }
        };
    }
    return finish(n);
}

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    auto n = new_node({1}, {s}, {x.shared_node()}, "sum_all");
    if (n->requires_grad) {
        Node* px = n->parents[0].get();
        n->backward = [px](Node& self) {
            auto& g = px->grad_buffer();
            for (double& gi : g) gi += self.grad[0];
        };
    }
    return finish(n);
}

Tensor mean_all(const Tensor& x) {
    const double inv = 1.0 / static_cast<double>(x.numel());
    double s = 0.0;
    for (double v : x.values()) s += v;
    auto n = new_node({1}, {s * inv}, {x.shared_node()}, "mean_all");
    if (n->requires_grad) {
        Node* px = n->parents[0].get();
        n->backward = [px, inv](Node& self) {
            auto& g = px->grad_buffer();
            for (double& gi : g) gi += self.grad[0] * inv;
        };
    }
    return finish(n);
}

Tensor mean_axis(const Tensor& x, int axis) {
    const Shape& s = x.shape();
    const int r = static_cast<int>(s.size());
    if (axis < 0 || axis >= r) throw std::invalid_argument("mean_axis: axis out of range");
    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s[static_cast<std::size_t>(d)];
    for (int d = axis + 1; d < r; ++d) inner *= s[static_cast<std::size_t>(d)];
    const std::int64_t ext = s[static_cast<std::size_t>(axis)];
    const double inv = 1.0 / static_cast<double>(ext);

    Shape out_shape;
    for (int d = 0; d < r; ++d)
        if (d != axis) out_shape.push_back(s[static_cast<std::size_t>(d)]);
    if (out_shape.empty()) out_shape.push_back(1);

    const auto& xv = x.values();
    std::vector<double> out(static_cast<std::size_t>(outer * inner), 0.0);
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t e = 0; e < ext; ++e)
            for (std::int64_t i = 0; i < inner; ++i)
                out[static_cast<std::size_t>(o * inner + i)] += xv[static_cast<std::size_t>((o * ext + e) * inner + i)];
    for (double& v : out) v *= inv;

    auto n = new_node(std::move(out_shape), std::move(out), {x.shared_node()}, "mean_axis");
    if (n->requires_grad) {
        Node* px = n->parents[0].get();
        n->backward = [px, outer, inner, ext, inv](Node& self) {
            auto& g = px->grad_buffer();
            for (std::int64_t o = 0; o < outer; ++o)
                for (std::int64_t e = 0; e < ext; ++e)
                    for (std::int64_t i = 0; i < inner; ++i)
                        g[static_cast<std::size_t>((o * ext + e) * inner + i)] +=
                            self.grad[static_cast<std::size_t>(o * inner + i)] * inv;
        };
    }
    return finish(n);
}

Tensor dot(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1) throw std::invalid_argument("dot: rank-1 tensors required");
    require_same_shape("dot", a, b);
    const auto& av = a.values();
    const auto& bv = b.values();
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
    auto n = new_node({1}, {s}, {a.shared_node(), b.shared_node()}, "dot");
    if (n->requires_grad) {
        Node* pa = n->parents[0].get();
        Node* pb = n->parents[1].get();
        n->backward = [pa, pb](Node& self) {
            const double g = self.grad[0];
            if (pa->requires_grad) {
                auto& ga = pa->grad_buffer();
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * pb->value[i];
            }
            if (pb->requires_grad) {
                auto& gb = pb->grad_buffer();
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * pa->value[i];
            }
        };
    }
    return finish(n);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw std::invalid_argument("matmul: rank-2 tensors required, got " + shape_str(a.shape()) +
                                    " and " + shape_str(b.shape()));
    }
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), p = b.dim(1);
    if (k != k2) {
        throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                                    " x " + shape_str(b.shape()));
    }
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(static_cast<std::size_t>(m) * p, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int t = 0; t < k; ++t) {
            const double aik = av[static_cast<std::size_t>(i) * k + t];
            const double* brow = bv.data() + static_cast<std::size_t>(t) * p;
            double* orow = out.data() + static_cast<std::size_t>(i) * p;
            for (int j = 0; j < p; ++j) orow[j] += aik * brow[j];
        }
    }
    auto n = new_node({m, p}, std::move(out), {a.shared_node(), b.shared_node()}, "matmul");
    if (n->requires_grad) {
        Node* pa = n->parents[0].get();
        Node* pb = n->parents[1].get();
        n->backward = [pa, pb, m, k, p](Node& self) {
            if (pa->requires_grad) {
                auto& ga = pa->grad_buffer();
                // dA = dY * B^T
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < p; ++j) {
                        const double gij = self.grad[static_cast<std::size_t>(i) * p + j];
                        const double* brow = pb->value.data() + static_cast<std::size_t>(0) * p + j;
                        for (int t = 0; t < k; ++t) ga[static_cast<std::size_t>(i) * k + t] += gij * brow[static_cast<std::size_t>(t) * p];
                    }
            }
            if (pb->requires_grad) {
                auto& gb = pb->grad_buffer();
                // dB = A^T * dY
                for (int t = 0; t < k; ++t)
                    for (int i = 0; i < m; ++i) {
                        const double ait = pa->value[static_cast<std::size_t>(i) * k + t];
                        const double* grow = self.grad.data() + static_cast<std::size_t>(i) * p;
                        double* gbrow = gb.data() + static_cast<std::size_t>(t) * p;
                        for (int j = 0; j < p; ++j) gbrow[j] += ait * grow[j];
                    }
            }
        };
    }
    return finish(n);
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
    if (x.rank() != 2 || v.rank() != 1 || x.dim(1) != v.dim(0)) {
        throw std::invalid_argument("add_rowvec: need [n,m] + [m], got " + shape_str(x.shape()) +
                                    " and " + shape_str(v.shape()));
    }
    const int m = x.dim(0), k = x.dim(1);
    const auto& xv = x.values();
    const auto& vv = v.values();
    std::vector<double> out(xv.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j)
            out[static_cast<std::size_t>(i) * k + j] = xv[static_cast<std::size_t>(i) * k + j] + vv[static_cast<std::size_t>(j)];
    auto n = new_node(x.shape(), std::move(out), {x.shared_node(), v.shared_node()}, "add_rowvec");
    if (n->requires_grad) {
        Node* px = n->parents[0].get();
        Node* pv = n->parents[1].get();
        n->backward = [px, pv, m, k](Node& self) {
            if (px->requires_grad) {
                auto& g = px->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
            if (pv->requires_grad) {
                auto& g = pv->grad_buffer();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < k; ++j) g[static_cast<std::size_t>(j)] += self.grad[static_cast<std::size_t>(i) * k + j];
            }
        };
    }
    return finish(n);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.rank() != 2) throw std::invalid_argument("linear: weight must be rank-2 [in,out]");
    if (x.rank() == 1) {
        if (x.dim(0) != w.dim(0)) {
            throw std::invalid_argument("linear: input width " + std::to_string(x.dim(0)) +
                                        " vs weight rows " + std::to_string(w.dim(0)));
        }
        Tensor y = matmul(reshape(x, {1, x.dim(0)}), w);
        if (b.defined()) y = add_rowvec(y, b);
        return reshape(y, {w.dim(1)});
    }
    if (x.rank() == 2) {
        Tensor y = matmul(x, w);
        if (b.defined()) y = add_rowvec(y, b);
        return y;
    }
    throw std::invalid_argument("linear: input must be rank-1 or rank-2, got " + shape_str(x.shape()));
}

namespace {

Tensor softmax_impl(const Tensor& x, const std::vector<int>* key_mask, double temperature, bool log_output, const char* op) {
    if (temperature <= 0.0) throw std::invalid_argument(std::string(op) + ": temperature must be positive");
    const bool vec = x.rank() == 1;
    if (!vec && x.rank() != 2) throw std::invalid_argument(std::string(op) + ": rank-1 or rank-2 tensor required");
    const int rows = vec ? 1 : x.dim(0);
    const int cols = vec ? x.dim(0) : x.dim(1);
    if (key_mask && static_cast<int>(key_mask->size()) != cols) {
        throw std::invalid_argument(std::string(op) + ": mask length " + std::to_string(key_mask->size()) +
                                    " vs row width " + std::to_string(cols));
    }

    const auto& xv = x.values();
    std::vector<double> soft(xv.size(), 0.0);
    std::vector<double> out(xv.size(), 0.0);
    const double neg_inf = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < rows; ++r) {
        const double* in = xv.data() + static_cast<std::size_t>(r) * cols;
        double mx = neg_inf;
        for (int c = 0; c < cols; ++c) {
            if (key_mask && (*key_mask)[static_cast<std::size_t>(c)] == 0) continue;
            mx = std::max(mx, in[c] / temperature);
        }
        if (mx == neg_inf) continue;  // fully masked row stays zero
        double denom = 0.0;
        for (int c = 0; c < cols; ++c) {
            if (key_mask && (*key_mask)[static_cast<std::size_t>(c)] == 0) continue;
            denom += std::exp(in[c] / temperature - mx);
        }
        const double log_denom = std::log(denom);
        for (int c = 0; c < cols; ++c) {
            if (key_mask && (*key_mask)[static_cast<std::size_t>(c)] == 0) continue;
            const double z = in[c] / temperature - mx;
            const double p = std::exp(z - log_denom);
            soft[static_cast<std::size_t>(r) * cols + c] = p;
            out[static_cast<std::size_t>(r) * cols + c] = log_output ? z - log_denom : p;
        }
    }

    auto n = new_node(x.shape(), std::move(out),
                      std::vector<NodePtr>{x.shared_node()}, op);
    if (n->requires_grad) {
        Node* px = n->parents[0].get();
        std::vector<int> mask_copy = key_mask ? *key_mask : std::vector<int>();
        const bool masked = key_mask != nullptr;
        n->backward = [px, rows, cols, temperature, log_output, soft, mask_copy, masked](Node& self) {
            auto& g = px->grad_buffer();
            for (int r = 0; r < rows; ++r) {
                const double* srow = soft.data() + static_cast<std::size_t>(r) * cols;
                const double* grow = self.grad.data() + static_cast<std::size_t>(r) * cols;
                double acc = 0.0;
                for (int c = 0; c < cols; ++c) {
                    if (masked && mask_copy[static_cast<std::size_t>(c)] == 0) continue;
                    acc += log_output ? grow[c] : grow[c] * srow[c];
                }
                for (int c = 0; c < cols; ++c) {
                    if (masked && mask_copy[static_cast<std::size_t>(c)] == 0) continue;
                    const double d = log_output ? grow[c] - srow[c] * acc
                                                : srow[c] * (grow[c] - acc);
                    g[static_cast<std::size_t>(r) * cols + c] += d / temperature;
                }
            }
        };
    }
    return finish(n);
}

}  // namespace

Tensor softmax_rows(const Tensor& x, double temperature) {
    return softmax_impl(x, nullptr, temperature, false, "softmax_rows");
}

Tensor log_softmax_rows(const Tensor& x, double temperature) {
    return softmax_impl(x, nullptr, temperature, true, "log_softmax_rows");
}

Tensor masked_softmax_rows(const Tensor& x, const std::vector<int>& key_mask, double temperature) {
    return softmax_impl(x, &key_mask, temperature, false, "masked_softmax_rows");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const bool vec = x.rank() == 1;
    if (!vec && x.rank() != 2) throw std::invalid_argument("layer_norm: rank-1 or rank-2 tensor required");
    const int rows = vec ? 1 : x.dim(0);
    const int cols = vec ? x.dim(0) : x.dim(1);
    if (cols <= 0) throw std::invalid_argument("layer_norm: empty normalization axis");
    if (gain.rank() != 1 || gain.dim(0) != cols || bias.rank() != 1 || bias.dim(0) != cols) {
        throw std::invalid_argument("layer_norm: gain/bias must be rank-1 of width " + std::to_string(cols) +
                                    ", got " + shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
    }

    const auto& xv = x.values();
    const auto& gv = gain.values();
    const auto& bv = bias.values();
    std::vector<double> out(xv.size());
    std::vector<double> xhat(xv.size());
    std::vector<double> inv_sigma(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r) {
        const double* in = xv.data() + static_cast<std::size_t>(r) * cols;
        double mean = 0.0;
        for (int c = 0; c < cols; ++c) mean += in[c];
        mean /= cols;
        double var = 0.0;
        for (int c = 0; c < cols; ++c) {
            const double d = in[c] - mean;
            var += d * d;
        }
        var /= cols;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[static_cast<std::size_t>(r)] = is;
        for (int c = 0; c < cols; ++c) {
            const double h = (in[c] - mean) * is;
            xhat[static_cast<std::size_t>(r) * cols + c] = h;
            out[static_cast<std::size_t>(r) * cols + c] = h * gv[static_cast<std::size_t>(c)] + bv[static_cast<std::size_t>(c)];
        }
    }

    auto n = new_node(x.shape(), std::move(out),
                      {x.shared_node(), gain.shared_node(), bias.shared_node()}, "layer_norm");
    if (n->requires_grad) {
        Node* px = n->parents[0].get();
        Node* pg = n->parents[1].get();
        Node* pb = n->parents[2].get();
        n->backward = [px, pg, pb, rows, cols, xhat, inv_sigma](Node& self) {
            for (int r = 0; r < rows; ++r) {
                const double* grow = self.grad.data() + static_cast<std::size_t>(r) * cols;
                const double* hrow = xhat.data() + static_cast<std::size_t>(r) * cols;
                if (pg->requires_grad) {
                    auto& gg = pg->grad_buffer();
                    for (int c = 0; c < cols; ++c) gg[static_cast<std::size_t>(c)] += grow[c] * hrow[c];
                }
                if (pb->requires_grad) {
                    auto& gb = pb->grad_buffer();
                    for (int c = 0; c < cols; ++c) gb[static_cast<std::size_t>(c)] += grow[c];
                }
                if (px->requires_grad) {
                    auto& gx = px->grad_buffer();
                    double mean_u = 0.0, mean_uh = 0.0;
                    for (int c = 0; c < cols; ++c) {
                        const double u = grow[c] * pg->value[static_cast<std::size_t>(c)];
                        mean_u += u;
                        mean_uh += u * hrow[c];
                    }
                    mean_u /= cols;
                    mean_uh /= cols;
                    const double is = inv_sigma[static_cast<std::size_t>(r)];
                    for (int c = 0; c < cols; ++c) {
                        const double u = grow[c] * pg->value[static_cast<std::size_t>(c)];
                        gx[static_cast<std::size_t>(r) * cols + c] += is * (u - mean_u - hrow[c] * mean_uh);
                    }
                }
            }
        };
    }
    return finish(n);
}

Tensor masked_mean_rows(const Tensor& x, const std::vector<int>& mask) {
    if (x.rank() != 2) throw std::invalid_argument("masked_mean_rows: rank-2 tensor required");
    const int rows = x.dim(0), cols = x.dim(1);
    if (static_cast<int>(mask.size()) != rows) {
        throw std::invalid_argument("masked_mean_rows: mask length " + std::to_string(mask.size()) +
                                    " vs row count " + std::to_string(rows));
    }
    int valid = 0;
    for (int m : mask) valid += (m != 0);
    const double inv = valid > 0 ? 1.0 / valid : 0.0;

    const auto& xv = x.values();
    std::vector<double> out(static_cast<std::size_t>(cols), 0.0);
    for (int r = 0; r < rows; ++r) {
        if (mask[static_cast<std::size_t>(r)] == 0) continue;
        const double* in = xv.data() + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(c)] += in[c];
    }
    for (double& v : out) v *= inv;

    auto n = new_node({cols}, std::move(out), {x.shared_node()}, "masked_mean_rows");
    if (n->requires_grad) {
        Node* px = n->parents[0].get();
        std::vector<int> mask_copy = mask;
        n->backward = [px, rows, cols, mask_copy, inv](Node& self) {
            auto& g = px->grad_buffer();
            for (int r = 0; r < rows; ++r) {
                if (mask_copy[static_cast<std::size_t>(r)] == 0) continue;
                for (int c = 0; c < cols; ++c) g[static_cast<std::size_t>(r) * cols + c] += self.grad[static_cast<std::size_t>(c)] * inv;
            }
        };
    }
    return finish(n);
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
    if (table.rank() != 2) throw std::invalid_argument("embedding_rows: table must be rank-2 [V,D]");
    const int v = table.dim(0), d = table.dim(1);
    for (int id : ids) {
        if (id < 0 || id >= v) {
            throw std::invalid_argument("embedding_rows: id " + std::to_string(id) +
                                        " out of range for vocabulary size " + std::to_string(v));
        }
    }
    const auto& tv = table.values();
    std::vector<double> out;
    out.reserve(ids.size() * static_cast<std::size_t>(d));
    for (int id : ids) {
        const double* src = tv.data() + static_cast<std::size_t>(id) * d;
        out.insert(out.end(), src, src + d);
    }
    auto n = new_node({static_cast<int>(ids.size()), d}, std::move(out), {table.shared_node()}, "embedding_rows");
    if (n->requires_grad) {
        Node* pt = n->parents[0].get();
        std::vector<int> ids_copy = ids;
        n->backward = [pt, ids_copy, d](Node& self) {
            auto& g = pt->grad_buffer();
            for (std::size_t r = 0; r < ids_copy.size(); ++r) {
                double* dst = g.data() + static_cast<std::size_t>(ids_copy[r]) * d;
                const double* src = self.grad.data() + r * static_cast<std::size_t>(d);
                for (int c = 0; c < d; ++c) dst[c] += src[c];
            }
        };
    }
    return finish(n);
}

Tensor dropout(const Tensor& x, double rate, bool train_mode, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must lie in [0, 1)");
    if (!train_mode || rate == 0.0) return x;

    const double keep = 1.0 - rate;
    const double scale = 1.0 / keep;
    const auto& xv = x.values();
    std::vector<double> mask(xv.size());
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        mask[i] = unit_uniform(rng) < keep ? scale : 0.0;
        out[i] = xv[i] * mask[i];
    }
    auto n = new_node(x.shape(), std::move(out), {x.shared_node()}, "dropout");
    if (n->requires_grad) {
        Node* px = n->parents[0].get();
        n->backward = [px, mask](Node& self) {
            auto& g = px->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
        };
    }
    return finish(n);
}

}  // namespace uirate
