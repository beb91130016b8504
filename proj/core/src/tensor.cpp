#include "uirate/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace uirate {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream out;
    out << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ",";
        out << shape[i];
    }
    out << "]";
    return out.str();
}

namespace detail {

std::vector<double>& Node::grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
}

}  // namespace detail

namespace {

bool g_finite_checks = false;

std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<double> data, bool requires_grad) {
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor dimension must be positive, got shape " + shape_str(shape));
    }
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    }
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return n;
}

}  // namespace

void set_finite_checks(bool on) { g_finite_checks = on; }
bool finite_checks_enabled() { return g_finite_checks; }

void check_finite(const char* op, const std::vector<double>& data) {
    if (!g_finite_checks) return;
    for (double v : data) {
        if (!std::isfinite(v)) {
            throw std::runtime_error(std::string("non-finite value produced by op '") + op + "'");
        }
    }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = shape_numel(shape);
    return Tensor(make_node(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
    auto n = shape_numel(shape);
    return Tensor(make_node(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), fill), requires_grad));
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> data, bool requires_grad) {
    return Tensor(make_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double v) {
    return from_vector({1}, {v}, false);
}

const Shape& Tensor::shape() const {
    if (!node_) throw std::logic_error("shape() on undefined tensor");
    return node_->shape;
}

int Tensor::rank() const { return static_cast<int>(shape().size()); }

int Tensor::dim(int axis) const {
    const Shape& s = shape();
    if (axis < 0 || axis >= static_cast<int>(s.size())) {
        throw std::out_of_range("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
    }
    return s[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const {
    if (!node_) return 0;
    return node_->numel();
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

const char* Tensor::op_name() const { return node_ ? node_->op : "undefined"; }

const std::vector<double>& Tensor::values() const {
    if (!node_) throw std::logic_error("values() on undefined tensor");
    return node_->value;
}

std::vector<double>& Tensor::values() {
    if (!node_) throw std::logic_error("values() on undefined tensor");
    return node_->value;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
    if (!node_) throw std::logic_error("grad() on undefined tensor");
    return node_->grad_buffer();
}

double Tensor::item() const {
    if (numel() != 1) throw std::logic_error("item() requires a single-element tensor, got " + shape_str(shape()));
    return node_->value[0];
}

void Tensor::backward() {
    if (!node_) throw std::logic_error("backward() on undefined tensor");
    if (numel() != 1) throw std::logic_error("backward() requires a scalar root, got " + shape_str(shape()));

    // Iterative post-order DFS; nodes come out children-before-parents, so a
    // forward walk of `order` visits each node only after every consumer.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    struct Frame {
        detail::Node* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    if (seen.insert(node_.get()).second) stack.push_back({node_.get(), 0});
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            detail::Node* p = f.node->parents[f.next_parent++].get();
            if (seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward && n->requires_grad && !n->grad.empty()) n->backward(*n);
    }
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

Tensor Tensor::detached() const {
    return from_vector(shape(), values(), false);
}

Tensor Tensor::wrap(std::shared_ptr<detail::Node> node) { return Tensor(std::move(node)); }

}  // namespace uirate
