#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace uirate {

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One tape node: holds the forward value and, once backward() has visited it,
// the accumulated gradient. Parents are owned via shared_ptr, so dropping the
// root of a graph frees every interior node while leaves (weights) survive.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
    const char* op = "leaf";

    std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }
    std::vector<double>& grad_buffer();  // allocates zeros on first touch
};

}  // namespace detail

// Dense n-d tensor handle with a gradient slot. Copies share the underlying
// node: a Tensor is an immutable value once it has been consumed by an op,
// and gradient accumulation is the only mutation backward() performs.
// Leaf tensors (weights) may be edited in place between training steps.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double fill, bool requires_grad = false);
    static Tensor from_vector(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int rank() const;
    int dim(int axis) const;
    std::int64_t numel() const;
    bool requires_grad() const;
    const char* op_name() const;

    const std::vector<double>& values() const;
    std::vector<double>& values();

    bool has_grad() const;
    const std::vector<double>& grad() const;

    // Single-element read; throws unless numel() == 1.
    double item() const;

    // Reverse-mode sweep from a scalar root. Replays the tape in reverse
    // topological order; deterministic for a deterministically built graph.
    // Gradients accumulate into leaves until zero_grad().
    void backward();
    void zero_grad();

    Tensor detached() const;  // same values, fresh constant leaf

    detail::Node* node() const { return node_.get(); }
    std::shared_ptr<detail::Node> shared_node() const { return node_; }
    static Tensor wrap(std::shared_ptr<detail::Node> node);

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;
};

// Debug mode: when enabled every op output is scanned and a non-finite value
// raises std::runtime_error naming the op.
void set_finite_checks(bool on);
bool finite_checks_enabled();
void check_finite(const char* op, const std::vector<double>& data);

}  // namespace uirate
