#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mrf {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first touched
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward_fn;

    std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Handle to a dense row-major float64 array that may take part in a
/// reverse-mode differentiation graph. Copies share the same storage.
class Tensor {
public:
    Tensor();
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    const Shape& shape() const;
    std::size_t dim(std::size_t axis) const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;

    std::span<double> data();
    std::span<const double> data() const;
    /// Gradient buffer, allocated (zeroed) on first access.
    std::span<double> grad();
    std::span<const double> grad() const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool defined() const { return static_cast<bool>(node_); }

    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    /// Runs reverse accumulation from this scalar. Leaf gradients accumulate
    /// across calls; intermediate gradients are recomputed each call.
    void backward() const;
    void zero_grad();

    /// Same values, no graph history.
    Tensor detach() const;
    Tensor clone() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    static Tensor from_node(std::shared_ptr<detail::Node> node);

private:
    std::shared_ptr<detail::Node> node_;
};

/// Disables graph construction on the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

struct Parameter {
    std::string name;
    Tensor tensor;
};

/// Ordered, name-unique collection of learnable tensors.
class ParameterStore {
public:
    Tensor& add(std::string name, Tensor tensor);
    Tensor& get(std::string_view name);
    const Tensor& get(std::string_view name) const;
    bool contains(std::string_view name) const;

    std::vector<Parameter>& items() { return items_; }
    const std::vector<Parameter>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }
    std::size_t scalar_count() const;

    void zero_grad();
    /// Deep copy of all values (fresh storage, no graph).
    ParameterStore snapshot() const;
    /// Copies values from `other` in place; names and shapes must match.
    void assign_from(const ParameterStore& other);

private:
    std::vector<Parameter> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace mrf
