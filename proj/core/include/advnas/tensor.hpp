#pragma once

#include "advnas/errors.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace advnas {

// float64 exists for gradient checking; search and checkpoints run float32.
enum class DType { F32, F64 };

inline const char* dtype_name(DType dt) { return dt == DType::F32 ? "float32" : "float64"; }

struct TensorImpl;

// Dense row-major n-dimensional array participating in reverse-mode
// differentiation. Value-semantics handle over a shared node; tensors are
// immutable once recorded into a graph. Leaf values may be mutated through
// values_mut() between graphs (optimizer steps).
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, DType dt = DType::F32);
    static Tensor full(std::vector<int> shape, double value, DType dt = DType::F32);
    static Tensor from_data(std::vector<int> shape, std::span<const double> values,
                            DType dt = DType::F32);
    static Tensor scalar(double value, DType dt = DType::F32);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const;
    int dim(int i) const;
    std::int64_t numel() const;
    DType dtype() const;

    bool is_leaf() const;
    bool requires_grad() const;
    // Leaves only. Turning this on allocates a zero gradient buffer, so a
    // leaf that never participates in a backward pass reads all-zero grads.
    Tensor& set_requires_grad(bool on);

    template <typename T> std::span<const T> values() const;
    // Leaf-value mutation between graphs (optimizer steps, initialization).
    template <typename T> std::span<T> values_mut();
    template <typename T> std::span<const T> grad() const;
    template <typename T> std::span<T> grad_mut();
    bool has_grad() const;
    void zero_grad();

    // dtype-erased element access (slow path, for tests and glue code)
    double value_at(std::int64_t i) const;
    void set_value_at(std::int64_t i, double v);
    double grad_at(std::int64_t i) const;

    // Reverse-mode sweep from this scalar. Every requires_grad leaf in the
    // traced graph receives d(this)/d(leaf). Repeated calls without
    // zero_grad() accumulate.
    void backward() const;

    // Constant copy, detached from any recorded graph.
    Tensor detach() const;
    Tensor clone() const;
    Tensor to(DType dt) const;

    TensorImpl* impl() const { return impl_.get(); }
    std::shared_ptr<TensorImpl> impl_ptr() const { return impl_; }
    static Tensor from_impl(std::shared_ptr<TensorImpl> impl);

private:
    std::shared_ptr<TensorImpl> impl_;
};

struct TensorImpl {
    std::vector<int> shape;
    DType dtype = DType::F32;
    std::vector<float> v32;
    std::vector<double> v64;
    std::vector<float> g32;
    std::vector<double> g64;
    bool requires_grad = false; // leaf flag
    bool needs_grad = false;    // true if this node or any ancestor requires grad
    const char* op_name = "leaf";
    // Inputs this node was recorded from (empty for leaves/constants).
    std::vector<std::shared_ptr<TensorImpl>> parents;
    // Reads this->grad, accumulates into parents' grads. Must not capture
    // the owning impl (self is passed in) to avoid reference cycles.
    std::function<void(TensorImpl& self)> backward_fn;

    std::int64_t numel() const;
    bool is_leaf() const { return parents.empty(); }
    template <typename T> std::span<T> val();
    template <typename T> std::span<const T> val() const;
    template <typename T> std::span<T> grd();
    bool has_grad() const;
    void ensure_grad(); // allocate zeros if absent
};

// Recorded-operation graph traced from a root tensor: topological order over
// the nodes that need gradients, plus the registry of requires_grad leaves.
// backward visits each node exactly once, in reverse topological order.
class Graph {
public:
    explicit Graph(const Tensor& root);

    // Every node appears after all of its parents.
    const std::vector<TensorImpl*>& topo_order() const { return order_; }
    std::vector<TensorImpl*> leaves() const;
    std::size_t size() const { return order_.size(); }

    // Seeds d(root)/d(root) = 1 and sweeps. Returns number of op nodes run.
    std::size_t run_backward();

private:
    Tensor root_;
    std::vector<TensorImpl*> order_;
};

// Suppresses graph recording for the enclosed scope (results are constants).
class NoGradScope {
public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;
    static bool active();

private:
    bool prev_;
};

// Kernel-internal parallelism over the batch dimension. Results are bitwise
// identical for any thread count; 1 forces fully serial execution.
void set_num_threads(int n);
int num_threads();

// Creates an op node. If recording is suppressed or no input needs grad,
// the result is a plain constant and backward_fn is dropped.
Tensor make_node(std::vector<int> shape, DType dt, const std::vector<Tensor>& inputs,
                 const char* op_name, std::function<void(TensorImpl&)> backward_fn);

std::string shape_to_string(const std::vector<int>& shape);
std::int64_t shape_numel(const std::vector<int>& shape);

} // namespace advnas
