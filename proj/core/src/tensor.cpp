#include "advnas/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include <omp.h>

namespace advnas {

namespace {
thread_local bool g_no_grad = false;
std::atomic<int> g_num_threads{0}; // 0 = use OpenMP default
} // namespace

NoGradScope::NoGradScope() : prev_(g_no_grad) { g_no_grad = true; }
NoGradScope::~NoGradScope() { g_no_grad = prev_; }
bool NoGradScope::active() { return g_no_grad; }

void set_num_threads(int n) { g_num_threads.store(n); }

int num_threads() {
    const int n = g_num_threads.load();
    return n > 0 ? n : omp_get_max_threads();
}

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape));
        n *= d;
    }
    return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::int64_t TensorImpl::numel() const { return shape_numel(shape); }

template <> std::span<float> TensorImpl::val<float>() { return {v32.data(), v32.size()}; }
template <> std::span<double> TensorImpl::val<double>() { return {v64.data(), v64.size()}; }
template <> std::span<const float> TensorImpl::val<float>() const { return {v32.data(), v32.size()}; }
template <> std::span<const double> TensorImpl::val<double>() const { return {v64.data(), v64.size()}; }

template <> std::span<float> TensorImpl::grd<float>() {
    ensure_grad();
    return {g32.data(), g32.size()};
}
template <> std::span<double> TensorImpl::grd<double>() {
    ensure_grad();
    return {g64.data(), g64.size()};
}

bool TensorImpl::has_grad() const { return !g32.empty() || !g64.empty(); }

void TensorImpl::ensure_grad() {
    if (has_grad()) return;
    if (dtype == DType::F32) g32.assign(static_cast<std::size_t>(numel()), 0.0f);
    else g64.assign(static_cast<std::size_t>(numel()), 0.0);
}

Tensor Tensor::from_impl(std::shared_ptr<TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
}

Tensor Tensor::zeros(std::vector<int> shape, DType dt) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->dtype = dt;
    const auto n = static_cast<std::size_t>(impl->numel());
    if (dt == DType::F32) impl->v32.assign(n, 0.0f);
    else impl->v64.assign(n, 0.0);
    return from_impl(std::move(impl));
}

Tensor Tensor::full(std::vector<int> shape, double value, DType dt) {
    Tensor t = zeros(std::move(shape), dt);
    if (dt == DType::F32)
        std::fill(t.impl()->v32.begin(), t.impl()->v32.end(), static_cast<float>(value));
    else
        std::fill(t.impl()->v64.begin(), t.impl()->v64.end(), value);
    return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::span<const double> values, DType dt) {
    Tensor t = zeros(std::move(shape), dt);
    if (static_cast<std::int64_t>(values.size()) != t.numel())
        throw DimensionError("from_data: " + std::to_string(values.size()) + " values for shape " +
                             shape_to_string(t.shape()));
    for (std::int64_t i = 0; i < t.numel(); ++i) t.set_value_at(i, values[static_cast<std::size_t>(i)]);
    return t;
}

Tensor Tensor::scalar(double value, DType dt) { return full({}, value, dt); }

const std::vector<int>& Tensor::shape() const { return impl_->shape; }
int Tensor::dim(int i) const { return impl_->shape.at(static_cast<std::size_t>(i)); }
std::int64_t Tensor::numel() const { return impl_->numel(); }
DType Tensor::dtype() const { return impl_->dtype; }
bool Tensor::is_leaf() const { return impl_->is_leaf(); }
bool Tensor::requires_grad() const { return impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    if (!impl_->is_leaf()) throw ContractError("set_requires_grad: only leaves can be toggled");
    impl_->requires_grad = on;
    impl_->needs_grad = on;
    if (on) impl_->ensure_grad();
    return *this;
}

template <typename T> std::span<const T> Tensor::values() const { return static_cast<const TensorImpl*>(impl_.get())->val<T>(); }
template std::span<const float> Tensor::values<float>() const;
template std::span<const double> Tensor::values<double>() const;

template <typename T> std::span<T> Tensor::values_mut() { return impl_->val<T>(); }
template std::span<float> Tensor::values_mut<float>();
template std::span<double> Tensor::values_mut<double>();

template <typename T> std::span<const T> Tensor::grad() const {
    if (!impl_->has_grad()) throw ContractError("grad: no gradient buffer allocated");
    return impl_->grd<T>();
}
template std::span<const float> Tensor::grad<float>() const;
template std::span<const double> Tensor::grad<double>() const;

template <typename T> std::span<T> Tensor::grad_mut() { return impl_->grd<T>(); }
template std::span<float> Tensor::grad_mut<float>();
template std::span<double> Tensor::grad_mut<double>();

bool Tensor::has_grad() const { return impl_->has_grad(); }

void Tensor::zero_grad() {
    if (impl_->dtype == DType::F32) std::fill(impl_->g32.begin(), impl_->g32.end(), 0.0f);
    else std::fill(impl_->g64.begin(), impl_->g64.end(), 0.0);
}

double Tensor::value_at(std::int64_t i) const {
    return impl_->dtype == DType::F32 ? static_cast<double>(impl_->v32[static_cast<std::size_t>(i)])
                                      : impl_->v64[static_cast<std::size_t>(i)];
}

void Tensor::set_value_at(std::int64_t i, double v) {
    if (impl_->dtype == DType::F32) impl_->v32[static_cast<std::size_t>(i)] = static_cast<float>(v);
    else impl_->v64[static_cast<std::size_t>(i)] = v;
}

double Tensor::grad_at(std::int64_t i) const {
    if (!impl_->has_grad()) throw ContractError("grad_at: no gradient buffer allocated");
    return impl_->dtype == DType::F32 ? static_cast<double>(impl_->g32[static_cast<std::size_t>(i)])
                                      : impl_->g64[static_cast<std::size_t>(i)];
}

Tensor Tensor::detach() const {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = impl_->shape;
    impl->dtype = impl_->dtype;
    impl->v32 = impl_->v32;
    impl->v64 = impl_->v64;
    return from_impl(std::move(impl));
}

Tensor Tensor::clone() const { return detach(); }

Tensor Tensor::to(DType dt) const {
    if (dt == impl_->dtype) return detach();
    Tensor out = Tensor::zeros(impl_->shape, dt);
    for (std::int64_t i = 0; i < numel(); ++i) out.set_value_at(i, value_at(i));
    return out;
}

void Tensor::backward() const {
    if (numel() != 1)
        throw ContractError("backward: loss must be scalar, got shape " + shape_to_string(shape()));
    Graph g(*this);
    g.run_backward();
}

Graph::Graph(const Tensor& root) : root_(root) {
    // Iterative post-order DFS over parents: every node is emitted after all
    // of its parents, giving a topological order with the root last.
    struct Frame {
        TensorImpl* node;
        std::size_t next_parent;
    };
    std::unordered_set<TensorImpl*> visited;
    std::vector<Frame> stack;
    TensorImpl* r = root.impl();
    if (!r->needs_grad && r->is_leaf() && !r->requires_grad) {
        // Constant root: nothing to do, keep an empty graph.
        return;
    }
    stack.push_back({r, 0});
    visited.insert(r);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            TensorImpl* p = f.node->parents[f.next_parent++].get();
            if (p->needs_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order_.push_back(f.node);
            stack.pop_back();
        }
    }
}

std::vector<TensorImpl*> Graph::leaves() const {
    std::vector<TensorImpl*> out;
    for (TensorImpl* n : order_)
        if (n->is_leaf() && n->requires_grad) out.push_back(n);
    return out;
}

std::size_t Graph::run_backward() {
    if (order_.empty()) return 0;
    // Interior grads are scratch for one sweep; only leaf grads accumulate
    // across repeated backward calls.
    for (TensorImpl* n : order_)
        if (!n->is_leaf() && n->has_grad()) {
            std::fill(n->g32.begin(), n->g32.end(), 0.0f);
            std::fill(n->g64.begin(), n->g64.end(), 0.0);
        }
    TensorImpl* root = order_.back();
    root->ensure_grad();
    if (root->dtype == DType::F32) root->g32[0] += 1.0f;
    else root->g64[0] += 1.0;
    std::size_t ran = 0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        TensorImpl* node = *it;
        if (node->backward_fn) {
            node->backward_fn(*node);
            ++ran;
        }
    }
    return ran;
}

Tensor make_node(std::vector<int> shape, DType dt, const std::vector<Tensor>& inputs,
                 const char* op_name, std::function<void(TensorImpl&)> backward_fn) {
    Tensor out = Tensor::zeros(std::move(shape), dt);
    out.impl()->op_name = op_name;
    if (NoGradScope::active()) return out;
    bool needs = false;
    for (const Tensor& in : inputs)
        if (in.impl()->needs_grad) needs = true;
    if (!needs) return out;
    out.impl()->needs_grad = true;
    out.impl()->parents.reserve(inputs.size());
    for (const Tensor& in : inputs) out.impl()->parents.push_back(in.impl_ptr());
    out.impl()->backward_fn = std::move(backward_fn);
    return out;
}

} // namespace advnas
