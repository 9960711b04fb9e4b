// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/tensor/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace wildsplat {

namespace {
thread_local bool g_grad_enabled = true;
}

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (auto d : shape) {
        if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, float fill) : impl_(std::make_shared<detail::TensorImpl>()) {
    const auto n = shape_numel(shape);
    impl_->shape = std::move(shape);
    impl_->data.assign(static_cast<size_t>(n), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : impl_(std::make_shared<detail::TensorImpl>()) {
    const auto n = shape_numel(shape);
    if (static_cast<int64_t>(data.size()) != n) {
        throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                             shape_str(shape));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
}

Tensor Tensor::randn(const Shape& shape, std::mt19937_64& rng, float stddev) {
    Tensor t(shape);
    std::normal_distribution<float> dist(0.0f, stddev);
    for (auto& v : t.impl_->data) v = dist(rng);
    return t;
}

Tensor Tensor::uniform(const Shape& shape, std::mt19937_64& rng, float lo, float hi) {
    Tensor t(shape);
    std::uniform_real_distribution<float> dist(lo, hi);
    for (auto& v : t.impl_->data) v = dist(rng);
    return t;
}

static void require_defined(const std::shared_ptr<detail::TensorImpl>& impl) {
    if (!impl) throw StateError("use of an undefined tensor");
}

const Shape& Tensor::shape() const {
    require_defined(impl_);
    return impl_->shape;
}

int64_t Tensor::size(int64_t dim) const {
    const auto r = rank();
    if (dim < 0) dim += r;
    if (dim < 0 || dim >= r) throw DimensionError("dimension index out of range for " + shape_str(shape()));
    return impl_->shape[static_cast<size_t>(dim)];
}

int64_t Tensor::numel() const {
    require_defined(impl_);
    return static_cast<int64_t>(impl_->data.size());
}

std::span<const float> Tensor::data() const {
    require_defined(impl_);
    return impl_->data;
}

std::span<float> Tensor::mutable_data() {
    require_defined(impl_);
    if (impl_->node) throw StateError("in-place write to a non-leaf tensor");
    return impl_->data;
}

float Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

bool Tensor::requires_grad() const {
    require_defined(impl_);
    return impl_->requires_grad;
}

Tensor& Tensor::set_requires_grad(bool value) {
    require_defined(impl_);
    if (impl_->node) throw StateError("requires_grad can only be set on leaves");
    impl_->requires_grad = value;
    return *this;
}

bool Tensor::is_leaf() const {
    require_defined(impl_);
    return impl_->node == nullptr;
}

bool Tensor::has_graph() const {
    require_defined(impl_);
    return impl_->node != nullptr;
}

bool Tensor::has_grad() const {
    require_defined(impl_);
    return impl_->has_grad;
}

std::span<const float> Tensor::grad() const {
    require_defined(impl_);
    if (!impl_->has_grad) throw StateError("tensor has no gradient");
    return impl_->grad;
}

std::span<float> Tensor::mutable_grad() {
    require_defined(impl_);
    if (!impl_->has_grad) {
        impl_->grad.assign(impl_->data.size(), 0.0f);
        impl_->has_grad = true;
    }
    return impl_->grad;
}

void Tensor::zero_grad() {
    require_defined(impl_);
    if (impl_->has_grad) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

void Tensor::clear_grad() {
    require_defined(impl_);
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
    impl_->has_grad = false;
}

Tensor Tensor::detach() const {
    require_defined(impl_);
    return Tensor(impl_->shape, impl_->data);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool needs_grad(const Tensor& t) { return t.defined() && (t.requires_grad() || t.has_graph()); }

Tensor make_result(Shape shape, std::vector<float> data, std::vector<Tensor> inputs, std::string name,
                   detail::BackwardFn backward) {
    Tensor out(std::move(shape), std::move(data));
    if (!g_grad_enabled) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || needs_grad(in);
    if (!any) return out;
    auto node = std::make_shared<detail::GradNode>();
    node->name = std::move(name);
    node->backward = std::move(backward);
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.impl_);
    out.impl_->node = std::move(node);
    return out;
}

void Tensor::backward() const {
    require_defined(impl_);
    if (impl_->data.size() != 1) {
        throw ContractError("backward() requires a scalar loss, got shape " + shape_str(impl_->shape));
    }
    if (impl_->graph_released) throw StateError("backward() called twice on a released graph");
    if (!impl_->node) {
        if (!impl_->requires_grad) throw StateError("backward() on a tensor with no live graph");
        Tensor self = *this;
        self.mutable_grad()[0] += 1.0f;
        return;
    }

    // Post-order DFS gives a topological order (inputs before outputs).
    std::vector<detail::TensorImpl*> order;
    std::unordered_set<detail::TensorImpl*> visited;
    std::vector<std::pair<detail::TensorImpl*, size_t>> stack;
    stack.emplace_back(impl_.get(), 0);
    visited.insert(impl_.get());
    while (!stack.empty()) {
        auto& [t, next] = stack.back();
        if (t->node && next < t->node->inputs.size()) {
            auto* child = t->node->inputs[next++].get();
            if (child->node && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
            continue;
        }
        order.push_back(t);
        stack.pop_back();
    }

    std::unordered_map<detail::TensorImpl*, std::vector<float>> interior;
    interior[impl_.get()] = {1.0f};
    std::vector<float*> grad_ptrs;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorImpl* t = *it;
        auto found = interior.find(t);
        if (found == interior.end()) continue; // unreachable gradient (no path carried one)
        std::vector<float> gout = std::move(found->second);
        interior.erase(found);
        auto& node = *t->node;
        grad_ptrs.assign(node.inputs.size(), nullptr);
        for (size_t i = 0; i < node.inputs.size(); ++i) {
            auto* in = node.inputs[i].get();
            if (in->node) {
                auto& buf = interior[in];
                if (buf.empty()) buf.assign(in->data.size(), 0.0f);
                grad_ptrs[i] = buf.data();
            } else if (in->requires_grad) {
                if (!in->has_grad) {
                    in->grad.assign(in->data.size(), 0.0f);
                    in->has_grad = true;
                }
                grad_ptrs[i] = in->grad.data();
            }
        }
        node.backward(gout, grad_ptrs);
    }

    for (auto* t : order) {
        t->node.reset();
        t->graph_released = true;
    }
}

} // namespace wildsplat
