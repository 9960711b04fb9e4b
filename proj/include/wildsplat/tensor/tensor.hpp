// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/tensor/errors.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace wildsplat {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

/// Gradient rule of one recorded operation. Receives the gradient of the
/// operation's output and accumulates (+=) into the gradient buffers of its
/// inputs; a null entry means that input does not need a gradient.
using BackwardFn = std::function<void(std::span<const float> grad_out, std::span<float* const> grad_in)>;

struct GradNode;

struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    bool requires_grad = false;
    bool graph_released = false;
    std::vector<float> grad;
    bool has_grad = false;
    std::shared_ptr<GradNode> node;
};

struct GradNode {
    std::string name;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    BackwardFn backward;
};

} // namespace detail

/// Dense row-major f32 tensor with optional reverse-mode gradient tracking.
///
/// Copies of a Tensor share storage; values are never mutated by operations,
/// only by optimizers acting on leaves through `mutable_data()`. Each
/// differentiable operation whose inputs need gradients records a node that
/// references its inputs, so the graph is the DAG reachable from a result.
/// `backward()` walks it in reverse topological order and then releases it.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    static Tensor zeros(const Shape& shape) { return Tensor(shape, 0.0f); }
    static Tensor ones(const Shape& shape) { return Tensor(shape, 1.0f); }
    static Tensor scalar(float value) { return Tensor(Shape{1}, value); }
    static Tensor randn(const Shape& shape, std::mt19937_64& rng, float stddev = 1.0f);
    static Tensor uniform(const Shape& shape, std::mt19937_64& rng, float lo, float hi);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    int64_t rank() const { return static_cast<int64_t>(shape().size()); }
    int64_t size(int64_t dim) const;
    int64_t numel() const;

    std::span<const float> data() const;
    /// Write access for leaves only (optimizer updates, in-place init).
    std::span<float> mutable_data();
    float item() const;
    float operator[](int64_t flat_index) const { return data()[static_cast<size_t>(flat_index)]; }

    bool requires_grad() const;
    Tensor& set_requires_grad(bool value = true);
    bool is_leaf() const;
    /// True when this tensor participates in a live graph.
    bool has_graph() const;

    bool has_grad() const;
    std::span<const float> grad() const;
    std::span<float> mutable_grad();
    void zero_grad();
    void clear_grad();

    /// New leaf with a copy of the values and no graph.
    Tensor detach() const;
    Tensor clone() const { return detach(); }

    void backward() const;

    const detail::TensorImpl* id() const { return impl_.get(); }

  private:
    friend Tensor make_result(Shape, std::vector<float>, std::vector<Tensor>, std::string, detail::BackwardFn);
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Creates the output of a differentiable operation. When gradient recording
/// is enabled and any input needs a gradient, the backward rule is attached.
Tensor make_result(Shape shape, std::vector<float> data, std::vector<Tensor> inputs, std::string name,
                   detail::BackwardFn backward);

/// Whether `t` needs a gradient (leaf with requires_grad, or interior node).
bool needs_grad(const Tensor& t);

bool grad_enabled();

/// Disables graph recording for its lifetime (inference, sampling).
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

} // namespace wildsplat
