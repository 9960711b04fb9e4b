// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/tensor/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

namespace wildsplat {

namespace {

const char* op_name(ElementwiseOp op) {
    switch (op) {
    case ElementwiseOp::Add: return "add";
    case ElementwiseOp::Sub: return "sub";
    case ElementwiseOp::Mul: return "mul";
    case ElementwiseOp::Div: return "div";
    case ElementwiseOp::Pow: return "pow";
    case ElementwiseOp::Exp: return "exp";
    case ElementwiseOp::Log: return "log";
    case ElementwiseOp::Sqrt: return "sqrt";
    case ElementwiseOp::Relu: return "relu";
    case ElementwiseOp::Sigmoid: return "sigmoid";
    }
    return "?";
}

bool is_binary(ElementwiseOp op) {
    return op == ElementwiseOp::Add || op == ElementwiseOp::Sub || op == ElementwiseOp::Mul ||
           op == ElementwiseOp::Div || op == ElementwiseOp::Pow;
}

/// Offsets of one operand inside a broadcast output, computed with an
/// odometer over the output index.
struct BroadcastPlan {
    Shape out;
    std::vector<int64_t> a_strides; // 0 where broadcast
    std::vector<int64_t> b_strides;
    bool same = false;
};

std::vector<int64_t> aligned_strides(const Shape& s, const Shape& out) {
    const size_t r = out.size();
    std::vector<int64_t> strides(r, 0);
    int64_t stride = 1;
    for (size_t i = 0; i < s.size(); ++i) {
        const size_t si = s.size() - 1 - i;
        const size_t oi = r - 1 - i;
        strides[oi] = (s[si] == 1 && out[oi] != 1) ? 0 : stride;
        stride *= s[si];
    }
    return strides;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
    BroadcastPlan p;
    p.out = broadcast_shape(a, b);
    p.same = (a == b);
    p.a_strides = aligned_strides(a, p.out);
    p.b_strides = aligned_strides(b, p.out);
    return p;
}

template <typename F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
    const int64_t n = shape_numel(p.out);
    if (p.same) {
        for (int64_t i = 0; i < n; ++i) f(i, i, i);
        return;
    }
    const size_t r = p.out.size();
    std::vector<int64_t> idx(r, 0);
    int64_t ao = 0, bo = 0;
    for (int64_t i = 0; i < n; ++i) {
        f(i, ao, bo);
        for (size_t d = r; d-- > 0;) {
            ++idx[d];
            ao += p.a_strides[d];
            bo += p.b_strides[d];
            if (idx[d] < p.out[d]) break;
            ao -= p.a_strides[d] * idx[d];
            bo -= p.b_strides[d] * idx[d];
            idx[d] = 0;
        }
    }
}

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// Row-major products backed by Eigen's blocked GEMM (single-threaded, so
// results are reproducible run to run).
void gemm_nn(int64_t m, int64_t n, int64_t k, const float* a, const float* b, float* c) {
    // c[m,n] += a[m,k] * b[k,n]
    MutMap(c, m, n).noalias() += ConstMap(a, m, k) * ConstMap(b, k, n);
}

void gemm_nt(int64_t m, int64_t n, int64_t k, const float* a, const float* b, float* c) {
    // c[m,n] += a[m,k] * b[n,k]^T
    MutMap(c, m, n).noalias() += ConstMap(a, m, k) * ConstMap(b, n, k).transpose();
}

void gemm_tn(int64_t m, int64_t n, int64_t k, const float* a, const float* b, float* c) {
    // c[m,n] += a[k,m]^T * b[k,n]
    MutMap(c, m, n).noalias() += ConstMap(a, k, m).transpose() * ConstMap(b, k, n);
}

} // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const size_t r = std::max(a.size(), b.size());
    Shape out(r, 1);
    for (size_t i = 0; i < r; ++i) {
        const int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
        const int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
        if (da != db && da != 1 && db != 1) {
            throw DimensionError("shapes " + shape_str(a) + " and " + shape_str(b) + " do not broadcast");
        }
        out[r - 1 - i] = std::max(da, db);
    }
    return out;
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
    if (!is_binary(op)) {
        const auto x = a.data();
        std::vector<float> out(x.size());
        for (size_t i = 0; i < x.size(); ++i) {
            const float v = x[i];
            switch (op) {
            case ElementwiseOp::Exp: out[i] = std::exp(v); break;
            case ElementwiseOp::Log:
                if (v < 0.0f) throw DomainError("log of negative value at index " + std::to_string(i));
                out[i] = std::log(v);
                break;
            case ElementwiseOp::Sqrt:
                if (v < 0.0f) throw DomainError("sqrt of negative value at index " + std::to_string(i));
                out[i] = std::sqrt(v);
                break;
            case ElementwiseOp::Relu: out[i] = v > 0.0f ? v : 0.0f; break;
            case ElementwiseOp::Sigmoid: out[i] = 1.0f / (1.0f + std::exp(-v)); break;
            default: break;
            }
        }
        auto y = std::make_shared<std::vector<float>>(out);
        return make_result(a.shape(), std::move(out), {a}, op_name(op),
                           [op, a, y](std::span<const float> g, std::span<float* const> gi) {
                               float* ga = gi[0];
                               if (!ga) return;
                               const auto x = a.data();
                               const auto& o = *y;
                               for (size_t i = 0; i < g.size(); ++i) {
                                   switch (op) {
                                   case ElementwiseOp::Exp: ga[i] += g[i] * o[i]; break;
                                   case ElementwiseOp::Log: ga[i] += g[i] / x[i]; break;
                                   case ElementwiseOp::Sqrt: ga[i] += g[i] * 0.5f / o[i]; break;
                                   case ElementwiseOp::Relu: ga[i] += x[i] > 0.0f ? g[i] : 0.0f; break;
                                   case ElementwiseOp::Sigmoid: ga[i] += g[i] * o[i] * (1.0f - o[i]); break;
                                   default: break;
                                   }
                               }
                           });
    }

    if (!b.defined()) throw ContractError(std::string("binary op ") + op_name(op) + " needs two operands");
    auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape()));
    const auto av = a.data();
    const auto bv = b.data();
    std::vector<float> out(static_cast<size_t>(shape_numel(plan->out)));
    switch (op) {
    case ElementwiseOp::Add:
        for_each_broadcast(*plan, [&](int64_t i, int64_t ia, int64_t ib) { out[i] = av[ia] + bv[ib]; });
        break;
    case ElementwiseOp::Sub:
        for_each_broadcast(*plan, [&](int64_t i, int64_t ia, int64_t ib) { out[i] = av[ia] - bv[ib]; });
        break;
    case ElementwiseOp::Mul:
        for_each_broadcast(*plan, [&](int64_t i, int64_t ia, int64_t ib) { out[i] = av[ia] * bv[ib]; });
        break;
    case ElementwiseOp::Div:
        for_each_broadcast(*plan, [&](int64_t i, int64_t ia, int64_t ib) { out[i] = av[ia] / bv[ib]; });
        break;
    case ElementwiseOp::Pow:
        for_each_broadcast(*plan,
                           [&](int64_t i, int64_t ia, int64_t ib) { out[i] = std::pow(av[ia], bv[ib]); });
        break;
    default: break;
    }
    auto y = std::make_shared<std::vector<float>>(op == ElementwiseOp::Pow ? out : std::vector<float>{});
    return make_result(plan->out, std::move(out), {a, b}, op_name(op),
                       [op, a, b, plan, y](std::span<const float> g, std::span<float* const> gi) {
                           float* ga = gi[0];
                           float* gb = gi[1];
                           const auto av = a.data();
                           const auto bv = b.data();
                           for_each_broadcast(*plan, [&](int64_t i, int64_t ia, int64_t ib) {
                               const float gv = g[i];
                               switch (op) {
                               case ElementwiseOp::Add:
                                   if (ga) ga[ia] += gv;
                                   if (gb) gb[ib] += gv;
                                   break;
                               case ElementwiseOp::Sub:
                                   if (ga) ga[ia] += gv;
                                   if (gb) gb[ib] -= gv;
                                   break;
                               case ElementwiseOp::Mul:
                                   if (ga) ga[ia] += gv * bv[ib];
                                   if (gb) gb[ib] += gv * av[ia];
                                   break;
                               case ElementwiseOp::Div:
                                   if (ga) ga[ia] += gv / bv[ib];
                                   if (gb) gb[ib] -= gv * av[ia] / (bv[ib] * bv[ib]);
                                   break;
                               case ElementwiseOp::Pow:
                                   if (ga) ga[ia] += gv * bv[ib] * std::pow(av[ia], bv[ib] - 1.0f);
                                   if (gb && av[ia] > 0.0f) gb[ib] += gv * (*y)[i] * std::log(av[ia]);
                                   break;
                               default: break;
                               }
                           });
                       });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::Div, a, b); }
Tensor pow(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::Pow, a, b); }
Tensor exp(const Tensor& a) { return elementwise(ElementwiseOp::Exp, a); }
Tensor log(const Tensor& a) { return elementwise(ElementwiseOp::Log, a); }
Tensor sqrt(const Tensor& a) { return elementwise(ElementwiseOp::Sqrt, a); }
Tensor relu(const Tensor& a) { return elementwise(ElementwiseOp::Relu, a); }
Tensor sigmoid(const Tensor& a) { return elementwise(ElementwiseOp::Sigmoid, a); }

Tensor silu(const Tensor& a) {
    const auto x = a.data();
    std::vector<float> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] / (1.0f + std::exp(-x[i]));
    return make_result(a.shape(), std::move(out), {a}, "silu",
                       [a](std::span<const float> g, std::span<float* const> gi) {
                           if (!gi[0]) return;
                           const auto x = a.data();
                           for (size_t i = 0; i < g.size(); ++i) {
                               const float s = 1.0f / (1.0f + std::exp(-x[i]));
                               gi[0][i] += g[i] * s * (1.0f + x[i] * (1.0f - s));
                           }
                       });
}

Tensor abs(const Tensor& a) {
    const auto x = a.data();
    std::vector<float> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = std::fabs(x[i]);
    return make_result(a.shape(), std::move(out), {a}, "abs",
                       [a](std::span<const float> g, std::span<float* const> gi) {
                           if (!gi[0]) return;
                           const auto x = a.data();
                           for (size_t i = 0; i < g.size(); ++i) {
                               const float s = x[i] > 0.0f ? 1.0f : (x[i] < 0.0f ? -1.0f : 0.0f);
                               gi[0][i] += g[i] * s;
                           }
                       });
}

Tensor square(const Tensor& a) {
    const auto x = a.data();
    std::vector<float> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] * x[i];
    return make_result(a.shape(), std::move(out), {a}, "square",
                       [a](std::span<const float> g, std::span<float* const> gi) {
                           if (!gi[0]) return;
                           const auto x = a.data();
                           for (size_t i = 0; i < g.size(); ++i) gi[0][i] += 2.0f * x[i] * g[i];
                       });
}

Tensor scale(const Tensor& a, float s) {
    const auto x = a.data();
    std::vector<float> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] * s;
    return make_result(a.shape(), std::move(out), {a}, "scale",
                       [s](std::span<const float> g, std::span<float* const> gi) {
                           if (!gi[0]) return;
                           for (size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i] * s;
                       });
}

Tensor add_scalar(const Tensor& a, float s) {
    const auto x = a.data();
    std::vector<float> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] + s;
    return make_result(a.shape(), std::move(out), {a}, "add_scalar",
                       [](std::span<const float> g, std::span<float* const> gi) {
                           if (!gi[0]) return;
                           for (size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i];
                       });
}

Tensor clamp(const Tensor& a, float lo, float hi) {
    const auto x = a.data();
    std::vector<float> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = std::clamp(x[i], lo, hi);
    return make_result(a.shape(), std::move(out), {a}, "clamp",
                       [a, lo, hi](std::span<const float> g, std::span<float* const> gi) {
                           if (!gi[0]) return;
                           const auto x = a.data();
                           for (size_t i = 0; i < g.size(); ++i) {
                               if (x[i] >= lo && x[i] <= hi) gi[0][i] += g[i];
                           }
                       });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2) throw DimensionError("matmul needs rank >= 2 operands");
    const int64_t m = a.size(-2), k = a.size(-1), k2 = b.size(-2), n = b.size(-1);
    if (k != k2) {
        throw DimensionError("matmul inner dimensions differ: " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    const Shape a_batch(a.shape().begin(), a.shape().end() - 2);
    const Shape b_batch(b.shape().begin(), b.shape().end() - 2);
    auto plan = std::make_shared<BroadcastPlan>();
    plan->out = broadcast_shape(a_batch.empty() ? Shape{1} : a_batch, b_batch.empty() ? Shape{1} : b_batch);
    plan->same = false;
    plan->a_strides = aligned_strides(a_batch.empty() ? Shape{1} : a_batch, plan->out);
    plan->b_strides = aligned_strides(b_batch.empty() ? Shape{1} : b_batch, plan->out);

    Shape out_shape;
    if (!(a_batch.empty() && b_batch.empty())) out_shape = plan->out;
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<float> out(static_cast<size_t>(shape_numel(out_shape)), 0.0f);
    const auto av = a.data();
    const auto bv = b.data();
    for_each_broadcast(*plan, [&](int64_t i, int64_t ia, int64_t ib) {
        gemm_nn(m, n, k, av.data() + ia * m * k, bv.data() + ib * k * n, out.data() + i * m * n);
    });
    return make_result(std::move(out_shape), std::move(out), {a, b}, "matmul",
                       [a, b, plan, m, n, k](std::span<const float> g, std::span<float* const> gi) {
                           const auto av = a.data();
                           const auto bv = b.data();
                           for_each_broadcast(*plan, [&](int64_t i, int64_t ia, int64_t ib) {
                               const float* gc = g.data() + i * m * n;
                               if (gi[0]) gemm_nt(m, k, n, gc, bv.data() + ib * k * n, gi[0] + ia * m * k);
                               if (gi[1]) gemm_tn(k, n, m, av.data() + ia * m * k, gc, gi[1] + ib * k * n);
                           });
                       });
}

Tensor transpose(const Tensor& a) {
    if (a.rank() < 2) throw DimensionError("transpose needs rank >= 2");
    const int64_t r = a.size(-2), c = a.size(-1);
    const int64_t batch = a.numel() / (r * c);
    Shape shape = a.shape();
    std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
    const auto x = a.data();
    std::vector<float> out(x.size());
    for (int64_t bi = 0; bi < batch; ++bi) {
        const float* src = x.data() + bi * r * c;
        float* dst = out.data() + bi * r * c;
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
    }
    return make_result(std::move(shape), std::move(out), {a}, "transpose",
                       [r, c, batch](std::span<const float> g, std::span<float* const> gi) {
                           if (!gi[0]) return;
                           for (int64_t bi = 0; bi < batch; ++bi) {
                               const float* src = g.data() + bi * r * c;
                               float* dst = gi[0] + bi * r * c;
                               for (int64_t i = 0; i < r; ++i)
                                   for (int64_t j = 0; j < c; ++j) dst[i * c + j] += src[j * r + i];
                           }
                       });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw DimensionError("cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
    }
    std::vector<float> out(a.data().begin(), a.data().end());
    return make_result(std::move(shape), std::move(out), {a}, "reshape",
                       [](std::span<const float> g, std::span<float* const> gi) {
                           if (!gi[0]) return;
                           for (size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i];
                       });
}

Tensor softmax(const Tensor& a, int64_t axis) {
    const int64_t r = a.rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw DimensionError("softmax axis out of range for " + shape_str(a.shape()));
    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < axis; ++d) outer *= a.size(d);
    for (int64_t d = axis + 1; d < r; ++d) inner *= a.size(d);
    const int64_t len = a.size(axis);
    const auto x = a.data();
    std::vector<float> out(x.size());
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * len * inner + in;
            float mx = -std::numeric_limits<float>::infinity();
            for (int64_t l = 0; l < len; ++l) mx = std::max(mx, x[base + l * inner]);
            double total = 0.0;
            for (int64_t l = 0; l < len; ++l) {
                const float e = std::exp(x[base + l * inner] - mx);
                out[base + l * inner] = e;
                total += e;
            }
            const float inv = static_cast<float>(1.0 / total);
            for (int64_t l = 0; l < len; ++l) out[base + l * inner] *= inv;
        }
    }
    auto y = std::make_shared<std::vector<float>>(out);
    return make_result(a.shape(), std::move(out), {a}, "softmax",
                       [y, outer, inner, len](std::span<const float> g, std::span<float* const> gi) {
                           if (!gi[0]) return;
                           const auto& o = *y;
                           for (int64_t ou = 0; ou < outer; ++ou) {
                               for (int64_t in = 0; in < inner; ++in) {
                                   const int64_t base = ou * len * inner + in;
                                   double dot = 0.0;
                                   for (int64_t l = 0; l < len; ++l)
                                       dot += static_cast<double>(g[base + l * inner]) * o[base + l * inner];
                                   const float d = static_cast<float>(dot);
                                   for (int64_t l = 0; l < len; ++l) {
                                       const int64_t idx = base + l * inner;
                                       gi[0][idx] += o[idx] * (g[idx] - d);
                                   }
                               }
                           }
                       });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (float v : a.data()) total += v;
    const auto n = static_cast<size_t>(a.numel());
    return make_result(Shape{1}, {static_cast<float>(total)}, {a}, "sum",
                       [n](std::span<const float> g, std::span<float* const> gi) {
                           if (!gi[0]) return;
                           for (size_t i = 0; i < n; ++i) gi[0][i] += g[0];
                       });
}

Tensor mean(const Tensor& a) {
    double total = 0.0;
    for (float v : a.data()) total += v;
    const auto n = static_cast<size_t>(a.numel());
    const float inv = 1.0f / static_cast<float>(n);
    return make_result(Shape{1}, {static_cast<float>(total / static_cast<double>(n))}, {a}, "mean",
                       [n, inv](std::span<const float> g, std::span<float* const> gi) {
                           if (!gi[0]) return;
                           const float v = g[0] * inv;
                           for (size_t i = 0; i < n; ++i) gi[0][i] += v;
                       });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding) {
    if (x.rank() != 3 || w.rank() != 4) throw DimensionError("conv2d expects x [C,H,W] and w [O,C,K,K]");
    const int64_t cin = x.size(0), h = x.size(1), wd = x.size(2);
    const int64_t cout = w.size(0), kh = w.size(2), kw = w.size(3);
    if (w.size(1) != cin) {
        throw DimensionError("conv2d channel mismatch: " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
    }
    if (bias.defined() && bias.numel() != cout) throw DimensionError("conv2d bias size mismatch");
    const int64_t ho = (h + 2 * padding - kh) / stride + 1;
    const int64_t wo = (wd + 2 * padding - kw) / stride + 1;
    if (ho <= 0 || wo <= 0) throw DimensionError("conv2d output would be empty");
    const int64_t rows = cin * kh * kw;
    const int64_t cols_n = ho * wo;

    auto cols = std::make_shared<std::vector<float>>(static_cast<size_t>(rows * cols_n), 0.0f);
    const auto xv = x.data();
    for (int64_t c = 0; c < cin; ++c) {
        for (int64_t ky = 0; ky < kh; ++ky) {
            for (int64_t kx = 0; kx < kw; ++kx) {
                float* dst = cols->data() + ((c * kh + ky) * kw + kx) * cols_n;
                for (int64_t oy = 0; oy < ho; ++oy) {
                    const int64_t iy = oy * stride - padding + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int64_t ox = 0; ox < wo; ++ox) {
                        const int64_t ix = ox * stride - padding + kx;
                        if (ix < 0 || ix >= wd) continue;
                        dst[oy * wo + ox] = xv[(c * h + iy) * wd + ix];
                    }
                }
            }
        }
    }
    std::vector<float> out(static_cast<size_t>(cout * cols_n), 0.0f);
    if (bias.defined()) {
        const auto bv = bias.data();
        for (int64_t o = 0; o < cout; ++o) std::fill_n(out.begin() + o * cols_n, cols_n, bv[o]);
    }
    gemm_nn(cout, cols_n, rows, w.data().data(), cols->data(), out.data());

    std::vector<Tensor> inputs{x, w};
    if (bias.defined()) inputs.push_back(bias);
    return make_result(
        Shape{cout, ho, wo}, std::move(out), std::move(inputs), "conv2d",
        [=](std::span<const float> g, std::span<float* const> gi) {
            if (gi[1]) gemm_nt(cout, rows, cols_n, g.data(), cols->data(), gi[1]);
            if (gi.size() > 2 && gi[2]) {
                for (int64_t o = 0; o < cout; ++o) {
                    double s = 0.0;
                    for (int64_t j = 0; j < cols_n; ++j) s += g[o * cols_n + j];
                    gi[2][o] += static_cast<float>(s);
                }
            }
            if (gi[0]) {
                std::vector<float> dcols(static_cast<size_t>(rows * cols_n), 0.0f);
                gemm_tn(rows, cols_n, cout, w.data().data(), g.data(), dcols.data());
                float* dx = gi[0];
                for (int64_t c = 0; c < cin; ++c) {
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            const float* src = dcols.data() + ((c * kh + ky) * kw + kx) * cols_n;
                            for (int64_t oy = 0; oy < ho; ++oy) {
                                const int64_t iy = oy * stride - padding + ky;
                                if (iy < 0 || iy >= h) continue;
                                for (int64_t ox = 0; ox < wo; ++ox) {
                                    const int64_t ix = ox * stride - padding + kx;
                                    if (ix < 0 || ix >= wd) continue;
                                    dx[(c * h + iy) * wd + ix] += src[oy * wo + ox];
                                }
                            }
                        }
                    }
                }
            }
        });
}

Tensor group_norm(const Tensor& x, int64_t groups, float eps) {
    if (x.rank() != 3) throw DimensionError("group_norm expects [C,H,W]");
    if (groups <= 0 || x.size(0) % groups != 0) throw DimensionError("group_norm: channels not divisible by groups");
    const int64_t n = x.numel() / groups;
    const auto xv = x.data();
    std::vector<float> out(xv.size());
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(groups));
    for (int64_t g = 0; g < groups; ++g) {
        const float* src = xv.data() + g * n;
        double s = 0.0, s2 = 0.0;
        for (int64_t i = 0; i < n; ++i) s += src[i];
        const double mu = s / static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) s2 += (src[i] - mu) * (src[i] - mu);
        const double inv = 1.0 / std::sqrt(s2 / static_cast<double>(n) + eps);
        (*inv_std)[static_cast<size_t>(g)] = inv;
        for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(g * n + i)] = static_cast<float>((src[i] - mu) * inv);
    }
    auto y = std::make_shared<std::vector<float>>(out);
    return make_result(x.shape(), std::move(out), {x}, "group_norm",
                       [y, inv_std, groups, n](std::span<const float> g, std::span<float* const> gi) {
                           if (!gi[0]) return;
                           for (int64_t grp = 0; grp < groups; ++grp) {
                               const float* gy = g.data() + grp * n;
                               const float* yy = y->data() + grp * n;
                               double mg = 0.0, mgy = 0.0;
                               for (int64_t i = 0; i < n; ++i) {
                                   mg += gy[i];
                                   mgy += double(gy[i]) * yy[i];
                               }
                               mg /= static_cast<double>(n);
                               mgy /= static_cast<double>(n);
                               const double inv = (*inv_std)[static_cast<size_t>(grp)];
                               for (int64_t i = 0; i < n; ++i)
                                   gi[0][grp * n + i] += static_cast<float>(inv * (gy[i] - mg - yy[i] * mgy));
                           }
                       });
}

Tensor upsample_nearest2(const Tensor& x) {
    if (x.rank() != 3) throw DimensionError("upsample_nearest2 expects [C,H,W]");
    const int64_t c = x.size(0), h = x.size(1), w = x.size(2);
    const auto xv = x.data();
    std::vector<float> out(static_cast<size_t>(c * 4 * h * w));
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < 2 * h; ++y)
            for (int64_t xx = 0; xx < 2 * w; ++xx)
                out[(ci * 2 * h + y) * 2 * w + xx] = xv[(ci * h + y / 2) * w + xx / 2];
    return make_result(Shape{c, 2 * h, 2 * w}, std::move(out), {x}, "upsample_nearest2",
                       [c, h, w](std::span<const float> g, std::span<float* const> gi) {
                           if (!gi[0]) return;
                           for (int64_t ci = 0; ci < c; ++ci)
                               for (int64_t y = 0; y < 2 * h; ++y)
                                   for (int64_t xx = 0; xx < 2 * w; ++xx)
                                       gi[0][(ci * h + y / 2) * w + xx / 2] += g[(ci * 2 * h + y) * 2 * w + xx];
                       });
}

Tensor concat0(const Tensor& a, const Tensor& b) {
    if (a.rank() != b.rank()) throw DimensionError("concat0 rank mismatch");
    for (int64_t d = 1; d < a.rank(); ++d) {
        if (a.size(d) != b.size(d)) {
            throw DimensionError("concat0 shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
        }
    }
    Shape shape = a.shape();
    shape[0] += b.size(0);
    std::vector<float> out;
    out.reserve(static_cast<size_t>(a.numel() + b.numel()));
    out.insert(out.end(), a.data().begin(), a.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    const auto na = static_cast<size_t>(a.numel());
    const auto nb = static_cast<size_t>(b.numel());
    return make_result(std::move(shape), std::move(out), {a, b}, "concat0",
                       [na, nb](std::span<const float> g, std::span<float* const> gi) {
                           if (gi[0])
                               for (size_t i = 0; i < na; ++i) gi[0][i] += g[i];
                           if (gi[1])
                               for (size_t i = 0; i < nb; ++i) gi[1][i] += g[na + i];
                       });
}

Tensor separable_filter_valid(const Tensor& x, std::span<const float> kernel1d) {
    if (x.rank() != 3) throw DimensionError("separable_filter_valid expects [C,H,W]");
    const int64_t c = x.size(0), h = x.size(1), w = x.size(2);
    const int64_t k = static_cast<int64_t>(kernel1d.size());
    if (h < k || w < k) {
        throw DimensionError("image " + shape_str(x.shape()) + " smaller than filter window " + std::to_string(k));
    }
    const int64_t ho = h - k + 1, wo = w - k + 1;
    auto kern = std::make_shared<std::vector<double>>(kernel1d.begin(), kernel1d.end());
    const auto xv = x.data();
    // Horizontal pass over full rows, then vertical pass.
    std::vector<double> tmp(static_cast<size_t>(c * h * wo));
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t ox = 0; ox < wo; ++ox) {
                double s = 0.0;
                const float* row = xv.data() + (ci * h + y) * w + ox;
                for (int64_t b = 0; b < k; ++b) s += (*kern)[b] * row[b];
                tmp[(ci * h + y) * wo + ox] = s;
            }
    std::vector<float> out(static_cast<size_t>(c * ho * wo));
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t oy = 0; oy < ho; ++oy)
            for (int64_t ox = 0; ox < wo; ++ox) {
                double s = 0.0;
                for (int64_t a = 0; a < k; ++a) s += (*kern)[a] * tmp[(ci * h + oy + a) * wo + ox];
                out[(ci * ho + oy) * wo + ox] = static_cast<float>(s);
            }
    return make_result(Shape{c, ho, wo}, std::move(out), {x}, "separable_filter_valid",
                       [=](std::span<const float> g, std::span<float* const> gi) {
                           if (!gi[0]) return;
                           std::vector<double> dtmp(static_cast<size_t>(c * h * wo), 0.0);
                           for (int64_t ci = 0; ci < c; ++ci)
                               for (int64_t oy = 0; oy < ho; ++oy)
                                   for (int64_t ox = 0; ox < wo; ++ox) {
                                       const double gv = g[(ci * ho + oy) * wo + ox];
                                       for (int64_t a = 0; a < k; ++a)
                                           dtmp[(ci * h + oy + a) * wo + ox] += (*kern)[a] * gv;
                                   }
                           for (int64_t ci = 0; ci < c; ++ci)
                               for (int64_t y = 0; y < h; ++y)
                                   for (int64_t ox = 0; ox < wo; ++ox) {
                                       const double gv = dtmp[(ci * h + y) * wo + ox];
                                       float* row = gi[0] + (ci * h + y) * w + ox;
                                       for (int64_t b = 0; b < k; ++b)
                                           row[b] += static_cast<float>((*kern)[b] * gv);
                                   }
                       });
}

} // namespace wildsplat
