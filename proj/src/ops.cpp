#include "mrf/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <numeric>

#include "mrf/errors.hpp"

namespace mrf {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::atomic<bool> g_gelu_fault{false};

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward) {
    Tensor out(std::move(shape), std::move(data));
    if (!grad_enabled()) return out;
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (!any) return out;
    auto& node = *out.node();
    node.requires_grad = true;
    for (auto& t : inputs) node.parents.push_back(t.node());
    node.backward_fn = std::move(backward);
    return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " differ");
}

void check_axis(const Tensor& x, std::size_t axis, const char* op) {
    if (axis >= x.rank())
        throw ContractError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " +
                            shape_str(x.shape()));
}

// Returns (outer, length, inner) for a reduction/softmax along `axis`.
struct AxisSplit {
    std::size_t outer = 1, length = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
    AxisSplit r;
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    r.length = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

std::vector<std::size_t> strides_of(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
    return st;
}

// Visits every index of `out_shape` in row-major order, calling f(out_flat, src_offset)
// where src_offset advances by `src_strides` per dimension.
template <typename F>
void strided_walk(const Shape& out_shape, const std::vector<std::size_t>& src_strides, F&& f) {
    const std::size_t rank = out_shape.size();
    const std::size_t total = shape_numel(out_shape);
    if (rank == 0) {
        f(0, 0);
        return;
    }
    std::vector<std::size_t> counter(rank, 0);
    std::size_t src = 0;
    const std::size_t last = rank - 1;
    for (std::size_t flat = 0; flat < total;) {
        // Innermost run handled in a tight loop.
        const std::size_t run = out_shape[last];
        const std::size_t step = src_strides[last];
        for (std::size_t j = 0; j < run; ++j) f(flat + j, src + j * step);
        flat += run;
        std::size_t d = last;
        while (d-- > 0) {
            src += src_strides[d];
            if (++counter[d] < out_shape[d]) break;
            src -= src_strides[d] * out_shape[d];
            counter[d] = 0;
        }
    }
}

template <typename Fwd, typename Bwd>
Tensor unary(const Tensor& x, Fwd fwd, Bwd dfdx) {
    auto in = x.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
    return make_result(x.shape(), std::move(out), {x}, [x, dfdx](Node& self) {
        auto& g = x.node()->ensure_grad();
        const auto& xs = x.node()->data;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfdx(xs[i], self.data[i]);
    });
}

// C[m,n] += A[m,p] B[p,n]
void gemm_nn(const double* A, const double* B, double* C, std::size_t m, std::size_t p, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* c = C + i * n;
        const double* a = A + i * p;
        for (std::size_t k = 0; k < p; ++k) {
            const double av = a[k];
            if (av == 0.0) continue;
            const double* b = B + k * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// dA[m,p] += dC[m,n] B[p,n]^T
void gemm_nt(const double* dC, const double* B, double* dA, std::size_t m, std::size_t p, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* g = dC + i * n;
        double* out = dA + i * p;
        for (std::size_t k = 0; k < p; ++k) {
            const double* b = B + k * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[j] * b[j];
            out[k] += acc;
        }
    }
}

// dB[p,n] += A[m,p]^T dC[m,n]
void gemm_tn(const double* A, const double* dC, double* dB, std::size_t m, std::size_t p, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* a = A + i * p;
        const double* g = dC + i * n;
        for (std::size_t k = 0; k < p; ++k) {
            const double av = a[k];
            if (av == 0.0) continue;
            double* out = dB + k * n;
            for (std::size_t j = 0; j < n; ++j) out[j] += av * g[j];
        }
    }
}

}  // namespace

namespace testing {
void set_gelu_adjoint_fault(bool enabled) { g_gelu_fault = enabled; }
}  // namespace testing

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    auto ad = a.data(), bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
    return make_result(a.shape(), std::move(out), {a, b}, [a, b](Node& self) {
        for (const Tensor* t : {&a, &b}) {
            if (!t->requires_grad()) continue;
            auto& g = t->node()->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    auto ad = a.data(), bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
    return make_result(a.shape(), std::move(out), {a, b}, [a, b](Node& self) {
        if (a.requires_grad()) {
            auto& g = a.node()->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (b.requires_grad()) {
            auto& g = b.node()->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    auto ad = a.data(), bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
    return make_result(a.shape(), std::move(out), {a, b}, [a, b](Node& self) {
        const auto& av = a.node()->data;
        const auto& bv = b.node()->data;
        if (a.requires_grad()) {
            auto& g = a.node()->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
        }
        if (b.requires_grad()) {
            auto& g = b.node()->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
        }
    });
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "div");
    std::vector<double> out(a.numel());
    auto ad = a.data(), bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] / bd[i];
    return make_result(a.shape(), std::move(out), {a, b}, [a, b](Node& self) {
        const auto& bv = b.node()->data;
        if (a.requires_grad()) {
            auto& g = a.node()->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / bv[i];
        }
        if (b.requires_grad()) {
            auto& g = b.node()->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i] * self.data[i] / bv[i];
        }
    });
}

Tensor scale(const Tensor& x, double factor) {
    return unary(
        x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
    return unary(
        x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor sqrt(const Tensor& x) {
    return unary(
        x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

// Exact (erf-based) GELU.
Tensor gelu(const Tensor& x) {
    const double fault = g_gelu_fault ? 1.1 : 1.0;
    return unary(
        x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
        [fault](double v, double) {
            const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
            const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
            return fault * (cdf + v * pdf);
        });
}

Tensor sum(const Tensor& x) {
    auto d = x.data();
    const double total = std::accumulate(d.begin(), d.end(), 0.0);
    return make_result({1}, {total}, {x}, [x](Node& self) {
        auto& g = x.node()->ensure_grad();
        for (auto& v : g) v += self.grad[0];
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim) {
    check_axis(x, axis, "sum_axis");
    const auto sp = split_axis(x.shape(), axis);
    Shape out_shape = x.shape();
    if (keepdim || out_shape.size() == 1)
        out_shape[axis] = 1;
    else
        out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    auto in = x.data();
    std::vector<double> out(sp.outer * sp.inner, 0.0);
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t l = 0; l < sp.length; ++l) {
            const double* src = in.data() + (o * sp.length + l) * sp.inner;
            double* dst = out.data() + o * sp.inner;
            for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
        }
    return make_result(std::move(out_shape), std::move(out), {x}, [x, sp](Node& self) {
        auto& g = x.node()->ensure_grad();
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t l = 0; l < sp.length; ++l) {
                double* dst = g.data() + (o * sp.length + l) * sp.inner;
                const double* src = self.grad.data() + o * sp.inner;
                for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
            }
    });
}

Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim) {
    check_axis(x, axis, "mean_axis");
    return scale(sum_axis(x, axis, keepdim), 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor var_axis(const Tensor& x, std::size_t axis, bool keepdim) {
    const Tensor mu = broadcast_to(mean_axis(x, axis, true), x.shape());
    const Tensor centered = sub(x, mu);
    return mean_axis(mul(centered, centered), axis, keepdim);
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
    const Shape& src = x.shape();
    if (src.size() > shape.size())
        throw ShapeError("broadcast_to: cannot expand " + shape_str(src) + " to " + shape_str(shape));
    const std::size_t offset = shape.size() - src.size();
    const auto src_st = strides_of(src);
    std::vector<std::size_t> walk(shape.size(), 0);
    for (std::size_t i = 0; i < src.size(); ++i) {
        const std::size_t target = shape[offset + i];
        if (src[i] == target)
            walk[offset + i] = src_st[i];
        else if (src[i] != 1)
            throw ShapeError("broadcast_to: cannot expand " + shape_str(src) + " to " + shape_str(shape));
    }
    if (src == shape) return x;
    std::vector<double> out(shape_numel(shape));
    auto in = x.data();
    strided_walk(shape, walk, [&](std::size_t o, std::size_t s) { out[o] = in[s]; });
    return make_result(shape, std::move(out), {x}, [x, shape, walk](Node& self) {
        auto& g = x.node()->ensure_grad();
        strided_walk(shape, walk, [&](std::size_t o, std::size_t s) { g[s] += self.grad[o]; });
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2)
        throw ShapeError("matmul: operands need rank >= 2, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const std::size_t m = a.dim(a.rank() - 2), p = a.dim(a.rank() - 1);
    const std::size_t p2 = b.dim(b.rank() - 2), n = b.dim(b.rank() - 1);
    const Shape lead_a(a.shape().begin(), a.shape().end() - 2);
    const Shape lead_b(b.shape().begin(), b.shape().end() - 2);
    if (p != p2 || (!lead_a.empty() && !lead_b.empty() && lead_a != lead_b))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));

    const Shape& lead = lead_a.empty() ? lead_b : lead_a;
    const std::size_t batch = shape_numel(lead);
    Shape out_shape = lead;
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<double> out(batch * m * n, 0.0);
    const bool a_batched = !lead_a.empty(), b_batched = !lead_b.empty();
    const double* A = a.data().data();
    const double* B = b.data().data();

    if (a_batched && !b_batched) {
        // Fold the batch into rows: one big GEMM.
        gemm_nn(A, B, out.data(), batch * m, p, n);
    } else {
        for (std::size_t i = 0; i < batch; ++i)
            gemm_nn(A + (a_batched ? i * m * p : 0), B + (b_batched ? i * p * n : 0), out.data() + i * m * n, m,
                    p, n);
    }

    return make_result(std::move(out_shape), std::move(out), {a, b},
                       [a, b, batch, m, p, n, a_batched, b_batched](Node& self) {
                           const double* G = self.grad.data();
                           const double* A = a.node()->data.data();
                           const double* B = b.node()->data.data();
                           if (a.requires_grad()) {
                               double* dA = a.node()->ensure_grad().data();
                               if (a_batched && !b_batched) {
                                   gemm_nt(G, B, dA, batch * m, p, n);
                               } else {
                                   for (std::size_t i = 0; i < batch; ++i)
                                       gemm_nt(G + i * m * n, B + (b_batched ? i * p * n : 0),
                                               dA + (a_batched ? i * m * p : 0), m, p, n);
                               }
                           }
                           if (b.requires_grad()) {
                               double* dB = b.node()->ensure_grad().data();
                               if (a_batched && !b_batched) {
                                   gemm_tn(A, G, dB, batch * m, p, n);
                               } else {
                                   for (std::size_t i = 0; i < batch; ++i)
                                       gemm_tn(A + (a_batched ? i * m * p : 0), G + i * m * n,
                                               dB + (b_batched ? i * p * n : 0), m, p, n);
                               }
                           }
                       });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
    const Shape& s = x.shape();
    if (order.size() != s.size()) throw ShapeError("permute: order rank mismatch for " + shape_str(s));
    std::vector<bool> seen(s.size(), false);
    for (auto o : order) {
        if (o >= s.size() || seen[o]) throw ContractError("permute: invalid axis order");
        seen[o] = true;
    }
    const auto st = strides_of(s);
    Shape out_shape(s.size());
    std::vector<std::size_t> walk(s.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        out_shape[i] = s[order[i]];
        walk[i] = st[order[i]];
    }
    std::vector<double> out(x.numel());
    auto in = x.data();
    strided_walk(out_shape, walk, [&](std::size_t o, std::size_t src) { out[o] = in[src]; });
    return make_result(out_shape, std::move(out), {x}, [x, out_shape, walk](Node& self) {
        auto& g = x.node()->ensure_grad();
        strided_walk(out_shape, walk, [&](std::size_t o, std::size_t src) { g[src] += self.grad[o]; });
    });
}

Tensor transpose(const Tensor& x, std::size_t axis_a, std::size_t axis_b) {
    check_axis(x, axis_a, "transpose");
    check_axis(x, axis_b, "transpose");
    std::vector<std::size_t> order(x.rank());
    std::iota(order.begin(), order.end(), 0);
    std::swap(order[axis_a], order[axis_b]);
    return permute(x, order);
}

Tensor reshape(const Tensor& x, const Shape& shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    auto in = x.data();
    return make_result(shape, std::vector<double>(in.begin(), in.end()), {x}, [x](Node& self) {
        auto& g = x.node()->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    const Shape& first = parts.front().shape();
    check_axis(parts.front(), axis, "concat");
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& t : parts) {
        Shape probe = t.shape();
        if (probe.size() != first.size()) throw ShapeError("concat: rank mismatch");
        probe[axis] = first[axis];
        if (probe != first)
            throw ShapeError("concat: shapes " + shape_str(first) + " and " + shape_str(t.shape()) +
                             " differ off-axis");
        out_shape[axis] += t.dim(axis);
    }
    const auto sp = split_axis(out_shape, axis);
    std::vector<double> out(shape_numel(out_shape));
    std::size_t offset = 0;
    for (const auto& t : parts) {
        const std::size_t block = t.dim(axis) * sp.inner;
        auto in = t.data();
        for (std::size_t o = 0; o < sp.outer; ++o)
            std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(o * block), block,
                        out.begin() + static_cast<std::ptrdiff_t>(o * sp.length * sp.inner + offset));
        offset += block;
    }
    return make_result(out_shape, std::move(out), parts, [parts, sp, axis](Node& self) {
        std::size_t off = 0;
        for (const auto& t : parts) {
            const std::size_t block = t.dim(axis) * sp.inner;
            if (t.requires_grad()) {
                auto& g = t.node()->ensure_grad();
                for (std::size_t o = 0; o < sp.outer; ++o)
                    for (std::size_t i = 0; i < block; ++i)
                        g[o * block + i] += self.grad[o * sp.length * sp.inner + off + i];
            }
            off += block;
        }
    });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
    check_axis(x, axis, "slice");
    if (length == 0 || start + length > x.dim(axis))
        throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of bounds for " + shape_str(x.shape()));
    std::vector<std::size_t> idx(length);
    std::iota(idx.begin(), idx.end(), start);
    return index_select(x, axis, idx);
}

Tensor index_select(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& indices) {
    check_axis(x, axis, "index_select");
    if (indices.empty()) throw ContractError("index_select: empty index list");
    const auto sp = split_axis(x.shape(), axis);
    for (auto i : indices)
        if (i >= sp.length) throw ShapeError("index_select: index out of range for " + shape_str(x.shape()));
    Shape out_shape = x.shape();
    out_shape[axis] = indices.size();
    const std::size_t n = indices.size();
    std::vector<double> out(sp.outer * n * sp.inner);
    auto in = x.data();
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t j = 0; j < n; ++j)
            std::copy_n(in.begin() + static_cast<std::ptrdiff_t>((o * sp.length + indices[j]) * sp.inner), sp.inner,
                        out.begin() + static_cast<std::ptrdiff_t>((o * n + j) * sp.inner));
    return make_result(std::move(out_shape), std::move(out), {x}, [x, sp, indices](Node& self) {
        auto& g = x.node()->ensure_grad();
        const std::size_t n = indices.size();
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t j = 0; j < n; ++j) {
                double* dst = g.data() + (o * sp.length + indices[j]) * sp.inner;
                const double* src = self.grad.data() + (o * n + j) * sp.inner;
                for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
            }
    });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    check_axis(x, axis, "softmax");
    const auto sp = split_axis(x.shape(), axis);
    auto in = x.data();
    std::vector<double> out(in.size());
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t base = o * sp.length * sp.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t l = 0; l < sp.length; ++l) {
                const double v = in[base + l * sp.inner];
                if (std::isnan(v)) throw NumericError("softmax: NaN input");
                mx = std::max(mx, v);
            }
            double z = 0.0;
            for (std::size_t l = 0; l < sp.length; ++l) {
                const double e = std::exp(in[base + l * sp.inner] - mx);
                out[base + l * sp.inner] = e;
                z += e;
            }
            for (std::size_t l = 0; l < sp.length; ++l) out[base + l * sp.inner] /= z;
        }
    return make_result(x.shape(), std::move(out), {x}, [x, sp](Node& self) {
        auto& g = x.node()->ensure_grad();
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t i = 0; i < sp.inner; ++i) {
                const std::size_t base = o * sp.length * sp.inner + i;
                double dot = 0.0;
                for (std::size_t l = 0; l < sp.length; ++l) {
                    const std::size_t k = base + l * sp.inner;
                    dot += self.grad[k] * self.data[k];
                }
                for (std::size_t l = 0; l < sp.length; ++l) {
                    const std::size_t k = base + l * sp.inner;
                    g[k] += self.data[k] * (self.grad[k] - dot);
                }
            }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
    if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
    const std::size_t d = x.dim(x.rank() - 1);
    if (gamma.shape() != Shape{d} || beta.shape() != Shape{d})
        throw ShapeError("layer_norm: gamma/beta must be (" + std::to_string(d) + "), got " +
                         shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
    const std::size_t rows = x.numel() / d;
    auto in = x.data();
    auto gm = gamma.data(), bt = beta.data();
    std::vector<double> out(in.size());
    auto xhat = std::make_shared<std::vector<double>>(in.size());
    auto rstd = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = in.data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(d);
        const double rs = 1.0 / std::sqrt(var + eps);
        (*rstd)[r] = rs;
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (row[j] - mu) * rs;
            (*xhat)[r * d + j] = h;
            out[r * d + j] = gm[j] * h + bt[j];
        }
    }
    return make_result(x.shape(), std::move(out), {x, gamma, beta},
                       [x, gamma, beta, xhat, rstd, rows, d](Node& self) {
                           const auto& gm = gamma.node()->data;
                           const auto& G = self.grad;
                           if (gamma.requires_grad() || beta.requires_grad()) {
                               auto& dg = gamma.node()->ensure_grad();
                               auto& db = beta.node()->ensure_grad();
                               for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t j = 0; j < d; ++j) {
                                       dg[j] += G[r * d + j] * (*xhat)[r * d + j];
                                       db[j] += G[r * d + j];
                                   }
                           }
                           if (!x.requires_grad()) return;
                           auto& dx = x.node()->ensure_grad();
                           const double inv_d = 1.0 / static_cast<double>(d);
                           for (std::size_t r = 0; r < rows; ++r) {
                               double m1 = 0.0, m2 = 0.0;
                               for (std::size_t j = 0; j < d; ++j) {
                                   const double dh = G[r * d + j] * gm[j];
                                   m1 += dh;
                                   m2 += dh * (*xhat)[r * d + j];
                               }
                               m1 *= inv_d;
                               m2 *= inv_d;
                               for (std::size_t j = 0; j < d; ++j) {
                                   const double dh = G[r * d + j] * gm[j];
                                   dx[r * d + j] += (*rstd)[r] * (dh - m1 - (*xhat)[r * d + j] * m2);
                               }
                           }
                       });
}

Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64* rng) {
    if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout: rate must lie in [0, 1)");
    if (!training || rate == 0.0) return x;
    if (rng == nullptr) throw ContractError("dropout: training mode needs a random generator");
    const double keep_scale = 1.0 / (1.0 - rate);
    auto mask = std::make_shared<std::vector<double>>(x.numel());
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (auto& m : *mask) m = uni(*rng) >= rate ? keep_scale : 0.0;
    auto in = x.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * (*mask)[i];
    return make_result(x.shape(), std::move(out), {x}, [x, mask](Node& self) {
        auto& g = x.node()->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
    });
}

Tensor apply_last_axis(const Tensor& x, const SparseMap& map) {
    if (x.rank() == 0 || x.dim(x.rank() - 1) != map.in_size)
        throw ShapeError("apply_last_axis: last axis of " + shape_str(x.shape()) + " must be " +
                         std::to_string(map.in_size));
    Shape out_shape = x.shape();
    out_shape.back() = map.out_size;
    const std::size_t rows = x.numel() / map.in_size;
    auto in = x.data();
    std::vector<double> out(rows * map.out_size, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = in.data() + r * map.in_size;
        double* dst = out.data() + r * map.out_size;
        for (const auto& e : map.entries) dst[e.out] += e.weight * src[e.in];
    }
    return make_result(std::move(out_shape), std::move(out), {x}, [x, map, rows](Node& self) {
        auto& g = x.node()->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            double* dst = g.data() + r * map.in_size;
            const double* src = self.grad.data() + r * map.out_size;
            for (const auto& e : map.entries) dst[e.in] += e.weight * src[e.out];
        }
    });
}

}  // namespace mrf
