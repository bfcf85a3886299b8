#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "motra/tensor.hpp"

namespace motra {

// Reverse-mode autodiff over TensorT. Graphs are built per forward pass
// (define-by-run) and discarded when the output handle goes out of scope;
// parameters are persistent leaf nodes owned by the registry.
template <typename T>
struct NodeT {
    TensorT<T> value;
    TensorT<T> grad;  // lazily allocated, same shape as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<NodeT<T>>> parents;
    std::function<void(NodeT<T>&)> backward_fn;

    TensorT<T>& ensure_grad() {
        if (grad.size() != value.size()) grad = TensorT<T>(value.shape());
        return grad;
    }
};

template <typename T>
class VarT {
  public:
    VarT() = default;

    static VarT leaf(TensorT<T> v, bool requires_grad = false) {
        VarT out;
        out.n_ = std::make_shared<NodeT<T>>();
        out.n_->value = std::move(v);
        out.n_->requires_grad = requires_grad;
        return out;
    }

    bool defined() const { return static_cast<bool>(n_); }
    const TensorT<T>& val() const { return n_->value; }
    TensorT<T>& val_mut() { return n_->value; }
    const std::vector<int>& shape() const { return n_->value.shape(); }

    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool rg) { n_->requires_grad = rg; }

    TensorT<T>& grad_mut() { return n_->ensure_grad(); }
    const TensorT<T>& grad() const { return const_cast<NodeT<T>*>(n_.get())->ensure_grad(); }
    void zero_grad() { n_->ensure_grad().zero(); }

    std::shared_ptr<NodeT<T>> node() const { return n_; }

    // Seeds this node's gradient with ones and propagates through the graph
    // in reverse topological order. Leaf gradients accumulate until zeroed.
    void backward() const {
        if (!n_->requires_grad) return;
        std::vector<NodeT<T>*> order;
        std::unordered_set<NodeT<T>*> visited;
        struct Frame {
            NodeT<T>* n;
            std::size_t pi;
        };
        std::vector<Frame> stack;
        stack.push_back({n_.get(), 0});
        visited.insert(n_.get());
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.pi < f.n->parents.size()) {
                NodeT<T>* p = f.n->parents[f.pi++].get();
                if (p->requires_grad && !visited.count(p)) {
                    visited.insert(p);
                    stack.push_back({p, 0});
                }
            } else {
                order.push_back(f.n);
                stack.pop_back();
            }
        }
        n_->ensure_grad().fill(T(1));
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if ((*it)->backward_fn) (*it)->backward_fn(**it);
        }
    }

  private:
    std::shared_ptr<NodeT<T>> n_;
};

using Var = VarT<float>;
using VarD = VarT<double>;

namespace ag {

template <typename T>
VarT<T> make_op(TensorT<T> value, std::vector<VarT<T>> parents,
                std::function<void(NodeT<T>&)> bw) {
    VarT<T> out = VarT<T>::leaf(std::move(value));
    bool rg = false;
    for (const auto& p : parents) rg = rg || p.requires_grad();
    out.set_requires_grad(rg);
    if (rg) {
        auto node = out.node();
        node->parents.reserve(parents.size());
        for (const auto& p : parents) node->parents.push_back(p.node());
        node->backward_fn = std::move(bw);
    }
    return out;
}

template <typename T>
VarT<T> constant(TensorT<T> v) {
    return VarT<T>::leaf(std::move(v), false);
}

template <typename T>
VarT<T> scalar(T v) {
    return VarT<T>::leaf(TensorT<T>({1}, v), false);
}

template <typename T>
VarT<T> detach(const VarT<T>& a) {
    return VarT<T>::leaf(a.val(), false);
}

namespace detail {
template <typename T>
void check_same_shape(const VarT<T>& a, const VarT<T>& b, const char* op) {
    if (!a.val().same_shape(b.val()))
        throw ShapeError(std::string(op) + ": shape mismatch " +
                         TensorT<T>::shape_str(a.shape()) + " vs " +
                         TensorT<T>::shape_str(b.shape()));
}
}  // namespace detail

template <typename T>
VarT<T> add(const VarT<T>& a, const VarT<T>& b) {
    detail::check_same_shape(a, b, "add");
    TensorT<T> v(a.shape());
    for (int i = 0; i < v.size(); ++i) v[i] = a.val()[i] + b.val()[i];
    auto* pa = a.node().get();
    auto* pb = b.node().get();
    return make_op<T>(std::move(v), {a, b}, [pa, pb](NodeT<T>& n) {
        if (pa->requires_grad) {
            auto& g = pa->ensure_grad();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    });
}

template <typename T>
VarT<T> sub(const VarT<T>& a, const VarT<T>& b) {
    detail::check_same_shape(a, b, "sub");
    TensorT<T> v(a.shape());
    for (int i = 0; i < v.size(); ++i) v[i] = a.val()[i] - b.val()[i];
    auto* pa = a.node().get();
    auto* pb = b.node().get();
    return make_op<T>(std::move(v), {a, b}, [pa, pb](NodeT<T>& n) {
        if (pa->requires_grad) {
            auto& g = pa->ensure_grad();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad();
            for (int i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

template <typename T>
VarT<T> mul(const VarT<T>& a, const VarT<T>& b) {
    detail::check_same_shape(a, b, "mul");
    TensorT<T> v(a.shape());
    for (int i = 0; i < v.size(); ++i) v[i] = a.val()[i] * b.val()[i];
    auto* pa = a.node().get();
    auto* pb = b.node().get();
    return make_op<T>(std::move(v), {a, b}, [pa, pb](NodeT<T>& n) {
        if (pa->requires_grad) {
            auto& g = pa->ensure_grad();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pb->value[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pa->value[i];
        }
    });
}

template <typename T>
VarT<T> div(const VarT<T>& a, const VarT<T>& b) {
    detail::check_same_shape(a, b, "div");
    TensorT<T> v(a.shape());
    for (int i = 0; i < v.size(); ++i) v[i] = a.val()[i] / b.val()[i];
    auto* pa = a.node().get();
    auto* pb = b.node().get();
    return make_op<T>(std::move(v), {a, b}, [pa, pb](NodeT<T>& n) {
        if (pa->requires_grad) {
            auto& g = pa->ensure_grad();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] / pb->value[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad();
            for (int i = 0; i < g.size(); ++i) {
                T bv = pb->value[i];
                g[i] -= n.grad[i] * pa->value[i] / (bv * bv);
            }
        }
    });
}

template <typename T>
VarT<T> add_scalar(const VarT<T>& a, T s) {
    TensorT<T> v(a.shape());
    for (int i = 0; i < v.size(); ++i) v[i] = a.val()[i] + s;
    auto* pa = a.node().get();
    return make_op<T>(std::move(v), {a}, [pa](NodeT<T>& n) {
        auto& g = pa->ensure_grad();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

template <typename T>
VarT<T> mul_scalar(const VarT<T>& a, T s) {
    TensorT<T> v(a.shape());
    for (int i = 0; i < v.size(); ++i) v[i] = a.val()[i] * s;
    auto* pa = a.node().get();
    return make_op<T>(std::move(v), {a}, [pa, s](NodeT<T>& n) {
        auto& g = pa->ensure_grad();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * s;
    });
}

template <typename T>
VarT<T> neg(const VarT<T>& a) {
    return mul_scalar(a, T(-1));
}

template <typename T>
VarT<T> abs(const VarT<T>& a) {
    TensorT<T> v(a.shape());
    for (int i = 0; i < v.size(); ++i) v[i] = std::abs(a.val()[i]);
    auto* pa = a.node().get();
    return make_op<T>(std::move(v), {a}, [pa](NodeT<T>& n) {
        auto& g = pa->ensure_grad();
        for (int i = 0; i < g.size(); ++i) {
            T x = pa->value[i];
            g[i] += n.grad[i] * (x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)));
        }
    });
}

template <typename T>
VarT<T> square(const VarT<T>& a) {
    TensorT<T> v(a.shape());
    for (int i = 0; i < v.size(); ++i) v[i] = a.val()[i] * a.val()[i];
    auto* pa = a.node().get();
    return make_op<T>(std::move(v), {a}, [pa](NodeT<T>& n) {
        auto& g = pa->ensure_grad();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * T(2) * pa->value[i];
    });
}

// Elementwise sqrt with a zero-guard: derivative is defined as 0 where the
// input is ~0 so norms of exactly-equal tensors stay differentiable-safe.
template <typename T>
VarT<T> sqrt_guard(const VarT<T>& a) {
    TensorT<T> v(a.shape());
    for (int i = 0; i < v.size(); ++i) v[i] = std::sqrt(std::max(a.val()[i], T(0)));
    auto* pa = a.node().get();
    return make_op<T>(std::move(v), {a}, [pa](NodeT<T>& n) {
        auto& g = pa->ensure_grad();
        for (int i = 0; i < g.size(); ++i) {
            T y = std::sqrt(std::max(pa->value[i], T(0)));
            if (y > T(1e-20)) g[i] += n.grad[i] / (T(2) * y);
        }
    });
}

// log of an already-positive input; callers clamp first.
template <typename T>
VarT<T> log(const VarT<T>& a) {
    TensorT<T> v(a.shape());
    for (int i = 0; i < v.size(); ++i) v[i] = std::log(a.val()[i]);
    auto* pa = a.node().get();
    return make_op<T>(std::move(v), {a}, [pa](NodeT<T>& n) {
        auto& g = pa->ensure_grad();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] / pa->value[i];
    });
}

// Pass-through gradient strictly inside [lo, hi], zero where clamped.
template <typename T>
VarT<T> clamp(const VarT<T>& a, T lo, T hi) {
    TensorT<T> v(a.shape());
    for (int i = 0; i < v.size(); ++i) v[i] = std::min(std::max(a.val()[i], lo), hi);
    auto* pa = a.node().get();
    return make_op<T>(std::move(v), {a}, [pa, lo, hi](NodeT<T>& n) {
        auto& g = pa->ensure_grad();
        for (int i = 0; i < g.size(); ++i) {
            T x = pa->value[i];
            if (x > lo && x < hi) g[i] += n.grad[i];
        }
    });
}

template <typename T>
VarT<T> sigmoid(const VarT<T>& a) {
    TensorT<T> v(a.shape());
    for (int i = 0; i < v.size(); ++i) {
        T x = a.val()[i];
        v[i] = x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                         : std::exp(x) / (T(1) + std::exp(x));
    }
    auto* pa = a.node().get();
    TensorT<T> saved = v;
    return make_op<T>(std::move(v), {a}, [pa, saved](NodeT<T>& n) {
        auto& g = pa->ensure_grad();
        for (int i = 0; i < g.size(); ++i) {
            T s = saved[i];
            g[i] += n.grad[i] * s * (T(1) - s);
        }
    });
}

template <typename T>
VarT<T> leaky_relu(const VarT<T>& a, T slope = T(0.2)) {
    TensorT<T> v(a.shape());
    for (int i = 0; i < v.size(); ++i) {
        T x = a.val()[i];
        v[i] = x >= T(0) ? x : slope * x;
    }
    auto* pa = a.node().get();
    return make_op<T>(std::move(v), {a}, [pa, slope](NodeT<T>& n) {
        auto& g = pa->ensure_grad();
        for (int i = 0; i < g.size(); ++i)
            g[i] += n.grad[i] * (pa->value[i] >= T(0) ? T(1) : slope);
    });
}

template <typename T>
VarT<T> sum(const VarT<T>& a) {
    T acc = T(0);
    for (int i = 0; i < a.val().size(); ++i) acc += a.val()[i];
    auto* pa = a.node().get();
    return make_op<T>(TensorT<T>({1}, acc), {a}, [pa](NodeT<T>& n) {
        auto& g = pa->ensure_grad();
        T s = n.grad[0];
        for (int i = 0; i < g.size(); ++i) g[i] += s;
    });
}

template <typename T>
VarT<T> mean(const VarT<T>& a) {
    return mul_scalar(sum(a), T(1) / T(a.val().size()));
}

// Sum over the leading (channel) axis of a (C,H,W) tensor -> (1,H,W).
template <typename T>
VarT<T> sum_ch(const VarT<T>& a) {
    const auto& s = a.shape();
    if (s.size() != 3) throw ShapeError("sum_ch expects (C,H,W)");
    int c = s[0], hw = s[1] * s[2];
    TensorT<T> v({1, s[1], s[2]});
    for (int k = 0; k < c; ++k)
        for (int i = 0; i < hw; ++i) v[i] += a.val()[k * hw + i];
    auto* pa = a.node().get();
    return make_op<T>(std::move(v), {a}, [pa, c, hw](NodeT<T>& n) {
        auto& g = pa->ensure_grad();
        for (int k = 0; k < c; ++k)
            for (int i = 0; i < hw; ++i) g[k * hw + i] += n.grad[i];
    });
}

// Broadcast-multiply a (C,H,W) tensor by a (1,H,W) map.
template <typename T>
VarT<T> mul_spatial(const VarT<T>& x, const VarT<T>& m) {
    const auto& xs = x.shape();
    const auto& ms = m.shape();
    if (xs.size() != 3 || ms.size() != 3 || ms[0] != 1 || ms[1] != xs[1] || ms[2] != xs[2])
        throw ShapeError("mul_spatial: expected (C,H,W) x (1,H,W)");
    int c = xs[0], hw = xs[1] * xs[2];
    TensorT<T> v(xs);
    for (int k = 0; k < c; ++k)
        for (int i = 0; i < hw; ++i) v[k * hw + i] = x.val()[k * hw + i] * m.val()[i];
    auto* px = x.node().get();
    auto* pm = m.node().get();
    return make_op<T>(std::move(v), {x, m}, [px, pm, c, hw](NodeT<T>& n) {
        if (px->requires_grad) {
            auto& g = px->ensure_grad();
            for (int k = 0; k < c; ++k)
                for (int i = 0; i < hw; ++i) g[k * hw + i] += n.grad[k * hw + i] * pm->value[i];
        }
        if (pm->requires_grad) {
            auto& g = pm->ensure_grad();
            for (int k = 0; k < c; ++k)
                for (int i = 0; i < hw; ++i) g[i] += n.grad[k * hw + i] * px->value[k * hw + i];
        }
    });
}

// Broadcast ops between a (C,H,W) tensor and a (C,) vector, used for
// feature-wise affine modulation.
template <typename T>
VarT<T> mul_cvec(const VarT<T>& x, const VarT<T>& v) {
    const auto& xs = x.shape();
    if (xs.size() != 3 || v.shape().size() != 1 || v.shape()[0] != xs[0])
        throw ShapeError("mul_cvec: expected (C,H,W) x (C,)");
    int c = xs[0], hw = xs[1] * xs[2];
    TensorT<T> out(xs);
    for (int k = 0; k < c; ++k)
        for (int i = 0; i < hw; ++i) out[k * hw + i] = x.val()[k * hw + i] * v.val()[k];
    auto* px = x.node().get();
    auto* pv = v.node().get();
    return make_op<T>(std::move(out), {x, v}, [px, pv, c, hw](NodeT<T>& n) {
        if (px->requires_grad) {
            auto& g = px->ensure_grad();
            for (int k = 0; k < c; ++k)
                for (int i = 0; i < hw; ++i) g[k * hw + i] += n.grad[k * hw + i] * pv->value[k];
        }
        if (pv->requires_grad) {
            auto& g = pv->ensure_grad();
            for (int k = 0; k < c; ++k) {
                T acc = T(0);
                for (int i = 0; i < hw; ++i) acc += n.grad[k * hw + i] * px->value[k * hw + i];
                g[k] += acc;
            }
        }
    });
}

template <typename T>
VarT<T> add_cvec(const VarT<T>& x, const VarT<T>& v) {
    const auto& xs = x.shape();
    if (xs.size() != 3 || v.shape().size() != 1 || v.shape()[0] != xs[0])
        throw ShapeError("add_cvec: expected (C,H,W) + (C,)");
    int c = xs[0], hw = xs[1] * xs[2];
    TensorT<T> out(xs);
    for (int k = 0; k < c; ++k)
        for (int i = 0; i < hw; ++i) out[k * hw + i] = x.val()[k * hw + i] + v.val()[k];
    auto* px = x.node().get();
    auto* pv = v.node().get();
    return make_op<T>(std::move(out), {x, v}, [px, pv, c, hw](NodeT<T>& n) {
        if (px->requires_grad) {
            auto& g = px->ensure_grad();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (pv->requires_grad) {
            auto& g = pv->ensure_grad();
            for (int k = 0; k < c; ++k) {
                T acc = T(0);
                for (int i = 0; i < hw; ++i) acc += n.grad[k * hw + i];
                g[k] += acc;
            }
        }
    });
}

template <typename T>
VarT<T> concat_ch(const std::vector<VarT<T>>& xs) {
    if (xs.empty()) throw ShapeError("concat_ch: empty input list");
    int h = xs[0].shape()[1], w = xs[0].shape()[2];
    int ctot = 0;
    for (const auto& x : xs) {
        const auto& s = x.shape();
        if (s.size() != 3 || s[1] != h || s[2] != w)
            throw ShapeError("concat_ch: spatial dims mismatch");
        ctot += s[0];
    }
    TensorT<T> v({ctot, h, w});
    int off = 0;
    std::vector<int> offsets;
    for (const auto& x : xs) {
        offsets.push_back(off);
        std::copy(x.val().data(), x.val().data() + x.val().size(), v.data() + off);
        off += x.val().size();
    }
    std::vector<NodeT<T>*> ps;
    for (const auto& x : xs) ps.push_back(x.node().get());
    return make_op<T>(std::move(v), xs, [ps, offsets](NodeT<T>& n) {
        for (std::size_t k = 0; k < ps.size(); ++k) {
            if (!ps[k]->requires_grad) continue;
            auto& g = ps[k]->ensure_grad();
            const T* src = n.grad.data() + offsets[k];
            for (int i = 0; i < g.size(); ++i) g[i] += src[i];
        }
    });
}

// Contiguous slice along the leading axis (works for any rank >= 1).
template <typename T>
VarT<T> slice_dim0(const VarT<T>& a, int from, int to) {
    const auto& s = a.shape();
    if (s.empty() || from < 0 || to > s[0] || from >= to)
        throw ShapeError("slice_dim0: bad range");
    int stride = a.val().size() / s[0];
    std::vector<int> oshape = s;
    oshape[0] = to - from;
    TensorT<T> v(oshape);
    std::copy(a.val().data() + from * stride, a.val().data() + to * stride, v.data());
    auto* pa = a.node().get();
    return make_op<T>(std::move(v), {a}, [pa, from, stride](NodeT<T>& n) {
        auto& g = pa->ensure_grad();
        T* dst = g.data() + from * stride;
        for (int i = 0; i < n.grad.size(); ++i) dst[i] += n.grad[i];
    });
}

template <typename T>
VarT<T> reshape(const VarT<T>& a, std::vector<int> shape) {
    TensorT<T> v = a.val().reshaped(shape);
    auto* pa = a.node().get();
    return make_op<T>(std::move(v), {a}, [pa](NodeT<T>& n) {
        auto& g = pa->ensure_grad();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

// Per-pixel softmax over the channel axis of a (C,H,W) tensor.
template <typename T>
VarT<T> softmax_ch(const VarT<T>& a) {
    const auto& s = a.shape();
    if (s.size() != 3) throw ShapeError("softmax_ch expects (C,H,W)");
    if (!a.val().all_finite()) throw NumericError("softmax_ch: non-finite input");
    int c = s[0], hw = s[1] * s[2];
    TensorT<T> v(s);
    for (int i = 0; i < hw; ++i) {
        T m = a.val()[i];
        for (int k = 1; k < c; ++k) m = std::max(m, a.val()[k * hw + i]);
        T z = T(0);
        for (int k = 0; k < c; ++k) {
            T e = std::exp(a.val()[k * hw + i] - m);
            v[k * hw + i] = e;
            z += e;
        }
        for (int k = 0; k < c; ++k) v[k * hw + i] /= z;
    }
    auto* pa = a.node().get();
    TensorT<T> saved = v;
    return make_op<T>(std::move(v), {a}, [pa, saved, c, hw](NodeT<T>& n) {
        auto& g = pa->ensure_grad();
        for (int i = 0; i < hw; ++i) {
            T dot = T(0);
            for (int k = 0; k < c; ++k) dot += n.grad[k * hw + i] * saved[k * hw + i];
            for (int k = 0; k < c; ++k)
                g[k * hw + i] += saved[k * hw + i] * (n.grad[k * hw + i] - dot);
        }
    });
}

}  // namespace ag
}  // namespace motra
