#include "isopoint/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace isopoint::ag {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

namespace {

std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

std::size_t shape_size(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

Tensor make(std::vector<int> shape, std::vector<double> value, std::vector<Tensor> parents,
            std::function<void(detail::Node&)> bwd) {
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    for (const auto& p : parents) {
        node->parents.push_back(p.shared_node());
        node->requires_grad = node->requires_grad || p.requires_grad();
    }
    if (node->requires_grad) node->backward_fn = std::move(bwd);
    return Tensor(std::move(node));
}

bool is_row_vector_of(const std::vector<int>& v, const std::vector<int>& m) {
    if (m.size() != 2) return false;
    if (v.size() == 1 && v[0] == m[1]) return true;
    if (v.size() == 2 && v[0] == 1 && v[1] == m[1]) return true;
    return false;
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double fill, bool requires_grad) {
    auto node = std::make_shared<detail::Node>();
    node->value.assign(shape_size(shape), fill);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
    if (shape_size(shape) != values.size())
        throw ShapeError("from: " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({1}, {v}, requires_grad); }

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item: tensor has " + std::to_string(size()) + " elements");
    return node_->value[0];
}

std::vector<double>& Tensor::grad() {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() {
    if (size() != 1) throw ShapeError("backward: root must be a scalar");
    if (!node_->requires_grad) return;

    // post-order DFS so parents precede children in `order`
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    struct Frame {
        detail::Node* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({node_.get(), 0});
    visited.insert(node_.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            detail::Node* p = f.node->parents[f.next_parent++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }
    for (auto* n : order) n->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(static_cast<std::size_t>(m) * n);
    MapM(out.data(), m, n).noalias() =
        MapC(a.values().data(), m, k) * MapC(b.values().data(), k, n);
    return make({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        MapC dc(node.grad.data(), m, n);
        if (pa.requires_grad) {
            pa.ensure_grad();
            MapM(pa.grad.data(), m, k).noalias() += dc * MapC(pb.value.data(), k, n).transpose();
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            MapM(pb.grad.data(), k, n).noalias() += MapC(pa.value.data(), m, k).transpose() * dc;
        }
    });
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose: need 2-D, got " + shape_str(a.shape()));
    const int m = a.dim(0), n = a.dim(1);
    std::vector<double> out(a.size());
    MapM(out.data(), n, m) = MapC(a.values().data(), m, n).transpose();
    return make({n, m}, std::move(out), {a}, [m, n](detail::Node& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        MapM(pa.grad.data(), m, n) += MapC(node.grad.data(), n, m).transpose();
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) {
        std::vector<double> out(a.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
        return make(a.shape(), std::move(out), {a, b}, [](detail::Node& node) {
            for (int p = 0; p < 2; ++p) {
                auto& par = *node.parents[static_cast<std::size_t>(p)];
                if (!par.requires_grad) continue;
                par.ensure_grad();
                for (std::size_t i = 0; i < node.grad.size(); ++i) par.grad[i] += node.grad[i];
            }
        });
    }
    // leading-axis broadcast: row vector over matrix rows
    const bool a_is_vec = is_row_vector_of(a.shape(), b.shape());
    const bool b_is_vec = is_row_vector_of(b.shape(), a.shape());
    if (!a_is_vec && !b_is_vec)
        throw ShapeError("add: " + shape_str(a.shape()) + " + " + shape_str(b.shape()));
    const Tensor& mat = a_is_vec ? b : a;
    const Tensor& vec = a_is_vec ? a : b;
    const int m = mat.dim(0), n = mat.dim(1);
    std::vector<double> out(mat.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<std::size_t>(i) * n + j] =
                mat.values()[static_cast<std::size_t>(i) * n + j] +
                vec.values()[static_cast<std::size_t>(j)];
    return make(mat.shape(), std::move(out), {mat, vec}, [m, n](detail::Node& node) {
        auto& pm = *node.parents[0];
        auto& pv = *node.parents[1];
        if (pm.requires_grad) {
            pm.ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i) pm.grad[i] += node.grad[i];
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    pv.grad[static_cast<std::size_t>(j)] +=
                        node.grad[static_cast<std::size_t>(i) * n + j];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("mul: " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    return make(a.shape(), std::move(out), {a, b}, [](detail::Node& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i)
                pa.grad[i] += node.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i)
                pb.grad[i] += node.grad[i] * pa.value[i];
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
    return make(a.shape(), std::move(out), {a}, [c](detail::Node& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i] * c;
    });
}

Tensor scalar_gate(const Tensor& a, const Tensor& s) {
    if (s.size() != 1) throw ShapeError("scalar_gate: gate must be [1], got " + shape_str(s.shape()));
    const double g = s.values()[0];
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * g;
    return make(a.shape(), std::move(out), {a, s}, [g](detail::Node& node) {
        auto& pa = *node.parents[0];
        auto& ps = *node.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i] * g;
        }
        if (ps.requires_grad) {
            ps.ensure_grad();
            double acc = 0.0;
            for (std::size_t i = 0; i < node.grad.size(); ++i) acc += node.grad[i] * pa.value[i];
            ps.grad[0] += acc;
        }
    });
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
    return make(a.shape(), std::move(out), {a}, [](detail::Node& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i)
            if (pa.value[i] > 0.0) pa.grad[i] += node.grad[i];
    });
}

Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a.values()[i]));
    return make(a.shape(), std::move(out), {a}, [](detail::Node& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            const double y = node.value[i];
            pa.grad[i] += node.grad[i] * y * (1.0 - y);
        }
    });
}

Tensor softmax(const Tensor& a, int axis) {
    if (a.rank() != 2 || (axis != 0 && axis != 1))
        throw ShapeError("softmax: need 2-D with axis 0/1, got " + shape_str(a.shape()));
    const int m = a.dim(0), n = a.dim(1);
    const int outer = axis == 1 ? m : n;
    const int inner = axis == 1 ? n : m;
    const auto at = [&](const std::vector<double>& v, int o, int i) -> double {
        return axis == 1 ? v[static_cast<std::size_t>(o) * n + i]
                         : v[static_cast<std::size_t>(i) * n + o];
    };
    const auto put = [&](std::vector<double>& v, int o, int i, double x) {
        (axis == 1 ? v[static_cast<std::size_t>(o) * n + i]
                   : v[static_cast<std::size_t>(i) * n + o]) = x;
    };
    std::vector<double> out(a.size());
    for (int o = 0; o < outer; ++o) {
        double mx = at(a.values(), o, 0);
        for (int i = 1; i < inner; ++i) mx = std::max(mx, at(a.values(), o, i));
        double denom = 0.0;
        for (int i = 0; i < inner; ++i) denom += std::exp(at(a.values(), o, i) - mx);
        for (int i = 0; i < inner; ++i) put(out, o, i, std::exp(at(a.values(), o, i) - mx) / denom);
    }
    return make(a.shape(), std::move(out), {a}, [m, n, axis, outer, inner](detail::Node& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        const auto idx = [&](int o, int i) -> std::size_t {
            return axis == 1 ? static_cast<std::size_t>(o) * n + i
                             : static_cast<std::size_t>(i) * n + o;
        };
        (void)m;
        for (int o = 0; o < outer; ++o) {
            double dot = 0.0;
            for (int i = 0; i < inner; ++i) dot += node.grad[idx(o, i)] * node.value[idx(o, i)];
            for (int i = 0; i < inner; ++i)
                pa.grad[idx(o, i)] += node.value[idx(o, i)] * (node.grad[idx(o, i)] - dot);
        }
    });
}

Tensor reduce_max(const Tensor& a, int axis) {
    if (a.rank() != 2 || (axis != 0 && axis != 1))
        throw ShapeError("reduce_max: need 2-D with axis 0/1, got " + shape_str(a.shape()));
    const int m = a.dim(0), n = a.dim(1);
    const int out_len = axis == 0 ? n : m;
    const int red_len = axis == 0 ? m : n;
    std::vector<double> out(static_cast<std::size_t>(out_len));
    auto argmax = std::make_shared<std::vector<int>>(static_cast<std::size_t>(out_len));
    for (int o = 0; o < out_len; ++o) {
        int best = 0;
        double bv = axis == 0 ? a.values()[static_cast<std::size_t>(o)]
                              : a.values()[static_cast<std::size_t>(o) * n];
        for (int r = 1; r < red_len; ++r) {
            const double v = axis == 0 ? a.values()[static_cast<std::size_t>(r) * n + o]
                                       : a.values()[static_cast<std::size_t>(o) * n + r];
            if (v > bv) {
                bv = v;
                best = r;
            }
        }
        out[static_cast<std::size_t>(o)] = bv;
        (*argmax)[static_cast<std::size_t>(o)] = best;
    }
    return make({out_len}, std::move(out), {a}, [n, axis, out_len, argmax](detail::Node& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (int o = 0; o < out_len; ++o) {
            const int r = (*argmax)[static_cast<std::size_t>(o)];
            const std::size_t idx = axis == 0 ? static_cast<std::size_t>(r) * n + o
                                              : static_cast<std::size_t>(o) * n + r;
            pa.grad[idx] += node.grad[static_cast<std::size_t>(o)];
        }
    });
}

Tensor repeat_rows(const Tensor& v, int rows) {
    int n;
    if (v.rank() == 1)
        n = v.dim(0);
    else if (v.rank() == 2 && v.dim(0) == 1)
        n = v.dim(1);
    else
        throw ShapeError("repeat_rows: need [N] or [1 x N], got " + shape_str(v.shape()));
    std::vector<double> out(static_cast<std::size_t>(rows) * n);
    for (int i = 0; i < rows; ++i)
        std::copy(v.values().begin(), v.values().end(),
                  out.begin() + static_cast<std::ptrdiff_t>(i) * n);
    return make({rows, n}, std::move(out), {v}, [rows, n](detail::Node& node) {
        auto& pv = *node.parents[0];
        if (!pv.requires_grad) return;
        pv.ensure_grad();
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < n; ++j)
                pv.grad[static_cast<std::size_t>(j)] +=
                    node.grad[static_cast<std::size_t>(i) * n + j];
    });
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride_h, int stride_w) {
    if (x.rank() != 3 || kernel.rank() != 4 || x.dim(2) != kernel.dim(2))
        throw ShapeError("conv2d: " + shape_str(x.shape()) + " (*) " + shape_str(kernel.shape()));
    const int H = x.dim(0), W = x.dim(1), Cin = x.dim(2);
    const int KH = kernel.dim(0), KW = kernel.dim(1), Cout = kernel.dim(3);
    if (KH > H || KW > W || stride_h < 1 || stride_w < 1)
        throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " does not fit " +
                         shape_str(x.shape()));
    const int OH = (H - KH) / stride_h + 1;
    const int OW = (W - KW) / stride_w + 1;
    const auto xi = [W, Cin](int h, int w, int c) {
        return (static_cast<std::size_t>(h) * W + w) * Cin + c;
    };
    const auto ki = [KW, Cin, Cout](int kh, int kw, int ci, int co) {
        return ((static_cast<std::size_t>(kh) * KW + kw) * Cin + ci) * Cout + co;
    };
    const auto oi = [OW, Cout](int h, int w, int c) {
        return (static_cast<std::size_t>(h) * OW + w) * Cout + c;
    };
    std::vector<double> out(static_cast<std::size_t>(OH) * OW * Cout, 0.0);
    for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow)
            for (int kh = 0; kh < KH; ++kh)
                for (int kw = 0; kw < KW; ++kw)
                    for (int ci = 0; ci < Cin; ++ci) {
                        const double xv = x.values()[xi(oh * stride_h + kh, ow * stride_w + kw, ci)];
                        if (xv == 0.0) continue;
                        for (int co = 0; co < Cout; ++co)
                            out[oi(oh, ow, co)] += xv * kernel.values()[ki(kh, kw, ci, co)];
                    }
    return make({OH, OW, Cout}, std::move(out), {x, kernel},
                [=](detail::Node& node) {
                    auto& px = *node.parents[0];
                    auto& pk = *node.parents[1];
                    if (px.requires_grad) px.ensure_grad();
                    if (pk.requires_grad) pk.ensure_grad();
                    for (int oh = 0; oh < OH; ++oh)
                        for (int ow = 0; ow < OW; ++ow)
                            for (int co = 0; co < Cout; ++co) {
                                const double g = node.grad[oi(oh, ow, co)];
                                if (g == 0.0) continue;
                                for (int kh = 0; kh < KH; ++kh)
                                    for (int kw = 0; kw < KW; ++kw)
                                        for (int ci = 0; ci < Cin; ++ci) {
                                            const std::size_t xidx =
                                                xi(oh * stride_h + kh, ow * stride_w + kw, ci);
                                            if (px.requires_grad)
                                                px.grad[xidx] +=
                                                    g * pk.value[ki(kh, kw, ci, co)];
                                            if (pk.requires_grad)
                                                pk.grad[ki(kh, kw, ci, co)] +=
                                                    g * px.value[xidx];
                                        }
                            }
                });
}

Tensor max_pool2d(const Tensor& x, int pool_h, int pool_w, int stride_h, int stride_w) {
    if (x.rank() != 3) throw ShapeError("max_pool2d: need [H x W x C], got " + shape_str(x.shape()));
    if (stride_h <= 0) stride_h = pool_h;
    if (stride_w <= 0) stride_w = pool_w;
    const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
    if (pool_h > H || pool_w > W)
        throw ShapeError("max_pool2d: window does not fit " + shape_str(x.shape()));
    const int OH = (H - pool_h) / stride_h + 1;
    const int OW = (W - pool_w) / stride_w + 1;
    std::vector<double> out(static_cast<std::size_t>(OH) * OW * C);
    auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
    const auto xi = [W, C](int h, int w, int c) {
        return (static_cast<std::size_t>(h) * W + w) * C + c;
    };
    for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow)
            for (int c = 0; c < C; ++c) {
                std::size_t best = xi(oh * stride_h, ow * stride_w, c);
                double bv = x.values()[best];
                for (int ph = 0; ph < pool_h; ++ph)
                    for (int pw = 0; pw < pool_w; ++pw) {
                        const std::size_t idx = xi(oh * stride_h + ph, ow * stride_w + pw, c);
                        if (x.values()[idx] > bv) {
                            bv = x.values()[idx];
                            best = idx;
                        }
                    }
                const std::size_t o = (static_cast<std::size_t>(oh) * OW + ow) * C + c;
                out[o] = bv;
                (*arg)[o] = best;
            }
    return make({OH, OW, C}, std::move(out), {x}, [arg](detail::Node& node) {
        auto& px = *node.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (std::size_t o = 0; o < node.grad.size(); ++o) px.grad[(*arg)[o]] += node.grad[o];
    });
}

Tensor dropout(const Tensor& a, double p, bool train, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw ShapeError("dropout: p must be in [0, 1)");
    if (!train || p == 0.0) {
        std::vector<double> out = a.values();
        return make(a.shape(), std::move(out), {a}, [](detail::Node& node) {
            auto& pa = *node.parents[0];
            if (!pa.requires_grad) return;
            pa.ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i];
        });
    }
    auto keep = std::make_shared<std::vector<double>>(a.size());
    const double inv = 1.0 / (1.0 - p);
    for (auto& k : *keep) k = rng.uniform() >= p ? inv : 0.0;
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * (*keep)[i];
    return make(a.shape(), std::move(out), {a}, [keep](detail::Node& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i)
            pa.grad[i] += node.grad[i] * (*keep)[i];
    });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const int rank = parts[0].rank();
    if (rank == 1 || (rank == 2 && axis == 0)) {
        // stack along axis 0
        int total = 0;
        const int cols = rank == 2 ? parts[0].dim(1) : 1;
        for (const auto& p : parts) {
            if (p.rank() != rank || (rank == 2 && p.dim(1) != cols))
                throw ShapeError("concat: incompatible part " + shape_str(p.shape()));
            total += p.dim(0);
        }
        std::vector<double> out;
        out.reserve(static_cast<std::size_t>(total) * cols);
        for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
        std::vector<int> shape = rank == 2 ? std::vector<int>{total, cols} : std::vector<int>{total};
        return make(std::move(shape), std::move(out), parts, [](detail::Node& node) {
            std::size_t off = 0;
            for (auto& pp : node.parents) {
                if (pp->requires_grad) {
                    pp->ensure_grad();
                    for (std::size_t i = 0; i < pp->value.size(); ++i)
                        pp->grad[i] += node.grad[off + i];
                }
                off += pp->value.size();
            }
        });
    }
    if (rank == 2 && axis == 1) {
        const int rows = parts[0].dim(0);
        int total = 0;
        for (const auto& p : parts) {
            if (p.rank() != 2 || p.dim(0) != rows)
                throw ShapeError("concat: incompatible part " + shape_str(p.shape()));
            total += p.dim(1);
        }
        std::vector<double> out(static_cast<std::size_t>(rows) * total);
        int col0 = 0;
        for (const auto& p : parts) {
            const int pc = p.dim(1);
            for (int r = 0; r < rows; ++r)
                std::copy(p.values().begin() + static_cast<std::ptrdiff_t>(r) * pc,
                          p.values().begin() + static_cast<std::ptrdiff_t>(r + 1) * pc,
                          out.begin() + static_cast<std::ptrdiff_t>(r) * total + col0);
            col0 += pc;
        }
        return make({rows, total}, std::move(out), parts, [rows, total](detail::Node& node) {
            int col0 = 0;
            for (auto& pp : node.parents) {
                const int pc = pp->shape[1];
                if (pp->requires_grad) {
                    pp->ensure_grad();
                    for (int r = 0; r < rows; ++r)
                        for (int c = 0; c < pc; ++c)
                            pp->grad[static_cast<std::size_t>(r) * pc + c] +=
                                node.grad[static_cast<std::size_t>(r) * total + col0 + c];
                }
                col0 += pc;
            }
        });
    }
    throw ShapeError("concat: unsupported rank/axis");
}

Tensor embedding(const Tensor& table, const std::vector<int>& indices) {
    if (table.rank() != 2) throw ShapeError("embedding: table must be 2-D");
    const int v = table.dim(0), e = table.dim(1);
    for (int idx : indices)
        if (idx < 0 || idx >= v)
            throw DataError("embedding index " + std::to_string(idx) + " outside table of " +
                            std::to_string(v));
    const int n = static_cast<int>(indices.size());
    std::vector<double> out(static_cast<std::size_t>(n) * e);
    for (int i = 0; i < n; ++i)
        std::copy(table.values().begin() + static_cast<std::ptrdiff_t>(indices[static_cast<std::size_t>(i)]) * e,
                  table.values().begin() + static_cast<std::ptrdiff_t>(indices[static_cast<std::size_t>(i)] + 1) * e,
                  out.begin() + static_cast<std::ptrdiff_t>(i) * e);
    auto idx_copy = std::make_shared<std::vector<int>>(indices);
    return make({n, e}, std::move(out), {table}, [idx_copy, e](detail::Node& node) {
        auto& pt = *node.parents[0];
        if (!pt.requires_grad) return;
        pt.ensure_grad();
        for (std::size_t i = 0; i < idx_copy->size(); ++i)
            for (int j = 0; j < e; ++j)
                pt.grad[static_cast<std::size_t>((*idx_copy)[i]) * e + j] +=
                    node.grad[i * e + j];
    });
}

Tensor reshape(const Tensor& a, std::vector<int> new_shape) {
    if (shape_size(new_shape) != a.size())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(new_shape));
    std::vector<double> out = a.values();
    return make(std::move(new_shape), std::move(out), {a}, [](detail::Node& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i];
    });
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    return make({1}, {acc}, {a}, [](detail::Node& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < pa.grad.size(); ++i) pa.grad[i] += node.grad[0];
    });
}

Tensor weighted_softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                                      const std::vector<double>& weights) {
    if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be 2-D");
    const int n = logits.dim(0), c = logits.dim(1);
    if (static_cast<int>(labels.size()) != n || static_cast<int>(weights.size()) != n)
        throw ShapeError("cross_entropy: labels/weights length must match logits rows");
    for (int i = 0; i < n; ++i)
        if (labels[static_cast<std::size_t>(i)] < 0 || labels[static_cast<std::size_t>(i)] >= c)
            throw DataError("cross_entropy: label " +
                            std::to_string(labels[static_cast<std::size_t>(i)]) +
                            " outside [0, " + std::to_string(c) + ")");
    int valid = 0;
    for (double w : weights)
        if (w > 0.0) ++valid;
    const double norm = valid > 0 ? 1.0 / valid : 0.0;

    auto probs = std::make_shared<std::vector<double>>(logits.values());
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        double* row = probs->data() + static_cast<std::ptrdiff_t>(i) * c;
        double mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
        const double lse = mx + std::log(denom);
        const double w = weights[static_cast<std::size_t>(i)];
        if (w > 0.0) loss += w * (lse - row[labels[static_cast<std::size_t>(i)]]);
        for (int j = 0; j < c; ++j) row[j] = std::exp(row[j] - lse);
    }
    loss *= norm;

    auto lab = std::make_shared<std::vector<int>>(labels);
    auto wts = std::make_shared<std::vector<double>>(weights);
    return make({1}, {loss}, {logits}, [probs, lab, wts, n, c, norm](detail::Node& node) {
        auto& pl = *node.parents[0];
        if (!pl.requires_grad) return;
        pl.ensure_grad();
        const double up = node.grad[0] * norm;
        for (int i = 0; i < n; ++i) {
            const double w = (*wts)[static_cast<std::size_t>(i)];
            if (w <= 0.0) continue;
            const double* p = probs->data() + static_cast<std::ptrdiff_t>(i) * c;
            double* g = pl.grad.data() + static_cast<std::ptrdiff_t>(i) * c;
            for (int j = 0; j < c; ++j) g[j] += up * w * p[j];
            g[(*lab)[static_cast<std::size_t>(i)]] -= up * w;
        }
    });
}

// ---- parameter store -------------------------------------------------------

Tensor ParamStore::create(const std::string& name, std::vector<int> shape, Init init, Rng& rng) {
    if (has(name)) throw DataError("parameter '" + name + "' already exists");
    std::size_t n = shape_size(shape);
    std::vector<double> vals(n, 0.0);
    if (init != Init::Zero) {
        std::size_t fan_in = 1;
        if (shape.size() >= 2) {
            fan_in = 1;
            for (std::size_t i = 0; i + 1 < shape.size(); ++i)
                fan_in *= static_cast<std::size_t>(shape[i]);
        } else if (!shape.empty()) {
            fan_in = static_cast<std::size_t>(shape[0]);
        }
        const double limit = init == Init::HeUniform
                                 ? std::sqrt(6.0 / static_cast<double>(fan_in))
                                 : 0.05;
        for (auto& v : vals) v = rng.uniform(-limit, limit);
    }
    Tensor t = Tensor::from(std::move(shape), std::move(vals), true);
    entries_.emplace_back(name, t);
    return t;
}

Tensor ParamStore::get(const std::string& name) const {
    for (const auto& [n, t] : entries_)
        if (n == name) return t;
    throw DataError("unknown parameter '" + name + "'");
}

bool ParamStore::has(const std::string& name) const {
    for (const auto& [n, t] : entries_)
        if (n == name) return true;
    return false;
}

std::vector<Tensor> ParamStore::tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& [n, t] : entries_) out.push_back(t);
    return out;
}

void ParamStore::zero_grad() {
    for (auto& [n, t] : entries_) t.zero_grad();
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.size();
    return n;
}

}  // namespace isopoint::ag
