#include "graph.hpp"

#include <cmath>
#include <stdexcept>

namespace a2v {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

void require_2d(const Tensor& a, const char* op) {
    if (a.ndim() != 2) throw std::invalid_argument(std::string(op) + ": expected 2-D tensor, got " + a.shape_str());
}

}  // namespace

NodeId Graph::push(Tensor value, bool requires_grad, std::function<void(Graph&)> backprop) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::input(Tensor v, bool requires_grad) { return push(std::move(v), requires_grad, nullptr); }

void Graph::accum(NodeId id, const Tensor& g) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
    for (size_t i = 0; i < g.data.size(); ++i) n.grad.data[i] += g.data[i];
}

void Graph::accum_at(NodeId id, int64_t flat_index, double g) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
    n.grad.data[static_cast<size_t>(flat_index)] += g;
}

void Graph::backward(NodeId loss) {
    Node& l = nodes_[static_cast<size_t>(loss)];
    if (l.value.numel() != 1) throw std::invalid_argument("backward: loss must be scalar, got " + l.value.shape_str());
    if (!l.requires_grad) throw std::invalid_argument("backward: loss does not depend on any grad leaf");
    l.grad = Tensor(l.value.shape);
    l.grad.data[0] = 1.0;
    for (int64_t i = loss; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.requires_grad || !n.backprop) continue;
        if (n.grad.data.empty()) continue;  // never reached from the loss
        n.backprop(*this);
    }
}

// ---------------------------------------------------------------- elementwise

NodeId Graph::add(NodeId a, NodeId b) {
    require_same_shape(val(a), val(b), "add");
    Tensor out = val(a);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += val(b).data[i];
    bool rg = requires_grad(a) || requires_grad(b);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a, b](Graph& g) {
            g.accum(a, g.grad(id));
            g.accum(b, g.grad(id));
        };
    return id;
}

NodeId Graph::sub(NodeId a, NodeId b) {
    require_same_shape(val(a), val(b), "sub");
    Tensor out = val(a);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= val(b).data[i];
    bool rg = requires_grad(a) || requires_grad(b);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a, b](Graph& g) {
            const Tensor& go = g.grad(id);
            g.accum(a, go);
            Tensor neg = go;
            for (double& v : neg.data) v = -v;
            g.accum(b, neg);
        };
    return id;
}

NodeId Graph::mul(NodeId a, NodeId b) {
    require_same_shape(val(a), val(b), "mul");
    Tensor out = val(a);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= val(b).data[i];
    bool rg = requires_grad(a) || requires_grad(b);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a, b](Graph& g) {
            const Tensor& go = g.grad(id);
            Tensor ga = go, gb = go;
            for (size_t i = 0; i < go.data.size(); ++i) {
                ga.data[i] = go.data[i] * g.val(b).data[i];
                gb.data[i] = go.data[i] * g.val(a).data[i];
            }
            g.accum(a, ga);
            g.accum(b, gb);
        };
    return id;
}

NodeId Graph::div(NodeId a, NodeId b) {
    require_same_shape(val(a), val(b), "div");
    Tensor out = val(a);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] /= val(b).data[i];
    bool rg = requires_grad(a) || requires_grad(b);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a, b](Graph& g) {
            const Tensor& go = g.grad(id);
            Tensor ga = go, gb = go;
            for (size_t i = 0; i < go.data.size(); ++i) {
                double bi = g.val(b).data[i];
                ga.data[i] = go.data[i] / bi;
                gb.data[i] = -go.data[i] * g.val(a).data[i] / (bi * bi);
            }
            g.accum(a, ga);
            g.accum(b, gb);
        };
    return id;
}

NodeId Graph::scale(NodeId a, double c) {
    Tensor out = val(a);
    for (double& v : out.data) v *= c;
    bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a, c](Graph& g) {
            Tensor ga = g.grad(id);
            for (double& v : ga.data) v *= c;
            g.accum(a, ga);
        };
    return id;
}

NodeId Graph::add_scalar(NodeId a, double c) {
    Tensor out = val(a);
    for (double& v : out.data) v += c;
    bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a](Graph& g) { g.accum(a, g.grad(id)); };
    return id;
}

NodeId Graph::exp(NodeId a) {
    Tensor out = val(a);
    for (double& v : out.data) v = std::exp(v);
    bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a](Graph& g) {
            Tensor ga = g.grad(id);
            for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= g.val(id).data[i];
            g.accum(a, ga);
        };
    return id;
}

NodeId Graph::log(NodeId a) {
    Tensor out = val(a);
    for (double& v : out.data) v = std::log(v);
    bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a](Graph& g) {
            Tensor ga = g.grad(id);
            for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] /= g.val(a).data[i];
            g.accum(a, ga);
        };
    return id;
}

NodeId Graph::sqrt(NodeId a) {
    Tensor out = val(a);
    for (double& v : out.data) v = std::sqrt(v);
    bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a](Graph& g) {
            Tensor ga = g.grad(id);
            for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= 0.5 / g.val(id).data[i];
            g.accum(a, ga);
        };
    return id;
}

NodeId Graph::gelu(NodeId a) {
    static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    static const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
    Tensor out = val(a);
    for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
    bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a](Graph& g) {
            Tensor ga = g.grad(id);
            for (size_t i = 0; i < ga.data.size(); ++i) {
                double x = g.val(a).data[i];
                double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
                double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                ga.data[i] *= cdf + x * pdf;
            }
            g.accum(a, ga);
        };
    return id;
}

// ------------------------------------------------------------- linear algebra

NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require_2d(A, "matmul");
    require_2d(B, "matmul");
    if (A.shape[1] != B.shape[0])
        throw std::invalid_argument("matmul: inner dims differ, " + A.shape_str() + " x " + B.shape_str());
    int64_t m = A.shape[0], k = A.shape[1], n = B.shape[1];
    Tensor out({m, n});
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = &A.data[static_cast<size_t>(i * k)];
        double* orow = &out.data[static_cast<size_t>(i * n)];
        for (int64_t p = 0; p < k; ++p) {
            double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = &B.data[static_cast<size_t>(p * n)];
            for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    bool rg = requires_grad(a) || requires_grad(b);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a, b, m, k, n](Graph& g) {
            const Tensor& GO = g.grad(id);
            const Tensor& A2 = g.val(a);
            const Tensor& B2 = g.val(b);
            if (g.requires_grad(a)) {
                Tensor GA({m, k});
                // GA = GO * B^T
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < n; ++j) {
                        double gv = GO.data[static_cast<size_t>(i * n + j)];
                        if (gv == 0.0) continue;
                        for (int64_t p = 0; p < k; ++p)
                            GA.data[static_cast<size_t>(i * k + p)] += gv * B2.data[static_cast<size_t>(p * n + j)];
                    }
                g.accum(a, GA);
            }
            if (g.requires_grad(b)) {
                Tensor GB({k, n});
                // GB = A^T * GO
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t p = 0; p < k; ++p) {
                        double av = A2.data[static_cast<size_t>(i * k + p)];
                        if (av == 0.0) continue;
                        for (int64_t j = 0; j < n; ++j)
                            GB.data[static_cast<size_t>(p * n + j)] += av * GO.data[static_cast<size_t>(i * n + j)];
                    }
                g.accum(b, GB);
            }
        };
    return id;
}

NodeId Graph::transpose(NodeId a) {
    const Tensor& A = val(a);
    require_2d(A, "transpose");
    int64_t m = A.shape[0], n = A.shape[1];
    Tensor out({n, m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out.data[static_cast<size_t>(j * m + i)] = A.data[static_cast<size_t>(i * n + j)];
    bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a, m, n](Graph& g) {
            const Tensor& GO = g.grad(id);
            Tensor GA({m, n});
            for (int64_t j = 0; j < n; ++j)
                for (int64_t i = 0; i < m; ++i)
                    GA.data[static_cast<size_t>(i * n + j)] = GO.data[static_cast<size_t>(j * m + i)];
            g.accum(a, GA);
        };
    return id;
}

NodeId Graph::add_rowvec(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require_2d(A, "add_rowvec");
    if (B.ndim() != 1 || B.shape[0] != A.shape[1])
        throw std::invalid_argument("add_rowvec: vector shape " + B.shape_str() + " vs matrix " + A.shape_str());
    int64_t m = A.shape[0], n = A.shape[1];
    Tensor out = A;
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out.data[static_cast<size_t>(i * n + j)] += B.data[static_cast<size_t>(j)];
    bool rg = requires_grad(a) || requires_grad(b);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a, b, m, n](Graph& g) {
            const Tensor& GO = g.grad(id);
            g.accum(a, GO);
            if (g.requires_grad(b)) {
                Tensor GB({n});
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < n; ++j) GB.data[static_cast<size_t>(j)] += GO.data[static_cast<size_t>(i * n + j)];
                g.accum(b, GB);
            }
        };
    return id;
}

NodeId Graph::div_rows(NodeId a, NodeId d) {
    const Tensor& A = val(a);
    const Tensor& D = val(d);
    require_2d(A, "div_rows");
    if (D.ndim() != 1 || D.shape[0] != A.shape[0])
        throw std::invalid_argument("div_rows: denominator shape " + D.shape_str() + " vs matrix " + A.shape_str());
    int64_t m = A.shape[0], n = A.shape[1];
    Tensor out = A;
    for (int64_t i = 0; i < m; ++i) {
        double di = D.data[static_cast<size_t>(i)];
        for (int64_t j = 0; j < n; ++j) out.data[static_cast<size_t>(i * n + j)] /= di;
    }
    bool rg = requires_grad(a) || requires_grad(d);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a, d, m, n](Graph& g) {
            const Tensor& GO = g.grad(id);
            const Tensor& A2 = g.val(a);
            const Tensor& D2 = g.val(d);
            if (g.requires_grad(a)) {
                Tensor GA({m, n});
                for (int64_t i = 0; i < m; ++i) {
                    double di = D2.data[static_cast<size_t>(i)];
                    for (int64_t j = 0; j < n; ++j)
                        GA.data[static_cast<size_t>(i * n + j)] = GO.data[static_cast<size_t>(i * n + j)] / di;
                }
                g.accum(a, GA);
            }
            if (g.requires_grad(d)) {
                Tensor GD({m});
                for (int64_t i = 0; i < m; ++i) {
                    double di = D2.data[static_cast<size_t>(i)];
                    double s = 0.0;
                    for (int64_t j = 0; j < n; ++j)
                        s += GO.data[static_cast<size_t>(i * n + j)] * A2.data[static_cast<size_t>(i * n + j)];
                    GD.data[static_cast<size_t>(i)] = -s / (di * di);
                }
                g.accum(d, GD);
            }
        };
    return id;
}

// ------------------------------------------------------------ shape, movement

NodeId Graph::reshape(NodeId a, std::vector<int64_t> shape) {
    Tensor out = val(a).reshaped(std::move(shape));
    bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a](Graph& g) {
            Tensor ga = g.grad(id).reshaped(g.val(a).shape);
            g.accum(a, ga);
        };
    return id;
}

NodeId Graph::slice_rows(NodeId a, int64_t r0, int64_t r1) {
    const Tensor& A = val(a);
    require_2d(A, "slice_rows");
    if (r0 < 0 || r1 > A.shape[0] || r0 >= r1)
        throw std::invalid_argument("slice_rows: bad range [" + std::to_string(r0) + "," + std::to_string(r1) +
                                    ") for " + A.shape_str());
    int64_t n = A.shape[1];
    Tensor out({r1 - r0, n});
    std::copy(A.data.begin() + r0 * n, A.data.begin() + r1 * n, out.data.begin());
    bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a, r0, n](Graph& g) {
            const Tensor& GO = g.grad(id);
            for (int64_t i = 0; i < GO.shape[0]; ++i)
                for (int64_t j = 0; j < n; ++j) g.accum_at(a, (r0 + i) * n + j, GO.data[static_cast<size_t>(i * n + j)]);
        };
    return id;
}

NodeId Graph::slice_cols(NodeId a, int64_t c0, int64_t c1) {
    const Tensor& A = val(a);
    require_2d(A, "slice_cols");
    if (c0 < 0 || c1 > A.shape[1] || c0 >= c1)
        throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) + "," + std::to_string(c1) +
                                    ") for " + A.shape_str());
    int64_t m = A.shape[0], n = A.shape[1], w = c1 - c0;
    Tensor out({m, w});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < w; ++j) out.data[static_cast<size_t>(i * w + j)] = A.data[static_cast<size_t>(i * n + c0 + j)];
    bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a, c0, m, n, w](Graph& g) {
            const Tensor& GO = g.grad(id);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < w; ++j) g.accum_at(a, i * n + c0 + j, GO.data[static_cast<size_t>(i * w + j)]);
        };
    return id;
}

NodeId Graph::concat_rows(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    int64_t n = val(parts[0]).shape[1];
    int64_t m = 0;
    bool rg = false;
    for (NodeId p : parts) {
        require_2d(val(p), "concat_rows");
        if (val(p).shape[1] != n) throw std::invalid_argument("concat_rows: column mismatch");
        m += val(p).shape[0];
        rg = rg || requires_grad(p);
    }
    Tensor out({m, n});
    int64_t r = 0;
    for (NodeId p : parts) {
        const Tensor& P = val(p);
        std::copy(P.data.begin(), P.data.end(), out.data.begin() + r * n);
        r += P.shape[0];
    }
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        std::vector<NodeId> ps = parts;
        nodes_[static_cast<size_t>(id)].backprop = [id, ps, n](Graph& g) {
            const Tensor& GO = g.grad(id);
            int64_t r = 0;
            for (NodeId p : ps) {
                int64_t rows = g.val(p).shape[0];
                for (int64_t i = 0; i < rows; ++i)
                    for (int64_t j = 0; j < n; ++j) g.accum_at(p, i * n + j, GO.data[static_cast<size_t>((r + i) * n + j)]);
                r += rows;
            }
        };
    }
    return id;
}

NodeId Graph::concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
    int64_t m = val(parts[0]).shape[0];
    int64_t n = 0;
    bool rg = false;
    for (NodeId p : parts) {
        require_2d(val(p), "concat_cols");
        if (val(p).shape[0] != m) throw std::invalid_argument("concat_cols: row mismatch");
        n += val(p).shape[1];
        rg = rg || requires_grad(p);
    }
    Tensor out({m, n});
    int64_t c = 0;
    for (NodeId p : parts) {
        const Tensor& P = val(p);
        int64_t w = P.shape[1];
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < w; ++j) out.data[static_cast<size_t>(i * n + c + j)] = P.data[static_cast<size_t>(i * w + j)];
        c += w;
    }
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        std::vector<NodeId> ps = parts;
        nodes_[static_cast<size_t>(id)].backprop = [id, ps, m, n](Graph& g) {
            const Tensor& GO = g.grad(id);
            int64_t c = 0;
            for (NodeId p : ps) {
                int64_t w = g.val(p).shape[1];
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < w; ++j) g.accum_at(p, i * w + j, GO.data[static_cast<size_t>(i * n + c + j)]);
                c += w;
            }
        };
    }
    return id;
}

NodeId Graph::repeat_rows(NodeId a, int64_t times) {
    const Tensor& A = val(a);
    require_2d(A, "repeat_rows");
    if (times < 1) throw std::invalid_argument("repeat_rows: times must be >= 1");
    int64_t m = A.shape[0], n = A.shape[1];
    Tensor out({m * times, n});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t r = 0; r < times; ++r)
            std::copy(A.data.begin() + i * n, A.data.begin() + (i + 1) * n, out.data.begin() + (i * times + r) * n);
    bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a, m, n, times](Graph& g) {
            const Tensor& GO = g.grad(id);
            Tensor GA({m, n});
            for (int64_t i = 0; i < m; ++i)
                for (int64_t r = 0; r < times; ++r)
                    for (int64_t j = 0; j < n; ++j)
                        GA.data[static_cast<size_t>(i * n + j)] += GO.data[static_cast<size_t>((i * times + r) * n + j)];
            g.accum(a, GA);
        };
    return id;
}

NodeId Graph::gather(NodeId a, std::shared_ptr<const std::vector<int64_t>> idx, std::vector<int64_t> out_shape) {
    const Tensor& A = val(a);
    Tensor out(std::move(out_shape));
    if (static_cast<int64_t>(idx->size()) != out.numel())
        throw std::invalid_argument("gather: index count does not match output shape");
    for (size_t i = 0; i < idx->size(); ++i) {
        int64_t src = (*idx)[i];
        if (src < 0 || src >= A.numel()) throw std::invalid_argument("gather: index out of range");
        out.data[i] = A.data[static_cast<size_t>(src)];
    }
    bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a, idx](Graph& g) {
            const Tensor& GO = g.grad(id);
            for (size_t i = 0; i < idx->size(); ++i) g.accum_at(a, (*idx)[i], GO.data[i]);
        };
    return id;
}

// ----------------------------------------------------------- rows, reductions

NodeId Graph::softmax_rows(NodeId a) {
    const Tensor& A = val(a);
    require_2d(A, "softmax_rows");
    int64_t m = A.shape[0], n = A.shape[1];
    Tensor out = A;
    for (int64_t i = 0; i < m; ++i) {
        double* row = &out.data[static_cast<size_t>(i * n)];
        double mx = row[0];
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            s += row[j];
        }
        for (int64_t j = 0; j < n; ++j) row[j] /= s;
    }
    bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a, m, n](Graph& g) {
            const Tensor& GO = g.grad(id);
            const Tensor& Y = g.val(id);
            Tensor GA({m, n});
            for (int64_t i = 0; i < m; ++i) {
                double dot = 0.0;
                for (int64_t j = 0; j < n; ++j)
                    dot += GO.data[static_cast<size_t>(i * n + j)] * Y.data[static_cast<size_t>(i * n + j)];
                for (int64_t j = 0; j < n; ++j) {
                    size_t k = static_cast<size_t>(i * n + j);
                    GA.data[k] = (GO.data[k] - dot) * Y.data[k];
                }
            }
            g.accum(a, GA);
        };
    return id;
}

NodeId Graph::layernorm_rows(NodeId a, double eps) {
    const Tensor& A = val(a);
    require_2d(A, "layernorm_rows");
    int64_t m = A.shape[0], n = A.shape[1];
    Tensor out({m, n});
    std::vector<double> mean(static_cast<size_t>(m)), rstd(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i) {
        const double* row = &A.data[static_cast<size_t>(i * n)];
        double mu = 0.0;
        for (int64_t j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            double d = row[j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        double rs = 1.0 / std::sqrt(var + eps);
        mean[static_cast<size_t>(i)] = mu;
        rstd[static_cast<size_t>(i)] = rs;
        for (int64_t j = 0; j < n; ++j) out.data[static_cast<size_t>(i * n + j)] = (row[j] - mu) * rs;
    }
    bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a, m, n, mean, rstd](Graph& g) {
            const Tensor& GO = g.grad(id);
            const Tensor& Y = g.val(id);
            Tensor GA({m, n});
            double dn = static_cast<double>(n);
            for (int64_t i = 0; i < m; ++i) {
                double gsum = 0.0, gysum = 0.0;
                for (int64_t j = 0; j < n; ++j) {
                    size_t k = static_cast<size_t>(i * n + j);
                    gsum += GO.data[k];
                    gysum += GO.data[k] * Y.data[k];
                }
                double rs = rstd[static_cast<size_t>(i)];
                for (int64_t j = 0; j < n; ++j) {
                    size_t k = static_cast<size_t>(i * n + j);
                    GA.data[k] = rs * (GO.data[k] - gsum / dn - Y.data[k] * gysum / dn);
                }
            }
            g.accum(a, GA);
        };
    return id;
}

NodeId Graph::sum_rows(NodeId a) {
    const Tensor& A = val(a);
    require_2d(A, "sum_rows");
    int64_t m = A.shape[0], n = A.shape[1];
    Tensor out({m});
    for (int64_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < n; ++j) s += A.data[static_cast<size_t>(i * n + j)];
        out.data[static_cast<size_t>(i)] = s;
    }
    bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a, m, n](Graph& g) {
            const Tensor& GO = g.grad(id);
            Tensor GA({m, n});
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j) GA.data[static_cast<size_t>(i * n + j)] = GO.data[static_cast<size_t>(i)];
            g.accum(a, GA);
        };
    return id;
}

NodeId Graph::sum_all(NodeId a) {
    const Tensor& A = val(a);
    double s = 0.0;
    for (double v : A.data) s += v;
    bool rg = requires_grad(a);
    NodeId id = push(Tensor::scalar(s), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, a](Graph& g) {
            double go = g.grad(id).data[0];
            Tensor GA(g.val(a).shape, go);
            g.accum(a, GA);
        };
    return id;
}

NodeId Graph::mean_all(NodeId a) {
    int64_t n = val(a).numel();
    return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

NodeId Graph::mse(NodeId a, NodeId b) {
    require_same_shape(val(a), val(b), "mse");
    NodeId d = sub(a, b);
    return mean_all(mul(d, d));
}

// ---------------------------------------------------------------- convolution

NodeId Graph::conv1d_causal(NodeId x, NodeId w, NodeId b, int64_t stride, int64_t left_pad) {
    const Tensor& X = val(x);
    const Tensor& W = val(w);
    const Tensor& B = val(b);
    require_2d(X, "conv1d_causal");
    if (W.ndim() != 3) throw std::invalid_argument("conv1d_causal: weight must be [K, Cin, Cout]");
    int64_t T = X.shape[0], cin = X.shape[1];
    int64_t K = W.shape[0], cout = W.shape[2];
    if (W.shape[1] != cin) throw std::invalid_argument("conv1d_causal: Cin mismatch");
    if (B.ndim() != 1 || B.shape[0] != cout) throw std::invalid_argument("conv1d_causal: bias shape mismatch");
    if (stride < 1 || left_pad < 0) throw std::invalid_argument("conv1d_causal: bad stride/pad");
    int64_t span = T + left_pad - K;
    if (span < 0 || span % stride != 0)
        throw std::invalid_argument("conv1d_causal: length " + std::to_string(T) + " incompatible with K=" +
                                    std::to_string(K) + " stride=" + std::to_string(stride) +
                                    " pad=" + std::to_string(left_pad));
    int64_t Tout = span / stride + 1;
    Tensor out({Tout, cout});
    for (int64_t o = 0; o < Tout; ++o) {
        double* orow = &out.data[static_cast<size_t>(o * cout)];
        for (int64_t j = 0; j < cout; ++j) orow[j] = B.data[static_cast<size_t>(j)];
        for (int64_t k = 0; k < K; ++k) {
            int64_t t = o * stride + k - left_pad;
            if (t < 0 || t >= T) continue;
            const double* xrow = &X.data[static_cast<size_t>(t * cin)];
            const double* wk = &W.data[static_cast<size_t>(k * cin * cout)];
            for (int64_t ci = 0; ci < cin; ++ci) {
                double xv = xrow[ci];
                if (xv == 0.0) continue;
                const double* wrow = &wk[ci * cout];
                for (int64_t j = 0; j < cout; ++j) orow[j] += xv * wrow[j];
            }
        }
    }
    bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg)
        nodes_[static_cast<size_t>(id)].backprop = [id, x, w, b, stride, left_pad, T, cin, K, cout, Tout](Graph& g) {
            const Tensor& GO = g.grad(id);
            const Tensor& X2 = g.val(x);
            const Tensor& W2 = g.val(w);
            if (g.requires_grad(b)) {
                Tensor GB({cout});
                for (int64_t o = 0; o < Tout; ++o)
                    for (int64_t j = 0; j < cout; ++j) GB.data[static_cast<size_t>(j)] += GO.data[static_cast<size_t>(o * cout + j)];
                g.accum(b, GB);
            }
            if (g.requires_grad(w)) {
                Tensor GW({K, cin, cout});
                for (int64_t o = 0; o < Tout; ++o)
                    for (int64_t k = 0; k < K; ++k) {
                        int64_t t = o * stride + k - left_pad;
                        if (t < 0 || t >= T) continue;
                        for (int64_t ci = 0; ci < cin; ++ci) {
                            double xv = X2.data[static_cast<size_t>(t * cin + ci)];
                            if (xv == 0.0) continue;
                            for (int64_t j = 0; j < cout; ++j)
                                GW.data[static_cast<size_t>((k * cin + ci) * cout + j)] +=
                                    xv * GO.data[static_cast<size_t>(o * cout + j)];
                        }
                    }
                g.accum(w, GW);
            }
            if (g.requires_grad(x)) {
                Tensor GX({T, cin});
                for (int64_t o = 0; o < Tout; ++o)
                    for (int64_t k = 0; k < K; ++k) {
                        int64_t t = o * stride + k - left_pad;
                        if (t < 0 || t >= T) continue;
                        for (int64_t ci = 0; ci < cin; ++ci) {
                            double s = 0.0;
                            for (int64_t j = 0; j < cout; ++j)
                                s += W2.data[static_cast<size_t>((k * cin + ci) * cout + j)] *
                                     GO.data[static_cast<size_t>(o * cout + j)];
                            GX.data[static_cast<size_t>(t * cin + ci)] += s;
                        }
                    }
                g.accum(x, GX);
            }
        };
    return id;
}

// ------------------------------------------------------------------ ParamStore

void ParamStore::add(const std::string& name, Tensor init) {
    if (has(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    order.push_back(name);
    grad[name] = Tensor(init.shape);
    value[name] = std::move(init);
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = value.find(name);
    if (it == value.end()) throw std::out_of_range("ParamStore: unknown parameter " + name);
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = value.find(name);
    if (it == value.end()) throw std::out_of_range("ParamStore: unknown parameter " + name);
    return it->second;
}

void ParamStore::zero_grad() {
    for (auto& kv : grad) std::fill(kv.second.data.begin(), kv.second.data.end(), 0.0);
}

int64_t ParamStore::numel() const {
    int64_t n = 0;
    for (const auto& name : order) n += value.at(name).numel();
    return n;
}

NodeId Binder::operator()(const std::string& name) {
    NodeId id = g_.input(ps_.at(name), true);
    bound_.emplace_back(name, id);
    return id;
}

void Binder::harvest() {
    for (const auto& [name, id] : bound_) {
        const Tensor& gsrc = g_.grad(id);
        if (gsrc.data.empty()) continue;
        Tensor& dst = ps_.grad.at(name);
        for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += gsrc.data[i];
    }
}

void AdamOptimizer::step(ParamStore& ps) {
    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (const auto& name : ps.order) {
        Tensor& val = ps.value.at(name);
        const Tensor& g = ps.grad.at(name);
        Tensor& mi = m.try_emplace(name, Tensor(val.shape)).first->second;
        Tensor& vi = v.try_emplace(name, Tensor(val.shape)).first->second;
        for (size_t i = 0; i < val.data.size(); ++i) {
            double gi = g.data[i];
            mi.data[i] = beta1 * mi.data[i] + (1.0 - beta1) * gi;
            vi.data[i] = beta2 * vi.data[i] + (1.0 - beta2) * gi * gi;
            double mhat = mi.data[i] / bc1;
            double vhat = vi.data[i] / bc2;
            val.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace a2v
