#ifndef A2V_CORE_GRAPH_HPP
#define A2V_CORE_GRAPH_HPP

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "tensor.hpp"

namespace a2v {

using NodeId = int32_t;

// Eager reverse-mode autodiff over Tensor. Nodes are appended in evaluation
// order, so creation order is already a topological order and backward() is
// a single reverse sweep. One Graph per training step; everything is
// single-threaded and deterministic.
class Graph {
public:
    NodeId input(Tensor v, bool requires_grad = false);

    const Tensor& val(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
    Tensor& grad(NodeId id) { return nodes_[static_cast<size_t>(id)].grad; }
    bool requires_grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
    size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss)=1 and sweeps in reverse creation order.
    // loss must be a scalar node (numel 1).
    void backward(NodeId loss);

    // ---- elementwise / scalar ----
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId add_scalar(NodeId a, double c);
    NodeId exp(NodeId a);
    NodeId log(NodeId a);
    NodeId sqrt(NodeId a);
    NodeId gelu(NodeId a);

    // ---- linear algebra ----
    NodeId matmul(NodeId a, NodeId b);    // [m,k] x [k,n] -> [m,n]
    NodeId transpose(NodeId a);           // [m,n] -> [n,m]
    NodeId add_rowvec(NodeId a, NodeId b);  // [m,n] + [n]
    NodeId div_rows(NodeId a, NodeId d);    // [m,n] rows divided by [m]

    // ---- shape / movement ----
    NodeId reshape(NodeId a, std::vector<int64_t> shape);
    NodeId slice_rows(NodeId a, int64_t r0, int64_t r1);
    NodeId slice_cols(NodeId a, int64_t c0, int64_t c1);
    NodeId concat_rows(const std::vector<NodeId>& parts);
    NodeId concat_cols(const std::vector<NodeId>& parts);
    NodeId repeat_rows(NodeId a, int64_t times);  // each row repeated `times` consecutively
    // y.data[i] = a.data[idx[i]]; backward scatter-adds. idx entries must be valid.
    NodeId gather(NodeId a, std::shared_ptr<const std::vector<int64_t>> idx, std::vector<int64_t> out_shape);

    // ---- rows / reductions ----
    NodeId softmax_rows(NodeId a);
    NodeId layernorm_rows(NodeId a, double eps = 1e-6);
    NodeId sum_rows(NodeId a);  // [m,n] -> [m]
    NodeId sum_all(NodeId a);   // -> [1]
    NodeId mean_all(NodeId a);  // -> [1]

    // ---- convolution ----
    // x [T, Cin], w [K, Cin, Cout], b [Cout]; zero left-padding.
    // out[o, co] = b[co] + sum_{k,ci} xpad[o*stride + k, ci] * w[k, ci, co]
    NodeId conv1d_causal(NodeId x, NodeId w, NodeId b, int64_t stride, int64_t left_pad);

    // mean squared difference over all elements: [1]
    NodeId mse(NodeId a, NodeId b);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::function<void(Graph&)> backprop;
    };

    NodeId push(Tensor value, bool requires_grad, std::function<void(Graph&)> backprop);
    void accum(NodeId id, const Tensor& g);
    void accum_at(NodeId id, int64_t flat_index, double g);

    std::vector<Node> nodes_;
};

// Named parameter tensors with persistent gradient buffers. Insertion order
// is the iteration order everywhere (checkpointing, Adam), which keeps runs
// deterministic.
struct ParamStore {
    std::vector<std::string> order;
    std::unordered_map<std::string, Tensor> value;
    std::unordered_map<std::string, Tensor> grad;

    bool has(const std::string& name) const { return value.count(name) > 0; }
    void add(const std::string& name, Tensor init);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    void zero_grad();
    int64_t numel() const;
};

// Binds parameters into a graph as grad-leaves and harvests their gradients
// after backward().
class Binder {
public:
    Binder(Graph& g, ParamStore& ps) : g_(g), ps_(ps) {}
    NodeId operator()(const std::string& name);
    void harvest();

private:
    Graph& g_;
    ParamStore& ps_;
    std::vector<std::pair<std::string, NodeId>> bound_;
};

struct AdamOptimizer {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t t = 0;
    std::unordered_map<std::string, Tensor> m, v;

    explicit AdamOptimizer(double lr_) : lr(lr_) {}
    void step(ParamStore& ps);
};

}  // namespace a2v

#endif
