#pragma once

#include <string>
#include <vector>

#include "agrg/tensor.hpp"

namespace agrg {

// A named trainable (or frozen) parameter. Gradients accumulate additively
// into `grad` across backward passes until zero_grad() is called.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor(value.shape);
        value.requires_grad = true;
    }

    bool trainable() const { return value.requires_grad; }
    void set_trainable(bool t) { value.requires_grad = t; }
    void zero_grad() { grad.zero(); }
};

enum class Op {
    Leaf,      // bound to a Param
    Input,     // constant data, no gradient
    MatMul,    // a * b
    MatMulBT,  // a * b^T
    Add,       // elementwise, same shape
    Mul,       // elementwise, same shape
    BiasAdd,   // a (r x c) + b (1 x c) broadcast over rows
    Scale,     // a * daux[0]
    Relu,
    Gelu,     // tanh approximation
    Sigmoid,
    LayerNorm,    // inputs: x, gain (1 x c), shift (1 x c); per-row over last axis
    SoftmaxRows,  // row-wise softmax with max subtraction
    Embed,        // a = table (V x d), iaux = ids; output len(ids) x d
    ConcatRows,
    ConcatCols,
    SliceRows,  // iaux = {begin, end}
    SliceCols,  // iaux = {begin, end}
    Reshape,
    Sum,       // full reduction to 1x1
    Mean,      // full reduction to 1x1
    MeanRows,  // column means: (r x c) -> (1 x c)
    Bce,       // elementwise binary cross-entropy vs labels in daux; probs in (0,1)
    CeRows,    // summed token cross-entropy: logits (T x V), targets iaux (-1 = ignore)
};

// Append-only computation tape. Operations evaluate eagerly on construction;
// backward() walks the tape in reverse and accumulates leaf gradients into
// the bound Params. A recorded graph can be re-evaluated after perturbing
// leaf values (recompute), which is what the finite-difference check uses.
class Graph {
public:
    struct Node {
        Op op;
        int a = -1, b = -1, c = -1;
        bool needs_grad = false;  // any trainable leaf upstream
        Tensor val;
        std::vector<int> iaux;
        std::vector<double> daux;   // op constants (scale factor, bce labels)
        std::vector<double> saved;  // recomputed stats (layer norm mean/rstd)
        Param* param = nullptr;
    };

    int leaf(Param& p);
    int input(Tensor t);
    int input_row(std::vector<double> v) { return input(Tensor::row(std::move(v))); }

    int matmul(int a, int b);
    int matmul_bt(int a, int b);
    int add(int a, int b);
    int mul(int a, int b);
    int bias_add(int a, int b);
    int scale(int a, double s);
    int relu(int a);
    int gelu(int a);
    int sigmoid(int a);
    int layer_norm(int x, int gain, int shift);
    int softmax_rows(int a);
    int embed(int table, const std::vector<int>& ids);
    int concat_rows(int a, int b);
    int concat_cols(int a, int b);
    int slice_rows(int a, int begin, int end);
    int slice_cols(int a, int begin, int end);
    int reshape(int a, std::vector<int> shape);
    int sum(int a);
    int mean(int a);
    int mean_rows(int a);
    int bce(int probs, const std::vector<double>& labels);
    int ce_rows(int logits, const std::vector<int>& targets);

    const Tensor& value(int id) const { return nodes_[id].val; }
    size_t size() const { return nodes_.size(); }

    // Accumulates dLoss/dLeaf into each trainable bound Param's grad.
    void backward(int loss);

    // Gradient w.r.t. any node from the most recent backward() call.
    const Tensor& node_grad(int id) const { return grads_[id]; }

    // Re-evaluate the whole tape (leaves refresh from their Params).
    void recompute();

    double scalar(int id) const { return nodes_[id].val.data[0]; }

private:
    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;

    int push(Node n);
    void eval(Node& n);
    void backward_node(int id);
};

// Max relative error between analytic gradient of `loss` w.r.t. `param` and
// central finite differences with step delta. The graph must have been built
// with `param` bound as a leaf.
double finite_diff_check(Graph& g, int loss, Param& param, double delta = 1e-5);

// Scalar BCE as specified: probabilities clamped to [1e-7, 1 - 1e-7].
double bce_loss(double y_hat, double y);
constexpr double kBceClamp = 1e-7;

// Row-wise softmax of a 2D tensor (standalone helper mirroring the graph op).
Tensor softmax_rows(const Tensor& x);

// Uniform(+-sqrt(6/(fan_in+fan_out))) initialization, biases zero elsewhere.
Tensor glorot_uniform(int fan_in, int fan_out, class SplitMix64& rng);

}  // namespace agrg
