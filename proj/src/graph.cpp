#include "agrg/graph.hpp"

#include <cmath>
#include <stdexcept>

#include "agrg/kernels.hpp"
#include "agrg/rng.hpp"

namespace agrg {

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

void softmax_row(const double* x, double* y, int n) {
    double m = x[0];
    for (int i = 1; i < n; ++i)
        if (x[i] > m) m = x[i];
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        y[i] = std::exp(x[i] - m);
        s += y[i];
    }
    for (int i = 0; i < n; ++i) y[i] /= s;
}

}  // namespace

double bce_loss(double y_hat, double y) {
    if (y != 0.0 && y != 1.0) throw std::invalid_argument("bce label must be 0 or 1");
    double p = y_hat;
    if (p < kBceClamp) p = kBceClamp;
    if (p > 1.0 - kBceClamp) p = 1.0 - kBceClamp;
    return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

Tensor softmax_rows(const Tensor& x) {
    if (x.numel() == 0) throw std::invalid_argument("softmax of empty tensor");
    if (!x.all_finite()) throw std::runtime_error("softmax of non-finite input");
    Tensor out(x.shape);
    int r = x.rows(), c = x.cols();
    for (int i = 0; i < r; ++i) softmax_row(&x.data[(size_t)i * c], &out.data[(size_t)i * c], c);
    return out;
}

Tensor glorot_uniform(int fan_in, int fan_out, SplitMix64& rng) {
    double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor t = Tensor::matrix(fan_in, fan_out);
    for (double& v : t.data) v = rng.uniform(-limit, limit);
    return t;
}

int Graph::push(Node n) {
    if (n.op == Op::Leaf) {
        n.needs_grad = n.param->trainable();
    } else if (n.op != Op::Input) {
        auto up = [&](int id) { return id >= 0 && nodes_[id].needs_grad; };
        n.needs_grad = up(n.a) || up(n.b) || up(n.c);
    }
    eval(n);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Graph::leaf(Param& p) {
    Node n;
    n.op = Op::Leaf;
    n.param = &p;
    return push(std::move(n));
}

int Graph::input(Tensor t) {
    Node n;
    n.op = Op::Input;
    n.val = std::move(t);
    return push(std::move(n));
}

int Graph::matmul(int a, int b) {
    const Tensor& A = nodes_[a].val;
    const Tensor& B = nodes_[b].val;
    if (A.cols() != B.rows())
        throw std::invalid_argument("matmul shape mismatch " + shape_str(A.shape) + " * " + shape_str(B.shape));
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    return push(std::move(n));
}

int Graph::matmul_bt(int a, int b) {
    const Tensor& A = nodes_[a].val;
    const Tensor& B = nodes_[b].val;
    if (A.cols() != B.cols())
        throw std::invalid_argument("matmul_bt shape mismatch " + shape_str(A.shape) + " * " + shape_str(B.shape) + "^T");
    Node n;
    n.op = Op::MatMulBT;
    n.a = a;
    n.b = b;
    return push(std::move(n));
}

int Graph::add(int a, int b) {
    if (!nodes_[a].val.same_shape(nodes_[b].val)) throw std::invalid_argument("add shape mismatch");
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    return push(std::move(n));
}

int Graph::mul(int a, int b) {
    if (!nodes_[a].val.same_shape(nodes_[b].val)) throw std::invalid_argument("mul shape mismatch");
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    return push(std::move(n));
}

int Graph::bias_add(int a, int b) {
    if (nodes_[b].val.rows() != 1 || nodes_[b].val.cols() != nodes_[a].val.cols())
        throw std::invalid_argument("bias_add wants a 1 x cols bias");
    Node n;
    n.op = Op::BiasAdd;
    n.a = a;
    n.b = b;
    return push(std::move(n));
}

int Graph::scale(int a, double s) {
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.daux = {s};
    return push(std::move(n));
}

int Graph::relu(int a) {
    Node n;
    n.op = Op::Relu;
    n.a = a;
    return push(std::move(n));
}

int Graph::gelu(int a) {
    Node n;
    n.op = Op::Gelu;
    n.a = a;
    return push(std::move(n));
}

int Graph::sigmoid(int a) {
    Node n;
    n.op = Op::Sigmoid;
    n.a = a;
    return push(std::move(n));
}

int Graph::layer_norm(int x, int gain, int shift) {
    int c = nodes_[x].val.cols();
    if (nodes_[gain].val.cols() != c || nodes_[shift].val.cols() != c)
        throw std::invalid_argument("layer_norm gain/shift must be 1 x cols");
    Node n;
    n.op = Op::LayerNorm;
    n.a = x;
    n.b = gain;
    n.c = shift;
    return push(std::move(n));
}

int Graph::softmax_rows(int a) {
    if (nodes_[a].val.numel() == 0) throw std::invalid_argument("softmax of empty tensor");
    Node n;
    n.op = Op::SoftmaxRows;
    n.a = a;
    return push(std::move(n));
}

int Graph::embed(int table, const std::vector<int>& ids) {
    const Tensor& t = nodes_[table].val;
    for (int id : ids)
        if (id < 0 || id >= t.rows()) throw std::invalid_argument("embed id out of range");
    Node n;
    n.op = Op::Embed;
    n.a = table;
    n.iaux = ids;
    return push(std::move(n));
}

int Graph::concat_rows(int a, int b) {
    if (nodes_[a].val.cols() != nodes_[b].val.cols()) throw std::invalid_argument("concat_rows col mismatch");
    Node n;
    n.op = Op::ConcatRows;
    n.a = a;
    n.b = b;
    return push(std::move(n));
}

int Graph::concat_cols(int a, int b) {
    if (nodes_[a].val.rows() != nodes_[b].val.rows()) throw std::invalid_argument("concat_cols row mismatch");
    Node n;
    n.op = Op::ConcatCols;
    n.a = a;
    n.b = b;
    return push(std::move(n));
}

int Graph::slice_rows(int a, int begin, int end) {
    if (begin < 0 || end > nodes_[a].val.rows() || begin >= end) throw std::invalid_argument("slice_rows bounds");
    Node n;
    n.op = Op::SliceRows;
    n.a = a;
    n.iaux = {begin, end};
    return push(std::move(n));
}

int Graph::slice_cols(int a, int begin, int end) {
    if (begin < 0 || end > nodes_[a].val.cols() || begin >= end) throw std::invalid_argument("slice_cols bounds");
    Node n;
    n.op = Op::SliceCols;
    n.a = a;
    n.iaux = {begin, end};
    return push(std::move(n));
}

int Graph::reshape(int a, std::vector<int> shape) {
    if (Tensor::numel_of(shape) != nodes_[a].val.numel()) throw std::invalid_argument("reshape numel mismatch");
    Node n;
    n.op = Op::Reshape;
    n.a = a;
    n.iaux.assign(shape.begin(), shape.end());
    return push(std::move(n));
}

int Graph::sum(int a) {
    Node n;
    n.op = Op::Sum;
    n.a = a;
    return push(std::move(n));
}

int Graph::mean(int a) {
    Node n;
    n.op = Op::Mean;
    n.a = a;
    return push(std::move(n));
}

int Graph::mean_rows(int a) {
    Node n;
    n.op = Op::MeanRows;
    n.a = a;
    return push(std::move(n));
}

int Graph::bce(int probs, const std::vector<double>& labels) {
    if ((int64_t)labels.size() != nodes_[probs].val.numel()) throw std::invalid_argument("bce label count mismatch");
    for (double y : labels)
        if (y != 0.0 && y != 1.0) throw std::invalid_argument("bce label must be 0 or 1");
    Node n;
    n.op = Op::Bce;
    n.a = probs;
    n.daux = labels;
    return push(std::move(n));
}

int Graph::ce_rows(int logits, const std::vector<int>& targets) {
    const Tensor& L = nodes_[logits].val;
    if ((int)targets.size() != L.rows()) throw std::invalid_argument("ce_rows target count mismatch");
    for (int t : targets)
        if (t < -1 || t >= L.cols()) throw std::invalid_argument("ce_rows target out of range");
    Node n;
    n.op = Op::CeRows;
    n.a = logits;
    n.iaux = targets;
    return push(std::move(n));
}

void Graph::eval(Node& n) {
    switch (n.op) {
        case Op::Leaf:
            n.val = n.param->value;
            break;
        case Op::Input:
            break;
        case Op::MatMul: {
            const Tensor& A = nodes_[n.a].val;
            const Tensor& B = nodes_[n.b].val;
            n.val = Tensor::matrix(A.rows(), B.cols());
            kern::matmul(A.data.data(), B.data.data(), n.val.data.data(), A.rows(), A.cols(), B.cols());
            break;
        }
        case Op::MatMulBT: {
            const Tensor& A = nodes_[n.a].val;
            const Tensor& B = nodes_[n.b].val;
            n.val = Tensor::matrix(A.rows(), B.rows());
            kern::matmul_bt(A.data.data(), B.data.data(), n.val.data.data(), A.rows(), A.cols(), B.rows());
            break;
        }
        case Op::Add: {
            const Tensor& A = nodes_[n.a].val;
            const Tensor& B = nodes_[n.b].val;
            n.val = Tensor(A.shape);
            for (int64_t i = 0; i < A.numel(); ++i) n.val.data[i] = A.data[i] + B.data[i];
            break;
        }
        case Op::Mul: {
            const Tensor& A = nodes_[n.a].val;
            const Tensor& B = nodes_[n.b].val;
            n.val = Tensor(A.shape);
            for (int64_t i = 0; i < A.numel(); ++i) n.val.data[i] = A.data[i] * B.data[i];
            break;
        }
        case Op::BiasAdd: {
            const Tensor& A = nodes_[n.a].val;
            const Tensor& B = nodes_[n.b].val;
            n.val = Tensor(A.shape);
            int r = A.rows(), c = A.cols();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) n.val.data[(size_t)i * c + j] = A.data[(size_t)i * c + j] + B.data[j];
            break;
        }
        case Op::Scale: {
            const Tensor& A = nodes_[n.a].val;
            n.val = Tensor(A.shape);
            double s = n.daux[0];
            for (int64_t i = 0; i < A.numel(); ++i) n.val.data[i] = s * A.data[i];
            break;
        }
        case Op::Relu: {
            const Tensor& A = nodes_[n.a].val;
            n.val = Tensor(A.shape);
            for (int64_t i = 0; i < A.numel(); ++i) n.val.data[i] = A.data[i] > 0.0 ? A.data[i] : 0.0;
            break;
        }
        case Op::Gelu: {
            const Tensor& A = nodes_[n.a].val;
            n.val = Tensor(A.shape);
            for (int64_t i = 0; i < A.numel(); ++i) {
                double x = A.data[i];
                double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
                n.val.data[i] = 0.5 * x * (1.0 + t);
            }
            break;
        }
        case Op::Sigmoid: {
            const Tensor& A = nodes_[n.a].val;
            n.val = Tensor(A.shape);
            for (int64_t i = 0; i < A.numel(); ++i) n.val.data[i] = 1.0 / (1.0 + std::exp(-A.data[i]));
            break;
        }
        case Op::LayerNorm: {
            const Tensor& X = nodes_[n.a].val;
            const Tensor& G = nodes_[n.b].val;
            const Tensor& S = nodes_[n.c].val;
            int r = X.rows(), c = X.cols();
            n.val = Tensor(X.shape);
            n.saved.assign((size_t)r * 2, 0.0);
            for (int i = 0; i < r; ++i) {
                const double* x = &X.data[(size_t)i * c];
                double mu = 0.0;
                for (int j = 0; j < c; ++j) mu += x[j];
                mu /= c;
                double var = 0.0;
                for (int j = 0; j < c; ++j) var += (x[j] - mu) * (x[j] - mu);
                var /= c;
                double rstd = 1.0 / std::sqrt(var + 1e-5);
                n.saved[(size_t)i * 2] = mu;
                n.saved[(size_t)i * 2 + 1] = rstd;
                for (int j = 0; j < c; ++j)
                    n.val.data[(size_t)i * c + j] = G.data[j] * ((x[j] - mu) * rstd) + S.data[j];
            }
            break;
        }
        case Op::SoftmaxRows: {
            const Tensor& A = nodes_[n.a].val;
            if (!A.all_finite()) throw std::runtime_error("softmax of non-finite input");
            n.val = Tensor(A.shape);
            int r = A.rows(), c = A.cols();
            for (int i = 0; i < r; ++i) softmax_row(&A.data[(size_t)i * c], &n.val.data[(size_t)i * c], c);
            break;
        }
        case Op::Embed: {
            const Tensor& T = nodes_[n.a].val;
            int d = T.cols();
            n.val = Tensor::matrix((int)n.iaux.size(), d);
            for (size_t r = 0; r < n.iaux.size(); ++r)
                for (int j = 0; j < d; ++j) n.val.data[r * d + j] = T.data[(size_t)n.iaux[r] * d + j];
            break;
        }
        case Op::ConcatRows: {
            const Tensor& A = nodes_[n.a].val;
            const Tensor& B = nodes_[n.b].val;
            n.val = Tensor::matrix(A.rows() + B.rows(), A.cols());
            std::copy(A.data.begin(), A.data.end(), n.val.data.begin());
            std::copy(B.data.begin(), B.data.end(), n.val.data.begin() + A.numel());
            break;
        }
        case Op::ConcatCols: {
            const Tensor& A = nodes_[n.a].val;
            const Tensor& B = nodes_[n.b].val;
            int r = A.rows(), ca = A.cols(), cb = B.cols();
            n.val = Tensor::matrix(r, ca + cb);
            for (int i = 0; i < r; ++i) {
                for (int j = 0; j < ca; ++j) n.val.data[(size_t)i * (ca + cb) + j] = A.data[(size_t)i * ca + j];
                for (int j = 0; j < cb; ++j) n.val.data[(size_t)i * (ca + cb) + ca + j] = B.data[(size_t)i * cb + j];
            }
            break;
        }
        case Op::SliceRows: {
            const Tensor& A = nodes_[n.a].val;
            int b = n.iaux[0], e = n.iaux[1], c = A.cols();
            n.val = Tensor::matrix(e - b, c);
            std::copy(A.data.begin() + (size_t)b * c, A.data.begin() + (size_t)e * c, n.val.data.begin());
            break;
        }
        case Op::SliceCols: {
            const Tensor& A = nodes_[n.a].val;
            int b = n.iaux[0], e = n.iaux[1], r = A.rows(), c = A.cols();
            n.val = Tensor::matrix(r, e - b);
            for (int i = 0; i < r; ++i)
                for (int j = b; j < e; ++j) n.val.data[(size_t)i * (e - b) + (j - b)] = A.data[(size_t)i * c + j];
            break;
        }
        case Op::Reshape: {
            const Tensor& A = nodes_[n.a].val;
            n.val.shape.assign(n.iaux.begin(), n.iaux.end());
            n.val.data = A.data;
            break;
        }
        case Op::Sum: {
            const Tensor& A = nodes_[n.a].val;
            double s = 0.0;
            for (double v : A.data) s += v;
            n.val = Tensor::scalar(s);
            break;
        }
        case Op::Mean: {
            const Tensor& A = nodes_[n.a].val;
            double s = 0.0;
            for (double v : A.data) s += v;
            n.val = Tensor::scalar(s / A.numel());
            break;
        }
        case Op::MeanRows: {
            const Tensor& A = nodes_[n.a].val;
            int r = A.rows(), c = A.cols();
            n.val = Tensor::matrix(1, c);
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) n.val.data[j] += A.data[(size_t)i * c + j];
            for (int j = 0; j < c; ++j) n.val.data[j] /= r;
            break;
        }
        case Op::Bce: {
            const Tensor& P = nodes_[n.a].val;
            if (!P.all_finite()) throw std::runtime_error("bce of non-finite input");
            n.val = Tensor(P.shape);
            for (int64_t i = 0; i < P.numel(); ++i) n.val.data[i] = bce_loss(P.data[i], n.daux[i]);
            break;
        }
        case Op::CeRows: {
            const Tensor& L = nodes_[n.a].val;
            if (!L.all_finite()) throw std::runtime_error("cross-entropy of non-finite logits");
            int r = L.rows(), c = L.cols();
            double total = 0.0;
            std::vector<double> sm(c);
            for (int i = 0; i < r; ++i) {
                int t = n.iaux[i];
                if (t < 0) continue;
                const double* x = &L.data[(size_t)i * c];
                double m = x[0];
                for (int j = 1; j < c; ++j)
                    if (x[j] > m) m = x[j];
                double lse = 0.0;
                for (int j = 0; j < c; ++j) lse += std::exp(x[j] - m);
                total += m + std::log(lse) - x[t];
            }
            n.val = Tensor::scalar(total);
            break;
        }
    }
}

void Graph::backward(int loss) {
    if (nodes_[loss].val.numel() != 1) throw std::invalid_argument("backward wants a scalar loss node");
    grads_.assign(nodes_.size(), Tensor());
    for (size_t i = 0; i <= (size_t)loss; ++i) grads_[i] = Tensor(nodes_[i].val.shape);
    grads_[loss].data[0] = 1.0;
    for (int id = loss; id >= 0; --id)
        if (nodes_[id].needs_grad) backward_node(id);
}

void Graph::backward_node(int id) {
    Node& n = nodes_[id];
    const Tensor& g = grads_[id];
    switch (n.op) {
        case Op::Leaf:
            if (n.param->trainable())
                for (int64_t i = 0; i < g.numel(); ++i) n.param->grad.data[i] += g.data[i];
            break;
        case Op::Input:
            break;
        case Op::MatMul: {
            const Tensor& A = nodes_[n.a].val;
            const Tensor& B = nodes_[n.b].val;
            if (nodes_[n.a].needs_grad)
                kern::matmul_bt_acc(g.data.data(), B.data.data(), grads_[n.a].data.data(), A.rows(), B.cols(), A.cols());
            if (nodes_[n.b].needs_grad)
                kern::matmul_at_acc(A.data.data(), g.data.data(), grads_[n.b].data.data(), A.cols(), A.rows(), B.cols());
            break;
        }
        case Op::MatMulBT: {
            const Tensor& A = nodes_[n.a].val;
            const Tensor& B = nodes_[n.b].val;
            if (nodes_[n.a].needs_grad)
                kern::matmul_acc(g.data.data(), B.data.data(), grads_[n.a].data.data(), A.rows(), B.rows(), A.cols());
            if (nodes_[n.b].needs_grad)
                kern::matmul_at_acc(g.data.data(), A.data.data(), grads_[n.b].data.data(), B.rows(), A.rows(), A.cols());
            break;
        }
        case Op::Add:
            for (int64_t i = 0; i < g.numel(); ++i) {
                grads_[n.a].data[i] += g.data[i];
                grads_[n.b].data[i] += g.data[i];
            }
            break;
        case Op::Mul: {
            const Tensor& A = nodes_[n.a].val;
            const Tensor& B = nodes_[n.b].val;
            for (int64_t i = 0; i < g.numel(); ++i) {
                grads_[n.a].data[i] += g.data[i] * B.data[i];
                grads_[n.b].data[i] += g.data[i] * A.data[i];
            }
            break;
        }
        case Op::BiasAdd: {
            int r = g.rows(), c = g.cols();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) {
                    grads_[n.a].data[(size_t)i * c + j] += g.data[(size_t)i * c + j];
                    grads_[n.b].data[j] += g.data[(size_t)i * c + j];
                }
            break;
        }
        case Op::Scale: {
            double s = n.daux[0];
            for (int64_t i = 0; i < g.numel(); ++i) grads_[n.a].data[i] += s * g.data[i];
            break;
        }
        case Op::Relu: {
            const Tensor& A = nodes_[n.a].val;
            for (int64_t i = 0; i < g.numel(); ++i)
                if (A.data[i] > 0.0) grads_[n.a].data[i] += g.data[i];
            break;
        }
        case Op::Gelu: {
            const Tensor& A = nodes_[n.a].val;
            for (int64_t i = 0; i < g.numel(); ++i) {
                double x = A.data[i];
                double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
                double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
                grads_[n.a].data[i] += g.data[i] * d;
            }
            break;
        }
        case Op::Sigmoid: {
            for (int64_t i = 0; i < g.numel(); ++i) {
                double y = n.val.data[i];
                grads_[n.a].data[i] += g.data[i] * y * (1.0 - y);
            }
            break;
        }
        case Op::LayerNorm: {
            const Tensor& X = nodes_[n.a].val;
            const Tensor& G = nodes_[n.b].val;
            int r = X.rows(), c = X.cols();
            for (int i = 0; i < r; ++i) {
                double mu = n.saved[(size_t)i * 2];
                double rstd = n.saved[(size_t)i * 2 + 1];
                const double* x = &X.data[(size_t)i * c];
                const double* gy = &g.data[(size_t)i * c];
                double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                for (int j = 0; j < c; ++j) {
                    double xhat = (x[j] - mu) * rstd;
                    double dxhat = gy[j] * G.data[j];
                    mean_dxhat += dxhat;
                    mean_dxhat_xhat += dxhat * xhat;
                    grads_[n.b].data[j] += gy[j] * xhat;
                    grads_[n.c].data[j] += gy[j];
                }
                mean_dxhat /= c;
                mean_dxhat_xhat /= c;
                for (int j = 0; j < c; ++j) {
                    double xhat = (x[j] - mu) * rstd;
                    double dxhat = gy[j] * G.data[j];
                    grads_[n.a].data[(size_t)i * c + j] += rstd * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                }
            }
            break;
        }
        case Op::SoftmaxRows: {
            int r = n.val.rows(), c = n.val.cols();
            for (int i = 0; i < r; ++i) {
                const double* y = &n.val.data[(size_t)i * c];
                const double* gy = &g.data[(size_t)i * c];
                double dot = 0.0;
                for (int j = 0; j < c; ++j) dot += gy[j] * y[j];
                for (int j = 0; j < c; ++j) grads_[n.a].data[(size_t)i * c + j] += y[j] * (gy[j] - dot);
            }
            break;
        }
        case Op::Embed: {
            int d = n.val.cols();
            for (size_t r = 0; r < n.iaux.size(); ++r)
                for (int j = 0; j < d; ++j)
                    grads_[n.a].data[(size_t)n.iaux[r] * d + j] += g.data[r * d + j];
            break;
        }
        case Op::ConcatRows: {
            int64_t na = nodes_[n.a].val.numel();
            for (int64_t i = 0; i < na; ++i) grads_[n.a].data[i] += g.data[i];
            for (int64_t i = 0; i < nodes_[n.b].val.numel(); ++i) grads_[n.b].data[i] += g.data[na + i];
            break;
        }
        case Op::ConcatCols: {
            int r = g.rows(), ca = nodes_[n.a].val.cols(), cb = nodes_[n.b].val.cols();
            for (int i = 0; i < r; ++i) {
                for (int j = 0; j < ca; ++j) grads_[n.a].data[(size_t)i * ca + j] += g.data[(size_t)i * (ca + cb) + j];
                for (int j = 0; j < cb; ++j) grads_[n.b].data[(size_t)i * cb + j] += g.data[(size_t)i * (ca + cb) + ca + j];
            }
            break;
        }
        case Op::SliceRows: {
            int b = n.iaux[0], c = n.val.cols();
            for (int64_t i = 0; i < n.val.numel(); ++i) grads_[n.a].data[(size_t)b * c + i] += g.data[i];
            break;
        }
        case Op::SliceCols: {
            int b = n.iaux[0], e = n.iaux[1], r = n.val.rows(), c = nodes_[n.a].val.cols();
            for (int i = 0; i < r; ++i)
                for (int j = b; j < e; ++j) grads_[n.a].data[(size_t)i * c + j] += g.data[(size_t)i * (e - b) + (j - b)];
            break;
        }
        case Op::Reshape:
            for (int64_t i = 0; i < g.numel(); ++i) grads_[n.a].data[i] += g.data[i];
            break;
        case Op::Sum: {
            double s = g.data[0];
            for (int64_t i = 0; i < grads_[n.a].numel(); ++i) grads_[n.a].data[i] += s;
            break;
        }
        case Op::Mean: {
            double s = g.data[0] / nodes_[n.a].val.numel();
            for (int64_t i = 0; i < grads_[n.a].numel(); ++i) grads_[n.a].data[i] += s;
            break;
        }
        case Op::MeanRows: {
            int r = nodes_[n.a].val.rows(), c = nodes_[n.a].val.cols();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) grads_[n.a].data[(size_t)i * c + j] += g.data[j] / r;
            break;
        }
        case Op::Bce: {
            const Tensor& P = nodes_[n.a].val;
            for (int64_t i = 0; i < g.numel(); ++i) {
                double p = P.data[i];
                if (p <= kBceClamp || p >= 1.0 - kBceClamp) continue;  // clamp region is flat
                grads_[n.a].data[i] += g.data[i] * (p - n.daux[i]) / (p * (1.0 - p));
            }
            break;
        }
        case Op::CeRows: {
            const Tensor& L = nodes_[n.a].val;
            int r = L.rows(), c = L.cols();
            std::vector<double> sm(c);
            for (int i = 0; i < r; ++i) {
                int t = n.iaux[i];
                if (t < 0) continue;
                softmax_row(&L.data[(size_t)i * c], sm.data(), c);
                for (int j = 0; j < c; ++j)
                    grads_[n.a].data[(size_t)i * c + j] += g.data[0] * (sm[j] - (j == t ? 1.0 : 0.0));
            }
            break;
        }
    }
}

void Graph::recompute() {
    for (Node& n : nodes_) eval(n);
}

double finite_diff_check(Graph& g, int loss, Param& param, double delta) {
    Tensor saved_grad = param.grad;
    param.zero_grad();
    g.recompute();
    g.backward(loss);
    Tensor analytic = param.grad;

    double max_rel = 0.0;
    for (int64_t i = 0; i < param.value.numel(); ++i) {
        double orig = param.value.data[i];
        param.value.data[i] = orig + delta;
        g.recompute();
        double up = g.scalar(loss);
        param.value.data[i] = orig - delta;
        g.recompute();
        double down = g.scalar(loss);
        param.value.data[i] = orig;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw std::runtime_error("finite_diff_check: non-finite perturbed loss");
        double fd = (up - down) / (2.0 * delta);
        double an = analytic.data[i];
        double rel = std::fabs(an - fd) / (std::fabs(an) + std::fabs(fd) + 1e-12);
        if (rel > max_rel) max_rel = rel;
    }
    g.recompute();
    param.grad = saved_grad;
    return max_rel;
}

}  // namespace agrg
