#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "w2b/matrix.hpp"

// Batch-oriented differentiation engine for scalar potentials built from
// affine layers, CELU activations and quadratic forms.
//
// Two differentiation modes share one graph:
//   * gradient_wrt() appends new nodes that compute the gradient of a
//     per-row scalar with respect to an earlier node, so the gradient is
//     itself part of the graph and can appear inside a loss;
//   * backward() runs a numeric reverse pass over the whole graph and
//     accumulates d(loss)/d(params) for every registered parameter store.
namespace w2b::ad {

class DimensionError : public std::runtime_error {
public:
    DimensionError(const std::string& where, int expected, int actual)
        : std::runtime_error(where + ": expected dimension " + std::to_string(expected) + ", got " +
                             std::to_string(actual)),
          expected_dim(expected),
          actual_dim(actual) {}
    int expected_dim;
    int actual_dim;
};

class NonFiniteError : public std::runtime_error {
public:
    NonFiniteError(const std::string& tag, long index)
        : std::runtime_error("non-finite value in '" + tag + "' (index " + std::to_string(index) + ")"),
          where(tag),
          at(index) {}
    std::string where;
    long at;
};

enum class Constraint { free_, nonneg };

struct LayerDesc {
    std::string name;
    int rows = 0;
    int cols = 0;
    Constraint flag = Constraint::free_;
    std::size_t offset = 0;  // start in the flat array

    std::size_t count() const { return static_cast<std::size_t>(rows) * cols; }
};

// Flat parameter array partitioned into disjoint covering layer slices.
class ParamStore {
public:
    int add_layer(std::string name, int rows, int cols, Constraint flag) {
        LayerDesc d;
        d.name = std::move(name);
        d.rows = rows;
        d.cols = cols;
        d.flag = flag;
        d.offset = values_.size();
        values_.resize(values_.size() + d.count(), 0.0);
        layers_.push_back(std::move(d));
        return static_cast<int>(layers_.size()) - 1;
    }

    std::size_t size() const { return values_.size(); }
    int layer_count() const { return static_cast<int>(layers_.size()); }
    const LayerDesc& layer(int i) const { return layers_.at(i); }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    std::span<double> layer_values(int i) {
        const auto& d = layers_.at(i);
        return std::span<double>(values_).subspan(d.offset, d.count());
    }
    std::span<const double> layer_values(int i) const {
        const auto& d = layers_.at(i);
        return std::span<const double>(values_).subspan(d.offset, d.count());
    }

    // Clamp every nonnegative-flagged entry to [0, inf). Idempotent.
    void project_nonneg() {
        for (const auto& d : layers_) {
            if (d.flag != Constraint::nonneg) continue;
            double* p = values_.data() + d.offset;
            for (std::size_t i = 0; i < d.count(); ++i) p[i] = std::max(p[i], 0.0);
        }
    }

private:
    std::vector<double> values_;
    std::vector<LayerDesc> layers_;
};

enum class Op : std::uint8_t {
    input,
    param,
    constant,
    add,
    sub,
    mul,             // elementwise
    scalar_mul,      // by compile-time constant c
    mul_scalar_node, // by a 1x1 node
    celu,
    celu_prime,
    pos_part,
    group_sum_cols,  // sum groups of `group` adjacent columns
    repeat_cols,     // repeat each column `group` times
    sum_all,         // -> 1x1
    sum_rows,        // -> 1xC
    row_dot,         // -> Kx1
    mul_col_vec,     // scale row i by s(i,0)
    matmul,          // A * B
    matmul_bt,       // A * B^T
    matmul_ta,       // A^T * B
    add_row_vec,     // broadcast 1xC over rows
};

struct Node {
    Op op;
    int a = -1;
    int b = -1;
    int rows = 0;
    int cols = 0;
    double c = 0.0;  // scalar_mul coefficient
    int group = 0;   // group_sum_cols / repeat_cols factor
    int store = -1;  // param: store index
    int layer = -1;  // param: layer index
};

namespace detail {

inline double celu_fn(double u) { return u >= 0.0 ? u : std::expm1(u); }
inline double celu_d1(double u) { return u >= 0.0 ? 1.0 : std::exp(u); }
inline double celu_d2(double u) { return u >= 0.0 ? 0.0 : std::exp(u); }

}  // namespace detail

class Graph {
public:
    int add_store(const ParamStore& store) {
        for (std::size_t i = 0; i < stores_.size(); ++i)
            if (stores_[i] == &store) return static_cast<int>(i);
        stores_.push_back(&store);
        return static_cast<int>(stores_.size()) - 1;
    }

    int store_count() const { return static_cast<int>(stores_.size()); }
    const ParamStore& store(int i) const { return *stores_.at(i); }

    int input(int rows, int cols) {
        Node n{Op::input};
        n.rows = rows;
        n.cols = cols;
        const int id = push(n);
        values_[id] = Matrix(rows, cols);
        return id;
    }

    void set_input(int id, const Matrix& x) {
        const Node& n = nodes_.at(id);
        if (n.op != Op::input) throw std::logic_error("set_input: node is not an input");
        if (x.rows() != n.rows || x.cols() != n.cols) throw DimensionError("set_input", n.cols, x.cols());
        values_[id] = x;
    }

    int param(int store_idx, int layer_idx) {
        const auto& d = stores_.at(store_idx)->layer(layer_idx);
        Node n{Op::param};
        n.rows = d.rows;
        n.cols = d.cols;
        n.store = store_idx;
        n.layer = layer_idx;
        return push(n);
    }

    int param(const ParamStore& store, int layer_idx) { return param(add_store(store), layer_idx); }

    int constant(Matrix m) {
        Node n{Op::constant};
        n.rows = m.rows();
        n.cols = m.cols();
        const int id = push(n);
        values_[id] = std::move(m);
        return id;
    }

    int add(int a, int b) { return binary_same(Op::add, a, b, "add"); }
    int sub(int a, int b) { return binary_same(Op::sub, a, b, "sub"); }
    int mul(int a, int b) { return binary_same(Op::mul, a, b, "mul"); }

    int scalar_mul(int a, double c) {
        Node n{Op::scalar_mul};
        n.a = a;
        n.rows = nodes_[a].rows;
        n.cols = nodes_[a].cols;
        n.c = c;
        return push(n);
    }

    int mul_scalar_node(int a, int s) {
        if (nodes_.at(s).rows != 1 || nodes_.at(s).cols != 1)
            throw std::invalid_argument("mul_scalar_node: scalar operand must be 1x1");
        Node n{Op::mul_scalar_node};
        n.a = a;
        n.b = s;
        n.rows = nodes_[a].rows;
        n.cols = nodes_[a].cols;
        return push(n);
    }

    int celu(int a) { return unary_same(Op::celu, a); }
    int celu_prime(int a) { return unary_same(Op::celu_prime, a); }
    int pos_part(int a) { return unary_same(Op::pos_part, a); }

    int group_sum_cols(int a, int group) {
        const Node& p = nodes_.at(a);
        if (group <= 0 || p.cols % group != 0) throw std::invalid_argument("group_sum_cols: bad group factor");
        Node n{Op::group_sum_cols};
        n.a = a;
        n.rows = p.rows;
        n.cols = p.cols / group;
        n.group = group;
        return push(n);
    }

    int repeat_cols(int a, int group) {
        const Node& p = nodes_.at(a);
        if (group <= 0) throw std::invalid_argument("repeat_cols: bad group factor");
        Node n{Op::repeat_cols};
        n.a = a;
        n.rows = p.rows;
        n.cols = p.cols * group;
        n.group = group;
        return push(n);
    }

    int sum_all(int a) {
        Node n{Op::sum_all};
        n.a = a;
        n.rows = 1;
        n.cols = 1;
        return push(n);
    }

    int sum_rows(int a) {
        Node n{Op::sum_rows};
        n.a = a;
        n.rows = 1;
        n.cols = nodes_.at(a).cols;
        return push(n);
    }

    int row_dot(int a, int b) {
        const Node& pa = nodes_.at(a);
        const Node& pb = nodes_.at(b);
        if (pa.rows != pb.rows || pa.cols != pb.cols) throw DimensionError("row_dot", pa.cols, pb.cols);
        Node n{Op::row_dot};
        n.a = a;
        n.b = b;
        n.rows = pa.rows;
        n.cols = 1;
        return push(n);
    }

    int mul_col_vec(int a, int s) {
        const Node& pa = nodes_.at(a);
        const Node& ps = nodes_.at(s);
        if (ps.rows != pa.rows || ps.cols != 1) throw DimensionError("mul_col_vec", pa.rows, ps.rows);
        Node n{Op::mul_col_vec};
        n.a = a;
        n.b = s;
        n.rows = pa.rows;
        n.cols = pa.cols;
        return push(n);
    }

    int matmul(int a, int b) {
        const Node& pa = nodes_.at(a);
        const Node& pb = nodes_.at(b);
        if (pa.cols != pb.rows) throw DimensionError("matmul", pa.cols, pb.rows);
        Node n{Op::matmul};
        n.a = a;
        n.b = b;
        n.rows = pa.rows;
        n.cols = pb.cols;
        return push(n);
    }

    int matmul_bt(int a, int b) {
        const Node& pa = nodes_.at(a);
        const Node& pb = nodes_.at(b);
        if (pa.cols != pb.cols) throw DimensionError("matmul_bt", pa.cols, pb.cols);
        Node n{Op::matmul_bt};
        n.a = a;
        n.b = b;
        n.rows = pa.rows;
        n.cols = pb.rows;
        return push(n);
    }

    int matmul_ta(int a, int b) {
        const Node& pa = nodes_.at(a);
        const Node& pb = nodes_.at(b);
        if (pa.rows != pb.rows) throw DimensionError("matmul_ta", pa.rows, pb.rows);
        Node n{Op::matmul_ta};
        n.a = a;
        n.b = b;
        n.rows = pa.cols;
        n.cols = pb.cols;
        return push(n);
    }

    int add_row_vec(int a, int v) {
        const Node& pa = nodes_.at(a);
        const Node& pv = nodes_.at(v);
        if (pv.rows != 1 || pv.cols != pa.cols) throw DimensionError("add_row_vec", pa.cols, pv.cols);
        Node n{Op::add_row_vec};
        n.a = a;
        n.b = v;
        n.rows = pa.rows;
        n.cols = pa.cols;
        return push(n);
    }

    int node_count() const { return static_cast<int>(nodes_.size()); }
    const Node& node(int id) const { return nodes_.at(id); }

    // Appends nodes computing d(sum of entries of `scalar_per_row`)/d(node `wrt`).
    // Rows are independent, so for a Kx1 potential value the result row k is
    // the gradient of psi(x_k). Returns the id of the gradient node (KxD).
    int gradient_wrt(int scalar_per_row, int wrt) {
        const Node& s = nodes_.at(scalar_per_row);
        const Node& w = nodes_.at(wrt);
        if (s.cols != 1) throw std::invalid_argument("gradient_wrt: source must be a column of per-row scalars");

        const int frontier = static_cast<int>(nodes_.size());
        std::vector<char> dep(frontier, 0);
        dep[wrt] = 1;
        for (int i = wrt + 1; i < frontier; ++i) {
            const Node& n = nodes_[i];
            dep[i] = ((n.a >= 0 && dep[n.a]) || (n.b >= 0 && dep[n.b])) ? 1 : 0;
        }
        if (!dep[scalar_per_row]) return constant(Matrix::zeros(w.rows, w.cols));

        std::vector<int> adj(frontier, -1);
        adj[scalar_per_row] = constant(Matrix::filled(s.rows, 1, 1.0));

        for (int i = scalar_per_row; i > wrt; --i) {
            if (adj[i] < 0 || !dep[i]) continue;
            const Node n = nodes_[i];  // copy: push() may reallocate
            const int g = adj[i];
            auto accumulate = [&](int parent, int contribution) {
                if (parent < 0 || !dep[parent]) return;
                adj[parent] = adj[parent] < 0 ? contribution : add(adj[parent], contribution);
            };
            switch (n.op) {
                case Op::add:
                    accumulate(n.a, g);
                    accumulate(n.b, g);
                    break;
                case Op::sub:
                    accumulate(n.a, g);
                    if (n.b >= 0 && dep[n.b]) accumulate(n.b, scalar_mul(g, -1.0));
                    break;
                case Op::mul:
                    if (dep[n.a]) accumulate(n.a, mul(g, n.b));
                    if (dep[n.b]) accumulate(n.b, mul(g, n.a));
                    break;
                case Op::scalar_mul:
                    accumulate(n.a, scalar_mul(g, n.c));
                    break;
                case Op::mul_scalar_node:
                    if (dep[n.a]) accumulate(n.a, mul_scalar_node(g, n.b));
                    if (dep[n.b]) accumulate(n.b, sum_all(mul(g, n.a)));
                    break;
                case Op::celu:
                    accumulate(n.a, mul(g, celu_prime(n.a)));
                    break;
                case Op::group_sum_cols:
                    accumulate(n.a, repeat_cols(g, n.group));
                    break;
                case Op::row_dot:
                    if (dep[n.a]) accumulate(n.a, mul_col_vec(n.b, g));
                    if (dep[n.b]) accumulate(n.b, mul_col_vec(n.a, g));
                    break;
                case Op::matmul:
                    if (dep[n.a]) accumulate(n.a, matmul_bt(g, n.b));
                    if (dep[n.b]) accumulate(n.b, matmul_ta(n.a, g));
                    break;
                case Op::matmul_bt:
                    if (dep[n.a]) accumulate(n.a, matmul(g, n.b));
                    if (dep[n.b]) accumulate(n.b, matmul_ta(g, n.a));
                    break;
                case Op::add_row_vec:
                    accumulate(n.a, g);
                    if (n.b >= 0 && dep[n.b]) accumulate(n.b, sum_rows(g));
                    break;
                default:
                    throw std::logic_error("gradient_wrt: op not supported in potential graphs");
            }
        }
        if (adj[wrt] < 0) return constant(Matrix::zeros(w.rows, w.cols));
        return adj[wrt];
    }

    // Evaluates every node in id order. Parameter slices are re-read on each
    // call, so mutating a bound ParamStore between calls is how training steps
    // take effect.
    void forward() {
        const int n = node_count();
        for (int i = 0; i < n; ++i) eval_node(i);
    }

    const Matrix& value(int id) const { return values_.at(id); }
    double scalar_value(int id) const {
        const Matrix& v = values_.at(id);
        if (v.rows() != 1 || v.cols() != 1) throw std::logic_error("scalar_value: node is not 1x1");
        return v.at(0, 0);
    }

    // Numeric reverse pass from a 1x1 loss node. Gradients are accumulated
    // per registered store into flat arrays matching each store's layout.
    std::vector<std::vector<double>> backward(int loss) {
        const Node& ln = nodes_.at(loss);
        if (ln.rows != 1 || ln.cols != 1) throw std::logic_error("backward: loss must be 1x1");
        if (!values_.at(loss).all_finite()) throw NonFiniteError("loss", loss);

        std::vector<std::vector<double>> grads(stores_.size());
        for (std::size_t s = 0; s < stores_.size(); ++s) grads[s].assign(stores_[s]->size(), 0.0);

        // Adjoint buffers persist across calls; touched_ marks which entries
        // are live this pass.
        adjoints_.resize(nodes_.size());
        touched_.assign(nodes_.size(), 0);
        adjoints_[loss] = Matrix::filled(1, 1, 1.0);
        touched_[loss] = 1;

        for (int i = loss; i >= 0; --i) {
            if (!touched_[i]) continue;
            const Node& n = nodes_[i];
            const Matrix& g = adjoints_[i];
            switch (n.op) {
                case Op::input:
                case Op::constant:
                    break;
                case Op::param: {
                    double* out = grads[n.store].data() + stores_[n.store]->layer(n.layer).offset;
                    for (std::size_t k = 0; k < g.size(); ++k) out[k] += g.data()[k];
                    break;
                }
                case Op::add:
                    add_adj(n.a, g);
                    add_adj(n.b, g);
                    break;
                case Op::sub:
                    add_adj(n.a, g);
                    add_adj_scaled(n.b, g, -1.0);
                    break;
                case Op::mul:
                    add_adj_mul(n.a, g, values_[n.b]);
                    add_adj_mul(n.b, g, values_[n.a]);
                    break;
                case Op::scalar_mul:
                    add_adj_scaled(n.a, g, n.c);
                    break;
                case Op::mul_scalar_node: {
                    add_adj_scaled(n.a, g, values_[n.b].at(0, 0));
                    double acc = 0.0;
                    const Matrix& av = values_[n.a];
                    for (std::size_t k = 0; k < g.size(); ++k) acc += g.data()[k] * av.data()[k];
                    Matrix gs(1, 1);
                    gs.at(0, 0) = acc;
                    add_adj(n.b, gs);
                    break;
                }
                case Op::celu: {
                    Matrix& acc = adj_for(n.a, g.rows(), g.cols());
                    const Matrix& av = values_[n.a];
                    for (std::size_t k = 0; k < acc.size(); ++k)
                        acc.data()[k] += g.data()[k] * detail::celu_d1(av.data()[k]);
                    break;
                }
                case Op::celu_prime: {
                    Matrix& acc = adj_for(n.a, g.rows(), g.cols());
                    const Matrix& av = values_[n.a];
                    for (std::size_t k = 0; k < acc.size(); ++k)
                        acc.data()[k] += g.data()[k] * detail::celu_d2(av.data()[k]);
                    break;
                }
                case Op::pos_part: {
                    Matrix& acc = adj_for(n.a, g.rows(), g.cols());
                    const Matrix& av = values_[n.a];
                    for (std::size_t k = 0; k < acc.size(); ++k)
                        acc.data()[k] += av.data()[k] > 0.0 ? g.data()[k] : 0.0;
                    break;
                }
                case Op::group_sum_cols: {
                    const Node& pa = nodes_[n.a];
                    Matrix& acc = adj_for(n.a, pa.rows, pa.cols);
                    for (int r = 0; r < pa.rows; ++r) {
                        const double* gr = g.row(r);
                        double* dr = acc.row(r);
                        for (int jc = 0; jc < n.cols; ++jc)
                            for (int u = 0; u < n.group; ++u) dr[jc * n.group + u] += gr[jc];
                    }
                    break;
                }
                case Op::repeat_cols: {
                    const Node& pa = nodes_[n.a];
                    Matrix& acc = adj_for(n.a, pa.rows, pa.cols);
                    for (int r = 0; r < pa.rows; ++r) {
                        const double* gr = g.row(r);
                        double* dr = acc.row(r);
                        for (int jc = 0; jc < pa.cols; ++jc)
                            for (int u = 0; u < n.group; ++u) dr[jc] += gr[jc * n.group + u];
                    }
                    break;
                }
                case Op::sum_all: {
                    const Node& pa = nodes_[n.a];
                    Matrix& acc = adj_for(n.a, pa.rows, pa.cols);
                    const double gv = g.at(0, 0);
                    for (std::size_t k = 0; k < acc.size(); ++k) acc.data()[k] += gv;
                    break;
                }
                case Op::sum_rows: {
                    const Node& pa = nodes_[n.a];
                    Matrix& acc = adj_for(n.a, pa.rows, pa.cols);
                    for (int r = 0; r < pa.rows; ++r)
                        for (int jc = 0; jc < pa.cols; ++jc) acc.at(r, jc) += g.at(0, jc);
                    break;
                }
                case Op::row_dot: {
                    add_adj_rowscaled(n.a, values_[n.b], g);
                    add_adj_rowscaled(n.b, values_[n.a], g);
                    break;
                }
                case Op::mul_col_vec: {
                    add_adj_rowscaled(n.a, g, values_[n.b]);
                    const Matrix& av = values_[n.a];
                    Matrix& acc = adj_for(n.b, av.rows(), 1);
                    for (int r = 0; r < av.rows(); ++r) {
                        double dot = 0.0;
                        const double* gr = g.row(r);
                        const double* ar = av.row(r);
                        for (int jc = 0; jc < av.cols(); ++jc) dot += gr[jc] * ar[jc];
                        acc.at(r, 0) += dot;
                    }
                    break;
                }
                case Op::matmul: {
                    const Matrix& av = values_[n.a];
                    const Matrix& bv = values_[n.b];
                    matmul_bt_acc(g, bv, adj_for(n.a, av.rows(), av.cols()));
                    matmul_ta_acc(av, g, adj_for(n.b, bv.rows(), bv.cols()));
                    break;
                }
                case Op::matmul_bt: {
                    const Matrix& av = values_[n.a];
                    const Matrix& bv = values_[n.b];
                    matmul_acc(g, bv, adj_for(n.a, av.rows(), av.cols()));
                    matmul_ta_acc(g, av, adj_for(n.b, bv.rows(), bv.cols()));
                    break;
                }
                case Op::matmul_ta: {
                    const Matrix& av = values_[n.a];
                    const Matrix& bv = values_[n.b];
                    matmul_bt_acc(bv, g, adj_for(n.a, av.rows(), av.cols()));
                    matmul_acc(av, g, adj_for(n.b, bv.rows(), bv.cols()));
                    break;
                }
                case Op::add_row_vec: {
                    add_adj(n.a, g);
                    Matrix& acc = adj_for(n.b, 1, g.cols());
                    for (int r = 0; r < g.rows(); ++r) {
                        const double* gr = g.row(r);
                        for (int jc = 0; jc < g.cols(); ++jc) acc.at(0, jc) += gr[jc];
                    }
                    break;
                }
            }
        }
        return grads;
    }

private:
    int push(Node n) {
        nodes_.push_back(n);
        values_.emplace_back();
        return static_cast<int>(nodes_.size()) - 1;
    }

    int unary_same(Op op, int a) {
        Node n{op};
        n.a = a;
        n.rows = nodes_.at(a).rows;
        n.cols = nodes_.at(a).cols;
        return push(n);
    }

    int binary_same(Op op, int a, int b, const char* what) {
        const Node& pa = nodes_.at(a);
        const Node& pb = nodes_.at(b);
        if (pa.rows != pb.rows || pa.cols != pb.cols) throw DimensionError(what, pa.cols, pb.cols);
        Node n{op};
        n.a = a;
        n.b = b;
        n.rows = pa.rows;
        n.cols = pa.cols;
        return push(n);
    }

    void eval_node(int i) {
        const Node& n = nodes_[i];
        Matrix& out = values_[i];
        switch (n.op) {
            case Op::input:
            case Op::constant:
                return;
            case Op::param: {
                if (out.rows() != n.rows || out.cols() != n.cols) out = Matrix(n.rows, n.cols);
                auto src = stores_[n.store]->layer_values(n.layer);
                std::copy(src.begin(), src.end(), out.data());
                return;
            }
            case Op::add: {
                ensure(out, n);
                const Matrix& a = values_[n.a];
                const Matrix& b = values_[n.b];
                for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] = a.data()[k] + b.data()[k];
                return;
            }
            case Op::sub: {
                ensure(out, n);
                const Matrix& a = values_[n.a];
                const Matrix& b = values_[n.b];
                for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] = a.data()[k] - b.data()[k];
                return;
            }
            case Op::mul: {
                ensure(out, n);
                const Matrix& a = values_[n.a];
                const Matrix& b = values_[n.b];
                for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] = a.data()[k] * b.data()[k];
                return;
            }
            case Op::scalar_mul: {
                ensure(out, n);
                const Matrix& a = values_[n.a];
                for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] = a.data()[k] * n.c;
                return;
            }
            case Op::mul_scalar_node: {
                ensure(out, n);
                const Matrix& a = values_[n.a];
                const double s = values_[n.b].at(0, 0);
                for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] = a.data()[k] * s;
                return;
            }
            case Op::celu: {
                ensure(out, n);
                const Matrix& a = values_[n.a];
                for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] = detail::celu_fn(a.data()[k]);
                return;
            }
            case Op::celu_prime: {
                ensure(out, n);
                const Matrix& a = values_[n.a];
                for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] = detail::celu_d1(a.data()[k]);
                return;
            }
            case Op::pos_part: {
                ensure(out, n);
                const Matrix& a = values_[n.a];
                for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] = std::max(a.data()[k], 0.0);
                return;
            }
            case Op::group_sum_cols: {
                ensure(out, n);
                const Matrix& a = values_[n.a];
                for (int r = 0; r < n.rows; ++r) {
                    const double* ar = a.row(r);
                    double* orow = out.row(r);
                    for (int jc = 0; jc < n.cols; ++jc) {
                        double acc = 0.0;
                        for (int u = 0; u < n.group; ++u) acc += ar[jc * n.group + u];
                        orow[jc] = acc;
                    }
                }
                return;
            }
            case Op::repeat_cols: {
                ensure(out, n);
                const Matrix& a = values_[n.a];
                const int src_cols = nodes_[n.a].cols;
                for (int r = 0; r < n.rows; ++r) {
                    const double* ar = a.row(r);
                    double* orow = out.row(r);
                    for (int jc = 0; jc < src_cols; ++jc)
                        for (int u = 0; u < n.group; ++u) orow[jc * n.group + u] = ar[jc];
                }
                return;
            }
            case Op::sum_all: {
                ensure(out, n);
                const Matrix& a = values_[n.a];
                double acc = 0.0;
                for (std::size_t k = 0; k < a.size(); ++k) acc += a.data()[k];
                out.at(0, 0) = acc;
                return;
            }
            case Op::sum_rows: {
                ensure(out, n);
                const Matrix& a = values_[n.a];
                for (int jc = 0; jc < n.cols; ++jc) {
                    double acc = 0.0;
                    for (int r = 0; r < a.rows(); ++r) acc += a.at(r, jc);
                    out.at(0, jc) = acc;
                }
                return;
            }
            case Op::row_dot: {
                ensure(out, n);
                const Matrix& a = values_[n.a];
                const Matrix& b = values_[n.b];
                for (int r = 0; r < n.rows; ++r) {
                    double acc = 0.0;
                    const double* ar = a.row(r);
                    const double* br = b.row(r);
                    for (int jc = 0; jc < a.cols(); ++jc) acc += ar[jc] * br[jc];
                    out.at(r, 0) = acc;
                }
                return;
            }
            case Op::mul_col_vec: {
                ensure(out, n);
                const Matrix& a = values_[n.a];
                const Matrix& s = values_[n.b];
                for (int r = 0; r < n.rows; ++r) {
                    const double f = s.at(r, 0);
                    const double* ar = a.row(r);
                    double* orow = out.row(r);
                    for (int jc = 0; jc < n.cols; ++jc) orow[jc] = ar[jc] * f;
                }
                return;
            }
            case Op::matmul:
                matmul_into(values_[n.a], values_[n.b], out);
                return;
            case Op::matmul_bt:
                matmul_bt_into(values_[n.a], values_[n.b], out);
                return;
            case Op::matmul_ta:
                matmul_ta_into(values_[n.a], values_[n.b], out);
                return;
            case Op::add_row_vec: {
                ensure(out, n);
                const Matrix& a = values_[n.a];
                const Matrix& v = values_[n.b];
                for (int r = 0; r < n.rows; ++r) {
                    const double* ar = a.row(r);
                    const double* vr = v.row(0);
                    double* orow = out.row(r);
                    for (int jc = 0; jc < n.cols; ++jc) orow[jc] = ar[jc] + vr[jc];
                }
                return;
            }
        }
    }

    static void ensure(Matrix& m, const Node& n) {
        if (m.rows() != n.rows || m.cols() != n.cols) m = Matrix(n.rows, n.cols);
    }

    void add_adj(int id, const Matrix& g) {
        if (id < 0) return;
        if (!touched_[id]) {
            adjoints_[id] = g;
            touched_[id] = 1;
            return;
        }
        Matrix& acc = adjoints_[id];
        for (std::size_t k = 0; k < acc.size(); ++k) acc.data()[k] += g.data()[k];
    }

    void add_adj_scaled(int id, const Matrix& g, double s) {
        if (id < 0) return;
        if (!touched_[id]) {
            adjoints_[id] = scale(g, s);
            touched_[id] = 1;
            return;
        }
        Matrix& acc = adjoints_[id];
        for (std::size_t k = 0; k < acc.size(); ++k) acc.data()[k] += s * g.data()[k];
    }

    // Accumulation target for node `id`: reuses the persistent buffer,
    // zeroing it in place on the first touch of this pass.
    Matrix& adj_for(int id, int rows, int cols) {
        Matrix& m = adjoints_[id];
        if (!touched_[id]) {
            if (m.rows() != rows || m.cols() != cols) m = Matrix(rows, cols);
            else std::fill(m.data(), m.data() + m.size(), 0.0);
            touched_[id] = 1;
        }
        return m;
    }

    void add_adj_mul(int id, const Matrix& g, const Matrix& f) {
        if (id < 0) return;
        Matrix& acc = adj_for(id, g.rows(), g.cols());
        for (std::size_t k = 0; k < acc.size(); ++k) acc.data()[k] += g.data()[k] * f.data()[k];
    }

    // acc(r, :) += a(r, :) * s(r, 0)
    void add_adj_rowscaled(int id, const Matrix& a, const Matrix& s) {
        if (id < 0) return;
        Matrix& acc = adj_for(id, a.rows(), a.cols());
        for (int r = 0; r < a.rows(); ++r) {
            const double f = s.at(r, 0);
            const double* ar = a.row(r);
            double* accr = acc.row(r);
            for (int jc = 0; jc < a.cols(); ++jc) accr[jc] += ar[jc] * f;
        }
    }

    std::vector<Node> nodes_;
    std::vector<Matrix> values_;
    std::vector<const ParamStore*> stores_;
    std::vector<Matrix> adjoints_;
    std::vector<char> touched_;
};

struct FiniteDiffReport {
    double max_rel_err = 0.0;
    int worst_store = -1;
    long worst_index = -1;
    bool pass = false;
};

// Central-difference check of backward() against the analytic gradient.
// The builder constructs the loss graph against the given stores; parameter
// perturbations re-run forward() on the same graph.
//
// Coordinates that disagree at the requested step are re-checked at smaller
// steps and the best agreement is kept: the activation's second derivative
// has a jump at zero, so a step that straddles it produces a spurious
// mismatch that shrinks with h, while a genuine gradient bug does not.
inline FiniteDiffReport finite_diff_check(const std::function<int(Graph&)>& build_loss,
                                          std::vector<ParamStore*> stores, double h, double tol) {
    if (h <= 0.0) throw std::invalid_argument("finite_diff_check: h must be positive");
    Graph g;
    for (ParamStore* s : stores) g.add_store(*s);
    const int loss = build_loss(g);
    g.forward();
    auto grads = g.backward(loss);

    FiniteDiffReport rep;
    for (std::size_t si = 0; si < stores.size(); ++si) {
        auto vals = stores[si]->values();
        for (std::size_t pi = 0; pi < vals.size(); ++pi) {
            const double keep = vals[pi];
            const double an = grads[si][pi];
            auto rel_at = [&](double step) {
                vals[pi] = keep + step;
                g.forward();
                const double lp = g.scalar_value(loss);
                vals[pi] = keep - step;
                g.forward();
                const double lm = g.scalar_value(loss);
                vals[pi] = keep;
                const double fd = (lp - lm) / (2.0 * step);
                const double denom = std::max({1e-8, std::abs(fd), std::abs(an)});
                return std::abs(fd - an) / denom;
            };
            double rel = rel_at(h);
            for (double step = h / 8.0; rel > tol && step >= h / 512.0; step /= 8.0)
                rel = std::min(rel, rel_at(step));
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_store = static_cast<int>(si);
                rep.worst_index = static_cast<long>(pi);
            }
        }
    }
    g.forward();  // restore values for callers that keep using the graph
    rep.pass = rep.max_rel_err <= tol;
    return rep;
}

}  // namespace w2b::ad
