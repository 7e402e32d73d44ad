#include "genolm/autograd.hpp"

#include <cmath>

#include "genolm/common.hpp"

namespace genolm {

namespace {

// out += a · b, i-k-j loop order for cache-friendly row access.
void addmm(Matrix& out, const Matrix& a, const Matrix& b) {
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double s = arow[k];
            if (s == 0.0) continue;
            const double* brow = b.row(k);
            for (int j = 0; j < b.cols; ++j) orow[j] += s * brow[j];
        }
    }
}

// out += a · bᵀ; rows of both operands are contiguous.
void addmm_nt(Matrix& out, const Matrix& a, const Matrix& b) {
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (int j = 0; j < b.rows; ++j) {
            const double* brow = b.row(j);
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            orow[j] += acc;
        }
    }
}

// out += aᵀ · b.
void addmm_tn(Matrix& out, const Matrix& a, const Matrix& b) {
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        const double* brow = b.row(i);
        for (int r = 0; r < a.cols; ++r) {
            const double s = arow[r];
            if (s == 0.0) continue;
            double* orow = out.row(r);
            for (int j = 0; j < b.cols; ++j) orow[j] += s * brow[j];
        }
    }
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

void round_to_float32(Matrix& m) {
    for (double& x : m.data) x = static_cast<double>(static_cast<float>(x));
}

Graph::NodeId Graph::push(Matrix value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
}

Graph::NodeId Graph::leaf(Parameter& p) {
    const NodeId id = push(p.value, p.trainable);
    if (p.trainable) nodes_[static_cast<std::size_t>(id)].external_grad = &p.grad;
    return id;
}

Graph::NodeId Graph::constant(Matrix m) { return push(std::move(m), false); }

bool Graph::grad_present(NodeId id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.external_grad != nullptr || n.own_grad != nullptr;
}

Matrix& Graph::grad_ref(NodeId id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.external_grad) return *n.external_grad;
    if (!n.own_grad) n.own_grad = std::make_unique<Matrix>(n.value.rows, n.value.cols);
    return *n.own_grad;
}

Matrix Graph::grad_of(NodeId id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.external_grad) return *n.external_grad;
    if (n.own_grad) return *n.own_grad;
    return Matrix(n.value.rows, n.value.cols);
}

void Graph::backward(NodeId loss) {
    const Node& out = nodes_[static_cast<std::size_t>(loss)];
    if (out.value.rows != 1 || out.value.cols != 1)
        throw ConfigError("backward: loss node must be 1x1");
    grad_ref(loss).data[0] += 1.0;
    for (NodeId i = loss; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.backprop || !grad_present(i)) continue;
        n.backprop();
    }
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.cols != B.rows) throw ConfigError("matmul: inner dimensions differ");
    Matrix out(A.rows, B.cols);
    addmm(out, A, B);
    const NodeId id = push(std::move(out), needs(a) || needs(b));
    if (!nodes_.back().needs_grad) return id;
    nodes_.back().backprop = [this, id, a, b] {
        const Matrix& go = grad_ref(id);
        if (needs(a)) addmm_nt(grad_ref(a), go, value(b));
        if (needs(b)) addmm_tn(grad_ref(b), value(a), go);
    };
    return id;
}

Graph::NodeId Graph::matmul_nt(NodeId a, NodeId b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.cols != B.cols) throw ConfigError("matmul_nt: inner dimensions differ");
    Matrix out(A.rows, B.rows);
    addmm_nt(out, A, B);
    const NodeId id = push(std::move(out), needs(a) || needs(b));
    if (!nodes_.back().needs_grad) return id;
    nodes_.back().backprop = [this, id, a, b] {
        const Matrix& go = grad_ref(id);
        if (needs(a)) addmm(grad_ref(a), go, value(b));
        if (needs(b)) addmm_tn(grad_ref(b), go, value(a));
    };
    return id;
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (!A.same_shape(B)) throw ConfigError("add: shape mismatch");
    Matrix out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += B.data[i];
    const NodeId id = push(std::move(out), needs(a) || needs(b));
    if (!nodes_.back().needs_grad) return id;
    nodes_.back().backprop = [this, id, a, b] {
        const Matrix& go = grad_ref(id);
        if (needs(a)) {
            Matrix& ga = grad_ref(a);
            for (std::size_t i = 0; i < go.size(); ++i) ga.data[i] += go.data[i];
        }
        if (needs(b)) {
            Matrix& gb = grad_ref(b);
            for (std::size_t i = 0; i < go.size(); ++i) gb.data[i] += go.data[i];
        }
    };
    return id;
}

Graph::NodeId Graph::add_rowvec(NodeId a, NodeId v) {
    const Matrix& A = value(a);
    const Matrix& V = value(v);
    if (V.rows != 1 || V.cols != A.cols) throw ConfigError("add_rowvec: vector shape mismatch");
    Matrix out = A;
    for (int i = 0; i < out.rows; ++i) {
        double* orow = out.row(i);
        for (int j = 0; j < out.cols; ++j) orow[j] += V.data[static_cast<std::size_t>(j)];
    }
    const NodeId id = push(std::move(out), needs(a) || needs(v));
    if (!nodes_.back().needs_grad) return id;
    nodes_.back().backprop = [this, id, a, v] {
        const Matrix& go = grad_ref(id);
        if (needs(a)) {
            Matrix& ga = grad_ref(a);
            for (std::size_t i = 0; i < go.size(); ++i) ga.data[i] += go.data[i];
        }
        if (needs(v)) {
            Matrix& gv = grad_ref(v);
            for (int i = 0; i < go.rows; ++i) {
                const double* grow = go.row(i);
                for (int j = 0; j < go.cols; ++j) gv.data[static_cast<std::size_t>(j)] += grow[j];
            }
        }
    };
    return id;
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (!A.same_shape(B)) throw ConfigError("mul: shape mismatch");
    Matrix out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= B.data[i];
    const NodeId id = push(std::move(out), needs(a) || needs(b));
    if (!nodes_.back().needs_grad) return id;
    nodes_.back().backprop = [this, id, a, b] {
        const Matrix& go = grad_ref(id);
        if (needs(a)) {
            Matrix& ga = grad_ref(a);
            const Matrix& B = value(b);
            for (std::size_t i = 0; i < go.size(); ++i) ga.data[i] += go.data[i] * B.data[i];
        }
        if (needs(b)) {
            Matrix& gb = grad_ref(b);
            const Matrix& A = value(a);
            for (std::size_t i = 0; i < go.size(); ++i) gb.data[i] += go.data[i] * A.data[i];
        }
    };
    return id;
}

Graph::NodeId Graph::scale(NodeId a, double s) {
    Matrix out = value(a);
    for (double& x : out.data) x *= s;
    const NodeId id = push(std::move(out), needs(a));
    if (!nodes_.back().needs_grad) return id;
    nodes_.back().backprop = [this, id, a, s] {
        const Matrix& go = grad_ref(id);
        Matrix& ga = grad_ref(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga.data[i] += s * go.data[i];
    };
    return id;
}

Graph::NodeId Graph::sigmoid(NodeId a) {
    Matrix out = value(a);
    for (double& x : out.data) x = stable_sigmoid(x);
    const NodeId id = push(std::move(out), needs(a));
    if (!nodes_.back().needs_grad) return id;
    nodes_.back().backprop = [this, id, a] {
        const Matrix& go = grad_ref(id);
        const Matrix& y = value(id);
        Matrix& ga = grad_ref(a);
        for (std::size_t i = 0; i < go.size(); ++i)
            ga.data[i] += go.data[i] * y.data[i] * (1.0 - y.data[i]);
    };
    return id;
}

Graph::NodeId Graph::tanh_op(NodeId a) {
    Matrix out = value(a);
    for (double& x : out.data) x = std::tanh(x);
    const NodeId id = push(std::move(out), needs(a));
    if (!nodes_.back().needs_grad) return id;
    nodes_.back().backprop = [this, id, a] {
        const Matrix& go = grad_ref(id);
        const Matrix& y = value(id);
        Matrix& ga = grad_ref(a);
        for (std::size_t i = 0; i < go.size(); ++i)
            ga.data[i] += go.data[i] * (1.0 - y.data[i] * y.data[i]);
    };
    return id;
}

Graph::NodeId Graph::relu(NodeId a) {
    Matrix out = value(a);
    for (double& x : out.data) x = x > 0.0 ? x : 0.0;
    const NodeId id = push(std::move(out), needs(a));
    if (!nodes_.back().needs_grad) return id;
    nodes_.back().backprop = [this, id, a] {
        const Matrix& go = grad_ref(id);
        const Matrix& x = value(a);
        Matrix& ga = grad_ref(a);
        for (std::size_t i = 0; i < go.size(); ++i)
            if (x.data[i] > 0.0) ga.data[i] += go.data[i];
    };
    return id;
}

Graph::NodeId Graph::swish(NodeId a) {
    const Matrix& X = value(a);
    auto sig = std::make_shared<Matrix>(X);
    for (double& x : sig->data) x = stable_sigmoid(x);
    Matrix out = X;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= sig->data[i];
    const NodeId id = push(std::move(out), needs(a));
    if (!nodes_.back().needs_grad) return id;
    nodes_.back().backprop = [this, id, a, sig] {
        const Matrix& go = grad_ref(id);
        const Matrix& x = value(a);
        Matrix& ga = grad_ref(a);
        // d/dx [x·σ(x)] = σ(x)·(1 + x·(1 − σ(x)))
        for (std::size_t i = 0; i < go.size(); ++i) {
            const double s = sig->data[i];
            ga.data[i] += go.data[i] * s * (1.0 + x.data[i] * (1.0 - s));
        }
    };
    return id;
}

Graph::NodeId Graph::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    const Matrix& X = value(x);
    const Matrix& G = value(gamma);
    const Matrix& B = value(beta);
    if (G.rows != 1 || G.cols != X.cols || B.rows != 1 || B.cols != X.cols)
        throw ConfigError("layer_norm: affine shape mismatch");
    const int d = X.cols;
    auto xhat = std::make_shared<Matrix>(X.rows, d);
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(X.rows));
    Matrix out(X.rows, d);
    for (int i = 0; i < X.rows; ++i) {
        const double* xrow = X.row(i);
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += xrow[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xrow[j] - mean;
            var += c * c;
        }
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<std::size_t>(i)] = is;
        double* hrow = xhat->row(i);
        double* orow = out.row(i);
        for (int j = 0; j < d; ++j) {
            hrow[j] = (xrow[j] - mean) * is;
            orow[j] = G.data[static_cast<std::size_t>(j)] * hrow[j] + B.data[static_cast<std::size_t>(j)];
        }
    }
    const NodeId id = push(std::move(out), needs(x) || needs(gamma) || needs(beta));
    if (!nodes_.back().needs_grad) return id;
    nodes_.back().backprop = [this, id, x, gamma, beta, xhat, inv_std] {
        const Matrix& go = grad_ref(id);
        const Matrix& G = value(gamma);
        const int d = go.cols;
        if (needs(gamma)) {
            Matrix& gg = grad_ref(gamma);
            for (int i = 0; i < go.rows; ++i) {
                const double* grow = go.row(i);
                const double* hrow = xhat->row(i);
                for (int j = 0; j < d; ++j) gg.data[static_cast<std::size_t>(j)] += grow[j] * hrow[j];
            }
        }
        if (needs(beta)) {
            Matrix& gb = grad_ref(beta);
            for (int i = 0; i < go.rows; ++i) {
                const double* grow = go.row(i);
                for (int j = 0; j < d; ++j) gb.data[static_cast<std::size_t>(j)] += grow[j];
            }
        }
        if (needs(x)) {
            Matrix& gx = grad_ref(x);
            std::vector<double> dxhat(static_cast<std::size_t>(d));
            for (int i = 0; i < go.rows; ++i) {
                const double* grow = go.row(i);
                const double* hrow = xhat->row(i);
                double mean_dx = 0.0, mean_dxh = 0.0;
                for (int j = 0; j < d; ++j) {
                    dxhat[static_cast<std::size_t>(j)] = grow[j] * G.data[static_cast<std::size_t>(j)];
                    mean_dx += dxhat[static_cast<std::size_t>(j)];
                    mean_dxh += dxhat[static_cast<std::size_t>(j)] * hrow[j];
                }
                mean_dx /= d;
                mean_dxh /= d;
                const double is = (*inv_std)[static_cast<std::size_t>(i)];
                double* xrow = gx.row(i);
                for (int j = 0; j < d; ++j)
                    xrow[j] += is * (dxhat[static_cast<std::size_t>(j)] - mean_dx - hrow[j] * mean_dxh);
            }
        }
    };
    return id;
}

Graph::NodeId Graph::softmax_rows_masked(NodeId scores, const std::vector<bool>& key_valid) {
    const Matrix& S = value(scores);
    if (static_cast<int>(key_valid.size()) != S.cols)
        throw ConfigError("softmax_rows_masked: mask length mismatch");
    if (std::find(key_valid.begin(), key_valid.end(), true) == key_valid.end())
        throw ConfigError("softmax_rows_masked: no valid keys");
    Matrix out(S.rows, S.cols);
    for (int i = 0; i < S.rows; ++i) {
        const double* srow = S.row(i);
        double mx = -1e300;
        for (int j = 0; j < S.cols; ++j)
            if (key_valid[static_cast<std::size_t>(j)] && srow[j] > mx) mx = srow[j];
        double sum = 0.0;
        double* orow = out.row(i);
        for (int j = 0; j < S.cols; ++j) {
            if (key_valid[static_cast<std::size_t>(j)]) {
                orow[j] = std::exp(srow[j] - mx);
                sum += orow[j];
            } else {
                orow[j] = 0.0;
            }
        }
        for (int j = 0; j < S.cols; ++j) orow[j] /= sum;
    }
    const NodeId id = push(std::move(out), needs(scores));
    if (!nodes_.back().needs_grad) return id;
    auto mask = std::make_shared<std::vector<bool>>(key_valid);
    nodes_.back().backprop = [this, id, scores, mask] {
        const Matrix& go = grad_ref(id);
        const Matrix& p = value(id);
        Matrix& gs = grad_ref(scores);
        for (int i = 0; i < go.rows; ++i) {
            const double* grow = go.row(i);
            const double* prow = p.row(i);
            double dot = 0.0;
            for (int j = 0; j < go.cols; ++j) dot += grow[j] * prow[j];
            double* srow = gs.row(i);
            for (int j = 0; j < go.cols; ++j)
                if ((*mask)[static_cast<std::size_t>(j)]) srow[j] += prow[j] * (grow[j] - dot);
        }
    };
    return id;
}

Graph::NodeId Graph::rope(NodeId x, double base, int position_offset) {
    const Matrix& X = value(x);
    if (X.cols % 2 != 0) throw ConfigError("rope: column count must be even");
    const int pairs = X.cols / 2;
    auto cs = std::make_shared<Matrix>(X.rows, X.cols);  // interleaved cos,sin per pair
    Matrix out(X.rows, X.cols);
    for (int m = 0; m < X.rows; ++m) {
        const double pos = static_cast<double>(m + position_offset);
        const double* xrow = X.row(m);
        double* crow = cs->row(m);
        double* orow = out.row(m);
        for (int p = 0; p < pairs; ++p) {
            const double theta = pos * std::pow(base, -2.0 * p / X.cols);
            const double c = std::cos(theta);
            const double s = std::sin(theta);
            crow[2 * p] = c;
            crow[2 * p + 1] = s;
            orow[2 * p] = xrow[2 * p] * c - xrow[2 * p + 1] * s;
            orow[2 * p + 1] = xrow[2 * p] * s + xrow[2 * p + 1] * c;
        }
    }
    const NodeId id = push(std::move(out), needs(x));
    if (!nodes_.back().needs_grad) return id;
    nodes_.back().backprop = [this, id, x, cs] {
        const Matrix& go = grad_ref(id);
        Matrix& gx = grad_ref(x);
        const int pairs = go.cols / 2;
        for (int m = 0; m < go.rows; ++m) {
            const double* grow = go.row(m);
            const double* crow = cs->row(m);
            double* xrow = gx.row(m);
            for (int p = 0; p < pairs; ++p) {
                const double c = crow[2 * p];
                const double s = crow[2 * p + 1];
                xrow[2 * p] += grow[2 * p] * c + grow[2 * p + 1] * s;
                xrow[2 * p + 1] += -grow[2 * p] * s + grow[2 * p + 1] * c;
            }
        }
    };
    return id;
}

Graph::NodeId Graph::slice_cols(NodeId x, int start, int len) {
    const Matrix& X = value(x);
    if (start < 0 || len <= 0 || start + len > X.cols) throw ConfigError("slice_cols: out of range");
    Matrix out(X.rows, len);
    for (int i = 0; i < X.rows; ++i) {
        const double* xrow = X.row(i) + start;
        double* orow = out.row(i);
        for (int j = 0; j < len; ++j) orow[j] = xrow[j];
    }
    const NodeId id = push(std::move(out), needs(x));
    if (!nodes_.back().needs_grad) return id;
    nodes_.back().backprop = [this, id, x, start] {
        const Matrix& go = grad_ref(id);
        Matrix& gx = grad_ref(x);
        for (int i = 0; i < go.rows; ++i) {
            const double* grow = go.row(i);
            double* xrow = gx.row(i) + start;
            for (int j = 0; j < go.cols; ++j) xrow[j] += grow[j];
        }
    };
    return id;
}

Graph::NodeId Graph::concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ConfigError("concat_cols: empty part list");
    int cols = 0;
    bool any_grad = false;
    const int rows = value(parts.front()).rows;
    for (NodeId p : parts) {
        if (value(p).rows != rows) throw ConfigError("concat_cols: row count mismatch");
        cols += value(p).cols;
        any_grad = any_grad || needs(p);
    }
    Matrix out(rows, cols);
    int off = 0;
    for (NodeId p : parts) {
        const Matrix& P = value(p);
        for (int i = 0; i < rows; ++i) {
            const double* prow = P.row(i);
            double* orow = out.row(i) + off;
            for (int j = 0; j < P.cols; ++j) orow[j] = prow[j];
        }
        off += P.cols;
    }
    const NodeId id = push(std::move(out), any_grad);
    if (!nodes_.back().needs_grad) return id;
    auto ps = std::make_shared<std::vector<NodeId>>(parts);
    nodes_.back().backprop = [this, id, ps] {
        const Matrix& go = grad_ref(id);
        int off = 0;
        for (NodeId p : *ps) {
            const int pc = value(p).cols;
            if (needs(p)) {
                Matrix& gp = grad_ref(p);
                for (int i = 0; i < go.rows; ++i) {
                    const double* grow = go.row(i) + off;
                    double* prow = gp.row(i);
                    for (int j = 0; j < pc; ++j) prow[j] += grow[j];
                }
            }
            off += pc;
        }
    };
    return id;
}

Graph::NodeId Graph::gather_rows(NodeId x, std::vector<int> indices) {
    const Matrix& X = value(x);
    Matrix out(static_cast<int>(indices.size()), X.cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int r = indices[i];
        if (r < 0 || r >= X.rows) throw ConfigError("gather_rows: index out of range");
        const double* xrow = X.row(r);
        double* orow = out.row(static_cast<int>(i));
        for (int j = 0; j < X.cols; ++j) orow[j] = xrow[j];
    }
    const NodeId id = push(std::move(out), needs(x));
    if (!nodes_.back().needs_grad) return id;
    auto idx = std::make_shared<std::vector<int>>(std::move(indices));
    nodes_.back().backprop = [this, id, x, idx] {
        const Matrix& go = grad_ref(id);
        Matrix& gx = grad_ref(x);
        for (std::size_t i = 0; i < idx->size(); ++i) {
            const double* grow = go.row(static_cast<int>(i));
            double* xrow = gx.row((*idx)[i]);
            for (int j = 0; j < go.cols; ++j) xrow[j] += grow[j];
        }
    };
    return id;
}

Graph::NodeId Graph::mean_rows_masked(NodeId x, const std::vector<bool>& keep) {
    const Matrix& X = value(x);
    if (static_cast<int>(keep.size()) != X.rows)
        throw ConfigError("mean_rows_masked: mask length mismatch");
    const long count = std::count(keep.begin(), keep.end(), true);
    if (count == 0) throw ConfigError("mean_rows_masked: empty selection");
    Matrix out(1, X.cols);
    for (int i = 0; i < X.rows; ++i) {
        if (!keep[static_cast<std::size_t>(i)]) continue;
        const double* xrow = X.row(i);
        for (int j = 0; j < X.cols; ++j) out.data[static_cast<std::size_t>(j)] += xrow[j];
    }
    for (double& v : out.data) v /= static_cast<double>(count);
    const NodeId id = push(std::move(out), needs(x));
    if (!nodes_.back().needs_grad) return id;
    auto mask = std::make_shared<std::vector<bool>>(keep);
    nodes_.back().backprop = [this, id, x, mask, count] {
        const Matrix& go = grad_ref(id);
        Matrix& gx = grad_ref(x);
        const double inv = 1.0 / static_cast<double>(count);
        for (int i = 0; i < gx.rows; ++i) {
            if (!(*mask)[static_cast<std::size_t>(i)]) continue;
            double* xrow = gx.row(i);
            for (int j = 0; j < gx.cols; ++j) xrow[j] += go.data[static_cast<std::size_t>(j)] * inv;
        }
    };
    return id;
}

Graph::NodeId Graph::max_over_rows(NodeId x) {
    const Matrix& X = value(x);
    if (X.rows == 0) throw ConfigError("max_over_rows: empty input");
    Matrix out(1, X.cols);
    auto argmax = std::make_shared<std::vector<int>>(static_cast<std::size_t>(X.cols), 0);
    for (int j = 0; j < X.cols; ++j) {
        double best = X.at(0, j);
        int arg = 0;
        for (int i = 1; i < X.rows; ++i) {
            if (X.at(i, j) > best) {
                best = X.at(i, j);
                arg = i;
            }
        }
        out.data[static_cast<std::size_t>(j)] = best;
        (*argmax)[static_cast<std::size_t>(j)] = arg;
    }
    const NodeId id = push(std::move(out), needs(x));
    if (!nodes_.back().needs_grad) return id;
    nodes_.back().backprop = [this, id, x, argmax] {
        const Matrix& go = grad_ref(id);
        Matrix& gx = grad_ref(x);
        for (int j = 0; j < go.cols; ++j)
            gx.at((*argmax)[static_cast<std::size_t>(j)], j) += go.data[static_cast<std::size_t>(j)];
    };
    return id;
}

Graph::NodeId Graph::dropout(NodeId x, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must be in [0,1)");
    if (rate == 0.0) return x;
    const Matrix& X = value(x);
    auto mask = std::make_shared<Matrix>(X.rows, X.cols);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (double& m : mask->data) m = rng.uniform() < rate ? 0.0 : keep_scale;
    Matrix out = X;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask->data[i];
    const NodeId id = push(std::move(out), needs(x));
    if (!nodes_.back().needs_grad) return id;
    nodes_.back().backprop = [this, id, x, mask] {
        const Matrix& go = grad_ref(id);
        Matrix& gx = grad_ref(x);
        for (std::size_t i = 0; i < go.size(); ++i) gx.data[i] += go.data[i] * mask->data[i];
    };
    return id;
}

Graph::NodeId Graph::conv1d_onehot(const std::vector<int>& base_indices, NodeId weights,
                                   NodeId bias, int kernel_width) {
    const Matrix& W = value(weights);
    const Matrix& B = value(bias);
    const int filters = W.rows;
    if (W.cols != kernel_width * 4) throw ConfigError("conv1d_onehot: weight shape mismatch");
    if (B.rows != 1 || B.cols != filters) throw ConfigError("conv1d_onehot: bias shape mismatch");
    const int T = static_cast<int>(base_indices.size());
    if (T < kernel_width) throw ConfigError("conv1d_onehot: input shorter than kernel");
    const int out_len = T - kernel_width + 1;
    Matrix out(out_len, filters);
    for (int t = 0; t < out_len; ++t) {
        double* orow = out.row(t);
        for (int f = 0; f < filters; ++f) orow[f] = B.data[static_cast<std::size_t>(f)];
        for (int j = 0; j < kernel_width; ++j) {
            const int b = base_indices[static_cast<std::size_t>(t + j)];
            if (b < 0) continue;  // N or padding: zero column contributes nothing
            const int col = j * 4 + b;
            for (int f = 0; f < filters; ++f) orow[f] += W.at(f, col);
        }
    }
    const NodeId id = push(std::move(out), needs(weights) || needs(bias));
    if (!nodes_.back().needs_grad) return id;
    auto idx = std::make_shared<std::vector<int>>(base_indices);
    nodes_.back().backprop = [this, id, weights, bias, kernel_width, idx] {
        const Matrix& go = grad_ref(id);
        const int filters = go.cols;
        if (needs(bias)) {
            Matrix& gb = grad_ref(bias);
            for (int t = 0; t < go.rows; ++t) {
                const double* grow = go.row(t);
                for (int f = 0; f < filters; ++f) gb.data[static_cast<std::size_t>(f)] += grow[f];
            }
        }
        if (needs(weights)) {
            Matrix& gw = grad_ref(weights);
            for (int t = 0; t < go.rows; ++t) {
                const double* grow = go.row(t);
                for (int j = 0; j < kernel_width; ++j) {
                    const int b = (*idx)[static_cast<std::size_t>(t + j)];
                    if (b < 0) continue;
                    const int col = j * 4 + b;
                    for (int f = 0; f < filters; ++f) gw.at(f, col) += grow[f];
                }
            }
        }
    };
    return id;
}

Graph::NodeId Graph::lstm_final_state(const std::vector<int>& base_indices, NodeId w_input,
                                      NodeId w_recur, NodeId bias) {
    const Matrix& Wi = value(w_input);
    const Matrix& Wr = value(w_recur);
    const Matrix& B = value(bias);
    const int H = Wr.cols;
    if (Wi.rows != 4 * H || Wi.cols != 4) throw ConfigError("lstm: input weight shape mismatch");
    if (Wr.rows != 4 * H) throw ConfigError("lstm: recurrent weight shape mismatch");
    if (B.rows != 1 || B.cols != 4 * H) throw ConfigError("lstm: bias shape mismatch");
    const int T = static_cast<int>(base_indices.size());
    if (T == 0) throw ConfigError("lstm: empty input");

    // Stored activations for backpropagation through time: gates (i,f,g,o),
    // cell states, and hidden states per step.
    auto gates = std::make_shared<Matrix>(T, 4 * H);
    auto cells = std::make_shared<Matrix>(T, H);
    auto hiddens = std::make_shared<Matrix>(T, H);

    std::vector<double> h(static_cast<std::size_t>(H), 0.0);
    std::vector<double> c(static_cast<std::size_t>(H), 0.0);
    std::vector<double> a(static_cast<std::size_t>(4 * H));
    for (int t = 0; t < T; ++t) {
        const int xb = base_indices[static_cast<std::size_t>(t)];
        for (int r = 0; r < 4 * H; ++r) {
            double acc = B.data[static_cast<std::size_t>(r)];
            if (xb >= 0) acc += Wi.at(r, xb);  // one-hot input selects one column
            const double* wrow = Wr.row(r);
            for (int j = 0; j < H; ++j) acc += wrow[j] * h[static_cast<std::size_t>(j)];
            a[static_cast<std::size_t>(r)] = acc;
        }
        double* grow = gates->row(t);
        double* crow = cells->row(t);
        double* hrow = hiddens->row(t);
        for (int j = 0; j < H; ++j) {
            const double gi = stable_sigmoid(a[static_cast<std::size_t>(j)]);
            const double gf = stable_sigmoid(a[static_cast<std::size_t>(H + j)]);
            const double gg = std::tanh(a[static_cast<std::size_t>(2 * H + j)]);
            const double go = stable_sigmoid(a[static_cast<std::size_t>(3 * H + j)]);
            grow[j] = gi;
            grow[H + j] = gf;
            grow[2 * H + j] = gg;
            grow[3 * H + j] = go;
            c[static_cast<std::size_t>(j)] = gf * c[static_cast<std::size_t>(j)] + gi * gg;
            crow[j] = c[static_cast<std::size_t>(j)];
            h[static_cast<std::size_t>(j)] = go * std::tanh(c[static_cast<std::size_t>(j)]);
            hrow[j] = h[static_cast<std::size_t>(j)];
        }
    }
    Matrix out(1, H);
    for (int j = 0; j < H; ++j) out.data[static_cast<std::size_t>(j)] = h[static_cast<std::size_t>(j)];

    const NodeId id = push(std::move(out), needs(w_input) || needs(w_recur) || needs(bias));
    if (!nodes_.back().needs_grad) return id;
    auto idx = std::make_shared<std::vector<int>>(base_indices);
    nodes_.back().backprop = [this, id, w_input, w_recur, bias, idx, gates, cells, hiddens] {
        const Matrix& go_out = grad_ref(id);
        const Matrix& Wr = value(w_recur);
        const int H = Wr.cols;
        const int T = static_cast<int>(idx->size());

        const bool need_wi = needs(w_input);
        const bool need_wr = needs(w_recur);
        const bool need_b = needs(bias);
        Matrix* gwi = need_wi ? &grad_ref(w_input) : nullptr;
        Matrix* gwr = need_wr ? &grad_ref(w_recur) : nullptr;
        Matrix* gb = need_b ? &grad_ref(bias) : nullptr;

        std::vector<double> dh(go_out.data.begin(), go_out.data.end());
        std::vector<double> dc(static_cast<std::size_t>(H), 0.0);
        std::vector<double> da(static_cast<std::size_t>(4 * H));
        for (int t = T - 1; t >= 0; --t) {
            const double* grow = gates->row(t);
            const double* crow = cells->row(t);
            for (int j = 0; j < H; ++j) {
                const double gi = grow[j];
                const double gf = grow[H + j];
                const double gg = grow[2 * H + j];
                const double gout = grow[3 * H + j];
                const double tc = std::tanh(crow[j]);
                const double dout = dh[static_cast<std::size_t>(j)] * tc;
                double dct = dc[static_cast<std::size_t>(j)] +
                             dh[static_cast<std::size_t>(j)] * gout * (1.0 - tc * tc);
                const double cprev = t > 0 ? cells->at(t - 1, j) : 0.0;
                const double di = dct * gg;
                const double df = dct * cprev;
                const double dg = dct * gi;
                dc[static_cast<std::size_t>(j)] = dct * gf;
                da[static_cast<std::size_t>(j)] = di * gi * (1.0 - gi);
                da[static_cast<std::size_t>(H + j)] = df * gf * (1.0 - gf);
                da[static_cast<std::size_t>(2 * H + j)] = dg * (1.0 - gg * gg);
                da[static_cast<std::size_t>(3 * H + j)] = dout * gout * (1.0 - gout);
            }
            const int xb = (*idx)[static_cast<std::size_t>(t)];
            for (int r = 0; r < 4 * H; ++r) {
                const double d = da[static_cast<std::size_t>(r)];
                if (d == 0.0) continue;
                if (gb) gb->data[static_cast<std::size_t>(r)] += d;
                if (gwi && xb >= 0) gwi->at(r, xb) += d;
                if (gwr && t > 0) {
                    const double* hprev = hiddens->row(t - 1);
                    double* wrow = gwr->row(r);
                    for (int j = 0; j < H; ++j) wrow[j] += d * hprev[j];
                }
            }
            // dh_{t-1} = Wrᵀ · da
            std::fill(dh.begin(), dh.end(), 0.0);
            if (t > 0) {
                for (int r = 0; r < 4 * H; ++r) {
                    const double d = da[static_cast<std::size_t>(r)];
                    if (d == 0.0) continue;
                    const double* wrow = Wr.row(r);
                    for (int j = 0; j < H; ++j) dh[static_cast<std::size_t>(j)] += d * wrow[j];
                }
            }
        }
    };
    return id;
}

Graph::NodeId Graph::cross_entropy_sum(NodeId logits, std::vector<int> targets) {
    const Matrix& L = value(logits);
    if (static_cast<int>(targets.size()) != L.rows)
        throw ConfigError("cross_entropy_sum: target count mismatch");
    auto probs = std::make_shared<Matrix>(L.rows, L.cols);
    double total = 0.0;
    for (int i = 0; i < L.rows; ++i) {
        const int t = targets[static_cast<std::size_t>(i)];
        if (t < 0 || t >= L.cols) throw ConfigError("cross_entropy_sum: target out of range");
        const double* lrow = L.row(i);
        double mx = lrow[0];
        for (int j = 1; j < L.cols; ++j) mx = std::max(mx, lrow[j]);
        double sum = 0.0;
        double* prow = probs->row(i);
        for (int j = 0; j < L.cols; ++j) {
            prow[j] = std::exp(lrow[j] - mx);
            sum += prow[j];
        }
        for (int j = 0; j < L.cols; ++j) prow[j] /= sum;
        total += std::log(sum) + mx - lrow[t];
    }
    Matrix out(1, 1);
    out.data[0] = total;
    const NodeId id = push(std::move(out), needs(logits));
    if (!nodes_.back().needs_grad) return id;
    auto tgt = std::make_shared<std::vector<int>>(std::move(targets));
    nodes_.back().backprop = [this, id, logits, probs, tgt] {
        const double up = grad_ref(id).data[0];
        Matrix& gl = grad_ref(logits);
        for (int i = 0; i < gl.rows; ++i) {
            const double* prow = probs->row(i);
            double* grow = gl.row(i);
            for (int j = 0; j < gl.cols; ++j) grow[j] += up * prow[j];
            grow[(*tgt)[static_cast<std::size_t>(i)]] -= up;
        }
    };
    return id;
}

Adam::Adam(std::vector<Parameter*> params, double learning_rate, double beta1, double beta2,
           double epsilon)
    : params_(std::move(params)),
      learning_rate_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Parameter* p : params_) {
        m_.emplace_back(p->value.rows, p->value.cols);
        v_.emplace_back(p->value.rows, p->value.cols);
    }
}

void Adam::step() {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        Parameter& p = *params_[pi];
        if (!p.trainable) continue;
        Matrix& m = m_[pi];
        Matrix& v = v_[pi];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad.data[i];
            m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * g;
            v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * g * g;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p.value.data[i] -= learning_rate_ * mhat / (std::sqrt(vhat) + epsilon_);
        }
        round_to_float32(p.value);
        round_to_float32(m);
        round_to_float32(v);
        p.zero_grad();
    }
}

}  // namespace genolm
