#include <cmath>
#include <vector>

#include "doctest.h"
#include "genolm/autograd.hpp"
#include "genolm/rng.hpp"
#include "test_util.hpp"

using namespace genolm;

namespace {

// Deterministic varied fill, bounded away from relu/max kinks.
void fill_varied(Matrix& m, double scale = 1.0, double shift = 0.0) {
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) {
            double v = 0.23 * i - 0.31 * j + 0.11 * ((i * 7 + j * 3) % 5) + 0.17;
            m.at(i, j) = scale * v + shift;
        }
}

// Reduces any node to 1x1 with distinct per-entry weights so transposition
// and indexing mistakes show up in the gradient: L = a • X • b.
Graph::NodeId weighted_scalar(Graph& g, Graph::NodeId x) {
    const Matrix& v = g.value(x);
    Matrix a(1, v.rows), b(v.cols, 1);
    for (int i = 0; i < v.rows; ++i) a.at(0, i) = 0.3 + 0.21 * i;
    for (int j = 0; j < v.cols; ++j) b.at(j, 0) = 0.5 - 0.17 * j + 0.02 * j * j;
    return g.matmul(g.matmul(g.constant(a), x), g.constant(b));
}

}  // namespace

TEST_CASE("gradcheck: matmul") {
    Parameter a("a", 2, 3), b("b", 3, 4);
    fill_varied(a.value);
    fill_varied(b.value, 0.7, 0.1);
    auto loss = [&](bool back) {
        Graph g;
        auto l = weighted_scalar(g, g.matmul(g.leaf(a), g.leaf(b)));
        if (back) g.backward(l);
        return g.value(l).at(0, 0);
    };
    CHECK(testutil::max_gradcheck_error({&a, &b}, loss) < 1e-6);
}

TEST_CASE("gradcheck: matmul_nt against explicit transpose") {
    Parameter a("a", 2, 3), b("b", 4, 3);  // b stored out x in
    fill_varied(a.value, 0.9);
    fill_varied(b.value, 0.6, -0.2);
    auto loss = [&](bool back) {
        Graph g;
        auto l = weighted_scalar(g, g.matmul_nt(g.leaf(a), g.leaf(b)));
        if (back) g.backward(l);
        return g.value(l).at(0, 0);
    };
    CHECK(testutil::max_gradcheck_error({&a, &b}, loss) < 1e-6);

    // value check: A·Bᵀ entry by entry
    Graph g;
    auto out = g.matmul_nt(g.leaf(a), g.leaf(b));
    const Matrix& got = g.value(out);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 4; ++j) {
            double want = 0.0;
            for (int k = 0; k < 3; ++k) want += a.value.at(i, k) * b.value.at(j, k);
            CHECK(got.at(i, j) == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("gradcheck: add, mul, scale, add_rowvec") {
    Parameter a("a", 3, 4), b("b", 3, 4), v("v", 1, 4);
    fill_varied(a.value);
    fill_varied(b.value, 0.8, 0.3);
    fill_varied(v.value, 0.5);
    auto loss = [&](bool back) {
        Graph g;
        auto sum = g.add(g.leaf(a), g.leaf(b));
        auto prod = g.mul(sum, g.leaf(b));
        auto scaled = g.scale(prod, 0.37);
        auto shifted = g.add_rowvec(scaled, g.leaf(v));
        auto l = weighted_scalar(g, shifted);
        if (back) g.backward(l);
        return g.value(l).at(0, 0);
    };
    CHECK(testutil::max_gradcheck_error({&a, &b, &v}, loss) < 1e-6);
}

TEST_CASE("gradcheck: sigmoid, tanh, swish") {
    Parameter a("a", 3, 3);
    fill_varied(a.value, 0.8);
    auto loss = [&](bool back) {
        Graph g;
        auto x = g.leaf(a);
        auto l = weighted_scalar(g, g.sigmoid(g.tanh_op(g.swish(x))));
        if (back) g.backward(l);
        return g.value(l).at(0, 0);
    };
    CHECK(testutil::max_gradcheck_error({&a}, loss) < 1e-6);
}

TEST_CASE("gradcheck: relu away from the kink") {
    Parameter a("a", 3, 4);
    fill_varied(a.value);  // entries are multiples of 0.01 with |.| >= 0.02
    auto loss = [&](bool back) {
        Graph g;
        auto l = weighted_scalar(g, g.relu(g.leaf(a)));
        if (back) g.backward(l);
        return g.value(l).at(0, 0);
    };
    CHECK(testutil::max_gradcheck_error({&a}, loss) < 1e-6);
    // value: negatives clamp to zero
    Graph g;
    Matrix m(1, 2);
    m.at(0, 0) = -1.5;
    m.at(0, 1) = 2.5;
    const Matrix& out = g.value(g.relu(g.constant(m)));
    CHECK(out.at(0, 0) == 0.0);
    CHECK(out.at(0, 1) == 2.5);
}

TEST_CASE("gradcheck: layer_norm") {
    Parameter x("x", 3, 6), gamma("gamma", 1, 6), beta("beta", 1, 6);
    fill_varied(x.value, 1.3);
    fill_varied(gamma.value, 0.4, 1.0);
    fill_varied(beta.value, 0.3);
    auto loss = [&](bool back) {
        Graph g;
        auto l = weighted_scalar(g, g.layer_norm(g.leaf(x), g.leaf(gamma), g.leaf(beta)));
        if (back) g.backward(l);
        return g.value(l).at(0, 0);
    };
    CHECK(testutil::max_gradcheck_error({&x, &gamma, &beta}, loss) < 1e-5);
    // rows are normalized: mean 0, variance ~1 before the affine part
    Graph g;
    Matrix ones_gamma(1, 6), zero_beta(1, 6);
    for (int j = 0; j < 6; ++j) ones_gamma.at(0, j) = 1.0;
    auto out = g.layer_norm(g.leaf(x), g.constant(ones_gamma), g.constant(zero_beta));
    const Matrix& v = g.value(out);
    for (int i = 0; i < v.rows; ++i) {
        double mean = 0.0, var = 0.0;
        for (int j = 0; j < v.cols; ++j) mean += v.at(i, j);
        mean /= v.cols;
        for (int j = 0; j < v.cols; ++j) var += (v.at(i, j) - mean) * (v.at(i, j) - mean);
        var /= v.cols;
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps in the denominator
    }
}

TEST_CASE("gradcheck: masked row softmax zeroes invalid keys") {
    Parameter s("s", 3, 5);
    fill_varied(s.value, 1.1);
    const std::vector<bool> valid = {true, true, false, true, false};
    auto loss = [&](bool back) {
        Graph g;
        auto l = weighted_scalar(g, g.softmax_rows_masked(g.leaf(s), valid));
        if (back) g.backward(l);
        return g.value(l).at(0, 0);
    };
    CHECK(testutil::max_gradcheck_error({&s}, loss) < 1e-6);

    Graph g;
    const Matrix& p = g.value(g.softmax_rows_masked(g.leaf(s), valid));
    for (int i = 0; i < p.rows; ++i) {
        double row_sum = 0.0;
        for (int j = 0; j < p.cols; ++j) {
            if (!valid[static_cast<std::size_t>(j)]) CHECK(p.at(i, j) == 0.0);
            CHECK(p.at(i, j) >= 0.0);
            row_sum += p.at(i, j);
        }
        CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("gradcheck: rotary rotation with and without position offset") {
    Parameter x("x", 4, 6);
    fill_varied(x.value);
    for (int offset : {0, 3}) {
        auto loss = [&](bool back) {
            Graph g;
            auto l = weighted_scalar(g, g.rope(g.leaf(x), 10000.0, offset));
            if (back) g.backward(l);
            return g.value(l).at(0, 0);
        };
        CHECK(testutil::max_gradcheck_error({&x}, loss) < 1e-6);
    }
    // rotations preserve the norm of every pair
    Graph g;
    const Matrix& r = g.value(g.rope(g.leaf(x), 10000.0, 0));
    for (int i = 0; i < 4; ++i)
        for (int p = 0; p < 3; ++p) {
            const double before =
                x.value.at(i, 2 * p) * x.value.at(i, 2 * p) + x.value.at(i, 2 * p + 1) * x.value.at(i, 2 * p + 1);
            const double after = r.at(i, 2 * p) * r.at(i, 2 * p) + r.at(i, 2 * p + 1) * r.at(i, 2 * p + 1);
            CHECK(after == doctest::Approx(before).epsilon(1e-12));
        }
}

TEST_CASE("gradcheck: slice, concat, gather (with repeats), mean, max") {
    Parameter x("x", 5, 6);
    fill_varied(x.value);
    const std::vector<bool> keep = {true, false, true, true, false};
    auto loss = [&](bool back) {
        Graph g;
        auto node = g.leaf(x);
        auto left = g.slice_cols(node, 0, 3);
        auto right = g.slice_cols(node, 3, 3);
        auto glued = g.concat_cols({right, left});
        auto gathered = g.gather_rows(glued, {0, 2, 0, 4});  // row 0 used twice
        auto pooled = g.mean_rows_masked(node, keep);
        auto l = g.add(weighted_scalar(g, gathered),
                       g.add(weighted_scalar(g, pooled), weighted_scalar(g, g.max_over_rows(node))));
        if (back) g.backward(l);
        return g.value(l).at(0, 0);
    };
    CHECK(testutil::max_gradcheck_error({&x}, loss) < 1e-6);
}

TEST_CASE("max_over_rows takes the column-wise maximum") {
    Graph g;
    Matrix m(3, 2);
    m.at(0, 0) = 1.0;
    m.at(1, 0) = 5.0;
    m.at(2, 0) = 3.0;
    m.at(0, 1) = -1.0;
    m.at(1, 1) = -7.0;
    m.at(2, 1) = -2.0;
    const Matrix& out = g.value(g.max_over_rows(g.constant(m)));
    REQUIRE(out.rows == 1);
    CHECK(out.at(0, 0) == 5.0);
    CHECK(out.at(0, 1) == -1.0);
}

TEST_CASE("gradcheck: dropout with a replayed mask") {
    Parameter x("x", 4, 5);
    fill_varied(x.value);
    auto loss = [&](bool back) {
        Graph g;
        Rng rng(42);  // identical mask on every rebuild
        auto l = weighted_scalar(g, g.dropout(g.leaf(x), 0.4, rng));
        if (back) g.backward(l);
        return g.value(l).at(0, 0);
    };
    CHECK(testutil::max_gradcheck_error({&x}, loss) < 1e-6);
    // dropped entries are zero, kept entries are scaled by 1/(1-rate)
    Graph g;
    Rng rng(42);
    const Matrix& out = g.value(g.dropout(g.leaf(x), 0.4, rng));
    int dropped = 0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) {
            if (out.at(i, j) == 0.0) {
                ++dropped;
            } else {
                CHECK(out.at(i, j) ==
                      doctest::Approx(x.value.at(i, j) / 0.6).epsilon(1e-12));
            }
        }
    CHECK(dropped > 0);
    CHECK(dropped < 20);
}

TEST_CASE("gradcheck: one-hot convolution with N positions") {
    Parameter w("w", 3, 8), b("b", 1, 3);  // 3 filters, kernel width 2
    fill_varied(w.value, 0.7);
    fill_varied(b.value, 0.4);
    const std::vector<int> bases = {0, 2, -1, 3, 1, 0};  // includes an all-zero column
    auto loss = [&](bool back) {
        Graph g;
        auto l = weighted_scalar(g, g.conv1d_onehot(bases, g.leaf(w), g.leaf(b), 2));
        if (back) g.backward(l);
        return g.value(l).at(0, 0);
    };
    CHECK(testutil::max_gradcheck_error({&w, &b}, loss) < 1e-6);

    // value check at one output position: window (0,2) = bases A,G
    Graph g;
    const Matrix& out = g.value(g.conv1d_onehot(bases, g.leaf(w), g.leaf(b), 2));
    REQUIRE(out.rows == 5);  // 6 - 2 + 1
    REQUIRE(out.cols == 3);
    for (int f = 0; f < 3; ++f) {
        // layout: position-major, 4 channels per kernel position
        const double want = w.value.at(f, 0 * 4 + 0) + w.value.at(f, 1 * 4 + 2) + b.value.at(0, f);
        CHECK(out.at(0, f) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("gradcheck: LSTM final state") {
    const int H = 4;
    Parameter wi("wi", 4 * H, 4), wr("wr", 4 * H, H), b("b", 1, 4 * H);
    fill_varied(wi.value, 0.35);
    fill_varied(wr.value, 0.3, 0.05);
    fill_varied(b.value, 0.2);
    const std::vector<int> bases = {0, 3, 1, -1, 2, 0, 1, 3};
    auto loss = [&](bool back) {
        Graph g;
        auto l = weighted_scalar(g, g.lstm_final_state(bases, g.leaf(wi), g.leaf(wr), g.leaf(b)));
        if (back) g.backward(l);
        return g.value(l).at(0, 0);
    };
    CHECK(testutil::max_gradcheck_error({&wi, &wr, &b}, loss) < 1e-5);
}

TEST_CASE("gradcheck: softmax cross-entropy sum") {
    Parameter logits("logits", 3, 4);
    fill_varied(logits.value, 1.2);
    const std::vector<int> targets = {1, 3, 0};
    auto loss = [&](bool back) {
        Graph g;
        auto l = g.cross_entropy_sum(g.leaf(logits), targets);
        if (back) g.backward(l);
        return g.value(l).at(0, 0);
    };
    CHECK(testutil::max_gradcheck_error({&logits}, loss) < 1e-6);

    // hand value: sum of -log softmax at the target entries
    Graph g;
    const double got = g.value(g.cross_entropy_sum(g.leaf(logits), targets)).at(0, 0);
    double want = 0.0;
    for (int i = 0; i < 3; ++i) {
        double denom = 0.0;
        for (int j = 0; j < 4; ++j) denom += std::exp(logits.value.at(i, j));
        want -= std::log(std::exp(logits.value.at(i, targets[static_cast<std::size_t>(i)])) / denom);
    }
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("gradients accumulate across graphs until cleared") {
    Parameter w("w", 2, 2);
    fill_varied(w.value);
    auto run_once = [&] {
        Graph g;
        auto l = weighted_scalar(g, g.sigmoid(g.leaf(w)));
        g.backward(l);
    };
    w.zero_grad();
    run_once();
    const Matrix first = w.grad;
    run_once();  // no zero_grad in between
    for (std::size_t i = 0; i < w.grad.data.size(); ++i)
        CHECK(w.grad.data[i] == doctest::Approx(2.0 * first.data[i]).epsilon(1e-12));
    w.zero_grad();
    for (double v : w.grad.data) CHECK(v == 0.0);
}

TEST_CASE("non-trainable parameters act as constants") {
    Parameter w("w", 2, 2);
    fill_varied(w.value);
    w.trainable = false;
    w.zero_grad();
    Graph g;
    auto l = weighted_scalar(g, g.leaf(w));
    g.backward(l);
    for (double v : w.grad.data) CHECK(v == 0.0);
}

TEST_CASE("grad_of exposes interior gradients after backward") {
    Parameter w("w", 1, 2);
    w.value.at(0, 0) = 0.3;
    w.value.at(0, 1) = -0.4;
    Graph g;
    auto x = g.leaf(w);
    auto y = g.scale(x, 2.0);
    auto l = weighted_scalar(g, y);
    g.backward(l);
    const Matrix gy = g.grad_of(y);
    const Matrix gx = g.grad_of(x);
    for (std::size_t i = 0; i < gy.data.size(); ++i)
        CHECK(gx.data[i] == doctest::Approx(2.0 * gy.data[i]).epsilon(1e-12));
}

TEST_CASE("round_to_float32 snaps to the nearest single-precision value") {
    Matrix m(1, 3);
    m.at(0, 0) = 0.1;
    m.at(0, 1) = 1.0 / 3.0;
    m.at(0, 2) = 1.0;  // already representable
    round_to_float32(m);
    CHECK(m.at(0, 0) == static_cast<double>(0.1f));
    CHECK(m.at(0, 1) == static_cast<double>(static_cast<float>(1.0 / 3.0)));
    CHECK(m.at(0, 2) == 1.0);
}

TEST_CASE("Adam first step matches the closed form and rounds to float32") {
    Parameter w("w", 1, 2);
    w.value.at(0, 0) = 1.0;
    w.value.at(0, 1) = -2.0;
    w.grad.at(0, 0) = 2.0;
    w.grad.at(0, 1) = -0.5;
    Adam opt({&w}, 0.1);
    opt.step();
    // bias-corrected first step: theta -= lr * g / (|g| + eps)
    CHECK(w.value.at(0, 0) ==
          doctest::Approx(static_cast<double>(static_cast<float>(1.0 - 0.1 * (2.0 / (2.0 + 1e-8))))));
    CHECK(w.value.at(0, 1) ==
          doctest::Approx(static_cast<double>(static_cast<float>(-2.0 + 0.1 * (0.5 / (0.5 + 1e-8))))));
    CHECK(opt.step_count() == 1);
    for (double v : w.grad.data) CHECK(v == 0.0);  // grads consumed
    // value sits exactly on the float32 grid
    for (double v : w.value.data) CHECK(v == static_cast<double>(static_cast<float>(v)));
}

TEST_CASE("Adam descends a simple quadratic") {
    Parameter w("w", 1, 1);
    w.value.at(0, 0) = 3.0;
    Adam opt({&w}, 0.05);
    for (int step = 0; step < 400; ++step) {
        // d/dw (w - 1)^2 = 2 (w - 1)
        w.grad.at(0, 0) = 2.0 * (w.value.at(0, 0) - 1.0);
        opt.step();
    }
    CHECK(w.value.at(0, 0) == doctest::Approx(1.0).epsilon(1e-2));
}
