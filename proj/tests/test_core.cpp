#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "core/graph.hpp"
#include "core/image.hpp"
#include "core/rng.hpp"
#include "core/serialize.hpp"
#include "core/tensor.hpp"
#include "gradcheck.hpp"

using namespace a2v;
namespace fs = std::filesystem;

TEST_CASE("tensor basics") {
    Tensor t({2, 3}, 1.5);
    CHECK(t.numel() == 6);
    CHECK(t.at2(1, 2) == 1.5);
    Tensor r = t.reshaped({3, 2});
    CHECK(r.shape == std::vector<int64_t>{3, 2});
    CHECK_THROWS(t.reshaped({4, 2}));
    CHECK(digest(t) == digest(Tensor({2, 3}, 1.5)));
    CHECK(digest(t) != digest(t.reshaped({3, 2})));
}

TEST_CASE("rng determinism and distribution sanity") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    CHECK(a.next_u64() != c.next_u64());

    Rng r(7);
    double mean = 0.0, var = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double x = r.normal();
        mean += x;
        var += x * x;
    }
    mean /= n;
    var = var / n - mean * mean;
    CHECK(std::fabs(mean) < 0.01);
    CHECK(std::fabs(var - 1.0) < 0.02);

    CHECK(Rng::derive(1, 2) != Rng::derive(1, 3));
    CHECK(Rng::derive(1, 2) == Rng::derive(1, 2));
}

namespace {

// builds loss = mean(op_output * weights) so every output element gets a
// distinct gradient path
double scalarize(Graph& g, NodeId out, const Tensor& weights) {
    NodeId w = g.input(weights, false);
    return g.val(g.mean_all(g.mul(out, w))).data[0];
}

template <typename BuildOp>
void check_unary(const char* name, std::vector<int64_t> shape, BuildOp build, double input_scale = 1.0,
                 double input_offset = 0.0, double tol = 1e-4) {
    Rng rng(fnv1a(name, strlen(name)));
    Tensor x0 = gradcheck::random_tensor(shape, rng, input_scale);
    for (double& v : x0.data) v += input_offset;

    int64_t out_numel;
    {
        Graph probe;
        out_numel = probe.val(build(probe, probe.input(x0, false))).numel();
    }
    Tensor w = gradcheck::random_tensor({out_numel}, rng);

    auto eval = [&](const Tensor& x) {
        Graph g;
        NodeId in = g.input(x, false);
        NodeId out = g.reshape(build(g, in), {out_numel});
        return scalarize(g, out, w);
    };

    Graph g;
    NodeId in = g.input(x0, true);
    NodeId out = g.reshape(build(g, in), {out_numel});
    NodeId loss = g.mean_all(g.mul(out, g.input(w, false)));
    g.backward(loss);
    double err = gradcheck::max_rel_error(x0, g.grad(in), eval);
    INFO(name, " max rel err ", err);
    CHECK(err < tol);
}

}  // namespace

TEST_CASE("autodiff gradients match central differences") {
    check_unary("gelu", {3, 4}, [](Graph& g, NodeId x) { return g.gelu(x); });
    check_unary("exp", {3, 4}, [](Graph& g, NodeId x) { return g.exp(x); }, 0.5);
    check_unary("log", {3, 4}, [](Graph& g, NodeId x) { return g.log(x); }, 0.1, 2.0);
    check_unary("sqrt", {3, 4}, [](Graph& g, NodeId x) { return g.sqrt(x); }, 0.1, 2.0);
    check_unary("softmax", {3, 5}, [](Graph& g, NodeId x) { return g.softmax_rows(x); });
    check_unary("layernorm", {3, 6}, [](Graph& g, NodeId x) { return g.layernorm_rows(x); });
    check_unary("scale", {2, 3}, [](Graph& g, NodeId x) { return g.scale(x, -2.5); });
    check_unary("sum_rows", {4, 3}, [](Graph& g, NodeId x) { return g.reshape(g.sum_rows(x), {4, 1}); });
    check_unary("transpose", {3, 4}, [](Graph& g, NodeId x) { return g.transpose(x); });
    check_unary("slice_rows", {5, 3}, [](Graph& g, NodeId x) { return g.slice_rows(x, 1, 4); });
    check_unary("slice_cols", {3, 5}, [](Graph& g, NodeId x) { return g.slice_cols(x, 2, 5); });
    check_unary("repeat_rows", {3, 2}, [](Graph& g, NodeId x) { return g.repeat_rows(x, 3); });
}

TEST_CASE("binary op gradients") {
    Rng rng(99);
    Tensor a0 = gradcheck::random_tensor({3, 4}, rng);
    Tensor b0 = gradcheck::random_tensor({3, 4}, rng);
    for (double& v : b0.data) v += 3.0;  // keep div well-conditioned
    Tensor w = gradcheck::random_tensor({12}, rng);

    auto run = [&](auto op) {
        auto eval_a = [&](const Tensor& a) {
            Graph g;
            NodeId out = g.reshape(op(g, g.input(a, false), g.input(b0, false)), {12});
            return scalarize(g, out, w);
        };
        auto eval_b = [&](const Tensor& b) {
            Graph g;
            NodeId out = g.reshape(op(g, g.input(a0, false), g.input(b, false)), {12});
            return scalarize(g, out, w);
        };
        Graph g;
        NodeId na = g.input(a0, true), nb = g.input(b0, true);
        NodeId loss = g.mean_all(g.mul(g.reshape(op(g, na, nb), {12}), g.input(w, false)));
        g.backward(loss);
        CHECK(gradcheck::max_rel_error(a0, g.grad(na), eval_a) < 1e-4);
        CHECK(gradcheck::max_rel_error(b0, g.grad(nb), eval_b) < 1e-4);
    };
    run([](Graph& g, NodeId a, NodeId b) { return g.add(a, b); });
    run([](Graph& g, NodeId a, NodeId b) { return g.sub(a, b); });
    run([](Graph& g, NodeId a, NodeId b) { return g.mul(a, b); });
    run([](Graph& g, NodeId a, NodeId b) { return g.div(a, b); });
}

TEST_CASE("matmul, rowvec and conv gradients") {
    Rng rng(123);
    Tensor A = gradcheck::random_tensor({3, 4}, rng);
    Tensor B = gradcheck::random_tensor({4, 5}, rng);
    Tensor w = gradcheck::random_tensor({15}, rng);
    {
        auto eval_a = [&](const Tensor& a) {
            Graph g;
            return scalarize(g, g.reshape(g.matmul(g.input(a, false), g.input(B, false)), {15}), w);
        };
        auto eval_b = [&](const Tensor& b) {
            Graph g;
            return scalarize(g, g.reshape(g.matmul(g.input(A, false), g.input(b, false)), {15}), w);
        };
        Graph g;
        NodeId na = g.input(A, true), nb = g.input(B, true);
        NodeId loss = g.mean_all(g.mul(g.reshape(g.matmul(na, nb), {15}), g.input(w, false)));
        g.backward(loss);
        CHECK(gradcheck::max_rel_error(A, g.grad(na), eval_a) < 1e-4);
        CHECK(gradcheck::max_rel_error(B, g.grad(nb), eval_b) < 1e-4);
    }
    {
        Tensor v = gradcheck::random_tensor({4}, rng);
        Tensor w2 = gradcheck::random_tensor({12}, rng);
        auto eval_v = [&](const Tensor& vv) {
            Graph g;
            return scalarize(g, g.reshape(g.add_rowvec(g.input(A, false), g.input(vv, false)), {12}), w2);
        };
        Graph g;
        NodeId nv = g.input(v, true);
        NodeId loss = g.mean_all(g.mul(g.reshape(g.add_rowvec(g.input(A, false), nv), {12}), g.input(w2, false)));
        g.backward(loss);
        CHECK(gradcheck::max_rel_error(v, g.grad(nv), eval_v) < 1e-4);
    }
    {
        Tensor d = gradcheck::random_tensor({3}, rng);
        for (double& x : d.data) x += 3.0;
        Tensor w2 = gradcheck::random_tensor({12}, rng);
        auto eval_d = [&](const Tensor& dd) {
            Graph g;
            return scalarize(g, g.reshape(g.div_rows(g.input(A, false), g.input(dd, false)), {12}), w2);
        };
        Graph g;
        NodeId nd = g.input(d, true);
        NodeId loss = g.mean_all(g.mul(g.reshape(g.div_rows(g.input(A, false), nd), {12}), g.input(w2, false)));
        g.backward(loss);
        CHECK(gradcheck::max_rel_error(d, g.grad(nd), eval_d) < 1e-4);
    }
    {
        // conv1d_causal: stride 2, K=3, pad 2 over T=9
        Tensor x = gradcheck::random_tensor({9, 3}, rng);
        Tensor cw = gradcheck::random_tensor({3, 3, 4}, rng);
        Tensor cb = gradcheck::random_tensor({4}, rng);
        Tensor w2 = gradcheck::random_tensor({5 * 4}, rng);
        auto make = [&](const Tensor& xx, const Tensor& ww, const Tensor& bb) {
            Graph g;
            NodeId out = g.conv1d_causal(g.input(xx, false), g.input(ww, false), g.input(bb, false), 2, 2);
            return scalarize(g, g.reshape(out, {20}), w2);
        };
        Graph g;
        NodeId nx = g.input(x, true), nw = g.input(cw, true), nb = g.input(cb, true);
        NodeId loss =
            g.mean_all(g.mul(g.reshape(g.conv1d_causal(nx, nw, nb, 2, 2), {20}), g.input(w2, false)));
        g.backward(loss);
        CHECK(gradcheck::max_rel_error(x, g.grad(nx), [&](const Tensor& t) { return make(t, cw, cb); }) < 1e-4);
        CHECK(gradcheck::max_rel_error(cw, g.grad(nw), [&](const Tensor& t) { return make(x, t, cb); }) < 1e-4);
        CHECK(gradcheck::max_rel_error(cb, g.grad(nb), [&](const Tensor& t) { return make(x, cw, t); }) < 1e-4);
    }
}

TEST_CASE("gather and concat gradients") {
    Rng rng(321);
    Tensor x = gradcheck::random_tensor({6}, rng);
    auto idx = std::make_shared<std::vector<int64_t>>(std::vector<int64_t>{5, 0, 0, 3});
    Tensor w = gradcheck::random_tensor({4}, rng);
    auto eval = [&](const Tensor& t) {
        Graph g;
        return scalarize(g, g.gather(g.input(t, false), idx, {4}), w);
    };
    Graph g;
    NodeId nx = g.input(x, true);
    NodeId loss = g.mean_all(g.mul(g.gather(nx, idx, {4}), g.input(w, false)));
    g.backward(loss);
    CHECK(gradcheck::max_rel_error(x, g.grad(nx), eval) < 1e-4);

    Tensor a = gradcheck::random_tensor({2, 3}, rng);
    Tensor b = gradcheck::random_tensor({1, 3}, rng);
    Tensor w2 = gradcheck::random_tensor({9}, rng);
    auto eval_a = [&](const Tensor& t) {
        Graph g2;
        NodeId cat = g2.concat_rows({g2.input(t, false), g2.input(b, false)});
        return scalarize(g2, g2.reshape(cat, {9}), w2);
    };
    Graph g2;
    NodeId na = g2.input(a, true);
    NodeId loss2 = g2.mean_all(g2.mul(g2.reshape(g2.concat_rows({na, g2.input(b, false)}), {9}), g2.input(w2, false)));
    g2.backward(loss2);
    CHECK(gradcheck::max_rel_error(a, g2.grad(na), eval_a) < 1e-4);
}

TEST_CASE("adam reduces a simple quadratic") {
    ParamStore ps;
    ps.add("x", Tensor({4}, 3.0));
    AdamOptimizer opt(0.05);
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 400; ++step) {
        Graph g;
        Binder bind(g, ps);
        NodeId x = bind("x");
        NodeId loss = g.mean_all(g.mul(x, x));
        if (step == 0) first = g.val(loss).data[0];
        last = g.val(loss).data[0];
        ps.zero_grad();
        g.backward(loss);
        bind.harvest();
        opt.step(ps);
    }
    CHECK(last < first * 1e-3);
}

TEST_CASE("array container roundtrip and corruption detection") {
    fs::path dir = fs::temp_directory_path() / "a2v_test_arr";
    fs::create_directories(dir);
    std::string path = (dir / "t.arr").string();

    Rng rng(5);
    ArrayFile f;
    f.meta_json = R"({"note":"x"})";
    f.put("alpha", gradcheck::random_tensor({3, 4}, rng));
    f.put("beta", gradcheck::random_tensor({7}, rng));
    f.save(path);

    ArrayFile g = ArrayFile::load(path);
    CHECK(g.order == std::vector<std::string>{"alpha", "beta"});
    CHECK(max_abs_diff(f.get("alpha"), g.get("alpha")) == 0.0);
    CHECK(max_abs_diff(f.get("beta"), g.get("beta")) == 0.0);

    // truncation
    {
        std::ifstream is(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        std::ofstream os(path + ".trunc", std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 16));
    }
    CHECK_THROWS_WITH_AS(ArrayFile::load(path + ".trunc"), doctest::Contains("truncated"), std::runtime_error);

    // bit flip in payload -> checksum error
    {
        std::ifstream is(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        bytes[bytes.size() - 5] ^= 0x40;
        std::ofstream os(path + ".flip", std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_WITH_AS(ArrayFile::load(path + ".flip"), doctest::Contains("checksum"), std::runtime_error);

    // version bump unreadable
    {
        std::ifstream is(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        bytes[8] = 99;  // format version lives right after the magic
        std::ofstream os(path + ".ver", std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_WITH_AS(ArrayFile::load(path + ".ver"), doctest::Contains("version"), std::runtime_error);
}

TEST_CASE("png write/read roundtrip") {
    fs::path dir = fs::temp_directory_path() / "a2v_test_png";
    fs::create_directories(dir);
    std::string path = (dir / "img.png").string();

    Tensor img({9, 13, 3});
    Rng rng(11);
    for (double& v : img.data) v = std::floor(rng.uniform() * 256.0) / 255.0;
    for (double& v : img.data) v = std::min(v, 1.0);
    write_png(path, img);
    Tensor back = read_png(path);
    CHECK(back.shape == img.shape);
    CHECK(max_abs_diff(back, img) < 0.5 / 255.0 + 1e-12);
}

TEST_CASE("crc32 reference value") {
    // standard test vector: crc32("123456789") = 0xcbf43926
    const char* s = "123456789";
    CHECK(crc32(s, 9) == 0xcbf43926u);
}
