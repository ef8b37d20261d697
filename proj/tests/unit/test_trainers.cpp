#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "helpers.hpp"
#include "monoforward/data.hpp"
#include "monoforward/errors.hpp"
#include "monoforward/predict.hpp"
#include "monoforward/trainers.hpp"

using namespace mono;
using testutil::bit_equal;
using testutil::random_matrix;
using testutil::relative_error;

namespace {

Dataset uniform_data(std::size_t n, std::size_t features, std::size_t classes, std::uint64_t seed) {
    Dataset ds;
    ds.X = random_matrix<float>(n, features, seed, 0, 1);
    ds.y = testutil::random_labels(n, classes, seed + 1);
    ds.classes = classes;
    return ds;
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

TrainConfig config(Algorithm a, double lr = 0.001, std::size_t batch = 32) {
    TrainConfig c;
    c.algorithm = a;
    c.lr = lr;
    c.batch_size = batch;
    return c;
}

}  // namespace

TEST_CASE("one MF layer separates two blobs within 200 steps") {
    const auto ds = synth_blobs(2, 5, 50, 10.0, 3);
    auto model = make_model<float>({Algorithm::MF, 5, {16}, 2, false, 1});
    const auto cfg = config(Algorithm::MF, 0.01);
    const auto X = batch_rows<float>(ds, all_rows(ds.size()));
    double acc = 0;
    for (int step = 0; step < 200 && acc < 1.0; ++step) {
        mf_train_batch(model, X, ds.y, cfg);
        acc = accuracy(mf_predict_bp(model, X), ds.y);
    }
    CHECK(acc == 1.0);
}

TEST_CASE("initial losses sit at ln m") {
    const auto ds = uniform_data(500, 784, 10, 5);
    const auto X = batch_rows<float>(ds, all_rows(ds.size()));
    for (Algorithm a : {Algorithm::MF, Algorithm::BP}) {
        auto model = make_model<float>({a, 784, {100, 100}, 10, false, 2});
        const auto st = a == Algorithm::MF ? mf_train_batch(model, X, ds.y, config(a))
                                           : bp_train_batch(model, X, ds.y, config(a));
        for (double l : st.layer_loss) CHECK(std::abs(l - std::log(10.0)) < 0.1 * std::log(10.0));
    }
}

TEST_CASE("MF layer 1 does not depend on the layers above") {
    const auto ds = uniform_data(64 * 20, 30, 4, 7);
    auto shallow = make_model<float>({Algorithm::MF, 30, {24, 24}, 4, false, 11});
    auto deep = make_model<float>({Algorithm::MF, 30, {24, 24, 24}, 4, false, 11});
    const auto cfg = config(Algorithm::MF, 0.01, 64);
    const auto order = epoch_order(ds.size(), 11, 1);
    for (std::size_t b = 0; b < 20; ++b) {
        const std::span<const std::size_t> idx(order.data() + b * 64, 64);
        const auto X = batch_rows<float>(ds, idx);
        std::vector<Label> y;
        for (auto i : idx) y.push_back(ds.y[i]);
        mf_train_batch(shallow, X, y, cfg);
        mf_train_batch(deep, X, y, cfg);
        REQUIRE(bit_equal(shallow.layers[0].W, deep.layers[0].W));
        REQUIRE(bit_equal(shallow.layers[0].M, deep.layers[0].M));
        REQUIRE(bit_equal(shallow.layers[1].W, deep.layers[1].W));
    }
}

TEST_CASE("MF layer step rejects a label count mismatch and names bad layers") {
    auto model = make_model<double>({Algorithm::MF, 4, {3, 3}, 2, false, 0});
    const auto cfg = config(Algorithm::MF);
    CHECK_THROWS_AS(mf_train_batch(model, MatrixD(3, 4), std::vector<Label>{0, 1}, cfg), ShapeError);
    model.layers[1].M(0, 0) = NAN;
    try {
        mf_train_batch(model, random_matrix(3, 4, 1, 0, 1), std::vector<Label>{0, 1, 1}, cfg);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(e.layer() == 2);
    }
}

TEST_CASE("backprop gradients match finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto model = make_model<double>({Algorithm::BP, 5, {6, 4}, 3, seed % 2 == 1, seed});
        for (auto& l : model.layers)
            if (l.b)
                for (auto& v : l.b->values()) v = 0.05;
        const auto X = random_matrix(7, 5, seed + 1);
        const auto y = testutil::random_labels(7, 3, seed + 2);
        const auto g = backprop_gradients(model, X, y, Transport::Exact);
        auto loss = [&] { return backprop_gradients(model, X, y, Transport::Exact).loss; };
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(relative_error(g.layers[i].dW, testutil::numeric_gradient(model.layers[i].W, loss)) < 1e-6);
            if (model.layers[i].b)
                CHECK(relative_error(*g.layers[i].db, testutil::numeric_gradient(*model.layers[i].b, loss)) < 1e-6);
        }
        CHECK(relative_error(g.layers[1].dM, testutil::numeric_gradient(model.layers[1].M, loss)) < 1e-6);
        CHECK(g.layers[0].dM.empty());
    }
}

TEST_CASE("FA with transposed-weight feedback reproduces a BP step") {
    auto bp = make_model<float>({Algorithm::BP, 20, {16, 12, 8}, 5, true, 3});
    auto fa = make_model<float>({Algorithm::FA, 20, {16, 12, 8}, 5, true, 3});
    REQUIRE(bit_equal(bp.layers[0].W, fa.layers[0].W));
    for (std::size_t i = 0; i + 1 < fa.depth(); ++i) fa.feedback[i] = transpose(fa.layers[i + 1].W);
    fa.feedback.back() = fa.layers.back().M;

    const auto ds = uniform_data(40, 20, 5, 8);
    const auto X = batch_rows<float>(ds, all_rows(40));
    bp_train_batch(bp, X, ds.y, config(Algorithm::BP));
    fa_train_batch(fa, X, ds.y, config(Algorithm::FA));
    for (std::size_t i = 0; i < bp.depth(); ++i) {
        CHECK(bit_equal(bp.layers[i].W, fa.layers[i].W));
        CHECK(bit_equal(*bp.layers[i].b, *fa.layers[i].b));
    }
    CHECK(bit_equal(bp.layers.back().M, fa.layers.back().M));
}

TEST_CASE("feedback matrices stay fixed and DFA reduces to BP for one layer") {
    auto dfa = make_model<double>({Algorithm::DFA, 6, {5}, 3, false, 4});
    const auto X = random_matrix(8, 6, 1);
    const auto y = testutil::random_labels(8, 3, 2);
    auto with_head = dfa;
    with_head.feedback[0] = with_head.layers[0].M;
    const auto direct = backprop_gradients(with_head, X, y, Transport::Direct);
    const auto exact = backprop_gradients(with_head, X, y, Transport::Exact);
    CHECK(bit_equal(direct.layers[0].dW, exact.layers[0].dW));

    auto deep = make_model<float>({Algorithm::DFA, 6, {5, 5, 5}, 3, false, 4});
    for (std::size_t i = 0; i < 3; ++i) CHECK(deep.feedback[i].rows() == 3);
    const auto keep = deep.feedback;
    dfa_train_batch(deep, X.cast<float>(), y, config(Algorithm::DFA));
    for (std::size_t i = 0; i < 3; ++i) CHECK(deep.feedback[i] == keep[i]);
    CHECK_THROWS_AS(backprop_gradients(deep, X.cast<float>(), y, Transport::Feedback), ShapeError);
}

TEST_CASE("label embedding") {
    const auto e = embed_labels(MatrixD(1, 20), std::vector<Label>{3}, 10, 1.0);
    for (std::size_t c = 0; c < 20; ++c) CHECK(e(0, c) == (c == 3 ? 1.0 : 0.0));
    const auto x = random_matrix(2, 15, 4, 0, 1);
    const std::vector<Label> l{7, 2};
    const auto once = embed_labels(x, l, 10, 1.0);
    CHECK(embed_labels(once, l, 10, 1.0) == once);
    const auto other = embed_labels(x, std::vector<Label>{1, 2}, 10, 1.0);
    int diff = 0;
    for (std::size_t c = 0; c < 10; ++c) diff += once(0, c) != other(0, c);
    CHECK(diff <= 2);
    for (std::size_t c = 10; c < 15; ++c) CHECK(once(1, c) == x(1, c));
    CHECK_THROWS_AS(embed_labels(x, std::vector<Label>{10, 0}, 10, 1.0), LabelError);
    CHECK_THROWS_AS(embed_labels(MatrixD(1, 5), std::vector<Label>{0}, 10, 1.0), ShapeError);
    CHECK(embedding_intensity(MatrixD{{0.5, 0.25}}) == 0.5);
    CHECK(embedding_intensity(MatrixD(2, 2)) == 1.0);
}

TEST_CASE("FF goodness and losses") {
    CHECK(ff_goodness(MatrixD{{1, 2, 2}, {0, 0, 0}}) == std::vector<double>{9, 0});
    const auto a = random_matrix(1, 6, 3);
    auto a3 = a;
    for (auto& v : a3.values()) v *= 3;
    CHECK(ff_goodness(a3)[0] == doctest::Approx(9 * ff_goodness(a)[0]));

    CHECK(ff_losses(2.0, 0.0, 2.0).pos == doctest::Approx(std::log(2.0)));
    CHECK(ff_losses(52.0, 0.0, 2.0).pos < 1e-20);
    const auto both = ff_losses(2.0, 2.0, 2.0);
    CHECK(both.neg == doctest::Approx(std::log(2.0)));
    CHECK(both.total == doctest::Approx(std::log(2.0)));
    CHECK(std::isfinite(ff_losses(-1e6, 1e6, 0).total));
}

TEST_CASE("FF layer gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto layer = init_dense_layer<double>({8, 6, 3, seed % 2 == 1, false}, seed, 1);
        const auto xp = random_matrix(5, 8, seed + 1, 0, 1);
        const auto xn = random_matrix(5, 8, seed + 2, 0, 1);
        const auto r = ff_layer_grads(layer, xp, xn, 2.0);
        auto loss = [&] { return ff_layer_grads(layer, xp, xn, 2.0).loss; };
        CHECK(relative_error(r.dW, testutil::numeric_gradient(layer.W, loss)) < 1e-6);
        if (layer.b) CHECK(relative_error(*r.db, testutil::numeric_gradient(*layer.b, loss)) < 1e-6);
    }
}

TEST_CASE("FF positive loss starts near theta for tiny weights") {
    auto layer = init_dense_layer<double>({8, 6, 3, false, false}, 1, 1);
    for (auto& v : layer.W.values()) v *= 1e-4;
    const auto x = random_matrix(4, 8, 2, 0, 1);
    const auto r = ff_layer_grads(layer, x, x, 50.0);
    double pos = 0;
    for (double g : ff_goodness(dense_forward(x, layer).a)) pos += ff_losses(g, 0, 50.0).pos / 4;
    CHECK(pos == doctest::Approx(50.0).epsilon(1e-3));
    CHECK(std::isfinite(r.loss));
}

TEST_CASE("negative labels are always wrong and cover the alternatives") {
    std::mt19937_64 gen(5);
    std::vector<Label> y(3000, 4);
    const auto neg = sample_negative_labels(y, 6, gen);
    std::vector<int> seen(6, 0);
    for (Label l : neg) {
        CHECK(l != 4);
        ++seen[l];
    }
    for (int c : {0, 1, 2, 3, 5}) CHECK(seen[c] > 450);
    CHECK_THROWS_AS(sample_negative_labels(y, 1, gen), ConfigError);
}

TEST_CASE("FF memorizes a 10-sample toy set") {
    // faint noise plus a block of three bright features unique to each sample
    auto ds = uniform_data(10, 40, 10, 21);
    ds.y = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    for (auto& v : ds.X.values()) v *= 0.1f;
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 3; ++j) ds.X(i, 10 + 3 * i + j) = 1.0f;
    auto model = make_model<double>({Algorithm::FF, 40, {64, 64}, 10, false, 3});
    auto cfg = config(Algorithm::FF, 0.01);
    const auto X = batch_rows<double>(ds, all_rows(10));
    std::mt19937_64 neg(1);
    const double g0 = ff_layer_grads(model.layers[0], embed_labels(X, ds.y, 10, 1.0),
                                     embed_labels(X, sample_negative_labels(ds.y, 10, neg), 10, 1.0), cfg.theta)
                          .loss;
    for (int step = 0; step < 500; ++step) ff_train_batch(model, X, ds.y, cfg, neg);

    const auto pos = embed_labels(X, ds.y, 10, 1.0);
    const auto rec = dense_forward(pos, model.layers[0]);
    double l_pos = 0;
    for (double g : ff_goodness(rec.a)) l_pos += ff_losses(g, 0, cfg.theta).pos / 10;
    CHECK(l_pos < g0);
    const auto wrong = embed_labels(X, sample_negative_labels(ds.y, 10, neg), 10, 1.0);
    for (double g : ff_goodness(dense_forward(wrong, model.layers[0]).a)) CHECK(g < cfg.theta);
    CHECK(accuracy(ff_predict_multipass(model, X), ds.y) == 1.0);

    auto one_class = make_model<double>({Algorithm::FF, 40, {8}, 1, false, 3});
    CHECK_THROWS_AS(ff_train_batch(one_class, X, std::vector<Label>(10, 0), cfg, neg), ConfigError);
}

TEST_CASE("train_epochs contracts") {
    const auto ds = synth_blobs(3, 12, 40, 6.0, 2);
    auto [train, test] = split(ds, 0.75, 1);

    auto model = make_model<float>({Algorithm::MF, 12, {16, 16}, 3, false, 5});
    const auto before = model.layers[0].W;
    auto cfg = config(Algorithm::MF);
    cfg.epochs = 0;
    CHECK(train_epochs(model, train, &test, cfg).rows.empty());
    CHECK(model.layers[0].W == before);

    cfg.epochs = 2;
    auto m1 = make_model<float>({Algorithm::MF, 12, {16, 16}, 3, false, 5});
    auto m2 = make_model<float>({Algorithm::MF, 12, {16, 16}, 3, false, 5});
    const auto r1 = train_epochs(m1, train, &test, cfg);
    const auto r2 = train_epochs(m2, train, &test, cfg);
    CHECK(r1.same_results(r2));
    CHECK(r1.rows.size() == 2 * 3);
    CHECK(r1.aggregate_rows().size() == 2);
    CHECK(bit_equal(m1.layers[1].M, m2.layers[1].M));

    for (Algorithm a : {Algorithm::MF, Algorithm::BP, Algorithm::FF, Algorithm::FA, Algorithm::DFA}) {
        auto m = make_model<float>({a, 12, {16, 16}, 3, false, 5});
        auto c = config(a);
        c.epochs = 1;
        const auto r = train_epochs(m, train, &test, c);
        CHECK(r.to_csv().rfind(RunReport::kCsvHeader, 0) == 0);
        REQUIRE(!r.aggregate_rows().empty());
        CHECK(r.aggregate_rows()[0].test_acc >= 0.0);
        CHECK(r.algorithm == to_string(a));
    }

    cfg.algorithm = Algorithm::BP;
    CHECK_THROWS_AS(train_epochs(model, train, &test, cfg), ConfigError);
    cfg.algorithm = Algorithm::MF;
    cfg.lr = 0;
    CHECK_THROWS_AS(train_epochs(model, train, &test, cfg), ConfigError);
}

TEST_CASE("train_epochs reports the failing epoch and batch") {
    auto ds = synth_blobs(3, 12, 40, 6.0, 2);
    auto model = make_model<float>({Algorithm::MF, 12, {16}, 3, false, 5});
    model.layers[0].W(0, 0) = INFINITY;
    auto cfg = config(Algorithm::MF);
    cfg.epochs = 1;
    try {
        train_epochs(model, ds, nullptr, cfg);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("epoch 1, batch 0") != std::string::npos);
        CHECK(e.layer() == 1);
    }
}

TEST_CASE("weight persistence leaves results unchanged") {
    const auto ds = synth_blobs(3, 12, 40, 6.0, 2);
    auto cfg = config(Algorithm::MF);
    cfg.epochs = 2;
    auto plain = make_model<float>({Algorithm::MF, 12, {16, 16, 16}, 3, false, 5});
    auto disk = plain;
    const auto r1 = train_epochs(plain, ds, &ds, cfg);
    cfg.persist_dir = std::filesystem::temp_directory_path() / "mono_persist_test";
    const auto r2 = train_epochs(disk, ds, &ds, cfg);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(bit_equal(plain.layers[i].W, disk.layers[i].W));
        CHECK(bit_equal(plain.layers[i].M, disk.layers[i].M));
    }
    for (std::size_t i = 0; i < r1.rows.size(); ++i) CHECK(r1.rows[i].test_acc == r2.rows[i].test_acc);
    std::filesystem::remove_all(cfg.persist_dir);
}

TEST_CASE("conv MF batches train") {
    Dataset ds;
    ds.X = random_matrix<float>(24, 2 * 8 * 8, 3, 0, 1);
    ds.y = testutil::random_labels(24, 3, 4);
    ds.classes = 3;
    auto model = make_conv_model<float>({2, 8, 8}, {4, 6}, 3, 1);
    auto cfg = config(Algorithm::MF, 0.01, 8);
    cfg.epochs = 3;
    const auto r = train_conv_epochs(model, ds, &ds, cfg);
    CHECK(r.rows.size() == 3 * 3);
    CHECK(r.rows.back().train_loss < r.rows[2].train_loss);
}
