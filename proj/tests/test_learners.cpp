#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "soundcollage/learners.hpp"
#include "soundcollage/rng.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace soundcollage;
namespace fs = std::filesystem;

namespace {

// two gaussian blobs, 3 sigma apart per coordinate in 2-d
void gaussian_blobs(size_t n_per_class, uint64_t seed, Matrix& x, std::vector<int>& y) {
    Rng rng(seed);
    x = Matrix(2 * n_per_class, 2);
    y.assign(2 * n_per_class, 0);
    for (size_t i = 0; i < 2 * n_per_class; ++i) {
        int cls = i < n_per_class ? 0 : 1;
        y[i] = cls;
        x.at(i, 0) = rng.normal() + (cls == 1 ? 3.0 : 0.0);
        x.at(i, 1) = rng.normal() + (cls == 1 ? 3.0 : 0.0);
    }
}

MlpModel zero_model(size_t input_dim, size_t hidden) {
    MlpModel m;
    m.input_dim = input_dim;
    m.hidden_dim = hidden;
    m.w1.assign(hidden * input_dim, 0.0);
    m.b1.assign(hidden, 0.0);
    m.w2.assign(hidden, 0.0);
    m.b2 = 0.0;
    return m;
}

}  // namespace

TEST_CASE("init draws weights inside the fan-in bound with zero biases") {
    MlpModel m = mlp_init(100, 16, 7);
    const double bound = 1.0 / std::sqrt(100.0);
    double lo = 1e9, hi = -1e9;
    for (double w : m.w1) {
        CHECK(std::abs(w) <= bound);
        lo = std::min(lo, w);
        hi = std::max(hi, w);
    }
    CHECK(lo < -0.5 * bound);  // both halves of the range actually used
    CHECK(hi > 0.5 * bound);
    for (double w : m.w2) CHECK(std::abs(w) <= 1.0 / std::sqrt(16.0));
    for (double b : m.b1) CHECK(b == 0.0);
    CHECK(m.b2 == 0.0);

    MlpModel m2 = mlp_init(100, 16, 7);
    CHECK(m.w1 == m2.w1);
    MlpModel m3 = mlp_init(100, 16, 8);
    CHECK(m.w1 != m3.w1);
}

TEST_CASE("zero weights output one half and log-two loss, ties pick class 1") {
    MlpModel m = zero_model(3, 4);
    std::vector<double> x = {0.4, -2.0, 7.0};
    CHECK(mlp_prob(m, x.data()) == 0.5);
    CHECK(mlp_predict(m, x.data()) == 1);

    Matrix data(2, 3);
    data.at(0, 0) = 1.0;
    data.at(1, 2) = -1.0;
    std::vector<int> y = {0, 1};
    CHECK(mlp_loss(m, data, y) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("analytic gradient matches central finite differences") {
    Rng rng(9);
    double max_rel = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        MlpModel m = mlp_init(7, 4, 100 + trial);
        // move away from the symmetric init so gradients are generic
        for (auto& w : m.w2) w += rng.uniform(-0.5, 0.5);
        m.b2 = rng.uniform(-0.3, 0.3);
        for (auto& b : m.b1) b = rng.uniform(-0.2, 0.2);

        std::vector<double> x(7);
        for (auto& v : x) v = rng.uniform(-2.0, 2.0);
        int y = trial % 2;

        Matrix one(1, 7);
        for (size_t k = 0; k < 7; ++k) one.at(0, k) = x[k];
        std::vector<int> ys = {y};

        MlpGrad g = mlp_gradient(m, x.data(), y);
        auto check_param = [&](double* param, double analytic) {
            const double h = 1e-5;
            double orig = *param;
            *param = orig + h;
            double lp = mlp_loss(m, one, ys);
            *param = orig - h;
            double lm = mlp_loss(m, one, ys);
            *param = orig;
            double fd = (lp - lm) / (2.0 * h);
            double rel = std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-6});
            max_rel = std::max(max_rel, rel);
        };

        for (size_t i = 0; i < m.w1.size(); ++i) check_param(&m.w1[i], g.w1[i]);
        for (size_t i = 0; i < m.b1.size(); ++i) check_param(&m.b1[i], g.b1[i]);
        for (size_t i = 0; i < m.w2.size(); ++i) check_param(&m.w2[i], g.w2[i]);
        check_param(&m.b2, g.b2);
    }
    CHECK(max_rel <= 1e-4);
}

TEST_CASE("separable toy set agrees with the nearest-centroid oracle") {
    Matrix x;
    std::vector<int> y;
    gaussian_blobs(10, 11, x, y);

    Standardizer st = fit_standardizer(x, {});
    Matrix xs = x;
    apply_standardizer(st, xs);

    MlpModel m = mlp_init(2, 8, 12);
    MlpTrainParams p;
    p.epochs = 60;
    mlp_train(m, xs, y, p, 13);

    // centroid oracle in the same standardized space
    double c0[2] = {0, 0}, c1[2] = {0, 0};
    size_t n0 = 0, n1 = 0;
    for (size_t i = 0; i < xs.rows; ++i) {
        if (y[i] == 0) { c0[0] += xs.at(i, 0); c0[1] += xs.at(i, 1); ++n0; }
        else { c1[0] += xs.at(i, 0); c1[1] += xs.at(i, 1); ++n1; }
    }
    c0[0] /= n0; c0[1] /= n0; c1[0] /= n1; c1[1] /= n1;

    size_t agree = 0;
    for (size_t i = 0; i < xs.rows; ++i) {
        double d0 = std::pow(xs.at(i, 0) - c0[0], 2) + std::pow(xs.at(i, 1) - c0[1], 2);
        double d1 = std::pow(xs.at(i, 0) - c1[0], 2) + std::pow(xs.at(i, 1) - c1[1], 2);
        int oracle = d1 < d0 ? 1 : 0;
        if (mlp_predict(m, xs.row(i)) == oracle) ++agree;
    }
    CHECK(agree >= 19);  // >= 95% of 20

    REQUIRE(m.epoch_loss.size() == 60);
    CHECK(m.epoch_loss.back() < m.epoch_loss.front());
    for (double l : m.epoch_loss) CHECK(std::isfinite(l));
}

TEST_CASE("training is bitwise deterministic given seeds") {
    Matrix x;
    std::vector<int> y;
    gaussian_blobs(12, 14, x, y);
    MlpTrainParams p;
    p.epochs = 5;

    MlpModel a = mlp_init(2, 6, 21);
    MlpModel b = mlp_init(2, 6, 21);
    mlp_train(a, x, y, p, 22);
    mlp_train(b, x, y, p, 22);
    CHECK(a.w1 == b.w1);
    CHECK(a.w2 == b.w2);
    CHECK(a.b1 == b.b1);
    CHECK(a.b2 == b.b2);
    CHECK(a.epoch_loss == b.epoch_loss);

    MlpModel c = mlp_init(2, 6, 21);
    mlp_train(c, x, y, p, 23);  // different data order
    CHECK(a.w1 != c.w1);
}

TEST_CASE("non-finite loss raises a divergence error naming the epoch") {
    Matrix x(4, 2);
    x.at(2, 1) = std::numeric_limits<double>::quiet_NaN();
    std::vector<int> y = {0, 1, 0, 1};
    MlpModel m = mlp_init(2, 4, 31);
    MlpTrainParams p;
    p.epochs = 3;
    try {
        mlp_train(m, x, y, p, 32);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(e.epoch == 1);
        CHECK(std::string(e.what()).find("1") != std::string::npos);
    }
}

TEST_CASE("checkpoints round trip through float32") {
    MlpModel m = mlp_init(10, 5, 41);
    Matrix x;
    std::vector<int> y;
    gaussian_blobs(15, 42, x, y);
    Matrix padded(x.rows, 10);
    for (size_t i = 0; i < x.rows; ++i)
        for (size_t j = 0; j < 2; ++j) padded.at(i, j) = x.at(i, j);
    MlpTrainParams p;
    p.epochs = 10;
    mlp_train(m, padded, y, p, 43);

    fs::path dir = fs::temp_directory_path() / "sc_learners_test";
    fs::create_directories(dir);
    std::string path = (dir / "model.bin").string();
    mlp_save(path, m);
    MlpModel back = mlp_load(path);
    REQUIRE(back.input_dim == 10);
    REQUIRE(back.hidden_dim == 5);
    for (size_t i = 0; i < padded.rows; ++i) {
        CHECK(std::abs(mlp_prob(back, padded.row(i)) - mlp_prob(m, padded.row(i))) <= 1e-5);
    }

    std::ofstream bad(dir / "bad.bin", std::ios::binary);
    bad.write("NOPE", 4);
    bad.close();
    CHECK_THROWS_AS(mlp_load((dir / "bad.bin").string()), CheckpointError);
}

TEST_CASE("standardizer uses the designated rows and zeroes dead coefficients") {
    Matrix x(4, 3);
    // col 0 varies over rows {0,1}; col 1 constant; col 2 varies only outside the fit rows
    x.at(0, 0) = 2.0; x.at(1, 0) = 4.0; x.at(2, 0) = 100.0; x.at(3, 0) = -7.0;
    x.at(0, 1) = 5.0; x.at(1, 1) = 5.0; x.at(2, 1) = 5.0;  x.at(3, 1) = 5.0;
    x.at(0, 2) = 1.0; x.at(1, 2) = 1.0; x.at(2, 2) = 9.0;  x.at(3, 2) = 9.0;

    Standardizer s = fit_standardizer(x, {0, 1});
    CHECK(s.mean[0] == doctest::Approx(3.0));
    CHECK(s.inv_std[1] == 0.0);  // constant on the fit rows
    CHECK(s.inv_std[2] == 0.0);

    Matrix xs = x;
    apply_standardizer(s, xs);
    CHECK(xs.at(0, 0) == doctest::Approx(-1.0));
    CHECK(xs.at(1, 0) == doctest::Approx(1.0));
    CHECK(xs.at(3, 1) == 0.0);
    CHECK(xs.at(2, 2) == 0.0);
}

TEST_CASE("a single full-feature tree fits xor exactly") {
    Matrix x(4, 2);
    x.at(0, 0) = 0; x.at(0, 1) = 0;
    x.at(1, 0) = 0; x.at(1, 1) = 1;
    x.at(2, 0) = 1; x.at(2, 1) = 0;
    x.at(3, 0) = 1; x.at(3, 1) = 1;
    std::vector<int> y = {0, 1, 1, 0};

    ForestParams p;
    p.n_trees = 1;
    p.max_features = 2;
    p.bootstrap = false;
    ForestModel f = forest_train(x, y, p, 51);
    for (size_t i = 0; i < 4; ++i) CHECK(forest_predict(f, x.row(i)) == y[i]);
}

TEST_CASE("leaf class counts account for every training sample") {
    Matrix x;
    std::vector<int> y;
    gaussian_blobs(30, 52, x, y);
    ForestParams p;
    p.n_trees = 5;
    ForestModel f = forest_train(x, y, p, 53);
    REQUIRE(f.trees.size() == 5);
    for (const auto& tree : f.trees) {
        size_t total = 0;
        for (const auto& node : tree.nodes) {
            if (node.feature == -1) {
                size_t leaf_sum = 0;
                for (size_t c : node.class_counts) leaf_sum += c;
                CHECK(leaf_sum >= 1);
                total += leaf_sum;
            }
        }
        CHECK(total == x.rows);  // bootstrap keeps the sample count
    }
}

TEST_CASE("well-separated blobs are classified with at least 0.95 accuracy") {
    Matrix xtr, xte;
    std::vector<int> ytr, yte;
    gaussian_blobs(100, 54, xtr, ytr);
    gaussian_blobs(100, 55, xte, yte);

    ForestParams p;
    ForestModel f = forest_train(xtr, ytr, p, 56);
    EvalMetrics m = forest_eval(f, xte, yte);
    CHECK(m.accuracy >= 0.95);
    CHECK(m.macro_f1 >= 0.95);
    CHECK(m.confusion.rows == 2);
}

TEST_CASE("constant predictor on a balanced set: accuracy half, macro-f1 a third") {
    // all training labels equal, so every prediction is class 0
    Matrix xtr(10, 2);
    std::vector<int> ytr(10, 0);
    Rng rng(57);
    for (auto& v : xtr.data) v = rng.normal();
    ForestParams p;
    p.n_trees = 3;
    ForestModel f = forest_train(xtr, ytr, p, 58);

    Matrix xte(20, 2);
    std::vector<int> yte(20);
    for (size_t i = 0; i < 20; ++i) {
        xte.at(i, 0) = rng.normal();
        xte.at(i, 1) = rng.normal();
        yte[i] = i < 10 ? 0 : 1;
    }
    EvalMetrics m = forest_eval(f, xte, yte);
    CHECK(m.accuracy == doctest::Approx(0.5));
    CHECK(m.macro_precision == doctest::Approx(0.25));
    CHECK(m.macro_recall == doctest::Approx(0.5));
    CHECK(m.macro_f1 == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("forest vote ties resolve to the lower class id") {
    ForestModel f;
    f.n_classes = 2;
    f.n_features = 1;
    for (int cls : {1, 0}) {
        Tree t;
        TreeNode leaf;
        leaf.feature = -1;
        leaf.class_counts = {cls == 0 ? size_t{5} : size_t{0}, cls == 1 ? size_t{5} : size_t{0}};
        t.nodes.push_back(leaf);
        f.trees.push_back(t);
    }
    double x = 0.0;
    CHECK(forest_predict(f, &x) == 0);
}

TEST_CASE("forest training is deterministic per seed") {
    Matrix x;
    std::vector<int> y;
    gaussian_blobs(40, 59, x, y);
    ForestParams p;
    ForestModel a = forest_train(x, y, p, 60);
    ForestModel b = forest_train(x, y, p, 60);
    Matrix probe;
    std::vector<int> junk;
    gaussian_blobs(25, 61, probe, junk);
    for (size_t i = 0; i < probe.rows; ++i) {
        CHECK(forest_predict(a, probe.row(i)) == forest_predict(b, probe.row(i)));
    }
}

TEST_CASE("stratified folds balance classes and partition the data") {
    std::vector<int> y(100);
    for (size_t i = 0; i < 100; ++i) y[i] = i < 60 ? 0 : 1;
    auto folds = stratified_folds(y, 5, 62);
    REQUIRE(folds.size() == 5);
    std::set<size_t> seen;
    for (const auto& fold : folds) {
        size_t c0 = 0, c1 = 0;
        for (size_t i : fold) {
            CHECK(seen.insert(i).second);  // disjoint
            (y[i] == 0 ? c0 : c1)++;
        }
        CHECK(c0 == 12);
        CHECK(c1 == 8);
    }
    CHECK(seen.size() == 100);

    auto again = stratified_folds(y, 5, 62);
    CHECK(folds == again);
}
