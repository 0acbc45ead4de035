#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "soundcollage/separation.hpp"
#include "soundcollage/rng.hpp"

#include <cmath>

using namespace soundcollage;

namespace {

Matrix random_mag(size_t frames, size_t bins, uint64_t seed) {
    Matrix m(frames, bins);
    Rng rng(seed);
    for (auto& v : m.data) v = rng.uniform(0.0, 2.0);
    return m;
}

// the 5x2 hand example used across the repeating-model cases
Matrix hand_mag() {
    Matrix v(5, 2);
    double vals[5][2] = {{1.0, 0.0}, {0.9, 0.1}, {0.0, 1.0}, {1.0, 0.05}, {0.05, 1.0}};
    for (size_t i = 0; i < 5; ++i)
        for (size_t j = 0; j < 2; ++j) v.at(i, j) = vals[i][j];
    return v;
}

}  // namespace

TEST_CASE("similarity matches the direct cosine formula") {
    Matrix m = random_mag(12, 7, 21);
    Matrix s = similarity_matrix(m);
    REQUIRE(s.rows == 12);
    REQUIRE(s.cols == 12);
    for (size_t i = 0; i < 12; ++i) {
        for (size_t j = 0; j < 12; ++j) {
            double dot = 0.0, ni = 0.0, nj = 0.0;
            for (size_t b = 0; b < 7; ++b) {
                dot += m.at(i, b) * m.at(j, b);
                ni += m.at(i, b) * m.at(i, b);
                nj += m.at(j, b) * m.at(j, b);
            }
            double expect = dot / std::sqrt(ni * nj);
            CHECK(std::abs(s.at(i, j) - expect) <= 1e-12);
            CHECK(s.at(i, j) == s.at(j, i));
            CHECK(s.at(i, j) <= 1.0 + 1e-12);
            CHECK(s.at(i, j) >= -1.0 - 1e-12);
        }
        CHECK(s.at(i, i) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("zero-norm frames are similar only to themselves") {
    Matrix m = random_mag(4, 3, 22);
    for (size_t b = 0; b < 3; ++b) m.at(2, b) = 0.0;
    Matrix s = similarity_matrix(m);
    for (size_t j = 0; j < 4; ++j) {
        CHECK(s.at(2, j) == (j == 2 ? 1.0 : 0.0));
        CHECK(s.at(j, 2) == (j == 2 ? 1.0 : 0.0));
    }
}

TEST_CASE("greedy selection honors the pairwise gap, hand-checked medians") {
    Matrix v = hand_mag();
    Matrix s = similarity_matrix(v);

    SeparationParams p;
    p.k = 3;
    p.min_gap = 2;
    p.min_sim = 0.0;
    Matrix r = repeating_model(v, s, p);

    // frame 0: self + frame 3 (best similar at distance >= 2); frames 1 and 4
    // are blocked by the pairwise gap against 0 and 3. Median of two frames,
    // then clipped to the mixture magnitude.
    CHECK(r.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));

    // frame 2: {2, 4} then frame 0 (sim 0, admissible, gap ok) fills k=3.
    // bin medians over {(0,1),(0.05,1),(1,0)} are (0.05, 1), clipped to (0, 1).
    CHECK(r.at(2, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.at(2, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("similarity floor changes which frames enter the median") {
    Matrix v = hand_mag();
    Matrix s = similarity_matrix(v);

    SeparationParams all;
    all.k = 5;
    all.min_gap = 1;
    all.min_sim = 0.0;
    Matrix r_all = repeating_model(v, s, all);
    // frame 1 with every frame selected: medians (0.9, 0.1), clip keeps both
    CHECK(r_all.at(1, 0) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(r_all.at(1, 1) == doctest::Approx(0.1).epsilon(1e-12));

    SeparationParams floored = all;
    floored.min_sim = 0.5;
    Matrix r_fl = repeating_model(v, s, floored);
    // frame 1 now selects {1, 3, 0} only: medians (1, 0.05) -> clipped (0.9, 0.05)
    CHECK(r_fl.at(1, 0) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(r_fl.at(1, 1) == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("exactly periodic frames reproduce themselves in the model") {
    const size_t period = 3, reps = 4, bins = 6;
    Matrix v(period * reps, bins);
    Rng rng(23);
    Matrix pattern(period, bins);
    for (auto& x : pattern.data) x = rng.uniform(0.1, 1.0);
    for (size_t f = 0; f < v.rows; ++f)
        for (size_t b = 0; b < bins; ++b) v.at(f, b) = pattern.at(f % period, b);

    Matrix s = similarity_matrix(v);
    SeparationParams p;
    p.k = reps;
    p.min_gap = period;
    p.min_sim = 0.9;
    Matrix r = repeating_model(v, s, p);
    for (size_t i = 0; i < v.data.size(); ++i) CHECK(r.data[i] == v.data[i]);
}

TEST_CASE("repeating model never exceeds the mixture magnitude") {
    Matrix v = random_mag(40, 9, 24);
    Matrix s = similarity_matrix(v);
    SeparationParams p;
    p.k = 7;
    Matrix r = repeating_model(v, s, p);
    for (size_t i = 0; i < v.data.size(); ++i) {
        CHECK(r.data[i] <= v.data[i]);
        CHECK(r.data[i] >= 0.0);
    }
}

TEST_CASE("mask saturates when the model equals the mixture") {
    Matrix v = random_mag(6, 5, 25);
    for (auto& x : v.data) x += 0.1;  // strictly positive
    Matrix m = wiener_mask(v, v);
    for (double x : m.data) {
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
        CHECK(1.0 - x <= 1e-9);
    }
}

TEST_CASE("mask vanishes when the model is zero") {
    Matrix v = random_mag(6, 5, 26);
    Matrix zero(6, 5);
    Matrix m = wiener_mask(zero, v);
    for (double x : m.data) CHECK(x == 0.0);
}

TEST_CASE("components sum back to the mixture away from the edges") {
    Rng rng(27);
    AudioClip c;
    c.id = "mix";
    c.sample_rate = 16000;
    c.samples.resize(16000);
    for (auto& x : c.samples) x = rng.uniform(-0.5, 0.5);

    SeparationParams p;
    p.k = 10;
    SeparationResult r = separate(c, p);
    CHECK(r.vocal.id == "mix.v");
    CHECK(r.background.id == "mix.b");
    REQUIRE(r.vocal.samples.size() == c.samples.size());
    REQUIRE(r.background.samples.size() == c.samples.size());
    for (size_t i = 400; i + 400 < c.samples.size(); ++i) {
        CHECK(std::abs(r.vocal.samples[i] + r.background.samples[i] - c.samples[i]) <= 1e-5);
    }
}

TEST_CASE("silence separates into silence") {
    AudioClip c;
    c.id = "quiet";
    c.sample_rate = 16000;
    c.samples.assign(8000, 0.0);
    SeparationResult r = separate(c);
    for (double x : r.vocal.samples) CHECK(x == 0.0);
    for (double x : r.background.samples) CHECK(x == 0.0);
}

TEST_CASE("a strict loop routes at least 90 percent of energy to the background") {
    // 0.5 s noise-burst pattern tiled over 4 s
    const int rate = 16000;
    const size_t period = 8000;
    Rng rng(28);
    std::vector<double> pattern(period, 0.0);
    for (size_t i = 0; i < period / 2; ++i) pattern[i] = rng.uniform(-0.8, 0.8);

    AudioClip c;
    c.id = "loop";
    c.sample_rate = rate;
    c.samples.resize(8 * period);
    for (size_t i = 0; i < c.samples.size(); ++i) c.samples[i] = pattern[i % period];

    SeparationParams p;
    p.k = 8;
    p.min_gap = 25;
    SeparationResult r = separate(c, p);
    double e_b = 0.0, e_v = 0.0;
    for (double x : r.background.samples) e_b += x * x;
    for (double x : r.vocal.samples) e_v += x * x;
    CHECK(e_b / (e_b + e_v) >= 0.9);
}

TEST_CASE("separation is deterministic") {
    Rng rng(29);
    AudioClip c;
    c.id = "det";
    c.sample_rate = 16000;
    c.samples.resize(12000);
    for (auto& x : c.samples) x = rng.uniform(-0.5, 0.5);
    SeparationParams p;
    p.k = 12;
    SeparationResult a = separate(c, p);
    SeparationResult b = separate(c, p);
    CHECK(a.vocal.samples == b.vocal.samples);
    CHECK(a.background.samples == b.background.samples);
}

TEST_CASE("parameter validation") {
    Matrix v = random_mag(4, 3, 30);
    Matrix s = similarity_matrix(v);
    SeparationParams p;
    p.k = 0;
    CHECK_THROWS_AS(repeating_model(v, s, p), std::invalid_argument);
    Matrix wrong(3, 3);
    CHECK_THROWS_AS(wiener_mask(wrong, v), std::invalid_argument);
}
