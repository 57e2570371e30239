#include <doctest.h>

#include <cmath>

#include "voxqa/metrics.hpp"
#include "voxqa/rng.hpp"

using namespace voxqa;

namespace {

std::vector<std::uint8_t> random_bits(Rng& rng, std::size_t n, double p1 = 0.5) {
    std::vector<std::uint8_t> v(n);
    for (auto& b : v) b = rng.uniform() < p1 ? 1 : 0;
    return v;
}

// exhaustive per-voxel tally, the independent route
ConfusionCounts oracle_tally(const std::vector<std::uint8_t>& pred,
                             const std::vector<std::uint8_t>& truth) {
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] && truth[i]) ++c.tp;
        if (pred[i] && !truth[i]) ++c.fp;
        if (!pred[i] && truth[i]) ++c.fn;
        if (!pred[i] && !truth[i]) ++c.tn;
    }
    return c;
}

} // namespace

TEST_CASE("confusion basics") {
    std::vector<std::uint8_t> a = {1, 1, 0, 0}, b = a;
    ConfusionCounts c = confusion(a, b);
    CHECK(c.tp == 2);
    CHECK(c.fp == 0);
    CHECK(c.fn == 0);
    CHECK(c.tn == 2);
    CHECK(c.total() == 4);

    std::vector<std::uint8_t> zeros(8, 0), ones(8, 1);
    ConfusionCounts c2 = confusion(zeros, ones);
    CHECK(c2.fn == 8);
    CHECK(c2.total() == 8);

    CHECK_THROWS_AS(confusion(zeros, a), ShapeError);
}

TEST_CASE("confusion equals exhaustive tally on random 8^3 pairs") {
    Rng rng(101);
    for (int t = 0; t < 20; ++t) {
        auto p = random_bits(rng, 512), q = random_bits(rng, 512);
        ConfusionCounts c = confusion(p, q), o = oracle_tally(p, q);
        CHECK(c.tp == o.tp);
        CHECK(c.fp == o.fp);
        CHECK(c.fn == o.fn);
        CHECK(c.tn == o.tn);
    }
}

TEST_CASE("dice_binary formula and conventions") {
    // pred={v1}, truth={v1,v2}: 2*1/(2*1+0+1)
    CHECK(dice_binary({1, 0, 5, 1}) == doctest::Approx(2.0 / 3.0));
    // both empty
    CHECK(dice_binary({0, 0, 7, 0}) == 1.0);
    // truth empty, pred one voxel: a single wrong pixel gives zero DSC
    CHECK(dice_binary({0, 1, 7, 0}) == 0.0);
}

TEST_CASE("acc/prec/recl conventions") {
    auto perfect = acc_prec_recl({4, 0, 4, 0});
    CHECK(perfect.acc == 1.0);
    CHECK(perfect.prec == 1.0);
    CHECK(perfect.recl == 1.0);

    // GT-mask case: truth empty, prediction empty
    auto empty = acc_prec_recl({0, 0, 8, 0});
    CHECK(empty.acc == 1.0);
    CHECK(empty.prec == 1.0);
    CHECK(empty.recl == 1.0);

    // truth has positives, none predicted
    auto miss = acc_prec_recl({0, 0, 6, 2});
    CHECK(miss.prec == 0.0);
    CHECK(miss.recl == 0.0);
}

TEST_CASE("metric values on random volumes match the tally oracle exactly") {
    Rng rng(103);
    for (int t = 0; t < 20; ++t) {
        auto p = random_bits(rng, 512, 0.3), q = random_bits(rng, 512, 0.3);
        ConfusionCounts c = confusion(p, q), o = oracle_tally(p, q);
        const double dsc = dice_binary(c);
        auto apr = acc_prec_recl(c);
        const double odsc =
            (2 * o.tp + o.fp + o.fn) == 0 ? 1.0 : 2.0 * o.tp / double(2 * o.tp + o.fp + o.fn);
        CHECK(dsc == odsc);
        CHECK(apr.acc == double(o.tp + o.tn) / double(o.total()));
        if (o.tp + o.fp > 0) CHECK(apr.prec == double(o.tp) / double(o.tp + o.fp));
        if (o.tp + o.fn > 0) CHECK(apr.recl == double(o.tp) / double(o.tp + o.fn));
        CHECK(dsc >= 0.0);
        CHECK(dsc <= 1.0);
        CHECK(apr.acc >= 0.0);
        CHECK(apr.acc <= 1.0);
    }
}

TEST_CASE("metric_report packs all four binary metrics") {
    Rng rng(105);
    auto p = random_bits(rng, 128, 0.4), q = random_bits(rng, 128, 0.4);
    const ConfusionCounts c = confusion(p, q);
    const MetricReport r = metric_report(c);
    const auto apr = acc_prec_recl(c);
    CHECK(r.dsc == dice_binary(c));
    CHECK(r.acc == apr.acc);
    CHECK(r.prec == apr.prec);
    CHECK(r.recl == apr.recl);
    for (const double v : {r.dsc, r.acc, r.prec, r.recl}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("dice is symmetric in pred/truth") {
    Rng rng(107);
    for (int t = 0; t < 10; ++t) {
        auto p = random_bits(rng, 64), q = random_bits(rng, 64);
        CHECK(dice_binary(confusion(p, q)) == dice_binary(confusion(q, p)));
    }
}

TEST_CASE("dice_multiclass per-class reduction") {
    Rng rng(109);
    auto make = [&](int classes) {
        std::vector<std::uint8_t> l(512);
        for (auto& v : l) v = static_cast<std::uint8_t>(rng.below(classes + 1));
        return LabelMask({8, 8, 8}, {1, 1, 1}, std::move(l), classes);
    };

    LabelMask a = make(3);
    MulticlassDice same = dice_multiclass(a, a);
    for (const double d : same.per_class) CHECK(d == 1.0);
    CHECK(same.mean == 1.0);

    LabelMask bg({8, 8, 8}, {1, 1, 1}, std::vector<std::uint8_t>(512, 0), 3);
    LabelMask full = make(3);
    bool all_present = true;
    for (int c = 1; c <= 3; ++c) {
        bool present = false;
        for (const auto v : full.labels) present |= (v == c);
        all_present &= present;
    }
    if (all_present) {
        MulticlassDice zero = dice_multiclass(bg, full);
        for (const double d : zero.per_class) CHECK(d == 0.0);
    }

    // per-class values equal binary DSC applied class by class
    LabelMask b = make(3);
    MulticlassDice mc = dice_multiclass(a, b);
    for (int c = 1; c <= 3; ++c) {
        std::vector<std::uint8_t> pa(512), pb(512);
        for (std::size_t i = 0; i < 512; ++i) {
            pa[i] = a.labels[i] == c;
            pb[i] = b.labels[i] == c;
        }
        CHECK(mc.per_class[c - 1] == dice_binary(confusion(pa, pb)));
    }

    LabelMask wrong_c = make(2);
    CHECK_THROWS_AS(dice_multiclass(a, wrong_c), ShapeError);
}

TEST_CASE("pearson endpoints, oracle, and affine invariance") {
    std::vector<double> xs = {1, 2, 3, 4};
    CHECK(pearson(xs, xs) == 1.0);

    std::vector<double> neg = {-1, -2, -3, -4};
    CHECK(pearson(xs, neg) == -1.0);

    std::vector<double> ys = {2, 1, 4, 3};
    // direct covariance/sigma oracle
    const double mx = 2.5, my = 2.5;
    double sxy = 0, sxx = 0, syy = 0;
    for (int i = 0; i < 4; ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    CHECK(pearson(xs, ys) == doctest::Approx(sxy / std::sqrt(sxx * syy)).epsilon(1e-12));

    // invariance under positive affine transforms
    Rng rng(113);
    std::vector<double> a(16), b(16);
    for (int i = 0; i < 16; ++i) {
        a[i] = rng.uniform(-3, 3);
        b[i] = rng.uniform(-3, 3);
    }
    const double r0 = pearson(a, b);
    std::vector<double> a2 = a;
    for (auto& v : a2) v = 2.5 * v + 7.0;
    CHECK(std::abs(pearson(a2, b) - r0) < 1e-12);
    CHECK(std::abs(r0) <= 1.0 + 1e-12);

    std::vector<double> constant(4, 2.0);
    CHECK_THROWS_AS(pearson(constant, xs), ValueError);
    std::vector<double> shorter = {1, 2};
    CHECK_THROWS_AS(pearson(xs, shorter), ShapeError);
}

TEST_CASE("mae basics and oracle") {
    std::vector<double> xs = {0, 1}, ys = {1, 0};
    CHECK(mae(xs, xs) == 0.0);
    CHECK(mae(xs, ys) == 1.0);

    Rng rng(127);
    std::vector<double> a(10), b(10);
    for (int i = 0; i < 10; ++i) {
        a[i] = rng.uniform(-5, 5);
        b[i] = rng.uniform(-5, 5);
    }
    double acc = 0;
    for (int i = 0; i < 10; ++i) acc += std::abs(a[i] - b[i]);
    CHECK(mae(a, b) == doctest::Approx(acc / 10).epsilon(1e-15));
}

TEST_CASE("histogram bin conventions") {
    std::vector<double> edges = {0.0, 0.5, 1.0};

    std::vector<double> clustered = {0.1, 0.2, 0.3};
    auto h1 = histogram(clustered, edges);
    CHECK(h1 == std::vector<std::uint64_t>{3, 0});

    // value exactly on an interior edge goes right
    std::vector<double> on_edge = {0.5};
    auto h2 = histogram(on_edge, edges);
    CHECK(h2 == std::vector<std::uint64_t>{0, 1});

    // maximum edge is right-closed
    std::vector<double> at_max = {1.0};
    auto h3 = histogram(at_max, edges);
    CHECK(h3 == std::vector<std::uint64_t>{0, 1});

    std::vector<double> bad_edges = {0.0, 0.0, 1.0};
    CHECK_THROWS_AS(histogram(clustered, bad_edges), ValueError);

    // counts match exhaustive scan; out-of-range values dropped
    Rng rng(131);
    std::vector<double> vals(200);
    for (auto& v : vals) v = rng.uniform(-0.2, 1.2);
    std::vector<double> e10;
    for (int i = 0; i <= 10; ++i) e10.push_back(i / 10.0);
    auto h = histogram(vals, e10);
    std::uint64_t in_range = 0;
    for (const double v : vals)
        if (v >= 0.0 && v <= 1.0) ++in_range;
    std::uint64_t total = 0;
    for (std::size_t b = 0; b < h.size(); ++b) {
        std::uint64_t expect = 0;
        for (const double v : vals) {
            const bool last = b + 1 == h.size();
            if (v >= e10[b] && (v < e10[b + 1] || (last && v == e10[b + 1]))) ++expect;
        }
        CHECK(h[b] == expect);
        total += h[b];
    }
    CHECK(total == in_range);
}
