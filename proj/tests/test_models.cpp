#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "voxqa/checkpoint.hpp"
#include "voxqa/models.hpp"
#include "voxqa/rng.hpp"

using namespace voxqa;
using nn::Tensor;

namespace {

Tensor<float> random_input(Rng& rng, nn::Shape shape) {
    std::vector<float> v(nn::shape_numel(shape));
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
    return Tensor<float>::from_values(std::move(shape), std::move(v));
}

} // namespace

TEST_CASE("segmentor heads are full resolution, 3D and 2D") {
    NetConfig cfg;
    cfg.base_channels = 4;
    cfg.in_channels = 1;
    cfg.out_classes = 4; // C=3

    Rng rng(601);
    SUBCASE("rank 3") {
        cfg.rank = 3;
        SegNet net = build_segmentor(cfg, 42);
        auto heads = net.forward_all_heads(random_input(rng, {1, 1, 16, 16, 16}), false);
        REQUIRE(heads.size() == 5);
        CHECK(heads[0].first == HeadId::Side2);
        CHECK(heads[3].first == HeadId::Side5);
        CHECK(heads[4].first == HeadId::Final);
        for (const auto& [id, t] : heads) CHECK(t.shape() == nn::Shape{1, 4, 16, 16, 16});
    }
    SUBCASE("rank 2") {
        cfg.rank = 2;
        SegNet net = build_segmentor(cfg, 42);
        auto heads = net.forward_all_heads(random_input(rng, {1, 1, 16, 16}), false);
        REQUIRE(heads.size() == 5);
        for (const auto& [id, t] : heads) CHECK(t.shape() == nn::Shape{1, 4, 16, 16});
    }
}

TEST_CASE("config invariants are enforced") {
    NetConfig cfg;
    cfg.num_stages = 3;
    CHECK_THROWS_AS(build_segmentor(cfg, 1), ValueError);
    cfg.num_stages = 4;
    cfg.base_channels = 0;
    CHECK_THROWS_AS(build_segmentor(cfg, 1), ValueError);
    cfg.base_channels = 4;
    cfg.in_channels = 2;
    CHECK_THROWS_AS(build_segmentor(cfg, 1), ValueError);

    NetConfig pcfg;
    pcfg.in_channels = 9;
    pcfg.out_classes = 3;
    CHECK_THROWS_AS(build_predictor(pcfg, 1), ValueError); // predictor is binary
}

TEST_CASE("predictor channel arithmetic for C=7") {
    // one image channel + one-hot over C+1 classes
    const int C = 7;
    NetConfig cfg;
    cfg.base_channels = 2;
    cfg.in_channels = 1 + (C + 1);
    cfg.out_classes = 2;
    CHECK(cfg.in_channels == 9);
    SegNet net = build_predictor(cfg, 9);
    Rng rng(607);
    auto heads = net.forward_all_heads(random_input(rng, {1, 9, 8, 8, 8}), false);
    CHECK(heads.size() == 5);
    CHECK(heads[4].second.shape() == nn::Shape{1, 2, 8, 8, 8});
}

TEST_CASE("head probabilities sum to one and argmax stays in class range") {
    NetConfig cfg;
    cfg.base_channels = 4;
    cfg.out_classes = 3;
    SegNet net = build_segmentor(cfg, 17);
    Rng rng(613);
    auto heads = net.forward_all_heads(random_input(rng, {1, 1, 8, 8, 8}), false);
    const std::size_t vox = 512;
    for (const auto& [id, t] : heads) {
        for (std::size_t v = 0; v < vox; ++v) {
            float s = 0;
            int argmax = 0;
            float best = -1;
            for (std::size_t c = 0; c < 3; ++c) {
                const float p = t.values()[c * vox + v];
                CHECK(p >= 0.0f);
                s += p;
                if (p > best) {
                    best = p;
                    argmax = static_cast<int>(c);
                }
            }
            CHECK(s == doctest::Approx(1.0f).epsilon(1e-5));
            CHECK(argmax >= 0);
            CHECK(argmax <= 2);
        }
    }
}

TEST_CASE("non-divisible input dims round-trip through the heads") {
    NetConfig cfg;
    cfg.base_channels = 2;
    cfg.out_classes = 2;
    SegNet net = build_segmentor(cfg, 23);
    Rng rng(617);
    // 11 and 13 are not divisible by the 8x downsampling factor
    auto heads = net.forward_all_heads(random_input(rng, {1, 1, 11, 13, 9}), false);
    for (const auto& [id, t] : heads) CHECK(t.shape() == nn::Shape{1, 2, 11, 13, 9});
}

TEST_CASE("same seed gives identical parameters and outputs") {
    NetConfig cfg;
    cfg.base_channels = 4;
    cfg.out_classes = 3;
    SegNet a = build_segmentor(cfg, 99);
    SegNet b = build_segmentor(cfg, 99);
    REQUIRE(a.params().size() == b.params().size());
    CHECK(a.trainable_count() == b.trainable_count());
    CHECK(param_digest(a.params()) == param_digest(b.params()));

    Rng rng(619);
    auto x = random_input(rng, {1, 1, 8, 8, 8});
    auto ha = a.forward_all_heads(x, false);
    auto hb = b.forward_all_heads(x, false);
    for (std::size_t i = 0; i < 5; ++i) CHECK(ha[i].second.values() == hb[i].second.values());

    // and twice through the same net
    auto ha2 = a.forward_all_heads(x, false);
    for (std::size_t i = 0; i < 5; ++i) CHECK(ha[i].second.values() == ha2[i].second.values());
}

TEST_CASE("predictor and segmentor share topology up to channel counts") {
    NetConfig scfg;
    scfg.base_channels = 4;
    scfg.out_classes = 4;
    NetConfig pcfg = scfg;
    pcfg.in_channels = 1 + 4;
    pcfg.out_classes = 2;
    SegNet seg = build_segmentor(scfg, 3);
    SegNet pred = build_predictor(pcfg, 3);
    REQUIRE(seg.params().size() == pred.params().size());
    for (std::size_t i = 0; i < seg.params().size(); ++i)
        CHECK(seg.params()[i].name == pred.params()[i].name);
}

TEST_CASE("checkpoint round trip restores every parameter bit") {
    NetConfig cfg;
    cfg.base_channels = 2;
    cfg.out_classes = 2;
    cfg.rank = 2;
    SegNet net = build_segmentor(cfg, 31);
    const auto path = (std::filesystem::temp_directory_path() / "voxqa_net.ckpt").string();
    save_checkpoint(net.params(), path);
    const std::uint64_t digest = param_digest(net.params());

    SegNet other = build_segmentor(cfg, 77); // different init
    CHECK(param_digest(other.params()) != digest);
    load_checkpoint(other.params(), path);
    CHECK(param_digest(other.params()) == digest);

    // shape mismatch is rejected
    NetConfig bigger = cfg;
    bigger.base_channels = 4;
    SegNet wrong = build_segmentor(bigger, 1);
    CHECK_THROWS_AS(load_checkpoint(wrong.params(), path), IoError);
    std::remove(path.c_str());
}

TEST_CASE("head codes follow the scatter-plot convention") {
    CHECK(head_code(HeadId::GTruth) == 0);
    CHECK(head_code(HeadId::Final) == -1);
    CHECK(head_code(HeadId::Side2) == -2);
    CHECK(head_code(HeadId::Side5) == -5);
}
