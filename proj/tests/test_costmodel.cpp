#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "hrseg/costmodel.hpp"

using namespace hrseg;

namespace {

PipelinePlan toy_plan(Strategy s, int sigma = 2) {
    return PipelinePlan::from_model(EncoderConfig{}, DecoderConfig{}, s, sigma);
}

}  // namespace

TEST_CASE("formula base case: a 1x1 conv with one input and output channel is 2 FLOPs") {
    PipelinePlan p;
    p.strategy = Strategy::lr_only;
    p.encoder = {ConvSpec{3, 1, 1, 1, 0}};   // squeeze to one channel: 2*3 FLOPs
    p.decoder = {ConvSpec{1, 1, 1, 1, 0}};   // the base case itself
    CostReport r = count_flops(p, 1, 1);
    CHECK(r.decoder_flops == 2.0);
    CHECK(r.encoder_flops == 6.0);
    CHECK(r.total_flops == 8.0);
}

TEST_CASE("doubling H and W quadruples conv FLOPs") {
    PipelinePlan p = toy_plan(Strategy::lr_only);
    const CostReport small = count_flops(p, 64, 64);
    const CostReport big = count_flops(p, 128, 128);
    CHECK(big.encoder_flops == 4.0 * small.encoder_flops);
    CHECK(big.decoder_flops == 4.0 * small.decoder_flops);
    CHECK(big.total_flops == 4.0 * small.total_flops);
}

TEST_CASE("stack additivity: cost of A+B equals cost of A plus cost of B at A's output") {
    const std::vector<LayerSpec> a = {ConvSpec{3, 8, 3, 2, 1}, ElementwiseSpec{1}};
    const std::vector<LayerSpec> b = {ConvSpec{8, 16, 3, 1, 1}};
    PipelinePlan pa, pab;
    pa.strategy = pab.strategy = Strategy::lr_only;
    pa.encoder = a;
    pab.encoder = a;
    pab.encoder.insert(pab.encoder.end(), b.begin(), b.end());

    const double fa = count_flops(pa, 32, 32).encoder_flops;
    const double fab = count_flops(pab, 32, 32).encoder_flops;
    // B alone at A's output dims: conv 8->16, 3x3, on 16x16
    const double fb = 2.0 * 9 * 8 * 16 * 16 * 16;
    CHECK(fab == fa + fb);
}

TEST_CASE("shape propagation failures are errors") {
    PipelinePlan p;
    p.strategy = Strategy::lr_only;
    p.encoder = {ConvSpec{4, 8, 3, 1, 1}};  // input is 3-channel
    CHECK_THROWS_AS(count_flops(p, 16, 16), std::invalid_argument);
    PipelinePlan q;
    q.strategy = Strategy::lr_only;
    q.encoder = {ConvSpec{3, 8, 5, 1, 0}};
    CHECK_THROWS_AS(count_flops(q, 4, 4), std::invalid_argument);  // output collapses
}

TEST_CASE("encoder pass counts: 1 for hrdecoder, tiles+1 for encoder_multipass") {
    const CostReport hr = count_flops(toy_plan(Strategy::hrdecoder), 256, 256);
    CHECK(hr.encoder_passes == 1);
    CHECK(hr.decoder_passes == 5);  // LR branch + 4 sliding windows at sigma=2
    const CostReport mp = count_flops(toy_plan(Strategy::encoder_multipass), 256, 256);
    CHECK(mp.encoder_passes == 5);
    CHECK(mp.decoder_passes == 5);
}

TEST_CASE("toy plan at 256: hand-summed per-layer oracle and the >2 multipass ratio") {
    // encoder stages at 256 input: 3->16 s2 (128^2), 16->32 s2 (64^2),
    // 32->64 s1, 64->64 s1, each conv followed by a 1-FLOP activation
    const double enc256 =
        2.0 * 9 * 3 * 16 * 128 * 128 + 1.0 * 16 * 128 * 128 +
        2.0 * 9 * 16 * 32 * 64 * 64 + 1.0 * 32 * 64 * 64 +
        2.0 * 9 * 32 * 64 * 64 * 64 + 1.0 * 64 * 64 * 64 +
        2.0 * 9 * 64 * 64 * 64 * 64 + 1.0 * 64 * 64 * 64;
    // decoder on a 64x64 feature map: 64->32 3x3, activation, 32->4 1x1
    const double dec64 =
        2.0 * 9 * 64 * 32 * 64 * 64 + 1.0 * 32 * 64 * 64 + 2.0 * 32 * 4 * 64 * 64;
    const double canvas = 128.0 * 128.0;

    const double hr_hand = enc256 + 5.0 * dec64            // LR decode + 4 tiles
                           + 8.0 * 64 * canvas             // feature upsample
                           + 8.0 * 4 * canvas              // LR logits upsample
                           + 4.0 * 4 * canvas;             // normalize + fuse
    // HRDA-style window at image scale is the full 256^2 input, 4 times
    const double mp_hand = 5.0 * enc256 + 5.0 * dec64 + 8.0 * 4 * canvas + 4.0 * 4 * canvas;

    const CostReport hr = count_flops(toy_plan(Strategy::hrdecoder), 256, 256);
    const CostReport mp = count_flops(toy_plan(Strategy::encoder_multipass), 256, 256);
    CHECK(hr.total_flops == hr_hand);
    CHECK(mp.total_flops == mp_hand);
    CHECK(mp.total_flops / hr.total_flops > 2.0);
}

TEST_CASE("totals equal the sum of encoder and decoder parts") {
    for (Strategy s : {Strategy::lr_only, Strategy::hrdecoder, Strategy::encoder_multipass}) {
        const CostReport r = count_flops(toy_plan(s), 128, 128);
        CHECK(r.total_flops == r.encoder_flops + r.decoder_flops);
    }
}

TEST_CASE("memory: single layer costs input plus output bytes, linear in batch") {
    PipelinePlan p;
    p.strategy = Strategy::lr_only;
    p.encoder = {ConvSpec{3, 4, 3, 1, 1}};
    CHECK(estimate_memory(p, 8, 8, 1) == (3 * 64 + 4 * 64) * 4);
    CHECK(estimate_memory(p, 8, 8, 2) == 2 * estimate_memory(p, 8, 8, 1));
}

TEST_CASE("memory: hrdecoder peak does not grow with the tile count") {
    // sigma 2 -> 4 tiles, sigma 4 -> 16 tiles, same window size
    const std::int64_t m2 = estimate_memory(toy_plan(Strategy::hrdecoder, 2), 256, 256, 1);
    const std::int64_t m4 = estimate_memory(toy_plan(Strategy::hrdecoder, 4), 256, 256, 1);
    CHECK(m2 == m4);
}

TEST_CASE("memory: encoder_multipass peak at least matches hrdecoder on the toy plan") {
    CHECK(estimate_memory(toy_plan(Strategy::encoder_multipass), 256, 256, 1) >=
          estimate_memory(toy_plan(Strategy::hrdecoder), 256, 256, 1));
}

TEST_CASE("compare: sorted rows, one per plan, strategies ordered by cost") {
    const std::vector<PipelinePlan> plans = {toy_plan(Strategy::encoder_multipass),
                                             toy_plan(Strategy::lr_only),
                                             toy_plan(Strategy::hrdecoder)};
    const auto rows = compare(plans, 256, 256);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].strategy == "lr_only");
    CHECK(rows[1].strategy == "hrdecoder");
    CHECK(rows[2].strategy == "encoder_multipass");
    CHECK(rows[0].gflops < rows[1].gflops);
    CHECK(rows[1].gflops < rows[2].gflops);

    const auto twin = compare({toy_plan(Strategy::hrdecoder), toy_plan(Strategy::hrdecoder)}, 256, 256);
    CHECK(twin[0].strategy == twin[1].strategy);
    CHECK(twin[0].gflops == twin[1].gflops);
    CHECK(twin[0].peak_mb == twin[1].peak_mb);

    CHECK_THROWS_AS(compare({toy_plan(Strategy::lr_only)}, 256, 256), std::invalid_argument);
}

TEST_CASE("compare CSV layout") {
    const auto rows = compare({toy_plan(Strategy::lr_only), toy_plan(Strategy::hrdecoder)}, 128, 128);
    const std::string path = "compare_csv_test.csv";
    write_compare_csv(rows, path, "unit test");
    FILE* f = std::fopen(path.c_str(), "rb");
    REQUIRE(f != nullptr);
    std::string s;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) s.append(buf, n);
    std::fclose(f);
    std::remove(path.c_str());
    CHECK(s.rfind("# unit test\n", 0) == 0);
    CHECK(s.find("strategy,gflops,peak_mb,encoder_passes") != std::string::npos);
    CHECK(s.find("lr_only,") != std::string::npos);
    CHECK(s.find("hrdecoder,") != std::string::npos);
}
