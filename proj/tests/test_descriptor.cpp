#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "frt/descriptor.hpp"
#include "frt/rng.hpp"

using frt::kNumKeypoints;
using frt::kNumParts;
using frt::PersonDescriptor;
using frt::RegionMap;

namespace {

PersonDescriptor random_descriptor(frt::Rng& rng, int c, const RegionMap& regions) {
    PersonDescriptor d;
    d.id = static_cast<int>(rng.below(100));
    d.camera = static_cast<int>(rng.below(4));
    for (int i = 0; i < kNumKeypoints; ++i) d.kp_conf[i] = rng.uniform();
    for (int p = 0; p < kNumParts; ++p) {
        d.parts[p].resize(c);
        for (int j = 0; j < c; ++j) d.parts[p][j] = rng.normal();
    }
    d.vis = frt::visibility_scores(d.kp_conf, regions);
    return d;
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/frt_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("visibility score is the region mean") {
    RegionMap regions = RegionMap::standard();
    std::array<double, kNumKeypoints> conf{};
    // torso region = keypoints 0..5
    double torso[6] = {0.9, 0.7, 0.8, 0.6, 1.0, 0.8};
    for (int i = 0; i < 6; ++i) conf[i] = torso[i];
    auto v = frt::visibility_scores(conf, regions);
    CHECK(v[frt::kPartTorso] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("visibility extremes") {
    RegionMap regions = RegionMap::standard();
    std::array<double, kNumKeypoints> ones;
    ones.fill(1.0);
    auto v1 = frt::visibility_scores(ones, regions);
    for (double x : v1) CHECK(x == 1.0);

    std::array<double, kNumKeypoints> zeros{};
    auto v0 = frt::visibility_scores(zeros, regions);
    for (double x : v0) CHECK(x == 0.0);
}

TEST_CASE("empty region is a configuration error") {
    RegionMap regions = RegionMap::standard();
    regions.keypoints[frt::kPartHead].clear();
    std::array<double, kNumKeypoints> conf{};
    CHECK_THROWS_AS(frt::visibility_scores(conf, regions), frt::ConfigError);
}

TEST_CASE("visibility is permutation-invariant within a region") {
    RegionMap regions = RegionMap::standard();
    frt::Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        std::array<double, kNumKeypoints> conf;
        for (auto& x : conf) x = rng.uniform();
        auto v = frt::visibility_scores(conf, regions);

        // permute the leg region's confidences among themselves
        std::array<double, kNumKeypoints> perm = conf;
        std::swap(perm[6], perm[11]);
        std::swap(perm[8], perm[9]);
        auto vp = frt::visibility_scores(perm, regions);
        CHECK(vp[frt::kPartLeg] == doctest::Approx(v[frt::kPartLeg]).epsilon(1e-15));
    }
}

TEST_CASE("threshold zeroes exactly the sub-delta parts") {
    RegionMap regions = RegionMap::standard();
    frt::Rng rng(5);
    PersonDescriptor d = random_descriptor(rng, 3, regions);
    d.vis = {0.9, 0.1, 0.8, 0.05};
    PersonDescriptor out = frt::apply_occlusion_threshold(d, 0.2);
    CHECK(!out.part_is_zero(0));
    CHECK(out.part_is_zero(1));
    CHECK(!out.part_is_zero(2));
    CHECK(out.part_is_zero(3));
    CHECK(out.parts[0] == d.parts[0]);
    CHECK(out.parts[2] == d.parts[2]);
}

TEST_CASE("threshold zero never zeroes") {
    RegionMap regions = RegionMap::standard();
    frt::Rng rng(6);
    PersonDescriptor d = random_descriptor(rng, 4, regions);
    d.vis = {0.0, 0.0, 0.0, 0.0};
    PersonDescriptor out = frt::apply_occlusion_threshold(d, 0.0);
    for (int p = 0; p < kNumParts; ++p) CHECK(out.parts[p] == d.parts[p]);
}

TEST_CASE("ties at vis == delta are kept") {
    RegionMap regions = RegionMap::standard();
    frt::Rng rng(8);
    PersonDescriptor d = random_descriptor(rng, 3, regions);
    d.vis = {0.2, 0.2, 0.2, 0.2};
    PersonDescriptor out = frt::apply_occlusion_threshold(d, 0.2);
    for (int p = 0; p < kNumParts; ++p) CHECK(out.parts[p] == d.parts[p]);
}

TEST_CASE("thresholding is idempotent and preserves metadata") {
    RegionMap regions = RegionMap::standard();
    frt::Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        PersonDescriptor d = random_descriptor(rng, 5, regions);
        double delta = rng.uniform();
        PersonDescriptor once = frt::apply_occlusion_threshold(d, delta);
        PersonDescriptor twice = frt::apply_occlusion_threshold(once, delta);
        for (int p = 0; p < kNumParts; ++p) {
            CHECK(once.parts[p] == twice.parts[p]);
            // vis < delta  <=>  part zeroed (inputs here are generically nonzero)
            CHECK(once.part_is_zero(p) == (d.vis[p] < delta));
        }
        CHECK(once.vis == d.vis);
        CHECK(once.kp_conf == d.kp_conf);
        CHECK(once.id == d.id);
        CHECK(once.camera == d.camera);
    }
}

TEST_CASE("pfv round trip of an empty collection") {
    TempFile f("empty.pfv");
    frt::write_pfv(f.path, {});
    auto back = frt::read_pfv(f.path, RegionMap::standard());
    CHECK(back.empty());
}

TEST_CASE("pfv record field count") {
    RegionMap regions = RegionMap::standard();
    frt::Rng rng(10);
    PersonDescriptor d = random_descriptor(rng, 2, regions);
    TempFile f("single.pfv");
    frt::write_pfv(f.path, {d});

    std::ifstream in(f.path);
    std::string header, record;
    std::getline(in, header);
    std::getline(in, record);
    CHECK(header.substr(0, 4) == "PFV1");
    int fields = 0;
    std::istringstream ss(record);
    std::string tok;
    while (ss >> tok) ++fields;
    CHECK(fields == 2 + 12 + 4 * 2);
}

TEST_CASE("pfv round trip is lossless for 100 random descriptors") {
    RegionMap regions = RegionMap::standard();
    frt::Rng rng(11);
    std::vector<PersonDescriptor> ds;
    for (int i = 0; i < 100; ++i) ds.push_back(random_descriptor(rng, 7, regions));
    TempFile f("roundtrip.pfv");
    frt::write_pfv(f.path, ds);
    auto back = frt::read_pfv(f.path, regions);
    REQUIRE(back.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(back[i].id == ds[i].id);
        CHECK(back[i].camera == ds[i].camera);
        CHECK(back[i].kp_conf == ds[i].kp_conf);
        CHECK(back[i].vis == ds[i].vis);
        for (int p = 0; p < kNumParts; ++p) CHECK(back[i].parts[p] == ds[i].parts[p]);
    }
}

TEST_CASE("pfv parse errors name the line") {
    RegionMap regions = RegionMap::standard();
    TempFile f("bad.pfv");

    SUBCASE("malformed header") {
        std::ofstream(f.path) << "PFX1 3 12\n";
        CHECK_THROWS_AS(frt::read_pfv(f.path, regions), frt::ParseError);
    }
    SUBCASE("wrong field count") {
        std::ofstream(f.path) << "PFV1 1 12\n0 0 0.5\n";
        try {
            frt::read_pfv(f.path, regions);
            FAIL("expected ParseError");
        } catch (const frt::ParseError& e) {
            CHECK(e.line() == 2);
        }
    }
    SUBCASE("non-finite value") {
        std::ofstream out(f.path);
        out << "PFV1 1 12\n0 0";
        for (int i = 0; i < 12; ++i) out << " 0.5";
        out << " 1 nan 3 4\n";
        out.close();
        CHECK_THROWS_AS(frt::read_pfv(f.path, regions), frt::ParseError);
    }
}
