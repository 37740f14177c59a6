#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "sabnn/data.hpp"
#include "sabnn/error.hpp"

using namespace sabnn;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = "/tmp/" + name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("two moons geometry") {
    Dataset ds = gen_two_moons(200, 0.0, 42);
    REQUIRE(ds.size() == 200);
    CHECK(ds.n_classes == 2);
    int c0 = 0;
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        if (ds.labels(i) == 0) {
            ++c0;
            const double r2 = ds.features(i, 0) * ds.features(i, 0) +
                              ds.features(i, 1) * ds.features(i, 1);
            CHECK(std::abs(r2 - 1.0) < 1e-9);
        }
    }
    CHECK(c0 == 100);

    Dataset a = gen_two_moons(100, 0.2, 7);
    Dataset b = gen_two_moons(100, 0.2, 7);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
}

TEST_CASE("gaussian blobs") {
    std::vector<Vec> centers;
    Vec c1(2), c2(2), c3(2);
    c1 << 0.0, 0.0;
    c2 << 4.0, 0.0;
    c3 << 0.0, 4.0;
    centers = {c1, c2, c3};

    Dataset exact = gen_gaussian_blobs(9, centers, 0.0, 1);
    for (Eigen::Index i = 0; i < exact.size(); ++i) {
        CHECK((exact.features.row(i).transpose() -
               centers[static_cast<std::size_t>(exact.labels(i))])
                  .norm() == 0.0);
    }

    Dataset a = gen_gaussian_blobs(30, centers, 0.5, 3);
    Dataset b = gen_gaussian_blobs(30, centers, 0.5, 3);
    CHECK(a.features == b.features);

    const double spread = 0.5;
    Dataset big = gen_gaussian_blobs(3000, centers, spread, 9);
    const double per = 1000.0;
    Vec sums[3] = {Vec::Zero(2), Vec::Zero(2), Vec::Zero(2)};
    for (Eigen::Index i = 0; i < big.size(); ++i) {
        sums[big.labels(i)] += big.features.row(i).transpose();
    }
    for (int k = 0; k < 3; ++k) {
        const Vec mean = sums[k] / per;
        CHECK((mean - centers[static_cast<std::size_t>(k)]).norm() <
              3.0 * spread / std::sqrt(per) * 2.0);
    }

    CHECK_THROWS_AS(gen_gaussian_blobs(10, centers, 0.5, 1), Error);
}

TEST_CASE("csv load and round-trip") {
    const std::string path = write_temp("sabnn_test_basic.csv", "1.0,2.0,0\n3.0,4.0,1\n");
    Dataset ds = load_csv(path, false);
    REQUIRE(ds.size() == 2);
    CHECK(ds.dim() == 2);
    CHECK(ds.features(0, 0) == 1.0);
    CHECK(ds.features(1, 1) == 4.0);
    CHECK(ds.labels(0) == 0);
    CHECK(ds.labels(1) == 1);
    CHECK(ds.n_classes == 2);

    const std::string hdr =
        write_temp("sabnn_test_header.csv", "x0,x1,label\n1.0,2.0,0\n3.0,4.0,1\n");
    Dataset with_header = load_csv(hdr, true);
    CHECK(with_header.size() == 2);

    Dataset gen = gen_two_moons(100, 0.15, 5);
    const std::string rt = "/tmp/sabnn_test_roundtrip.csv";
    save_csv(rt, gen, true);
    Dataset back = load_csv(rt, true);
    CHECK(back.features == gen.features);  // shortest round-trip formatting is exact
    CHECK(back.labels == gen.labels);
}

TEST_CASE("csv error rows are named") {
    const std::string ragged = write_temp("sabnn_test_ragged.csv", "1,2,0\n1,0\n");
    CHECK_THROWS_WITH_AS(load_csv(ragged, false), doctest::Contains("row 2"), Error);

    const std::string nonnum = write_temp("sabnn_test_nonnum.csv", "1,2,0\nx,4,1\n");
    CHECK_THROWS_WITH_AS(load_csv(nonnum, false), doctest::Contains("row 2"), Error);

    const std::string badlab = write_temp("sabnn_test_badlab.csv", "1,2,0\n3,4,-1\n");
    CHECK_THROWS_WITH_AS(load_csv(badlab, false), doctest::Contains("row 2"), Error);
}

TEST_CASE("split and normalization") {
    Dataset ds = gen_two_moons(200, 0.2, 11);
    auto [train, test] = split_normalize(ds, 0.8, 3);
    CHECK(train.size() == 160);
    CHECK(test.size() == 40);
    for (Eigen::Index j = 0; j < train.dim(); ++j) {
        const double mean = train.features.col(j).mean();
        const double var = (train.features.col(j).array() - mean).square().mean();
        CHECK(std::abs(mean) < 1e-10);
        CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-10);
    }

    auto [t2, s2] = split_normalize(ds, 0.8, 3);
    CHECK(t2.features == train.features);
    CHECK(s2.labels == test.labels);

    Dataset tiny = gen_two_moons(10, 0.1, 1);
    CHECK_THROWS_AS(split_normalize(tiny, 0.99, 1), Error);
}

TEST_CASE("fingerprint is content-sensitive and stable") {
    Dataset ds = gen_two_moons(50, 0.2, 1);
    const std::uint64_t h1 = dataset_fingerprint(ds);
    CHECK(dataset_fingerprint(ds) == h1);
    Dataset tweaked = ds;
    tweaked.features(0, 0) += 1e-9;
    CHECK(dataset_fingerprint(tweaked) != h1);
}
