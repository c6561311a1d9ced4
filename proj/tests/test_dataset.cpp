#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "svb/dataset.hpp"
#include "svb/errors.hpp"

using namespace svb;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& contents = "") {
        path = (std::filesystem::temp_directory_path() / name).string();
        std::ofstream f(path, std::ios::binary);
        f << contents;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

bool samples_equal(const LabeledSample& a, const LabeledSample& b) {
    return a.label == b.label && a.features == b.features;
}

}  // namespace

TEST_CASE("load_libsvm: two-line file infers N, D, K") {
    TempFile f("svbt_two.libsvm", "0 0:1.5\n1 2:2.0\n");
    Dataset ds = load_libsvm(f.path);
    CHECK(ds.size() == 2);
    CHECK(ds.num_features == 3);
    CHECK(ds.num_classes == 2);
    CHECK(ds.samples[0].label == 0);
    CHECK(ds.samples[0].features.indices == std::vector<std::uint32_t>{0});
    CHECK(ds.samples[0].features.values == std::vector<double>{1.5});
    CHECK(ds.samples[1].features.indices == std::vector<std::uint32_t>{2});
}

TEST_CASE("load_libsvm: empty file rejected") {
    TempFile f("svbt_empty.libsvm", "");
    CHECK_THROWS_AS(load_libsvm(f.path), ParseError);
}

TEST_CASE("load_libsvm: missing file rejected") {
    CHECK_THROWS_AS(load_libsvm("/nonexistent/nowhere.libsvm"), IoError);
}

TEST_CASE("load_libsvm: 20-line fixture matches hand counts") {
    std::string text;
    for (int i = 0; i < 20; ++i) {
        text += std::to_string(i % 4);  // max label 3
        text += " " + std::to_string(i) + ":1.0";  // max index 19
        text += "\n";
    }
    TempFile f("svbt_twenty.libsvm", text);
    Dataset ds = load_libsvm(f.path);
    CHECK(ds.size() == 20);
    CHECK(ds.num_features == 20);
    CHECK(ds.num_classes == 4);
}

TEST_CASE("load_libsvm: malformed lines report their line number") {
    SUBCASE("bad value") {
        TempFile f("svbt_badval.libsvm", "0 0:1.0\n1 1:zork\n");
        try {
            load_libsvm(f.path);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == 2);
        }
    }
    SUBCASE("unsorted duplicate index") {
        TempFile f("svbt_dup.libsvm", "0 1:1.0 1:2.0\n");
        try {
            load_libsvm(f.path);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == 1);
        }
    }
    SUBCASE("decreasing index") {
        TempFile f("svbt_desc.libsvm", "0 3:1.0 1:2.0\n");
        CHECK_THROWS_AS(load_libsvm(f.path), ParseError);
    }
    SUBCASE("missing colon") {
        TempFile f("svbt_colon.libsvm", "0 17\n");
        CHECK_THROWS_AS(load_libsvm(f.path), ParseError);
    }
    SUBCASE("label beyond the declared class count") {
        TempFile f("svbt_label.libsvm", "0 0:1.0\n7 1:1.0\n");
        try {
            load_libsvm(f.path, 4);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == 2);
        }
    }
    SUBCASE("feature index beyond the declared dimension") {
        TempFile f("svbt_featdim.libsvm", "0 9:1.0\n");
        CHECK_THROWS_AS(load_libsvm(f.path, std::nullopt, 5), ParseError);
    }
}

TEST_CASE("save/load roundtrip reproduces the dataset exactly") {
    SyntheticProblem problem = gen_synthetic(4, 8, 50, 99, 2.0);
    TempFile f("svbt_roundtrip.libsvm");
    save_libsvm(problem.data, f.path);
    Dataset back = load_libsvm(f.path, problem.data.num_classes, problem.data.num_features);
    REQUIRE(back.size() == problem.data.size());
    CHECK(back.num_features == problem.data.num_features);
    CHECK(back.num_classes == problem.data.num_classes);
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(samples_equal(back.samples[i], problem.data.samples[i]));
    }
}

TEST_CASE("partition: round robin on four samples, two workers") {
    Dataset ds;
    ds.num_classes = 2;
    ds.num_features = 1;
    ds.samples.resize(4);
    Shard s0 = partition(ds, 2, 0);
    Shard s1 = partition(ds, 2, 1);
    CHECK(s0.sample_indices == std::vector<std::uint32_t>{0, 2});
    CHECK(s1.sample_indices == std::vector<std::uint32_t>{1, 3});
}

TEST_CASE("partition: single worker owns everything") {
    Dataset ds;
    ds.samples.resize(7);
    Shard s = partition(ds, 1, 0);
    CHECK(s.size() == 7);
}

TEST_CASE("partition: shards cover the dataset disjointly") {
    SplitMix64 rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        Dataset ds;
        ds.samples.resize(1 + rng.next_below(200));
        const std::uint32_t m = 1 + static_cast<std::uint32_t>(rng.next_below(ds.size()));
        std::set<std::uint32_t> seen;
        for (std::uint32_t p = 0; p < m; ++p) {
            for (std::uint32_t idx : partition(ds, m, p).sample_indices) {
                CHECK(seen.insert(idx).second);  // disjoint
            }
        }
        CHECK(seen.size() == ds.size());  // covering
    }
}

TEST_CASE("partition: invalid arguments rejected") {
    Dataset ds;
    ds.samples.resize(3);
    CHECK_THROWS_AS(partition(ds, 0, 0), DimensionError);
    CHECK_THROWS_AS(partition(ds, 4, 0), DimensionError);  // M > N
    CHECK_THROWS_AS(partition(ds, 2, 2), DimensionError);  // p out of range
}

TEST_CASE("gen_synthetic: same seed twice gives identical datasets") {
    SyntheticProblem a = gen_synthetic(5, 10, 100, 7, 3.0);
    SyntheticProblem b = gen_synthetic(5, 10, 100, 7, 3.0);
    CHECK(a.planted == b.planted);
    REQUIRE(a.data.size() == b.data.size());
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        CHECK(samples_equal(a.data.samples[i], b.data.samples[i]));
    }
    SyntheticProblem c = gen_synthetic(5, 10, 100, 8, 3.0);
    CHECK_FALSE(c.planted == a.planted);
}

TEST_CASE("gen_synthetic: labels come from the planted argmax") {
    SyntheticProblem p = gen_synthetic(4, 8, 200, 3, 5.0);
    for (const LabeledSample& s : p.data.samples) {
        CHECK(predict(p.planted, s.features) == s.label);
    }
}

TEST_CASE("gen_synthetic: large margin limit is perfectly separable") {
    SyntheticProblem p = gen_synthetic(6, 12, 300, 21, 100.0);
    CHECK(accuracy(p.planted, p.data.samples) == 1.0);
}

TEST_CASE("gen_synthetic: benchmark shape reaches planted accuracy 0.99") {
    SyntheticProblem p = gen_synthetic(10, 50, 2000, 42, 3.0);
    CHECK(accuracy(p.planted, p.data.samples) >= 0.99);
}

TEST_CASE("gen_synthetic: invalid shapes rejected") {
    CHECK_THROWS_AS(gen_synthetic(1, 10, 100, 1, 1.0), DimensionError);   // K < 2
    CHECK_THROWS_AS(gen_synthetic(10, 5, 100, 1, 1.0), DimensionError);   // D < K
    CHECK_THROWS_AS(gen_synthetic(10, 20, 5, 1, 1.0), DimensionError);    // N < K
    CHECK_THROWS_AS(gen_synthetic(4, 8, 100, 1, 0.0), NumericError);      // margin
}

TEST_CASE("sample_stream: single-sample shard is constant") {
    Shard shard;
    shard.sample_indices = {5};
    SampleStream stream(shard, 1);
    for (int i = 0; i < 100; ++i) CHECK(stream.next() == 5);
}

TEST_CASE("sample_stream: same seed gives an identical prefix") {
    Shard shard;
    for (std::uint32_t i = 0; i < 30; ++i) shard.sample_indices.push_back(i * 3);
    SampleStream a(shard, 9), b(shard, 9);
    for (int i = 0; i < 10000; ++i) CHECK(a.next() == b.next());
    SampleStream c(shard, 10);
    int differs = 0;
    SampleStream a2(shard, 9);
    for (int i = 0; i < 100; ++i) differs += a2.next() != c.next();
    CHECK(differs > 0);
}

TEST_CASE("sample_stream: empirical frequencies within 3 sigma of uniform") {
    Shard shard;
    for (std::uint32_t i = 0; i < 10; ++i) shard.sample_indices.push_back(i);
    SampleStream stream(shard, 4242);
    std::vector<int> counts(10, 0);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) ++counts[stream.next()];
    const double expected = draws / 10.0;
    const double sigma = std::sqrt(draws * 0.1 * 0.9);
    for (int c : counts) {
        CHECK(std::fabs(c - expected) <= 3.0 * sigma);
    }
}

TEST_CASE("sample_stream: empty shard rejected") {
    Shard shard;
    CHECK_THROWS_AS(SampleStream(shard, 1), Error);
}
