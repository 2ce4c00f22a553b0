#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pcnn/tensor.hpp"

using namespace pcnn;

TEST_CASE("tensor shape and data invariants") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.rank() == 2);
    t.at(1, 2) = 5.0;
    CHECK(t[5] == 5.0);

    CHECK_THROWS_AS(Tensor({2, 0}), DimError);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimError);
}

TEST_CASE("tensor arithmetic checks shapes") {
    Tensor a({2, 2}), b({4});
    CHECK_THROWS_AS(a += b, DimError);
    Tensor c({2, 2});
    c.fill(1.5);
    a += c;
    CHECK(a.sum() == doctest::Approx(6.0));
    a *= 2.0;
    CHECK(a.max_abs() == doctest::Approx(3.0));
}

TEST_CASE("PCT1 round trip keeps f32 payloads exactly") {
    Rng rng(7);
    Tensor t = Tensor::random_normal({3, 4, 5}, rng);
    // quantize to f32 so the round trip is exact
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = double(float(t[i]));

    const std::string path = (std::filesystem::temp_directory_path() / "pcnn_t.pct").string();
    write_pct(path, t);
    Tensor back = read_pct(path);
    REQUIRE(back.shape() == t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);
    std::remove(path.c_str());
}

TEST_CASE("PCT1 rejects bad magic") {
    const std::string path = (std::filesystem::temp_directory_path() / "pcnn_bad.pct").string();
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE1234";
    }
    CHECK_THROWS_AS(read_pct(path), DataError);
    std::remove(path.c_str());
}
