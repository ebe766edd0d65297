#include "doctest.h"
#include "tgvas/bigint.hpp"

using tgvas::BigInt;

TEST_CASE("bigint arithmetic round trips") {
    CHECK(BigInt(0).to_string() == "0");
    CHECK(BigInt(-1234567890123456789LL).to_string() == "-1234567890123456789");
    CHECK((BigInt(1000000000) * BigInt(1000000000)).to_string() == "1000000000000000000");
    CHECK((BigInt(7) - BigInt(10)).to_string() == "-3");
    CHECK((BigInt(-7) + BigInt(10)).to_string() == "3");
    CHECK(BigInt::from_string("-000123").to_string() == "-123");
    CHECK(BigInt(2).pow(100).to_string() == "1267650600228229401496703205376");
}

TEST_CASE("bigint comparisons and i64 bounds") {
    CHECK(BigInt(-5) < BigInt(3));
    CHECK(BigInt(3) < BigInt(5));
    CHECK(BigInt(-5) < BigInt(-3));
    CHECK(BigInt(INT64_MAX).fits_i64());
    CHECK(!(BigInt(INT64_MAX) + BigInt(1)).fits_i64());
    CHECK(BigInt(INT64_MIN).to_i64() == INT64_MIN);
    BigInt big = BigInt(10).pow(30);
    CHECK(!big.fits_i64());
    CHECK((big - big).is_zero());
}

TEST_CASE("bigint multiplication matches repeated addition") {
    BigInt acc;
    for (int i = 0; i < 37; ++i) acc += BigInt(999999999);
    CHECK(acc == BigInt(37) * BigInt(999999999));
}
