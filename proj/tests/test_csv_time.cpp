#include <doctest.h>

#include "kceval/csv.hpp"
#include "kceval/errors.hpp"
#include "kceval/hash.hpp"
#include "kceval/time.hpp"

using namespace kceval;

TEST_CASE("rfc3339 parse handles utc, offsets and fractions") {
    CHECK(*parse_rfc3339("1970-01-01T00:00:00Z") == 0);
    CHECK(*parse_rfc3339("2024-01-15T08:00:00Z") == 1705305600);
    CHECK(*parse_rfc3339("1999-12-31T23:59:59Z") == 946684799);
    // Offsets shift toward UTC.
    CHECK(*parse_rfc3339("2024-01-15T10:00:00+02:00") == 1705305600);
    CHECK(*parse_rfc3339("2024-01-15T01:00:00-07:00") == 1705305600);
    // Fractional seconds truncate.
    CHECK(*parse_rfc3339("2024-01-15T08:00:00.75Z") == 1705305600);
    // Lowercase separators are accepted.
    CHECK(*parse_rfc3339("2024-01-15t08:00:00z") == 1705305600);
}

TEST_CASE("rfc3339 parse rejects malformed input") {
    CHECK_FALSE(parse_rfc3339("").has_value());
    CHECK_FALSE(parse_rfc3339("2024-01-15").has_value());
    CHECK_FALSE(parse_rfc3339("2024-01-15T08:00:00").has_value());  // offset mandatory
    CHECK_FALSE(parse_rfc3339("2024-13-01T00:00:00Z").has_value());
    CHECK_FALSE(parse_rfc3339("2023-02-29T00:00:00Z").has_value());
    CHECK(parse_rfc3339("2024-02-29T00:00:00Z").has_value());  // leap day
    CHECK_FALSE(parse_rfc3339("2024-01-15T24:00:00Z").has_value());
    CHECK_FALSE(parse_rfc3339("2024-01-15T08:00:00.Z").has_value());
    CHECK_FALSE(parse_rfc3339("2024-01-15T08:00:00+0200").has_value());
    CHECK_FALSE(parse_rfc3339("not a time").has_value());
    CHECK_FALSE(parse_rfc3339("2024-01-15T08:00:00Z extra").has_value());
}

TEST_CASE("rfc3339 format round-trips") {
    for (const char* text : {"1970-01-01T00:00:00Z", "2024-02-05T09:00:00Z",
                             "1999-12-31T23:59:59Z", "2024-02-29T12:34:56Z"}) {
        const auto t = parse_rfc3339(text);
        REQUIRE(t.has_value());
        CHECK(format_rfc3339(*t) == text);
    }
}

TEST_CASE("csv quoting round-trips awkward fields") {
    CHECK(csv_quote("plain") == "plain");
    CHECK(csv_quote("a,b") == "\"a,b\"");
    CHECK(csv_quote("say \"hi\"") == "\"say \"\"hi\"\"\"");

    const std::vector<std::vector<std::string>> rows = {
        {"id", "text"},
        {"1", "multi\nline, with \"quotes\""},
        {"2", ""},
    };
    std::string doc;
    for (const auto& r : rows) doc += csv_row(r);
    CHECK(parse_csv(doc) == rows);
}

TEST_CASE("csv parse rejects unterminated quotes") {
    CHECK_THROWS_AS(parse_csv("a,\"unterminated\n"), InputError);
}

TEST_CASE("numeric formats are fixed-layout") {
    CHECK(format_sig6(0.0) == "0");
    CHECK(format_sig6(1234.5678) == "1234.57");
    CHECK(format_sig6(1.0 / 3.0) == "0.333333");
    CHECK(format_fixed12(1.0 / 3.0) == "0.333333333333");
    CHECK(format_fixed12(1.0) == "1.000000000000");
}

TEST_CASE("sha256 matches known vectors") {
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}
