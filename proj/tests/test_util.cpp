#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace cwall;

TEST_CASE("split_lines handles trailing newlines and blanks") {
    CHECK(split_lines("a\nb\n") == std::vector<std::string>{"a", "b"});
    CHECK(split_lines("a\nb") == std::vector<std::string>{"a", "b"});
    CHECK(split_lines("a\n\nb") == std::vector<std::string>{"a", "", "b"});
    CHECK(split_lines("") == std::vector<std::string>{});
    CHECK(split_lines("\n") == std::vector<std::string>{""});
}

TEST_CASE("trim_blank_lines strips only the edges") {
    CHECK(trim_blank_lines("\n\ncode\n\n") == "code");
    CHECK(trim_blank_lines("a\n\nb") == "a\n\nb");
    CHECK(trim_blank_lines("   \n x \n\t\n") == " x ");
}

TEST_CASE("format_fixed2 rounds half up at two decimals") {
    CHECK(format_fixed2(94.285714) == "94.29");
    CHECK(format_fixed2(66.65) == "66.65");
    CHECK(format_fixed2(0.0) == "0.00");
    CHECK(format_fixed2(19.8005) == "19.80");
    CHECK(format_fixed2(2.005) == "2.01");
    CHECK(format_fixed2(-1.235) == "-1.24");
    CHECK(format_fixed2(100.0) == "100.00");
}

TEST_CASE("fnv1a64 is stable") {
    CHECK(to_hex(fnv1a64("")) == "cbf29ce484222325");
    CHECK(fnv1a64("a") != fnv1a64("b"));
}

TEST_CASE("sha256 matches the reference vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
    std::string million(1000000, 'a');
    CHECK(sha256_hex(million) == "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}

TEST_CASE("parallel_for covers every index exactly once") {
    std::vector<std::atomic<int>> counts(257);
    parallel_for(counts.size(), 8, [&](size_t i) { counts[i].fetch_add(1); });
    for (const auto& c : counts) CHECK(c.load() == 1);
}

TEST_CASE("parallel_for propagates a worker exception") {
    CHECK_THROWS_AS(parallel_for(16, 4,
                                 [&](size_t i) {
                                     if (i == 7) throw ContractError("boom");
                                 }),
                    ContractError);
}

TEST_CASE("append_bounded_tail keeps the tail") {
    std::string tail;
    append_bounded_tail(tail, "0123456789", 4);
    CHECK(tail == "6789");
    append_bounded_tail(tail, "ab", 4);
    CHECK(tail == "89ab");
}
