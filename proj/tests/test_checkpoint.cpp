#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "prep/checkpoint.hpp"

using prep::Checkpoint;
using Catch::Matchers::ContainsSubstring;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Checkpoint sample() {
    Checkpoint c;
    c.kind = Checkpoint::Kind::dan;
    c.vocab_hash = 0xdeadbeefcafef00dULL;
    c.meta["embed_dim"] = "6";
    c.meta["activation"] = "rectifier";
    c.set_array("W1", {2, 3}, {1.0, -2.5, 0.0, 1e-300, 3.14159, -0.0});
    c.set_array("b1", {3}, {0.25, 0.5, 0.75});
    return c;
}

}  // namespace

TEST_CASE("checkpoint round trips byte for byte", "[checkpoint]") {
    const Checkpoint original = sample();
    const std::string p1 = tmp_path("ckpt_a.bin");
    const std::string p2 = tmp_path("ckpt_b.bin");

    original.save(p1);
    const Checkpoint loaded = Checkpoint::load(p1);
    loaded.save(p2);
    CHECK(slurp(p1) == slurp(p2));

    CHECK(loaded.kind == original.kind);
    CHECK(loaded.vocab_hash == original.vocab_hash);
    CHECK(loaded.meta == original.meta);
    REQUIRE(loaded.arrays.size() == 2);
    CHECK(loaded.array("W1").shape == std::vector<uint64_t>{2, 3});
    CHECK(loaded.array("W1").values == original.array("W1").values);
    CHECK(loaded.array("b1").values == original.array("b1").values);
}

TEST_CASE("checkpoint header starts with magic", "[checkpoint]") {
    const std::string path = tmp_path("ckpt_magic.bin");
    sample().save(path);
    const std::string bytes = slurp(path);
    REQUIRE(bytes.size() > 4);
    CHECK(bytes.substr(0, 4) == "PREP");
}

TEST_CASE("checkpoint kind guard", "[checkpoint]") {
    const Checkpoint c = sample();
    CHECK_NOTHROW(c.require_kind(Checkpoint::Kind::dan));
    CHECK_THROWS_WITH(c.require_kind(Checkpoint::Kind::svd),
                      ContainsSubstring("svd") && ContainsSubstring("dan"));
}

TEST_CASE("checkpoint rejects corrupted files", "[checkpoint]") {
    const std::string path = tmp_path("ckpt_bad.bin");

    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << "NOPEgarbage";
    }
    CHECK_THROWS_WITH(Checkpoint::load(path), ContainsSubstring("magic"));

    sample().save(path);
    const std::string bytes = slurp(path);
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_WITH(Checkpoint::load(path), ContainsSubstring("truncated"));

    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out << "extra";
    }
    CHECK_THROWS(Checkpoint::load(path));

    CHECK_THROWS_WITH(Checkpoint::load(tmp_path("ckpt_missing.bin")), ContainsSubstring("cannot open"));
}

TEST_CASE("set_array validates shapes", "[checkpoint]") {
    Checkpoint c;
    CHECK_THROWS_AS(c.set_array("bad", {2, 2}, {1.0, 2.0, 3.0}), std::logic_error);
    CHECK_THROWS_WITH(c.array("missing"), ContainsSubstring("missing"));

    c.set_array("empty", {0}, {});
    CHECK(c.array("empty").values.empty());

    c.set_array("scalarish", {1}, {42.0});
    CHECK(c.array("scalarish").element_count() == 1);
}

TEST_CASE("special float values survive the trip", "[checkpoint]") {
    Checkpoint c;
    c.kind = Checkpoint::Kind::svd;
    const double denorm = 5e-324;
    const double inf = std::numeric_limits<double>::infinity();
    c.set_array("vals", {4}, {denorm, -inf, 0.0, -0.0});

    const std::string path = tmp_path("ckpt_special.bin");
    c.save(path);
    const Checkpoint loaded = Checkpoint::load(path);
    const auto& v = loaded.array("vals").values;
    CHECK(v[0] == denorm);
    CHECK(v[1] == -inf);
    CHECK(v[2] == 0.0);
    CHECK(std::signbit(v[3]));
}
