#include <doctest.h>

#include <filesystem>
#include <set>

#include "lumeneit/error.hpp"
#include "lumeneit/fem.hpp"
#include "lumeneit/protocol.hpp"

using namespace lumeneit;

namespace {
bool touches(const ProtocolRow& r, int e) {
    return r.meas_pos == e || r.meas_neg == e;
}
} // namespace

TEST_CASE("radial protocol") {
    const Protocol p = radial_protocol();
    REQUIRE(p.size() == 8);
    CHECK(p.rows[0] == ProtocolRow{1, 9, 2, 10});
    CHECK(p.rows[7] == ProtocolRow{8, 16, 1, 9});
    CHECK(validate_protocol(p).valid());
}

TEST_CASE("full protocol has 136 rows and never measures on an injecting electrode") {
    const Protocol p = full_protocol();
    REQUIRE(p.size() == 136);
    for (const auto& r : p.rows) {
        CHECK_FALSE(touches(r, r.inject_pos));
        CHECK_FALSE(touches(r, r.inject_neg));
    }
    const auto rep = validate_protocol(p);
    CHECK(rep.valid());
    CHECK(rep.duplicates.empty());
    // 8 cross-ring injections with 7 opposite pairs each, then 8 x 5 adjacent rows per ring.
    CHECK(p.rows[0] == ProtocolRow{1, 9, 2, 10});
    CHECK(p.rows[55] == ProtocolRow{8, 16, 7, 15});
    CHECK(p.rows[56].inject_pos == 1);
    CHECK(p.rows[56].inject_neg == 2);
    CHECK(p.rows[96].inject_pos == 9);
    CHECK(injection_pairs(p).size() == 24);
    std::set<std::pair<int, int>> meas;
    for (const auto& r : p.rows) meas.insert({r.meas_pos, r.meas_neg});
    CHECK(meas.size() == 24);
}

TEST_CASE("the radial rows are contained in the cross-ring blocks") {
    const Protocol full = full_protocol(), radial = radial_protocol();
    for (int k = 1; k <= 8; ++k) {
        const int n = k % 8 + 1;
        const std::size_t index = std::size_t(7 * (k - 1) + (n - 1) - (n > k ? 1 : 0));
        CHECK(full.rows[index] == radial.rows[std::size_t(k - 1)]);
    }
}

TEST_CASE("validation reports bad rows") {
    Protocol p{"bad", {{1, 9, 1, 10}, {1, 1, 2, 3}, {1, 9, 2, 17}, {1, 9, 2, 10}, {1, 9, 2, 10}}};
    const auto rep = validate_protocol(p);
    CHECK_FALSE(rep.valid());
    std::set<std::size_t> rows;
    for (const auto& i : rep.issues) rows.insert(i.row);
    CHECK(rows == std::set<std::size_t>{0, 1, 2});
    REQUIRE(rep.duplicates.size() == 1);
    CHECK(rep.duplicates[0] == std::pair<std::size_t, std::size_t>{3, 4});
}

TEST_CASE("protocol and frame CSV round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "lumeneit_test_protocol";
    std::filesystem::create_directories(dir);
    write_protocol_csv(full_protocol(), dir / "p.csv");
    const Protocol back = read_protocol_csv(dir / "p.csv", "full");
    CHECK(back.rows == full_protocol().rows);

    Frame f{"radial", {1e-3, -2.5e-4, 3.0e-6, 0.0, 1.0, 2.0, 3.0, 4.0}, kCurrentAmplitude, std::nullopt};
    f.noise = NoiseRecord{60.0, 42, "per_measurement", std::vector<double>(8, 1e-6)};
    write_frame_csv(f, dir / "f.csv");
    const Frame g = read_frame_csv(dir / "f.csv");
    CHECK(g.protocol == "radial");
    CHECK(g.current_amplitude == doctest::Approx(kCurrentAmplitude));
    REQUIRE(g.voltages.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) CHECK(g.voltages[i] == doctest::Approx(f.voltages[i]).epsilon(1e-9));
    REQUIRE(g.noise);
    CHECK(g.noise->seed == 42);
    CHECK_THROWS_AS(read_frame_csv(dir / "nope.csv"), InputError);
    std::filesystem::remove_all(dir);
}
