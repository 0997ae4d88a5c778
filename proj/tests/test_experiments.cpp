#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lumeneit/error.hpp"
#include "lumeneit/experiments.hpp"

using namespace lumeneit;
namespace fs = std::filesystem;

namespace {

Frame frame_of(std::vector<double> v, std::string protocol = "radial") {
    Frame f;
    f.protocol = std::move(protocol);
    f.voltages = std::move(v);
    f.current_amplitude = kCurrentAmplitude;
    return f;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("lumeneit_test_" + name);
    fs::remove_all(p);
    return p;
}

} // namespace

TEST_CASE("calibration subtracts the free-space baseline") {
    CalibrationSet set;
    set.baseline = {frame_of({1.0, 2.0, 3.0}), frame_of({0.5, 0.5, 0.5})};
    set.measured = {frame_of({1.5, 2.0, 2.0}), frame_of({0.5, 0.5, 0.5})};
    const auto out = calibrate(set);
    REQUIRE(out.size() == 2);
    CHECK(out[0].voltages == std::vector<double>{0.5, 0.0, -1.0});
    for (double v : out[1].voltages) CHECK(v == 0.0);

    set.measured.pop_back();
    CHECK_THROWS_AS(calibrate(set), InputError);
    set.measured.push_back(frame_of({0.5, 0.5, 0.5}, "full"));
    CHECK_THROWS_AS(calibrate(set), InputError);
}

TEST_CASE("coefficient of variation and deviation") {
    const auto cv = coefficient_of_variation({frame_of({2.0, 2.0, 2.0}), frame_of({1.0, 3.0}), frame_of({-1.0, 1.0})});
    CHECK(cv[0] == 0.0);
    CHECK(cv[1] == doctest::Approx(0.5));
    CHECK(std::isnan(cv[2]));
    CHECK_THROWS_AS(coefficient_of_variation({frame_of({1.0})}), InputError);

    const auto dev = deviation_from_expected({frame_of({2.0, 4.0}), frame_of({1.1, 0.9})},
                                             {frame_of({2.0, 4.0}), frame_of({1.0, 1.0})});
    CHECK(dev[0] == 0.0);
    CHECK(dev[1] == doctest::Approx(0.1));
    CHECK_THROWS_AS(deviation_from_expected({frame_of({1.0})}, {}), InputError);
}

TEST_CASE("free radius runs linearly between its endpoints") {
    CHECK(free_radius(0, 10, 4.5, 12.5) == 4.5);
    CHECK(free_radius(9, 10, 4.5, 12.5) == doctest::Approx(12.5));
    CHECK(free_radius(3, 7, 0.0, 6.0) == doctest::Approx(3.0));
    CHECK_THROWS_AS(free_radius(10, 10, 4.5, 12.5), ParameterError);
    CHECK_THROWS_AS(free_radius(0, 1, 4.5, 12.5), ParameterError);
}

TEST_CASE("peak shift and width") {
    const std::vector<double> a{0, 1, 4, 9, 4, 1, 0, 0};
    std::vector<double> b(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) b[(i + 2) % a.size()] = a[i];
    CHECK(peak_shift(a, b) == 2);
    CHECK(peak_shift(b, a) == -2);
    CHECK(peak_shift(a, a) == 0);
    for (std::size_t i = 0; i < a.size(); ++i) b[(i + 4) % a.size()] = a[i];
    CHECK(peak_shift(a, b) == 4);
    CHECK_THROWS_AS(peak_shift(a, {1.0}), InputError);

    CHECK(peak_width(a) == 1); // only 9 is above 4.5
    CHECK(peak_width({0, 5, 6, 5, 0, 0}) == 3);
    CHECK(peak_width({3, 0, 0, 0, 3, 3}) == 3); // wraps around
    CHECK(peak_width({2, 2, 2, 2}) == 4);
    // A common offset does not change the width.
    CHECK(peak_width({100, 105, 106, 105, 100, 100}) == 3);
}

TEST_CASE("config text round trip") {
    ExperimentConfig c;
    c.scenario = Scenario::dilation;
    c.seed = 17;
    c.aspect_ratios = {0.8, 0.6};
    c.diff_lambda = 0.02;
    c.spacing.spacings = {5, 12.5};
    c.detect.diameters = {12, 13};
    const std::string text = serialize_config(c);
    const ExperimentConfig back = parse_config(text);
    CHECK(serialize_config(back) == text);
    CHECK(back.scenario == Scenario::dilation);
    CHECK(back.seed == 17);
    CHECK(back.noise.seed == 17);
    CHECK(back.spacing.spacings == std::vector<double>{5, 12.5});
    CHECK(config_hash(back) == config_hash(c));
    c.seed = 18;
    CHECK(config_hash(c) != config_hash(back));

    const ExperimentConfig minimal = parse_config("lumeneit-config 1\n# comment\nscenario = lesion\n");
    CHECK(minimal.scenario == Scenario::lesion);
    CHECK(minimal.lumen_diameter_or_default() == 26.0);

    CHECK_THROWS_AS(parse_config("scenario = lesion\n"), ParameterError);
    CHECK_THROWS_AS(parse_config("lumeneit-config 2\n"), ParameterError);
    CHECK_THROWS_AS(parse_config("lumeneit-config 1\nno_such_key = 1\n"), ParameterError);
    CHECK_THROWS_AS(parse_config("lumeneit-config 1\nseed = 1\nseed = 2\n"), ParameterError);
    CHECK_THROWS_AS(parse_config("lumeneit-config 1\nseed = abc\n"), ParameterError);
    CHECK_THROWS_AS(parse_config("lumeneit-config 1\ncsa_factor = -1\n"), ParameterError);
    CHECK_THROWS_AS(parse_config("lumeneit-config 1\nscenario = none\n"), ParameterError);
}

TEST_CASE("manifest round trip") {
    Manifest m;
    m.scenario = "lesion";
    m.config_hash = 0xdeadbeefcafe1234ULL;
    m.seed = 9;
    m.complete = false;
    m.failed_stage = "forward";
    m.artifacts = {{"csv", "a/b.csv"}, {"frame", "frames/f 1.csv"}};
    const fs::path dir = scratch("manifest");
    fs::create_directories(dir);
    m.write(dir / "manifest.txt");
    const Manifest r = Manifest::read(dir / "manifest.txt");
    CHECK(r.scenario == m.scenario);
    CHECK(r.config_hash == m.config_hash);
    CHECK(r.seed == 9);
    CHECK_FALSE(r.complete);
    CHECK(r.failed_stage == "forward");
    REQUIRE(r.artifacts.size() == 2);
    CHECK(r.artifacts[1].path == fs::path("frames/f 1.csv"));
    std::ofstream(dir / "bad.txt") << "hello\n";
    CHECK_THROWS_AS(Manifest::read(dir / "bad.txt"), InputError);
    fs::remove_all(dir);
}

TEST_CASE("a small spacing sweep writes every artifact listed in its manifest") {
    ExperimentConfig c;
    c.scenario = Scenario::spacing_sweep;
    c.output_dir = scratch("spacing");
    c.spacing.spacings = {10.0};
    c.target_size = 5.0;
    const Manifest m = run_experiment(c);
    CHECK(m.complete);
    CHECK(m.config_hash == config_hash(c));
    REQUIRE_FALSE(m.artifacts.empty());
    for (const auto& a : m.artifacts) CHECK(fs::exists(c.output_dir / a.path));
    const Manifest disk = Manifest::read(c.output_dir / "manifest.txt");
    CHECK(disk.artifacts.size() == m.artifacts.size());
    fs::remove_all(c.output_dir);
}

TEST_CASE("a failing stage leaves a partial manifest") {
    ExperimentConfig c;
    c.scenario = Scenario::lesion;
    c.output_dir = scratch("failing");
    c.lumen_diameter = 2.0; // smaller than the shaft
    c.target_size = 5.0;
    try {
        run_experiment(c);
        FAIL("expected a stage error");
    } catch (const StageError& e) {
        CHECK(e.stage() != "setup");
        CHECK_FALSE(e.partial_manifest().complete);
        const Manifest disk = Manifest::read(c.output_dir / "manifest.txt");
        CHECK_FALSE(disk.complete);
        CHECK(disk.failed_stage == e.stage());
    }
    fs::remove_all(c.output_dir);
}
