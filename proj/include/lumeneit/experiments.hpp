#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "lumeneit/inverse.hpp"
#include "lumeneit/noise.hpp"
#include "lumeneit/sweeps.hpp"

namespace lumeneit {

enum class Scenario { ellipticity, lesion, dilation, spacing_sweep, detectability_sweep };
std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

inline constexpr int kConfigVersion = 1;

struct ExperimentConfig {
    Scenario scenario = Scenario::ellipticity;
    std::filesystem::path output_dir = "results";
    std::uint64_t seed = 0;
    std::string protocol = "radial"; // frames used for calibration and CV
    NoiseModel noise;
    CatheterSpec catheter;      // shaft_length is taken from `shaft_length` below
    double shaft_length = 0.0;  // <= 0: ring_spacing + 30 mm
    double target_size = 2.5;

    double lumen_diameter = 0.0; // <= 0: scenario default (25, 26, 24 mm)

    // ellipticity
    std::vector<double> aspect_ratios{0.75, 0.5};
    std::vector<double> rotations{0.0, 90.0};
    int inflation_steps = 10;
    double free_radius_start = 4.5;   // mm
    double inflation_overshoot = 1.0; // final free radius / largest wall radius
    double recon_aspect_ratio = 0.5;

    // lesion
    double crescent_depth = 6.0;
    double crescent_extent = 120.0;
    double crescent_center = 90.0;

    // dilation
    double indent_depth = 4.0;
    double indent_speed = 1.0; // mm/s
    double frame_rate = 1.5;   // Hz
    double indent_center = 0.0;
    double indent_arc_halfwidth = 8.0;
    double indent_axial_halfwidth = 8.0;

    // inverse
    double recon_diameter = 30.0;
    double abs_lambda = 0.01;
    int abs_iterations = 4;
    double noser_exponent = 0.5;
    double diff_lambda = -1.0; // < 0: cross validation
    int cv_folds = 8;
    bool cv_one_standard_error = true;
    double csa_factor = 3.0;
    std::string csa_reference = "shaft_surface"; // shaft_surface | electrode_faces
    std::string ptd_reference = "phantom"; // phantom | recon

    SpacingSweepOptions spacing;
    DetectabilityOptions detect;

    double lumen_diameter_or_default() const;
    CatheterSpec effective_catheter() const;
    void validate() const;
};

/// Flat key = value text with a `lumeneit-config <version>` header line.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical text form: every key, fixed order. parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& config);
/// FNV-1a 64 of the canonical text.
std::uint64_t config_hash(const ExperimentConfig& config);

struct Artifact {
    std::string kind; // csv | vtk | frame
    std::filesystem::path path; // relative to the manifest directory
};

struct Manifest {
    std::string scenario;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    bool complete = false;
    std::string failed_stage;
    std::vector<Artifact> artifacts;

    void write(const std::filesystem::path& path) const;
    static Manifest read(const std::filesystem::path& path);
};

class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what, Manifest partial)
        : std::runtime_error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)),
          partial_(std::move(partial)) {}
    const std::string& stage() const { return stage_; }
    const Manifest& partial_manifest() const { return partial_; }

private:
    std::string stage_;
    Manifest partial_;
};

/// Runs one scenario, writes every artifact plus `manifest.txt` into the
/// output directory, and returns the manifest.
Manifest run_experiment(const ExperimentConfig& config);

// ---------------------------------------------------------------- calibration

struct CalibrationSet {
    std::vector<Frame> baseline; // free-space frames, one per inflation step
    std::vector<Frame> measured;
};

/// calibrated = measured - baseline per step and measurement.
std::vector<Frame> calibrate(const CalibrationSet& set);

/// std / |mean| of each frame's measurements (population std). A zero mean
/// yields NaN, the undefined sentinel.
std::vector<double> coefficient_of_variation(const std::vector<Frame>& frames);
/// std of (value - expected) / expected per frame.
std::vector<double> deviation_from_expected(const std::vector<Frame>& frames, const std::vector<Frame>& expected);

/// Free balloon radius at step `step` (0-based) of `steps`.
double free_radius(int step, int steps, double start, double end);

/// Circular shift s that best aligns b with a, i.e. b[i] ~ a[i - s]; in (-n/2, n/2].
int peak_shift(const std::vector<double>& a, const std::vector<double>& b);
/// Length of the contiguous (circular) run around the maximum whose values stay
/// above half the peak prominence, min + (max - min) / 2. A flat vector gives n.
int peak_width(const std::vector<double>& values);

} // namespace lumeneit
