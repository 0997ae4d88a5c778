#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "lumeneit/fem.hpp"
#include "lumeneit/noise.hpp"

namespace lumeneit {

// ---------------------------------------------------------------- ring spacing

struct SpacingSweepOptions {
    std::vector<double> spacings{5, 10, 15, 20, 25, 30, 35, 40}; // mm
    // Rotated so that the four sector measurements sit at distinct angles
    // between the major and minor axes.
    LumenProfile phantom = LumenProfile::ellipse(26.0, 0.75, 11.25);
    CatheterSpec catheter;       // ring_spacing and shaft_length are set per case
    double extra_length = 30.0;  // shaft_length = l + extra_length
    double target_size = 2.5;
    ElectrodePair cd_injection{0, 8};
    std::vector<int> sector_rows{1, 2, 3, 4}; // radial protocol rows, 1-based
    SliceOptions slice;
    ForwardOptions forward;
};

struct SpacingCase {
    double spacing = 0.0;
    std::size_t elements = 0;
    SliceMetrics metrics;
    std::string error; // empty on success
};

struct SpacingSweepResult {
    std::vector<SpacingCase> cases;
};

SpacingSweepResult sweep_spacing(const SpacingSweepOptions& options);
void write_spacing_csv(const SpacingSweepResult& result, const std::filesystem::path& path);

// ---------------------------------------------------------------- detectability

std::vector<double> grid(double first, double last, double step);

struct DetectabilityOptions {
    std::vector<double> diameters = grid(12.0, 30.0, 1.0);
    std::vector<double> aspect_ratios = grid(0.5, 1.0, 0.05);
    NoiseModel noise;
    CatheterSpec catheter;
    double target_size = 2.5;
    // Major axis on the centre of radial row 1, minor axis on row 3.
    double ellipse_rotation = 22.5; // deg
    int major_row = 1;
    int minor_row = 3;
    int monte_carlo_trials = 0; // > 0 adds a noisy detection-rate cross-check
    ForwardOptions forward;
};

struct DetectabilityCase {
    double diameter = 0.0;
    double aspect_ratio = 1.0;
    std::vector<double> voltages; // radial protocol, V
    double dv_ellip = 0.0;        // V(minor row) - V(major row)
    double dv_limit = 0.0;
    bool detectable = false;
    double detection_rate = -1.0; // -1 when the Monte-Carlo mode is off
    std::string error;
};

struct DetectabilityResult {
    std::vector<double> diameters;
    std::vector<double> dv_diam;       // mean |V(D+1) - V(D)| over the radial rows
    std::vector<double> dv_diam_limit; // dv_limit of the D frame
    std::vector<double> f_max;         // NaN when no aspect ratio below 1 is detectable
    std::array<double, 3> fit_coeffs{}; // f_max ~ c0 + c1 D + c2 D^2
    double size_limit = 0.0;           // largest D with dv_diam > dv_limit (0 if none)
    std::vector<DetectabilityCase> cases;

    const DetectabilityCase* find(double diameter, double aspect_ratio) const;
    double f_max_at(double diameter) const;
};

DetectabilityResult sweep_detectability(const DetectabilityOptions& options);

/// One row per case: D, f, dv, dv_limit, detectable, detection_rate, error.
void write_detectability_cases_csv(const DetectabilityResult& result, const std::filesystem::path& path);
/// One row per diameter plus the fit and size limit as comments.
void write_detectability_summary_csv(const DetectabilityResult& result, const std::filesystem::path& path);

} // namespace lumeneit
