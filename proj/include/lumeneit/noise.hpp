#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lumeneit/protocol.hpp"

namespace lumeneit {

enum class NoiseReference { per_measurement, frame_rms, frame_max };

std::string to_string(NoiseReference r);
NoiseReference noise_reference_from_string(const std::string& s);

/// Additive Gaussian noise at an amplitude SNR.
struct NoiseModel {
    double snr_db = 60.0;
    std::uint64_t seed = 0;
    NoiseReference reference = NoiseReference::per_measurement;

    void validate() const;
    double relative_amplitude() const; // 10^(-snr/20)
};

/// Noise standard deviation per measurement under the model's reference convention.
std::vector<double> noise_sigma(const Frame& frame, const NoiseModel& model);

/// Random stream for one job of a sweep: depends only on (seed, index).
std::mt19937_64 case_rng(std::uint64_t seed, std::uint64_t index);

Frame add_noise(const Frame& frame, const NoiseModel& model);
/// Same, drawing from a caller-owned stream (used by sweeps).
Frame add_noise(const Frame& frame, const NoiseModel& model, std::mt19937_64& rng);

inline constexpr double kDetectionFactor = 10.0;

/// 10 x the noise standard deviation. With the per-measurement reference the
/// largest per-measurement value is returned.
double detection_threshold(const Frame& frame, const NoiseModel& model);
std::vector<double> detection_thresholds(const Frame& frame, const NoiseModel& model);

/// Fraction of `trials` noisy draws of both frames whose measurement `row`
/// difference still exceeds the detection threshold of `reference`.
double monte_carlo_detection_rate(const Frame& signal, const Frame& reference, std::size_t row,
                                  const NoiseModel& model, int trials);

} // namespace lumeneit
