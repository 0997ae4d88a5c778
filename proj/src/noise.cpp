#include "lumeneit/noise.hpp"

#include <algorithm>
#include <cmath>

#include "lumeneit/error.hpp"

namespace lumeneit {

std::string to_string(NoiseReference r) {
    switch (r) {
    case NoiseReference::per_measurement: return "per_measurement";
    case NoiseReference::frame_rms: return "frame_rms";
    case NoiseReference::frame_max: return "frame_max";
    }
    return "per_measurement";
}

NoiseReference noise_reference_from_string(const std::string& s) {
    if (s == "per_measurement" || s == "per-measurement") return NoiseReference::per_measurement;
    if (s == "frame_rms" || s == "frame-rms") return NoiseReference::frame_rms;
    if (s == "frame_max" || s == "frame-max") return NoiseReference::frame_max;
    throw InputError("unknown noise reference '" + s + "'");
}

void NoiseModel::validate() const {
    if (!(snr_db > 0.0)) throw ParameterError("noise: snr_db must be positive");
}

double NoiseModel::relative_amplitude() const { return std::pow(10.0, -snr_db / 20.0); }

std::vector<double> noise_sigma(const Frame& frame, const NoiseModel& model) {
    model.validate();
    if (frame.voltages.empty()) throw InputError("noise: empty frame");
    const double a = model.relative_amplitude();
    const auto& v = frame.voltages;
    std::vector<double> out(v.size());
    switch (model.reference) {
    case NoiseReference::per_measurement:
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = a * std::abs(v[i]);
        break;
    case NoiseReference::frame_rms: {
        double ss = 0.0;
        for (double x : v) ss += x * x;
        std::fill(out.begin(), out.end(), a * std::sqrt(ss / v.size()));
        break;
    }
    case NoiseReference::frame_max: {
        double m = 0.0;
        for (double x : v) m = std::max(m, std::abs(x));
        std::fill(out.begin(), out.end(), a * m);
        break;
    }
    }
    return out;
}

std::mt19937_64 case_rng(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

Frame add_noise(const Frame& frame, const NoiseModel& model, std::mt19937_64& rng) {
    const std::vector<double> sigma = noise_sigma(frame, model);
    Frame out = frame;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < out.voltages.size(); ++i) out.voltages[i] += sigma[i] * normal(rng);
    out.noise = NoiseRecord{model.snr_db, model.seed, to_string(model.reference), sigma};
    return out;
}

Frame add_noise(const Frame& frame, const NoiseModel& model) {
    auto rng = case_rng(model.seed, 0);
    return add_noise(frame, model, rng);
}

std::vector<double> detection_thresholds(const Frame& frame, const NoiseModel& model) {
    std::vector<double> s = noise_sigma(frame, model);
    for (double& x : s) x *= kDetectionFactor;
    return s;
}

double detection_threshold(const Frame& frame, const NoiseModel& model) {
    const std::vector<double> s = detection_thresholds(frame, model);
    return *std::max_element(s.begin(), s.end());
}

double monte_carlo_detection_rate(const Frame& signal, const Frame& reference, std::size_t row,
                                  const NoiseModel& model, int trials) {
    if (signal.size() != reference.size() || row >= signal.size())
        throw InputError("detection rate: frame size mismatch");
    if (trials <= 0) throw ParameterError("detection rate: trials must be positive");
    const double limit = detection_threshold(reference, model);
    auto rng = case_rng(model.seed, row);
    int hits = 0;
    for (int t = 0; t < trials; ++t) {
        const Frame a = add_noise(signal, model, rng);
        const Frame b = add_noise(reference, model, rng);
        if (std::abs(a.voltages[row] - b.voltages[row]) > limit) ++hits;
    }
    return static_cast<double>(hits) / trials;
}

} // namespace lumeneit
