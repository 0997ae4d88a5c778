#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lumeneit/geometry.hpp"

namespace lumeneit {

/// One injection/measurement quadruple. Electrode indices are 1-based.
struct ProtocolRow {
    int inject_pos = 0;
    int inject_neg = 0;
    int meas_pos = 0;
    int meas_neg = 0;

    friend bool operator==(const ProtocolRow&, const ProtocolRow&) = default;
};

struct Protocol {
    std::string name;
    std::vector<ProtocolRow> rows;

    std::size_t size() const { return rows.size(); }
};

/// Eight rows: row k injects on the axially aligned pair (k, k+8) and measures
/// on the neighbouring aligned pair (k+1, k+9), wrapping around the ring.
Protocol radial_protocol();

/// 136 rows in a frozen order:
///   rows   0..55  cross-ring injection (k, k+8), k = 1..8, measuring every other
///                 opposite pair (j, j+8), j = 1..8, j != k, in ascending j;
///   rows  56..95  ring 1 adjacent injection (k, k+1), k = 1..8, measuring the
///                 adjacent pairs (j, j+1) that share no electrode with it;
///   rows 96..135  the same for ring 2 (electrodes 9..16).
/// Adjacent pairs run counter-clockwise and wrap from 8 to 1 (16 to 9).
Protocol full_protocol();

Protocol protocol_by_name(const std::string& name);

struct ProtocolIssue {
    std::size_t row = 0; // 0-based
    std::string message;
};

struct ProtocolReport {
    std::vector<ProtocolIssue> issues;
    std::vector<std::pair<std::size_t, std::size_t>> duplicates; // (first, repeat), 0-based

    bool valid() const { return issues.empty() && duplicates.empty(); }
};

ProtocolReport validate_protocol(const Protocol& protocol, const CatheterSpec& catheter = {});

/// CSV with header `inject+,inject-,meas+,meas-`, one row per line.
void write_protocol_csv(const Protocol& protocol, const std::filesystem::path& path);
Protocol read_protocol_csv(const std::filesystem::path& path, std::string name = "custom");

struct NoiseRecord {
    double snr_db = 0.0;
    std::uint64_t seed = 0;
    std::string reference;
    std::vector<double> sigma; // per-measurement standard deviation, V
};

/// One vector of transfer voltages for a protocol.
struct Frame {
    std::string protocol;
    std::vector<double> voltages; // V, one per protocol row
    double current_amplitude = 0.0; // A
    std::optional<NoiseRecord> noise;

    std::size_t size() const { return voltages.size(); }
};

/// CSV: comment header lines `# protocol <name>`, `# current_amplitude <A>`,
/// optional `# noise <snr_db> <seed> <reference>`, then `row,voltage`.
void write_frame_csv(const Frame& frame, const std::filesystem::path& path);
Frame read_frame_csv(const std::filesystem::path& path);

} // namespace lumeneit
