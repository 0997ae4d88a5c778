#include "lumeneit/protocol.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "lumeneit/error.hpp"

namespace lumeneit {

namespace {

constexpr int kRing = 8;

int ring_next(int k) { return k % kRing + 1; } // 1..8 -> next in 1..8

bool shares_electrode(const ProtocolRow& r) {
    return r.meas_pos == r.inject_pos || r.meas_pos == r.inject_neg || r.meas_neg == r.inject_pos
           || r.meas_neg == r.inject_neg;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

Protocol radial_protocol() {
    Protocol p{"radial", {}};
    for (int k = 1; k <= kRing; ++k) {
        const int n = ring_next(k);
        p.rows.push_back({k, k + kRing, n, n + kRing});
    }
    return p;
}

Protocol full_protocol() {
    Protocol p{"full", {}};
    for (int k = 1; k <= kRing; ++k) {
        for (int j = 1; j <= kRing; ++j) {
            if (j == k) continue;
            p.rows.push_back({k, k + kRing, j, j + kRing});
        }
    }
    for (int offset : {0, kRing}) {
        for (int k = 1; k <= kRing; ++k) {
            for (int j = 1; j <= kRing; ++j) {
                const ProtocolRow row{k + offset, ring_next(k) + offset, j + offset, ring_next(j) + offset};
                if (!shares_electrode(row)) p.rows.push_back(row);
            }
        }
    }
    return p;
}

Protocol protocol_by_name(const std::string& name) {
    if (name == "radial") return radial_protocol();
    if (name == "full") return full_protocol();
    throw InputError("unknown protocol '" + name + "'");
}

ProtocolReport validate_protocol(const Protocol& protocol, const CatheterSpec& catheter) {
    ProtocolReport rep;
    const int n = catheter.electrode_count();
    std::map<std::array<int, 4>, std::size_t> seen;
    for (std::size_t i = 0; i < protocol.rows.size(); ++i) {
        const auto& r = protocol.rows[i];
        for (int v : {r.inject_pos, r.inject_neg, r.meas_pos, r.meas_neg}) {
            if (v < 1 || v > n) {
                rep.issues.push_back({i, "electrode index " + std::to_string(v) + " out of range [1, "
                                             + std::to_string(n) + "]"});
                break;
            }
        }
        if (r.inject_pos == r.inject_neg) rep.issues.push_back({i, "injection pair uses one electrode twice"});
        if (r.meas_pos == r.meas_neg) rep.issues.push_back({i, "measurement pair uses one electrode twice"});
        if (shares_electrode(r)) rep.issues.push_back({i, "measures on an injecting electrode"});
        const std::array<int, 4> key{r.inject_pos, r.inject_neg, r.meas_pos, r.meas_neg};
        const auto [it, inserted] = seen.emplace(key, i);
        if (!inserted) rep.duplicates.emplace_back(it->second, i);
    }
    return rep;
}

void write_protocol_csv(const Protocol& protocol, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw InputError("cannot open '" + path.string() + "' for writing");
    os << "inject+,inject-,meas+,meas-\n";
    for (const auto& r : protocol.rows)
        os << r.inject_pos << ',' << r.inject_neg << ',' << r.meas_pos << ',' << r.meas_neg << '\n';
}

Protocol read_protocol_csv(const std::filesystem::path& path, std::string name) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(is, line) || trim(line) != "inject+,inject-,meas+,meas-")
        throw InputError("protocol CSV: missing header 'inject+,inject-,meas+,meas-'");
    Protocol p{std::move(name), {}};
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::istringstream ls(line);
        ProtocolRow r;
        char c1 = 0, c2 = 0, c3 = 0;
        if (!(ls >> r.inject_pos >> c1 >> r.inject_neg >> c2 >> r.meas_pos >> c3 >> r.meas_neg) || c1 != ','
            || c2 != ',' || c3 != ',')
            throw InputError("protocol CSV: malformed line " + std::to_string(lineno));
        p.rows.push_back(r);
    }
    return p;
}

void write_frame_csv(const Frame& frame, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw InputError("cannot open '" + path.string() + "' for writing");
    os << std::setprecision(12);
    os << "# protocol " << frame.protocol << '\n';
    os << "# current_amplitude " << frame.current_amplitude << '\n';
    if (frame.noise)
        os << "# noise " << frame.noise->snr_db << ' ' << frame.noise->seed << ' ' << frame.noise->reference << '\n';
    os << "row,voltage\n";
    for (std::size_t i = 0; i < frame.voltages.size(); ++i) os << i + 1 << ',' << frame.voltages[i] << '\n';
    if (!os) throw InputError("failed writing '" + path.string() + "'");
}

Frame read_frame_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot open '" + path.string() + "'");
    Frame f;
    std::string line;
    bool header = false;
    while (std::getline(is, line)) {
        line = trim(line);
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ls(line.substr(1));
            std::string key;
            ls >> key;
            if (key == "protocol") ls >> f.protocol;
            else if (key == "current_amplitude") ls >> f.current_amplitude;
            else if (key == "noise") {
                NoiseRecord n;
                ls >> n.snr_db >> n.seed >> n.reference;
                f.noise = n;
            }
            continue;
        }
        if (!header) {
            if (line != "row,voltage") throw InputError("frame CSV: missing header 'row,voltage'");
            header = true;
            continue;
        }
        std::istringstream ls(line);
        std::size_t row = 0;
        char comma = 0;
        double v = 0.0;
        if (!(ls >> row >> comma >> v) || comma != ',' || row != f.voltages.size() + 1)
            throw InputError("frame CSV: malformed row in '" + path.string() + "'");
        f.voltages.push_back(v);
    }
    if (!header) throw InputError("frame CSV: no data in '" + path.string() + "'");
    return f;
}

} // namespace lumeneit
