#include "lumeneit/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "lumeneit/csv.hpp"
#include "lumeneit/error.hpp"

namespace lumeneit {

namespace fs = std::filesystem;

std::string to_string(Scenario s) {
    switch (s) {
    case Scenario::ellipticity: return "ellipticity";
    case Scenario::lesion: return "lesion";
    case Scenario::dilation: return "dilation";
    case Scenario::spacing_sweep: return "spacing_sweep";
    case Scenario::detectability_sweep: return "detectability_sweep";
    }
    return "?";
}

Scenario scenario_from_string(const std::string& s) {
    for (auto sc : {Scenario::ellipticity, Scenario::lesion, Scenario::dilation, Scenario::spacing_sweep,
                    Scenario::detectability_sweep})
        if (to_string(sc) == s) return sc;
    throw ParameterError("unknown scenario '" + s + "'");
}

double ExperimentConfig::lumen_diameter_or_default() const {
    if (lumen_diameter > 0.0) return lumen_diameter;
    switch (scenario) {
    case Scenario::lesion: return 26.0;
    case Scenario::dilation: return 24.0;
    default: return 25.0;
    }
}

CatheterSpec ExperimentConfig::effective_catheter() const {
    CatheterSpec c = catheter;
    c.shaft_length = shaft_length > 0.0 ? shaft_length : CatheterSpec::default_shaft_length(c.ring_spacing);
    return c;
}

void ExperimentConfig::validate() const {
    effective_catheter().validate();
    noise.validate();
    protocol_by_name(protocol);
    if (!(target_size > 0.0)) throw ParameterError("config: target_size must be positive");
    if (aspect_ratios.empty() || rotations.empty()) throw ParameterError("config: aspect_ratios and rotations are required");
    for (double f : aspect_ratios)
        if (!(f > 0.0 && f <= 1.0)) throw ParameterError("config: aspect ratios must lie in (0, 1]");
    if (!(recon_aspect_ratio > 0.0 && recon_aspect_ratio <= 1.0))
        throw ParameterError("config: recon_aspect_ratio must lie in (0, 1]");
    if (inflation_steps < 2) throw ParameterError("config: inflation_steps must be at least 2");
    if (!(free_radius_start > catheter.shaft_radius())) throw ParameterError("config: free_radius_start inside the shaft");
    if (!(inflation_overshoot >= 1.0)) throw ParameterError("config: inflation_overshoot must be >= 1");
    if (!(indent_speed > 0.0) || !(frame_rate > 0.0) || indent_depth < 0.0)
        throw ParameterError("config: indent depth, speed and frame rate must be positive");
    if (!(recon_diameter > catheter.shaft_diameter)) throw ParameterError("config: recon_diameter too small");
    if (abs_lambda < 0.0 || abs_iterations < 1) throw ParameterError("config: invalid absolute solver settings");
    if (cv_folds < 2) throw ParameterError("config: cv_folds must be at least 2");
    if (!(csa_factor > 0.0)) throw ParameterError("config: csa_factor must be positive");
    if (csa_reference != "shaft_surface" && csa_reference != "electrode_faces")
        throw ParameterError("config: csa_reference must be shaft_surface or electrode_faces");
    if (ptd_reference != "phantom" && ptd_reference != "recon")
        throw ParameterError("config: ptd_reference must be phantom or recon");
    if (spacing.spacings.empty() || detect.diameters.empty() || detect.aspect_ratios.empty())
        throw ParameterError("config: sweep grids must not be empty");
}

// ---------------------------------------------------------------- config text

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used == v.size() && std::isfinite(x)) return x;
    } catch (const std::exception&) {
    }
    throw ParameterError("config: '" + key + "' expects a number, got '" + v + "'");
}

long long to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw ParameterError("config: '" + key + "' expects an integer, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ParameterError("config: '" + key + "' expects true or false, got '" + v + "'");
}

// Comma list, or first:last:step.
std::vector<double> to_list(const std::string& key, const std::string& v) {
    if (v.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream ss(v);
        for (std::string p; std::getline(ss, p, ':');) parts.push_back(trim(p));
        if (parts.size() != 3) throw ParameterError("config: '" + key + "' range must be first:last:step");
        const double step = to_double(key, parts[2]);
        if (!(step > 0.0)) throw ParameterError("config: '" + key + "' range step must be positive");
        return grid(to_double(key, parts[0]), to_double(key, parts[1]), step);
    }
    std::vector<double> out;
    std::stringstream ss(v);
    for (std::string p; std::getline(ss, p, ',');) out.push_back(to_double(key, trim(p)));
    if (out.empty()) throw ParameterError("config: '" + key + "' must not be empty");
    return out;
}

std::string from_list(const std::vector<double>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + format_number(xs[i]);
    return s;
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    for (double x : to_list(key, v)) {
        if (x != std::round(x)) throw ParameterError("config: '" + key + "' expects integers");
        out.push_back(static_cast<int>(x));
    }
    return out;
}

std::string from_int_list(const std::vector<int>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
    return s;
}

struct Field {
    const char* key;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

#define LE_DOUBLE(name, member)                                                                            \
    Field {                                                                                                \
        name, [](const ExperimentConfig& c) { return format_number(c.member); },                           \
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = to_double(k, v); } \
    }
#define LE_INT(name, member)                                                                               \
    Field {                                                                                                \
        name, [](const ExperimentConfig& c) { return std::to_string(c.member); },                          \
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {                           \
                c.member = static_cast<decltype(c.member)>(to_int(k, v));                                   \
            }                                                                                              \
    }
#define LE_BOOL(name, member)                                                                              \
    Field {                                                                                                \
        name, [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); },          \
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = to_bool(k, v); } \
    }
#define LE_LIST(name, member)                                                                              \
    Field {                                                                                                \
        name, [](const ExperimentConfig& c) { return from_list(c.member); },                               \
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = to_list(k, v); } \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        {"scenario", [](const ExperimentConfig& c) { return to_string(c.scenario); },
         [](ExperimentConfig& c, const std::string&, const std::string& v) { c.scenario = scenario_from_string(v); }},
        {"output_dir", [](const ExperimentConfig& c) { return c.output_dir.generic_string(); },
         [](ExperimentConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
        {"seed", [](const ExperimentConfig& c) { return std::to_string(c.seed); },
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             try {
                 std::size_t used = 0;
                 if (!v.empty() && v[0] != '-') {
                     c.seed = std::stoull(v, &used);
                     if (used == v.size()) return;
                 }
             } catch (const std::exception&) {
             }
             throw ParameterError("config: '" + k + "' expects a non-negative integer");
         }},
        {"protocol", [](const ExperimentConfig& c) { return c.protocol; },
         [](ExperimentConfig& c, const std::string&, const std::string& v) { c.protocol = v; }},
        LE_DOUBLE("snr_db", noise.snr_db),
        {"noise_reference", [](const ExperimentConfig& c) { return to_string(c.noise.reference); },
         [](ExperimentConfig& c, const std::string&, const std::string& v) {
             c.noise.reference = noise_reference_from_string(v);
         }},
        LE_DOUBLE("shaft_diameter", catheter.shaft_diameter),
        LE_DOUBLE("ring_spacing", catheter.ring_spacing),
        LE_DOUBLE("electrode_width", catheter.electrode_width),
        LE_DOUBLE("electrode_height", catheter.electrode_height),
        LE_DOUBLE("shaft_length", shaft_length),
        LE_DOUBLE("target_size", target_size),
        LE_DOUBLE("lumen_diameter", lumen_diameter),
        LE_LIST("aspect_ratios", aspect_ratios),
        LE_LIST("rotations", rotations),
        LE_INT("inflation_steps", inflation_steps),
        LE_DOUBLE("free_radius_start", free_radius_start),
        LE_DOUBLE("inflation_overshoot", inflation_overshoot),
        LE_DOUBLE("recon_aspect_ratio", recon_aspect_ratio),
        LE_DOUBLE("crescent_depth", crescent_depth),
        LE_DOUBLE("crescent_extent", crescent_extent),
        LE_DOUBLE("crescent_center", crescent_center),
        LE_DOUBLE("indent_depth", indent_depth),
        LE_DOUBLE("indent_speed", indent_speed),
        LE_DOUBLE("frame_rate", frame_rate),
        LE_DOUBLE("indent_center", indent_center),
        LE_DOUBLE("indent_arc_halfwidth", indent_arc_halfwidth),
        LE_DOUBLE("indent_axial_halfwidth", indent_axial_halfwidth),
        LE_DOUBLE("recon_diameter", recon_diameter),
        LE_DOUBLE("abs_lambda", abs_lambda),
        LE_INT("abs_iterations", abs_iterations),
        LE_DOUBLE("noser_exponent", noser_exponent),
        LE_DOUBLE("diff_lambda", diff_lambda),
        LE_INT("cv_folds", cv_folds),
        LE_BOOL("cv_one_standard_error", cv_one_standard_error),
        LE_DOUBLE("csa_factor", csa_factor),
        {"csa_reference", [](const ExperimentConfig& c) { return c.csa_reference; },
         [](ExperimentConfig& c, const std::string&, const std::string& v) { c.csa_reference = v; }},
        {"ptd_reference", [](const ExperimentConfig& c) { return c.ptd_reference; },
         [](ExperimentConfig& c, const std::string&, const std::string& v) { c.ptd_reference = v; }},
        LE_LIST("spacing.values", spacing.spacings),
        LE_DOUBLE("spacing.diameter", spacing.phantom.major_diameter),
        LE_DOUBLE("spacing.aspect_ratio", spacing.phantom.aspect_ratio),
        LE_DOUBLE("spacing.rotation", spacing.phantom.rotation),
        LE_DOUBLE("spacing.extra_length", spacing.extra_length),
        {"spacing.cd_injection",
         [](const ExperimentConfig& c) {
             return from_int_list({c.spacing.cd_injection.positive + 1, c.spacing.cd_injection.negative + 1});
         },
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             const auto xs = to_int_list(k, v);
             if (xs.size() != 2) throw ParameterError("config: '" + k + "' expects two electrodes");
             c.spacing.cd_injection = {xs[0] - 1, xs[1] - 1};
         }},
        {"spacing.sector_rows", [](const ExperimentConfig& c) { return from_int_list(c.spacing.sector_rows); },
         [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.spacing.sector_rows = to_int_list(k, v); }},
        LE_DOUBLE("spacing.outer_fraction", spacing.slice.outer_fraction),
        LE_DOUBLE("spacing.threshold_fraction", spacing.slice.threshold_fraction),
        LE_DOUBLE("spacing.coverage", spacing.slice.coverage),
        LE_BOOL("spacing.global_maximum", spacing.slice.global_maximum),
        LE_BOOL("spacing.per_unit_volume", spacing.slice.per_unit_volume),
        LE_LIST("detect.diameters", detect.diameters),
        LE_LIST("detect.aspect_ratios", detect.aspect_ratios),
        LE_DOUBLE("detect.rotation", detect.ellipse_rotation),
        LE_INT("detect.major_row", detect.major_row),
        LE_INT("detect.minor_row", detect.minor_row),
        LE_INT("detect.monte_carlo_trials", detect.monte_carlo_trials),
    };
    return table;
}

#undef LE_DOUBLE
#undef LE_INT
#undef LE_BOOL
#undef LE_LIST

} // namespace

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream is(text);
    std::string line;
    bool header = false;
    int lineno = 0;
    std::vector<std::string> seen;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (!header) {
            std::istringstream hs(line);
            std::string magic;
            int version = 0;
            if (!(hs >> magic >> version) || magic != "lumeneit-config")
                throw ParameterError("config: first line must be 'lumeneit-config " + std::to_string(kConfigVersion) + "'");
            if (version != kConfigVersion)
                throw ParameterError("config: unsupported version " + std::to_string(version));
            header = true;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParameterError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto& table = fields();
        const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
        if (it == table.end()) throw ParameterError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        if (std::find(seen.begin(), seen.end(), key) != seen.end())
            throw ParameterError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        seen.push_back(key);
        it->set(cfg, key, value);
    }
    if (!header) throw ParameterError("config: missing 'lumeneit-config' header");
    cfg.noise.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open config " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& config) {
    std::string out = "lumeneit-config " + std::to_string(kConfigVersion) + "\n";
    for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
    return out;
}

namespace {
std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t x) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
    return buf;
}
} // namespace

std::uint64_t config_hash(const ExperimentConfig& config) { return fnv1a(serialize_config(config)); }

// ---------------------------------------------------------------- manifest

void Manifest::write(const fs::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot write manifest " + path.string());
    os << "lumeneit-manifest 1\n";
    os << "scenario " << scenario << "\n";
    os << "config_hash " << hex64(config_hash) << "\n";
    os << "seed " << seed << "\n";
    os << "complete " << (complete ? "true" : "false") << "\n";
    os << "failed_stage " << (failed_stage.empty() ? "-" : failed_stage) << "\n";
    for (const auto& a : artifacts) os << "artifact " << a.kind << " " << a.path.generic_string() << "\n";
    if (!os) throw InputError("failed writing manifest " + path.string());
}

Manifest Manifest::read(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open manifest " + path.string());
    Manifest m;
    std::string line;
    if (!std::getline(is, line) || line != "lumeneit-manifest 1") throw InputError("not a manifest: " + path.string());
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto sp = line.find(' ');
        const std::string key = line.substr(0, sp);
        const std::string rest = sp == std::string::npos ? "" : line.substr(sp + 1);
        if (key == "scenario") m.scenario = rest;
        else if (key == "config_hash") m.config_hash = std::stoull(rest, nullptr, 16);
        else if (key == "seed") m.seed = std::stoull(rest);
        else if (key == "complete") m.complete = rest == "true";
        else if (key == "failed_stage") m.failed_stage = rest == "-" ? "" : rest;
        else if (key == "artifact") {
            const auto sp2 = rest.find(' ');
            if (sp2 == std::string::npos) throw InputError("malformed artifact line in " + path.string());
            m.artifacts.push_back({rest.substr(0, sp2), fs::path(rest.substr(sp2 + 1))});
        } else {
            throw InputError("unknown manifest key '" + key + "'");
        }
    }
    return m;
}

// ---------------------------------------------------------------- calibration and statistics

std::vector<Frame> calibrate(const CalibrationSet& set) {
    if (set.baseline.size() != set.measured.size())
        throw InputError("calibration: baseline and measured step counts differ");
    std::vector<Frame> out;
    out.reserve(set.measured.size());
    for (std::size_t i = 0; i < set.measured.size(); ++i) {
        const Frame& b = set.baseline[i];
        const Frame& m = set.measured[i];
        if (b.protocol != m.protocol || b.size() != m.size())
            throw InputError("calibration: protocol mismatch at step " + std::to_string(i));
        Frame c = m;
        c.noise.reset();
        for (std::size_t k = 0; k < c.voltages.size(); ++k) c.voltages[k] = m.voltages[k] - b.voltages[k];
        out.push_back(std::move(c));
    }
    return out;
}

namespace {
double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }
double std_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / double(v.size()));
}
} // namespace

std::vector<double> coefficient_of_variation(const std::vector<Frame>& frames) {
    std::vector<double> out;
    for (const auto& f : frames) {
        if (f.size() < 2) throw InputError("coefficient of variation needs at least two measurements");
        const double m = mean_of(f.voltages);
        out.push_back(m == 0.0 ? std::numeric_limits<double>::quiet_NaN() : std_of(f.voltages) / std::abs(m));
    }
    return out;
}

std::vector<double> deviation_from_expected(const std::vector<Frame>& frames, const std::vector<Frame>& expected) {
    if (frames.size() != expected.size()) throw InputError("deviation: frame counts differ");
    std::vector<double> out;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (frames[i].size() != expected[i].size() || frames[i].size() < 2)
            throw InputError("deviation: frame sizes differ");
        std::vector<double> rel;
        bool defined = true;
        for (std::size_t k = 0; k < frames[i].size(); ++k) {
            const double e = expected[i].voltages[k];
            if (e == 0.0) defined = false;
            rel.push_back(defined ? (frames[i].voltages[k] - e) / e : 0.0);
        }
        out.push_back(defined ? std_of(rel) : std::numeric_limits<double>::quiet_NaN());
    }
    return out;
}

double free_radius(int step, int steps, double start, double end) {
    if (steps < 2 || step < 0 || step >= steps) throw ParameterError("free_radius: step out of range");
    return start + (end - start) * double(step) / double(steps - 1);
}

int peak_shift(const std::vector<double>& a, const std::vector<double>& b) {
    const int n = static_cast<int>(a.size());
    if (n == 0 || b.size() != a.size()) throw InputError("peak_shift: vectors must have equal non-zero length");
    const double ma = mean_of(a), mb = mean_of(b);
    int best = 0;
    double best_score = 0.0;
    bool first = true;
    // Candidates ordered 0, 1, -1, 2, -2, ... so ties resolve to the smallest shift.
    for (int k = 0; k <= n / 2; ++k) {
        for (int s : {k, -k}) {
            if ((k == 0 && s < 0) || (2 * k == n && s < 0)) continue;
            double score = 0.0;
            for (int i = 0; i < n; ++i) score += (a[((i - s) % n + n) % n] - ma) * (b[i] - mb);
            if (first || score > best_score + 1e-12 * std::abs(best_score)) {
                first = false;
                best_score = score;
                best = s;
            }
        }
    }
    return best;
}

int peak_width(const std::vector<double>& values) {
    const int n = static_cast<int>(values.size());
    if (n == 0) return 0;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const int top = static_cast<int>(hi - values.begin());
    if (!(*hi > *lo)) return n;
    const double half = *lo + 0.5 * (*hi - *lo);
    int width = 1;
    for (int i = 1; i < n && values[(top + i) % n] >= half; ++i) ++width;
    for (int i = 1; i < n && values[((top - i) % n + n) % n] >= half; ++i) ++width;
    return std::min(width, n);
}

// ---------------------------------------------------------------- scenarios

namespace {

struct Frames {
    Frame radial;
    Frame full;
};

// One solve for the union of both protocols (the radial injections are a subset).
Frames simulate(const LumenProfile& profile, const CatheterSpec& catheter, const MeshResolution& res) {
    const Mesh mesh = build_phantom_mesh(profile, catheter, res);
    const FemModel model(mesh);
    const Protocol full = full_protocol();
    const ForwardSolver solver(model, ConductivityField::uniform(mesh.element_count()));
    const ForwardSolution sol = solver.solve(injection_pairs(full), kCurrentAmplitude);
    return {frame_from_solution(sol, radial_protocol()), frame_from_solution(sol, full)};
}

const Frame& pick(const Frames& f, const std::string& protocol) { return protocol == "full" ? f.full : f.radial; }

// Noise streams: one per (kind, case, step) so adding cases never reshuffles others.
std::uint64_t stream(int kind, int c, int step) {
    return std::uint64_t(kind) * 1000000ull + std::uint64_t(c) * 1000ull + std::uint64_t(step);
}

std::string slug(double x) {
    std::string s = format_number(x);
    std::replace(s.begin(), s.end(), '.', 'p');
    std::replace(s.begin(), s.end(), '-', 'm');
    return s;
}

class Run {
public:
    Run(const ExperimentConfig& cfg) : cfg_(cfg), dir_(cfg.output_dir) {
        manifest_.scenario = to_string(cfg.scenario);
        manifest_.config_hash = config_hash(cfg);
        manifest_.seed = cfg.seed;
        noise_ = cfg.noise;
        noise_.seed = cfg.seed;
    }

    template <class F>
    void stage(const std::string& name, F&& f) {
        try {
            f();
        } catch (const std::exception& e) {
            manifest_.complete = false;
            manifest_.failed_stage = name;
            try {
                manifest_.write(dir_ / "manifest.txt");
            } catch (const std::exception&) {
            }
            throw StageError(name, e.what(), manifest_);
        }
    }

    fs::path path(const fs::path& rel) {
        const fs::path p = dir_ / rel;
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        return p;
    }
    void add(const std::string& kind, const fs::path& rel) { manifest_.artifacts.push_back({kind, rel}); }

    void write_frame(const Frame& f, const std::string& rel) {
        write_frame_csv(f, path(rel));
        add("frame", rel);
    }

    Frame noisy(const Frame& f, int kind, int c, int step) {
        auto rng = case_rng(cfg_.seed, stream(kind, c, step));
        return add_noise(f, noise_, rng);
    }

    Manifest finish() {
        manifest_.complete = true;
        manifest_.failed_stage.clear();
        manifest_.write(dir_ / "manifest.txt");
        return manifest_;
    }

    const ExperimentConfig& cfg_;
    fs::path dir_;
    Manifest manifest_;
    NoiseModel noise_;
};

MeshResolution scenario_resolution(const ExperimentConfig& cfg, double max_wall_radius) {
    return MeshResolution::for_size(std::max(max_wall_radius, 0.5 * cfg.recon_diameter), cfg.effective_catheter(),
                                    cfg.target_size);
}

ReconMesh build_recon(const ExperimentConfig& cfg) {
    ReconMeshOptions o;
    o.diameter = cfg.recon_diameter;
    o.catheter = cfg.effective_catheter();
    return ReconMesh::build(o, full_protocol());
}

Frame ptd_reference(const ExperimentConfig& cfg, const ReconMesh& rm, const MeshResolution& res) {
    if (cfg.ptd_reference == "recon") return rm.homogeneous_frame();
    return simulate(LumenProfile::circle(cfg.recon_diameter), cfg.effective_catheter(), res).full;
}

AbsoluteOptions absolute_options(const ExperimentConfig& cfg) {
    AbsoluteOptions o;
    o.lambda = cfg.abs_lambda;
    o.max_iterations = cfg.abs_iterations;
    o.noser_exponent = cfg.noser_exponent;
    return o;
}

CvOptions cv_options(const ExperimentConfig& cfg) {
    CvOptions o;
    o.folds = cfg.cv_folds;
    o.one_standard_error = cfg.cv_one_standard_error;
    return o;
}

struct ReconRecord {
    std::string name;
    Reconstruction recon;
    DecreaseAnalysis decrease;
    double expected_deg; // true lesion azimuth or minor axis
    bool axis;           // compare as an axis (period 180)
};

void write_recon_outputs(Run& run, const ReconMesh& rm, const std::vector<ReconRecord>& recs) {
    for (const auto& r : recs) {
        const std::string base = "recon/" + r.name;
        write_reconstruction_vtk(r.recon, rm, run.path(base + ".vtk"));
        run.add("vtk", base + ".vtk");
        write_reconstruction_csv(r.recon, run.path(base + ".csv"));
        run.add("csv", base + ".csv");
    }
    CsvWriter w(run.path("recon_summary.csv"));
    w.header({"name", "mode", "lambda", "iterations", "stagnated", "centroid_deg", "centroid_strength", "axis_deg",
              "axis_strength", "balance", "expected_deg", "compare", "error_deg"});
    for (const auto& r : recs) {
        const double err = r.axis ? axis_distance(r.decrease.axis_deg, r.expected_deg)
                                  : azimuth_distance(r.decrease.centroid_deg, r.expected_deg);
        w.cell(r.name).cell(to_string(r.recon.mode)).cell(r.recon.lambda).cell(r.recon.iterations)
            .cell(std::string(r.recon.stagnated ? "true" : "false")).cell(r.decrease.centroid_deg)
            .cell(r.decrease.centroid_strength).cell(r.decrease.axis_deg).cell(r.decrease.axis_strength)
            .cell(r.decrease.balance).cell(r.expected_deg).cell(std::string(r.axis ? "axis" : "centroid")).cell(err);
        w.end_row();
    }
    w.close();
    run.add("csv", "recon_summary.csv");
}

ReconRecord record(const std::string& name, Reconstruction recon, const ReconMesh& rm, double expected, bool axis) {
    ReconRecord r{name, std::move(recon), {}, expected, axis};
    r.decrease = analyse_decrease(r.recon, rm);
    return r;
}

struct PeakRow {
    std::string name;
    double aspect_ratio;
    double rotation;
    std::vector<double> calibrated;
    double limit;
};

void write_peaks(Run& run, const std::vector<PeakRow>& rows, const std::string& rel) {
    CsvWriter w(run.path(rel));
    w.header({"case", "aspect_ratio", "rotation_deg", "peak_row", "peak_width", "max_calibrated_V", "dv_limit_V",
              "rows_above_limit", "detected", "shift_vs_first_rotation"});
    for (const auto& r : rows) {
        const auto top = std::max_element(r.calibrated.begin(), r.calibrated.end()) - r.calibrated.begin();
        int above = 0;
        for (double v : r.calibrated) above += std::abs(v) > r.limit;
        // Shift relative to the first case with the same aspect ratio.
        const auto ref = std::find_if(rows.begin(), rows.end(), [&](const PeakRow& o) {
            return o.aspect_ratio == r.aspect_ratio && o.name.rfind("ellipse", 0) == r.name.rfind("ellipse", 0);
        });
        w.cell(r.name).cell(r.aspect_ratio).cell(r.rotation).cell(static_cast<long long>(top + 1))
            .cell(peak_width(r.calibrated)).cell(r.calibrated[top]).cell(r.limit).cell(above)
            .cell(std::string(above > 0 ? "true" : "false")).cell(peak_shift(ref->calibrated, r.calibrated));
        w.end_row();
    }
    w.close();
    run.add("csv", rel);
}

// Ellipticity: circle and ellipses over a radial inflation, calibrated against free-space frames.
void run_ellipticity(Run& run) {
    const auto& cfg = run.cfg_;
    const CatheterSpec cat = cfg.effective_catheter();
    const double D = cfg.lumen_diameter_or_default();
    const int steps = cfg.inflation_steps;
    const double r_end = cfg.inflation_overshoot * 0.5 * D;
    const MeshResolution res = scenario_resolution(cfg, r_end);

    struct Case {
        std::string name;
        LumenProfile profile;
        double f, rot;
    };
    std::vector<Case> cases{{"circle", LumenProfile::circle(D), 1.0, 0.0}};
    for (double f : cfg.aspect_ratios)
        for (double rot : cfg.rotations)
            cases.push_back({"ellipse_f" + slug(f) + "_rot" + slug(rot), LumenProfile::ellipse(D, f, rot), f, rot});

    std::vector<double> radii;
    for (int s = 0; s < steps; ++s) radii.push_back(free_radius(s, steps, cfg.free_radius_start, r_end));

    std::vector<Frames> baseline_clean(steps);
    std::vector<Frame> baseline(steps);
    run.stage("baseline", [&] {
        for (int s = 0; s < steps; ++s) {
            baseline_clean[s] = simulate(LumenProfile::circle(2.0 * radii[s]), cat, res);
            baseline[s] = run.noisy(pick(baseline_clean[s], cfg.protocol), 0, 0, s);
            run.write_frame(baseline[s], "frames/baseline_step" + std::to_string(s) + ".csv");
        }
    });

    std::vector<std::vector<Frame>> measured(cases.size()), clean(cases.size());
    Frame recon_frame;
    bool have_recon_frame = false;
    run.stage("forward", [&] {
        for (std::size_t c = 0; c < cases.size(); ++c) {
            for (int s = 0; s < steps; ++s) {
                LumenProfile p = cases[c].profile;
                p.clamp_radius = radii[s];
                const Frames fr = simulate(p, cat, res);
                clean[c].push_back(pick(fr, cfg.protocol));
                measured[c].push_back(run.noisy(pick(fr, cfg.protocol), 1, int(c), s));
                run.write_frame(measured[c].back(), "frames/" + cases[c].name + "_step" + std::to_string(s) + ".csv");
                if (s == steps - 1 && cases[c].f == cfg.recon_aspect_ratio && cases[c].rot == cfg.rotations.front()) {
                    recon_frame = run.noisy(fr.full, 2, int(c), s);
                    run.write_frame(recon_frame, "frames/" + cases[c].name + "_full.csv");
                    have_recon_frame = true;
                }
            }
        }
    });

    std::vector<PeakRow> peaks;
    run.stage("calibration", [&] {
        CsvWriter v(run.path("voltages.csv"));
        v.header({"case", "aspect_ratio", "rotation_deg", "step", "free_radius_mm", "row", "measured_V", "baseline_V",
                  "calibrated_V", "dv_limit_V", "exceeds"});
        CsvWriter cv(run.path("cv.csv"));
        cv.header({"case", "aspect_ratio", "rotation_deg", "step", "free_radius_mm", "cv_measured", "cv_calibrated",
                   "cv_deviation"});
        for (std::size_t c = 0; c < cases.size(); ++c) {
            const auto cal = calibrate({baseline, measured[c]});
            const auto cv_m = coefficient_of_variation(measured[c]);
            const auto cv_c = coefficient_of_variation(cal);
            const auto dev = deviation_from_expected(measured[c], clean[0]);
            for (int s = 0; s < steps; ++s) {
                const double limit = detection_threshold(pick(baseline_clean[s], cfg.protocol), run.noise_);
                for (std::size_t k = 0; k < cal[s].size(); ++k) {
                    v.cell(cases[c].name).cell(cases[c].f).cell(cases[c].rot).cell(s).cell(radii[s])
                        .cell(k + 1).cell(measured[c][s].voltages[k]).cell(baseline[s].voltages[k])
                        .cell(cal[s].voltages[k]).cell(limit)
                        .cell(std::string(std::abs(cal[s].voltages[k]) > limit ? "true" : "false"));
                    v.end_row();
                }
                cv.cell(cases[c].name).cell(cases[c].f).cell(cases[c].rot).cell(s).cell(radii[s]).cell(cv_m[s])
                    .cell(cv_c[s]).cell(dev[s]);
                cv.end_row();
            }
            const double limit = detection_threshold(pick(baseline_clean[steps - 1], cfg.protocol), run.noise_);
            peaks.push_back({cases[c].name, cases[c].f, cases[c].rot, cal[steps - 1].voltages, limit});
        }
        v.close();
        cv.close();
        run.add("csv", "voltages.csv");
        run.add("csv", "cv.csv");
        write_peaks(run, peaks, "peaks.csv");
    });

    if (!have_recon_frame) return;
    run.stage("reconstruction", [&] {
        const ReconMesh rm = build_recon(cfg);
        const Frame ref = ptd_reference(cfg, rm, res);
        const double minor_axis = std::fmod(cfg.rotations.front() + 90.0, 180.0);
        std::vector<ReconRecord> recs;
        recs.push_back(record("ellipse_absolute", reconstruct_absolute(recon_frame, rm, absolute_options(cfg)), rm,
                              minor_axis, true));
        recs.push_back(record("ellipse_ptd",
                              reconstruct_difference(recon_frame, ref, rm, ReconMode::ptd, cfg.diff_lambda, cv_options(cfg)),
                              rm, minor_axis, true));
        write_recon_outputs(run, rm, recs);
    });
}

void run_lesion(Run& run) {
    const auto& cfg = run.cfg_;
    const CatheterSpec cat = cfg.effective_catheter();
    const double D = cfg.lumen_diameter_or_default();
    const MeshResolution res = scenario_resolution(cfg, 0.5 * D);
    const LumenProfile lesion = LumenProfile::crescent(D, cfg.crescent_depth, cfg.crescent_extent, cfg.crescent_center);
    const LumenProfile ellipse = LumenProfile::ellipse(D, cfg.recon_aspect_ratio, cfg.rotations.front());

    Frames plain_clean, lesion_clean, ellipse_clean;
    Frame plain, plain_full, with_lesion, lesion_full, with_ellipse;
    run.stage("forward", [&] {
        plain_clean = simulate(LumenProfile::circle(D), cat, res);
        lesion_clean = simulate(lesion, cat, res);
        ellipse_clean = simulate(ellipse, cat, res);
        plain = run.noisy(pick(plain_clean, cfg.protocol), 0, 0, 0);
        with_lesion = run.noisy(pick(lesion_clean, cfg.protocol), 1, 1, 0);
        with_ellipse = run.noisy(pick(ellipse_clean, cfg.protocol), 1, 2, 0);
        plain_full = run.noisy(plain_clean.full, 2, 0, 0);
        lesion_full = run.noisy(lesion_clean.full, 2, 1, 0);
        run.write_frame(plain, "frames/lumen.csv");
        run.write_frame(with_lesion, "frames/lesion.csv");
        run.write_frame(with_ellipse, "frames/ellipse.csv");
        run.write_frame(plain_full, "frames/lumen_full.csv");
        run.write_frame(lesion_full, "frames/lesion_full.csv");
    });

    run.stage("calibration", [&] {
        const double limit = detection_threshold(pick(plain_clean, cfg.protocol), run.noise_);
        const auto cal = calibrate({{plain, plain}, {with_lesion, with_ellipse}});
        CsvWriter v(run.path("voltages.csv"));
        v.header({"case", "row", "measured_V", "baseline_V", "calibrated_V", "dv_limit_V", "exceeds"});
        const char* names[] = {"lesion", "ellipse"};
        const Frame* meas[] = {&with_lesion, &with_ellipse};
        for (int c = 0; c < 2; ++c)
            for (std::size_t k = 0; k < cal[c].size(); ++k) {
                v.cell(std::string(names[c])).cell(k + 1).cell(meas[c]->voltages[k]).cell(plain.voltages[k])
                    .cell(cal[c].voltages[k]).cell(limit)
                    .cell(std::string(std::abs(cal[c].voltages[k]) > limit ? "true" : "false"));
                v.end_row();
            }
        v.close();
        run.add("csv", "voltages.csv");
        write_peaks(run,
                    {{"lesion", 1.0, cfg.crescent_center, cal[0].voltages, limit},
                     {"ellipse", cfg.recon_aspect_ratio, cfg.rotations.front(), cal[1].voltages, limit}},
                    "peaks.csv");
    });

    run.stage("reconstruction", [&] {
        const ReconMesh rm = build_recon(cfg);
        const Frame ref = ptd_reference(cfg, rm, res);
        std::vector<ReconRecord> recs;
        recs.push_back(record("lesion_absolute", reconstruct_absolute(lesion_full, rm, absolute_options(cfg)), rm,
                              cfg.crescent_center, false));
        recs.push_back(record("lesion_ptd",
                              reconstruct_difference(lesion_full, ref, rm, ReconMode::ptd, cfg.diff_lambda, cv_options(cfg)),
                              rm, cfg.crescent_center, false));
        recs.push_back(record("lesion_td",
                              reconstruct_difference(lesion_full, plain_full, rm, ReconMode::td, cfg.diff_lambda,
                                                     cv_options(cfg)),
                              rm, cfg.crescent_center, false));
        write_recon_outputs(run, rm, recs);
    });
}

void run_dilation(Run& run) {
    const auto& cfg = run.cfg_;
    const CatheterSpec cat = cfg.effective_catheter();
    const double D = cfg.lumen_diameter_or_default();
    const MeshResolution res = scenario_resolution(cfg, 0.5 * D);
    const int n = static_cast<int>(std::floor(cfg.indent_depth / cfg.indent_speed * cfg.frame_rate + 1e-9)) + 1;

    std::vector<double> times, depths;
    std::vector<Frame> frames;
    run.stage("forward", [&] {
        for (int k = 0; k < n; ++k) {
            const double t = k / cfg.frame_rate;
            const double depth = std::max(0.0, cfg.indent_depth - cfg.indent_speed * t);
            LumenProfile p = LumenProfile::indented(D, depth, cfg.indent_center);
            p.indent_arc_halfwidth = cfg.indent_arc_halfwidth;
            p.indent_axial_halfwidth = cfg.indent_axial_halfwidth;
            times.push_back(t);
            depths.push_back(depth);
            frames.push_back(run.noisy(simulate(p, cat, res).full, 2, 0, k));
            run.write_frame(frames.back(), "frames/dilation_frame" + std::to_string(k) + ".csv");
        }
    });

    run.stage("reconstruction", [&] {
        const ReconMesh rm = build_recon(cfg);
        const Frame ref = ptd_reference(cfg, rm, res);
        CsaOptions co;
        co.factor = cfg.csa_factor;
        co.reference = cfg.csa_reference == "electrode_faces" ? CsaReference::electrode_faces : CsaReference::shaft_surface;
        // One lambda per series keeps the images of different frames on a common scale.
        double ptd_lambda = cfg.diff_lambda, td_lambda = cfg.diff_lambda;
        if (cfg.diff_lambda < 0.0) {
            ptd_lambda = cross_validate_series(rm, frames, ref, cv_options(cfg)).lambda;
            const std::vector<Frame> later(frames.begin() + (n > 1 ? 1 : 0), frames.end());
            td_lambda = cross_validate_series(rm, later, frames[0], cv_options(cfg)).lambda;
        }
        CsvWriter w(run.path("csa.csv"));
        std::vector<std::string> cols{"frame", "time_s", "indent_depth_mm", "area_mm2", "retained", "slice_elements",
                                      "reference_average", "lambda", "td_lambda", "max_deficit_sector"};
        for (int s = 0; s < 8; ++s) cols.push_back("deficit_sector" + std::to_string(s) + "_mm2");
        w.header(cols);
        for (int k = 0; k < n; ++k) {
            const Reconstruction ptd = reconstruct_difference(frames[k], ref, rm, ReconMode::ptd, ptd_lambda);
            const Reconstruction td = reconstruct_difference(frames[k], frames[0], rm, ReconMode::td, td_lambda);
            const std::string base = "recon/dilation_frame" + std::to_string(k);
            write_reconstruction_vtk(ptd, rm, run.path(base + "_ptd.vtk"));
            run.add("vtk", base + "_ptd.vtk");
            write_reconstruction_csv(ptd, run.path(base + "_ptd.csv"));
            run.add("csv", base + "_ptd.csv");
            write_reconstruction_csv(td, run.path(base + "_td.csv"));
            run.add("csv", base + "_td.csv");
            const CsaResult csa = approximate_csa(ptd, rm, co);
            const auto& d = csa.sector_deficit_mm2;
            auto top = std::max_element(d.begin(), d.end()) - d.begin();
            if (!(d[top] > 0.0)) top = -1;
            w.cell(k).cell(times[k]).cell(depths[k]).cell(csa.area_mm2).cell(csa.retained).cell(csa.slice_elements)
                .cell(csa.electrode_average).cell(ptd.lambda).cell(td.lambda).cell(static_cast<long long>(top));
            for (double x : d) w.cell(x);
            w.end_row();
        }
        w.close();
        run.add("csv", "csa.csv");
    });
}

void run_spacing(Run& run) {
    const auto& cfg = run.cfg_;
    SpacingSweepOptions o = cfg.spacing;
    o.catheter = cfg.effective_catheter();
    o.target_size = cfg.target_size;
    run.stage("sweep", [&] {
        const auto result = sweep_spacing(o);
        write_spacing_csv(result, run.path("spacing.csv"));
        run.add("csv", "spacing.csv");
    });
}

void run_detectability(Run& run) {
    const auto& cfg = run.cfg_;
    DetectabilityOptions o = cfg.detect;
    o.catheter = cfg.effective_catheter();
    o.target_size = cfg.target_size;
    o.noise = run.noise_;
    run.stage("sweep", [&] {
        const auto result = sweep_detectability(o);
        write_detectability_cases_csv(result, run.path("detectability_cases.csv"));
        run.add("csv", "detectability_cases.csv");
        write_detectability_summary_csv(result, run.path("detectability_summary.csv"));
        run.add("csv", "detectability_summary.csv");
    });
}

} // namespace

Manifest run_experiment(const ExperimentConfig& config) {
    config.validate();
    Run run(config);
    run.stage("setup", [&] {
        fs::create_directories(run.dir_);
        std::ofstream os(run.path("config.txt"), std::ios::binary);
        os << serialize_config(config);
        if (!os) throw InputError("cannot write config copy");
        run.add("config", "config.txt");
    });
    switch (config.scenario) {
    case Scenario::ellipticity: run_ellipticity(run); break;
    case Scenario::lesion: run_lesion(run); break;
    case Scenario::dilation: run_dilation(run); break;
    case Scenario::spacing_sweep: run_spacing(run); break;
    case Scenario::detectability_sweep: run_detectability(run); break;
    }
    return run.finish();
}

} // namespace lumeneit
