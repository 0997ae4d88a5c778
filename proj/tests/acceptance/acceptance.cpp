// Runs every scenario at desk-scale resolution and prints one line per criterion.
// Usage: acceptance [output_dir]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lumeneit/csv.hpp"
#include "lumeneit/error.hpp"
#include "lumeneit/experiments.hpp"

using namespace lumeneit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) pass = false;
        detail << (detail.tellp() > 0 ? "; " : "") << (ok ? "" : "FAILED ") << what;
    }
};

std::string fmt(double x, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, x);
    return buf;
}

double num(const CsvTable& t, std::size_t row, const std::string& col) {
    return std::stod(t.rows[row][t.column(col)]);
}
const std::string& str(const CsvTable& t, std::size_t row, const std::string& col) {
    return t.rows[row][t.column(col)];
}
std::size_t find_row(const CsvTable& t, const std::string& col, const std::string& value) {
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        if (str(t, r, col) == value) return r;
    throw InputError("no row with " + col + " = " + value);
}

ExperimentConfig config_for(Scenario s, const fs::path& dir) {
    ExperimentConfig c;
    c.scenario = s;
    c.seed = 1;
    c.noise.seed = 1;
    c.output_dir = dir / to_string(s);
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

void report(int n, const Outcome& o) {
    std::printf("criterion %d: %s %s\n", n, o.pass ? "PASS" : "FAIL", o.detail.str().c_str());
    std::fflush(stdout);
}

// ---------------------------------------------------------------- criteria

Outcome spacing(const fs::path& dir) {
    Outcome o;
    const CsvTable t = read_csv(dir / "spacing.csv");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const double l = num(t, r, "l_mm"), cd = num(t, r, "cd_theta_deg");
        if (!str(t, r, "error").empty()) o.require(false, "l=" + fmt(l) + " error " + str(t, r, "error"));
        if (l == 10.0) o.require(cd <= 100.0, "CD(10)=" + fmt(cd) + " <= 100");
        if (l >= 20.0) o.require(cd > 180.0, "CD(" + fmt(l) + ")=" + fmt(cd) + " > 180");
        if (l >= 35.0) {
            std::vector<double> j;
            for (int s = 1;; ++s) {
                const std::string col = "j_wall_" + std::to_string(s);
                if (std::find(t.columns.begin(), t.columns.end(), col) == t.columns.end()) break;
                j.push_back(num(t, r, col));
            }
            const auto [lo, hi] = std::minmax_element(j.begin(), j.end());
            const double spread = *hi / *lo - 1.0;
            o.require(spread <= 0.10, "J_wall spread(" + fmt(l) + ")=" + fmt(100 * spread) + "% <= 10%");
        }
    }
    return o;
}

Outcome detectability(const fs::path& dir) {
    Outcome o;
    const CsvTable cases = read_csv(dir / "detectability_cases.csv");
    std::size_t failed = 0, circle_floor = 0;
    for (std::size_t r = 0; r < cases.rows.size(); ++r) {
        failed += !str(cases, r, "error").empty();
        if (num(cases, r, "f") == 1.0 && !(std::abs(num(cases, r, "dv_ellip_V")) < num(cases, r, "dv_limit_V") / 10))
            ++circle_floor;
    }
    o.require(cases.rows.size() == 209 && failed == 0,
              std::to_string(cases.rows.size()) + " cases, " + std::to_string(failed) + " failed");
    o.require(circle_floor == 0, std::to_string(circle_floor) + " circles above dv_limit/10");

    const CsvTable s = read_csv(dir / "detectability_summary.csv");
    auto f_max = [&](double d) { return num(s, find_row(s, "D_mm", fmt(d)), "f_max"); };
    o.require(f_max(14) >= 0.85, "f_max(14)=" + fmt(f_max(14)) + " >= 0.85");
    o.require(std::abs(f_max(25) - 0.7) <= 0.1 + 1e-9, "f_max(25)=" + fmt(f_max(25)) + " in 0.7+-0.1");
    o.require(std::abs(f_max(30) - 0.5) <= 0.1 + 1e-9, "f_max(30)=" + fmt(f_max(30)) + " in 0.5+-0.1");
    double limit = 0.0, prev = 2.0;
    int increases = 0;
    for (std::size_t r = 0; r < s.rows.size(); ++r) {
        if (num(s, r, "diam_detectable") == 1.0) limit = std::max(limit, num(s, r, "D_mm"));
        const double f = num(s, r, "f_max");
        if (!std::isnan(f)) {
            // one 0.05 grid step of tolerance
            if (f > prev + 0.05 + 1e-9) ++increases;
            prev = std::min(prev, f);
        }
    }
    o.require(std::abs(limit - 28.0) <= 2.0, "size limit " + fmt(limit) + " mm in 28+-2");
    o.require(increases == 0, "f_max non-increasing (" + std::to_string(increases) + " violations)");
    return o;
}

Outcome forward_oracles() {
    Outcome o;
    constexpr double pi = std::numbers::pi;
    {
        const double r = 5.0, L = 20.0, current = 1e-3;
        const Mesh mesh = build_end_cap_cylinder(r, L, 64, 6, 10);
        const FemModel model(mesh);
        ForwardOptions fo;
        fo.contact_impedance = 1e-9;
        const Frame f = solve_forward(model, ConductivityField::uniform(mesh.element_count()),
                                      Protocol{"caps", {{1, 2, 1, 2}}}, current, fo);
        const double analytic = (L * 1e-3) / (kSalineConductivity * pi * r * r * 1e-6);
        const double err = std::abs(f.voltages[0] / current - analytic) / analytic;
        o.require(err < 0.01, "cylinder error " + fmt(100 * err) + "% < 1%");
    }
    MeshResolution res;
    res.electrode_segments = 2;
    res.gap_segments = 2;
    res.radial_bands = 2;
    res.axial_layers = 10;
    {
        const Mesh mesh = build_phantom_mesh(LumenProfile::crescent(22.0, 5.0, 100.0, 60.0), CatheterSpec{}, res);
        const FemModel model(mesh);
        const ForwardSolver solver(model, ConductivityField::uniform(mesh.element_count()));
        const Protocol full = full_protocol();
        std::vector<ElectrodePair> pairs = injection_pairs(full);
        for (const auto& m : measurement_pairs(full))
            if (std::find(pairs.begin(), pairs.end(), m) == pairs.end()) pairs.push_back(m);
        const ForwardSolution sol = solver.solve(pairs, kCurrentAmplitude);
        auto column = [&](ElectrodePair p) {
            return Eigen::Index(std::find(sol.injections.begin(), sol.injections.end(), p) - sol.injections.begin());
        };
        double worst = 0.0;
        const auto& U = sol.electrode_potentials;
        for (const auto& row : full.rows) {
            const ElectrodePair inj{row.inject_pos - 1, row.inject_neg - 1}, meas{row.meas_pos - 1, row.meas_neg - 1};
            const double a = U(meas.positive, column(inj)) - U(meas.negative, column(inj));
            const double b = U(inj.positive, column(meas)) - U(inj.negative, column(meas));
            worst = std::max(worst, std::abs(a - b) / std::abs(a));
        }
        o.require(worst < 1e-3, "reciprocity worst " + fmt(100 * worst) + "% over " + std::to_string(full.size()) + " rows");
    }
    {
        const Mesh mesh = build_phantom_mesh(LumenProfile::ellipse(20.0, 0.75, 15.0), CatheterSpec{}, res);
        const FemModel model(mesh);
        const auto sigma = ConductivityField::uniform(mesh.element_count());
        const Protocol protocol = full_protocol();
        const auto J = compute_sensitivity(model, sigma, protocol);
        std::mt19937_64 rng(11);
        const double big = J.entries.cwiseAbs().maxCoeff();
        std::uniform_int_distribution<Eigen::Index> row(0, J.entries.rows() - 1), col(0, J.entries.cols() - 1);
        int checked = 0;
        double worst = 0.0;
        while (checked < 20) {
            const Eigen::Index m = row(rng), e = col(rng);
            if (std::abs(J.entries(m, e)) < 1e-3 * big) continue;
            const double h = 1e-4 * kSalineConductivity;
            ConductivityField up = sigma, down = sigma;
            up.sigma[std::size_t(e)] += h;
            down.sigma[std::size_t(e)] -= h;
            const Protocol one{"one", {protocol.rows[std::size_t(m)]}};
            const double fd =
                (solve_forward(model, up, one).voltages[0] - solve_forward(model, down, one).voltages[0]) / (2 * h);
            worst = std::max(worst, std::abs(fd - J.entries(m, e)) / std::abs(J.entries(m, e)));
            ++checked;
        }
        o.require(mesh.element_count() <= 5000, std::to_string(mesh.element_count()) + " elements");
        o.require(worst < 1e-3, "adjoint vs FD worst " + fmt(100 * worst) + "% on 20 entries");
    }
    return o;
}

Outcome protocol_counts() {
    Outcome o;
    const Protocol radial = radial_protocol(), full = full_protocol();
    o.require(radial.size() == 8, "radial " + std::to_string(radial.size()) + " rows");
    o.require(full.size() == 136, "full " + std::to_string(full.size()) + " rows");
    const auto rep = validate_protocol(full);
    o.require(rep.issues.empty() && rep.duplicates.empty(),
              std::to_string(rep.issues.size()) + " issues, " + std::to_string(rep.duplicates.size()) + " duplicates");
    return o;
}

Outcome localisation(const fs::path& lesion_dir, const fs::path& ellipse_dir) {
    Outcome o;
    const CsvTable lesion = read_csv(lesion_dir / "recon_summary.csv");
    for (const std::string name : {"lesion_absolute", "lesion_ptd"}) {
        const double err = num(lesion, find_row(lesion, "name", name), "error_deg");
        o.require(err <= 45.0, name + " centroid error " + fmt(err) + " deg");
    }
    const CsvTable ellipse = read_csv(ellipse_dir / "recon_summary.csv");
    for (const std::string name : {"ellipse_absolute", "ellipse_ptd"}) {
        const std::size_t r = find_row(ellipse, "name", name);
        const double err = num(ellipse, r, "error_deg");
        o.require(err <= 45.0, name + " axis error " + fmt(err) + " deg, balance " + fmt(num(ellipse, r, "balance"), 2));
    }
    const ReconMesh rm = ReconMesh::build();
    const Frame f = rm.homogeneous_frame();
    const Reconstruction td = reconstruct_difference(f, f, rm, ReconMode::td);
    const bool zero = std::all_of(td.values.begin(), td.values.end(), [](double v) { return v == 0.0; });
    o.require(zero, "TD null image identically zero");
    return o;
}

Outcome ellipticity(const fs::path& dir) {
    Outcome o;
    const CsvTable p = read_csv(dir / "peaks.csv");
    const std::size_t r0 = find_row(p, "case", "ellipse_f0p75_rot0");
    const std::size_t r90 = find_row(p, "case", "ellipse_f0p75_rot90");
    o.require(str(p, r0, "detected") == "true", "f=0.75 rows above dv_limit " + str(p, r0, "rows_above_limit") + "/8");
    const double shift = num(p, r90, "shift_vs_first_rotation");
    o.require(std::abs(shift) == 2.0, "rot90 peak shift " + fmt(shift) + " electrodes");
    const std::size_t rc = find_row(p, "case", "circle");
    o.detail << "; circle rows above dv_limit " << str(p, rc, "rows_above_limit") << "/8";
    return o;
}

Outcome dilation(const fs::path& dir, double indent_center) {
    Outcome o;
    const CsvTable t = read_csv(dir / "csa.csv");
    int violations = 0;
    std::string areas;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        areas += (r ? " " : "") + fmt(num(t, r, "area_mm2"), 5);
        if (r > 0 && num(t, r, "area_mm2") < num(t, r - 1, "area_mm2")) ++violations;
    }
    o.require(violations <= 1, "CSA " + areas + " mm2, " + std::to_string(violations) + " decreases");
    std::size_t deepest = 0;
    for (std::size_t r = 1; r < t.rows.size(); ++r)
        if (num(t, r, "indent_depth_mm") > num(t, deepest, "indent_depth_mm")) deepest = r;
    const int expected = int(std::lround(indent_center / 45.0)) % 8;
    const int got = int(num(t, deepest, "max_deficit_sector"));
    o.require(got == (expected + 8) % 8, "deficit sector " + std::to_string(got) + " vs indenter sector "
                                              + std::to_string((expected + 8) % 8));
    return o;
}

Outcome determinism(const fs::path& a, const fs::path& b) {
    Outcome o;
    std::size_t files = 0, differing = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
        ++files;
        const fs::path other = b / fs::relative(e.path(), a);
        if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
            ++differing;
            if (differing <= 3) o.detail << (o.detail.tellp() > 0 ? "; " : "") << "differs: " << fs::relative(e.path(), a).string();
        }
    }
    o.require(files > 0 && differing == 0,
              std::to_string(files) + " CSV files compared, " + std::to_string(differing) + " differ");
    return o;
}

} // namespace

int main(int argc, char** argv) {
    const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
    fs::remove_all(out);
    const std::vector<Scenario> scenarios{Scenario::spacing_sweep, Scenario::detectability_sweep, Scenario::lesion,
                                          Scenario::ellipticity, Scenario::dilation};
    for (const char* run : {"run1", "run2"}) {
        for (Scenario s : scenarios) {
            const auto t0 = std::chrono::steady_clock::now();
            const Manifest m = run_experiment(config_for(s, out / run));
            const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::printf("# %s %s: %s in %.1f s\n", run, to_string(s).c_str(), m.complete ? "complete" : "incomplete", sec);
            std::fflush(stdout);
        }
    }
    const fs::path r1 = out / "run1";
    std::vector<Outcome> results;
    auto guarded = [](const std::function<Outcome()>& f) {
        try {
            return f();
        } catch (const std::exception& e) {
            Outcome o;
            o.require(false, std::string("exception: ") + e.what());
            return o;
        }
    };
    const double indent_center = ExperimentConfig{}.indent_center;
    results.push_back(guarded([&] { return spacing(r1 / "spacing_sweep"); }));
    results.push_back(guarded([&] { return detectability(r1 / "detectability_sweep"); }));
    results.push_back(guarded(forward_oracles));
    results.push_back(guarded(protocol_counts));
    results.push_back(guarded([&] { return localisation(r1 / "lesion", r1 / "ellipticity"); }));
    results.push_back(guarded([&] { return ellipticity(r1 / "ellipticity"); }));
    results.push_back(guarded([&] { return dilation(r1 / "dilation", indent_center); }));
    results.push_back(guarded([&] { return determinism(r1, out / "run2"); }));
    int failed = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        report(int(i) + 1, results[i]);
        failed += !results[i].pass;
    }
    std::printf("%d of %zu criteria passed\n", int(results.size()) - failed, results.size());
    return failed == 0 ? 0 : 1;
}
