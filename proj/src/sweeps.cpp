#include "lumeneit/sweeps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/QR>

#include "lumeneit/csv.hpp"
#include "lumeneit/error.hpp"

namespace lumeneit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool same(double a, double b) { return std::abs(a - b) < 1e-9; }

Frame radial_frame(const LumenProfile& profile, const CatheterSpec& cat, const MeshResolution& res,
                   const ForwardOptions& fwd) {
    const Mesh mesh = build_phantom_mesh(profile, cat, res);
    const FemModel model(mesh);
    return solve_forward(model, ConductivityField::uniform(mesh.element_count()), radial_protocol(),
                         kCurrentAmplitude, fwd);
}

} // namespace

std::vector<double> grid(double first, double last, double step) {
    if (!(step > 0.0) || last < first) throw ParameterError("grid: need step > 0 and last >= first");
    std::vector<double> out;
    const auto n = static_cast<long>(std::floor((last - first) / step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(std::round((first + i * step) * 1e9) / 1e9);
    return out;
}

// ---------------------------------------------------------------- spacing

SpacingSweepResult sweep_spacing(const SpacingSweepOptions& opt) {
    for (double l : opt.spacings)
        if (l < 5.0 - 1e-9 || l > 40.0 + 1e-9) throw ParameterError("spacing sweep: l must lie in [5, 40] mm");
    const Protocol radial = radial_protocol();
    Protocol sectors{"sectors", {}};
    for (int r : opt.sector_rows) {
        if (r < 1 || r > static_cast<int>(radial.size())) throw ParameterError("spacing sweep: bad sector row");
        sectors.rows.push_back(radial.rows[static_cast<std::size_t>(r - 1)]);
    }

    SpacingSweepResult result;
    result.cases.resize(opt.spacings.size());
    const auto n = static_cast<long>(opt.spacings.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < n; ++i) {
        SpacingCase& c = result.cases[static_cast<std::size_t>(i)];
        c.spacing = opt.spacings[static_cast<std::size_t>(i)];
        try {
            CatheterSpec cat = opt.catheter;
            cat.ring_spacing = c.spacing;
            cat.shaft_length = c.spacing + opt.extra_length;
            const auto res = MeshResolution::for_size(opt.phantom.max_radius(), cat, opt.target_size);
            const Mesh mesh = build_phantom_mesh(opt.phantom, cat, res);
            const FemModel model(mesh);
            const auto sigma = ConductivityField::uniform(mesh.element_count());
            const auto J = compute_sensitivity(model, sigma, sectors, kCurrentAmplitude, opt.forward);
            const auto cd = current_density(model, sigma, opt.cd_injection, kCurrentAmplitude, opt.forward);
            SliceOptions so = opt.slice;
            so.slice_thickness = res.slice_thickness;
            c.elements = mesh.element_count();
            c.metrics = slice_metrics(cd, J.entries, mesh, so);
        } catch (const std::exception& e) {
            c.error = e.what();
        }
    }
    return result;
}

void write_spacing_csv(const SpacingSweepResult& r, const std::filesystem::path& path) {
    std::size_t sectors = 0;
    for (const auto& c : r.cases) sectors = std::max(sectors, c.metrics.j_wall.size());
    CsvWriter w(path);
    std::vector<std::string> cols{"l_mm", "elements", "cd_theta_deg"};
    for (std::size_t s = 0; s < sectors; ++s) cols.push_back("j_wall_" + std::to_string(s + 1));
    for (const char* name : {"slice_elements", "qualifying_elements", "outer_elements", "error"}) cols.emplace_back(name);
    w.header(cols);
    for (const auto& c : r.cases) {
        w.cell(c.spacing).cell(c.elements).cell(c.error.empty() ? c.metrics.cd_theta : kNaN);
        for (std::size_t s = 0; s < sectors; ++s)
            w.cell(s < c.metrics.j_wall.size() ? c.metrics.j_wall[s] : kNaN);
        w.cell(c.metrics.slice_elements).cell(c.metrics.qualifying_elements).cell(c.metrics.outer_elements);
        w.cell(csv_text(c.error));
        w.end_row();
    }
    w.close();
}

// ---------------------------------------------------------------- detectability

const DetectabilityCase* DetectabilityResult::find(double d, double f) const {
    for (const auto& c : cases)
        if (same(c.diameter, d) && same(c.aspect_ratio, f)) return &c;
    return nullptr;
}

double DetectabilityResult::f_max_at(double d) const {
    for (std::size_t i = 0; i < diameters.size(); ++i)
        if (same(diameters[i], d)) return f_max[i];
    return kNaN;
}

DetectabilityResult sweep_detectability(const DetectabilityOptions& opt) {
    opt.noise.validate();
    if (opt.diameters.empty() || opt.aspect_ratios.empty()) throw ParameterError("detectability: empty grid");
    const Protocol radial = radial_protocol();
    const auto rows = static_cast<int>(radial.size());
    if (opt.major_row < 1 || opt.major_row > rows || opt.minor_row < 1 || opt.minor_row > rows)
        throw ParameterError("detectability: axis rows out of range");

    std::vector<double> ds = opt.diameters;
    std::sort(ds.begin(), ds.end());
    const double step = ds.size() > 1 ? ds[1] - ds[0] : 1.0;
    const double d_max = ds.back();
    // One resolution for every case keeps the discretisation consistent across the grid.
    const auto res = MeshResolution::for_size(0.5 * (d_max + step), opt.catheter, opt.target_size);

    DetectabilityResult out;
    out.diameters = ds;
    for (double d : ds)
        for (double f : opt.aspect_ratios) out.cases.push_back({d, f, {}, 0.0, 0.0, false, -1.0, {}});
    // Circle one step past the grid, for dV_diam at the largest diameter.
    DetectabilityCase beyond{d_max + step, 1.0, {}, 0.0, 0.0, false, -1.0, {}};

    const auto n = static_cast<long>(out.cases.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i <= n; ++i) {
        DetectabilityCase& c = i < n ? out.cases[static_cast<std::size_t>(i)] : beyond;
        try {
            const bool circle = same(c.aspect_ratio, 1.0);
            const LumenProfile profile = circle ? LumenProfile::circle(c.diameter)
                                                : LumenProfile::ellipse(c.diameter, c.aspect_ratio, opt.ellipse_rotation);
            const Frame frame = radial_frame(profile, opt.catheter, res, opt.forward);
            c.voltages = frame.voltages;
            const auto major = static_cast<std::size_t>(opt.major_row - 1);
            const auto minor = static_cast<std::size_t>(opt.minor_row - 1);
            c.dv_ellip = frame.voltages[minor] - frame.voltages[major];
            c.dv_limit = detection_threshold(frame, opt.noise);
            c.detectable = !circle && std::abs(c.dv_ellip) > c.dv_limit;
            if (opt.monte_carlo_trials > 0 && i < n) {
                auto rng = case_rng(opt.noise.seed, static_cast<std::uint64_t>(i));
                int hits = 0;
                for (int t = 0; t < opt.monte_carlo_trials; ++t) {
                    const Frame noisy = add_noise(frame, opt.noise, rng);
                    if (std::abs(noisy.voltages[minor] - noisy.voltages[major]) > c.dv_limit) ++hits;
                }
                c.detection_rate = static_cast<double>(hits) / opt.monte_carlo_trials;
            }
        } catch (const std::exception& e) {
            c.error = e.what();
            c.detectable = false;
        }
    }

    for (double d : ds) {
        const DetectabilityCase* here = out.find(d, 1.0);
        const DetectabilityCase* next = same(d, d_max) ? &beyond : out.find(d + step, 1.0);
        double dv = kNaN, limit = kNaN;
        if (here && next && here->error.empty() && next->error.empty() && !here->voltages.empty()) {
            dv = 0.0;
            for (std::size_t m = 0; m < here->voltages.size(); ++m)
                dv += std::abs(next->voltages[m] - here->voltages[m]);
            dv /= static_cast<double>(here->voltages.size());
            limit = here->dv_limit;
        }
        out.dv_diam.push_back(dv);
        out.dv_diam_limit.push_back(limit);
        if (!std::isnan(dv) && dv > limit) out.size_limit = d;

        double best = kNaN;
        for (const auto& c : out.cases) {
            if (!same(c.diameter, d) || same(c.aspect_ratio, 1.0) || !c.detectable) continue;
            if (std::isnan(best) || c.aspect_ratio > best) best = c.aspect_ratio;
        }
        out.f_max.push_back(best);
    }

    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (!std::isnan(out.f_max[i])) pts.emplace_back(ds[i], out.f_max[i]);
    if (pts.size() >= 3) {
        Eigen::MatrixXd A(static_cast<Eigen::Index>(pts.size()), 3);
        Eigen::VectorXd b(static_cast<Eigen::Index>(pts.size()));
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            A(k, 0) = 1.0;
            A(k, 1) = pts[i].first;
            A(k, 2) = pts[i].first * pts[i].first;
            b(k) = pts[i].second;
        }
        const Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
        out.fit_coeffs = {c(0), c(1), c(2)};
    } else {
        out.fit_coeffs = {kNaN, kNaN, kNaN};
    }
    return out;
}

void write_detectability_cases_csv(const DetectabilityResult& r, const std::filesystem::path& path) {
    CsvWriter w(path);
    w.header({"D_mm", "f", "dv_ellip_V", "dv_limit_V", "detectable", "detection_rate", "error"});
    for (const auto& c : r.cases) {
        w.cell(c.diameter).cell(c.aspect_ratio).cell(c.dv_ellip).cell(c.dv_limit).cell(c.detectable ? 1 : 0);
        w.cell(c.detection_rate).cell(csv_text(c.error));
        w.end_row();
    }
    w.close();
}

void write_detectability_summary_csv(const DetectabilityResult& r, const std::filesystem::path& path) {
    CsvWriter w(path);
    w.comment("fit f_max = c0 + c1*D + c2*D^2: " + format_number(r.fit_coeffs[0]) + " "
              + format_number(r.fit_coeffs[1]) + " " + format_number(r.fit_coeffs[2]));
    w.comment("size_limit_mm " + format_number(r.size_limit));
    w.header({"D_mm", "dv_diam_V", "dv_limit_V", "diam_detectable", "f_max"});
    for (std::size_t i = 0; i < r.diameters.size(); ++i) {
        const bool det = !std::isnan(r.dv_diam[i]) && r.dv_diam[i] > r.dv_diam_limit[i];
        w.cell(r.diameters[i]).cell(r.dv_diam[i]).cell(r.dv_diam_limit[i]).cell(det ? 1 : 0).cell(r.f_max[i]);
        w.end_row();
    }
    w.close();
}

} // namespace lumeneit
