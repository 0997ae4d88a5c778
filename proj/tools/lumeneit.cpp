// Command-line front end: mesh, forward, sweep-spacing, sweep-detect, reconstruct, experiment.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lumeneit/csv.hpp"
#include "lumeneit/error.hpp"
#include "lumeneit/experiments.hpp"
#include "lumeneit/inverse.hpp"
#include "lumeneit/mesh_io.hpp"
#include "lumeneit/sweeps.hpp"

namespace fs = std::filesystem;
using namespace lumeneit;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    double resolution = 2.5; // target element size, mm
    std::string out = "out";
    bool seed_set = false;
    bool out_set = false;
};

struct PhantomArgs {
    std::string kind = "circle";
    double diameter = 25.0;
    double aspect = 1.0;
    double rotation = 0.0;
    double crescent_depth = 6.0;
    double crescent_extent = 120.0;
    double crescent_center = 90.0;
    double indent_depth = 4.0;
    double indent_center = 0.0;
    double spacing = 10.0;
    double clamp = 0.0;

    void add(CLI::App* app) {
        app->add_option("--lumen", kind, "circle | ellipse | crescent | indented")
            ->check(CLI::IsMember({"circle", "ellipse", "crescent", "indented"}));
        app->add_option("--diameter", diameter, "lumen (major) diameter, mm");
        app->add_option("--aspect", aspect, "ellipse minor/major ratio");
        app->add_option("--rotation", rotation, "ellipse major axis azimuth, deg");
        app->add_option("--crescent-depth", crescent_depth);
        app->add_option("--crescent-extent", crescent_extent);
        app->add_option("--crescent-center", crescent_center);
        app->add_option("--indent-depth", indent_depth);
        app->add_option("--indent-center", indent_center);
        app->add_option("--spacing", spacing, "ring spacing, mm");
        app->add_option("--clamp", clamp, "free balloon radius, mm (0 = none)");
    }

    LumenProfile profile() const {
        LumenProfile p;
        const auto k = lumen_kind_from_string(kind);
        if (k == LumenKind::circle) p = LumenProfile::circle(diameter);
        else if (k == LumenKind::ellipse) p = LumenProfile::ellipse(diameter, aspect, rotation);
        else if (k == LumenKind::crescent) p = LumenProfile::crescent(diameter, crescent_depth, crescent_extent, crescent_center);
        else p = LumenProfile::indented(diameter, indent_depth, indent_center);
        p.clamp_radius = clamp;
        return p;
    }

    CatheterSpec catheter() const {
        CatheterSpec c;
        c.ring_spacing = spacing;
        c.shaft_length = CatheterSpec::default_shaft_length(spacing);
        return c;
    }
};

Protocol load_protocol(const std::string& name) {
    if (name == "radial" || name == "full") return protocol_by_name(name);
    return read_protocol_csv(name, fs::path(name).stem().string());
}

int cmd_mesh(const Globals& g, const PhantomArgs& ph, const std::string& name) {
    const CatheterSpec cat = ph.catheter();
    const LumenProfile p = ph.profile();
    p.validate(cat);
    const Mesh mesh = build_phantom_mesh(p, cat, MeshResolution::for_size(p.max_radius(), cat, g.resolution));
    const QualityReport q = mesh_quality(mesh);
    fs::create_directories(g.out);
    const fs::path path = fs::path(g.out) / (name + ".vtk");
    save_mesh(mesh, path);
    std::cout << "mesh " << path.string() << "\n"
              << "nodes " << mesh.node_count() << "\n"
              << "elements " << mesh.element_count() << "\n"
              << "volume_mm3 " << format_number(mesh.total_volume()) << "\n"
              << "min_dihedral_deg " << format_number(q.min_dihedral_deg) << "\n"
              << "inverted " << q.inverted.size() << "\n"
              << "flagged " << q.flagged.size() << "\n";
    return 0;
}

int cmd_forward(const Globals& g, const PhantomArgs& ph, const std::string& mesh_path, const std::string& protocol_name,
                std::optional<double> snr, const std::string& name) {
    // Everything that can fail on input runs before the output directory is touched.
    const Protocol protocol = load_protocol(protocol_name);
    if (!validate_protocol(protocol).valid()) throw InputError("protocol '" + protocol_name + "' is invalid");
    Mesh mesh;
    if (!mesh_path.empty()) {
        if (!fs::exists(mesh_path)) throw InputError("mesh file not found: " + mesh_path);
        mesh = load_mesh(mesh_path);
    } else {
        const CatheterSpec cat = ph.catheter();
        const LumenProfile p = ph.profile();
        p.validate(cat);
        mesh = build_phantom_mesh(p, cat, MeshResolution::for_size(p.max_radius(), cat, g.resolution));
    }
    const FemModel model(mesh);
    Frame frame = solve_forward(model, ConductivityField::uniform(mesh.element_count()), protocol);
    if (snr) {
        NoiseModel nm;
        nm.snr_db = *snr;
        nm.seed = g.seed;
        nm.validate();
        frame = add_noise(frame, nm);
    }
    fs::create_directories(g.out);
    const fs::path path = fs::path(g.out) / (name + ".csv");
    write_frame_csv(frame, path);
    std::cout << "frame " << path.string() << " (" << frame.size() << " rows)\n";
    return 0;
}

int cmd_sweep_spacing(const Globals& g, const std::vector<double>& spacings) {
    SpacingSweepOptions o;
    if (!spacings.empty()) o.spacings = spacings;
    o.target_size = g.resolution;
    const auto r = sweep_spacing(o);
    fs::create_directories(g.out);
    write_spacing_csv(r, fs::path(g.out) / "spacing.csv");
    for (const auto& c : r.cases) {
        std::cout << "l=" << format_number(c.spacing) << " mm  CD_theta=" << format_number(c.metrics.cd_theta) << " deg";
        if (!c.error.empty()) std::cout << "  error: " << c.error;
        std::cout << "\n";
    }
    return 0;
}

int cmd_sweep_detect(const Globals& g, double snr, int trials, const std::string& diameters,
                     const std::string& aspects) {
    DetectabilityOptions o;
    o.noise.snr_db = snr;
    o.noise.seed = g.seed;
    o.noise.validate();
    o.monte_carlo_trials = trials;
    o.target_size = g.resolution;
    // Reuse the config grammar for grids ("12:30:1" or "12,14,16").
    if (!diameters.empty() || !aspects.empty()) {
        std::string text = "lumeneit-config 1\n";
        if (!diameters.empty()) text += "detect.diameters = " + diameters + "\n";
        if (!aspects.empty()) text += "detect.aspect_ratios = " + aspects + "\n";
        const auto cfg = parse_config(text);
        o.diameters = cfg.detect.diameters;
        o.aspect_ratios = cfg.detect.aspect_ratios;
    }
    const auto r = sweep_detectability(o);
    fs::create_directories(g.out);
    write_detectability_cases_csv(r, fs::path(g.out) / "detectability_cases.csv");
    write_detectability_summary_csv(r, fs::path(g.out) / "detectability_summary.csv");
    for (std::size_t i = 0; i < r.diameters.size(); ++i)
        std::cout << "D=" << format_number(r.diameters[i]) << " mm  f_max=" << format_number(r.f_max[i]) << "\n";
    std::cout << "size_limit_mm " << format_number(r.size_limit) << "\n";
    return 0;
}

int cmd_reconstruct(const Globals& g, const std::string& mode_name, const std::string& frame_path,
                    const std::string& reference_path, double lambda, double recon_diameter, bool csa,
                    const std::string& name) {
    const ReconMode mode = recon_mode_from_string(mode_name);
    if (!fs::exists(frame_path)) throw InputError("frame file not found: " + frame_path);
    const Frame frame = read_frame_csv(frame_path);
    std::optional<Frame> reference;
    if (!reference_path.empty()) {
        if (!fs::exists(reference_path)) throw InputError("reference file not found: " + reference_path);
        reference = read_frame_csv(reference_path);
    }
    if (mode == ReconMode::td && !reference) throw InputError("td reconstruction needs --reference");
    const Protocol protocol = load_protocol(frame.protocol);
    if (protocol.size() != frame.size()) throw InputError("frame length does not match protocol '" + frame.protocol + "'");

    ReconMeshOptions ro;
    ro.diameter = recon_diameter;
    const ReconMesh rm = ReconMesh::build(ro, protocol);
    Reconstruction recon;
    if (mode == ReconMode::absolute) {
        AbsoluteOptions ao;
        if (lambda >= 0.0) ao.lambda = lambda;
        recon = reconstruct_absolute(frame, rm, ao);
    } else {
        const Frame& ref = reference ? *reference : rm.homogeneous_frame();
        recon = reconstruct_difference(frame, ref, rm, mode, lambda);
    }
    std::optional<CsaResult> area;
    if (csa) area = approximate_csa(recon, rm);

    fs::create_directories(g.out);
    const fs::path base = fs::path(g.out) / name;
    write_reconstruction_vtk(recon, rm, base.string() + ".vtk");
    write_reconstruction_csv(recon, base.string() + ".csv");
    std::cout << "mode " << to_string(recon.mode) << "\nlambda " << format_number(recon.lambda) << "\niterations "
              << recon.iterations << "\n";
    if (area) {
        CsvWriter w(base.string() + "_csa.csv");
        w.header({"frame", "area_mm2", "retained"});
        w.cell(0).cell(area->area_mm2).cell(area->retained);
        w.end_row();
        w.close();
        std::cout << "csa_mm2 " << format_number(area->area_mm2) << "\n";
    }
    return 0;
}

int cmd_experiment(const Globals& g, const std::string& config_path) {
    ExperimentConfig cfg = load_config(config_path);
    if (g.out_set) cfg.output_dir = g.out;
    if (g.seed_set) {
        cfg.seed = g.seed;
        cfg.noise.seed = g.seed;
    }
    if (g.resolution != 2.5) cfg.target_size = g.resolution;
    try {
        const Manifest m = run_experiment(cfg);
        std::cout << "manifest " << (cfg.output_dir / "manifest.txt").string() << " (" << m.artifacts.size()
                  << " artifacts)\n";
    } catch (const StageError& e) {
        std::cerr << "lumeneit: " << e.what() << "\npartial manifest: " << (cfg.output_dir / "manifest.txt").string()
                  << " (" << e.partial_manifest().artifacts.size() << " artifacts)\n";
        return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Balloon-catheter EIT toolkit"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "random seed")->each([&](const std::string&) { g.seed_set = true; });
    app.add_option("--resolution", g.resolution, "target element size, mm")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "output directory")->each([&](const std::string&) { g.out_set = true; });

    PhantomArgs mesh_ph, fwd_ph;
    std::string mesh_name = "mesh";
    auto* mesh = app.add_subcommand("mesh", "generate a phantom mesh (VTK + electrode map)");
    mesh_ph.add(mesh);
    mesh->add_option("--name", mesh_name, "output file stem");

    std::string fwd_mesh, fwd_protocol = "full", fwd_name = "frame";
    std::optional<double> fwd_snr;
    auto* forward = app.add_subcommand("forward", "simulate a frame for a phantom or stored mesh");
    fwd_ph.add(forward);
    forward->add_option("--mesh", fwd_mesh, "stored mesh (.vtk with .electrodes sidecar)");
    forward->add_option("--protocol", fwd_protocol, "radial | full | protocol CSV");
    forward->add_option("--snr", fwd_snr, "add noise at this SNR (dB)");
    forward->add_option("--name", fwd_name, "output file stem");

    std::vector<double> spacings;
    auto* sspacing = app.add_subcommand("sweep-spacing", "ring spacing sweep");
    sspacing->add_option("--spacings", spacings, "ring spacings, mm")->delimiter(',');

    double det_snr = 60.0;
    int det_trials = 0;
    std::string det_d, det_f;
    auto* sdetect = app.add_subcommand("sweep-detect", "detectability sweep over diameter and aspect ratio");
    sdetect->add_option("--snr", det_snr, "SNR, dB");
    sdetect->add_option("--monte-carlo", det_trials, "noisy trials per case (0 = off)")->check(CLI::NonNegativeNumber);
    sdetect->add_option("--diameters", det_d, "first:last:step or comma list");
    sdetect->add_option("--aspects", det_f, "first:last:step or comma list");

    std::string rec_mode = "ptd", rec_frame, rec_ref, rec_name = "recon";
    double rec_lambda = -1.0, rec_diam = 30.0;
    bool rec_csa = false;
    auto* recon = app.add_subcommand("reconstruct", "absolute, td or ptd reconstruction of a stored frame");
    recon->add_option("--mode", rec_mode, "absolute | td | ptd")->check(CLI::IsMember({"absolute", "td", "ptd"}));
    recon->add_option("--frame", rec_frame, "frame CSV")->required();
    recon->add_option("--reference", rec_ref, "reference frame CSV (td; optional for ptd)");
    recon->add_option("--lambda", rec_lambda, "regularisation (negative: cross validation)");
    recon->add_option("--recon-diameter", rec_diam, "reconstruction lumen diameter, mm");
    recon->add_flag("--csa", rec_csa, "also estimate the cross-sectional area");
    recon->add_option("--name", rec_name, "output file stem");

    std::string exp_config;
    auto* experiment = app.add_subcommand("experiment", "run a scenario config");
    experiment->add_option("config", exp_config, "config file")->required();

    for (auto* sub : {mesh, forward, sspacing, sdetect, recon, experiment}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (mesh->parsed()) return cmd_mesh(g, mesh_ph, mesh_name);
        if (forward->parsed()) return cmd_forward(g, fwd_ph, fwd_mesh, fwd_protocol, fwd_snr, fwd_name);
        if (sspacing->parsed()) return cmd_sweep_spacing(g, spacings);
        if (sdetect->parsed()) return cmd_sweep_detect(g, det_snr, det_trials, det_d, det_f);
        if (recon->parsed())
            return cmd_reconstruct(g, rec_mode, rec_frame, rec_ref, rec_lambda, rec_diam, rec_csa, rec_name);
        if (experiment->parsed()) return cmd_experiment(g, exp_config);
    } catch (const std::exception& e) {
        std::cerr << "lumeneit: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
