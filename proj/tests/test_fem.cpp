#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "lumeneit/error.hpp"
#include "lumeneit/fem.hpp"
#include "support.hpp"

using namespace lumeneit;
constexpr double kPi = std::numbers::pi;

namespace {

// Transfer resistance between the two end caps of a solid cylinder.
double cylinder_resistance(double radius_mm, double length_mm, int spokes, double contact) {
    const Mesh mesh = build_end_cap_cylinder(radius_mm, length_mm, spokes, 6, 10);
    const FemModel model(mesh);
    const Protocol p{"caps", {{1, 2, 1, 2}}};
    ForwardOptions o;
    o.contact_impedance = contact;
    const double current = 1e-3;
    const Frame f = solve_forward(model, ConductivityField::uniform(mesh.element_count()), p, current, o);
    return f.voltages[0] / current;
}

} // namespace

TEST_CASE("uniform cylinder matches L / (sigma pi r^2)") {
    const double r = 5.0, L = 20.0;
    const double analytic = (L * 1e-3) / (kSalineConductivity * kPi * r * r * 1e-6);
    CHECK(cylinder_resistance(r, L, 64, 1e-9) == doctest::Approx(analytic).epsilon(0.01));

    // With contact impedance the two end caps add z / A each; the mesh section is
    // an inscribed polygon, for which the linear field is exact.
    const int spokes = 24;
    const double area = 0.5 * spokes * r * r * std::sin(2.0 * kPi / spokes) * 1e-6;
    const double z = kContactImpedance;
    CHECK(cylinder_resistance(r, L, spokes, z) == doctest::Approx(L * 1e-3 / (kSalineConductivity * area) + 2.0 * z / area).epsilon(1e-6));
}

TEST_CASE("reciprocity across every full-protocol row") {
    const Mesh mesh = build_phantom_mesh(LumenProfile::crescent(22.0, 5.0, 100.0, 60.0), CatheterSpec{},
                                         test_support::coarse());
    const FemModel model(mesh);
    const ForwardSolver solver(model, ConductivityField::uniform(mesh.element_count()));
    const Protocol full = full_protocol();
    std::vector<ElectrodePair> pairs = injection_pairs(full);
    for (const auto& m : measurement_pairs(full))
        if (std::find(pairs.begin(), pairs.end(), m) == pairs.end()) pairs.push_back(m);
    const ForwardSolution sol = solver.solve(pairs, kCurrentAmplitude);
    auto column = [&](ElectrodePair p) {
        return static_cast<Eigen::Index>(std::find(sol.injections.begin(), sol.injections.end(), p) - sol.injections.begin());
    };
    double worst = 0.0;
    for (const auto& row : full.rows) {
        const ElectrodePair inj{row.inject_pos - 1, row.inject_neg - 1}, meas{row.meas_pos - 1, row.meas_neg - 1};
        const auto& U = sol.electrode_potentials;
        const double forward = U(meas.positive, column(inj)) - U(meas.negative, column(inj));
        const double swapped = U(inj.positive, column(meas)) - U(inj.negative, column(meas));
        worst = std::max(worst, std::abs(forward - swapped) / std::abs(forward));
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("electrode currents conserve charge") {
    const Mesh mesh = build_phantom_mesh(LumenProfile::ellipse(20.0, 0.7), CatheterSpec{}, test_support::coarse());
    const FemModel model(mesh);
    const auto sigma = ConductivityField::uniform(mesh.element_count());
    const ForwardSolver solver(model, sigma);
    const std::vector<ElectrodePair> inj{{0, 8}, {2, 3}};
    const auto sol = solver.solve(inj, kCurrentAmplitude);
    for (Eigen::Index k = 0; k < 2; ++k) {
        const Eigen::VectorXd I = model.electrode_currents(sol.node_potentials.col(k), sol.electrode_potentials.col(k),
                                                           kContactImpedance);
        CHECK(std::abs(I.sum()) < 1e-9 * kCurrentAmplitude);
        for (Eigen::Index e = 0; e < I.size(); ++e) {
            double expected = 0.0;
            if (e == inj[k].positive) expected = kCurrentAmplitude;
            if (e == inj[k].negative) expected = -kCurrentAmplitude;
            CHECK(I(e) == doctest::Approx(expected).epsilon(1e-8).scale(kCurrentAmplitude));
        }
        CHECK(std::abs(sol.electrode_potentials.col(k).sum()) < 1e-9 * sol.electrode_potentials.col(k).cwiseAbs().maxCoeff());
    }
}

TEST_CASE("voltages scale with current and inversely with conductivity") {
    const Mesh mesh = build_phantom_mesh(LumenProfile::circle(18.0), CatheterSpec{}, test_support::coarse());
    const FemModel model(mesh);
    const auto base = solve_forward(model, ConductivityField::uniform(mesh.element_count()), radial_protocol());
    const auto twice = solve_forward(model, ConductivityField::uniform(mesh.element_count()), radial_protocol(),
                                     2.0 * kCurrentAmplitude);
    ForwardOptions half_z;
    half_z.contact_impedance = 0.5 * kContactImpedance;
    const auto doubled_sigma = solve_forward(model, ConductivityField::uniform(mesh.element_count(), 2.0 * kSalineConductivity),
                                             radial_protocol(), kCurrentAmplitude, half_z);
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(twice.voltages[i] == doctest::Approx(2.0 * base.voltages[i]).epsilon(1e-9));
        CHECK(doubled_sigma.voltages[i] == doctest::Approx(0.5 * base.voltages[i]).epsilon(1e-9));
    }
}

TEST_CASE("adjoint sensitivity matches finite differences") {
    auto res = test_support::coarse();
    res.radial_bands = 2;
    const Mesh mesh = build_phantom_mesh(LumenProfile::ellipse(20.0, 0.75, 15.0), CatheterSpec{}, res);
    REQUIRE(mesh.element_count() <= 5000);
    const FemModel model(mesh);
    const auto sigma = ConductivityField::uniform(mesh.element_count());
    const Protocol protocol = full_protocol();
    const auto J = compute_sensitivity(model, sigma, protocol);
    REQUIRE(J.rows() == protocol.size());
    REQUIRE(J.cols() == mesh.element_count());

    // 20 entries drawn among the non-negligible ones.
    std::mt19937_64 rng(7);
    const double big = J.entries.cwiseAbs().maxCoeff();
    std::uniform_int_distribution<Eigen::Index> row(0, J.entries.rows() - 1), col(0, J.entries.cols() - 1);
    int checked = 0;
    double worst = 0.0;
    while (checked < 20) {
        const Eigen::Index m = row(rng), e = col(rng);
        if (std::abs(J.entries(m, e)) < 1e-3 * big) continue;
        const double h = 1e-4 * kSalineConductivity;
        ConductivityField up = sigma, down = sigma;
        up.sigma[static_cast<std::size_t>(e)] += h;
        down.sigma[static_cast<std::size_t>(e)] -= h;
        const Protocol one{"one", {protocol.rows[static_cast<std::size_t>(m)]}};
        const double fd = (solve_forward(model, up, one).voltages[0] - solve_forward(model, down, one).voltages[0]) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - J.entries(m, e)) / std::abs(J.entries(m, e)));
        ++checked;
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("linearization frame equals the forward frame") {
    const Mesh mesh = build_phantom_mesh(LumenProfile::circle(18.0), CatheterSpec{}, test_support::coarse());
    const FemModel model(mesh);
    const auto sigma = ConductivityField::uniform(mesh.element_count());
    const auto lin = linearize(model, sigma, radial_protocol());
    const auto f = solve_forward(model, sigma, radial_protocol());
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(lin.frame.voltages[i] == doctest::Approx(f.voltages[i]).epsilon(1e-10));
}

TEST_CASE("invalid conductivity is rejected") {
    const Mesh mesh = build_phantom_mesh(LumenProfile::circle(18.0), CatheterSpec{}, test_support::coarse(9));
    const FemModel model(mesh);
    auto sigma = ConductivityField::uniform(mesh.element_count());
    sigma.sigma[3] = -1.0;
    CHECK_THROWS_AS(solve_forward(model, sigma, radial_protocol()), ParameterError);
    sigma.sigma.pop_back();
    CHECK_THROWS(solve_forward(model, sigma, radial_protocol()));
}

TEST_CASE("minimal angular window") {
    CHECK(minimal_angular_window({0.0, 0.1, 0.2}, 1.0) == doctest::Approx(0.2 * 180.0 / kPi));
    // Window wrapping through zero.
    CHECK(minimal_angular_window({-0.1, 0.1, 6.2}, 1.0) == doctest::Approx(0.2 * 180.0 / kPi).epsilon(1e-9));
}
